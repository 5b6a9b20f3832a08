//! Invalidation under threshold shifts for non-Gaussian features.
//!
//! Each classifier is `y = 1(x > τ)` (categorical: `1(w_k > τ)` for the
//! category `k`), and the model shift moves the threshold (categorical:
//! the per-category weights).

use rand::Rng as _;
use serde::{Deserialize, Serialize};

use super::McEstimate;
use crate::error::{Error, Result};
use crate::math::rng;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Remark {
    /// `x ~ Bernoulli(p)`; recourse moves 0 to 1.
    Bernoulli { p: f64, tau: f64, delta: f64 },
    /// `x ~ Unif(a, b)`; recourse lands beyond `τ`.
    Uniform { a: f64, b: f64, tau: f64, delta: f64 },
    /// One-hot category with weights `w`; recourse picks a favorable
    /// category uniformly at random.
    Categorical { weights: Vec<f64>, tau: f64, shift: Vec<f64> },
}

impl Remark {
    fn validate(&self) -> Result<()> {
        let ok = match self {
            Remark::Bernoulli { p, tau, delta } => (0.0..=1.0).contains(p) && *tau > 0.0 && *tau < 1.0 && delta.is_finite(),
            Remark::Uniform { a, b, tau, delta } => a < tau && tau < b && delta.is_finite(),
            Remark::Categorical { weights, tau, shift } => {
                weights.len() == shift.len() && !weights.is_empty() && tau.is_finite() && weights.iter().chain(shift).all(|v| v.is_finite())
            }
        };
        if ok {
            Ok(())
        } else {
            Err(Error::InvalidConfig(format!("invalid remark parameters: {self:?}")))
        }
    }
}

/// Probability that a recourse valid before the shift is invalid after it.
pub fn remark_invalidation(remark: &Remark) -> Result<f64> {
    remark.validate()?;
    Ok(match remark {
        Remark::Bernoulli { tau, delta, .. } => {
            if tau + delta < 1.0 {
                0.0
            } else {
                1.0
            }
        }
        Remark::Uniform { a, b, tau, delta } => {
            if *delta <= 0.0 {
                0.0
            } else if tau + delta <= *b {
                delta / (b - a)
            } else {
                1.0
            }
        }
        Remark::Categorical { weights, tau, shift } => {
            let favorable: Vec<usize> = (0..weights.len()).filter(|&k| weights[k] > *tau).collect();
            if favorable.is_empty() {
                return Err(Error::NoFavorableCategory);
            }
            let lost = favorable.iter().filter(|&&k| weights[k] + shift[k] <= *tau).count();
            lost as f64 / favorable.len() as f64
        }
    })
}

/// Simulates the recourse process behind each remark.
///
/// Bernoulli: draw `x`, give recourse `x' = 1` to zeros, count recourses
/// rejected by the shifted threshold. Uniform: draw `x'` over `(a, b)` and
/// count those in `(τ, τ+δ]`, the mass moved across the boundary; this
/// matches the closed form while `τ + δ ≤ b`. Categorical: draw a
/// favorable category uniformly and count those unfavorable after the shift.
pub fn monte_carlo_remark(remark: &Remark, samples: usize, seed: u64) -> Result<McEstimate> {
    remark.validate()?;
    if samples == 0 {
        return Err(Error::InvalidConfig("need at least one sample".into()));
    }
    let mut r = rng(seed);
    match remark {
        Remark::Bernoulli { p, tau, delta } => {
            let (mut given, mut lost) = (0, 0);
            for _ in 0..samples {
                if !r.random_bool(*p) {
                    given += 1;
                    let x2 = 1.0;
                    if x2 <= tau + delta {
                        lost += 1;
                    }
                }
            }
            if given == 0 {
                return Err(Error::NoRecourses);
            }
            Ok(McEstimate::from_counts(lost, given))
        }
        Remark::Uniform { a, b, tau, delta } => {
            let hits = (0..samples)
                .filter(|_| {
                    let x2 = r.random_range(*a..*b);
                    x2 > *tau && x2 <= tau + delta
                })
                .count();
            Ok(McEstimate::from_counts(hits, samples))
        }
        Remark::Categorical { weights, tau, shift } => {
            let favorable: Vec<usize> = (0..weights.len()).filter(|&k| weights[k] > *tau).collect();
            if favorable.is_empty() {
                return Err(Error::NoFavorableCategory);
            }
            let hits = (0..samples)
                .filter(|_| {
                    let k = favorable[r.random_range(0..favorable.len())];
                    weights[k] + shift[k] <= *tau
                })
                .count();
            Ok(McEstimate::from_counts(hits, samples))
        }
    }
}
