//! Invalidation probabilities and cost bounds under additive model shifts.
//!
//! For `x' ~ N(μ, Σ)` a recourse valid under `w` is invalidated by the true
//! shift `δ` when `x' ∈ Ω = {wᵀx' > 0, (w+δ)ᵀx' ≤ 0}`. Writing
//! `Σ = U D Uᵀ`, the boundary constants are
//! `c1 = −wᵀμ / ‖√D Uᵀw‖` and `c2 = −(w+δ)ᵀμ / ‖√D Uᵀ(w+δ)‖`, and the
//! closed form is `½(erfc(c1/√2) − erfc(c2/√2))`.
//!
//! The closed form equals `P(Ω)` only when `(w+δ)ᵀx'` is a positive affine
//! function of `wᵀx'` (correlation +1). [`invalidation_region_probability`]
//! computes `P(Ω)` for arbitrary inputs.

mod remarks;

use nalgebra::{DMatrix, SymmetricEigen};
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};
use statrs::function::erf::erfc;

pub use remarks::{monte_carlo_remark, remark_invalidation, Remark};

use crate::error::{check_dim, check_finite, Error, Result};
use crate::math::{dot, norm2, rng};
use crate::model::LinearModel;

/// Variance given to the constant coordinate when a model with intercept is
/// converted to the bias-free form.
pub const INTERCEPT_VARIANCE: f64 = 1e-12;

const GOLDEN_ITERATIONS: usize = 200;
const BETA_MIN: f64 = 1.0 + 1e-6;
const BETA_MAX: f64 = 100.0;

#[derive(Debug, Clone)]
pub struct GaussianTheoryInput {
    pub w: Vec<f64>,
    pub delta: Vec<f64>,
    pub mu: Vec<f64>,
    pub sigma: Vec<Vec<f64>>,
    /// Columns are eigenvectors of Σ.
    eigvecs: DMatrix<f64>,
    eigvals: Vec<f64>,
}

impl GaussianTheoryInput {
    pub fn new(w: Vec<f64>, delta: Vec<f64>, mu: Vec<f64>, sigma: Vec<Vec<f64>>) -> Result<Self> {
        let d = w.len();
        check_dim(d, delta.len())?;
        check_dim(d, mu.len())?;
        check_dim(d, sigma.len())?;
        check_finite(&w, "w")?;
        check_finite(&delta, "delta")?;
        check_finite(&mu, "mu")?;
        for row in &sigma {
            check_dim(d, row.len())?;
            check_finite(row, "sigma")?;
        }
        let m = DMatrix::from_fn(d, d, |i, j| sigma[i][j]);
        if (&m - m.transpose()).amax() > 1e-12 * (1.0 + m.amax()) {
            return Err(Error::NotPositiveDefinite);
        }
        let eig = SymmetricEigen::new(m);
        if eig.eigenvalues.iter().any(|v| !(*v > 0.0)) {
            return Err(Error::NotPositiveDefinite);
        }
        Ok(Self {
            w,
            delta,
            mu,
            sigma,
            eigvals: eig.eigenvalues.iter().copied().collect(),
            eigvecs: eig.eigenvectors,
        })
    }

    /// Bias-free form of a model with intercept: `μ` gains a constant
    /// coordinate 1 and `Σ` gains variance [`INTERCEPT_VARIANCE`] on it.
    /// `delta` is in the augmented layout `(δ_w, δ_b)`.
    pub fn from_linear(model: &LinearModel, delta: &[f64], mu: &[f64], sigma: &[Vec<f64>]) -> Result<Self> {
        let d = model.weights.len();
        check_dim(d + 1, delta.len())?;
        check_dim(d, mu.len())?;
        check_dim(d, sigma.len())?;
        let mut mu_aug = mu.to_vec();
        mu_aug.push(1.0);
        let mut sigma_aug: Vec<Vec<f64>> = sigma
            .iter()
            .map(|row| {
                let mut r = row.clone();
                r.push(0.0);
                r
            })
            .collect();
        let mut last = vec![0.0; d];
        last.push(INTERCEPT_VARIANCE);
        sigma_aug.push(last);
        Self::new(model.augmented(), delta.to_vec(), mu_aug, sigma_aug)
    }

    pub fn dim(&self) -> usize {
        self.w.len()
    }

    pub fn shifted_weights(&self) -> Vec<f64> {
        self.w.iter().zip(&self.delta).map(|(a, b)| a + b).collect()
    }

    /// `‖√D Uᵀv‖`, the standard deviation of `vᵀx'`.
    pub fn projected_std(&self, v: &[f64]) -> f64 {
        let d = self.dim();
        (0..d)
            .map(|k| {
                let u = (0..d).map(|i| self.eigvecs[(i, k)] * v[i]).sum::<f64>();
                self.eigvals[k] * u * u
            })
            .sum::<f64>()
            .sqrt()
    }

    /// `μ + U √D z`.
    fn sample(&self, z: &[f64]) -> Vec<f64> {
        let d = self.dim();
        (0..d)
            .map(|i| self.mu[i] + (0..d).map(|k| self.eigvecs[(i, k)] * self.eigvals[k].sqrt() * z[k]).sum::<f64>())
            .collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BoundaryConstants {
    pub c1: f64,
    pub c2: f64,
}

pub fn boundary_constants(input: &GaussianTheoryInput) -> Result<BoundaryConstants> {
    let shifted = input.shifted_weights();
    let s1 = input.projected_std(&input.w);
    let s2 = input.projected_std(&shifted);
    if !(s1 > 0.0 && s2 > 0.0) {
        return Err(Error::DegenerateProjection);
    }
    Ok(BoundaryConstants {
        c1: -dot(&input.w, &input.mu) / s1,
        c2: -dot(&shifted, &input.mu) / s2,
    })
}

/// Standard normal CDF.
pub fn normal_cdf(x: f64) -> f64 {
    0.5 * erfc(-x / std::f64::consts::SQRT_2)
}

fn normal_pdf(x: f64) -> f64 {
    (-0.5 * x * x).exp() / (2.0 * std::f64::consts::PI).sqrt()
}

/// `½(erfc(c1/√2) − erfc(c2/√2))`, or 0 when `c1 > c2`.
pub fn closed_form_probability(c: BoundaryConstants) -> f64 {
    if c.c1 > c.c2 {
        return 0.0;
    }
    let s = std::f64::consts::SQRT_2;
    (0.5 * (erfc(c.c1 / s) - erfc(c.c2 / s))).clamp(0.0, 1.0)
}

pub fn exact_invalidation_probability(input: &GaussianTheoryInput) -> Result<f64> {
    Ok(closed_form_probability(boundary_constants(input)?))
}

/// `P(wᵀx' > 0, (w+δ)ᵀx' ≤ 0)` for `x' ~ N(μ, Σ)` with no assumption on
/// how the two projections are correlated, by one-dimensional quadrature of
/// `∫_{c1}^{∞} φ(z) Φ((−m_B − ρ σ_B z) / (σ_B √(1−ρ²))) dz`.
pub fn invalidation_region_probability(input: &GaussianTheoryInput) -> Result<f64> {
    let c = boundary_constants(input)?;
    let shifted = input.shifted_weights();
    let sa = input.projected_std(&input.w);
    let sb = input.projected_std(&shifted);
    let cov = (0..input.dim())
        .map(|i| input.w[i] * (0..input.dim()).map(|j| input.sigma[i][j] * shifted[j]).sum::<f64>())
        .sum::<f64>();
    let rho = (cov / (sa * sb)).clamp(-1.0, 1.0);
    let c1 = c.c1;
    let c2 = c.c2;
    if rho > 1.0 - 1e-12 {
        return Ok(closed_form_probability(c));
    }
    if rho < -1.0 + 1e-12 {
        // B ≤ 0 ⇔ Z ≥ −c2
        return Ok(1.0 - normal_cdf(c1.max(-c2)));
    }
    let mb = dot(&shifted, &input.mu);
    let sd = sb * (1.0 - rho * rho).sqrt();
    let f = |z: f64| normal_pdf(z) * normal_cdf((-mb - rho * sb * z) / sd);
    let lo = c1.max(-40.0);
    let hi = 40.0;
    if lo >= hi {
        return Ok(0.0);
    }
    Ok(adaptive_simpson(&f, lo, hi, 1e-13, 50).clamp(0.0, 1.0))
}

fn adaptive_simpson(f: &dyn Fn(f64) -> f64, a: f64, b: f64, tol: f64, depth: u32) -> f64 {
    fn simpson(fa: f64, fm: f64, fb: f64, a: f64, b: f64) -> f64 {
        (b - a) / 6.0 * (fa + 4.0 * fm + fb)
    }
    #[allow(clippy::too_many_arguments)]
    fn recurse(f: &dyn Fn(f64) -> f64, a: f64, b: f64, fa: f64, fm: f64, fb: f64, whole: f64, tol: f64, depth: u32) -> f64 {
        let m = 0.5 * (a + b);
        let (lm, rm) = (0.5 * (a + m), 0.5 * (m + b));
        let (flm, frm) = (f(lm), f(rm));
        let left = simpson(fa, flm, fm, a, m);
        let right = simpson(fm, frm, fb, m, b);
        if depth == 0 || (left + right - whole).abs() <= 15.0 * tol {
            return left + right + (left + right - whole) / 15.0;
        }
        recurse(f, a, m, fa, flm, fm, left, tol / 2.0, depth - 1) + recurse(f, m, b, fm, frm, fb, right, tol / 2.0, depth - 1)
    }
    let (fa, fm, fb) = (f(a), f(0.5 * (a + b)), f(b));
    recurse(f, a, b, fa, fm, fb, simpson(fa, fm, fb, a, b), tol, depth)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct McEstimate {
    pub estimate: f64,
    /// Binomial standard error `√(p̂(1−p̂)/n)`.
    pub standard_error: f64,
    pub samples: usize,
}

impl McEstimate {
    pub fn from_counts(hits: usize, samples: usize) -> Self {
        let p = hits as f64 / samples as f64;
        Self {
            estimate: p,
            standard_error: (p * (1.0 - p) / samples as f64).sqrt(),
            samples,
        }
    }

    /// Whether `value` lies within `k` standard errors. The standard error
    /// under `value` itself is used when larger, so a zero-variance estimate
    /// is not taken as infinitely precise.
    pub fn agrees_with(&self, value: f64, k: f64) -> bool {
        let null = (value * (1.0 - value) / self.samples as f64).max(0.0).sqrt();
        (self.estimate - value).abs() <= k * self.standard_error.max(null) + 1e-15
    }
}

/// Fraction of `x' ~ N(μ, Σ)` landing in Ω.
pub fn monte_carlo_invalidation(input: &GaussianTheoryInput, samples: usize, seed: u64) -> Result<McEstimate> {
    if samples == 0 {
        return Err(Error::InvalidConfig("need at least one sample".into()));
    }
    let shifted = input.shifted_weights();
    let mut r = rng(seed);
    let mut z = vec![0.0; input.dim()];
    let mut hits = 0;
    for _ in 0..samples {
        z.iter_mut().for_each(|v| *v = StandardNormal.sample(&mut r));
        let x = input.sample(&z);
        if dot(&input.w, &x) > 0.0 && dot(&shifted, &x) <= 0.0 {
            hits += 1;
        }
    }
    Ok(McEstimate::from_counts(hits, samples))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BetaChoice {
    Fixed(f64),
    Auto,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Theorem1Bound {
    /// False when `c1 > c2`; `value` is then absent.
    pub applicable: bool,
    pub value: Option<f64>,
    pub beta: Option<f64>,
}

/// `½ √(2e/π) · √(β−1)/β · exp(−β c1² / 2)`.
pub fn theorem1_expression(c1: f64, beta: f64) -> f64 {
    let k = 0.5 * (2.0 * std::f64::consts::E / std::f64::consts::PI).sqrt();
    k * (beta - 1.0).sqrt() / beta * (-beta * c1 * c1 / 2.0).exp()
}

pub fn theorem1_lower_bound(input: &GaussianTheoryInput, beta: BetaChoice) -> Result<Theorem1Bound> {
    let c = boundary_constants(input)?;
    theorem1_from_constants(c, beta)
}

pub fn theorem1_from_constants(c: BoundaryConstants, beta: BetaChoice) -> Result<Theorem1Bound> {
    if let BetaChoice::Fixed(b) = beta {
        if !(b >= 1.0 && b.is_finite()) {
            return Err(Error::InvalidConfig("beta must be >= 1".into()));
        }
    }
    if c.c1 > c.c2 {
        return Ok(Theorem1Bound {
            applicable: false,
            value: None,
            beta: None,
        });
    }
    let b = match beta {
        BetaChoice::Fixed(b) => b,
        BetaChoice::Auto => golden_max(|b| theorem1_expression(c.c1, b), BETA_MIN, BETA_MAX),
    };
    Ok(Theorem1Bound {
        applicable: true,
        value: Some(theorem1_expression(c.c1, b)),
        beta: Some(b),
    })
}

fn golden_max(f: impl Fn(f64) -> f64, mut a: f64, mut b: f64) -> f64 {
    let g = (5f64.sqrt() - 1.0) / 2.0;
    let mut x1 = b - g * (b - a);
    let mut x2 = a + g * (b - a);
    let (mut f1, mut f2) = (f(x1), f(x2));
    for _ in 0..GOLDEN_ITERATIONS {
        if f1 < f2 {
            a = x1;
            x1 = x2;
            f1 = f2;
            x2 = a + g * (b - a);
            f2 = f(x2);
        } else {
            b = x2;
            x2 = x1;
            f2 = f1;
            x1 = b - g * (b - a);
            f1 = f(x1);
        }
    }
    0.5 * (a + b)
}

/// Increment `α (w+δ)ᵀμ / (λ‖w+δ‖) + √(D²/2 · ln(1/η'))` bounding the
/// extra cost of a robust recourse.
pub fn theorem2_rhs(lambda: f64, w: &[f64], delta: &[f64], mu: &[f64], diameter: f64, eta: f64, alpha: f64) -> Result<f64> {
    check_dim(w.len(), delta.len())?;
    check_dim(w.len(), mu.len())?;
    if !(lambda > 0.0) {
        return Err(Error::InvalidConfig("lambda must be > 0".into()));
    }
    if !(eta > 0.0 && eta <= 1.0) {
        return Err(Error::InvalidConfig("eta must lie in (0, 1]".into()));
    }
    if !(alpha > 0.0 && alpha <= 1.0) {
        return Err(Error::InvalidConfig("alpha must lie in (0, 1]".into()));
    }
    if !(diameter >= 0.0 && diameter.is_finite()) {
        return Err(Error::InvalidConfig("diameter must be finite and >= 0".into()));
    }
    let shifted: Vec<f64> = w.iter().zip(delta).map(|(a, b)| a + b).collect();
    let n = norm2(&shifted);
    if !(n > 0.0) {
        return Err(Error::DegenerateProjection);
    }
    Ok(alpha * dot(&shifted, mu) / (lambda * n) + (diameter * diameter / 2.0 * (1.0 / eta).ln()).sqrt())
}

/// One row of the `verify-theory` report.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TheoryCaseReport {
    pub name: String,
    pub c1: f64,
    pub c2: f64,
    pub exact: f64,
    /// `P(Ω)` without the perfect-correlation assumption.
    pub region_probability: f64,
    pub mc_estimate: f64,
    pub mc_se: f64,
    pub bound: Option<f64>,
    pub beta: Option<f64>,
    pub applicable: bool,
}

pub fn verify_case(name: &str, input: &GaussianTheoryInput, samples: usize, seed: u64) -> Result<TheoryCaseReport> {
    let c = boundary_constants(input)?;
    let mc = monte_carlo_invalidation(input, samples, seed)?;
    let bound = theorem1_from_constants(c, BetaChoice::Auto)?;
    Ok(TheoryCaseReport {
        name: name.to_string(),
        c1: c.c1,
        c2: c.c2,
        exact: closed_form_probability(c),
        region_probability: invalidation_region_probability(input)?,
        mc_estimate: mc.estimate,
        mc_se: mc.standard_error,
        bound: bound.value,
        beta: bound.beta,
        applicable: bound.applicable,
    })
}

/// Built-in cases for the `verify-theory` command.
pub fn default_cases() -> Vec<(String, GaussianTheoryInput)> {
    let eye = |d: usize| (0..d).map(|i| (0..d).map(|j| f64::from(u8::from(i == j))).collect()).collect::<Vec<Vec<f64>>>();
    let mk = |w: &[f64], delta: &[f64], mu: &[f64], sigma: Vec<Vec<f64>>| {
        GaussianTheoryInput::new(w.to_vec(), delta.to_vec(), mu.to_vec(), sigma).expect("built-in case is valid")
    };
    let affine = |w: &[f64], b: f64, kappa: f64, db: f64, mu: &[f64], sigma: Vec<Vec<f64>>| {
        let model = LinearModel::new(w.to_vec(), b).expect("finite");
        let mut delta: Vec<f64> = w.iter().map(|v| (kappa - 1.0) * v).collect();
        delta.push(db);
        GaussianTheoryInput::from_linear(&model, &delta, mu, &sigma).expect("built-in case is valid")
    };
    vec![
        ("sign_flip".into(), mk(&[1.0, 0.0], &[-2.0, 0.0], &[1.0, 0.0], eye(2))),
        ("no_shift".into(), mk(&[1.0, 1.0], &[0.0, 0.0], &[0.5, -0.2], eye(2))),
        (
            "rotation".into(),
            mk(&[1.0, 0.5], &[-0.3, 0.4], &[0.4, 0.3], vec![vec![1.0, 0.3], vec![0.3, 0.6]]),
        ),
        ("intercept_shift".into(), affine(&[1.0, 1.0], 0.5, 1.0, -1.0, &[0.2, 0.1], eye(2))),
        (
            "scaled_intercept_shift".into(),
            affine(&[0.8, -0.4, 0.3], 0.2, 1.3, -0.9, &[0.1, -0.5, 0.4], vec![vec![1.0, 0.2, 0.0], vec![0.2, 0.8, 0.1], vec![0.0, 0.1, 0.5]]),
        ),
    ]
}
