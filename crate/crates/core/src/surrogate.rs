//! Local linear surrogates of arbitrary classifiers.
//!
//! Neighbors `z ~ N(x, (scale · σ_j)²)` are labeled by the model (hard
//! labels), weighted by `exp(−‖(z − x)/σ‖² / width²)`, and fit by weighted
//! logistic regression with an `½‖w‖²` penalty on the slope.

use nalgebra::{DMatrix, DVector};
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{check_dim, check_finite, Error, Result};
use crate::math::{bce_from_logit, rng, sigmoid, sub_seed};
use crate::model::{Classifier, LinearModel};

const WIDEN_ATTEMPTS: usize = 3;
const NEWTON_MAX_ITERATIONS: usize = 100;
const NEWTON_TOLERANCE: f64 = 1e-10;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SurrogateConfig {
    pub samples: usize,
    /// Multiplier on the per-feature sampling std.
    pub scale: f64,
    /// Per-feature sampling std; unit std when absent (standardized inputs).
    pub feature_std: Option<Vec<f64>>,
    /// Kernel width; `0.75 · √d` when absent.
    pub kernel_width: Option<f64>,
    /// L2 penalty strength on the slope.
    pub penalty: f64,
    pub seed: u64,
}

impl Default for SurrogateConfig {
    fn default() -> Self {
        Self {
            samples: 1000,
            scale: 1.0,
            feature_std: None,
            kernel_width: None,
            penalty: 1.0,
            seed: 0,
        }
    }
}

impl SurrogateConfig {
    pub fn validate(&self, d: usize) -> Result<()> {
        if self.samples < 10 * d {
            return Err(Error::InvalidConfig(format!(
                "surrogate needs at least {} samples, got {}",
                10 * d,
                self.samples
            )));
        }
        if !(self.scale > 0.0 && self.scale.is_finite()) {
            return Err(Error::InvalidConfig("surrogate scale must be > 0".into()));
        }
        if let Some(w) = self.kernel_width {
            if !(w > 0.0 && w.is_finite()) {
                return Err(Error::InvalidConfig("kernel width must be > 0".into()));
            }
        }
        if let Some(std) = &self.feature_std {
            check_dim(d, std.len())?;
            if std.iter().any(|s| !(*s > 0.0 && s.is_finite())) {
                return Err(Error::InvalidConfig("feature std must be > 0".into()));
            }
        }
        if !(self.penalty >= 0.0 && self.penalty.is_finite()) {
            return Err(Error::InvalidConfig("penalty must be >= 0".into()));
        }
        Ok(())
    }

    fn width(&self, d: usize) -> f64 {
        self.kernel_width.unwrap_or(0.75 * (d as f64).sqrt())
    }
}

struct Neighborhood {
    points: Vec<Vec<f64>>,
    labels: Vec<u8>,
    weights: Vec<f64>,
}

fn sample(model: &dyn Classifier, x: &[f64], cfg: &SurrogateConfig, n: usize, scale: f64, seed: u64) -> Result<Neighborhood> {
    let d = x.len();
    let unit = vec![1.0; d];
    let std = cfg.feature_std.as_deref().unwrap_or(&unit);
    let width = cfg.width(d);
    let mut rng = rng(seed);
    let mut points = Vec::with_capacity(n);
    let mut labels = Vec::with_capacity(n);
    let mut weights = Vec::with_capacity(n);
    // the query point itself anchors the fit
    points.push(x.to_vec());
    labels.push(model.predict_label(x)?);
    weights.push(1.0);
    for _ in 1..n {
        let mut dist2 = 0.0;
        let z: Vec<f64> = (0..d)
            .map(|j| {
                let e: f64 = StandardNormal.sample(&mut rng);
                let step = scale * e;
                dist2 += step * step;
                x[j] + step * std[j]
            })
            .collect();
        labels.push(model.predict_label(&z)?);
        weights.push((-dist2 / (width * width)).exp());
        points.push(z);
    }
    Ok(Neighborhood { points, labels, weights })
}

/// Weighted, slope-penalized logistic regression by damped Newton steps.
fn fit_weighted_logistic(nb: &Neighborhood, penalty: f64) -> Result<LinearModel> {
    let d = nb.points[0].len();
    let n_params = d + 1;
    let objective = |theta: &DVector<f64>| -> f64 {
        let mut f = 0.5 * penalty * theta.rows(0, d).norm_squared();
        for ((z, &y), &w) in nb.points.iter().zip(&nb.labels).zip(&nb.weights) {
            f += w * bce_from_logit(logit(theta, z), y);
        }
        f
    };
    let mut theta = DVector::<f64>::zeros(n_params);
    let mut f = objective(&theta);
    for _ in 0..NEWTON_MAX_ITERATIONS {
        let mut grad = DVector::<f64>::zeros(n_params);
        let mut hess = DMatrix::<f64>::zeros(n_params, n_params);
        for j in 0..d {
            grad[j] = penalty * theta[j];
            // tiny ridge on the intercept keeps the Hessian invertible
            hess[(j, j)] = penalty.max(1e-10);
        }
        hess[(d, d)] = 1e-10;
        for ((z, &y), &w) in nb.points.iter().zip(&nb.labels).zip(&nb.weights) {
            let p = sigmoid(logit(&theta, z));
            let r = w * (p - f64::from(y));
            let c = w * p * (1.0 - p);
            for a in 0..n_params {
                let za = if a < d { z[a] } else { 1.0 };
                grad[a] += r * za;
                for b in 0..=a {
                    let zb = if b < d { z[b] } else { 1.0 };
                    hess[(a, b)] += c * za * zb;
                }
            }
        }
        for a in 0..n_params {
            for b in 0..a {
                hess[(b, a)] = hess[(a, b)];
            }
        }
        let step = match hess.clone().cholesky() {
            Some(ch) => ch.solve(&grad),
            None => grad.clone(),
        };
        let mut t = 1.0;
        let mut accepted = false;
        while t > 1e-12 {
            let cand = &theta - t * &step;
            let fc = objective(&cand);
            if fc <= f - 1e-4 * t * grad.dot(&step) || fc <= f {
                theta = cand;
                f = fc;
                accepted = true;
                break;
            }
            t *= 0.5;
        }
        if !accepted || t * step.norm() < NEWTON_TOLERANCE {
            break;
        }
    }
    check_finite(theta.as_slice(), "surrogate parameters")?;
    LinearModel::from_augmented(theta.as_slice())
}

fn logit(theta: &DVector<f64>, z: &[f64]) -> f64 {
    let d = z.len();
    z.iter().zip(theta.iter()).map(|(a, b)| a * b).sum::<f64>() + theta[d]
}

/// Fits a linear classifier that mimics `model` around `x`.
pub fn fit_local_linear(model: &dyn Classifier, x: &[f64], config: &SurrogateConfig) -> Result<LinearModel> {
    check_dim(model.dim(), x.len())?;
    check_finite(x, "query point")?;
    config.validate(x.len())?;
    let target = model.predict_label(x)?;
    let mut n = config.samples;
    let mut refits = 0;
    loop {
        let mut scale = config.scale;
        let mut attempt = 0;
        let nb = loop {
            let seed = sub_seed(config.seed, (refits * 16 + attempt) as u64);
            let nb = sample(model, x, config, n, scale, seed)?;
            if nb.labels.iter().any(|&y| y != nb.labels[0]) {
                break nb;
            }
            if attempt == WIDEN_ATTEMPTS {
                return Err(Error::LocallyConstant);
            }
            attempt += 1;
            scale *= 2.0;
        };
        let fit = fit_weighted_logistic(&nb, config.penalty)?;
        if fit.predict_label(x)? == target {
            return Ok(fit);
        }
        if refits == 1 {
            return Err(Error::SurrogateMismatch);
        }
        refits += 1;
        n *= 2;
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::math::cosine;

    struct Constant;
    impl Classifier for Constant {
        fn dim(&self) -> usize {
            2
        }
        fn score(&self, _: &[f64]) -> Result<f64> {
            // σ(s) = 0.9
            Ok((9.0f64).ln())
        }
        fn input_gradient(&self, _: &[f64], _: u8) -> Result<Vec<f64>> {
            Ok(vec![0.0; 2])
        }
    }

    #[test]
    fn recovers_linear_direction() {
        let model = LinearModel::new(vec![1.0, 1.0], 0.0).unwrap();
        for (i, x) in [[0.3, -0.1], [-0.5, 0.2], [1.0, -0.4]].iter().enumerate() {
            let cfg = SurrogateConfig {
                seed: i as u64,
                ..Default::default()
            };
            let s = fit_local_linear(&model, x, &cfg).unwrap();
            assert!(cosine(&s.weights, &[1.0, 1.0]) >= 0.99);
            assert_eq!(s.predict_label(x).unwrap(), model.predict_label(x).unwrap());
        }
    }

    #[test]
    fn constant_model_is_rejected() {
        let err = fit_local_linear(&Constant, &[0.0, 0.0], &SurrogateConfig::default()).unwrap_err();
        assert!(matches!(err, Error::LocallyConstant));
        assert!(err.to_string().contains("locally constant model"));
    }

    #[test]
    fn seed_determinism() {
        let model = LinearModel::new(vec![2.0, -1.0], 0.5).unwrap();
        let cfg = SurrogateConfig {
            seed: 11,
            ..Default::default()
        };
        let a = fit_local_linear(&model, &[0.1, 0.2], &cfg).unwrap();
        let b = fit_local_linear(&model, &[0.1, 0.2], &cfg).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn too_few_samples_rejected() {
        let model = LinearModel::new(vec![1.0, 1.0], 0.0).unwrap();
        let cfg = SurrogateConfig {
            samples: 19,
            ..Default::default()
        };
        assert!(matches!(fit_local_linear(&model, &[0.0, 0.0], &cfg), Err(Error::InvalidConfig(_))));
    }

    #[test]
    fn widening_finds_a_distant_boundary() {
        // boundary at distance 3 in unit-std units; the first draw rarely reaches it
        let model = LinearModel::new(vec![1.0, 0.0], -3.0).unwrap();
        let cfg = SurrogateConfig {
            samples: 20,
            scale: 0.3,
            seed: 4,
            ..Default::default()
        };
        let s = fit_local_linear(&model, &[0.0, 0.0], &cfg).unwrap();
        assert!(s.weights[0] > 0.0);
    }
}
