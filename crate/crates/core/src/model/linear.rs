use serde::{Deserialize, Serialize};

use super::{Classifier, TrainingConfig};
use crate::dataset::Dataset;
use crate::error::{check_dim, check_finite, Error, Result};
use crate::math::{bce_from_logit, dot, sigmoid};

/// Logistic regression `σ(wᵀx + b)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LinearModel {
    pub weights: Vec<f64>,
    pub intercept: f64,
}

impl LinearModel {
    pub fn new(weights: Vec<f64>, intercept: f64) -> Result<Self> {
        let m = Self { weights, intercept };
        m.validate()?;
        Ok(m)
    }

    pub(crate) fn validate(&self) -> Result<()> {
        check_finite(&self.weights, "linear weights")?;
        check_finite(&[self.intercept], "linear intercept")
    }

    /// Parameters with the intercept appended as the last coordinate.
    pub fn augmented(&self) -> Vec<f64> {
        let mut w = self.weights.clone();
        w.push(self.intercept);
        w
    }

    /// Inverse of [`LinearModel::augmented`].
    pub fn from_augmented(params: &[f64]) -> Result<Self> {
        let (b, w) = params
            .split_last()
            .ok_or_else(|| Error::InvalidConfig("empty parameter vector".into()))?;
        Self::new(w.to_vec(), *b)
    }

    /// The model with parameters `(w + δ_w, b + δ_b)` where `delta` is in
    /// augmented layout.
    pub fn shifted(&self, delta: &[f64]) -> Result<Self> {
        check_dim(self.weights.len() + 1, delta.len())?;
        let weights = self.weights.iter().zip(delta).map(|(w, d)| w + d).collect();
        Self::new(weights, self.intercept + delta[self.weights.len()])
    }
}

impl Classifier for LinearModel {
    fn dim(&self) -> usize {
        self.weights.len()
    }

    fn score(&self, x: &[f64]) -> Result<f64> {
        check_dim(self.weights.len(), x.len())?;
        Ok(dot(&self.weights, x) + self.intercept)
    }

    fn input_gradient(&self, x: &[f64], target: u8) -> Result<Vec<f64>> {
        let residual = sigmoid(self.score(x)?) - f64::from(target);
        Ok(self.weights.iter().map(|w| residual * w).collect())
    }
}

pub fn train_logistic(data: &Dataset, config: &TrainingConfig) -> Result<LinearModel> {
    train_logistic_traced(data, config).map(|(m, _)| m)
}

/// Full-batch Adam on mean binary cross-entropy. Returns the model and the
/// mean training loss after each epoch (index 0 is the initial loss).
pub fn train_logistic_traced(data: &Dataset, config: &TrainingConfig) -> Result<(LinearModel, Vec<f64>)> {
    config.validate()?;
    data.check_trainable()?;
    let d = data.dim();
    let n = data.len() as f64;
    // zero init: the loss is convex, so the starting point only affects speed
    let mut params = vec![0.0; d + 1];
    let mut opt = config.optimizer(d + 1);
    let mut losses = Vec::with_capacity(config.epochs + 1);
    let mut grad = vec![0.0; d + 1];

    let mean_loss_and_grad = |params: &[f64], grad: &mut [f64]| -> f64 {
        grad.iter_mut().for_each(|g| *g = 0.0);
        let mut loss = 0.0;
        for (x, &y) in data.features.iter().zip(&data.labels) {
            let s = dot(&params[..d], x) + params[d];
            loss += bce_from_logit(s, y);
            let r = sigmoid(s) - f64::from(y);
            for (g, xi) in grad[..d].iter_mut().zip(x) {
                *g += r * xi;
            }
            grad[d] += r;
        }
        grad.iter_mut().for_each(|g| *g /= n);
        loss / n
    };

    losses.push(mean_loss_and_grad(&params, &mut grad));
    for _ in 0..config.epochs {
        opt.step(&mut params, &grad);
        let loss = mean_loss_and_grad(&params, &mut grad);
        if !loss.is_finite() {
            return Err(Error::NonFinite("training loss"));
        }
        losses.push(loss);
    }
    Ok((LinearModel::from_augmented(&params)?, losses))
}
