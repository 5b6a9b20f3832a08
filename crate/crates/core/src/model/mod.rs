//! Predictive models with probability outputs and input gradients.
//!
//! Both model families emit a logit `score(x)`; the favorable label is
//! assigned iff `score(x) > 0`, so a point exactly on the decision boundary
//! is labeled 0.

mod adam;
mod linear;
mod mlp;

use std::path::Path;

use serde::{Deserialize, Serialize};

pub use adam::Adam;
pub use linear::{train_logistic, train_logistic_traced, LinearModel};
pub use mlp::{train_mlp, DenseLayer, MlpModel, DEFAULT_LAYERS};

use crate::error::{Error, Result};
use crate::math::{sigmoid, softplus};

/// Smallest probability ever reported, keeping outputs strictly inside (0, 1).
const PROB_FLOOR: f64 = 1e-300;
const PROB_CEIL: f64 = 1.0 - f64::EPSILON / 2.0;

pub trait Classifier: Send + Sync {
    fn dim(&self) -> usize;

    /// Pre-sigmoid output.
    fn score(&self, x: &[f64]) -> Result<f64>;

    /// Gradient of the binary cross-entropy `ℓ(model(x), target)` with
    /// respect to `x`.
    fn input_gradient(&self, x: &[f64], target: u8) -> Result<Vec<f64>>;

    fn predict_proba(&self, x: &[f64]) -> Result<f64> {
        Ok(sigmoid(self.score(x)?).clamp(PROB_FLOOR, PROB_CEIL))
    }

    fn predict_label(&self, x: &[f64]) -> Result<u8> {
        Ok(u8::from(self.score(x)? > 0.0))
    }

    fn loss(&self, x: &[f64], target: u8) -> Result<f64> {
        let s = self.score(x)?;
        Ok(if target == 1 { softplus(-s) } else { softplus(s) })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainingConfig {
    pub learning_rate: f64,
    pub epochs: usize,
    /// Mini-batch size for the network trainer; logistic regression always
    /// uses the full batch.
    pub batch_size: usize,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    pub seed: u64,
}

impl Default for TrainingConfig {
    fn default() -> Self {
        Self {
            learning_rate: 1e-3,
            epochs: 100,
            batch_size: 32,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
            seed: 0,
        }
    }
}

impl TrainingConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::InvalidConfig("learning rate must be > 0".into()));
        }
        if self.batch_size == 0 {
            return Err(Error::InvalidConfig("batch size must be >= 1".into()));
        }
        if !(0.0..1.0).contains(&self.beta1) || !(0.0..1.0).contains(&self.beta2) {
            return Err(Error::InvalidConfig("moment decays must lie in [0, 1)".into()));
        }
        Ok(())
    }

    pub(crate) fn optimizer(&self, n_params: usize) -> Adam {
        Adam::new(n_params, self.learning_rate, self.beta1, self.beta2, self.epsilon)
    }
}

/// Serialized form of any trained model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum Model {
    Linear(LinearModel),
    Mlp(MlpModel),
}

impl Model {
    pub fn as_classifier(&self) -> &dyn Classifier {
        match self {
            Model::Linear(m) => m,
            Model::Mlp(m) => m,
        }
    }

    pub fn as_linear(&self) -> Option<&LinearModel> {
        match self {
            Model::Linear(m) => Some(m),
            Model::Mlp(_) => None,
        }
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(s: &str) -> Result<Self> {
        let model: Model = serde_json::from_str(s)?;
        model.validate()?;
        Ok(model)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }

    fn validate(&self) -> Result<()> {
        match self {
            Model::Linear(m) => m.validate(),
            Model::Mlp(m) => m.validate(),
        }
    }
}

impl Classifier for Model {
    fn dim(&self) -> usize {
        self.as_classifier().dim()
    }

    fn score(&self, x: &[f64]) -> Result<f64> {
        self.as_classifier().score(x)
    }

    fn input_gradient(&self, x: &[f64], target: u8) -> Result<Vec<f64>> {
        self.as_classifier().input_gradient(x, target)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn linear_probabilities() {
        let m = LinearModel::new(vec![1.0, 1.0], 0.0).unwrap();
        assert_eq!(m.predict_proba(&[0.0, 0.0]).unwrap(), 0.5);
        assert_eq!(m.predict_label(&[0.0, 0.0]).unwrap(), 0);
        let m = LinearModel::new(vec![1.0, 0.0], 0.0).unwrap();
        assert!((m.predict_proba(&[2.0, 0.0]).unwrap() - 0.880_797_077_977_882_3).abs() < 1e-12);
        assert!(matches!(
            m.predict_proba(&[1.0]),
            Err(Error::DimensionMismatch { expected: 2, got: 1 })
        ));
    }

    #[test]
    fn probability_stays_inside_unit_interval() {
        let m = LinearModel::new(vec![1.0], 0.0).unwrap();
        let hi = m.predict_proba(&[800.0]).unwrap();
        let lo = m.predict_proba(&[-800.0]).unwrap();
        assert!(hi < 1.0 && lo > 0.0);
    }

    #[test]
    fn json_round_trip_is_exact() {
        let mlp = MlpModel::init(3, &[4, 5], 17).unwrap();
        let lin = LinearModel::new(vec![0.1, 1.0 / 3.0, -2e-17], std::f64::consts::PI).unwrap();
        for model in [Model::Mlp(mlp), Model::Linear(lin)] {
            let back = Model::from_json(&model.to_json().unwrap()).unwrap();
            assert_eq!(back, model);
        }
    }

    #[test]
    fn json_kind_tag() {
        let lin = Model::Linear(LinearModel::new(vec![1.0], 0.5).unwrap());
        let v: serde_json::Value = serde_json::from_str(&lin.to_json().unwrap()).unwrap();
        assert_eq!(v["kind"], "linear");
        assert_eq!(v["intercept"], 0.5);
        let bad = r#"{"kind":"mlp","layers":[{"weights":[[1.0,2.0]],"bias":[0.0]},{"weights":[[1.0,2.0]],"bias":[0.0]}]}"#;
        assert!(Model::from_json(bad).is_err());
    }

    proptest! {
        #[test]
        fn linear_json_round_trip(w in prop::collection::vec(-1e6f64..1e6, 1..6), b in -1e6f64..1e6) {
            let m = Model::Linear(LinearModel::new(w, b).unwrap());
            prop_assert_eq!(Model::from_json(&m.to_json().unwrap()).unwrap(), m);
        }
    }
}
