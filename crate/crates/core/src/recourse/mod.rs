//! Recourse generators.
//!
//! [`cfe`] minimizes `ℓ(M(x''), 1) + λ·c(x, x'')`. [`roar`] minimizes the
//! same objective with the loss taken at the worst-case model shift
//! `max_{δ∈Δ} ℓ(f_{w+δ}(x''), 1)`, recomputed at every iterate. [`ar_grid`]
//! searches a discrete action grid for the cheapest label flip.

mod grid;
mod perturbation;

use serde::{Deserialize, Serialize};

pub use grid::{ar_grid, GridConfig};
pub use perturbation::{inner_max, p_norm, InnerMaxMode, PerturbationSet};

use crate::cost::CostModel;
use crate::error::{check_dim, check_finite, Error, Result};
use crate::model::{Adam, Classifier, LinearModel};
use crate::surrogate::{fit_local_linear, SurrogateConfig};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureAction {
    pub mutable: bool,
    #[serde(default)]
    pub min: Option<f64>,
    #[serde(default)]
    pub max: Option<f64>,
}

impl Default for FeatureAction {
    fn default() -> Self {
        Self {
            mutable: true,
            min: None,
            max: None,
        }
    }
}

/// Per-feature mutability and bounds. An empty list leaves every feature
/// free.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct ActionabilitySpec {
    pub features: Vec<FeatureAction>,
}

impl ActionabilitySpec {
    pub fn unconstrained() -> Self {
        Self::default()
    }

    pub fn validate(&self, d: usize) -> Result<()> {
        if !self.features.is_empty() {
            check_dim(d, self.features.len())?;
        }
        for f in &self.features {
            if let (Some(lo), Some(hi)) = (f.min, f.max) {
                if lo > hi {
                    return Err(Error::InvalidConfig(format!("empty bound interval [{lo}, {hi}]")));
                }
            }
        }
        Ok(())
    }

    pub fn is_mutable(&self, i: usize) -> bool {
        self.features.get(i).is_none_or(|f| f.mutable)
    }

    pub fn bounds(&self, i: usize) -> (f64, f64) {
        self.features.get(i).map_or((f64::NEG_INFINITY, f64::INFINITY), |f| {
            (f.min.unwrap_or(f64::NEG_INFINITY), f.max.unwrap_or(f64::INFINITY))
        })
    }

    pub fn satisfied_by(&self, x2: &[f64], x: &[f64]) -> bool {
        project_actionable(x2, x, self) == x2
    }
}

/// Resets immutable coordinates to the original and clamps the rest.
pub fn project_actionable(x2: &[f64], x_original: &[f64], spec: &ActionabilitySpec) -> Vec<f64> {
    x2.iter()
        .zip(x_original)
        .enumerate()
        .map(|(i, (&v, &orig))| {
            if spec.is_mutable(i) {
                let (lo, hi) = spec.bounds(i);
                v.clamp(lo, hi)
            } else {
                orig
            }
        })
        .collect()
}

/// How an iterate moves along the objective.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StepRule {
    /// `x'' −= α·g` with the cost subgradient inside `g`.
    Gradient,
    /// Gradient step on the loss, then the exact proximal step of the
    /// weighted-ℓ1 cost (soft-thresholding of the displacement from `x`).
    #[default]
    Proximal,
    /// Adaptive moments on the full subgradient, learning rate α.
    Adam,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RecourseConfig {
    pub lambda: f64,
    pub learning_rate: f64,
    pub max_iterations: usize,
    pub tolerance: f64,
    pub perturbation: PerturbationSet,
    pub actionability: ActionabilitySpec,
    pub inner_max: InnerMaxMode,
    pub step_rule: StepRule,
}

impl Default for RecourseConfig {
    fn default() -> Self {
        Self {
            lambda: 0.1,
            learning_rate: 0.01,
            max_iterations: 1000,
            tolerance: 1e-6,
            perturbation: PerturbationSet::default(),
            actionability: ActionabilitySpec::default(),
            inner_max: InnerMaxMode::default(),
            step_rule: StepRule::default(),
        }
    }
}

impl RecourseConfig {
    pub fn validate(&self, d: usize) -> Result<()> {
        if !(self.lambda > 0.0 && self.lambda.is_finite()) {
            return Err(Error::InvalidConfig("lambda must be > 0".into()));
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::InvalidConfig("learning rate must be > 0".into()));
        }
        if !(self.tolerance > 0.0) {
            return Err(Error::InvalidConfig("tolerance must be > 0".into()));
        }
        self.perturbation.validate()?;
        self.actionability.validate(d)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RecourseResult {
    pub x: Vec<f64>,
    pub counterfactual: Vec<f64>,
    pub converged: bool,
    pub iterations: usize,
    pub objective: f64,
    /// Objective at every visited iterate, starting at `x`. Not serialized.
    #[serde(skip)]
    pub trace: Vec<f64>,
    pub cost: f64,
    pub valid_on_source: bool,
}

impl RecourseResult {
    fn identity(x: &[f64], objective: f64) -> Self {
        Self {
            x: x.to_vec(),
            counterfactual: x.to_vec(),
            converged: true,
            iterations: 0,
            objective,
            trace: vec![objective],
            cost: 0.0,
            valid_on_source: true,
        }
    }

    pub fn to_json_line(&self) -> Result<String> {
        Ok(serde_json::to_string(self)?)
    }
}

/// Loss and its input gradient at a point.
type LossFn<'a> = dyn FnMut(&[f64]) -> Result<(f64, Vec<f64>)> + 'a;

fn descend(x: &[f64], cost: &CostModel, config: &RecourseConfig, loss_fn: &mut LossFn<'_>) -> Result<(Vec<f64>, f64, Vec<f64>, bool, usize)> {
    let spec = &config.actionability;
    let alpha = config.learning_rate;
    let lambda = config.lambda;
    let objective = |loss: f64, x2: &[f64]| -> Result<f64> { Ok(loss + lambda * cost.cost(x, x2)?) };

    let mut current = project_actionable(x, x, spec);
    let (mut loss, mut grad) = loss_fn(&current)?;
    let mut obj = objective(loss, &current)?;
    let mut trace = vec![obj];
    let mut best = (current.clone(), obj);
    let mut adam = Adam::new(x.len(), alpha, 0.9, 0.999, 1e-8);
    let mut converged = false;
    let mut iterations = 0;

    while iterations < config.max_iterations {
        iterations += 1;
        let next: Vec<f64> = match config.step_rule {
            StepRule::Gradient | StepRule::Adam => {
                let sub = cost.subgradient(x, &current);
                let g: Vec<f64> = grad.iter().zip(&sub).map(|(a, b)| a + lambda * b).collect();
                if g.iter().any(|v| !v.is_finite()) {
                    return Err(Error::Diverged { trace });
                }
                let mut moved = current.clone();
                if config.step_rule == StepRule::Adam {
                    adam.step(&mut moved, &g);
                } else {
                    moved.iter_mut().zip(&g).for_each(|(v, gi)| *v -= alpha * gi);
                }
                moved
            }
            StepRule::Proximal => {
                if grad.iter().any(|v| !v.is_finite()) {
                    return Err(Error::Diverged { trace });
                }
                current
                    .iter()
                    .zip(&grad)
                    .zip(x)
                    .enumerate()
                    .map(|(i, ((v, g), orig))| {
                        let disp = v - alpha * g - orig;
                        let shrink = alpha * lambda * cost.feature_weight(i);
                        orig + disp.signum() * (disp.abs() - shrink).max(0.0)
                    })
                    .collect()
            }
        };
        current = project_actionable(&next, x, spec);
        (loss, grad) = loss_fn(&current)?;
        let new_obj = objective(loss, &current)?;
        if !new_obj.is_finite() {
            trace.push(new_obj);
            return Err(Error::Diverged { trace });
        }
        trace.push(new_obj);
        if new_obj < best.1 {
            best = (current.clone(), new_obj);
        }
        let change = (new_obj - obj).abs();
        obj = new_obj;
        if change < config.tolerance {
            converged = true;
            break;
        }
    }
    Ok((best.0, best.1, trace, converged, iterations))
}

fn finish(model: &dyn Classifier, x: &[f64], cost: &CostModel, run: (Vec<f64>, f64, Vec<f64>, bool, usize)) -> Result<RecourseResult> {
    let (cf, objective, trace, converged, iterations) = run;
    Ok(RecourseResult {
        cost: cost.cost(x, &cf)?,
        valid_on_source: model.predict_label(&cf)? == 1,
        x: x.to_vec(),
        counterfactual: cf,
        converged,
        iterations,
        objective,
        trace,
    })
}

fn check_inputs(model: &dyn Classifier, x: &[f64], cost: &CostModel, config: &RecourseConfig) -> Result<()> {
    check_dim(model.dim(), x.len())?;
    check_finite(x, "instance")?;
    cost.check_dim(x.len())?;
    config.validate(x.len())
}

/// Counterfactual explanation without robustness; works for any classifier.
/// The perturbation set in `config` is ignored.
pub fn cfe(model: &dyn Classifier, x: &[f64], cost: &CostModel, config: &RecourseConfig) -> Result<RecourseResult> {
    check_inputs(model, x, cost, config)?;
    if model.predict_label(x)? == 1 {
        return Ok(RecourseResult::identity(x, model.loss(x, 1)?));
    }
    let mut loss_fn = |p: &[f64]| -> Result<(f64, Vec<f64>)> { Ok((model.loss(p, 1)?, model.input_gradient(p, 1)?)) };
    let run = descend(x, cost, config, &mut loss_fn)?;
    finish(model, x, cost, run)
}

/// Robust recourse against every model shift in `config.perturbation`.
pub fn roar(model: &LinearModel, x: &[f64], cost: &CostModel, config: &RecourseConfig) -> Result<RecourseResult> {
    check_inputs(model, x, cost, config)?;
    if model.predict_label(x)? == 1 {
        let (_, worst) = inner_max(model, x, &config.perturbation, config.inner_max)?;
        return Ok(RecourseResult::identity(x, worst));
    }
    let mut loss_fn = |p: &[f64]| -> Result<(f64, Vec<f64>)> {
        let (delta, _) = inner_max(model, p, &config.perturbation, config.inner_max)?;
        let shifted = model.shifted(&delta)?;
        Ok((shifted.loss(p, 1)?, shifted.input_gradient(p, 1)?))
    };
    let run = descend(x, cost, config, &mut loss_fn)?;
    finish(model, x, cost, run)
}

/// Worst-case margin `min_{δ∈Δ} (w+δ)ᵀx_aug` of a point.
pub fn worst_case_margin(model: &LinearModel, x2: &[f64], set: &PerturbationSet) -> Result<f64> {
    let (delta, _) = inner_max(model, x2, set, InnerMaxMode::ClosedForm)?;
    model.shifted(&delta)?.score(x2)
}

/// [`roar`] against a local linear surrogate of `model`; source validity is
/// judged by `model` itself.
pub fn roar_lime(model: &dyn Classifier, x: &[f64], cost: &CostModel, config: &RecourseConfig, surrogate: &SurrogateConfig) -> Result<RecourseResult> {
    check_inputs(model, x, cost, config)?;
    if model.predict_label(x)? == 1 {
        return Ok(RecourseResult::identity(x, model.loss(x, 1)?));
    }
    let local = fit_local_linear(model, x, surrogate)?;
    let mut res = roar(&local, x, cost, config)?;
    res.valid_on_source = model.predict_label(&res.counterfactual)? == 1;
    Ok(res)
}

/// [`ar_grid`] against a local linear surrogate of `model`.
pub fn ar_lime(model: &dyn Classifier, x: &[f64], cost: &CostModel, grid: &GridConfig, actionability: &ActionabilitySpec, surrogate: &SurrogateConfig) -> Result<RecourseResult> {
    check_dim(model.dim(), x.len())?;
    if model.predict_label(x)? == 1 {
        return Ok(RecourseResult::identity(x, 0.0));
    }
    let local = fit_local_linear(model, x, surrogate)?;
    let mut res = ar_grid(&local, x, cost, actionability, grid)?;
    res.valid_on_source = model.predict_label(&res.counterfactual)? == 1;
    Ok(res)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::math::{dot, rng};
    use crate::model::MlpModel;

    fn lm(w: &[f64], b: f64) -> LinearModel {
        LinearModel::new(w.to_vec(), b).unwrap()
    }

    #[test]
    fn projection_examples() {
        let free = ActionabilitySpec::unconstrained();
        assert_eq!(project_actionable(&[5.0, 7.0], &[1.0, 2.0], &free), vec![5.0, 7.0]);
        let mut spec = ActionabilitySpec {
            features: vec![
                FeatureAction {
                    mutable: false,
                    ..Default::default()
                },
                FeatureAction::default(),
            ],
        };
        assert_eq!(project_actionable(&[5.0, 7.0], &[1.0, 2.0], &spec), vec![1.0, 7.0]);
        spec.features[1].min = Some(0.0);
        spec.features[1].max = Some(3.0);
        assert_eq!(project_actionable(&[5.0, 7.0], &[1.0, 2.0], &spec), vec![1.0, 3.0]);
    }

    #[test]
    fn already_favorable_is_identity() {
        let m = lm(&[1.0, 1.0], 0.0);
        let x = [1.0, 0.5];
        for res in [
            cfe(&m, &x, &CostModel::L1, &RecourseConfig::default()).unwrap(),
            roar(&m, &x, &CostModel::L1, &RecourseConfig::default()).unwrap(),
        ] {
            assert_eq!(res.counterfactual, x.to_vec());
            assert_eq!(res.cost, 0.0);
            assert!(res.converged);
            assert_eq!(res.iterations, 0);
        }
    }

    #[test]
    fn cfe_small_lambda_moves_only_the_useful_feature() {
        let m = lm(&[1.0, 0.0], 0.0);
        let cfg = RecourseConfig {
            lambda: 1e-4,
            ..Default::default()
        };
        let res = cfe(&m, &[-1.0, 0.0], &CostModel::L1, &cfg).unwrap();
        assert!(res.counterfactual[0] > 0.0);
        assert!(res.counterfactual[1].abs() <= 1e-3);
        assert!(res.valid_on_source);
    }

    #[test]
    fn huge_lambda_stays_put() {
        let m = lm(&[1.0, 0.0], 0.0);
        let cfg = RecourseConfig {
            lambda: 1e4,
            ..Default::default()
        };
        let res = cfe(&m, &[-1.0, 0.0], &CostModel::L1, &cfg).unwrap();
        assert_eq!(res.counterfactual, vec![-1.0, 0.0]);
        assert!(!res.valid_on_source);
    }

    #[test]
    fn roar_margin_exceeds_cfe_margin() {
        let m = lm(&[1.0, 1.0], 0.0);
        let x = [-2.0, -2.0];
        let cfg = RecourseConfig {
            lambda: 0.05,
            perturbation: PerturbationSet::symmetric_box(0.1),
            ..Default::default()
        };
        let robust = roar(&m, &x, &CostModel::L1, &cfg).unwrap();
        let plain = cfe(&m, &x, &CostModel::L1, &cfg).unwrap();
        assert!(worst_case_margin(&m, &robust.counterfactual, &cfg.perturbation).unwrap() > 0.0);
        let margin = |p: &[f64]| dot(&m.weights, p) + m.intercept;
        assert!(margin(&robust.counterfactual) > margin(&plain.counterfactual));
    }

    #[test]
    fn zero_radius_roar_equals_cfe() {
        let m = lm(&[0.7, -1.2, 0.4], -0.3);
        let x = [-1.0, 1.0, -0.5];
        for set in [PerturbationSet::l2(0.0), PerturbationSet::symmetric_box(0.0)] {
            for step_rule in [StepRule::Gradient, StepRule::Proximal, StepRule::Adam] {
                let cfg = RecourseConfig {
                    perturbation: set,
                    step_rule,
                    ..Default::default()
                };
                let a = roar(&m, &x, &CostModel::L1, &cfg).unwrap();
                let b = cfe(&m, &x, &CostModel::L1, &cfg).unwrap();
                assert_eq!(a.counterfactual, b.counterfactual);
                assert_eq!(a.trace, b.trace);
            }
        }
    }

    #[test]
    fn best_iterate_never_worse_than_start() {
        let m = lm(&[2.0, -1.0], -1.0);
        for step_rule in [StepRule::Gradient, StepRule::Proximal, StepRule::Adam] {
            let cfg = RecourseConfig {
                step_rule,
                learning_rate: 0.5,
                ..Default::default()
            };
            let res = roar(&m, &[-1.0, 1.0], &CostModel::L1, &cfg).unwrap();
            assert!(res.objective <= res.trace[0]);
            assert_eq!(res.objective, res.trace.iter().copied().fold(f64::INFINITY, f64::min));
        }
    }

    #[test]
    fn actionability_is_respected() {
        let m = lm(&[1.0, 1.0], 0.0);
        let cfg = RecourseConfig {
            actionability: ActionabilitySpec {
                features: vec![
                    FeatureAction {
                        mutable: true,
                        min: None,
                        max: Some(0.5),
                    },
                    FeatureAction {
                        mutable: false,
                        ..Default::default()
                    },
                ],
            },
            ..Default::default()
        };
        let x = [-2.0, -1.0];
        let res = roar(&m, &x, &CostModel::L1, &cfg).unwrap();
        assert!(cfg.actionability.satisfied_by(&res.counterfactual, &x));
        assert_eq!(res.counterfactual[1], -1.0);
    }

    #[test]
    fn cfe_handles_networks() {
        let mlp = MlpModel::init(2, &[8], 3).unwrap();
        let x = [0.3, -0.2];
        let res = cfe(&mlp, &x, &CostModel::L1, &RecourseConfig::default()).unwrap();
        assert!(res.objective <= res.trace[0]);
    }

    #[test]
    fn lime_variants_propagate_surrogate_errors() {
        struct Flat;
        impl Classifier for Flat {
            fn dim(&self) -> usize {
                2
            }
            fn score(&self, _: &[f64]) -> Result<f64> {
                Ok(-1.0)
            }
            fn input_gradient(&self, _: &[f64], _: u8) -> Result<Vec<f64>> {
                Ok(vec![0.0, 0.0])
            }
        }
        let s = SurrogateConfig::default();
        assert!(matches!(
            roar_lime(&Flat, &[0.0, 0.0], &CostModel::L1, &RecourseConfig::default(), &s),
            Err(Error::LocallyConstant)
        ));
        assert!(matches!(
            ar_lime(&Flat, &[0.0, 0.0], &CostModel::L1, &GridConfig::default(), &ActionabilitySpec::default(), &s),
            Err(Error::LocallyConstant)
        ));
    }

    #[test]
    fn converged_roar_certifies_every_shift() {
        let m = lm(&[1.5, 0.8], 0.4);
        let cfg = RecourseConfig {
            lambda: 0.05,
            learning_rate: 0.5,
            ..Default::default()
        };
        let res = roar(&m, &[-2.0, -1.0], &CostModel::L1, &cfg).unwrap();
        assert!(res.converged);
        let mut g = rng(5);
        for _ in 0..1000 {
            let d = cfg.perturbation.sample(3, &mut g);
            assert!(m.shifted(&d).unwrap().score(&res.counterfactual).unwrap() > 0.0);
        }
    }

    #[test]
    fn json_line_has_record_fields() {
        let m = lm(&[1.0, 1.0], 0.0);
        let res = cfe(&m, &[-1.0, -1.0], &CostModel::L1, &RecourseConfig::default()).unwrap();
        let v: serde_json::Value = serde_json::from_str(&res.to_json_line().unwrap()).unwrap();
        for key in ["x", "counterfactual", "cost", "iterations", "valid_on_source"] {
            assert!(v.get(key).is_some(), "{key}");
        }
    }
}
