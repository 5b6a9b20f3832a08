//! Shift experiments: train M1 on D1 and M2 on the shifted D2 per fold,
//! generate recourses for D1 holdout points that M1 rejects, and score them
//! under both models.

mod metrics;

use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

pub use metrics::{avg_cost, validity, CostSummary, MeanStd};

use crate::cost::{fit_bradley_terry, CostModel, PairwiseComparisonSet};
use crate::datagen::{generate_shifted_pair, kfold_split, load_csv, DatasetSchema, GaussianClassSpec, ShiftSpec};
use crate::dataset::{Dataset, Standardizer};
use crate::error::{Error, Result};
use crate::math::sub_seed;
use crate::model::{train_logistic, train_mlp, Classifier, Model, TrainingConfig, DEFAULT_LAYERS};
use crate::recourse::{
    ar_grid, ar_lime, cfe, roar, roar_lime, ActionabilitySpec, GridConfig, InnerMaxMode, PerturbationSet, RecourseConfig, RecourseResult, StepRule,
};
use crate::surrogate::SurrogateConfig;

/// Candidate tradeoffs for automatic selection.
pub const LAMBDA_GRID: [f64; 8] = [0.005, 0.01, 0.02, 0.05, 0.1, 0.2, 0.5, 1.0];

const TAG_DATA: u64 = 1;
const TAG_FOLDS: u64 = 2;
const TAG_M1: u64 = 3;
const TAG_M2: u64 = 4;
const TAG_PFC: u64 = 5;
const TAG_SURROGATE: u64 = 6;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SyntheticData {
    pub n: usize,
    pub class0: GaussianClassSpec,
    pub class1: GaussianClassSpec,
    pub shift: ShiftSpec,
    /// Probability of label 1.
    pub p1: f64,
}

impl Default for SyntheticData {
    fn default() -> Self {
        Self {
            n: 1000,
            class0: GaussianClassSpec::isotropic(vec![-2.0, -2.0], 0.5).expect("valid default"),
            class1: GaussianClassSpec::isotropic(vec![2.0, 2.0], 0.5).expect("valid default"),
            shift: ShiftSpec::default(),
            p1: 0.5,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CsvData {
    pub d1: PathBuf,
    pub d2: PathBuf,
    pub schema: PathBuf,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DataSource {
    Synthetic(SyntheticData),
    Csv(CsvData),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ModelFamily {
    Lr,
    Mlp,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    Cfe,
    Roar,
    Ar,
    RoarLime,
    ArLime,
}

impl Method {
    pub fn name(&self) -> &'static str {
        match self {
            Method::Cfe => "cfe",
            Method::Roar => "roar",
            Method::Ar => "ar",
            Method::RoarLime => "roar_lime",
            Method::ArLime => "ar_lime",
        }
    }

    fn uses_lambda(&self) -> bool {
        matches!(self, Method::Cfe | Method::Roar | Method::RoarLime)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CostChoice {
    L1,
    Pfc,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NormChoice {
    L1,
    L2,
    Linf,
    Box,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AutoTag {
    Auto,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum LambdaChoice {
    Value(f64),
    Auto(AutoTag),
}

/// Descent settings shared by the gradient-based methods.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct DescentSettings {
    pub learning_rate: f64,
    pub max_iterations: usize,
    pub tolerance: f64,
    pub step_rule: StepRule,
    pub inner_max: InnerMaxMode,
}

impl Default for DescentSettings {
    fn default() -> Self {
        let r = RecourseConfig::default();
        Self {
            learning_rate: r.learning_rate,
            max_iterations: r.max_iterations,
            tolerance: r.tolerance,
            step_rule: r.step_rule,
            inner_max: r.inner_max,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentSpec {
    pub data: DataSource,
    pub model: ModelFamily,
    pub methods: Vec<Method>,
    #[serde(default = "default_cost")]
    pub cost: CostChoice,
    #[serde(default = "default_delta_max")]
    pub delta_max: f64,
    #[serde(default = "default_norm")]
    pub norm: NormChoice,
    pub lambda: LambdaChoice,
    #[serde(default = "default_folds")]
    pub folds: usize,
    pub seeds: Vec<u64>,
    #[serde(default)]
    pub training: TrainingConfig,
    #[serde(default = "default_layers")]
    pub hidden_layers: Vec<usize>,
    #[serde(default)]
    pub recourse: DescentSettings,
    #[serde(default)]
    pub grid: GridConfig,
    #[serde(default)]
    pub surrogate: SurrogateConfig,
    /// Comparisons per feature pair for the PFC cost.
    #[serde(default = "default_per_pair")]
    pub comparisons_per_pair: u32,
    /// Scale features with D1 training-fold statistics; defaults to off for
    /// synthetic data and on for CSV data.
    #[serde(default)]
    pub standardize: Option<bool>,
    /// Cap on recourse targets per fold.
    #[serde(default)]
    pub max_instances: Option<usize>,
}

fn default_cost() -> CostChoice {
    CostChoice::L1
}
fn default_delta_max() -> f64 {
    0.1
}
fn default_norm() -> NormChoice {
    NormChoice::L2
}
fn default_folds() -> usize {
    5
}
fn default_layers() -> Vec<usize> {
    DEFAULT_LAYERS.to_vec()
}
fn default_per_pair() -> u32 {
    200
}

impl ExperimentSpec {
    /// A synthetic experiment with default settings.
    pub fn synthetic(methods: Vec<Method>, shift: ShiftSpec, seeds: Vec<u64>) -> Self {
        Self {
            data: DataSource::Synthetic(SyntheticData { shift, ..Default::default() }),
            model: ModelFamily::Lr,
            methods,
            cost: default_cost(),
            delta_max: default_delta_max(),
            norm: default_norm(),
            lambda: LambdaChoice::Value(0.1),
            folds: default_folds(),
            seeds,
            training: TrainingConfig::default(),
            hidden_layers: default_layers(),
            recourse: DescentSettings::default(),
            grid: GridConfig::default(),
            surrogate: SurrogateConfig::default(),
            comparisons_per_pair: default_per_pair(),
            standardize: None,
            max_instances: None,
        }
    }

    /// Parses a spec file; CSV paths are taken relative to the file.
    pub fn load(path: &Path) -> Result<Self> {
        let mut spec: Self = serde_json::from_str(&std::fs::read_to_string(path)?)?;
        if let DataSource::Csv(csv) = &mut spec.data {
            let base = path.parent().unwrap_or(Path::new("."));
            for p in [&mut csv.d1, &mut csv.d2, &mut csv.schema] {
                if p.is_relative() {
                    *p = base.join(&*p);
                }
            }
        }
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<()> {
        if self.methods.is_empty() {
            return Err(Error::InvalidConfig("no methods listed".into()));
        }
        if self.seeds.is_empty() {
            return Err(Error::InvalidConfig("at least one seed is required".into()));
        }
        if self.folds < 2 {
            return Err(Error::InvalidConfig("need at least 2 folds".into()));
        }
        if let LambdaChoice::Value(l) = self.lambda {
            if !(l > 0.0 && l.is_finite()) {
                return Err(Error::InvalidConfig("lambda must be > 0".into()));
            }
        }
        if self.model == ModelFamily::Mlp && self.methods.iter().any(|m| matches!(m, Method::Roar | Method::Ar)) {
            return Err(Error::InvalidConfig("roar and ar need a linear model; use roar_lime or ar_lime with mlp".into()));
        }
        self.perturbation().validate()?;
        self.training.validate()?;
        self.grid.validate()
    }

    pub fn perturbation(&self) -> PerturbationSet {
        match self.norm {
            NormChoice::L1 => PerturbationSet::NormBall { p: 1.0, delta_max: self.delta_max },
            NormChoice::L2 => PerturbationSet::l2(self.delta_max),
            NormChoice::Linf => PerturbationSet::NormBall {
                p: f64::INFINITY,
                delta_max: self.delta_max,
            },
            NormChoice::Box => PerturbationSet::symmetric_box(self.delta_max),
        }
    }

    fn standardizes(&self) -> bool {
        self.standardize.unwrap_or(matches!(self.data, DataSource::Csv(_)))
    }

    pub fn recourse_config(&self, lambda: f64, actionability: ActionabilitySpec) -> RecourseConfig {
        RecourseConfig {
            lambda,
            learning_rate: self.recourse.learning_rate,
            max_iterations: self.recourse.max_iterations,
            tolerance: self.recourse.tolerance,
            perturbation: self.perturbation(),
            actionability,
            inner_max: self.recourse.inner_max,
            step_rule: self.recourse.step_rule,
        }
    }
}

/// Everything needed to generate and score recourses for one (seed, fold).
pub struct Trial {
    pub seed: u64,
    pub fold: usize,
    pub m1: Model,
    pub m2: Model,
    pub d1_train: Dataset,
    pub d2_train: Dataset,
    /// Holdout rows (in model units) that M1 labels 0.
    pub targets: Vec<Vec<f64>>,
    pub target_rows: Vec<usize>,
    pub cost: CostModel,
    pub actionability: ActionabilitySpec,
    pub scaler: Standardizer,
    /// Per-feature std of the training fold in model units.
    pub feature_std: Vec<f64>,
}

fn train(spec: &ExperimentSpec, data: &Dataset, seed: u64) -> Result<Model> {
    let cfg = TrainingConfig { seed, ..spec.training.clone() };
    Ok(match spec.model {
        ModelFamily::Lr => Model::Linear(train_logistic(data, &cfg)?),
        ModelFamily::Mlp => Model::Mlp(train_mlp(data, &cfg, &spec.hidden_layers)?),
    })
}

struct Loaded {
    d1: Dataset,
    d2: Dataset,
    schema: Option<DatasetSchema>,
}

fn load_data(spec: &ExperimentSpec, seed: u64) -> Result<Loaded> {
    match &spec.data {
        DataSource::Synthetic(s) => {
            let (d1, d2) = generate_shifted_pair(s.n, &s.class0, &s.class1, &s.shift, s.p1, sub_seed(seed, TAG_DATA))?;
            Ok(Loaded { d1, d2, schema: None })
        }
        DataSource::Csv(c) => {
            let mut schema = DatasetSchema::load(&c.schema)?;
            // scaling is fit per fold below
            schema.standardization = None;
            let d1 = load_csv(&c.d1, &schema)?;
            let d2 = load_csv(&c.d2, &schema)?;
            Ok(Loaded { d1, d2, schema: Some(schema) })
        }
    }
}

/// Builds all (seed, fold) trials: data, folds, scaling, M1, M2, cost.
pub fn prepare_trials(spec: &ExperimentSpec) -> Result<Vec<Trial>> {
    spec.validate()?;
    let jobs: Vec<(u64, usize)> = spec.seeds.iter().flat_map(|&s| (0..spec.folds).map(move |f| (s, f))).collect();
    let per_seed: Vec<(u64, Loaded)> = spec.seeds.iter().map(|&s| Ok((s, load_data(spec, s)?))).collect::<Result<_>>()?;
    jobs.par_iter()
        .map(|&(seed, fold)| {
            let loaded = &per_seed.iter().find(|(s, _)| *s == seed).expect("seed loaded").1;
            prepare_trial(spec, loaded, seed, fold)
        })
        .collect()
}

fn prepare_trial(spec: &ExperimentSpec, loaded: &Loaded, seed: u64, fold: usize) -> Result<Trial> {
    let folds1 = kfold_split(loaded.d1.len(), spec.folds, sub_seed(seed, TAG_FOLDS))?;
    let (train1, hold1) = &folds1[fold];
    // synthetic D2 rows pair with D1 rows, so reuse the same split
    let train2 = if loaded.d2.len() == loaded.d1.len() {
        train1.clone()
    } else {
        kfold_split(loaded.d2.len(), spec.folds, sub_seed(seed, TAG_FOLDS))?[fold].0.clone()
    };
    let raw_train1 = loaded.d1.subset(train1);
    let scaler = if spec.standardizes() {
        Standardizer::fit(&raw_train1)?
    } else {
        Standardizer::identity(loaded.d1.dim())
    };
    let d1_train = scaler.transform_dataset(&raw_train1);
    let d2_train = scaler.transform_dataset(&loaded.d2.subset(&train2));
    let holdout = scaler.transform_dataset(&loaded.d1.subset(hold1));

    let m1 = train(spec, &d1_train, sub_seed(sub_seed(seed, TAG_M1), fold as u64))?;
    let m2 = train(spec, &d2_train, sub_seed(sub_seed(seed, TAG_M2), fold as u64))?;

    let mut targets = Vec::new();
    let mut target_rows = Vec::new();
    for (x, &row) in holdout.features.iter().zip(hold1) {
        if m1.predict_label(x)? == 0 {
            targets.push(x.clone());
            target_rows.push(row);
        }
        if spec.max_instances.is_some_and(|m| targets.len() >= m) {
            break;
        }
    }

    let d = loaded.d1.dim();
    let cost = match spec.cost {
        CostChoice::L1 => CostModel::L1,
        CostChoice::Pfc => {
            let comparisons = PairwiseComparisonSet::simulate(d, spec.comparisons_per_pair, sub_seed(seed, TAG_PFC))?;
            fit_bradley_terry(&comparisons)?
        }
    };
    let actionability = match &loaded.schema {
        Some(schema) => schema.actionability(&scaler),
        None => ActionabilitySpec::default(),
    };
    let feature_std = Standardizer::fit(&d1_train)?.std;
    Ok(Trial {
        seed,
        fold,
        m1,
        m2,
        d1_train,
        d2_train,
        targets,
        target_rows,
        cost,
        actionability,
        scaler,
        feature_std,
    })
}

/// Runs one method on one target of a trial.
pub fn run_method(spec: &ExperimentSpec, trial: &Trial, method: Method, lambda: f64, index: usize) -> Result<RecourseResult> {
    let x = &trial.targets[index];
    let cfg = spec.recourse_config(lambda, trial.actionability.clone());
    let surrogate = SurrogateConfig {
        seed: sub_seed(sub_seed(trial.seed, TAG_SURROGATE), (trial.fold * 1_000_003 + index) as u64),
        feature_std: Some(spec.surrogate.feature_std.clone().unwrap_or_else(|| trial.feature_std.clone())),
        ..spec.surrogate.clone()
    };
    let linear = || {
        trial
            .m1
            .as_linear()
            .ok_or_else(|| Error::InvalidConfig(format!("{} needs a linear model", method.name())))
    };
    match method {
        Method::Cfe => cfe(&trial.m1, x, &trial.cost, &cfg),
        Method::Roar => roar(linear()?, x, &trial.cost, &cfg),
        Method::Ar => ar_grid(linear()?, x, &trial.cost, &trial.actionability, &spec.grid),
        Method::RoarLime => roar_lime(&trial.m1, x, &trial.cost, &cfg, &surrogate),
        Method::ArLime => ar_lime(&trial.m1, x, &trial.cost, &spec.grid, &trial.actionability, &surrogate),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InstanceRecord {
    pub method: Method,
    pub seed: u64,
    pub fold: usize,
    /// Row of D1 the target came from.
    pub row: usize,
    pub lambda: Option<f64>,
    pub x: Vec<f64>,
    pub counterfactual: Option<Vec<f64>>,
    pub cost: Option<f64>,
    pub converged: Option<bool>,
    pub iterations: Option<usize>,
    pub m1_valid: Option<bool>,
    pub m2_valid: Option<bool>,
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrialSummary {
    pub method: Method,
    pub seed: u64,
    pub fold: usize,
    pub lambda: Option<f64>,
    pub targets: usize,
    pub produced: usize,
    pub errored: usize,
    pub m1_validity: Option<f64>,
    pub m2_validity: Option<f64>,
    pub avg_cost: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MethodSummary {
    pub method: Method,
    pub avg_cost: MeanStd,
    pub m1_validity: MeanStd,
    pub m2_validity: MeanStd,
    /// Standard error of the mean M2 validity over trials.
    pub m2_validity_se: f64,
    /// Trials that produced at least one recourse.
    pub trials: usize,
    pub produced: usize,
    pub errored: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvaluationReport {
    pub spec: ExperimentSpec,
    pub seeds: Vec<u64>,
    pub methods: Vec<MethodSummary>,
    pub trials: Vec<TrialSummary>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub instances: Vec<InstanceRecord>,
}

impl EvaluationReport {
    pub fn summary(&self, method: Method) -> Option<&MethodSummary> {
        self.methods.iter().find(|m| m.method == method)
    }
}

fn record(method: Method, trial: &Trial, i: usize, lambda: Option<f64>, r: &Result<RecourseResult>) -> Result<InstanceRecord> {
    let base = InstanceRecord {
        method,
        seed: trial.seed,
        fold: trial.fold,
        row: trial.target_rows[i],
        lambda,
        x: trial.targets[i].clone(),
        counterfactual: None,
        cost: None,
        converged: None,
        iterations: None,
        m1_valid: None,
        m2_valid: None,
        error: None,
    };
    Ok(match r {
        Ok(res) => InstanceRecord {
            counterfactual: Some(res.counterfactual.clone()),
            cost: Some(res.cost),
            converged: Some(res.converged),
            iterations: Some(res.iterations),
            m1_valid: Some(trial.m1.predict_label(&res.counterfactual)? == 1),
            m2_valid: Some(trial.m2.predict_label(&res.counterfactual)? == 1),
            ..base
        },
        Err(e) => InstanceRecord {
            error: Some(e.to_string()),
            ..base
        },
    })
}

/// Runs `method` over every target of `trial`, choosing λ from
/// [`LAMBDA_GRID`] when requested: the largest λ whose M1 validity (over
/// all targets, failures counting as invalid) is maximal.
fn run_trial_method(spec: &ExperimentSpec, trial: &Trial, method: Method) -> Result<(Option<f64>, Vec<Result<RecourseResult>>)> {
    let run = |lambda: f64| -> Vec<Result<RecourseResult>> {
        (0..trial.targets.len())
            .into_par_iter()
            .map(|i| run_method(spec, trial, method, lambda, i))
            .collect()
    };
    if !method.uses_lambda() {
        return Ok((None, run(1.0)));
    }
    match spec.lambda {
        LambdaChoice::Value(l) => Ok((Some(l), run(l))),
        LambdaChoice::Auto(_) => {
            let mut best: Option<(usize, f64, Vec<Result<RecourseResult>>)> = None;
            for &l in &LAMBDA_GRID {
                let results = run(l);
                let mut valid = 0;
                for r in results.iter().flatten() {
                    if trial.m1.predict_label(&r.counterfactual)? == 1 {
                        valid += 1;
                    }
                }
                if best.as_ref().is_none_or(|(v, _, _)| valid >= *v) {
                    best = Some((valid, l, results));
                }
            }
            let (_, l, results) = best.expect("grid is nonempty");
            Ok((Some(l), results))
        }
    }
}

/// Cross-validated shift experiment over every seed and fold.
pub fn run_shift_experiment(spec: &ExperimentSpec) -> Result<EvaluationReport> {
    let trials = prepare_trials(spec)?;
    evaluate_trials(spec, &trials)
}

pub fn evaluate_trials(spec: &ExperimentSpec, trials: &[Trial]) -> Result<EvaluationReport> {
    let mut summaries = Vec::new();
    let mut trial_rows = Vec::new();
    let mut instances = Vec::new();
    for &method in &spec.methods {
        let outputs: Vec<(Option<f64>, Vec<Result<RecourseResult>>)> =
            trials.par_iter().map(|t| run_trial_method(spec, t, method)).collect::<Result<_>>()?;
        let (mut m1s, mut m2s, mut costs) = (Vec::new(), Vec::new(), Vec::new());
        let (mut produced, mut errored) = (0, 0);
        for (trial, (lambda, results)) in trials.iter().zip(outputs) {
            let recs: Vec<InstanceRecord> = results
                .iter()
                .enumerate()
                .map(|(i, r)| record(method, trial, i, lambda, r))
                .collect::<Result<_>>()?;
            let ok: Vec<RecourseResult> = results.iter().filter_map(|r| r.as_ref().ok().cloned()).collect();
            let n_ok = ok.len();
            produced += n_ok;
            errored += results.len() - n_ok;
            let (m1v, m2v, c) = if ok.is_empty() {
                (None, None, None)
            } else {
                let m1v = validity(&ok, &trial.m1)?;
                let m2v = validity(&ok, &trial.m2)?;
                let c = avg_cost(&results, &trial.cost)?.mean;
                m1s.push(m1v);
                m2s.push(m2v);
                costs.push(c);
                (Some(m1v), Some(m2v), Some(c))
            };
            trial_rows.push(TrialSummary {
                method,
                seed: trial.seed,
                fold: trial.fold,
                lambda,
                targets: results.len(),
                produced: n_ok,
                errored: results.len() - n_ok,
                m1_validity: m1v,
                m2_validity: m2v,
                avg_cost: c,
            });
            instances.extend(recs);
        }
        let m2 = MeanStd::of(&m2s);
        summaries.push(MethodSummary {
            method,
            avg_cost: MeanStd::of(&costs),
            m1_validity: MeanStd::of(&m1s),
            m2_validity: m2,
            m2_validity_se: if m2s.is_empty() { 0.0 } else { m2.std / (m2s.len() as f64).sqrt() },
            trials: m2s.len(),
            produced,
            errored,
        });
    }
    Ok(EvaluationReport {
        spec: spec.clone(),
        seeds: spec.seeds.clone(),
        methods: summaries,
        trials: trial_rows,
        instances,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepPoint {
    pub shift: ShiftSpec,
    pub report: EvaluationReport,
}

/// One experiment per shift; requires synthetic data.
pub fn sweep(spec: &ExperimentSpec, grid: &[ShiftSpec]) -> Result<Vec<SweepPoint>> {
    if grid.is_empty() {
        return Err(Error::InvalidConfig("empty shift grid".into()));
    }
    let DataSource::Synthetic(base) = &spec.data else {
        return Err(Error::InvalidConfig("sweeps need synthetic data".into()));
    };
    grid.iter()
        .map(|shift| {
            shift.validate()?;
            let mut s = spec.clone();
            s.data = DataSource::Synthetic(SyntheticData { shift: *shift, ..base.clone() });
            let mut report = run_shift_experiment(&s)?;
            report.instances.clear();
            Ok(SweepPoint { shift: *shift, report })
        })
        .collect()
}

/// Plot-ready rows: method, alpha, beta, m2_validity_mean, m2_validity_se.
pub fn sweep_csv(points: &[SweepPoint]) -> Result<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(["method", "alpha", "beta", "m2_validity_mean", "m2_validity_se"])?;
    for p in points {
        for m in &p.report.methods {
            w.write_record([
                m.method.name().to_string(),
                p.shift.alpha.to_string(),
                p.shift.beta.to_string(),
                m.m2_validity.mean.to_string(),
                m.m2_validity_se.to_string(),
            ])?;
        }
    }
    let bytes = w.into_inner().map_err(|e| Error::Io(e.into_error()))?;
    Ok(String::from_utf8(bytes).expect("csv output is utf-8"))
}
