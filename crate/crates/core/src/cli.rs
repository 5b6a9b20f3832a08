//! The `roar` command line.
//!
//! Exit codes: 0 success, 1 usage, 2 data or config error, 3 numerical
//! failure. Every output file is written to a temporary file in the target
//! directory and renamed into place, and a manifest (config echo, seeds,
//! sha256 of each artifact) is written next to it.

use std::ffi::OsString;
use std::io::Write as _;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;
use serde_json::{json, Value};
use sha2::{Digest, Sha256};

use crate::cost::{fit_bradley_terry, CostModel, PairwiseComparisonSet};
use crate::datagen::{generate_shifted_pair, load_csv, write_csv, DatasetSchema, ShiftSpec};
use crate::error::{Error, Result};
use crate::eval::{run_shift_experiment, sweep, sweep_csv, ExperimentSpec, SyntheticData};
use crate::model::{train_logistic, train_mlp, Classifier, Model, TrainingConfig, DEFAULT_LAYERS};
use crate::recourse::{ar_grid, ar_lime, cfe, roar, roar_lime, GridConfig, PerturbationSet, RecourseConfig};
use crate::surrogate::SurrogateConfig;
use crate::theory::{default_cases, verify_case, GaussianTheoryInput};

pub const EXIT_OK: i32 = 0;
pub const EXIT_USAGE: i32 = 1;
pub const EXIT_DATA: i32 = 2;
pub const EXIT_NUMERICAL: i32 = 3;

#[derive(Debug, Parser)]
#[command(name = "roar", version, about = "Recourse robust to model shifts")]
pub struct Cli {
    /// Worker threads (default: available parallelism).
    #[arg(long, global = true, env = "ROAR_JOBS")]
    pub jobs: Option<usize>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Sample a synthetic D1/D2 pair as CSV files.
    GenerateData(GenerateArgs),
    /// Train a classifier on a CSV file.
    Train(TrainArgs),
    /// Generate recourses for the rows a model labels 0.
    Recourse(RecourseArgs),
    /// Run a cross-validated shift experiment.
    Evaluate(EvaluateArgs),
    /// Run a shift experiment for every (alpha, beta) pair.
    Sweep(SweepArgs),
    /// Check the invalidation probability formulas against Monte Carlo.
    VerifyTheory(TheoryArgs),
}

#[derive(Debug, Args)]
pub struct GenerateArgs {
    /// JSON with n, class0, class1, shift, p1; missing fields take defaults.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub n: Option<usize>,
    #[arg(long)]
    pub alpha: Option<f64>,
    #[arg(long)]
    pub beta: Option<f64>,
    #[arg(long)]
    pub seed: u64,
    /// Output directory for d1.csv, d2.csv and manifest.json.
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum ModelKind {
    Lr,
    Mlp,
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    #[arg(long)]
    pub data: PathBuf,
    /// Column schema; inferred from the header (all columns but `label`) if absent.
    #[arg(long)]
    pub schema: Option<PathBuf>,
    #[arg(long, value_enum, default_value = "lr")]
    pub model: ModelKind,
    /// TrainingConfig JSON.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Hidden layer sizes for mlp, comma separated.
    #[arg(long, value_delimiter = ',')]
    pub layers: Option<Vec<usize>>,
    #[arg(long)]
    pub seed: u64,
    /// Output directory for model.json and manifest.json.
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum MethodArg {
    Cfe,
    Roar,
    Ar,
    RoarLime,
    ArLime,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum NormArg {
    L1,
    L2,
    Linf,
    Box,
}

#[derive(Debug, Args)]
pub struct RecourseArgs {
    #[arg(long)]
    pub model: PathBuf,
    #[arg(long)]
    pub data: PathBuf,
    #[arg(long)]
    pub schema: Option<PathBuf>,
    #[arg(long, value_enum, default_value = "roar")]
    pub method: MethodArg,
    /// RecourseConfig JSON; flags below override it.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub lambda: Option<f64>,
    #[arg(long)]
    pub delta_max: Option<f64>,
    #[arg(long, value_enum)]
    pub norm: Option<NormArg>,
    /// Pairwise comparisons CSV; fits a PFC cost instead of L1.
    #[arg(long)]
    pub comparisons: Option<PathBuf>,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Process at most this many rows.
    #[arg(long)]
    pub limit: Option<usize>,
    /// Output directory for recourses.jsonl and manifest.json.
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct Overrides {
    #[arg(long)]
    pub delta_max: Option<f64>,
    /// A number or `auto`.
    #[arg(long)]
    pub lambda: Option<String>,
    /// Replaces the seed list with this single seed.
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub folds: Option<usize>,
}

#[derive(Debug, Args)]
pub struct EvaluateArgs {
    #[arg(long)]
    pub spec: PathBuf,
    #[command(flatten)]
    pub overrides: Overrides,
    /// Output directory for report.json and manifest.json.
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct SweepArgs {
    #[arg(long)]
    pub spec: PathBuf,
    #[command(flatten)]
    pub overrides: Overrides,
    #[arg(long, value_delimiter = ',', default_value = "0,0.5,1,1.5,2")]
    pub alphas: Vec<f64>,
    #[arg(long, value_delimiter = ',', default_value = "0")]
    pub betas: Vec<f64>,
    /// Output directory for sweep.json, plotdata.csv and manifest.json.
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct TheoryArgs {
    /// `default` or a JSON file of [{"name", "w", "delta", "mu", "sigma"}].
    #[arg(long, default_value = "default")]
    pub cases: String,
    #[arg(long, default_value_t = 1_000_000)]
    pub samples: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Report file; the manifest goes to `<out>.manifest.json`.
    #[arg(long)]
    pub out: PathBuf,
}

/// Parses `argv` (including the program name), runs, and returns the exit
/// code. Diagnostics go to stderr.
pub fn run<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
            let _ = e.print();
            return code;
        }
    };
    match execute(cli) {
        Ok(()) => EXIT_OK,
        Err(e) => {
            eprintln!("error: {e}");
            if e.is_numerical() {
                EXIT_NUMERICAL
            } else {
                EXIT_DATA
            }
        }
    }
}

fn execute(cli: Cli) -> Result<()> {
    let pool = {
        let mut b = rayon::ThreadPoolBuilder::new();
        if let Some(j) = cli.jobs {
            if j == 0 {
                return Err(Error::InvalidConfig("--jobs must be >= 1".into()));
            }
            b = b.num_threads(j);
        }
        b.build().map_err(|e| Error::InvalidConfig(e.to_string()))?
    };
    pool.install(|| match cli.command {
        Command::GenerateData(a) => generate(a),
        Command::Train(a) => train(a),
        Command::Recourse(a) => recourse(a),
        Command::Evaluate(a) => evaluate(a),
        Command::Sweep(a) => run_sweep(a),
        Command::VerifyTheory(a) => verify_theory(a),
    })
}

fn read_json<T: serde::de::DeserializeOwned>(path: &Path) -> Result<T> {
    Ok(serde_json::from_str(&std::fs::read_to_string(path)?)?)
}

fn sha256_hex(bytes: &[u8]) -> String {
    Sha256::digest(bytes).iter().map(|b| format!("{b:02x}")).collect()
}

/// Writes `bytes` to `path` via a temporary file in the same directory.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let dir = match path.parent() {
        Some(p) if !p.as_os_str().is_empty() => p,
        _ => Path::new("."),
    };
    std::fs::create_dir_all(dir)?;
    let mut tmp = tempfile::NamedTempFile::new_in(dir)?;
    tmp.write_all(bytes)?;
    tmp.as_file().sync_all()?;
    tmp.persist(path).map_err(|e| Error::Io(e.error))?;
    Ok(())
}

/// Collects outputs so nothing is written until every artifact is ready.
struct Outputs {
    files: Vec<(PathBuf, Vec<u8>)>,
}

impl Outputs {
    fn new() -> Self {
        Self { files: Vec::new() }
    }

    fn add(&mut self, path: PathBuf, bytes: Vec<u8>) {
        self.files.push((path, bytes));
    }

    fn add_json(&mut self, path: PathBuf, value: &impl Serialize) -> Result<()> {
        let mut s = serde_json::to_string_pretty(value)?;
        s.push('\n');
        self.add(path, s.into_bytes());
        Ok(())
    }

    fn commit(self, manifest: &Path, command: &str, config: Value, seeds: &[u64]) -> Result<()> {
        let artifacts: Vec<Value> = self
            .files
            .iter()
            .map(|(p, b)| {
                json!({
                    "path": p.file_name().map(|n| n.to_string_lossy().into_owned()),
                    "sha256": sha256_hex(b),
                    "bytes": b.len(),
                })
            })
            .collect();
        let timestamp = std::time::SystemTime::now()
            .duration_since(std::time::UNIX_EPOCH)
            .map(|d| d.as_secs())
            .unwrap_or(0);
        let m = json!({
            "command": command,
            "version": env!("CARGO_PKG_VERSION"),
            "config": config,
            "seeds": seeds,
            "artifacts": artifacts,
            "timestamp_unix": timestamp,
        });
        for (p, b) in &self.files {
            write_atomic(p, b)?;
        }
        write_atomic(manifest, format!("{}\n", serde_json::to_string_pretty(&m)?).as_bytes())
    }
}

fn generate(a: GenerateArgs) -> Result<()> {
    let mut cfg: SyntheticData = match &a.config {
        Some(p) => read_json(p)?,
        None => SyntheticData::default(),
    };
    if let Some(n) = a.n {
        cfg.n = n;
    }
    if let Some(alpha) = a.alpha {
        cfg.shift.alpha = alpha;
    }
    if let Some(beta) = a.beta {
        cfg.shift.beta = beta;
    }
    cfg.shift.validate()?;
    let (d1, d2) = generate_shifted_pair(cfg.n, &cfg.class0, &cfg.class1, &cfg.shift, cfg.p1, a.seed)?;
    let mut out = Outputs::new();
    for (name, data) in [("d1.csv", &d1), ("d2.csv", &d2)] {
        let mut buf = Vec::new();
        write_csv(data, &mut buf)?;
        out.add(a.out.join(name), buf);
    }
    out.commit(&a.out.join("manifest.json"), "generate-data", serde_json::to_value(&cfg)?, &[a.seed])
}

fn load_data(data: &Path, schema: Option<&Path>) -> Result<(crate::dataset::Dataset, DatasetSchema)> {
    let schema = match schema {
        Some(p) => DatasetSchema::load(p)?,
        None => DatasetSchema::infer(data)?,
    };
    Ok((load_csv(data, &schema)?, schema))
}

fn train(a: TrainArgs) -> Result<()> {
    let (data, _) = load_data(&a.data, a.schema.as_deref())?;
    let mut cfg: TrainingConfig = match &a.config {
        Some(p) => read_json(p)?,
        None => TrainingConfig::default(),
    };
    cfg.seed = a.seed;
    let layers = a.layers.clone().unwrap_or_else(|| DEFAULT_LAYERS.to_vec());
    let model = match a.model {
        ModelKind::Lr => Model::Linear(train_logistic(&data, &cfg)?),
        ModelKind::Mlp => Model::Mlp(train_mlp(&data, &cfg, &layers)?),
    };
    let mut out = Outputs::new();
    out.add(a.out.join("model.json"), format!("{}\n", model.to_json()?).into_bytes());
    let config = json!({
        "data": a.data,
        "model": format!("{:?}", a.model).to_lowercase(),
        "layers": layers,
        "training": cfg,
    });
    out.commit(&a.out.join("manifest.json"), "train", config, &[a.seed])
}

fn recourse(a: RecourseArgs) -> Result<()> {
    let model = Model::load(&a.model)?;
    let (data, schema) = load_data(&a.data, a.schema.as_deref())?;
    let mut cfg: RecourseConfig = match &a.config {
        Some(p) => read_json(p)?,
        None => RecourseConfig::default(),
    };
    if let Some(l) = a.lambda {
        cfg.lambda = l;
    }
    let delta_max = a.delta_max.unwrap_or(match cfg.perturbation {
        PerturbationSet::NormBall { delta_max, .. } | PerturbationSet::Box { delta_max, .. } => delta_max,
    });
    if a.norm.is_some() || a.delta_max.is_some() {
        cfg.perturbation = match a.norm {
            Some(NormArg::L1) => PerturbationSet::NormBall { p: 1.0, delta_max },
            Some(NormArg::Linf) => PerturbationSet::NormBall {
                p: f64::INFINITY,
                delta_max,
            },
            Some(NormArg::Box) => PerturbationSet::symmetric_box(delta_max),
            Some(NormArg::L2) => PerturbationSet::l2(delta_max),
            None => match cfg.perturbation {
                PerturbationSet::NormBall { p, .. } => PerturbationSet::NormBall { p, delta_max },
                PerturbationSet::Box { .. } => PerturbationSet::symmetric_box(delta_max),
            },
        };
    }
    if cfg.actionability.features.is_empty() {
        cfg.actionability = schema.actionability(&crate::dataset::Standardizer::identity(data.dim()));
    }
    let cost = match &a.comparisons {
        Some(p) => fit_bradley_terry(&PairwiseComparisonSet::read_csv(p)?)?,
        None => CostModel::L1,
    };
    let grid = GridConfig::default();
    let surrogate = SurrogateConfig {
        seed: a.seed,
        ..SurrogateConfig::default()
    };
    let linear = || model.as_linear().ok_or_else(|| Error::InvalidConfig("this method needs a linear model".into()));

    let mut lines = String::new();
    let mut produced = 0;
    let mut errored = 0;
    let rows: Vec<usize> = (0..data.len())
        .filter(|&i| model.predict_label(&data.features[i]).map(|l| l == 0).unwrap_or(false))
        .take(a.limit.unwrap_or(usize::MAX))
        .collect();
    for &i in &rows {
        let x = &data.features[i];
        let res = match a.method {
            MethodArg::Cfe => cfe(&model, x, &cost, &cfg),
            MethodArg::Roar => roar(linear()?, x, &cost, &cfg),
            MethodArg::Ar => ar_grid(linear()?, x, &cost, &cfg.actionability, &grid),
            MethodArg::RoarLime => roar_lime(&model, x, &cost, &cfg, &surrogate),
            MethodArg::ArLime => ar_lime(&model, x, &cost, &grid, &cfg.actionability, &surrogate),
        };
        let line = match res {
            Ok(r) => {
                produced += 1;
                let mut v = serde_json::to_value(&r)?;
                v["row"] = json!(i + 1);
                v
            }
            // per-row numerical failures are recorded, not fatal
            Err(e) if e.is_numerical() || matches!(e, Error::NoRecourse) => {
                errored += 1;
                json!({"row": i + 1, "error": e.to_string()})
            }
            Err(e) => return Err(e),
        };
        lines.push_str(&serde_json::to_string(&line)?);
        lines.push('\n');
    }
    if produced == 0 && errored > 0 {
        eprintln!("warning: no recourse produced for {errored} rows");
    }
    let mut out = Outputs::new();
    out.add(a.out.join("recourses.jsonl"), lines.into_bytes());
    let config = json!({
        "model": a.model,
        "data": a.data,
        "method": format!("{:?}", a.method),
        "recourse": cfg,
        "cost": cost,
        "rows": rows.len(),
        "produced": produced,
        "errored": errored,
    });
    out.commit(&a.out.join("manifest.json"), "recourse", config, &[a.seed])
}

fn apply_overrides(spec: &mut ExperimentSpec, o: &Overrides) -> Result<()> {
    if let Some(d) = o.delta_max {
        spec.delta_max = d;
    }
    if let Some(l) = &o.lambda {
        spec.lambda = serde_json::from_value(if l == "auto" {
            json!("auto")
        } else {
            json!(l.parse::<f64>().map_err(|_| Error::InvalidConfig(format!("bad --lambda `{l}`")))?)
        })?;
    }
    if let Some(s) = o.seed {
        spec.seeds = vec![s];
    }
    if let Some(f) = o.folds {
        spec.folds = f;
    }
    spec.validate()
}

fn evaluate(a: EvaluateArgs) -> Result<()> {
    let mut spec = ExperimentSpec::load(&a.spec)?;
    apply_overrides(&mut spec, &a.overrides)?;
    let report = run_shift_experiment(&spec)?;
    let mut out = Outputs::new();
    out.add_json(a.out.join("report.json"), &report)?;
    out.commit(&a.out.join("manifest.json"), "evaluate", serde_json::to_value(&spec)?, &spec.seeds)
}

fn run_sweep(a: SweepArgs) -> Result<()> {
    let mut spec = ExperimentSpec::load(&a.spec)?;
    apply_overrides(&mut spec, &a.overrides)?;
    let grid: Vec<ShiftSpec> = a
        .betas
        .iter()
        .flat_map(|&beta| a.alphas.iter().map(move |&alpha| ShiftSpec { alpha, beta }))
        .collect();
    let points = sweep(&spec, &grid)?;
    let mut out = Outputs::new();
    out.add_json(a.out.join("sweep.json"), &points)?;
    out.add(a.out.join("plotdata.csv"), sweep_csv(&points)?.into_bytes());
    let config = json!({"spec": spec, "alphas": a.alphas, "betas": a.betas});
    out.commit(&a.out.join("manifest.json"), "sweep", config, &spec.seeds)
}

#[derive(serde::Deserialize)]
struct CaseFile {
    name: String,
    w: Vec<f64>,
    delta: Vec<f64>,
    mu: Vec<f64>,
    sigma: Vec<Vec<f64>>,
}

fn verify_theory(a: TheoryArgs) -> Result<()> {
    if a.samples == 0 {
        return Err(Error::InvalidConfig("--samples must be >= 1".into()));
    }
    let cases: Vec<(String, GaussianTheoryInput)> = if a.cases == "default" {
        default_cases()
    } else {
        read_json::<Vec<CaseFile>>(Path::new(&a.cases))?
            .into_iter()
            .map(|c| Ok((c.name, GaussianTheoryInput::new(c.w, c.delta, c.mu, c.sigma)?)))
            .collect::<Result<_>>()?
    };
    let reports = cases
        .iter()
        .enumerate()
        .map(|(i, (name, input))| verify_case(name, input, a.samples, crate::math::sub_seed(a.seed, i as u64)))
        .collect::<Result<Vec<_>>>()?;
    let mut out = Outputs::new();
    out.add_json(a.out.clone(), &json!({ "cases": reports }))?;
    let mut manifest = a.out.clone().into_os_string();
    manifest.push(".manifest.json");
    let config = json!({"cases": a.cases, "samples": a.samples});
    out.commit(Path::new(&manifest), "verify-theory", config, &[a.seed])
}

