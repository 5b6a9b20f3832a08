//! Synthetic Gaussian data, class-0 shifts, CSV ingestion and k-fold splits.

use std::path::Path;

use nalgebra::{DMatrix, DVector};
use rand::seq::SliceRandom;
use rand::Rng as _;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::dataset::{Dataset, Standardizer};
use crate::error::{check_dim, check_finite, Error, Result};
use crate::math::rng;
use crate::recourse::{ActionabilitySpec, FeatureAction};

/// Class-conditional normal `N(μ, Σ)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawGaussian")]
pub struct GaussianClassSpec {
    pub mean: Vec<f64>,
    pub cov: Vec<Vec<f64>>,
    #[serde(skip)]
    chol: Vec<Vec<f64>>,
}

#[derive(Deserialize)]
struct RawGaussian {
    mean: Vec<f64>,
    cov: Vec<Vec<f64>>,
}

impl TryFrom<RawGaussian> for GaussianClassSpec {
    type Error = Error;
    fn try_from(raw: RawGaussian) -> Result<Self> {
        Self::new(raw.mean, raw.cov)
    }
}

impl GaussianClassSpec {
    pub fn new(mean: Vec<f64>, cov: Vec<Vec<f64>>) -> Result<Self> {
        let d = mean.len();
        check_finite(&mean, "mean")?;
        check_dim(d, cov.len())?;
        for row in &cov {
            check_dim(d, row.len())?;
            check_finite(row, "covariance")?;
        }
        for i in 0..d {
            for j in 0..i {
                if (cov[i][j] - cov[j][i]).abs() > 1e-12 * (1.0 + cov[i][j].abs()) {
                    return Err(Error::NotPositiveDefinite);
                }
            }
        }
        let m = DMatrix::from_fn(d, d, |i, j| cov[i][j]);
        let l = m.cholesky().ok_or(Error::NotPositiveDefinite)?.l();
        let chol = (0..d).map(|i| (0..d).map(|j| l[(i, j)]).collect()).collect();
        Ok(Self { mean, cov, chol })
    }

    /// `N(μ, s·I)`.
    pub fn isotropic(mean: Vec<f64>, variance: f64) -> Result<Self> {
        let d = mean.len();
        let cov = (0..d).map(|i| (0..d).map(|j| if i == j { variance } else { 0.0 }).collect()).collect();
        Self::new(mean, cov)
    }

    pub fn dim(&self) -> usize {
        self.mean.len()
    }

    /// `μ + L z` for a standard normal draw `z`.
    pub fn transform(&self, z: &[f64]) -> Vec<f64> {
        self.mean
            .iter()
            .zip(&self.chol)
            .map(|(m, row)| m + row.iter().zip(z).map(|(a, b)| a * b).sum::<f64>())
            .collect()
    }

    pub fn cov_matrix(&self) -> DMatrix<f64> {
        let d = self.dim();
        DMatrix::from_fn(d, d, |i, j| self.cov[i][j])
    }

    pub fn mean_vector(&self) -> DVector<f64> {
        DVector::from_column_slice(&self.mean)
    }
}

/// Mean shift `α` along the first coordinate and variance inflation `1 + β`,
/// both applied to class 0.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ShiftSpec {
    pub alpha: f64,
    pub beta: f64,
}

impl ShiftSpec {
    pub fn validate(&self) -> Result<()> {
        if !(self.alpha.is_finite() && self.beta.is_finite() && 1.0 + self.beta > 0.0) {
            return Err(Error::InvalidConfig("shift needs finite alpha and 1 + beta > 0".into()));
        }
        Ok(())
    }
}

pub fn apply_shift(class0: &GaussianClassSpec, shift: &ShiftSpec) -> Result<GaussianClassSpec> {
    shift.validate()?;
    let mut mean = class0.mean.clone();
    if let Some(m) = mean.first_mut() {
        *m += shift.alpha;
    }
    let cov = class0
        .cov
        .iter()
        .map(|row| row.iter().map(|v| (1.0 + shift.beta) * v).collect())
        .collect();
    GaussianClassSpec::new(mean, cov)
}

/// Labels and standard normal draws shared by a dataset and its shifted twin.
struct Latent {
    labels: Vec<u8>,
    noise: Vec<Vec<f64>>,
}

fn draw_latent(n: usize, d: usize, p1: f64, seed: u64) -> Latent {
    let mut r = rng(seed);
    let mut labels = Vec::with_capacity(n);
    let mut noise = Vec::with_capacity(n);
    for _ in 0..n {
        labels.push(u8::from(r.random_bool(p1)));
        noise.push((0..d).map(|_| StandardNormal.sample(&mut r)).collect());
    }
    Latent { labels, noise }
}

fn realize(latent: &Latent, class0: &GaussianClassSpec, class1: &GaussianClassSpec) -> Result<Dataset> {
    let features = latent
        .labels
        .iter()
        .zip(&latent.noise)
        .map(|(&y, z)| if y == 1 { class1.transform(z) } else { class0.transform(z) })
        .collect();
    let names = (0..class0.dim()).map(|i| format!("x{i}")).collect();
    Dataset::new(names, features, latent.labels.clone())
}

fn check_specs(n: usize, class0: &GaussianClassSpec, class1: &GaussianClassSpec, p1: f64) -> Result<()> {
    if n < 2 {
        return Err(Error::InvalidConfig("need at least 2 samples".into()));
    }
    if !(0.0..=1.0).contains(&p1) {
        return Err(Error::InvalidConfig("class-1 probability must lie in [0, 1]".into()));
    }
    check_dim(class0.dim(), class1.dim())
}

/// `n` draws with `y ~ Bernoulli(0.5)` and `x | y ~ N(μ_y, Σ_y)`.
pub fn generate_synthetic(n: usize, class0: &GaussianClassSpec, class1: &GaussianClassSpec, seed: u64) -> Result<Dataset> {
    generate_synthetic_with(n, class0, class1, 0.5, seed)
}

pub fn generate_synthetic_with(n: usize, class0: &GaussianClassSpec, class1: &GaussianClassSpec, p1: f64, seed: u64) -> Result<Dataset> {
    check_specs(n, class0, class1, p1)?;
    realize(&draw_latent(n, class0.dim(), p1, seed), class0, class1)
}

/// An unshifted dataset and its class-0-shifted counterpart built from the
/// same labels and noise, so row `i` of both describes the same draw.
pub fn generate_shifted_pair(
    n: usize,
    class0: &GaussianClassSpec,
    class1: &GaussianClassSpec,
    shift: &ShiftSpec,
    p1: f64,
    seed: u64,
) -> Result<(Dataset, Dataset)> {
    check_specs(n, class0, class1, p1)?;
    let shifted = apply_shift(class0, shift)?;
    let latent = draw_latent(n, class0.dim(), p1, seed);
    Ok((realize(&latent, class0, class1)?, realize(&latent, &shifted, class1)?))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SchemaFeature {
    pub name: String,
    #[serde(default = "yes")]
    pub mutable: bool,
    #[serde(default)]
    pub min: Option<f64>,
    #[serde(default)]
    pub max: Option<f64>,
}

fn yes() -> bool {
    true
}

/// JSON sidecar describing a CSV file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetSchema {
    pub features: Vec<SchemaFeature>,
    pub label: String,
    /// Scaling applied on load, when present.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub standardization: Option<Standardizer>,
}

impl DatasetSchema {
    pub fn load(path: &Path) -> Result<Self> {
        let schema: Self = serde_json::from_str(&std::fs::read_to_string(path)?)?;
        if schema.features.is_empty() {
            return Err(Error::InvalidConfig("schema lists no features".into()));
        }
        if let Some(s) = &schema.standardization {
            check_dim(schema.features.len(), s.mean.len())?;
            check_dim(schema.features.len(), s.std.len())?;
            if s.std.iter().any(|v| !(*v > 0.0)) {
                return Err(Error::InvalidConfig("standardization std must be > 0".into()));
            }
        }
        Ok(schema)
    }

    pub fn feature_names(&self) -> Vec<String> {
        self.features.iter().map(|f| f.name.clone()).collect()
    }

    /// Mutability and bounds, with bounds mapped through `scaler`.
    pub fn actionability(&self, scaler: &Standardizer) -> ActionabilitySpec {
        let map = |v: Option<f64>, i: usize| v.map(|b| (b - scaler.mean[i]) / scaler.std[i]);
        ActionabilitySpec {
            features: self
                .features
                .iter()
                .enumerate()
                .map(|(i, f)| FeatureAction {
                    mutable: f.mutable,
                    min: map(f.min, i),
                    max: map(f.max, i),
                })
                .collect(),
        }
    }
}

/// Writes `data` with a header of feature names followed by `label`.
pub fn write_csv(data: &Dataset, writer: impl std::io::Write) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(data.feature_names.iter().map(String::as_str).chain(["label"]))?;
    for (x, y) in data.features.iter().zip(&data.labels) {
        w.write_record(x.iter().map(|v| v.to_string()).chain([y.to_string()]))?;
    }
    w.flush()?;
    Ok(())
}

impl DatasetSchema {
    /// Schema for a CSV whose columns are all mutable features except `label`.
    pub fn infer(path: &Path) -> Result<Self> {
        let mut rdr = csv::Reader::from_path(path)?;
        let headers = rdr.headers()?.clone();
        if headers.is_empty() {
            return Err(Error::EmptyFile);
        }
        if !headers.iter().any(|h| h.trim() == "label") {
            return Err(Error::MissingColumn("label".into()));
        }
        let features = headers
            .iter()
            .map(str::trim)
            .filter(|h| *h != "label")
            .map(|name| SchemaFeature {
                name: name.to_string(),
                mutable: true,
                min: None,
                max: None,
            })
            .collect();
        Ok(Self {
            features,
            label: "label".into(),
            standardization: None,
        })
    }
}

/// Reads a headered CSV; data row numbers in errors start at 1.
pub fn load_csv(path: &Path, schema: &DatasetSchema) -> Result<Dataset> {
    load_csv_from(std::fs::File::open(path)?, schema)
}

pub fn load_csv_from(reader: impl std::io::Read, schema: &DatasetSchema) -> Result<Dataset> {
    let mut rdr = csv::Reader::from_reader(reader);
    let headers = rdr.headers()?.clone();
    if headers.is_empty() {
        return Err(Error::EmptyFile);
    }
    let col = |name: &str| -> Result<usize> {
        headers
            .iter()
            .position(|h| h.trim() == name)
            .ok_or_else(|| Error::MissingColumn(name.to_string()))
    };
    let feature_cols: Vec<usize> = schema.features.iter().map(|f| col(&f.name)).collect::<Result<_>>()?;
    let label_col = col(&schema.label)?;

    let mut features = Vec::new();
    let mut labels = Vec::new();
    for (i, record) in rdr.records().enumerate() {
        let record = record?;
        let row = i + 1;
        let parse = |c: usize, name: &str| -> Result<f64> {
            let raw = record.get(c).unwrap_or("").trim();
            raw.parse::<f64>()
                .ok()
                .filter(|v| v.is_finite())
                .ok_or_else(|| Error::Parse {
                    row,
                    column: name.to_string(),
                    value: raw.to_string(),
                })
        };
        let x = feature_cols
            .iter()
            .zip(&schema.features)
            .map(|(&c, f)| parse(c, &f.name))
            .collect::<Result<Vec<_>>>()?;
        let y = match parse(label_col, &schema.label)? {
            v if v == 0.0 => 0,
            v if v == 1.0 => 1,
            _ => {
                return Err(Error::Parse {
                    row,
                    column: schema.label.clone(),
                    value: record.get(label_col).unwrap_or("").to_string(),
                })
            }
        };
        features.push(x);
        labels.push(y);
    }
    if features.is_empty() {
        return Err(Error::EmptyFile);
    }
    let data = Dataset::new(schema.feature_names(), features, labels)?;
    Ok(match &schema.standardization {
        Some(s) => s.transform_dataset(&data),
        None => data,
    })
}

/// One (train, holdout) index pair per fold. Holdouts partition `0..n`,
/// and fold sizes differ by at most one (larger folds first).
pub fn kfold_split(n: usize, k: usize, seed: u64) -> Result<Vec<(Vec<usize>, Vec<usize>)>> {
    if k < 2 || k > n {
        return Err(Error::InvalidConfig(format!("cannot split {n} samples into {k} folds")));
    }
    let mut idx: Vec<usize> = (0..n).collect();
    idx.shuffle(&mut rng(seed));
    let mut folds = Vec::with_capacity(k);
    let mut start = 0;
    for f in 0..k {
        let size = n / k + usize::from(f < n % k);
        let holdout = idx[start..start + size].to_vec();
        let train = idx[..start].iter().chain(&idx[start + size..]).copied().collect();
        folds.push((train, holdout));
        start += size;
    }
    Ok(folds)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::math::mean_std;

    fn defaults() -> (GaussianClassSpec, GaussianClassSpec) {
        (
            GaussianClassSpec::isotropic(vec![-2.0, -2.0], 0.5).unwrap(),
            GaussianClassSpec::isotropic(vec![2.0, 2.0], 0.5).unwrap(),
        )
    }

    fn class_moments(data: &Dataset, y: u8) -> (Vec<f64>, Vec<Vec<f64>>) {
        let rows: Vec<&Vec<f64>> = data.features.iter().zip(&data.labels).filter(|(_, l)| **l == y).map(|(x, _)| x).collect();
        let d = data.dim();
        let n = rows.len() as f64;
        let mean: Vec<f64> = (0..d).map(|j| rows.iter().map(|r| r[j]).sum::<f64>() / n).collect();
        let cov = (0..d)
            .map(|a| (0..d).map(|b| rows.iter().map(|r| (r[a] - mean[a]) * (r[b] - mean[b])).sum::<f64>() / n).collect())
            .collect();
        (mean, cov)
    }

    #[test]
    fn default_class_means() {
        let (c0, c1) = defaults();
        let data = generate_synthetic(1000, &c0, &c1, 1).unwrap();
        for (y, mu) in [(0, -2.0), (1, 2.0)] {
            let (mean, _) = class_moments(&data, y);
            assert!(mean.iter().all(|m| (m - mu).abs() < 0.1), "{mean:?}");
        }
    }

    #[test]
    fn large_sample_moments() {
        let c0 = GaussianClassSpec::new(vec![1.0, -1.0], vec![vec![1.0, 0.3], vec![0.3, 0.5]]).unwrap();
        let c1 = GaussianClassSpec::isotropic(vec![0.0, 2.0], 2.0).unwrap();
        let data = generate_synthetic(100_000, &c0, &c1, 9).unwrap();
        for (y, spec) in [(0, &c0), (1, &c1)] {
            let (mean, cov) = class_moments(&data, y);
            for j in 0..2 {
                assert!((mean[j] - spec.mean[j]).abs() < 0.02);
                for k in 0..2 {
                    assert!((cov[j][k] - spec.cov[j][k]).abs() < 0.05);
                }
            }
        }
        let ones = data.labels.iter().filter(|y| **y == 1).count() as f64 / 1e5;
        assert!((ones - 0.5).abs() < 0.01);
    }

    #[test]
    fn deterministic_per_seed() {
        let (c0, c1) = defaults();
        assert_eq!(generate_synthetic(2, &c0, &c1, 3).unwrap(), generate_synthetic(2, &c0, &c1, 3).unwrap());
        assert!(generate_synthetic(1, &c0, &c1, 3).is_err());
    }

    #[test]
    fn rejects_indefinite_covariance() {
        let err = GaussianClassSpec::new(vec![0.0, 0.0], vec![vec![1.0, 0.0], vec![0.0, -1.0]]);
        assert!(matches!(err, Err(Error::NotPositiveDefinite)));
        let asym = GaussianClassSpec::new(vec![0.0, 0.0], vec![vec![1.0, 0.5], vec![0.0, 1.0]]);
        assert!(matches!(asym, Err(Error::NotPositiveDefinite)));
    }

    #[test]
    fn shift_examples() {
        let (c0, _) = defaults();
        let s = apply_shift(&c0, &ShiftSpec { alpha: 1.5, beta: 0.0 }).unwrap();
        assert_eq!(s.mean, vec![-0.5, -2.0]);
        let s = apply_shift(&c0, &ShiftSpec { alpha: 0.0, beta: 3.0 }).unwrap();
        assert_eq!(s.cov, vec![vec![2.0, 0.0], vec![0.0, 2.0]]);
        assert_eq!(apply_shift(&c0, &ShiftSpec::default()).unwrap(), c0);
        assert!(apply_shift(&c0, &ShiftSpec { alpha: 0.0, beta: -1.0 }).is_err());
    }

    #[test]
    fn shifts_compose() {
        let c0 = GaussianClassSpec::new(vec![0.5, 1.0, -1.0], vec![vec![1.0, 0.2, 0.0], vec![0.2, 1.0, 0.1], vec![0.0, 0.1, 0.7]]).unwrap();
        let a = apply_shift(&apply_shift(&c0, &ShiftSpec { alpha: 0.7, beta: 0.0 }).unwrap(), &ShiftSpec { alpha: 0.0, beta: 1.5 }).unwrap();
        let b = apply_shift(&c0, &ShiftSpec { alpha: 0.7, beta: 1.5 }).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn shifted_pair_shares_draws() {
        let (c0, c1) = defaults();
        let (d1, d2) = generate_shifted_pair(200, &c0, &c1, &ShiftSpec { alpha: 1.0, beta: 0.0 }, 0.5, 4).unwrap();
        assert_eq!(d1.labels, d2.labels);
        for ((a, b), y) in d1.features.iter().zip(&d2.features).zip(&d1.labels) {
            let expected = if *y == 0 { a[0] + 1.0 } else { a[0] };
            assert!((b[0] - expected).abs() < 1e-12);
            assert_eq!(a[1], b[1]);
        }
        let (plain, _) = generate_shifted_pair(200, &c0, &c1, &ShiftSpec::default(), 0.5, 4).unwrap();
        assert_eq!(plain, generate_synthetic(200, &c0, &c1, 4).unwrap());
    }

    fn schema() -> DatasetSchema {
        DatasetSchema {
            features: vec![
                SchemaFeature {
                    name: "age".into(),
                    mutable: false,
                    min: None,
                    max: None,
                },
                SchemaFeature {
                    name: "income".into(),
                    mutable: true,
                    min: Some(0.0),
                    max: None,
                },
            ],
            label: "y".into(),
            standardization: None,
        }
    }

    #[test]
    fn csv_parsing() {
        let data = load_csv_from("income,age,y\n10,30,0\n20,40,1\n".as_bytes(), &schema()).unwrap();
        assert_eq!(data.len(), 2);
        assert_eq!(data.features[1], vec![40.0, 20.0]);
        assert_eq!(data.labels, vec![0, 1]);

        let err = load_csv_from("income,age\n10,30\n".as_bytes(), &schema()).unwrap_err();
        assert!(err.to_string().contains("missing column"));

        let err = load_csv_from("income,age,y\n10,30,0\nabc,40,1\n".as_bytes(), &schema()).unwrap_err();
        assert!(matches!(err, Error::Parse { row: 2, .. }), "{err}");

        let err = load_csv_from("income,age,y\n10,30,2\n".as_bytes(), &schema()).unwrap_err();
        assert!(matches!(err, Error::Parse { row: 1, .. }));

        assert!(matches!(load_csv_from("".as_bytes(), &schema()), Err(Error::EmptyFile)));
        assert!(matches!(load_csv_from("income,age,y\n".as_bytes(), &schema()), Err(Error::EmptyFile)));
    }

    #[test]
    fn csv_standardization_and_bounds() {
        let mut s = schema();
        let scaler = Standardizer {
            mean: vec![35.0, 10.0],
            std: vec![5.0, 2.0],
        };
        s.standardization = Some(scaler.clone());
        let data = load_csv_from("income,age,y\n10,30,0\n".as_bytes(), &s).unwrap();
        assert_eq!(data.features[0], vec![-1.0, 0.0]);
        let spec = s.actionability(&scaler);
        assert!(!spec.features[0].mutable);
        assert_eq!(spec.features[1].min, Some(-5.0));
        let json = serde_json::to_string(&s).unwrap();
        assert_eq!(serde_json::from_str::<DatasetSchema>(&json).unwrap(), s);
    }

    #[test]
    fn fold_sizes() {
        let folds = kfold_split(1000, 5, 0).unwrap();
        assert!(folds.iter().all(|(tr, ho)| ho.len() == 200 && tr.len() == 800));
        let folds = kfold_split(7, 5, 0).unwrap();
        let sizes: Vec<usize> = folds.iter().map(|(_, h)| h.len()).collect();
        assert_eq!(sizes, vec![2, 2, 1, 1, 1]);
        let mut all: Vec<usize> = folds.iter().flat_map(|(_, h)| h.clone()).collect();
        all.sort_unstable();
        assert_eq!(all, (0..7).collect::<Vec<_>>());
        for (tr, ho) in &folds {
            assert!(tr.iter().all(|i| !ho.contains(i)));
            assert_eq!(tr.len() + ho.len(), 7);
        }
        assert_eq!(kfold_split(50, 5, 8).unwrap(), kfold_split(50, 5, 8).unwrap());
        assert!(kfold_split(3, 5, 0).is_err());
    }

    #[test]
    fn std_of_standardized_features_is_one() {
        let (c0, c1) = defaults();
        let data = generate_synthetic(500, &c0, &c1, 2).unwrap();
        let z = Standardizer::fit(&data).unwrap().transform_dataset(&data);
        let col: Vec<f64> = z.features.iter().map(|r| r[0]).collect();
        let (m, s) = mean_std(&col);
        assert!(m.abs() < 1e-12 && (s - 1.0).abs() < 1e-12);
    }

    #[test]
    fn csv_round_trip_with_inferred_schema() {
        let (c0, c1) = defaults();
        let data = generate_synthetic(50, &c0, &c1, 4).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("d.csv");
        write_csv(&data, std::fs::File::create(&path).unwrap()).unwrap();
        let schema = DatasetSchema::infer(&path).unwrap();
        assert_eq!(schema.feature_names(), vec!["x0", "x1"]);
        assert_eq!(load_csv(&path, &schema).unwrap(), data);
    }
}
