//! Labeled tabular data and per-feature standardization.

use std::ops::Deref;

use serde::{Deserialize, Serialize};

use crate::error::{check_dim, check_finite, Error, Result};

/// A finite point in feature space.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<f64>", into = "Vec<f64>")]
pub struct FeatureVector(Vec<f64>);

impl FeatureVector {
    pub fn new(values: Vec<f64>) -> Result<Self> {
        check_finite(&values, "feature vector")?;
        Ok(Self(values))
    }

    pub fn dim(&self) -> usize {
        self.0.len()
    }

    pub fn into_inner(self) -> Vec<f64> {
        self.0
    }
}

impl Deref for FeatureVector {
    type Target = [f64];

    fn deref(&self) -> &[f64] {
        &self.0
    }
}

impl TryFrom<Vec<f64>> for FeatureVector {
    type Error = Error;

    fn try_from(values: Vec<f64>) -> Result<Self> {
        Self::new(values)
    }
}

impl From<FeatureVector> for Vec<f64> {
    fn from(v: FeatureVector) -> Self {
        v.0
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Dataset {
    pub feature_names: Vec<String>,
    pub features: Vec<Vec<f64>>,
    pub labels: Vec<u8>,
}

impl Dataset {
    pub fn new(feature_names: Vec<String>, features: Vec<Vec<f64>>, labels: Vec<u8>) -> Result<Self> {
        check_dim(features.len(), labels.len())?;
        let d = feature_names.len();
        for row in &features {
            check_dim(d, row.len())?;
            check_finite(row, "dataset features")?;
        }
        if labels.iter().any(|&y| y > 1) {
            return Err(Error::InvalidConfig("labels must be 0 or 1".into()));
        }
        Ok(Self {
            feature_names,
            features,
            labels,
        })
    }

    /// Dataset with generated names `x0, x1, ...`.
    pub fn unnamed(features: Vec<Vec<f64>>, labels: Vec<u8>) -> Result<Self> {
        let d = features.first().map_or(0, Vec::len);
        Self::new((0..d).map(|i| format!("x{i}")).collect(), features, labels)
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.feature_names.len()
    }

    pub fn subset(&self, indices: &[usize]) -> Dataset {
        Dataset {
            feature_names: self.feature_names.clone(),
            features: indices.iter().map(|&i| self.features[i].clone()).collect(),
            labels: indices.iter().map(|&i| self.labels[i]).collect(),
        }
    }

    /// Checks the preconditions shared by all trainers.
    pub(crate) fn check_trainable(&self) -> Result<()> {
        if self.is_empty() {
            return Err(Error::EmptyDataset);
        }
        let positives = self.labels.iter().filter(|&&y| y == 1).count();
        if positives == 0 || positives == self.len() {
            return Err(Error::DegenerateLabels);
        }
        for row in &self.features {
            check_finite(row, "training features")?;
        }
        Ok(())
    }

    /// Largest pairwise Euclidean distance between rows.
    pub fn diameter(&self) -> f64 {
        let mut best = 0.0f64;
        for (i, a) in self.features.iter().enumerate() {
            for b in &self.features[i + 1..] {
                let d2: f64 = a.iter().zip(b).map(|(x, y)| (x - y).powi(2)).sum();
                best = best.max(d2);
            }
        }
        best.sqrt()
    }

    pub fn mean(&self) -> Vec<f64> {
        let mut mean = vec![0.0; self.dim()];
        for row in &self.features {
            for (m, v) in mean.iter_mut().zip(row) {
                *m += v;
            }
        }
        let n = self.len().max(1) as f64;
        mean.iter_mut().for_each(|m| *m /= n);
        mean
    }
}

/// Per-feature affine scaling to zero mean and unit variance.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Standardizer {
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
}

impl Standardizer {
    /// Constant columns keep a unit scale so the map stays invertible.
    pub fn fit(data: &Dataset) -> Result<Self> {
        if data.is_empty() {
            return Err(Error::EmptyDataset);
        }
        let mean = data.mean();
        let mut var = vec![0.0; data.dim()];
        for row in &data.features {
            for ((v, x), m) in var.iter_mut().zip(row).zip(&mean) {
                *v += (x - m).powi(2);
            }
        }
        let n = data.len() as f64;
        let std = var
            .into_iter()
            .map(|v| {
                let s = (v / n).sqrt();
                if s > 1e-12 {
                    s
                } else {
                    1.0
                }
            })
            .collect();
        Ok(Self { mean, std })
    }

    pub fn identity(d: usize) -> Self {
        Self {
            mean: vec![0.0; d],
            std: vec![1.0; d],
        }
    }

    pub fn transform(&self, x: &[f64]) -> Vec<f64> {
        x.iter()
            .zip(&self.mean)
            .zip(&self.std)
            .map(|((v, m), s)| (v - m) / s)
            .collect()
    }

    pub fn inverse(&self, z: &[f64]) -> Vec<f64> {
        z.iter()
            .zip(&self.mean)
            .zip(&self.std)
            .map(|((v, m), s)| v * s + m)
            .collect()
    }

    pub fn transform_dataset(&self, data: &Dataset) -> Dataset {
        Dataset {
            feature_names: data.feature_names.clone(),
            features: data.features.iter().map(|r| self.transform(r)).collect(),
            labels: data.labels.clone(),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn feature_vector_rejects_nan() {
        assert!(FeatureVector::new(vec![1.0, f64::NAN]).is_err());
        assert!(serde_json::from_str::<FeatureVector>("[1.0, 2.0]").is_ok());
    }

    #[test]
    fn single_class_is_degenerate() {
        let d = Dataset::unnamed(vec![vec![0.0], vec![1.0]], vec![0, 0]).unwrap();
        assert!(matches!(d.check_trainable(), Err(Error::DegenerateLabels)));
    }

    #[test]
    fn diameter_of_unit_square() {
        let d = Dataset::unnamed(
            vec![vec![0.0, 0.0], vec![1.0, 0.0], vec![0.0, 1.0], vec![1.0, 1.0]],
            vec![0, 0, 1, 1],
        )
        .unwrap();
        assert!((d.diameter() - 2f64.sqrt()).abs() < 1e-15);
    }

    proptest! {
        #[test]
        fn standardization_round_trip(rows in prop::collection::vec(prop::collection::vec(-1e3f64..1e3, 3), 2..20)) {
            let labels = vec![0; rows.len()];
            let data = Dataset::unnamed(rows.clone(), labels).unwrap();
            let s = Standardizer::fit(&data).unwrap();
            for r in &rows {
                let back = s.inverse(&s.transform(r));
                for (a, b) in back.iter().zip(r) {
                    prop_assert!((a - b).abs() <= 1e-12 * (1.0 + b.abs()));
                }
            }
        }
    }
}
