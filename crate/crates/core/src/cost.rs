//! Recourse cost functions.
//!
//! Two costs are supported: plain ℓ1 distance and a feature-weighted ℓ1
//! distance whose weights come from a Bradley–Terry fit of pairwise
//! feature comparisons ("PFC"). For PFC the cost of moving feature `i` by
//! `Δ` is `weight_i · |Δ|`, where the weights are the fitted strengths
//! shifted by their minimum. The weighted-ℓ1 form is an interpretation:
//! strengths only fix a per-feature price, not how prices combine.

use std::collections::BTreeMap;
use std::io::{Read, Write};
use std::path::Path;

use rand::Rng as _;
use serde::{Deserialize, Serialize};

use crate::error::{check_dim, check_finite, Error, Result};
use crate::math::rng;

/// Convergence threshold on the relative change of any strength.
const BT_TOLERANCE: f64 = 1e-8;
const BT_MAX_ITERATIONS: usize = 100_000;
/// Largest allowed ratio between two strengths; the maximum-likelihood
/// estimate diverges when one feature wins or loses every comparison.
const BT_MAX_RATIO: f64 = 1e6;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "variant", rename_all = "lowercase")]
pub enum CostModel {
    L1,
    Pfc { weights: Vec<f64> },
}

impl CostModel {
    pub fn pfc(weights: Vec<f64>) -> Result<Self> {
        check_finite(&weights, "cost weights")?;
        if weights.iter().any(|&w| w < 0.0) {
            return Err(Error::InvalidConfig("cost weights must be non-negative".into()));
        }
        Ok(CostModel::Pfc { weights })
    }

    /// Price per unit of movement along feature `i`.
    pub fn feature_weight(&self, i: usize) -> f64 {
        match self {
            CostModel::L1 => 1.0,
            CostModel::Pfc { weights } => weights[i],
        }
    }

    pub fn check_dim(&self, d: usize) -> Result<()> {
        match self {
            CostModel::L1 => Ok(()),
            CostModel::Pfc { weights } => check_dim(weights.len(), d),
        }
    }

    pub fn cost(&self, x: &[f64], x2: &[f64]) -> Result<f64> {
        check_dim(x.len(), x2.len())?;
        self.check_dim(x.len())?;
        Ok(x.iter()
            .zip(x2)
            .enumerate()
            .map(|(i, (a, b))| self.feature_weight(i) * (b - a).abs())
            .sum())
    }

    /// Subgradient of `cost(x, ·)` at `x2`, taking 0 where `x2_i = x_i`.
    pub fn subgradient(&self, x: &[f64], x2: &[f64]) -> Vec<f64> {
        x.iter()
            .zip(x2)
            .enumerate()
            .map(|(i, (a, b))| {
                let diff = b - a;
                if diff == 0.0 {
                    0.0
                } else {
                    self.feature_weight(i) * diff.signum()
                }
            })
            .collect()
    }
}

/// Outcome of repeated comparisons between two features.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct PairComparison {
    pub feature_i: usize,
    pub feature_j: usize,
    pub wins_i: u32,
    pub total: u32,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PairwiseComparisonSet {
    n_features: usize,
    pairs: Vec<PairComparison>,
}

impl PairwiseComparisonSet {
    pub fn new(n_features: usize, pairs: Vec<PairComparison>) -> Result<Self> {
        for p in &pairs {
            if p.feature_i == p.feature_j || p.feature_i >= n_features || p.feature_j >= n_features {
                return Err(Error::InvalidConfig(format!(
                    "invalid feature pair ({}, {})",
                    p.feature_i, p.feature_j
                )));
            }
            if p.total == 0 || p.wins_i > p.total {
                return Err(Error::InvalidConfig(format!(
                    "pair ({}, {}): need 0 <= wins <= total and total > 0",
                    p.feature_i, p.feature_j
                )));
            }
        }
        Ok(Self { n_features, pairs })
    }

    pub fn n_features(&self) -> usize {
        self.n_features
    }

    pub fn pairs(&self) -> &[PairComparison] {
        &self.pairs
    }

    /// Every unordered pair compared `per_pair` times with a fair coin.
    pub fn simulate(n_features: usize, per_pair: u32, seed: u64) -> Result<Self> {
        Self::simulate_with_strengths(&vec![1.0; n_features], per_pair, seed)
    }

    /// Every unordered pair compared `per_pair` times, feature `i` winning
    /// with probability `s_i / (s_i + s_j)`.
    pub fn simulate_with_strengths(strengths: &[f64], per_pair: u32, seed: u64) -> Result<Self> {
        if per_pair == 0 {
            return Err(Error::InvalidConfig("need at least one comparison per pair".into()));
        }
        if strengths.iter().any(|s| !(s.is_finite() && *s > 0.0)) {
            return Err(Error::InvalidConfig("strengths must be positive".into()));
        }
        let mut rng = rng(seed);
        let n = strengths.len();
        let mut pairs = Vec::with_capacity(n * n.saturating_sub(1) / 2);
        for i in 0..n {
            for j in i + 1..n {
                let p = strengths[i] / (strengths[i] + strengths[j]);
                let wins_i = (0..per_pair).filter(|_| rng.random_bool(p)).count() as u32;
                pairs.push(PairComparison {
                    feature_i: i,
                    feature_j: j,
                    wins_i,
                    total: per_pair,
                });
            }
        }
        Self::new(n, pairs)
    }

    pub fn from_reader(reader: impl Read) -> Result<Self> {
        let mut rdr = csv::Reader::from_reader(reader);
        let pairs: Vec<PairComparison> = rdr.deserialize().collect::<Result<_, _>>()?;
        if pairs.is_empty() {
            return Err(Error::EmptyFile);
        }
        let n = pairs.iter().map(|p| p.feature_i.max(p.feature_j)).max().unwrap_or(0) + 1;
        Self::new(n, pairs)
    }

    pub fn to_writer(&self, writer: impl Write) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        for p in &self.pairs {
            w.serialize(p)?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn read_csv(path: &Path) -> Result<Self> {
        Self::from_reader(std::fs::File::open(path)?)
    }

    fn is_connected(&self) -> bool {
        if self.n_features <= 1 {
            return true;
        }
        let mut parent: Vec<usize> = (0..self.n_features).collect();
        fn find(parent: &mut [usize], mut i: usize) -> usize {
            while parent[i] != i {
                parent[i] = parent[parent[i]];
                i = parent[i];
            }
            i
        }
        for p in &self.pairs {
            let (a, b) = (find(&mut parent, p.feature_i), find(&mut parent, p.feature_j));
            parent[a] = b;
        }
        let root = find(&mut parent, 0);
        (1..self.n_features).all(|i| find(&mut parent, i) == root)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BradleyTerryFit {
    /// Strengths normalized to mean 1.
    pub strengths: Vec<f64>,
    /// Log-likelihood before the first update and after every update.
    pub log_likelihood: Vec<f64>,
    pub iterations: usize,
    pub converged: bool,
}

impl BradleyTerryFit {
    /// Strengths shifted by their minimum, so the cheapest feature is free.
    pub fn cost_weights(&self) -> Vec<f64> {
        let min = self.strengths.iter().copied().fold(f64::INFINITY, f64::min);
        self.strengths.iter().map(|s| s - min).collect()
    }

    pub fn into_cost_model(self) -> CostModel {
        CostModel::Pfc {
            weights: self.cost_weights(),
        }
    }
}

/// Maximum-likelihood Bradley–Terry strengths by minorization–maximization.
pub fn fit_bradley_terry_traced(set: &PairwiseComparisonSet) -> Result<BradleyTerryFit> {
    let n = set.n_features;
    if n == 0 {
        return Err(Error::InvalidConfig("no features".into()));
    }
    if !set.is_connected() {
        return Err(Error::DisconnectedComparisons);
    }
    // aggregate repeated pairs: (i, j) with i < j -> (wins of i, total)
    let mut agg: BTreeMap<(usize, usize), (f64, f64)> = BTreeMap::new();
    for p in &set.pairs {
        let (key, wins) = if p.feature_i < p.feature_j {
            ((p.feature_i, p.feature_j), p.wins_i)
        } else {
            ((p.feature_j, p.feature_i), p.total - p.wins_i)
        };
        let e = agg.entry(key).or_insert((0.0, 0.0));
        e.0 += f64::from(wins);
        e.1 += f64::from(p.total);
    }
    let mut wins = vec![0.0; n];
    for (&(i, j), &(w, t)) in &agg {
        wins[i] += w;
        wins[j] += t - w;
    }
    let log_lik = |s: &[f64]| -> f64 {
        agg.iter()
            .map(|(&(i, j), &(w, t))| {
                let denom = (s[i] + s[j]).ln();
                w * (s[i].ln() - denom) + (t - w) * (s[j].ln() - denom)
            })
            .sum()
    };

    let mut s = vec![1.0; n];
    let mut trace = vec![log_lik(&s)];
    let mut converged = false;
    let mut iterations = 0;
    let mut denom = vec![0.0; n];
    while iterations < BT_MAX_ITERATIONS {
        iterations += 1;
        denom.iter_mut().for_each(|v| *v = 0.0);
        for (&(i, j), &(_, t)) in &agg {
            let r = t / (s[i] + s[j]);
            denom[i] += r;
            denom[j] += r;
        }
        let mut next: Vec<f64> = wins.iter().zip(&denom).map(|(w, d)| w / d).collect();
        let max = next.iter().copied().fold(0.0, f64::max);
        let floor = max / BT_MAX_RATIO;
        next.iter_mut().for_each(|v| *v = v.max(floor));
        let mean = next.iter().sum::<f64>() / n as f64;
        next.iter_mut().for_each(|v| *v /= mean);

        let change = next
            .iter()
            .zip(&s)
            .map(|(a, b)| ((a - b) / b).abs())
            .fold(0.0, f64::max);
        s = next;
        trace.push(log_lik(&s));
        if change < BT_TOLERANCE {
            converged = true;
            break;
        }
    }
    Ok(BradleyTerryFit {
        strengths: s,
        log_likelihood: trace,
        iterations,
        converged,
    })
}

pub fn fit_bradley_terry(set: &PairwiseComparisonSet) -> Result<CostModel> {
    Ok(fit_bradley_terry_traced(set)?.into_cost_model())
}
