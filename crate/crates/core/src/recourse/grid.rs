//! Discretized minimal-cost action search for linear classifiers.
//!
//! Each mutable feature may move by `k·step` with `|k·step| ≤ max_change`.
//! Moving a feature against the sign of its weight never helps a linear
//! score and never lowers a weighted-ℓ1 cost, so only moves in the
//! direction of the weight are enumerated; this keeps the search exact.

use serde::{Deserialize, Serialize};

use super::{project_actionable, ActionabilitySpec, RecourseResult};
use crate::cost::CostModel;
use crate::error::{check_dim, check_finite, Error, Result};
use crate::model::{Classifier, LinearModel};

/// Largest number of movable features searched exhaustively.
const EXACT_MAX_FEATURES: usize = 6;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct GridConfig {
    pub step: f64,
    pub max_change: f64,
}

impl Default for GridConfig {
    fn default() -> Self {
        Self { step: 0.1, max_change: 5.0 }
    }
}

impl GridConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.step > 0.0 && self.step.is_finite() && self.max_change >= 0.0 && self.max_change.is_finite()) {
            return Err(Error::InvalidConfig("grid needs step > 0 and max_change >= 0".into()));
        }
        Ok(())
    }
}

struct Axis {
    feature: usize,
    /// Candidate displacements in increasing magnitude, starting at 0.
    moves: Vec<f64>,
    gain_per_unit: f64,
    cost_per_unit: f64,
}

struct Search<'a> {
    model: &'a LinearModel,
    x: &'a [f64],
    axes: Vec<Axis>,
    /// Largest score gain available from axes `k..`.
    reach: Vec<f64>,
    base: f64,
    best: Option<(f64, Vec<f64>)>,
    visited: usize,
}

impl Search<'_> {
    fn candidate(&self, picks: &[f64]) -> Vec<f64> {
        let mut x2 = self.x.to_vec();
        for (axis, &m) in self.axes.iter().zip(picks) {
            x2[axis.feature] = self.x[axis.feature] + m;
        }
        x2
    }

    fn offer(&mut self, picks: &[f64], cost: f64) -> Result<bool> {
        if self.best.as_ref().is_some_and(|(c, _)| cost >= *c) {
            return Ok(false);
        }
        let x2 = self.candidate(picks);
        if self.model.score(&x2)? > 0.0 {
            self.best = Some((cost, picks.to_vec()));
            return Ok(true);
        }
        Ok(false)
    }

    fn dfs(&mut self, depth: usize, picks: &mut Vec<f64>, score: f64, cost: f64) -> Result<()> {
        self.visited += 1;
        if depth == self.axes.len() {
            if score > -1e-9 {
                self.offer(picks, cost)?;
            }
            return Ok(());
        }
        // small slack: the leaf check uses the exact score, not the running sum
        if score + self.reach[depth] < -1e-9 {
            return Ok(());
        }
        for idx in 0..self.axes[depth].moves.len() {
            let m = self.axes[depth].moves[idx];
            let c = cost + self.axes[depth].cost_per_unit * m.abs();
            if self.best.as_ref().is_some_and(|(b, _)| c >= *b) {
                break;
            }
            let s = score + self.axes[depth].gain_per_unit * m.abs();
            picks.push(m);
            self.dfs(depth + 1, picks, s, c)?;
            picks.pop();
        }
        Ok(())
    }

    fn cost_of(&self, picks: &[f64]) -> f64 {
        self.axes.iter().zip(picks).map(|(a, m)| a.cost_per_unit * m.abs()).sum()
    }

    fn gain_of(&self, picks: &[f64]) -> f64 {
        self.axes.iter().zip(picks).map(|(a, m)| a.gain_per_unit * m.abs()).sum()
    }

    /// Smallest move on `axis` lifting `score` above zero.
    fn first_crossing(&self, axis: usize, score: f64) -> Option<f64> {
        let a = &self.axes[axis];
        a.moves.iter().copied().find(|m| score + a.gain_per_unit * m.abs() > 0.0)
    }

    fn heuristic(&mut self) -> Result<()> {
        let n = self.axes.len();
        let zeros = vec![0.0; n];
        for i in 0..n {
            self.visited += 1;
            if let Some(m) = self.first_crossing(i, self.base) {
                let mut picks = zeros.clone();
                picks[i] = m;
                let c = self.cost_of(&picks);
                self.offer(&picks, c)?;
            }
        }
        for i in 0..n {
            for j in 0..n {
                if i == j {
                    continue;
                }
                for mi in self.axes[i].moves.clone() {
                    self.visited += 1;
                    let mut picks = zeros.clone();
                    picks[i] = mi;
                    let s = self.base + self.gain_of(&picks);
                    if let Some(mj) = self.first_crossing(j, s) {
                        picks[j] = mj;
                        let c = self.cost_of(&picks);
                        self.offer(&picks, c)?;
                    }
                }
            }
        }
        // greedy by price per unit of score
        let mut order: Vec<usize> = (0..n).collect();
        order.sort_by(|&a, &b| {
            let ra = self.axes[a].cost_per_unit / self.axes[a].gain_per_unit;
            let rb = self.axes[b].cost_per_unit / self.axes[b].gain_per_unit;
            ra.total_cmp(&rb)
        });
        let mut picks = zeros;
        let mut score = self.base;
        for i in order {
            self.visited += 1;
            if let Some(m) = self.first_crossing(i, score) {
                picks[i] = m;
                let c = self.cost_of(&picks);
                self.offer(&picks, c)?;
                break;
            }
            picks[i] = *self.axes[i].moves.last().unwrap_or(&0.0);
            score = self.base + self.gain_of(&picks);
        }
        Ok(())
    }
}

/// Minimal-cost grid action achieving label 1 under `model`.
pub fn ar_grid(model: &LinearModel, x: &[f64], cost: &CostModel, actionability: &ActionabilitySpec, grid: &GridConfig) -> Result<RecourseResult> {
    check_dim(model.dim(), x.len())?;
    check_finite(x, "instance")?;
    cost.check_dim(x.len())?;
    actionability.validate(x.len())?;
    grid.validate()?;
    let base = model.score(x)?;
    if base > 0.0 {
        return Ok(RecourseResult::identity(x, 0.0));
    }
    let k_max = (grid.max_change / grid.step + 1e-9).floor() as usize;
    let mut axes = Vec::new();
    for (i, &w) in model.weights.iter().enumerate() {
        if w == 0.0 || !actionability.is_mutable(i) {
            continue;
        }
        let (lo, hi) = actionability.bounds(i);
        let dir = w.signum();
        let moves: Vec<f64> = (0..=k_max)
            .map(|k| dir * k as f64 * grid.step)
            .take_while(|m| (lo..=hi).contains(&(x[i] + m)))
            .collect();
        if moves.len() > 1 {
            axes.push(Axis {
                feature: i,
                moves,
                gain_per_unit: w.abs(),
                cost_per_unit: cost.feature_weight(i),
            });
        }
    }
    let mut reach = vec![0.0; axes.len() + 1];
    for k in (0..axes.len()).rev() {
        let last = axes[k].moves.last().map_or(0.0, |m| m.abs());
        reach[k] = reach[k + 1] + axes[k].gain_per_unit * last;
    }
    let mut search = Search {
        model,
        x,
        axes,
        reach,
        base,
        best: None,
        visited: 0,
    };
    if search.axes.len() <= EXACT_MAX_FEATURES {
        search.dfs(0, &mut Vec::new(), base, 0.0)?;
    } else {
        search.heuristic()?;
    }
    let Some((_, picks)) = search.best.take() else {
        return Err(Error::NoRecourse);
    };
    let cf = project_actionable(&search.candidate(&picks), x, actionability);
    let c = cost.cost(x, &cf)?;
    Ok(RecourseResult {
        x: x.to_vec(),
        valid_on_source: model.predict_label(&cf)? == 1,
        counterfactual: cf,
        converged: true,
        iterations: search.visited,
        objective: c,
        trace: vec![c],
        cost: c,
    })
}
