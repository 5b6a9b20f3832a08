use serde::{Deserialize, Serialize};

use crate::cost::CostModel;
use crate::error::{Error, Result};
use crate::math::mean_std;
use crate::model::Classifier;
use crate::recourse::RecourseResult;

/// Mean and population standard deviation.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct MeanStd {
    pub mean: f64,
    pub std: f64,
}

impl MeanStd {
    pub fn of(values: &[f64]) -> Self {
        let (mean, std) = mean_std(values);
        Self { mean, std }
    }
}

/// Fraction of counterfactuals labeled 1 by `model`.
pub fn validity(recourses: &[RecourseResult], model: &dyn Classifier) -> Result<f64> {
    if recourses.is_empty() {
        return Err(Error::NoRecourses);
    }
    let mut valid = 0;
    for r in recourses {
        if model.predict_label(&r.counterfactual)? == 1 {
            valid += 1;
        }
    }
    Ok(f64::from(valid) / recourses.len() as f64)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CostSummary {
    pub mean: f64,
    pub std: f64,
    pub produced: usize,
    pub errored: usize,
}

/// Cost statistics over the recourses that were produced; failures are
/// only counted.
pub fn avg_cost(recourses: &[Result<RecourseResult>], cost: &CostModel) -> Result<CostSummary> {
    let mut values = Vec::new();
    let mut errored = 0;
    for r in recourses {
        match r {
            Ok(r) => values.push(cost.cost(&r.x, &r.counterfactual)?),
            Err(_) => errored += 1,
        }
    }
    if values.is_empty() {
        return Err(Error::NoRecourses);
    }
    let s = MeanStd::of(&values);
    Ok(CostSummary {
        mean: s.mean,
        std: s.std,
        produced: values.len(),
        errored,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::LinearModel;

    fn rec(x: &[f64], cf: &[f64]) -> RecourseResult {
        RecourseResult {
            x: x.to_vec(),
            counterfactual: cf.to_vec(),
            converged: true,
            iterations: 1,
            objective: 0.0,
            trace: vec![],
            cost: 0.0,
            valid_on_source: true,
        }
    }

    #[test]
    fn validity_fractions() {
        let m = LinearModel::new(vec![1.0], 0.0).unwrap();
        let all: Vec<_> = [1.0, 2.0].iter().map(|v| rec(&[0.0], &[*v])).collect();
        assert_eq!(validity(&all, &m).unwrap(), 1.0);
        let mixed: Vec<_> = [1.0, 2.0, 3.0, -1.0].iter().map(|v| rec(&[0.0], &[*v])).collect();
        assert_eq!(validity(&mixed, &m).unwrap(), 0.75);
        assert_eq!(validity(&[], &m).unwrap_err().to_string(), "no recourses");
    }

    #[test]
    fn cost_summaries() {
        let same: Vec<Result<RecourseResult>> = (0..3).map(|_| Ok(rec(&[0.0], &[2.0]))).collect();
        let s = avg_cost(&same, &CostModel::L1).unwrap();
        assert_eq!((s.mean, s.std), (2.0, 0.0));
        let two = vec![Ok(rec(&[0.0], &[1.0])), Ok(rec(&[0.0], &[3.0])), Err(Error::NoRecourse)];
        let s = avg_cost(&two, &CostModel::L1).unwrap();
        assert_eq!((s.mean, s.std, s.produced, s.errored), (2.0, 1.0, 2, 1));
        let none: Vec<Result<RecourseResult>> = vec![Err(Error::NoRecourse)];
        assert!(matches!(avg_cost(&none, &CostModel::L1), Err(Error::NoRecourses)));
    }
}
