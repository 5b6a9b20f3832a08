use rand::Rng as _;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{check_dim, Error, Result};
use crate::math::{dot, norm2, softplus, Rng};
use crate::model::LinearModel;

const ASCENT_STEPS: usize = 50;

/// Admissible shifts δ of the augmented parameter vector `(w, b)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum PerturbationSet {
    /// `δmin ≤ δ_i ≤ δmax` for every coordinate.
    Box { delta_min: f64, delta_max: f64 },
    /// `‖δ‖_p ≤ δmax`; `p = ∞` is written as `f64::INFINITY` in code and as
    /// any value above 1e9 in JSON.
    NormBall { p: f64, delta_max: f64 },
}

impl Default for PerturbationSet {
    fn default() -> Self {
        PerturbationSet::NormBall { p: 2.0, delta_max: 0.1 }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InnerMaxMode {
    #[default]
    ClosedForm,
    ProjectedAscent,
}

impl PerturbationSet {
    pub fn symmetric_box(delta_max: f64) -> Self {
        PerturbationSet::Box {
            delta_min: -delta_max,
            delta_max,
        }
    }

    pub fn l2(delta_max: f64) -> Self {
        PerturbationSet::NormBall { p: 2.0, delta_max }
    }

    pub fn validate(&self) -> Result<()> {
        match *self {
            PerturbationSet::Box { delta_min, delta_max } => {
                if !(delta_min <= 0.0 && 0.0 <= delta_max && delta_min.is_finite() && delta_max.is_finite()) {
                    return Err(Error::InvalidConfig("box needs finite delta_min <= 0 <= delta_max".into()));
                }
            }
            PerturbationSet::NormBall { p, delta_max } => {
                if !(p >= 1.0) {
                    return Err(Error::InvalidConfig("norm order p must be >= 1".into()));
                }
                if !(delta_max >= 0.0 && delta_max.is_finite()) {
                    return Err(Error::InvalidConfig("delta_max must be finite and >= 0".into()));
                }
            }
        }
        Ok(())
    }

    pub fn is_trivial(&self) -> bool {
        match *self {
            PerturbationSet::Box { delta_min, delta_max } => delta_min == 0.0 && delta_max == 0.0,
            PerturbationSet::NormBall { delta_max, .. } => delta_max == 0.0,
        }
    }

    fn p(&self) -> f64 {
        match *self {
            PerturbationSet::Box { .. } => f64::INFINITY,
            PerturbationSet::NormBall { p, .. } if p > 1e9 => f64::INFINITY,
            PerturbationSet::NormBall { p, .. } => p,
        }
    }

    pub fn contains(&self, delta: &[f64], tol: f64) -> bool {
        match *self {
            PerturbationSet::Box { delta_min, delta_max } => {
                delta.iter().all(|&d| d >= delta_min - tol && d <= delta_max + tol)
            }
            PerturbationSet::NormBall { delta_max, .. } => p_norm(delta, self.p()) <= delta_max + tol,
        }
    }

    /// Euclidean projection onto the set.
    pub fn project(&self, v: &[f64]) -> Vec<f64> {
        match *self {
            PerturbationSet::Box { delta_min, delta_max } => v.iter().map(|x| x.clamp(delta_min, delta_max)).collect(),
            PerturbationSet::NormBall { delta_max, .. } => project_ball(v, self.p(), delta_max),
        }
    }

    /// A random member of the set (not uniformly distributed for balls).
    pub fn sample(&self, n: usize, rng: &mut Rng) -> Vec<f64> {
        match *self {
            PerturbationSet::Box { delta_min, delta_max } => (0..n)
                .map(|_| if delta_max > delta_min { rng.random_range(delta_min..=delta_max) } else { 0.0 })
                .collect(),
            PerturbationSet::NormBall { delta_max, .. } => {
                let g: Vec<f64> = (0..n).map(|_| StandardNormal.sample(rng)).collect();
                let norm = p_norm(&g, self.p());
                let r = delta_max * rng.random::<f64>();
                g.iter().map(|x| x / norm * r).collect()
            }
        }
    }

    /// Minimizer of `δᵀv` over the set.
    fn minimize_linear(&self, v: &[f64]) -> Vec<f64> {
        match *self {
            PerturbationSet::Box { delta_min, delta_max } => v
                .iter()
                .map(|&x| {
                    if x > 0.0 {
                        delta_min
                    } else if x < 0.0 {
                        delta_max
                    } else {
                        0.0
                    }
                })
                .collect(),
            PerturbationSet::NormBall { delta_max, .. } => {
                let p = self.p();
                let scale = v.iter().fold(0.0f64, |m, x| m.max(x.abs()));
                if scale == 0.0 {
                    return vec![0.0; v.len()];
                }
                if p.is_infinite() {
                    return v.iter().map(|&x| signed(-delta_max, x)).collect();
                }
                if p == 1.0 {
                    // all mass on the largest coordinate
                    let k = v
                        .iter()
                        .enumerate()
                        .fold(0, |best, (i, x)| if x.abs() > v[best].abs() { i } else { best });
                    let mut delta = vec![0.0; v.len()];
                    delta[k] = signed(-delta_max, v[k]);
                    return delta;
                }
                if p == 2.0 {
                    let n = norm2(v);
                    return v.iter().map(|x| -delta_max * x / n).collect();
                }
                // Hölder equality case with the dual exponent q
                let q = p / (p - 1.0);
                let u: Vec<f64> = v.iter().map(|x| (x.abs() / scale).powf(q - 1.0)).collect();
                let n = p_norm(&u, p);
                u.iter().zip(v).map(|(a, x)| signed(-delta_max * a / n, *x)).collect()
            }
        }
    }
}

fn signed(magnitude: f64, sign_of: f64) -> f64 {
    if sign_of > 0.0 {
        magnitude
    } else if sign_of < 0.0 {
        -magnitude
    } else {
        0.0
    }
}

pub fn p_norm(v: &[f64], p: f64) -> f64 {
    if p.is_infinite() {
        return v.iter().fold(0.0, |m, x| m.max(x.abs()));
    }
    if p == 1.0 {
        return v.iter().map(|x| x.abs()).sum();
    }
    if p == 2.0 {
        return norm2(v);
    }
    let scale = v.iter().fold(0.0f64, |m, x| m.max(x.abs()));
    if scale == 0.0 {
        return 0.0;
    }
    scale * v.iter().map(|x| (x.abs() / scale).powf(p)).sum::<f64>().powf(1.0 / p)
}

fn project_ball(v: &[f64], p: f64, r: f64) -> Vec<f64> {
    if p_norm(v, p) <= r {
        return v.to_vec();
    }
    if r == 0.0 {
        return vec![0.0; v.len()];
    }
    if p.is_infinite() {
        return v.iter().map(|x| x.clamp(-r, r)).collect();
    }
    if p == 2.0 {
        let n = norm2(v);
        return v.iter().map(|x| x * r / n).collect();
    }
    if p == 1.0 {
        // soft-threshold at the level that lands on the sphere
        let mut a: Vec<f64> = v.iter().map(|x| x.abs()).collect();
        a.sort_by(|x, y| y.total_cmp(x));
        let mut cum = 0.0;
        let mut theta = 0.0;
        for (k, ak) in a.iter().enumerate() {
            cum += ak;
            let t = (cum - r) / (k + 1) as f64;
            if *ak > t {
                theta = t;
            }
        }
        return v.iter().map(|x| signed((x.abs() - theta).max(0.0), *x)).collect();
    }
    // KKT: y_i = sign(v_i)·t_i with t_i + μ p t_i^{p−1} = |v_i|; bisect on μ
    let solve = |mu: f64| -> Vec<f64> {
        v.iter()
            .map(|x| {
                let target = x.abs();
                let (mut lo, mut hi) = (0.0, target);
                for _ in 0..80 {
                    let t = 0.5 * (lo + hi);
                    if t + mu * p * t.powf(p - 1.0) > target {
                        hi = t;
                    } else {
                        lo = t;
                    }
                }
                signed(0.5 * (lo + hi), *x)
            })
            .collect()
    };
    let (mut lo, mut hi) = (0.0, 1.0);
    while p_norm(&solve(hi), p) > r {
        hi *= 2.0;
    }
    for _ in 0..100 {
        let mu = 0.5 * (lo + hi);
        if p_norm(&solve(mu), p) > r {
            lo = mu;
        } else {
            hi = mu;
        }
    }
    solve(hi)
}

fn augmented(x: &[f64]) -> Vec<f64> {
    let mut a = x.to_vec();
    a.push(1.0);
    a
}

/// Worst-case shift `δ̂ = argmax_{δ∈Δ} ℓ(f_{w+δ}(x2), 1)` and the loss there.
///
/// The loss `log(1 + exp(−(w+δ)ᵀx_aug))` is decreasing in `δᵀx_aug`, so the
/// maximizer minimizes a linear function over Δ.
pub fn inner_max(model: &LinearModel, x2: &[f64], set: &PerturbationSet, mode: InnerMaxMode) -> Result<(Vec<f64>, f64)> {
    check_dim(model.weights.len(), x2.len())?;
    let x_aug = augmented(x2);
    let w_aug = model.augmented();
    let delta = match mode {
        InnerMaxMode::ClosedForm => set.minimize_linear(&x_aug),
        InnerMaxMode::ProjectedAscent => projected_ascent(&w_aug, &x_aug, set),
    };
    let loss = worst_loss(&w_aug, &delta, &x_aug);
    Ok((delta, loss))
}

fn worst_loss(w_aug: &[f64], delta: &[f64], x_aug: &[f64]) -> f64 {
    let margin: f64 = w_aug.iter().zip(delta).zip(x_aug).map(|((w, d), x)| (w + d) * x).sum();
    softplus(-margin)
}

fn projected_ascent(w_aug: &[f64], x_aug: &[f64], set: &PerturbationSet) -> Vec<f64> {
    let radius = match *set {
        PerturbationSet::Box { delta_min, delta_max } => delta_max.max(-delta_min),
        PerturbationSet::NormBall { delta_max, .. } => delta_max,
    };
    let mut delta = vec![0.0; x_aug.len()];
    let xn = norm2(x_aug);
    if xn == 0.0 || radius == 0.0 {
        return delta;
    }
    for _ in 0..ASCENT_STEPS {
        // ∂ℓ/∂δ = −σ(−m)·x_aug: the direction never changes, only its length,
        // so a normalized step keeps progress independent of the margin
        let margin = dot(w_aug, x_aug) + dot(&delta, x_aug);
        if crate::math::sigmoid(-margin) == 0.0 {
            break;
        }
        let step: Vec<f64> = delta.iter().zip(x_aug).map(|(d, x)| d - radius * x / xn).collect();
        delta = set.project(&step);
    }
    delta
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::math::rng;
    use proptest::prelude::*;

    fn lm(w: &[f64], b: f64) -> LinearModel {
        LinearModel::new(w.to_vec(), b).unwrap()
    }

    #[test]
    fn box_example() {
        let m = lm(&[0.3, 0.2], -0.1);
        let (d, _) = inner_max(&m, &[1.0, -2.0], &PerturbationSet::symmetric_box(0.1), InnerMaxMode::ClosedForm).unwrap();
        assert_eq!(d, vec![-0.1, 0.1, -0.1]);
    }

    #[test]
    fn box_zero_coordinate_gets_zero() {
        let m = lm(&[0.3, 0.2], 0.0);
        let (d, _) = inner_max(&m, &[0.0, 2.0], &PerturbationSet::symmetric_box(0.1), InnerMaxMode::ClosedForm).unwrap();
        assert_eq!(d, vec![0.0, -0.1, -0.1]);
    }

    #[test]
    fn l2_example() {
        // x_aug = [3, 4, 0] needs a zero augmented coordinate, so test the
        // linear minimizer directly
        let d = PerturbationSet::l2(0.1).minimize_linear(&[3.0, 4.0, 0.0]);
        assert!((d[0] + 0.06).abs() < 1e-15 && (d[1] + 0.08).abs() < 1e-15 && d[2] == 0.0);
        assert_eq!(PerturbationSet::l2(0.1).minimize_linear(&[0.0, 0.0]), vec![0.0, 0.0]);
    }

    #[test]
    fn linf_and_l1_examples() {
        let inf = PerturbationSet::NormBall {
            p: f64::INFINITY,
            delta_max: 0.2,
        };
        assert_eq!(inf.minimize_linear(&[1.0, -3.0, 0.0]), vec![-0.2, 0.2, 0.0]);
        let l1 = PerturbationSet::NormBall { p: 1.0, delta_max: 0.2 };
        assert_eq!(l1.minimize_linear(&[1.0, -3.0, 0.5]), vec![0.0, 0.2, 0.0]);
    }

    #[test]
    fn trivial_set_gives_zero_shift() {
        let m = lm(&[1.0, -1.0], 0.5);
        for set in [PerturbationSet::symmetric_box(0.0), PerturbationSet::l2(0.0)] {
            let (d, loss) = inner_max(&m, &[0.4, 2.0], &set, InnerMaxMode::ClosedForm).unwrap();
            assert!(d.iter().all(|v| *v == 0.0));
            assert_eq!(loss, m_loss(&m, &[0.4, 2.0]));
        }
    }

    fn m_loss(m: &LinearModel, x: &[f64]) -> f64 {
        softplus(-(dot(&m.weights, x) + m.intercept))
    }

    #[test]
    fn validation() {
        assert!(PerturbationSet::Box {
            delta_min: 0.1,
            delta_max: 0.2
        }
        .validate()
        .is_err());
        assert!(PerturbationSet::NormBall { p: 0.5, delta_max: 0.1 }.validate().is_err());
        assert!(PerturbationSet::l2(-1.0).validate().is_err());
        assert!(PerturbationSet::default().validate().is_ok());
    }

    #[test]
    fn ball_projections_land_on_sphere() {
        let v = [0.7, -0.2, 0.05];
        for p in [1.0, 1.5, 2.0, 3.0, f64::INFINITY] {
            let y = project_ball(&v, p, 0.3);
            assert!((p_norm(&y, p) - 0.3).abs() < 1e-9, "p = {p}");
        }
        assert_eq!(project_ball(&[0.1, 0.1], 1.0, 0.5), vec![0.1, 0.1]);
    }

    #[test]
    fn l1_projection_matches_known_value() {
        // sorted |v| = 3, 1, 0.5; θ = (3 + 1 − 2) / 2 = 1 → [2, 0, 0]
        let y = project_ball(&[3.0, -1.0, 0.5], 1.0, 2.0);
        assert_eq!(y, vec![2.0, 0.0, 0.0]);
    }

    #[test]
    fn ascent_agrees_with_closed_form() {
        let m = lm(&[0.5, -1.0, 0.25], 0.1);
        let x = [1.0, 0.3, -2.0];
        for set in [
            PerturbationSet::symmetric_box(0.1),
            PerturbationSet::Box {
                delta_min: -0.05,
                delta_max: 0.2,
            },
            PerturbationSet::l2(0.1),
            PerturbationSet::NormBall { p: 1.0, delta_max: 0.1 },
            PerturbationSet::NormBall { p: 3.0, delta_max: 0.1 },
            PerturbationSet::NormBall {
                p: f64::INFINITY,
                delta_max: 0.1,
            },
        ] {
            let (_, exact) = inner_max(&m, &x, &set, InnerMaxMode::ClosedForm).unwrap();
            let (d, approx) = inner_max(&m, &x, &set, InnerMaxMode::ProjectedAscent).unwrap();
            assert!(set.contains(&d, 1e-9));
            assert!((exact - approx).abs() < 1e-6, "{set:?}: {exact} vs {approx}");
        }
    }

    proptest! {
        #[test]
        fn closed_form_dominates_random_members(
            w in prop::collection::vec(-3.0f64..3.0, 3),
            x in prop::collection::vec(-3.0f64..3.0, 2),
            r in 0.0f64..0.5,
            p in prop::sample::select(vec![1.0, 1.5, 2.0, 4.0, f64::INFINITY]),
            seed in any::<u64>(),
        ) {
            let m = lm(&w[..2], w[2]);
            let mut g = rng(seed);
            for set in [PerturbationSet::symmetric_box(r), PerturbationSet::NormBall { p, delta_max: r }] {
                let (d, best) = inner_max(&m, &x, &set, InnerMaxMode::ClosedForm).unwrap();
                prop_assert!(set.contains(&d, 1e-12));
                let xa = augmented(&x);
                for _ in 0..200 {
                    let s = set.sample(3, &mut g);
                    prop_assert!(set.contains(&s, 1e-12));
                    prop_assert!(worst_loss(&m.augmented(), &s, &xa) <= best + 1e-9);
                }
            }
        }
    }
}
