use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{dist, dot, norm, norm_sq};

/// Closed convex feasible set `X_i` of one block.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ConvexBlockSet {
    #[default]
    Whole,
    Box { lower: Vec<f64>, upper: Vec<f64> },
    Ball { center: Vec<f64>, radius: f64 },
    /// `{x : a_kᵀx ≤ b_k for all k}`.
    Halfspaces { normals: Vec<Vec<f64>>, offsets: Vec<f64> },
}

const DYKSTRA_TOL: f64 = 1e-15;
const DYKSTRA_MAX_ITER: usize = 100_000;

impl ConvexBlockSet {
    pub fn kind_name(&self) -> &'static str {
        match self {
            ConvexBlockSet::Whole => "whole",
            ConvexBlockSet::Box { .. } => "box",
            ConvexBlockSet::Ball { .. } => "ball",
            ConvexBlockSet::Halfspaces { .. } => "halfspaces",
        }
    }

    pub fn validate(&self, n_i: usize) -> Result<()> {
        let bad = |what: String| Err(Error::Dimension(what));
        match self {
            ConvexBlockSet::Whole => Ok(()),
            ConvexBlockSet::Box { lower, upper } => {
                if lower.len() != n_i || upper.len() != n_i {
                    return bad(format!("box bounds have lengths {}/{}, block has {n_i}", lower.len(), upper.len()));
                }
                if lower.iter().zip(upper).any(|(l, u)| !(l <= u)) {
                    return Err(Error::Invalid("box has lower > upper".into()));
                }
                Ok(())
            }
            ConvexBlockSet::Ball { center, radius } => {
                if center.len() != n_i {
                    return bad(format!("ball center has length {}, block has {n_i}", center.len()));
                }
                if !(*radius >= 0.0) {
                    return Err(Error::Invalid("ball radius must be nonnegative".into()));
                }
                Ok(())
            }
            ConvexBlockSet::Halfspaces { normals, offsets } => {
                if normals.len() != offsets.len() || normals.iter().any(|a| a.len() != n_i) {
                    return bad("halfspace normals/offsets do not match the block".into());
                }
                if normals.iter().any(|a| norm(a) == 0.0) {
                    return Err(Error::Invalid("halfspace with zero normal".into()));
                }
                Ok(())
            }
        }
    }

    pub fn contains(&self, x: &[f64], tol: f64) -> bool {
        self.violation(x) <= tol
    }

    /// Largest amount by which `x` breaks a defining inequality (0 inside).
    pub fn violation(&self, x: &[f64]) -> f64 {
        match self {
            ConvexBlockSet::Whole => 0.0,
            ConvexBlockSet::Box { lower, upper } => x
                .iter()
                .zip(lower.iter().zip(upper))
                .map(|(t, (l, u))| (l - t).max(t - u).max(0.0))
                .fold(0.0, f64::max),
            ConvexBlockSet::Ball { center, radius } => (dist(x, center) - radius).max(0.0),
            ConvexBlockSet::Halfspaces { normals, offsets } => normals
                .iter()
                .zip(offsets)
                .map(|(a, b)| ((dot(a, x) - b) / norm(a)).max(0.0))
                .fold(0.0, f64::max),
        }
    }

    pub fn project_in_place(&self, v: &mut [f64]) {
        match self {
            ConvexBlockSet::Whole => {}
            ConvexBlockSet::Box { lower, upper } => {
                for (t, (l, u)) in v.iter_mut().zip(lower.iter().zip(upper)) {
                    *t = t.clamp(*l, *u);
                }
            }
            ConvexBlockSet::Ball { center, radius } => project_ball(v, center, *radius),
            ConvexBlockSet::Halfspaces { normals, offsets } => {
                if normals.iter().zip(offsets).all(|(a, b)| dot(a, v) <= *b) {
                    return;
                }
                if normals.len() == 1 {
                    project_halfspace(v, &normals[0], offsets[0]);
                    return;
                }
                let projs: Vec<Box<dyn Fn(&mut [f64]) + '_>> = normals
                    .iter()
                    .zip(offsets)
                    .map(|(a, b)| Box::new(move |z: &mut [f64]| project_halfspace(z, a, *b)) as Box<dyn Fn(&mut [f64])>)
                    .collect();
                let out = dykstra(v, &projs, DYKSTRA_TOL, DYKSTRA_MAX_ITER);
                v.copy_from_slice(&out);
            }
        }
    }

    pub fn project(&self, v: &[f64]) -> Vec<f64> {
        let mut out = v.to_vec();
        self.project_in_place(&mut out);
        out
    }

    pub fn distance(&self, x: &[f64]) -> f64 {
        dist(x, &self.project(x))
    }

    /// Axis-aligned box containing the set, if the set is bounded in that simple sense.
    pub fn bounding_box(&self) -> Option<(Vec<f64>, Vec<f64>)> {
        match self {
            ConvexBlockSet::Box { lower, upper } => Some((lower.clone(), upper.clone())),
            ConvexBlockSet::Ball { center, radius } => Some((
                center.iter().map(|c| c - radius).collect(),
                center.iter().map(|c| c + radius).collect(),
            )),
            _ => None,
        }
    }

    pub fn diameter(&self) -> Option<f64> {
        match self {
            ConvexBlockSet::Ball { radius, .. } => Some(2.0 * radius),
            ConvexBlockSet::Box { lower, upper } => {
                Some(lower.iter().zip(upper).map(|(l, u)| (u - l).powi(2)).sum::<f64>().sqrt())
            }
            _ => None,
        }
    }

    /// `max_{x ∈ X} max_j |x_j|`, when finite.
    pub fn coordinate_radius(&self) -> Option<f64> {
        self.bounding_box().map(|(lo, hi)| lo.iter().chain(&hi).map(|t| t.abs()).fold(0.0, f64::max))
    }
}

pub fn project_ball(v: &mut [f64], center: &[f64], radius: f64) {
    let d = dist(v, center);
    if d > radius {
        let s = radius / d;
        for (t, c) in v.iter_mut().zip(center) {
            *t = c + s * (*t - c);
        }
    }
}

pub fn project_halfspace(v: &mut [f64], a: &[f64], b: f64) {
    let excess = dot(a, v) - b;
    if excess > 0.0 {
        let s = excess / norm_sq(a);
        for (t, ak) in v.iter_mut().zip(a) {
            *t -= s * ak;
        }
    }
}

/// Projection onto an intersection of closed convex sets by Dykstra's method,
/// given the projection onto each set.
pub fn dykstra(v: &[f64], projs: &[Box<dyn Fn(&mut [f64]) + '_>], tol: f64, max_iter: usize) -> Vec<f64> {
    let n = v.len();
    let m = projs.len();
    let mut x = v.to_vec();
    if m == 0 {
        return x;
    }
    if m == 1 {
        projs[0](&mut x);
        return x;
    }
    let mut incr = vec![vec![0.0; n]; m];
    let mut y = vec![0.0; n];
    let scale = 1.0 + norm(v);
    for _ in 0..max_iter {
        let mut moved = 0.0f64;
        for (p, q) in projs.iter().zip(incr.iter_mut()) {
            for k in 0..n {
                y[k] = x[k] + q[k];
            }
            let before = x.clone();
            x.copy_from_slice(&y);
            p(&mut x);
            for k in 0..n {
                q[k] = y[k] - x[k];
            }
            moved = moved.max(dist(&before, &x));
        }
        if moved <= tol * scale {
            break;
        }
    }
    x
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn sets() -> Vec<ConvexBlockSet> {
        vec![
            ConvexBlockSet::Whole,
            ConvexBlockSet::Box { lower: vec![0.0, -1.0], upper: vec![1.0, 2.0] },
            ConvexBlockSet::Ball { center: vec![0.5, -0.5], radius: 1.5 },
            ConvexBlockSet::Halfspaces { normals: vec![vec![1.0, 1.0], vec![-1.0, 2.0]], offsets: vec![1.0, 0.5] },
        ]
    }

    #[test]
    fn interior_point_of_box() {
        let s = ConvexBlockSet::Box { lower: vec![0.0; 3], upper: vec![1.0; 3] };
        assert!(s.contains(&[0.5; 3], 0.0));
        assert_eq!(s.violation(&[0.5; 3]), 0.0);
        assert_eq!(s.violation(&[0.5, 1.25, 0.0]), 0.25);
    }

    #[test]
    fn intersection_projection_is_the_nearest_point() {
        let s = &sets()[3];
        let v = [3.0, 3.0];
        let p = s.project(&v);
        // vertex of the two lines x+y=1 and -x+2y=0.5
        assert!((p[0] - 0.5).abs() < 1e-10 && (p[1] - 0.5).abs() < 1e-10, "{p:?}");
    }

    proptest! {
        #[test]
        fn projection_idempotent_and_feasible(v in prop::collection::vec(-10.0f64..10.0, 2)) {
            for s in sets() {
                let p = s.project(&v);
                prop_assert!(s.violation(&p) <= 1e-12);
                let pp = s.project(&p);
                prop_assert!(dist(&p, &pp) <= 1e-12);
            }
        }

        #[test]
        fn projection_satisfies_obtuse_angle(v in prop::collection::vec(-10.0f64..10.0, 2),
                                             w in prop::collection::vec(-10.0f64..10.0, 2)) {
            for s in sets() {
                let p = s.project(&v);
                let q = s.project(&w);
                // ⟨v − Π v, q − Π v⟩ ≤ 0 for any q in the set
                let lhs: f64 = v.iter().zip(&p).zip(&q).map(|((a, b), c)| (a - b) * (c - b)).sum();
                prop_assert!(lhs <= 1e-9 * (1.0 + norm(&v)));
            }
        }
    }
}
