use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{dist_sq, dot, norm_sq};

/// How a constraint is convexified around the current block value.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ConstraintSurrogateKind {
    #[default]
    DescentLemma,
    DcSplit,
}

impl std::str::FromStr for ConstraintSurrogateKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "descent_lemma" | "descent-lemma" => Ok(Self::DescentLemma),
            "dc_split" | "dc-split" => Ok(Self::DcSplit),
            other => Err(Error::Invalid(format!("unknown constraint surrogate kind {other:?}"))),
        }
    }
}

/// Functional form of one private constraint `c_{i,j}(x_i) ≤ 0`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "shape", rename_all = "snake_case")]
pub enum ConstraintShape {
    /// `a‖x − center‖² + r`; convex for `a ≥ 0`, concave otherwise.
    Sphere { a: f64, center: Vec<f64>, r: f64 },
    /// `normalᵀx − offset`.
    Affine { normal: Vec<f64>, offset: f64 },
    /// `r + amp·Σ_j cos(x_j)`; smooth but with no built-in convex split.
    Cosine { amp: f64, r: f64 },
}

/// One constraint with its convexification settings.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConstraintFn {
    #[serde(flatten)]
    pub shape: ConstraintShape,
    #[serde(default)]
    pub surrogate: ConstraintSurrogateKind,
    /// Overrides the analytic gradient Lipschitz constant.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub curvature: Option<f64>,
}

/// `a‖x − p‖² + lᵀ(x − p) + k` with `a ≥ 0`; the only convex pieces built-in
/// constraints and their surrogates produce.
#[derive(Debug, Clone, PartialEq)]
pub struct IsoQuadratic {
    pub a: f64,
    pub anchor: Vec<f64>,
    pub lin: Vec<f64>,
    pub k: f64,
}

/// Sublevel set `{x : q(x) ≤ 0}` of an [`IsoQuadratic`].
#[derive(Debug, Clone, PartialEq)]
pub enum Region {
    Whole,
    Empty,
    Ball { center: Vec<f64>, radius: f64 },
    Halfspace { normal: Vec<f64>, offset: f64 },
}

impl IsoQuadratic {
    pub fn zero(n: usize) -> Self {
        Self { a: 0.0, anchor: vec![0.0; n], lin: vec![0.0; n], k: 0.0 }
    }

    pub fn value(&self, x: &[f64]) -> f64 {
        let mut sq = 0.0;
        let mut lin = 0.0;
        for ((xj, pj), lj) in x.iter().zip(&self.anchor).zip(&self.lin) {
            let d = xj - pj;
            sq += d * d;
            lin += lj * d;
        }
        self.a * sq + lin + self.k
    }

    pub fn grad(&self, x: &[f64]) -> Vec<f64> {
        x.iter()
            .zip(&self.anchor)
            .zip(&self.lin)
            .map(|((xj, pj), lj)| 2.0 * self.a * (xj - pj) + lj)
            .collect()
    }

    pub fn region(&self) -> Region {
        if self.a > 0.0 {
            let center: Vec<f64> = self.anchor.iter().zip(&self.lin).map(|(p, l)| p - l / (2.0 * self.a)).collect();
            let r2 = norm_sq(&self.lin) / (4.0 * self.a * self.a) - self.k / self.a;
            if r2 < 0.0 {
                Region::Empty
            } else {
                Region::Ball { center, radius: r2.sqrt() }
            }
        } else if norm_sq(&self.lin) == 0.0 {
            if self.k <= 0.0 {
                Region::Whole
            } else {
                Region::Empty
            }
        } else {
            Region::Halfspace { offset: dot(&self.lin, &self.anchor) - self.k, normal: self.lin.clone() }
        }
    }
}

impl ConstraintFn {
    pub fn new(shape: ConstraintShape) -> Self {
        Self { shape, surrogate: ConstraintSurrogateKind::default(), curvature: None }
    }

    pub fn with_surrogate(mut self, kind: ConstraintSurrogateKind) -> Self {
        self.surrogate = kind;
        self
    }

    pub fn validate(&self, n_i: usize) -> Result<()> {
        let len = match &self.shape {
            ConstraintShape::Sphere { center, .. } => Some(center.len()),
            ConstraintShape::Affine { normal, .. } => Some(normal.len()),
            ConstraintShape::Cosine { .. } => None,
        };
        if let Some(l) = len {
            if l != n_i {
                return Err(Error::Dimension(format!("constraint has dimension {l}, block has {n_i}")));
            }
        }
        if let Some(c) = self.curvature {
            if !(c >= 0.0 && c.is_finite()) {
                return Err(Error::Invalid("constraint curvature must be nonnegative".into()));
            }
        }
        Ok(())
    }

    pub fn value(&self, x: &[f64]) -> f64 {
        match &self.shape {
            ConstraintShape::Sphere { a, center, r } => a * dist_sq(x, center) + r,
            ConstraintShape::Affine { normal, offset } => dot(normal, x) - offset,
            ConstraintShape::Cosine { amp, r } => r + amp * x.iter().map(|t| t.cos()).sum::<f64>(),
        }
    }

    pub fn grad(&self, x: &[f64]) -> Vec<f64> {
        match &self.shape {
            ConstraintShape::Sphere { a, center, .. } => {
                x.iter().zip(center).map(|(t, c)| 2.0 * a * (t - c)).collect()
            }
            ConstraintShape::Affine { normal, .. } => normal.clone(),
            ConstraintShape::Cosine { amp, .. } => x.iter().map(|t| -amp * t.sin()).collect(),
        }
    }

    /// Lipschitz constant of `∇c`: the configured override, else the analytic value.
    pub fn curvature(&self) -> f64 {
        self.curvature.unwrap_or(match &self.shape {
            ConstraintShape::Sphere { a, .. } => 2.0 * a.abs(),
            ConstraintShape::Affine { .. } => 0.0,
            ConstraintShape::Cosine { amp, .. } => amp.abs(),
        })
    }

    /// Convex pieces `(c⁺, c⁻)` with `c = c⁺ − c⁻`.
    pub fn dc_split(&self, n_i: usize) -> Result<(IsoQuadratic, IsoQuadratic)> {
        match &self.shape {
            ConstraintShape::Sphere { a, center, r } => {
                let plus = IsoQuadratic { a: a.max(0.0), anchor: center.clone(), lin: vec![0.0; n_i], k: *r };
                let minus = IsoQuadratic { a: (-a).max(0.0), anchor: center.clone(), lin: vec![0.0; n_i], k: 0.0 };
                Ok((plus, minus))
            }
            ConstraintShape::Affine { normal, offset } => Ok((
                IsoQuadratic { a: 0.0, anchor: vec![0.0; n_i], lin: normal.clone(), k: -offset },
                IsoQuadratic::zero(n_i),
            )),
            ConstraintShape::Cosine { .. } => Err(Error::MissingEvaluator(
                "cosine constraint has no difference-of-convex decomposition".into(),
            )),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn shapes() -> Vec<ConstraintFn> {
        vec![
            ConstraintFn::new(ConstraintShape::Sphere { a: -1.0, center: vec![0.0, 0.0], r: 1.0 }),
            ConstraintFn::new(ConstraintShape::Sphere { a: 0.5, center: vec![1.0, -1.0], r: -2.0 }),
            ConstraintFn::new(ConstraintShape::Affine { normal: vec![1.0, -3.0], offset: 0.2 }),
            ConstraintFn::new(ConstraintShape::Cosine { amp: 0.8, r: 0.1 }),
        ]
    }

    #[test]
    fn gradients_match_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for c in shapes() {
            for _ in 0..20 {
                let x: Vec<f64> = (0..2).map(|_| rng.random_range(-2.0..2.0)).collect();
                let g = c.grad(&x);
                for j in 0..2 {
                    let mut xp = x.clone();
                    let mut xm = x.clone();
                    xp[j] += 1e-6;
                    xm[j] -= 1e-6;
                    let fd = (c.value(&xp) - c.value(&xm)) / 2e-6;
                    assert!((fd - g[j]).abs() <= 1e-5 * (1.0 + g[j].abs()));
                }
            }
        }
    }

    #[test]
    fn dc_split_reconstructs_value() {
        let mut rng = ChaCha8Rng::seed_from_u64(12);
        for c in shapes().into_iter().take(3) {
            let (p, m) = c.dc_split(2).unwrap();
            for _ in 0..20 {
                let x: Vec<f64> = (0..2).map(|_| rng.random_range(-2.0..2.0)).collect();
                assert!((p.value(&x) - m.value(&x) - c.value(&x)).abs() < 1e-12);
            }
        }
        assert!(matches!(shapes()[3].dc_split(2), Err(Error::MissingEvaluator(_))));
    }

    #[test]
    fn ball_region_matches_sublevel_set() {
        let q = IsoQuadratic { a: 1.0, anchor: vec![2.0], lin: vec![-4.0], k: -3.0 };
        // (x−2)² − 4(x−2) − 3 ≤ 0  ⇔  x ∈ [4 − √7, 4 + √7]
        match q.region() {
            Region::Ball { center, radius } => {
                assert!((center[0] - 4.0).abs() < 1e-15);
                assert!((radius - 7f64.sqrt()).abs() < 1e-14);
            }
            r => panic!("unexpected {r:?}"),
        }
    }

    #[test]
    fn json_shape_tag() {
        let c: ConstraintFn =
            serde_json::from_str(r#"{"shape":"sphere","a":-1,"center":[0,0],"r":1,"surrogate":"dc_split"}"#).unwrap();
        assert_eq!(c.surrogate, ConstraintSurrogateKind::DcSplit);
        assert_eq!(c.value(&[2.0, 0.0]), -3.0);
    }
}
