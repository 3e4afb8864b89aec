//! Strongly convex block models of `f` and convex inner models of the
//! private constraints.
//!
//! Every smooth-term model has the centered form
//!
//! ```text
//! f̃_i(z; y) = offset + gᵀ(z − y_i) + ½(z − y_i)ᵀH(z − y_i) + Σ_j w_j (z_j⁴ − y_j⁴)
//! ```
//!
//! with `∇f̃_i(y_i; y) = ∇_{x_i} f(y)`; the kinds differ in `offset`, `H` and
//! whether the quartic part is kept.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{dist, dot, power_iteration, sym_eig_extremes, DenseMatrix};
use crate::problem::{
    ConcavePart, ConstraintFn, ConstraintSurrogateKind, IsoQuadratic, ProblemSpec, Region, SmoothKind,
};
use crate::rng;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SurrogateKind {
    /// `∇_{x_i}f(y)ᵀ(z − y_i) + β‖z − y_i‖²`.
    #[default]
    ProxLinear,
    /// Block Taylor model of order two plus `β‖z − y_i‖²`.
    SecondOrder,
    /// `f(z, y_{−i}) + β‖z − y_i‖²`, for `f` convex in each block.
    PartialConvexity,
    /// `f⁺(z, y_{−i}) − ∇f⁻(y)ᵀ(z − y_i) + β‖z − y_i‖²` (up to a constant).
    DcSplit,
}

impl FromStr for SurrogateKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "prox_linear" | "prox-linear" => Ok(Self::ProxLinear),
            "second_order" | "second-order" => Ok(Self::SecondOrder),
            "partial_convexity" | "partial-convexity" => Ok(Self::PartialConvexity),
            "dc_split" | "dc-split" => Ok(Self::DcSplit),
            other => Err(Error::Invalid(format!("unknown surrogate kind {other:?}"))),
        }
    }
}

impl fmt::Display for SurrogateKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Self::ProxLinear => "prox_linear",
            Self::SecondOrder => "second_order",
            Self::PartialConvexity => "partial_convexity",
            Self::DcSplit => "dc_split",
        })
    }
}

/// Curvature matrix `H` of a model.
#[derive(Debug, Clone, PartialEq)]
pub enum Curvature {
    /// `h·I`.
    Scalar(f64),
    Dense(DenseMatrix),
}

impl Curvature {
    fn apply(&self, d: &[f64], out: &mut [f64]) {
        match self {
            Curvature::Scalar(h) => out.iter_mut().zip(d).for_each(|(o, v)| *o = h * v),
            Curvature::Dense(m) => {
                for (k, o) in out.iter_mut().enumerate() {
                    *o = dot(m.row(k), d);
                }
            }
        }
    }
}

/// Strongly convex model `f̃_i(·; y)` of `f` in block `i`.
#[derive(Debug, Clone, PartialEq)]
pub struct SurrogateModel {
    pub kind: SurrogateKind,
    pub block: usize,
    pub beta: f64,
    /// `y_i`.
    pub base_block: Vec<f64>,
    /// `∇_{x_i} f(y)`.
    pub base_grad: Vec<f64>,
    offset: f64,
    /// Linear coefficient in the centered form (equals `base_grad` unless a
    /// quartic part is kept).
    lin: Vec<f64>,
    pub curvature: Curvature,
    quartic: Option<Vec<f64>>,
    /// Strong-convexity modulus `c_f̃`.
    pub modulus: f64,
    /// Lipschitz constant of `∇f̃_i(·; y)`.
    pub lip_e: f64,
    /// Lipschitz constant of `y ↦ ∇f̃_i(z; y)`.
    pub lip_b: f64,
}

impl SurrogateModel {
    pub fn dim(&self) -> usize {
        self.base_block.len()
    }

    pub fn value(&self, z: &[f64]) -> f64 {
        let d: Vec<f64> = z.iter().zip(&self.base_block).map(|(a, b)| a - b).collect();
        let mut hd = vec![0.0; d.len()];
        self.curvature.apply(&d, &mut hd);
        let mut v = self.offset + dot(&self.lin, &d) + 0.5 * dot(&d, &hd);
        if let Some(w) = &self.quartic {
            v += w
                .iter()
                .zip(z.iter().zip(&self.base_block))
                .map(|(w, (a, b))| w * (a.powi(4) - b.powi(4)))
                .sum::<f64>();
        }
        v
    }

    pub fn grad_into(&self, z: &[f64], out: &mut [f64]) {
        let d: Vec<f64> = z.iter().zip(&self.base_block).map(|(a, b)| a - b).collect();
        self.curvature.apply(&d, out);
        for (o, l) in out.iter_mut().zip(&self.lin) {
            *o += l;
        }
        if let Some(w) = &self.quartic {
            for ((o, w), a) in out.iter_mut().zip(w).zip(z) {
                *o += 4.0 * w * a.powi(3);
            }
        }
    }

    pub fn grad(&self, z: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.dim()];
        self.grad_into(z, &mut out);
        out
    }

    /// `Some(h)` when the model is `offset + gᵀ(z − y_i) + (h/2)‖z − y_i‖²`,
    /// which admits closed-form minimization with separable terms.
    pub fn scalar_curvature(&self) -> Option<f64> {
        match (&self.curvature, &self.quartic) {
            (Curvature::Scalar(h), None) => Some(*h),
            _ => None,
        }
    }

    /// `‖∇f̃_i(y_i; y) − ∇_{x_i}f(y)‖`.
    pub fn gradient_consistency_residual(&self) -> f64 {
        dist(&self.grad(&self.base_block), &self.base_grad)
    }
}

/// Per-block constants and cached blocks of the quadratic part, computed once
/// per problem and surrogate choice.
#[derive(Debug, Clone)]
pub struct SurrogateFactory<'a> {
    spec: &'a ProblemSpec,
    kind: SurrogateKind,
    beta: f64,
    /// `Q_ii` of the quadratic (or convex) part, when the kind needs it.
    block_quad: Vec<Option<DenseMatrix>>,
    modulus: Vec<f64>,
    lip_e: Vec<f64>,
    lip_b: Vec<f64>,
}

impl<'a> SurrogateFactory<'a> {
    pub fn new(spec: &'a ProblemSpec, kind: SurrogateKind, beta: f64) -> Result<Self> {
        if !(beta.is_finite() && beta > 0.0) {
            return Err(Error::Invalid(format!("beta must be positive, got {beta}")));
        }
        let part = spec.partition();
        let nb = spec.n_blocks();
        let lf = spec.lipschitz();
        let two_beta = 2.0 * beta;
        let mut block_quad = vec![None; nb];
        let mut modulus = vec![two_beta; nb];
        let mut lip_e = vec![0.0; nb];
        let mut lip_b = vec![0.0; nb];
        match kind {
            SurrogateKind::ProxLinear => {
                lip_e.fill(two_beta);
                lip_b.fill(lf + two_beta);
            }
            SurrogateKind::SecondOrder => {
                for i in 0..nb {
                    block_quad[i] = spec.smooth.quadratic_part().map(|q| q.block_matrix(part.range(i)));
                    let radius = spec.sets[i].coordinate_radius();
                    let lh = spec.smooth.hessian_lipschitz(part, i, radius.unwrap_or(f64::INFINITY));
                    let diam_term = if lh == 0.0 {
                        0.0
                    } else {
                        lh * spec.sets[i].diameter().unwrap_or(f64::INFINITY)
                    };
                    lip_e[i] = lf + two_beta;
                    lip_b[i] = 2.0 * lf + two_beta + diam_term;
                }
            }
            SurrogateKind::PartialConvexity => {
                for i in 0..nb {
                    modulus[i] = two_beta + spec.smooth.block_convex_modulus(part, i)?;
                    block_quad[i] = spec.smooth.quadratic_part().map(|q| q.block_matrix(part.range(i)));
                    lip_e[i] = lf + two_beta;
                    lip_b[i] = lf + two_beta;
                }
            }
            SurrogateKind::DcSplit => {
                let minus_global = match &spec.smooth.kind {
                    SmoothKind::Dc { minus, .. } => match minus {
                        ConcavePart::Quadratic(m) => power_iteration(m.dim(), |v| m.q.matvec(v), 1e-10, 20_000) * (1.0 + 1e-6),
                        ConcavePart::LogCosh { weight } => *weight,
                        ConcavePart::Linear { .. } => 0.0,
                    },
                    _ => {
                        return Err(Error::MissingEvaluator(
                            "dc_split surrogate needs a difference-of-convex smooth term".into(),
                        ))
                    }
                };
                for i in 0..nb {
                    let (lo, hi) = spec.smooth.dc_plus_constants(part, i)?;
                    modulus[i] = two_beta + lo;
                    block_quad[i] = spec.smooth.dc_plus().map(|q| q.block_matrix(part.range(i)));
                    lip_e[i] = hi + two_beta;
                    // ‖∇²f⁺‖ ≤ L_f + L⁻
                    lip_b[i] = lf + 2.0 * minus_global + two_beta;
                }
            }
        }
        Ok(Self { spec, kind, beta, block_quad, modulus, lip_e, lip_b })
    }

    pub fn kind(&self) -> SurrogateKind {
        self.kind
    }

    pub fn beta(&self) -> f64 {
        self.beta
    }

    pub fn spec(&self) -> &'a ProblemSpec {
        self.spec
    }

    /// `min_i c_f̃` over blocks.
    pub fn modulus(&self) -> f64 {
        self.modulus.iter().copied().fold(f64::INFINITY, f64::min)
    }

    pub fn lip_e(&self) -> f64 {
        self.lip_e.iter().copied().fold(0.0, f64::max)
    }

    pub fn lip_b(&self) -> f64 {
        self.lip_b.iter().copied().fold(0.0, f64::max)
    }

    /// Builds `f̃_i(·; y)` given the full base point `y`.
    pub fn build(&self, i: usize, y: &[f64]) -> Result<SurrogateModel> {
        let spec = self.spec;
        spec.check_dim(y)?;
        let part = spec.partition();
        let yi = part.block(y, i).to_vec();
        let grad = spec.smooth.block_grad(part, i, y);
        let two_beta = 2.0 * self.beta;
        let with_beta = |mut m: DenseMatrix| {
            for k in 0..m.rows() {
                m.set(k, k, m.get(k, k) + two_beta);
            }
            Curvature::Dense(m)
        };
        let (offset, lin, curvature, quartic) = match self.kind {
            SurrogateKind::ProxLinear => (0.0, grad.clone(), Curvature::Scalar(two_beta), None),
            SurrogateKind::SecondOrder => {
                let h = match (&spec.smooth.kind, &self.block_quad[i]) {
                    (SmoothKind::Quadratic(_), Some(q)) => q.clone(),
                    _ => spec.smooth.block_hessian(part, i, y),
                };
                let (lo, _) = sym_eig_extremes(&h);
                if lo < -1e-10 {
                    return Err(Error::Domain(format!(
                        "block {i}: Hessian at the base point is indefinite (λ_min = {lo:.3e}); second_order needs it PSD"
                    )));
                }
                (spec.smooth.value(y), grad.clone(), with_beta(h), None)
            }
            SurrogateKind::PartialConvexity => {
                let h = self.block_quad[i].clone().unwrap_or_else(|| DenseMatrix::zeros(yi.len(), yi.len()));
                match spec.smooth.quartic_weights() {
                    Some(w) => {
                        let w: Vec<f64> = w[part.range(i)].to_vec();
                        let lin = grad.iter().zip(&w).zip(&yi).map(|((g, w), t)| g - 4.0 * w * t.powi(3)).collect();
                        (spec.smooth.value(y), lin, with_beta(h), Some(w))
                    }
                    None => (spec.smooth.value(y), grad.clone(), with_beta(h), None),
                }
            }
            SurrogateKind::DcSplit => {
                let h = self.block_quad[i].clone().expect("dc split caches the convex block");
                (spec.smooth.value(y), grad.clone(), with_beta(h), None)
            }
        };
        Ok(SurrogateModel {
            kind: self.kind,
            block: i,
            beta: self.beta,
            base_block: yi,
            base_grad: grad,
            offset,
            lin,
            curvature,
            quartic,
            modulus: self.modulus[i],
            lip_e: self.lip_e[i],
            lip_b: self.lip_b[i],
        })
    }
}

/// One-shot construction of `f̃_i(·; y)`.
pub fn build_surrogate(kind: SurrogateKind, spec: &ProblemSpec, i: usize, y: &[f64], beta: f64) -> Result<SurrogateModel> {
    if i >= spec.n_blocks() {
        return Err(Error::Dimension(format!("block {i} out of range")));
    }
    SurrogateFactory::new(spec, kind, beta)?.build(i, y)
}

/// Convex model `c̃_{i,j}(·; y_i)` of a private constraint.
#[derive(Debug, Clone, PartialEq)]
pub struct ConstraintSurrogate {
    pub kind: ConstraintSurrogateKind,
    pub block: usize,
    pub index: usize,
    pub base: Vec<f64>,
    pub model: IsoQuadratic,
}

impl ConstraintSurrogate {
    pub fn value(&self, z: &[f64]) -> f64 {
        self.model.value(z)
    }

    pub fn grad(&self, z: &[f64]) -> Vec<f64> {
        self.model.grad(z)
    }

    /// `{z : c̃(z; y) ≤ 0}`.
    pub fn region(&self) -> Region {
        self.model.region()
    }
}

pub fn build_constraint_surrogate(
    kind: ConstraintSurrogateKind,
    constraint: &ConstraintFn,
    (i, j): (usize, usize),
    y_i: &[f64],
) -> Result<ConstraintSurrogate> {
    constraint.validate(y_i.len())?;
    let model = match kind {
        ConstraintSurrogateKind::DescentLemma => {
            let l = constraint.curvature();
            if !l.is_finite() {
                return Err(Error::MissingEvaluator(format!("constraint ({i}, {j}) has no curvature constant")));
            }
            IsoQuadratic { a: 0.5 * l, anchor: y_i.to_vec(), lin: constraint.grad(y_i), k: constraint.value(y_i) }
        }
        ConstraintSurrogateKind::DcSplit => {
            let (plus, minus) = constraint.dc_split(y_i.len())?;
            // c⁺(z) − c⁻(y) − ∇c⁻(y)ᵀ(z − y), re-centered at the anchor of c⁺
            let gm = minus.grad(y_i);
            let shift: f64 = gm.iter().zip(plus.anchor.iter().zip(y_i)).map(|(g, (p, y))| g * (p - y)).sum();
            IsoQuadratic {
                a: plus.a,
                lin: plus.lin.iter().zip(&gm).map(|(l, g)| l - g).collect(),
                k: plus.k - minus.value(y_i) - shift,
                anchor: plus.anchor,
            }
        }
    };
    Ok(ConstraintSurrogate { kind, block: i, index: j, base: y_i.to_vec(), model })
}

/// Surrogates of every constraint of block `i`, each built with its own kind.
pub fn block_constraint_surrogates(spec: &ProblemSpec, i: usize, y_i: &[f64]) -> Result<Vec<ConstraintSurrogate>> {
    spec.block_constraints(i)
        .iter()
        .enumerate()
        .map(|(j, c)| build_constraint_surrogate(c.surrogate, c, (i, j), y_i))
        .collect()
}

/// Sampled estimates of the constants declared by a model.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AuditReport {
    pub samples: usize,
    pub gradient_consistency: f64,
    /// Smallest `(∇f̃(a) − ∇f̃(b))ᵀ(a − b)/‖a − b‖²`.
    pub min_strong_convexity: f64,
    /// Largest `‖∇f̃(a) − ∇f̃(b)‖/‖a − b‖`.
    pub max_lip_e: f64,
    /// Largest `‖∇f̃(z; y) − ∇f̃(z; y')‖/‖y − y'‖`.
    pub max_lip_b: f64,
    pub modulus_ok: bool,
    pub lip_e_ok: bool,
    pub lip_b_ok: bool,
    pub passed: bool,
}

/// Secant-sampling cross-check of a model's declared constants, with 5% slack.
///
/// Probe points for `z` are drawn near `y_i` and projected on `X_i`; perturbed
/// base points `y'` are drawn near `y` and projected on `X`.
pub fn audit_surrogate(model: &SurrogateModel, spec: &ProblemSpec, y: &[f64], samples: usize, seed: u64) -> Result<AuditReport> {
    let samples = samples.max(1);
    let part = spec.partition();
    let i = model.block;
    let factory = SurrogateFactory::new(spec, model.kind, model.beta)?;
    let mut rng = rng::seeded(seed);
    let ni = model.dim();
    let mut min_sc = f64::INFINITY;
    let mut max_le = 0.0f64;
    let mut max_lb = 0.0f64;
    let near = |rng: &mut rng::Prng, c: &[f64], s: f64, set: &crate::problem::ConvexBlockSet| {
        let mut v: Vec<f64> = c.iter().map(|t| t + s * rng::normal(rng)).collect();
        set.project_in_place(&mut v);
        v
    };
    for _ in 0..samples {
        let a = near(&mut rng, &model.base_block, 1.0, &spec.sets[i]);
        let b = near(&mut rng, &model.base_block, 1.0, &spec.sets[i]);
        let d = dist(&a, &b);
        if d > 1e-9 {
            let ga = model.grad(&a);
            let gb = model.grad(&b);
            let inner: f64 = ga.iter().zip(&gb).zip(a.iter().zip(&b)).map(|((p, q), (s, t))| (p - q) * (s - t)).sum();
            min_sc = min_sc.min(inner / (d * d));
            max_le = max_le.max(dist(&ga, &gb) / d);
        }
        let mut y2 = y.to_vec();
        for blk in 0..spec.n_blocks() {
            let moved = near(&mut rng, part.block(y, blk), 0.3, &spec.sets[blk]);
            part.block_mut(&mut y2, blk).copy_from_slice(&moved);
        }
        let dy = dist(y, &y2);
        if dy > 1e-9 {
            let other = factory.build(i, &y2)?;
            let z = near(&mut rng, &model.base_block, 1.0, &spec.sets[i]);
            max_lb = max_lb.max(dist(&model.grad(&z), &other.grad(&z)) / dy);
        }
    }
    debug_assert_eq!(ni, part.size(i));
    let gradient_consistency = model.gradient_consistency_residual();
    let modulus_ok = min_sc >= model.modulus * 0.95 || !min_sc.is_finite();
    let lip_e_ok = max_le <= model.lip_e * 1.05;
    let lip_b_ok = max_lb <= model.lip_b * 1.05;
    Ok(AuditReport {
        samples,
        gradient_consistency,
        min_strong_convexity: min_sc,
        max_lip_e: max_le,
        max_lip_b: max_lb,
        modulus_ok,
        lip_e_ok,
        lip_b_ok,
        passed: modulus_ok && lip_e_ok && lip_b_ok && gradient_consistency <= 1e-10 * (1.0 + model.base_grad.iter().map(|g| g.abs()).fold(0.0, f64::max)),
    })
}
