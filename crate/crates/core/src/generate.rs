//! Seeded random instance generators.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{dist, dot, norm, power_iteration, CsrMatrix, DenseMatrix, Matrix};
use crate::problem::{
    check_feasibility, BlockPartition, BlockRegularizer, ConcavePart, ConstraintFn, ConstraintShape,
    ConvexBlockSet, ProblemSpec, QuadraticForm, SmoothKind, SmoothTerm,
};
use crate::rng::{self, Prng};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum GeneratorKind {
    LassoDense,
    LassoSparseRows,
    DcLeastSquares,
    NccBallQp,
}

impl FromStr for GeneratorKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "lasso-dense" => Ok(Self::LassoDense),
            "lasso-sparse-rows" => Ok(Self::LassoSparseRows),
            "dc-least-squares" => Ok(Self::DcLeastSquares),
            "ncc-ball-qp" => Ok(Self::NccBallQp),
            other => Err(Error::Invalid(format!("unknown generator kind {other:?}"))),
        }
    }
}

impl fmt::Display for GeneratorKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Self::LassoDense => "lasso-dense",
            Self::LassoSparseRows => "lasso-sparse-rows",
            Self::DcLeastSquares => "dc-least-squares",
            Self::NccBallQp => "ncc-ball-qp",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GeneratorSpec {
    pub kind: GeneratorKind,
    pub n: usize,
    pub blocks: usize,
    /// Regularization weight; default is `0.1·‖Aᵀb‖_∞`.
    #[serde(default)]
    pub lambda: Option<f64>,
    /// Fraction of blocks made cheap (lasso-sparse-rows).
    #[serde(default = "default_sparse_fraction")]
    pub sparse_fraction: f64,
    /// Target ratio between the largest and smallest column scale squared.
    #[serde(default)]
    pub condition: Option<f64>,
    #[serde(default)]
    pub seed: u64,
}

fn default_sparse_fraction() -> f64 {
    0.3
}

impl GeneratorSpec {
    pub fn new(kind: GeneratorKind, n: usize, blocks: usize, seed: u64) -> Self {
        Self { kind, n, blocks, lambda: None, sparse_fraction: default_sparse_fraction(), condition: None, seed }
    }

    fn validate(&self) -> Result<()> {
        if self.n == 0 || self.blocks == 0 || self.blocks > self.n {
            return Err(Error::Invalid(format!("cannot build {} blocks over {} variables", self.blocks, self.n)));
        }
        if !(0.0..=1.0).contains(&self.sparse_fraction) {
            return Err(Error::Invalid("sparse_fraction must lie in [0, 1]".into()));
        }
        if let Some(l) = self.lambda {
            if !(l >= 0.0) {
                return Err(Error::Invalid("lambda must be nonnegative".into()));
            }
        }
        if let Some(c) = self.condition {
            if !(c >= 1.0) {
                return Err(Error::Invalid("condition must be at least 1".into()));
            }
        }
        Ok(())
    }
}

/// Largest eigenvalue of a PSD quadratic, slightly inflated so that it is a
/// safe Lipschitz constant.
pub fn quadratic_lipschitz(q: &Matrix) -> f64 {
    let n = q.rows();
    power_iteration(n, |v| q.matvec(v), 1e-10, 20_000) * (1.0 + 1e-6)
}

struct LeastSquares {
    a: DenseMatrix,
    b: Vec<f64>,
}

fn gaussian_design(g: &GeneratorSpec, rng: &mut Prng) -> LeastSquares {
    let n = g.n;
    let m = 2 * n;
    let inv = 1.0 / (m as f64).sqrt();
    let mut data: Vec<f64> = (0..m * n).map(|_| rng::normal(rng) * inv).collect();
    if let Some(cond) = g.condition {
        for j in 0..n {
            let t = if n > 1 { j as f64 / (n - 1) as f64 } else { 0.0 };
            let s = cond.powf(-0.5 * t);
            for r in 0..m {
                data[r * n + j] *= s;
            }
        }
    }
    let a = DenseMatrix::from_row_major(m, n, data).expect("sized by construction");
    let x_true: Vec<f64> =
        (0..n).map(|_| if rng::unit(rng) < 0.1 { rng::normal(rng) } else { 0.0 }).collect();
    let mut b = a.matvec(&x_true);
    for v in b.iter_mut() {
        *v += 0.01 * rng::normal(rng);
    }
    LeastSquares { a, b }
}

fn lasso_from(ls: &LeastSquares, q: Matrix, g: &GeneratorSpec, name: &str) -> Result<ProblemSpec> {
    let c = ls.a.matvec_t(&ls.b);
    let constant = 0.5 * dot(&ls.b, &ls.b);
    let lambda = g.lambda.unwrap_or_else(|| 0.1 * c.iter().fold(0.0f64, |m, v| m.max(v.abs())));
    let lf = quadratic_lipschitz(&q);
    let part = BlockPartition::uniform(g.n, g.blocks)?;
    let nb = part.n_blocks();
    ProblemSpec::new(
        name,
        part,
        SmoothTerm::new(SmoothKind::Quadratic(QuadraticForm::new(q, c, constant)?), lf),
        vec![BlockRegularizer::L1 { lambda }; nb],
        vec![ConvexBlockSet::Whole; nb],
        None,
        None,
    )
}

fn lasso_dense(g: &GeneratorSpec) -> Result<ProblemSpec> {
    let mut rng = rng::seeded(g.seed);
    let ls = gaussian_design(g, &mut rng);
    let q = Matrix::Dense(ls.a.gram());
    lasso_from(&ls, q, g, "lasso-dense")
}

/// Same draws as [`lasso_dense`]; then the columns of a random subset of
/// blocks are confined to private rows of `A`, so their rows of `AᵀA` only
/// touch their own block.
fn lasso_sparse_rows(g: &GeneratorSpec) -> Result<ProblemSpec> {
    let mut rng = rng::seeded(g.seed);
    let mut ls = gaussian_design(g, &mut rng);
    let part = BlockPartition::uniform(g.n, g.blocks)?;
    let nb = part.n_blocks();
    let n_cheap = (g.sparse_fraction * nb as f64).round() as usize;
    if n_cheap == 0 {
        let q = Matrix::Dense(ls.a.gram());
        return lasso_from(&ls, q, g, "lasso-sparse-rows");
    }
    let mut order: Vec<usize> = (0..nb).collect();
    rng::shuffle(&mut rng, &mut order);
    let mut cheap = vec![false; nb];
    for &i in &order[..n_cheap] {
        cheap[i] = true;
    }
    let n = g.n;
    let m = ls.a.rows();
    // block i owns rows [2·offset_i, 2·offset_i + 2·n_i)
    let mut row_owner = vec![usize::MAX; m];
    for i in (0..nb).filter(|&i| cheap[i]) {
        let r = part.range(i);
        for o in &mut row_owner[2 * r.start..2 * r.end] {
            *o = i;
        }
    }
    let mut data = vec![0.0; m * n];
    for r in 0..m {
        for j in 0..n {
            let bj = part.block_of(j);
            let keep = if cheap[bj] { row_owner[r] == bj } else { row_owner[r] == usize::MAX };
            if keep {
                let boost = if cheap[bj] { (m as f64 / (2 * part.size(bj)) as f64).sqrt() } else { 1.0 };
                data[r * n + j] = ls.a.get(r, j) * boost;
            }
        }
    }
    ls.a = DenseMatrix::from_row_major(m, n, data)?;
    let dense = ls.a.gram();
    let (mut ri, mut ci, mut vals) = (Vec::new(), Vec::new(), Vec::new());
    for r in 0..n {
        for (c, &v) in dense.row(r).iter().enumerate() {
            if v != 0.0 {
                ri.push(r);
                ci.push(c);
                vals.push(v);
            }
        }
    }
    let q = Matrix::Sparse(CsrMatrix::from_triplets(n, n, &ri, &ci, &vals)?);
    lasso_from(&ls, q, g, "lasso-sparse-rows")
}

/// `½‖Ax − b‖² − μ Σ log cosh(x_j) + λ‖x‖₁` over the box `[−5, 5]ⁿ`.
fn dc_least_squares(g: &GeneratorSpec) -> Result<ProblemSpec> {
    let mut rng = rng::seeded(g.seed);
    let ls = gaussian_design(g, &mut rng);
    let q = Matrix::Dense(ls.a.gram());
    let c = ls.a.matvec_t(&ls.b);
    let constant = 0.5 * dot(&ls.b, &ls.b);
    let lambda = g.lambda.unwrap_or_else(|| 0.05 * c.iter().fold(0.0f64, |m, v| m.max(v.abs())));
    let lq = quadratic_lipschitz(&q);
    let mu = 0.5;
    let part = BlockPartition::uniform(g.n, g.blocks)?;
    let nb = part.n_blocks();
    let sets = part
        .sizes()
        .iter()
        .map(|&s| ConvexBlockSet::Box { lower: vec![-5.0; s], upper: vec![5.0; s] })
        .collect();
    ProblemSpec::new(
        "dc-least-squares",
        part,
        SmoothTerm::new(
            SmoothKind::Dc {
                plus: QuadraticForm::new(q, c, constant)?,
                minus: ConcavePart::LogCosh { weight: mu },
            },
            lq.max(mu),
        ),
        vec![BlockRegularizer::L1 { lambda }; nb],
        sets,
        None,
        None,
    )
}

/// Strongly convex quadratic over `[−3, 3]ⁿ` with the nonconvex ring
/// constraints `1 − ‖x_i‖² ≤ 0`; the unconstrained minimizer sits inside the
/// excluded balls so the constraints are active at the solution.
fn ncc_ball_qp(g: &GeneratorSpec) -> Result<ProblemSpec> {
    let mut rng = rng::seeded(g.seed);
    let n = g.n;
    let m = 2 * n;
    let inv = 1.0 / (m as f64).sqrt();
    let a = DenseMatrix::from_row_major(m, n, (0..m * n).map(|_| rng::normal(&mut rng) * inv).collect())?;
    let mut q = a.gram();
    for j in 0..n {
        q.set(j, j, q.get(j, j) + 0.1);
    }
    let part = BlockPartition::uniform(n, g.blocks)?;
    let nb = part.n_blocks();
    let mut xc = vec![0.0; n];
    let mut x0 = vec![0.0; n];
    for i in 0..nb {
        let r = part.range(i);
        let dir: Vec<f64> = loop {
            let d: Vec<f64> = r.clone().map(|_| rng::normal(&mut rng)).collect();
            if norm(&d) > 1e-3 {
                break d;
            }
        };
        let nd = norm(&dir);
        for (k, j) in r.clone().enumerate() {
            x0[j] = 2.0 * dir[k] / nd;
        }
        let small: Vec<f64> = r.clone().map(|_| rng::normal(&mut rng)).collect();
        let ns = norm(&small).max(1e-12);
        for (k, j) in r.enumerate() {
            xc[j] = 0.3 * small[k] / ns;
        }
    }
    let c = q.matvec(&xc);
    let q = Matrix::Dense(q);
    let lf = quadratic_lipschitz(&q);
    let sets = part
        .sizes()
        .iter()
        .map(|&s| ConvexBlockSet::Box { lower: vec![-3.0; s], upper: vec![3.0; s] })
        .collect();
    let constraints = part
        .sizes()
        .iter()
        .map(|&s| vec![ConstraintFn::new(ConstraintShape::Sphere { a: -1.0, center: vec![0.0; s], r: 1.0 })])
        .collect();
    ProblemSpec::new(
        "ncc-ball-qp",
        part,
        SmoothTerm::new(SmoothKind::Quadratic(QuadraticForm::new(q, c, 0.0)?), lf),
        vec![BlockRegularizer::Zero; nb],
        sets,
        Some(constraints),
        Some(x0),
    )
}

/// Builds the instance and checks it with [`check_instance`].
pub fn generate(g: &GeneratorSpec) -> Result<ProblemSpec> {
    g.validate()?;
    let spec = match g.kind {
        GeneratorKind::LassoDense => lasso_dense(g)?,
        GeneratorKind::LassoSparseRows => lasso_sparse_rows(g)?,
        GeneratorKind::DcLeastSquares => dc_least_squares(g)?,
        GeneratorKind::NccBallQp => ncc_ball_qp(g)?,
    };
    check_instance(&spec, g.seed)?;
    Ok(spec)
}

fn random_point(spec: &ProblemSpec, rng: &mut Prng, scale: f64) -> Vec<f64> {
    let mut x: Vec<f64> = (0..spec.dim()).map(|_| scale * rng::normal(rng)).collect();
    for i in 0..spec.n_blocks() {
        spec.sets[i].project_in_place(spec.partition().block_mut(&mut x, i));
    }
    x
}

/// Sampled checks of the evaluator contracts: directional and per-coordinate
/// finite differences of `f`, secant bound on block gradients, projection
/// idempotency, prox optimality, and feasibility of the stored start.
pub fn check_instance(spec: &ProblemSpec, seed: u64) -> Result<()> {
    let mut rng = rng::worker_stream(seed, usize::MAX - 1);
    let part = spec.partition().clone();
    let n = spec.dim();
    let fail = |what: String| Err(Error::InvariantViolation(what));
    for _ in 0..20 {
        let x = random_point(spec, &mut rng, 1.0);
        let grad = spec.smooth.grad(&x);
        let d: Vec<f64> = (0..n).map(|_| rng::normal(&mut rng)).collect();
        let d_norm = norm(&d);
        let h = 1e-5 / d_norm;
        let xp: Vec<f64> = x.iter().zip(&d).map(|(a, b)| a + h * b).collect();
        let xm: Vec<f64> = x.iter().zip(&d).map(|(a, b)| a - h * b).collect();
        let fd = (spec.smooth.value(&xp) - spec.smooth.value(&xm)) / (2.0 * h);
        let an = dot(&grad, &d);
        let scale = 1.0 + an.abs() + 1e-8 * spec.smooth.value(&x).abs() / (h * d_norm);
        if (fd - an).abs() > 1e-5 * scale {
            return fail(format!("directional derivative {an} disagrees with finite difference {fd}"));
        }
        for _ in 0..3 {
            let j = rng::index(&mut rng, n);
            let mut xp = x.clone();
            let mut xm = x.clone();
            let hj = 1e-5 * (1.0 + x[j].abs());
            xp[j] += hj;
            xm[j] -= hj;
            let fd = (spec.smooth.value(&xp) - spec.smooth.value(&xm)) / (2.0 * hj);
            let tol = 1e-5 * (1.0 + grad[j].abs()) + 1e-10 * spec.smooth.value(&x).abs() / hj;
            if (fd - grad[j]).abs() > tol {
                return fail(format!("partial derivative {j}: {} vs finite difference {fd}", grad[j]));
            }
        }
        let y = random_point(spec, &mut rng, 1.0);
        let i = rng::index(&mut rng, spec.n_blocks());
        let gx = spec.smooth.block_grad(&part, i, &x);
        let gy = spec.smooth.block_grad(&part, i, &y);
        if dist(&gx, &gy) > spec.lipschitz() * dist(&x, &y) * (1.0 + 1e-9) {
            return fail(format!("block {i}: gradient secant exceeds L_f"));
        }
    }
    for _ in 0..100 {
        let i = rng::index(&mut rng, spec.n_blocks());
        let ni = part.size(i);
        let v: Vec<f64> = (0..ni).map(|_| 4.0 * rng::normal(&mut rng)).collect();
        let p = spec.sets[i].project(&v);
        if dist(&p, &spec.sets[i].project(&p)) > 1e-12 {
            return fail(format!("block {i}: projection is not idempotent"));
        }
        let t = 0.01 + rng::unit(&mut rng);
        let z = spec.regs[i].prox(&v, t);
        let w: Vec<f64> = (0..ni).map(|_| 4.0 * rng::normal(&mut rng)).collect();
        let obj = |p: &[f64]| spec.regs[i].value(p) + dist(p, &v).powi(2) / (2.0 * t);
        if obj(&z) > obj(&w) + 1e-9 {
            return fail(format!("block {i}: prox output is not optimal"));
        }
    }
    if spec.is_constrained() {
        let x0 = spec.x0.as_ref().expect("validated at construction");
        let rep = check_feasibility(spec, x0, 1e-12);
        if !rep.feasible {
            return fail(format!("stored start violates the constraints by {:.3e}", rep.max_violation));
        }
    }
    Ok(())
}
