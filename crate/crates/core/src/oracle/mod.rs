//! Reference solvers for cross-checking the main pipeline on small instances.
//!
//! Nothing here calls the surrogate, subproblem or engine code when choosing
//! where to move; only the problem's own evaluators (values, gradients, set
//! projections, constraint values) are shared.

use serde::Serialize;

use crate::error::{Error, Result};
use crate::metrics::stationarity_ncc;
use crate::problem::{
    project_ball, project_halfspace, BlockRegularizer, ConstraintFn, ConstraintShape, ConvexBlockSet, ProblemSpec, Region,
};
use crate::subproblem::BestResponseRequest;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct OracleResult {
    pub x: Vec<f64>,
    pub objective: f64,
    pub method: String,
    /// Stationarity level the result is certified to; always positive.
    pub tolerance: f64,
    /// Measured stationarity at `x`.
    pub stationarity: f64,
    pub sweeps: usize,
    /// The sweep budget ran out before `tolerance` was reached.
    pub censored: bool,
}

const DEFAULT_MAX_SWEEPS: usize = 2_000_000;
const FEAS_TOL: f64 = 1e-12;

fn shrink_l1(v: &mut [f64], tau: f64) {
    for t in v.iter_mut() {
        *t = t.signum() * (t.abs() - tau).max(0.0);
    }
}

fn shrink_group(v: &mut [f64], tau: f64) {
    let n = v.iter().map(|t| t * t).sum::<f64>().sqrt();
    let s = if n > tau { 1.0 - tau / n } else { 0.0 };
    v.iter_mut().for_each(|t| *t *= s);
}

fn prox_reg(reg: &BlockRegularizer, v: &mut [f64], t: f64) {
    match *reg {
        BlockRegularizer::Zero => {}
        BlockRegularizer::L1 { lambda } => shrink_l1(v, t * lambda),
        BlockRegularizer::GroupL2 { lambda } => shrink_group(v, t * lambda),
    }
}

/// Convex inner approximation of one private constraint around a feasible point.
#[derive(Debug, Clone, PartialEq)]
enum Cut {
    Half { normal: Vec<f64>, offset: f64 },
    Ball { center: Vec<f64>, radius: f64 },
}

impl Cut {
    fn project(&self, z: &mut [f64]) {
        match self {
            Cut::Half { normal, offset } => project_halfspace(z, normal, *offset),
            Cut::Ball { center, radius } => project_ball(z, center, *radius),
        }
    }
}

fn halfspace_below(value: f64, grad: &[f64], p: &[f64]) -> Option<Cut> {
    // c(p) + gᵀ(x − p) ≤ 0
    if grad.iter().all(|g| *g == 0.0) {
        return None;
    }
    let offset = grad.iter().zip(p).map(|(g, x)| g * x).sum::<f64>() - value;
    Some(Cut::Half { normal: grad.to_vec(), offset })
}

/// Region where an upper model of `c` built at `p` is nonpositive: the tangent
/// plane for concave spheres, the exact set for affine and convex spheres, and
/// the curvature ball for everything else.
fn inner_cut(c: &ConstraintFn, p: &[f64]) -> Option<Cut> {
    match &c.shape {
        ConstraintShape::Affine { normal, offset } => Some(Cut::Half { normal: normal.clone(), offset: *offset }),
        ConstraintShape::Sphere { a, center, r } if *a > 0.0 => {
            Some(Cut::Ball { center: center.clone(), radius: (-r / a).max(0.0).sqrt() })
        }
        ConstraintShape::Sphere { .. } => halfspace_below(c.value(p), &c.grad(p), p),
        ConstraintShape::Cosine { .. } => {
            let (v, g, l) = (c.value(p), c.grad(p), c.curvature());
            if l == 0.0 {
                return halfspace_below(v, &g, p);
            }
            let center: Vec<f64> = p.iter().zip(&g).map(|(x, gk)| x - gk / l).collect();
            let r2 = g.iter().map(|t| t * t).sum::<f64>() / (l * l) - 2.0 * v / l;
            Some(Cut::Ball { center, radius: r2.max(0.0).sqrt() })
        }
    }
}

/// Projection onto `set` and every cut by cyclic Dykstra.
fn project_all(set: &ConvexBlockSet, cuts: &[Cut], z: &mut [f64]) {
    if cuts.is_empty() {
        set.project_in_place(z);
        return;
    }
    let n = z.len();
    let scale = 1.0 + z.iter().map(|t| t.abs()).fold(0.0, f64::max);
    let mut incr = vec![vec![0.0; n]; cuts.len() + 1];
    let mut y = vec![0.0; n];
    for _ in 0..100_000 {
        let prev = z.to_vec();
        for (j, inc) in incr.iter_mut().enumerate() {
            for k in 0..n {
                y[k] = z[k] + inc[k];
            }
            let before = y.clone();
            match j {
                0 => set.project_in_place(&mut y),
                _ => cuts[j - 1].project(&mut y),
            }
            for k in 0..n {
                inc[k] = before[k] - y[k];
            }
            z.copy_from_slice(&y);
        }
        let moved: f64 = prev.iter().zip(z.iter()).map(|(a, b)| (a - b) * (a - b)).sum();
        if moved.sqrt() <= 1e-15 * scale {
            break;
        }
    }
}

/// `argmin_z ½‖z − v‖² + t·g(z)` by alternating proximal steps with
/// correction terms; `project` is the projection onto the feasible set.
fn alternating_prox(reg: &BlockRegularizer, v: &[f64], t: f64, project: impl Fn(&mut [f64])) -> Vec<f64> {
    let n = v.len();
    let mut z = v.to_vec();
    let (mut p, mut q) = (vec![0.0; n], vec![0.0; n]);
    let mut y = vec![0.0; n];
    for _ in 0..100_000 {
        for k in 0..n {
            y[k] = z[k] + p[k];
        }
        prox_reg(reg, &mut y, t);
        for k in 0..n {
            p[k] += z[k] - y[k];
        }
        let prev = z.clone();
        for k in 0..n {
            z[k] = y[k] + q[k];
        }
        project(&mut z);
        for k in 0..n {
            q[k] += y[k] - z[k];
        }
        let moved: f64 = prev.iter().zip(&z).map(|(a, b)| (a - b) * (a - b)).sum();
        if moved.sqrt() <= 1e-15 * (1.0 + v.iter().map(|t| t.abs()).fold(0.0, f64::max)) {
            break;
        }
    }
    z
}

/// `argmin_z ½‖z − v‖² + t·g(z)` over `set`.
fn prox_block(reg: &BlockRegularizer, set: &ConvexBlockSet, v: &[f64], t: f64) -> Vec<f64> {
    let mut z = v.to_vec();
    match (reg, set) {
        (_, ConvexBlockSet::Whole) => prox_reg(reg, &mut z, t),
        (BlockRegularizer::Zero, s) => s.project_in_place(&mut z),
        (BlockRegularizer::L1 { .. }, ConvexBlockSet::Box { .. }) => {
            prox_reg(reg, &mut z, t);
            set.project_in_place(&mut z);
        }
        _ => return alternating_prox(reg, v, t, |z| set.project_in_place(z)),
    }
    z
}

/// [`prox_block`] over `set` intersected with the cuts.
fn prox_block_cut(reg: &BlockRegularizer, set: &ConvexBlockSet, cuts: &[Cut], v: &[f64], t: f64) -> Vec<f64> {
    if cuts.is_empty() {
        return prox_block(reg, set, v, t);
    }
    if *reg == BlockRegularizer::Zero {
        let mut z = v.to_vec();
        project_all(set, cuts, &mut z);
        return z;
    }
    alternating_prox(reg, v, t, |z| project_all(set, cuts, z))
}

/// `‖x − prox_{g + ι_X}(x − ∇f(x))‖`, computed with the oracle's own prox.
fn own_stationarity(spec: &ProblemSpec, x: &[f64]) -> f64 {
    let part = spec.partition();
    let mut s = 0.0;
    for i in 0..spec.n_blocks() {
        let xi = part.block(x, i);
        let g = spec.smooth.block_grad(part, i, x);
        let v: Vec<f64> = xi.iter().zip(&g).map(|(a, b)| a - b).collect();
        let y = prox_block(&spec.regs[i], &spec.sets[i], &v, 1.0);
        s += xi.iter().zip(&y).map(|(a, b)| (a - b) * (a - b)).sum::<f64>();
    }
    s.sqrt()
}

fn block_feasible(spec: &ProblemSpec, i: usize, xi: &[f64]) -> bool {
    spec.block_constraints(i).iter().all(|c| c.value(xi) <= FEAS_TOL) && spec.sets[i].violation(xi) <= 1e-12
}

/// Synchronous cyclic block proximal-gradient iteration with step `1/L_f`
/// until the stationarity measure is at most `tol`.
///
/// With private constraints each block steps over its set intersected with
/// convex inner approximations of the constraints built at the current block,
/// so iterates stay feasible and can slide along a curved boundary. A move
/// that still violates a constraint is halved until it holds.
pub fn reference_solve(spec: &ProblemSpec, tol: f64) -> Result<OracleResult> {
    reference_solve_with(spec, tol, DEFAULT_MAX_SWEEPS)
}

pub fn reference_solve_with(spec: &ProblemSpec, tol: f64, max_sweeps: usize) -> Result<OracleResult> {
    if !(tol > 0.0) {
        return Err(Error::Invalid(format!("oracle tolerance must be positive, got {tol}")));
    }
    let part = spec.partition();
    let constrained = spec.is_constrained();
    let mut x = spec.start_point();
    for i in 0..spec.n_blocks() {
        if constrained {
            if !block_feasible(spec, i, part.block(&x, i)) {
                return Err(Error::InvariantViolation(format!("start is infeasible in block {i}")));
            }
        } else {
            spec.sets[i].project_in_place(part.block_mut(&mut x, i));
        }
    }
    let measure = |x: &[f64]| if constrained { stationarity_ncc(spec, x) } else { Ok(own_stationarity(spec, x)) };
    let t = 1.0 / spec.lipschitz();
    let mut m = measure(&x)?;
    let mut sweeps = 0;
    while m > tol && sweeps < max_sweeps {
        for i in 0..spec.n_blocks() {
            let g = spec.smooth.block_grad(part, i, &x);
            let xi = part.block(&x, i).to_vec();
            let v: Vec<f64> = xi.iter().zip(&g).map(|(a, b)| a - t * b).collect();
            let z = if constrained {
                let cuts: Vec<Cut> = spec.block_constraints(i).iter().filter_map(|c| inner_cut(c, &xi)).collect();
                prox_block_cut(&spec.regs[i], &spec.sets[i], &cuts, &v, t)
            } else {
                prox_block(&spec.regs[i], &spec.sets[i], &v, t)
            };
            let mut s = 1.0;
            let mut cand: Vec<f64> = z.clone();
            while constrained && !block_feasible(spec, i, &cand) {
                s *= 0.5;
                if s < 1e-30 {
                    cand = xi.clone();
                    break;
                }
                cand = xi.iter().zip(&z).map(|(a, b)| a + s * (b - a)).collect();
            }
            part.block_mut(&mut x, i).copy_from_slice(&cand);
        }
        sweeps += 1;
        m = measure(&x)?;
    }
    let method = if constrained { "cyclic-prox-gradient-inner-approximation" } else { "cyclic-prox-gradient" };
    Ok(OracleResult {
        objective: spec.objective(&x),
        x,
        method: method.into(),
        tolerance: tol,
        stationarity: m,
        sweeps,
        censored: m > tol,
    })
}

/// Textbook synchronous block iteration with the prox-linear model
/// `∇_i f(y)ᵀ(z − y_i) + β‖z − y_i‖²`, cyclic order and no delays.
/// Returns `x¹, …, x^steps`.
pub fn synchronous_trajectory(spec: &ProblemSpec, beta: f64, gamma: f64, steps: usize) -> Result<Vec<Vec<f64>>> {
    if !(beta > 0.0 && gamma > 0.0 && gamma <= 1.0) {
        return Err(Error::Invalid(format!("need beta > 0 and gamma in (0, 1], got {beta}, {gamma}")));
    }
    if spec.is_constrained() {
        return Err(Error::Invalid("the synchronous trajectory ignores private constraints".into()));
    }
    let part = spec.partition();
    let t = 1.0 / (2.0 * beta);
    let mut x = spec.start_point();
    let mut out = Vec::with_capacity(steps);
    for k in 0..steps {
        let i = k % spec.n_blocks();
        let g = spec.smooth.block_grad(part, i, &x);
        let xi = part.block(&x, i).to_vec();
        let v: Vec<f64> = xi.iter().zip(&g).map(|(a, b)| a - t * b).collect();
        let z = prox_block(&spec.regs[i], &spec.sets[i], &v, t);
        for ((o, a), b) in part.block_mut(&mut x, i).iter_mut().zip(&xi).zip(&z) {
            *o = a + gamma * (b - a);
        }
        out.push(x.clone());
    }
    Ok(out)
}

/// Grid minimizer of `f̃ + g` over the set and the convexified constraints,
/// for blocks of dimension one or two. The grid is anchored at the lower
/// corner of a bounding box of the feasible region.
pub fn brute_force_best_response(req: &BestResponseRequest, resolution: f64) -> Result<Vec<f64>> {
    let n = req.model.dim();
    if n == 0 || n > 2 {
        return Err(Error::Dimension(format!("grid search needs block dimension 1 or 2, got {n}")));
    }
    if !(resolution > 0.0) {
        return Err(Error::Invalid(format!("grid resolution must be positive, got {resolution}")));
    }
    let mut lo = vec![f64::NEG_INFINITY; n];
    let mut hi = vec![f64::INFINITY; n];
    let mut tighten = |l: &[f64], h: &[f64]| {
        for k in 0..n {
            lo[k] = lo[k].max(l[k]);
            hi[k] = hi[k].min(h[k]);
        }
    };
    if let Some((l, h)) = req.set.bounding_box() {
        tighten(&l, &h);
    }
    for c in req.constraints {
        match c.region() {
            Region::Ball { center, radius } => {
                let l: Vec<f64> = center.iter().map(|c| c - radius).collect();
                let h: Vec<f64> = center.iter().map(|c| c + radius).collect();
                tighten(&l, &h);
            }
            Region::Empty => return Err(Error::Invalid("a convexified constraint has an empty feasible set".into())),
            _ => {}
        }
    }
    if lo.iter().chain(&hi).any(|v| !v.is_finite()) {
        return Err(Error::Invalid("grid search needs a bounded feasible set".into()));
    }
    let counts: Vec<usize> = (0..n).map(|k| ((hi[k] - lo[k]).max(0.0) / resolution).floor() as usize + 1).collect();
    if counts.iter().product::<usize>() > 50_000_000 {
        return Err(Error::Invalid(format!("grid of {counts:?} points is too large")));
    }
    let mut best: Option<(f64, Vec<f64>)> = None;
    let mut z = vec![0.0; n];
    let inner = if n == 2 { counts[1] } else { 1 };
    for a in 0..counts[0] {
        z[0] = lo[0] + a as f64 * resolution;
        for b in 0..inner {
            if n == 2 {
                z[1] = lo[1] + b as f64 * resolution;
            }
            if req.set.violation(&z) > 0.0 || req.constraints.iter().any(|c| c.value(&z) > 0.0) {
                continue;
            }
            let v = req.model.value(&z) + req.reg.value(&z);
            if best.as_ref().is_none_or(|(bv, _)| v < *bv) {
                best = Some((v, z.clone()));
            }
        }
    }
    best.map(|(_, z)| z).ok_or_else(|| Error::Invalid("no grid point is feasible".into()))
}
