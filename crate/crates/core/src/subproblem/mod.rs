//! Best responses: the unique minimizer of `f̃_i(·; x̃) + g_i` over `X_i`, or
//! over `X_i` intersected with the convexified private constraints.

mod prox;

use serde::Serialize;

use crate::error::{Error, Result};
use crate::linalg::{dist, dist_sq, dot, norm};
use crate::problem::{BlockRegularizer, ConvexBlockSet, ProblemSpec};
use crate::rng;
use crate::surrogate::{block_constraint_surrogates, ConstraintSurrogate, SurrogateFactory, SurrogateKind, SurrogateModel};

pub use prox::{FeasibleRegion, Piece};

/// Inner-solver settings.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, serde::Deserialize)]
pub struct InnerOptions {
    /// Absolute residual target; `None` uses `1e-10·(1 + ‖∇f̃(x̃_i)‖)`.
    #[serde(default, rename = "inner_tol", skip_serializing_if = "Option::is_none")]
    pub tol: Option<f64>,
    #[serde(default = "default_max_iters", rename = "inner_max_iters")]
    pub max_iters: usize,
    /// Allowed value of a convexified constraint at the returned point.
    #[serde(default = "default_feas_tol")]
    pub feas_tol: f64,
}

fn default_max_iters() -> usize {
    20_000
}

fn default_feas_tol() -> f64 {
    1e-9
}

impl Default for InnerOptions {
    fn default() -> Self {
        Self { tol: None, max_iters: default_max_iters(), feas_tol: default_feas_tol() }
    }
}

/// Inputs of one best-response computation.
#[derive(Debug, Clone)]
pub struct BestResponseRequest<'a> {
    /// Model built at the delayed view; its base block is `x_i^k`.
    pub model: &'a SurrogateModel,
    pub reg: &'a BlockRegularizer,
    pub set: &'a ConvexBlockSet,
    /// Convexified constraints built at `x_i^k`; empty for unconstrained blocks.
    pub constraints: &'a [ConstraintSurrogate],
    pub opts: InnerOptions,
}

#[derive(Debug, Clone, PartialEq)]
pub struct BestResponse {
    pub z: Vec<f64>,
    /// `‖z − P_t(z − t∇f̃(z))‖` with `t = 1/(c_f̃ + L_E)`.
    pub residual: f64,
    pub iterations: usize,
    pub closed_form: bool,
}

impl BestResponseRequest<'_> {
    fn tolerance(&self) -> f64 {
        self.opts.tol.unwrap_or_else(|| 1e-10 * (1.0 + norm(&self.model.base_grad)))
    }

    fn region(&self) -> Result<FeasibleRegion<'_>> {
        let mut region = FeasibleRegion::new(self.set);
        for c in self.constraints {
            region.intersect(c.region())?;
        }
        Ok(region)
    }
}

/// Fixed-point residual of the composite gradient map at `z`.
fn residual(model: &SurrogateModel, reg: &BlockRegularizer, region: &FeasibleRegion, z: &[f64], grad: &mut [f64]) -> f64 {
    let t = 1.0 / (model.modulus + model.lip_e);
    model.grad_into(z, grad);
    let mut w: Vec<f64> = z.iter().zip(grad.iter()).map(|(a, g)| a - t * g).collect();
    region.prox_in_place(reg, &mut w, t);
    dist(z, &w)
}

/// Accelerated proximal gradient with strong-convexity momentum and
/// gradient-based adaptive restart.
fn accelerated(req: &BestResponseRequest, region: &FeasibleRegion, tol: f64, start: &[f64]) -> Result<BestResponse> {
    let model = req.model;
    let n = model.dim();
    let l = model.lip_e.max(model.modulus);
    let mu = model.modulus;
    let step = 1.0 / l;
    let momentum = (l.sqrt() - mu.sqrt()) / (l.sqrt() + mu.sqrt());

    let mut x = start.to_vec();
    region.project_in_place(&mut x);
    let mut y = x.clone();
    let mut g = vec![0.0; n];
    let mut rbuf = vec![0.0; n];
    let mut best = (f64::INFINITY, x.clone());
    for it in 0..req.opts.max_iters {
        let r = residual(model, req.reg, region, &x, &mut rbuf);
        if r < best.0 {
            best = (r, x.clone());
        }
        if r <= tol {
            return Ok(BestResponse { z: x, residual: r, iterations: it, closed_form: false });
        }
        model.grad_into(&y, &mut g);
        let mut next: Vec<f64> = y.iter().zip(&g).map(|(a, b)| a - step * b).collect();
        region.prox_in_place(req.reg, &mut next, step);
        let restart: f64 = (0..n).map(|k| (y[k] - next[k]) * (next[k] - x[k])).sum();
        if restart > 0.0 {
            y.copy_from_slice(&next);
        } else {
            for k in 0..n {
                y[k] = next[k] + momentum * (next[k] - x[k]);
            }
        }
        x = next;
    }
    Err(Error::Convergence {
        what: format!("best response of block {}", model.block),
        residual: best.0,
        iterations: req.opts.max_iters,
        best: best.1,
    })
}

fn solve(req: &BestResponseRequest, region: &FeasibleRegion) -> Result<BestResponse> {
    let model = req.model;
    if let Some(h) = model.scalar_curvature() {
        // argmin gᵀ(z − y) + (h/2)‖z − y‖² + g(z) over C = prox of g + ι_C at y − g/h
        let t = 1.0 / h;
        let mut z: Vec<f64> = model.base_block.iter().zip(&model.base_grad).map(|(y, g)| y - g / h).collect();
        region.prox_in_place(req.reg, &mut z, t);
        let exact = region.prox_is_exact(req.reg);
        let r = if exact { 0.0 } else { residual(model, req.reg, region, &z, &mut vec![0.0; z.len()]) };
        return Ok(BestResponse { z, residual: r, iterations: 0, closed_form: exact });
    }
    accelerated(req, region, req.tolerance(), &model.base_block)
}

/// Best response on a block without private constraints (or ignoring them).
pub fn best_response(req: &BestResponseRequest) -> Result<BestResponse> {
    let region = FeasibleRegion::new(req.set);
    solve(req, &region)
}

/// Best response over `X_i ∩ {z : c̃_{i,j}(z; x_i^k) ≤ 0 ∀j}`.
///
/// The current block must satisfy the true constraints; the returned point
/// satisfies every convexified constraint to `feas_tol` and hence, since the
/// models majorize the constraints, the true ones as well.
pub fn best_response_ncc(req: &BestResponseRequest) -> Result<BestResponse> {
    if req.constraints.is_empty() {
        return best_response(req);
    }
    let current = &req.model.base_block;
    for c in req.constraints {
        let v = c.value(current);
        if v > req.opts.feas_tol {
            return Err(Error::InvariantViolation(format!(
                "block {}: current value violates constraint {} by {v:.3e}",
                c.block, c.index
            )));
        }
    }
    let region = req.region()?;
    let out = solve(req, &region)?;
    for c in req.constraints {
        let v = c.value(&out.z);
        if v > req.opts.feas_tol {
            return Err(Error::Convergence {
                what: format!("feasibility of constraint ({}, {})", c.block, c.index),
                residual: v,
                iterations: out.iterations,
                best: out.z,
            });
        }
    }
    Ok(out)
}

/// Outcome of sampled checks of the best-response map.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PropertyReport {
    pub trials: usize,
    /// Minimum over trials of `−c‖x̂ − y_i‖² − [(x̂ − y_i)ᵀ∇_i f(y) + g_i(x̂) − g_i(y_i)]`.
    pub min_descent_margin: f64,
    pub descent_violations: usize,
    /// Largest `‖x̂_i(y) − x̂_i(z)‖ / ‖y − z‖`.
    pub max_lipschitz_ratio: f64,
    /// `L_B / c_f̃`.
    pub lipschitz_bound: f64,
    pub lipschitz_violations: usize,
    /// Largest `‖x̂_i(y) − x̂_i(z)‖ / ‖y − z‖^{1/2}` (constrained problems).
    pub holder_constant: f64,
    pub ratio_pairs: usize,
}

/// Random point of `X` (and of the constraint set, for constrained problems,
/// by rejection around the stored start).
fn sample_point(spec: &ProblemSpec, rng: &mut rng::Prng, scale: f64) -> Vec<f64> {
    let part = spec.partition();
    if spec.is_constrained() {
        let x0 = spec.x0.as_ref().expect("validated");
        let mut x = x0.clone();
        for i in 0..spec.n_blocks() {
            for _ in 0..100 {
                let mut cand: Vec<f64> = part.block(x0, i).iter().map(|t| t + scale * rng::normal(rng)).collect();
                spec.sets[i].project_in_place(&mut cand);
                if spec.block_feasibility(i, &cand, 0.0).violation == 0.0 {
                    part.block_mut(&mut x, i).copy_from_slice(&cand);
                    break;
                }
            }
        }
        return x;
    }
    let mut x: Vec<f64> = (0..spec.dim()).map(|_| scale * rng::normal(rng)).collect();
    for i in 0..spec.n_blocks() {
        spec.sets[i].project_in_place(part.block_mut(&mut x, i));
    }
    x
}

/// Computes `x̂_i(y)` for the problem, using the constrained variant when the
/// block has private constraints.
pub fn compute_best_response(
    factory: &SurrogateFactory,
    i: usize,
    y: &[f64],
    opts: InnerOptions,
) -> Result<BestResponse> {
    let spec = factory.spec();
    let model = factory.build(i, y)?;
    let yi = spec.partition().block(y, i);
    let cons = block_constraint_surrogates(spec, i, yi)?;
    let req = BestResponseRequest { model: &model, reg: &spec.regs[i], set: &spec.sets[i], constraints: &cons, opts };
    best_response_ncc(&req)
}

/// Samples the optimality and continuity properties of the best-response map.
///
/// The descent inequality is checked at tolerance `tol`; the Lipschitz ratio
/// against `L_B/c_f̃` with 5% slack. Pairs `(y, z)` differ by a perturbation of
/// random magnitude in `[1e-3, 1]`.
pub fn verify_best_response_properties(
    spec: &ProblemSpec,
    kind: SurrogateKind,
    beta: f64,
    trials: usize,
    seed: u64,
    tol: f64,
) -> Result<PropertyReport> {
    let factory = SurrogateFactory::new(spec, kind, beta)?;
    let part = spec.partition();
    let mut rng = rng::seeded(seed);
    let opts = InnerOptions::default();
    let mut rep = PropertyReport {
        trials,
        min_descent_margin: f64::INFINITY,
        descent_violations: 0,
        max_lipschitz_ratio: 0.0,
        lipschitz_bound: factory.lip_b() / factory.modulus(),
        lipschitz_violations: 0,
        holder_constant: 0.0,
        ratio_pairs: 0,
    };
    for _ in 0..trials {
        let i = rng::index(&mut rng, spec.n_blocks());
        let y = sample_point(spec, &mut rng, 1.0);
        let xh = compute_best_response(&factory, i, &y, opts)?.z;
        let yi = part.block(&y, i);
        let g = spec.smooth.block_grad(part, i, &y);
        let d: Vec<f64> = xh.iter().zip(yi).map(|(a, b)| a - b).collect();
        let lhs = dot(&d, &g) + spec.regs[i].value(&xh) - spec.regs[i].value(yi);
        let margin = -factory.build(i, &y)?.modulus * dist_sq(&xh, yi) - lhs;
        rep.min_descent_margin = rep.min_descent_margin.min(margin);
        if margin < -tol {
            rep.descent_violations += 1;
        }

        let mag = 10f64.powf(-3.0 * rng::unit(&mut rng));
        let mut z = y.clone();
        for t in z.iter_mut() {
            *t += mag * rng::normal(&mut rng) / (spec.dim() as f64).sqrt();
        }
        for b in 0..spec.n_blocks() {
            spec.sets[b].project_in_place(part.block_mut(&mut z, b));
        }
        if spec.is_constrained() && !crate::problem::check_feasibility(spec, &z, 0.0).feasible {
            continue;
        }
        let dz = dist(&y, &z);
        if dz == 0.0 {
            continue;
        }
        let zh = compute_best_response(&factory, i, &z, opts)?.z;
        let dx = dist(&xh, &zh);
        rep.ratio_pairs += 1;
        rep.max_lipschitz_ratio = rep.max_lipschitz_ratio.max(dx / dz);
        rep.holder_constant = rep.holder_constant.max(dx / dz.sqrt());
        if !spec.is_constrained() && dx / dz > rep.lipschitz_bound * 1.05 {
            rep.lipschitz_violations += 1;
        }
    }
    Ok(rep)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::generate::{generate, GeneratorKind, GeneratorSpec};
    use crate::linalg::{DenseMatrix, Matrix};
    use crate::problem::{BlockPartition, ConstraintFn, ConstraintShape, QuadraticForm, SmoothKind, SmoothTerm};
    use crate::surrogate::{build_constraint_surrogate, build_surrogate};

    fn one_dim(q: f64, c: f64, reg: BlockRegularizer, set: ConvexBlockSet) -> ProblemSpec {
        let form = QuadraticForm::new(Matrix::Dense(DenseMatrix::from_rows(&[vec![q]]).unwrap()), vec![c], 0.0).unwrap();
        ProblemSpec::new(
            "1d",
            BlockPartition::new(vec![1]).unwrap(),
            SmoothTerm::new(SmoothKind::Quadratic(form), q.max(1e-3)),
            vec![reg],
            vec![set],
            None,
            None,
        )
        .unwrap()
    }

    #[test]
    fn soft_threshold_closed_form() {
        // f = ½(x − 3)², g = |x|, β = ½, y = 0
        let spec = one_dim(1.0, 3.0, BlockRegularizer::L1 { lambda: 1.0 }, ConvexBlockSet::Whole);
        let m = build_surrogate(SurrogateKind::ProxLinear, &spec, 0, &[0.0], 0.5).unwrap();
        let req = BestResponseRequest {
            model: &m,
            reg: &spec.regs[0],
            set: &spec.sets[0],
            constraints: &[],
            opts: InnerOptions::default(),
        };
        let r = best_response(&req).unwrap();
        assert_eq!(r.z, vec![2.0]);
        assert!(r.closed_form);
        assert_eq!(r.residual, 0.0);
    }

    #[test]
    fn stationary_point_is_fixed() {
        let spec = one_dim(1.0, 3.0, BlockRegularizer::L1 { lambda: 1.0 }, ConvexBlockSet::Whole);
        for kind in [SurrogateKind::ProxLinear, SurrogateKind::SecondOrder, SurrogateKind::PartialConvexity] {
            let f = SurrogateFactory::new(&spec, kind, 0.7).unwrap();
            let r = compute_best_response(&f, 0, &[2.0], InnerOptions::default()).unwrap();
            assert!((r.z[0] - 2.0).abs() < 1e-9, "{kind}: {:?}", r.z);
        }
    }

    #[test]
    fn iterative_and_closed_forms_agree() {
        let spec = generate(&GeneratorSpec::new(GeneratorKind::LassoDense, 30, 3, 8)).unwrap();
        let y: Vec<f64> = (0..30).map(|k| ((k * 7) as f64).cos()).collect();
        let beta = 0.5 * spec.lipschitz();
        let m = build_surrogate(SurrogateKind::ProxLinear, &spec, 1, &y, beta).unwrap();
        let req = BestResponseRequest {
            model: &m,
            reg: &spec.regs[1],
            set: &spec.sets[1],
            constraints: &[],
            opts: InnerOptions::default(),
        };
        let closed = best_response(&req).unwrap();
        let region = FeasibleRegion::new(&spec.sets[1]);
        let iter = accelerated(&req, &region, 1e-12, &m.base_block).unwrap();
        assert!(dist(&closed.z, &iter.z) < 1e-10);
    }

    #[test]
    fn uniqueness_from_two_starts() {
        let spec = generate(&GeneratorSpec::new(GeneratorKind::DcLeastSquares, 24, 4, 3)).unwrap();
        let y: Vec<f64> = (0..24).map(|k| ((k * 3) as f64).sin()).collect();
        let beta = 0.5 * spec.lipschitz();
        let m = build_surrogate(SurrogateKind::DcSplit, &spec, 2, &y, beta).unwrap();
        let req = BestResponseRequest {
            model: &m,
            reg: &spec.regs[2],
            set: &spec.sets[2],
            constraints: &[],
            opts: InnerOptions::default(),
        };
        let a = best_response(&req).unwrap();
        assert!(a.residual <= req.tolerance());
        let region = FeasibleRegion::new(&spec.sets[2]);
        let far: Vec<f64> = m.base_block.iter().map(|t| 4.0 - t).collect();
        let b = accelerated(&req, &region, req.tolerance(), &far).unwrap();
        assert!(dist(&a.z, &b.z) <= 10.0 * req.tolerance() + 1e-9);
    }

    #[test]
    fn ncc_one_dimensional_root() {
        // min x s.t. 1 − x² ≤ 0, x ∈ [0.5, 3], base y = 2
        let q = QuadraticForm::new(Matrix::Dense(DenseMatrix::from_rows(&[vec![0.0]]).unwrap()), vec![-1.0], 0.0).unwrap();
        let spec = ProblemSpec::new(
            "ncc1",
            BlockPartition::new(vec![1]).unwrap(),
            SmoothTerm::new(SmoothKind::Quadratic(q), 1.0),
            vec![BlockRegularizer::Zero],
            vec![ConvexBlockSet::Box { lower: vec![0.5], upper: vec![3.0] }],
            Some(vec![vec![ConstraintFn::new(ConstraintShape::Sphere { a: -1.0, center: vec![0.0], r: 1.0 })]]),
            Some(vec![2.0]),
        )
        .unwrap();
        let m = build_surrogate(SurrogateKind::ProxLinear, &spec, 0, &[2.0], 0.01).unwrap();
        let c = build_constraint_surrogate(
            crate::problem::ConstraintSurrogateKind::DescentLemma,
            &spec.block_constraints(0)[0],
            (0, 0),
            &[2.0],
        )
        .unwrap();
        let cons = [c];
        let req = BestResponseRequest {
            model: &m,
            reg: &spec.regs[0],
            set: &spec.sets[0],
            constraints: &cons,
            opts: InnerOptions::default(),
        };
        let r = best_response_ncc(&req).unwrap();
        // −3 − 4(x−2) + (x−2)² = 0  ⇒  x = 4 − √7
        assert!((r.z[0] - (4.0 - 7f64.sqrt())).abs() < 1e-12, "{:?}", r.z);
        assert!(spec.block_constraints(0)[0].value(&r.z) <= 1e-9);

        let bad = build_surrogate(SurrogateKind::ProxLinear, &spec, 0, &[0.6], 0.01).unwrap();
        let c_bad = build_constraint_surrogate(
            crate::problem::ConstraintSurrogateKind::DescentLemma,
            &spec.block_constraints(0)[0],
            (0, 0),
            &[0.6],
        )
        .unwrap();
        let cons_bad = [c_bad];
        let req_bad = BestResponseRequest { model: &bad, constraints: &cons_bad, ..req };
        assert!(matches!(best_response_ncc(&req_bad), Err(Error::InvariantViolation(_))));
    }

    #[test]
    fn lasso_properties_hold() {
        let spec = generate(&GeneratorSpec::new(GeneratorKind::LassoDense, 40, 8, 12)).unwrap();
        let rep = verify_best_response_properties(&spec, SurrogateKind::ProxLinear, 0.5 * spec.lipschitz(), 200, 1, 1e-9).unwrap();
        assert_eq!(rep.descent_violations, 0, "{rep:?}");
        assert_eq!(rep.lipschitz_violations, 0, "{rep:?}");
        // with β = L_f/2 the map is nonexpansive
        assert!(rep.max_lipschitz_ratio <= 1.0 * 1.05, "{rep:?}");
    }

    #[test]
    fn ncc_properties_report_holder_constant() {
        let spec = generate(&GeneratorSpec::new(GeneratorKind::NccBallQp, 12, 4, 2)).unwrap();
        let rep = verify_best_response_properties(&spec, SurrogateKind::ProxLinear, 0.5 * spec.lipschitz(), 100, 3, 1e-9).unwrap();
        assert_eq!(rep.descent_violations, 0, "{rep:?}");
        assert!(rep.holder_constant.is_finite() && rep.ratio_pairs > 0);
    }
}
