use crate::error::{Error, Result};
use crate::linalg::dist_sq;
use crate::problem::{check_feasibility, ProblemSpec};
use crate::subproblem::FeasibleRegion;
use crate::surrogate::block_constraint_surrogates;

/// `ŷ_i(x) = prox_{g_i + ι_{X_i}}(x_i − ∇_i f(x))`, unit step, for every block.
pub fn prox_gradient_point(spec: &ProblemSpec, x: &[f64]) -> Result<Vec<f64>> {
    spec.check_dim(x)?;
    let part = spec.partition();
    let mut y = x.to_vec();
    let mut g = Vec::new();
    for i in 0..spec.n_blocks() {
        g.resize(part.size(i), 0.0);
        spec.smooth.block_grad_into(part, i, x, &mut g);
        let yi = part.block_mut(&mut y, i);
        for (v, gk) in yi.iter_mut().zip(&g) {
            *v -= gk;
        }
        FeasibleRegion::new(&spec.sets[i]).prox_in_place(&spec.regs[i], yi, 1.0);
    }
    Ok(y)
}

/// `‖M_F(x)‖₂ = ‖x − ŷ(x)‖₂`; zero exactly at stationary points of `F` over `X`.
pub fn stationarity(spec: &ProblemSpec, x: &[f64]) -> Result<f64> {
    let y = prox_gradient_point(spec, x)?;
    Ok(dist_sq(x, &y).sqrt())
}

/// Constrained analogue of [`stationarity`]: block `i` is projected onto `X_i`
/// intersected with the convexified constraint sets built at `x_i`.
pub fn stationarity_ncc(spec: &ProblemSpec, x: &[f64]) -> Result<f64> {
    spec.check_dim(x)?;
    let feas = check_feasibility(spec, x, 1e-9);
    if !feas.feasible {
        return Err(Error::InvariantViolation(format!(
            "constrained stationarity needs a feasible point; violation {:.3e}",
            feas.max_violation
        )));
    }
    let part = spec.partition();
    let mut total = 0.0;
    let mut g = Vec::new();
    for i in 0..spec.n_blocks() {
        let xi = part.block(x, i);
        let cons = block_constraint_surrogates(spec, i, xi)?;
        let mut region = FeasibleRegion::new(&spec.sets[i]);
        for c in &cons {
            region.intersect(c.region())?;
        }
        g.resize(part.size(i), 0.0);
        spec.smooth.block_grad_into(part, i, x, &mut g);
        let mut yi: Vec<f64> = xi.iter().zip(&g).map(|(a, b)| a - b).collect();
        region.prox_in_place(&spec.regs[i], &mut yi, 1.0);
        total += dist_sq(xi, &yi);
    }
    Ok(total.sqrt())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::generate::{generate, GeneratorKind, GeneratorSpec};
    use crate::linalg::{norm, DenseMatrix, Matrix};
    use crate::problem::{
        BlockPartition, BlockRegularizer, ConstraintFn, ConstraintShape, ConvexBlockSet, QuadraticForm, SmoothKind,
        SmoothTerm,
    };

    fn one_dim(q: f64, c: f64, reg: BlockRegularizer, set: ConvexBlockSet, cons: Option<Vec<ConstraintFn>>, x0: Option<f64>) -> ProblemSpec {
        let form = QuadraticForm::new(Matrix::Dense(DenseMatrix::from_rows(&[vec![q]]).unwrap()), vec![c], 0.0).unwrap();
        ProblemSpec::new(
            "1d",
            BlockPartition::new(vec![1]).unwrap(),
            SmoothTerm::new(SmoothKind::Quadratic(form), q.max(1e-3)),
            vec![reg],
            vec![set],
            cons.map(|c| vec![c]),
            x0.map(|v| vec![v]),
        )
        .unwrap()
    }

    #[test]
    fn half_square_plus_abs_at_three() {
        let spec = one_dim(1.0, 0.0, BlockRegularizer::L1 { lambda: 1.0 }, ConvexBlockSet::Whole, None, None);
        assert!((stationarity(&spec, &[3.0]).unwrap() - 3.0).abs() < 1e-15);
        assert_eq!(stationarity(&spec, &[0.0]).unwrap(), 0.0);
    }

    #[test]
    fn unregularized_unconstrained_is_gradient_norm() {
        let mut g = GeneratorSpec::new(GeneratorKind::LassoDense, 30, 5, 2);
        g.lambda = Some(0.0);
        let spec = generate(&g).unwrap();
        let x: Vec<f64> = (0..30).map(|k| (k as f64 * 0.37).sin()).collect();
        let m = stationarity(&spec, &x).unwrap();
        assert!((m - norm(&spec.smooth.grad(&x))).abs() < 1e-12 * (1.0 + m));
    }

    #[test]
    fn continuity_under_small_perturbation() {
        let spec = generate(&GeneratorSpec::new(GeneratorKind::LassoDense, 40, 4, 3)).unwrap();
        let x: Vec<f64> = (0..40).map(|k| (k as f64 * 0.91).cos()).collect();
        let mut y = x.clone();
        y[7] += 1e-8;
        let d = (stationarity(&spec, &x).unwrap() - stationarity(&spec, &y).unwrap()).abs();
        assert!(d < 1e-7, "{d}");
    }

    #[test]
    fn constrained_matches_plain_when_constraints_are_slack() {
        // x ≥ 1 written as 1 − x² ≤ 0 around x = 2; the model is slack nearby
        let c = ConstraintFn::new(ConstraintShape::Sphere { a: -1.0, center: vec![0.0], r: 1.0 });
        let spec = one_dim(1.0, 1.8, BlockRegularizer::Zero, ConvexBlockSet::Box { lower: vec![0.5], upper: vec![3.0] }, Some(vec![c]), Some(2.0));
        let a = stationarity(&spec, &[2.0]).unwrap();
        let b = stationarity_ncc(&spec, &[2.0]).unwrap();
        assert!((a - b).abs() < 1e-14 && a > 0.0);
    }

    #[test]
    fn constrained_boundary_cases() {
        // min x·s over x ≥ 1 (via 1 − x² ≤ 0) and [0.5, 3] at x = 1
        let c = ConstraintFn::new(ConstraintShape::Sphere { a: -1.0, center: vec![0.0], r: 1.0 });
        let pushing_out = one_dim(0.0, -1.0, BlockRegularizer::Zero, ConvexBlockSet::Box { lower: vec![0.5], upper: vec![3.0] }, Some(vec![c.clone()]), Some(1.0));
        // f'(1) = 1: descent would leave the feasible set, boundary is optimal
        assert!(stationarity_ncc(&pushing_out, &[1.0]).unwrap() < 1e-12);
        let pushing_in = one_dim(0.0, 1.0, BlockRegularizer::Zero, ConvexBlockSet::Box { lower: vec![0.5], upper: vec![3.0] }, Some(vec![c]), Some(1.0));
        // f'(1) = −1: moving inward decreases f
        assert!((stationarity_ncc(&pushing_in, &[1.0]).unwrap() - 1.0).abs() < 1e-12);
        assert!(stationarity_ncc(&pushing_in, &[0.7]).is_err());
    }
}
