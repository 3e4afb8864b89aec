use std::ops::Range;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{dot, sym_eig_extremes, DenseMatrix, Matrix};

use super::BlockPartition;

/// `q(x) = ½ xᵀQx − cᵀx + constant` with `Q` symmetric.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QuadraticForm {
    pub q: Matrix,
    pub c: Vec<f64>,
    #[serde(default)]
    pub constant: f64,
}

impl QuadraticForm {
    pub fn new(q: Matrix, c: Vec<f64>, constant: f64) -> Result<Self> {
        let form = Self { q, c, constant };
        form.validate()?;
        Ok(form)
    }

    fn validate(&self) -> Result<()> {
        if self.q.rows() != self.q.cols() || self.q.rows() != self.c.len() {
            return Err(Error::Dimension(format!(
                "quadratic term: Q is {}x{}, c has length {}",
                self.q.rows(),
                self.q.cols(),
                self.c.len()
            )));
        }
        if !self.q.is_symmetric(1e-10) {
            return Err(Error::Dimension("quadratic term: Q is not symmetric".into()));
        }
        Ok(())
    }

    pub fn dim(&self) -> usize {
        self.c.len()
    }

    pub fn value(&self, x: &[f64]) -> f64 {
        let mut acc = 0.0;
        for r in 0..self.dim() {
            acc += x[r] * (0.5 * self.q.row_dot(r, x) - self.c[r]);
        }
        acc + self.constant
    }

    pub fn grad_rows(&self, rows: Range<usize>, x: &[f64], out: &mut [f64]) {
        for (o, r) in out.iter_mut().zip(rows) {
            *o = self.q.row_dot(r, x) - self.c[r];
        }
    }

    /// `q(x') − q(x)` where `x'` equals `x` except on `rows`, where it is `new_block`.
    ///
    /// Exact for quadratics: the change equals `Δᵀ∇q(m)` with `m` the midpoint.
    pub fn change(&self, rows: Range<usize>, x: &[f64], new_block: &[f64], scratch: &mut Vec<f64>) -> f64 {
        scratch.clear();
        scratch.extend_from_slice(x);
        for (s, (o, n)) in scratch[rows.clone()].iter_mut().zip(x[rows.clone()].iter().zip(new_block)) {
            *s = 0.5 * (o + n);
        }
        let mut acc = 0.0;
        for (k, r) in rows.enumerate() {
            let delta = new_block[k] - x[r];
            if delta != 0.0 {
                acc += delta * (self.q.row_dot(r, scratch) - self.c[r]);
            }
        }
        acc
    }

    pub fn block_matrix(&self, rows: Range<usize>) -> DenseMatrix {
        self.q.sub_block(rows.clone(), rows)
    }
}

/// Convex part subtracted in a difference-of-convex smooth term.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ConcavePart {
    Quadratic(QuadraticForm),
    /// `weight · Σ_j log cosh(x_j)`.
    LogCosh { weight: f64 },
    /// `aᵀx`.
    Linear { a: Vec<f64> },
}

fn log_cosh(t: f64) -> f64 {
    let a = t.abs();
    a + (-2.0 * a).exp().ln_1p() - std::f64::consts::LN_2
}

impl ConcavePart {
    fn check_dim(&self, n: usize) -> Result<()> {
        match self {
            ConcavePart::Quadratic(q) if q.dim() != n => {
                Err(Error::Dimension(format!("dc minus part has dimension {}, expected {n}", q.dim())))
            }
            ConcavePart::Quadratic(q) => q.validate(),
            ConcavePart::Linear { a } if a.len() != n => {
                Err(Error::Dimension(format!("dc minus part has dimension {}, expected {n}", a.len())))
            }
            ConcavePart::LogCosh { weight } if *weight < 0.0 => {
                Err(Error::Invalid("log-cosh weight must be nonnegative".into()))
            }
            _ => Ok(()),
        }
    }

    pub fn value(&self, x: &[f64]) -> f64 {
        match self {
            ConcavePart::Quadratic(q) => q.value(x),
            ConcavePart::LogCosh { weight } => weight * x.iter().map(|&t| log_cosh(t)).sum::<f64>(),
            ConcavePart::Linear { a } => dot(a, x),
        }
    }

    pub fn grad_rows(&self, rows: Range<usize>, x: &[f64], out: &mut [f64]) {
        match self {
            ConcavePart::Quadratic(q) => q.grad_rows(rows, x, out),
            ConcavePart::LogCosh { weight } => {
                for (o, r) in out.iter_mut().zip(rows) {
                    *o = weight * x[r].tanh();
                }
            }
            ConcavePart::Linear { a } => out.copy_from_slice(&a[rows]),
        }
    }

    fn change(&self, rows: Range<usize>, x: &[f64], new_block: &[f64], scratch: &mut Vec<f64>) -> f64 {
        match self {
            ConcavePart::Quadratic(q) => q.change(rows, x, new_block, scratch),
            ConcavePart::LogCosh { weight } => {
                weight * rows.zip(new_block).map(|(r, &n)| log_cosh(n) - log_cosh(x[r])).sum::<f64>()
            }
            ConcavePart::Linear { a } => rows.zip(new_block).map(|(r, &n)| a[r] * (n - x[r])).sum(),
        }
    }

    pub fn block_hessian(&self, rows: Range<usize>, x: &[f64]) -> DenseMatrix {
        match self {
            ConcavePart::Quadratic(q) => q.block_matrix(rows),
            ConcavePart::LogCosh { weight } => {
                let mut h = DenseMatrix::zeros(rows.len(), rows.len());
                for (k, r) in rows.enumerate() {
                    let s = 1.0 / x[r].cosh();
                    h.set(k, k, weight * s * s);
                }
                h
            }
            ConcavePart::Linear { .. } => DenseMatrix::zeros(rows.len(), rows.len()),
        }
    }

    /// Lipschitz constant of the gradient restricted to one block.
    pub fn lipschitz_bound(&self, rows: Range<usize>) -> f64 {
        match self {
            ConcavePart::Quadratic(q) => {
                let (lo, hi) = sym_eig_extremes(&q.block_matrix(rows));
                lo.abs().max(hi.abs())
            }
            ConcavePart::LogCosh { weight } => *weight,
            ConcavePart::Linear { .. } => 0.0,
        }
    }
}

/// The functional form of the smooth term `f`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum SmoothKind {
    Quadratic(QuadraticForm),
    /// `f = f⁺ − f⁻` with both parts convex.
    Dc { plus: QuadraticForm, minus: ConcavePart },
    /// `Σ_j w_j x_j⁴ + q(x)`.
    Quartic {
        weights: Vec<f64>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        quad: Option<QuadraticForm>,
    },
}

/// Smooth part of the objective with its block-gradient Lipschitz constant.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SmoothTerm {
    #[serde(flatten)]
    pub kind: SmoothKind,
    #[serde(rename = "L_f")]
    pub lipschitz: f64,
}

impl SmoothTerm {
    pub fn new(kind: SmoothKind, lipschitz: f64) -> Self {
        Self { kind, lipschitz }
    }

    pub fn validate(&self, n: usize) -> Result<()> {
        if !(self.lipschitz.is_finite() && self.lipschitz > 0.0) {
            return Err(Error::Invalid(format!("L_f must be positive, got {}", self.lipschitz)));
        }
        let dim = match &self.kind {
            SmoothKind::Quadratic(q) => {
                q.validate()?;
                q.dim()
            }
            SmoothKind::Dc { plus, minus } => {
                plus.validate()?;
                minus.check_dim(plus.dim())?;
                plus.dim()
            }
            SmoothKind::Quartic { weights, quad } => {
                if let Some(q) = quad {
                    q.validate()?;
                    if q.dim() != weights.len() {
                        return Err(Error::Dimension("quartic term: weight and quadratic dimensions differ".into()));
                    }
                }
                weights.len()
            }
        };
        if dim != n {
            return Err(Error::Dimension(format!("smooth term has dimension {dim}, problem has {n}")));
        }
        Ok(())
    }

    pub fn value(&self, x: &[f64]) -> f64 {
        match &self.kind {
            SmoothKind::Quadratic(q) => q.value(x),
            SmoothKind::Dc { plus, minus } => plus.value(x) - minus.value(x),
            SmoothKind::Quartic { weights, quad } => {
                let s: f64 = weights.iter().zip(x).map(|(w, t)| w * t.powi(4)).sum();
                s + quad.as_ref().map_or(0.0, |q| q.value(x))
            }
        }
    }

    /// Writes `∇_{x_i} f(x)` into `out` (length `n_i`).
    pub fn block_grad_into(&self, part: &BlockPartition, i: usize, x: &[f64], out: &mut [f64]) {
        self.rows_grad_into(part.range(i), x, out);
    }

    pub fn block_grad(&self, part: &BlockPartition, i: usize, x: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; part.size(i)];
        self.block_grad_into(part, i, x, &mut out);
        out
    }

    pub fn grad(&self, x: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; x.len()];
        self.rows_grad_into(0..x.len(), x, &mut out);
        out
    }

    fn rows_grad_into(&self, rows: Range<usize>, x: &[f64], out: &mut [f64]) {
        match &self.kind {
            SmoothKind::Quadratic(q) => q.grad_rows(rows, x, out),
            SmoothKind::Dc { plus, minus } => {
                plus.grad_rows(rows.clone(), x, out);
                let mut m = vec![0.0; out.len()];
                minus.grad_rows(rows, x, &mut m);
                out.iter_mut().zip(m).for_each(|(o, v)| *o -= v);
            }
            SmoothKind::Quartic { weights, quad } => {
                match quad {
                    Some(q) => q.grad_rows(rows.clone(), x, out),
                    None => out.iter_mut().for_each(|o| *o = 0.0),
                }
                for (o, r) in out.iter_mut().zip(rows) {
                    *o += 4.0 * weights[r] * x[r].powi(3);
                }
            }
        }
    }

    /// `f(x') − f(x)` where `x'` replaces block `i` of `x` with `new_block`.
    pub fn block_change(&self, part: &BlockPartition, i: usize, x: &[f64], new_block: &[f64], scratch: &mut Vec<f64>) -> f64 {
        let rows = part.range(i);
        match &self.kind {
            SmoothKind::Quadratic(q) => q.change(rows, x, new_block, scratch),
            SmoothKind::Dc { plus, minus } => {
                plus.change(rows.clone(), x, new_block, scratch) - minus.change(rows, x, new_block, scratch)
            }
            SmoothKind::Quartic { weights, quad } => {
                let s: f64 = rows.clone().zip(new_block).map(|(r, &n)| weights[r] * (n.powi(4) - x[r].powi(4))).sum();
                s + quad.as_ref().map_or(0.0, |q| q.change(rows, x, new_block, scratch))
            }
        }
    }

    /// `∇²_{x_i x_i} f(x)`.
    pub fn block_hessian(&self, part: &BlockPartition, i: usize, x: &[f64]) -> DenseMatrix {
        let rows = part.range(i);
        match &self.kind {
            SmoothKind::Quadratic(q) => q.block_matrix(rows),
            SmoothKind::Dc { plus, minus } => {
                let mut h = plus.block_matrix(rows.clone());
                let m = minus.block_hessian(rows.clone(), x);
                for a in 0..rows.len() {
                    for b in 0..rows.len() {
                        h.set(a, b, h.get(a, b) - m.get(a, b));
                    }
                }
                h
            }
            SmoothKind::Quartic { weights, quad } => {
                let mut h = match quad {
                    Some(q) => q.block_matrix(rows.clone()),
                    None => DenseMatrix::zeros(rows.len(), rows.len()),
                };
                for (k, r) in rows.enumerate() {
                    h.set(k, k, h.get(k, k) + 12.0 * weights[r] * x[r] * x[r]);
                }
                h
            }
        }
    }

    /// Bound on the third derivative along block `i` over `{|x_j| ≤ radius}`.
    /// Zero for terms with a constant block Hessian.
    pub fn hessian_lipschitz(&self, part: &BlockPartition, i: usize, radius: f64) -> f64 {
        match &self.kind {
            SmoothKind::Quadratic(_) => 0.0,
            SmoothKind::Dc { minus, .. } => match minus {
                // |d/dt sech²(t)| ≤ 4/(3√3)
                ConcavePart::LogCosh { weight } => weight * 4.0 / (3.0 * 3f64.sqrt()),
                _ => 0.0,
            },
            SmoothKind::Quartic { weights, .. } => {
                let w = part.range(i).map(|r| weights[r].abs()).fold(0.0, f64::max);
                24.0 * w * radius
            }
        }
    }

    /// True when `x_i ↦ f(x_i, y_{−i})` is convex for every `y` and block.
    pub fn is_block_convex(&self, part: &BlockPartition) -> bool {
        (0..part.n_blocks()).all(|i| self.block_convex_modulus(part, i).is_ok())
    }

    /// Strong-convexity modulus of `x_i ↦ f(x_i, y_{−i})`, or an error when that
    /// map is not convex.
    pub fn block_convex_modulus(&self, part: &BlockPartition, i: usize) -> Result<f64> {
        let rows = part.range(i);
        let lam = match &self.kind {
            SmoothKind::Quadratic(q) => sym_eig_extremes(&q.block_matrix(rows)).0,
            SmoothKind::Quartic { weights, quad } => {
                if rows.clone().any(|r| weights[r] < 0.0) {
                    return Err(Error::MissingEvaluator(format!("block {i}: negative quartic weight")));
                }
                quad.as_ref().map_or(0.0, |q| sym_eig_extremes(&q.block_matrix(rows)).0)
            }
            SmoothKind::Dc { .. } => {
                return Err(Error::MissingEvaluator(format!(
                    "block {i}: difference-of-convex term is not block convex in general"
                )))
            }
        };
        if lam < -1e-10 {
            return Err(Error::MissingEvaluator(format!("block {i}: f is not convex in this block (λ_min = {lam:.3e})")));
        }
        Ok(lam.max(0.0))
    }

    /// Modulus and gradient Lipschitz constant of the convex part `f⁺` on block `i`.
    pub fn dc_plus_constants(&self, part: &BlockPartition, i: usize) -> Result<(f64, f64)> {
        match &self.kind {
            SmoothKind::Dc { plus, .. } => {
                let (lo, hi) = sym_eig_extremes(&plus.block_matrix(part.range(i)));
                if lo < -1e-10 {
                    return Err(Error::Invalid(format!("block {i}: dc plus part is not convex")));
                }
                Ok((lo.max(0.0), hi.max(0.0)))
            }
            _ => Err(Error::MissingEvaluator("smooth term carries no difference-of-convex split".into())),
        }
    }

    pub fn dc_minus_lipschitz(&self, part: &BlockPartition, i: usize) -> Result<f64> {
        match &self.kind {
            SmoothKind::Dc { minus, .. } => Ok(minus.lipschitz_bound(part.range(i))),
            _ => Err(Error::MissingEvaluator("smooth term carries no difference-of-convex split".into())),
        }
    }

    /// `∇_{x_i} f⁻(x)` for a difference-of-convex term.
    pub fn dc_minus_block_grad(&self, part: &BlockPartition, i: usize, x: &[f64]) -> Result<Vec<f64>> {
        match &self.kind {
            SmoothKind::Dc { minus, .. } => {
                let mut out = vec![0.0; part.size(i)];
                minus.grad_rows(part.range(i), x, &mut out);
                Ok(out)
            }
            _ => Err(Error::MissingEvaluator("smooth term carries no difference-of-convex split".into())),
        }
    }

    pub fn dc_minus_value(&self, x: &[f64]) -> Result<f64> {
        match &self.kind {
            SmoothKind::Dc { minus, .. } => Ok(minus.value(x)),
            _ => Err(Error::MissingEvaluator("smooth term carries no difference-of-convex split".into())),
        }
    }

    pub fn dc_plus(&self) -> Option<&QuadraticForm> {
        match &self.kind {
            SmoothKind::Dc { plus, .. } => Some(plus),
            _ => None,
        }
    }

    /// Quadratic part and per-coordinate quartic weights, used by surrogates that keep
    /// the block-restricted function exactly.
    pub(crate) fn quadratic_part(&self) -> Option<&QuadraticForm> {
        match &self.kind {
            SmoothKind::Quadratic(q) => Some(q),
            SmoothKind::Dc { plus, .. } => Some(plus),
            SmoothKind::Quartic { quad, .. } => quad.as_ref(),
        }
    }

    /// Stored entries touched by one block-gradient evaluation of block `i`.
    pub fn block_cost(&self, part: &BlockPartition, i: usize) -> usize {
        let rows = part.range(i);
        let quad = self.quadratic_part().map_or(0, |q| rows.clone().map(|r| q.q.row_cost(r)).sum());
        let minus = match &self.kind {
            SmoothKind::Dc { minus: ConcavePart::Quadratic(m), .. } => rows.clone().map(|r| m.q.row_cost(r)).sum(),
            _ => 0,
        };
        quad + minus + rows.len()
    }

    pub(crate) fn quartic_weights(&self) -> Option<&[f64]> {
        match &self.kind {
            SmoothKind::Quartic { weights, .. } => Some(weights),
            _ => None,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::DenseMatrix;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn dense(rows: &[Vec<f64>]) -> Matrix {
        Matrix::Dense(DenseMatrix::from_rows(rows).unwrap())
    }

    fn sample_terms() -> Vec<SmoothTerm> {
        let q = QuadraticForm::new(
            dense(&[vec![2.0, 0.5, 0.0], vec![0.5, 1.0, -0.3], vec![0.0, -0.3, 1.5]]),
            vec![1.0, -2.0, 0.5],
            0.7,
        )
        .unwrap();
        vec![
            SmoothTerm::new(SmoothKind::Quadratic(q.clone()), 3.0),
            SmoothTerm::new(SmoothKind::Dc { plus: q.clone(), minus: ConcavePart::LogCosh { weight: 0.4 } }, 3.0),
            SmoothTerm::new(SmoothKind::Dc { plus: q.clone(), minus: ConcavePart::Quadratic(q.clone()) }, 3.0),
            SmoothTerm::new(SmoothKind::Quartic { weights: vec![0.1, 0.2, 0.0], quad: Some(q) }, 10.0),
        ]
    }

    #[test]
    fn gradients_match_central_differences() {
        let part = BlockPartition::new(vec![2, 1]).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for term in sample_terms() {
            for _ in 0..20 {
                let x: Vec<f64> = (0..3).map(|_| rng.random_range(-1.5..1.5)).collect();
                for i in 0..2 {
                    let g = term.block_grad(&part, i, &x);
                    for (k, r) in part.range(i).enumerate() {
                        let h = 1e-5;
                        let mut xp = x.clone();
                        let mut xm = x.clone();
                        xp[r] += h;
                        xm[r] -= h;
                        let fd = (term.value(&xp) - term.value(&xm)) / (2.0 * h);
                        assert!((fd - g[k]).abs() <= 1e-5 * (1.0 + g[k].abs()), "{fd} vs {}", g[k]);
                    }
                }
            }
        }
    }

    #[test]
    fn block_change_matches_full_evaluation() {
        let part = BlockPartition::new(vec![2, 1]).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let mut scratch = Vec::new();
        for term in sample_terms() {
            let x: Vec<f64> = (0..3).map(|_| rng.random_range(-1.0..1.0)).collect();
            for i in 0..2 {
                let nb: Vec<f64> = (0..part.size(i)).map(|_| rng.random_range(-1.0..1.0)).collect();
                let mut y = x.clone();
                y[part.range(i)].copy_from_slice(&nb);
                let d = term.block_change(&part, i, &x, &nb, &mut scratch);
                assert!((d - (term.value(&y) - term.value(&x))).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn dc_with_equal_parts_cancels() {
        let q = QuadraticForm::new(dense(&[vec![1.0, 0.2], vec![0.2, 2.0]]), vec![0.3, 0.1], 1.0).unwrap();
        let t = SmoothTerm::new(SmoothKind::Dc { plus: q.clone(), minus: ConcavePart::Quadratic(q) }, 1.0);
        assert_eq!(t.value(&[0.7, -1.1]), 0.0);
    }

    #[test]
    fn hessian_matches_gradient_differences() {
        let part = BlockPartition::new(vec![2, 1]).unwrap();
        let x = vec![0.3, -0.8, 1.1];
        for term in sample_terms() {
            let h = term.block_hessian(&part, 0, &x);
            for b in 0..2 {
                let mut xp = x.clone();
                let mut xm = x.clone();
                xp[b] += 1e-6;
                xm[b] -= 1e-6;
                let gp = term.block_grad(&part, 0, &xp);
                let gm = term.block_grad(&part, 0, &xm);
                for a in 0..2 {
                    let fd = (gp[a] - gm[a]) / 2e-6;
                    assert!((fd - h.get(a, b)).abs() < 1e-5);
                }
            }
        }
    }

    #[test]
    fn json_roundtrip_with_lipschitz_field() {
        let t = &sample_terms()[1];
        let s = serde_json::to_string(t).unwrap();
        assert!(s.contains("\"L_f\":3.0"));
        assert!(s.contains("\"kind\":\"dc\""));
        let back: SmoothTerm = serde_json::from_str(&s).unwrap();
        assert_eq!(&back, t);
    }
}
