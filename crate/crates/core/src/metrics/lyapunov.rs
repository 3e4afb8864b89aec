use std::collections::VecDeque;

use serde::{Deserialize, Serialize};

use super::TheoryConstants;
use crate::engine::Trace;
use crate::error::{Error, Result};
use crate::linalg::dist_sq;
use crate::problem::ProblemSpec;

/// `F̃ = F(x^k) + δ(L_f/2) Σ_{l=k−δ}^{k−1} (l − (k−1) + δ) ‖x^{l+1} − x^l‖²`.
///
/// `hist` holds `x^{k−δ}, …, x^k`, oldest first, padded with `x⁰` below index 0.
pub fn lyapunov(hist: &[Vec<f64>], spec: &ProblemSpec, delta: usize, lipschitz: f64) -> Result<f64> {
    if hist.len() != delta + 1 {
        return Err(Error::Dimension(format!(
            "Lyapunov value needs {} iterates, got {}",
            delta + 1,
            hist.len()
        )));
    }
    let current = hist.last().unwrap();
    spec.check_dim(current)?;
    let tail: f64 = hist.windows(2).enumerate().map(|(m, w)| (m + 1) as f64 * dist_sq(&w[1], &w[0])).sum();
    Ok(spec.objective(current) + delta as f64 * lipschitz / 2.0 * tail)
}

/// Running form of [`lyapunov`] fed with squared step lengths `‖x^{k+1} − x^k‖²`.
#[derive(Debug, Clone)]
pub struct LyapunovWindow {
    delta: usize,
    scale: f64,
    sq: VecDeque<f64>,
}

impl LyapunovWindow {
    pub fn new(delta: usize, lipschitz: f64) -> Self {
        LyapunovWindow { delta, scale: delta as f64 * lipschitz / 2.0, sq: VecDeque::with_capacity(delta + 1) }
    }

    pub fn push(&mut self, step_sq: f64) {
        if self.delta == 0 {
            return;
        }
        if self.sq.len() == self.delta {
            self.sq.pop_front();
        }
        self.sq.push_back(step_sq);
    }

    /// `F̃` given the current objective value.
    pub fn value(&self, objective: f64) -> f64 {
        // newest step has weight δ, the one before δ − 1, …
        let offset = self.delta - self.sq.len();
        let tail: f64 = self.sq.iter().enumerate().map(|(m, q)| (offset + m + 1) as f64 * q).sum();
        objective + self.scale * tail
    }
}

/// Per-step check of `F̃_{k+1} ≤ F̃_k − γ(c_f̃ − γ(L_f + δ²L_f/2))‖x̂ − x_i^k‖²`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DescentReport {
    pub steps: usize,
    pub gamma: f64,
    /// `γ(c_f̃ − γ(L_f + δ²L_f/2))`.
    pub coefficient: f64,
    pub tol: f64,
    pub min_slack: f64,
    pub violations: usize,
    pub first_violation: Option<u64>,
    pub ftilde_nonincreasing: bool,
}

impl DescentReport {
    pub fn passed(&self) -> bool {
        self.violations == 0
    }
}

/// Recomputes `F̃` from the objective values and step lengths in `trace`, using
/// `γ`, `δ`, `L_f` from `tc`, and reports the slack of every step.
/// `tol` defaults to `1e-9 (1 + |F(x⁰)|)`.
pub fn check_lyapunov_descent(trace: &Trace, tc: &TheoryConstants, tol: Option<f64>) -> DescentReport {
    let tol = tol.unwrap_or(1e-9 * (1.0 + trace.f0.abs()));
    let coefficient = tc.gamma * tc.descent_margin();
    let mut window = LyapunovWindow::new(tc.delta, tc.lip_f);
    let mut prev = window.value(trace.f0);
    let mut rep = DescentReport {
        steps: trace.records.len(),
        gamma: tc.gamma,
        coefficient,
        tol,
        min_slack: f64::INFINITY,
        violations: 0,
        first_violation: None,
        ftilde_nonincreasing: true,
    };
    for r in &trace.records {
        let s2 = r.step_norm * r.step_norm;
        window.push(tc.gamma * tc.gamma * s2);
        let next = window.value(r.f);
        let slack = prev - next - coefficient * s2;
        rep.min_slack = rep.min_slack.min(slack);
        if slack < -tol {
            rep.violations += 1;
            rep.first_violation.get_or_insert(r.k);
        }
        if next > prev + tol {
            rep.ftilde_nonincreasing = false;
        }
        prev = next;
    }
    if rep.steps == 0 {
        rep.min_slack = 0.0;
    }
    rep
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::generate::{generate, GeneratorKind, GeneratorSpec};

    fn spec() -> ProblemSpec {
        generate(&GeneratorSpec::new(GeneratorKind::LassoDense, 12, 3, 1)).unwrap()
    }

    #[test]
    fn start_and_constant_sequences_reduce_to_objective() {
        let s = spec();
        let x0 = vec![0.3; 12];
        let f = s.objective(&x0);
        for delta in [0, 1, 4] {
            let hist = vec![x0.clone(); delta + 1];
            assert_eq!(lyapunov(&hist, &s, delta, 2.0).unwrap(), f);
        }
        assert!(lyapunov(std::slice::from_ref(&x0), &s, 2, 1.0).is_err());
    }

    #[test]
    fn zero_delay_is_objective() {
        let s = spec();
        let x: Vec<f64> = (0..12).map(|k| k as f64 / 7.0).collect();
        assert_eq!(lyapunov(std::slice::from_ref(&x), &s, 0, 3.0).unwrap(), s.objective(&x));
    }

    #[test]
    fn window_matches_direct_formula() {
        let s = spec();
        let delta = 3;
        let lf = 1.7;
        let pts: Vec<Vec<f64>> = (0..8).map(|t| (0..12).map(|k| ((t * 12 + k) as f64 * 0.3).sin()).collect()).collect();
        let mut w = LyapunovWindow::new(delta, lf);
        for k in 0..pts.len() {
            if k > 0 {
                w.push(dist_sq(&pts[k], &pts[k - 1]));
            }
            let hist: Vec<Vec<f64>> =
                (0..=delta).map(|m| pts[(k + m).saturating_sub(delta)].clone()).collect();
            let direct = lyapunov(&hist, &s, delta, lf).unwrap();
            let running = w.value(s.objective(&pts[k]));
            assert!((direct - running).abs() < 1e-12 * (1.0 + direct.abs()), "k = {k}");
        }
    }
}
