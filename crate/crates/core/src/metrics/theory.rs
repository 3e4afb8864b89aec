use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// `c_f̃ / (L_f + δ² L_f / 2)`: stepsizes strictly below this make the
/// Lyapunov function decrease at every iteration.
pub fn max_stepsize(modulus: f64, lipschitz: f64, delta: usize) -> f64 {
    let d = delta as f64;
    modulus / (lipschitz + d * d * lipschitz / 2.0)
}

/// Constants entering the iteration-complexity bound.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TheoryConstants {
    /// Strong convexity modulus `c_f̃` of the surrogates.
    pub modulus: f64,
    #[serde(rename = "L_f")]
    pub lip_f: f64,
    #[serde(rename = "L_B")]
    pub lip_b: f64,
    #[serde(rename = "L_E")]
    pub lip_e: f64,
    #[serde(rename = "L_g", default)]
    pub lip_g: f64,
    pub delta: usize,
    /// Window `T` of the selection assumption.
    pub window: usize,
    pub p_min: f64,
    pub alpha: f64,
    pub gamma: f64,
    pub n_blocks: usize,
}

impl TheoryConstants {
    pub fn validate(&self) -> Result<()> {
        if !(self.alpha > 0.0 && self.alpha < 1.0) {
            return Err(Error::Invalid(format!("alpha = {} outside (0, 1)", self.alpha)));
        }
        if !(self.gamma > 0.0 && self.gamma <= 1.0) {
            return Err(Error::Invalid(format!("gamma = {} outside (0, 1]", self.gamma)));
        }
        if !(self.p_min > 0.0 && self.p_min <= 1.0) {
            return Err(Error::Invalid(format!("p_min = {} outside (0, 1]", self.p_min)));
        }
        let all = [self.modulus, self.lip_f, self.lip_b, self.lip_e, self.lip_g];
        if all.iter().any(|v| !v.is_finite() || *v < 0.0) || self.modulus == 0.0 {
            return Err(Error::Invalid("theory constants must be finite, nonnegative, with c_f̃ > 0".into()));
        }
        if self.n_blocks == 0 {
            return Err(Error::Invalid("n_blocks must be positive".into()));
        }
        Ok(())
    }

    pub fn max_stepsize(&self) -> f64 {
        max_stepsize(self.modulus, self.lip_f, self.delta)
    }

    /// `c_f̃ − γ(L_f + δ² L_f / 2)`, the per-step descent coefficient over `γ`.
    pub fn descent_margin(&self) -> f64 {
        let d = self.delta as f64;
        self.modulus - self.gamma * (self.lip_f + d * d * self.lip_f / 2.0)
    }
}

/// `(C1, C2)` of the iteration-complexity bound.
pub fn complexity_constants(tc: &TheoryConstants) -> Result<(f64, f64)> {
    tc.validate()?;
    let margin = tc.descent_margin();
    if margin <= 0.0 {
        return Err(Error::Domain(format!(
            "gamma = {} is not below the stepsize bound {}",
            tc.gamma,
            tc.max_stepsize()
        )));
    }
    let (lb, le, lf, g) = (tc.lip_b, tc.lip_e, tc.lip_f, tc.gamma);
    let denom = g * margin * (tc.p_min - tc.p_min * tc.alpha);
    let c1 = 2.0
        * (1.0
            + (1.0 + le) * (1.0 + lb + le)
            + g * g * tc.n_blocks as f64 * tc.p_min / tc.alpha * (1.0 + (lf + 1.0).powi(2)))
        / denom;
    let c2 = 2.0 * tc.window as f64 * lb * (1.0 + lb + le) / denom;
    Ok((c1, c2))
}

/// Worst-case iteration count for `E‖M_F‖² ≤ ε`:
/// `[C1 (T+1) + C2 γ² C (T+δ)] (F(x⁰) − F*) / ε`, where `C` bounds how often a
/// block is updated within a delay window (`C = δ` always works).
pub fn iteration_bound(tc: &TheoryConstants, update_bound: f64, gap: f64, eps: f64) -> Result<f64> {
    let (c1, c2) = complexity_constants(tc)?;
    let t = tc.window as f64;
    Ok((c1 * (t + 1.0) + c2 * tc.gamma * tc.gamma * update_bound * (t + tc.delta as f64)) * gap.max(0.0) / eps)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn worked() -> TheoryConstants {
        TheoryConstants {
            modulus: 2.0,
            lip_f: 1.0,
            lip_b: 0.0,
            lip_e: 0.0,
            lip_g: 0.0,
            delta: 0,
            window: 1,
            p_min: 1.0,
            alpha: 0.5,
            gamma: 0.5,
            n_blocks: 1,
        }
    }

    #[test]
    fn stepsize_bound_examples() {
        assert_eq!(max_stepsize(1.0, 1.0, 0), 1.0);
        assert!((max_stepsize(1.0, 1.0, 2) - 1.0 / 3.0).abs() < 1e-15);
        for d in 2..20 {
            assert!(max_stepsize(1.0, 1.0, 2 * d) < max_stepsize(1.0, 1.0, d) / 2.0);
        }
    }

    #[test]
    fn worked_example_gives_24_and_zero() {
        let (c1, c2) = complexity_constants(&worked()).unwrap();
        assert!((c1 - 24.0).abs() < 1e-12);
        assert_eq!(c2, 0.0);
    }

    #[test]
    fn stepsize_at_bound_is_domain_error() {
        let mut tc = worked();
        tc.gamma = 1.0;
        tc.modulus = 1.0;
        assert!(matches!(complexity_constants(&tc), Err(Error::Domain(_))));
        tc.alpha = 1.0;
        assert!(matches!(complexity_constants(&tc), Err(Error::Invalid(_))));
    }

    proptest! {
        #[test]
        fn c2_halves_when_one_minus_alpha_doubles(
            lb in 0.01..5.0f64, le in 0.0..5.0f64, p in 0.05..1.0f64, s in 0.05..0.45f64, t in 1usize..5
        ) {
            let mut tc = worked();
            tc.lip_b = lb;
            tc.lip_e = le;
            tc.p_min = p;
            tc.window = t;
            tc.gamma = 0.1;
            tc.alpha = 1.0 - s;
            let (_, narrow) = complexity_constants(&tc).unwrap();
            tc.alpha = 1.0 - 2.0 * s;
            let (_, wide) = complexity_constants(&tc).unwrap();
            prop_assert!((narrow - 2.0 * wide).abs() <= 1e-12 * narrow);
        }
    }
}
