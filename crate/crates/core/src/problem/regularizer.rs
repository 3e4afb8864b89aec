use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::norm;

/// Convex, possibly nonsmooth block term `g_i`.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum BlockRegularizer {
    #[default]
    Zero,
    /// `λ‖x_i‖₁`.
    L1 { lambda: f64 },
    /// `λ‖x_i‖₂`.
    GroupL2 { lambda: f64 },
}

#[inline]
pub fn soft_threshold(v: f64, tau: f64) -> f64 {
    if v > tau {
        v - tau
    } else if v < -tau {
        v + tau
    } else {
        0.0
    }
}

impl BlockRegularizer {
    pub fn validate(&self) -> Result<()> {
        match self {
            BlockRegularizer::Zero => Ok(()),
            BlockRegularizer::L1 { lambda } | BlockRegularizer::GroupL2 { lambda } => {
                if lambda.is_finite() && *lambda >= 0.0 {
                    Ok(())
                } else {
                    Err(Error::Invalid(format!("regularizer weight must be nonnegative, got {lambda}")))
                }
            }
        }
    }

    pub fn is_zero(&self) -> bool {
        match self {
            BlockRegularizer::Zero => true,
            BlockRegularizer::L1 { lambda } | BlockRegularizer::GroupL2 { lambda } => *lambda == 0.0,
        }
    }

    pub fn value(&self, x: &[f64]) -> f64 {
        match self {
            BlockRegularizer::Zero => 0.0,
            BlockRegularizer::L1 { lambda } => lambda * x.iter().map(|t| t.abs()).sum::<f64>(),
            BlockRegularizer::GroupL2 { lambda } => lambda * norm(x),
        }
    }

    /// `prox_{t·g}(v)` written in place.
    pub fn prox_in_place(&self, v: &mut [f64], t: f64) {
        match self {
            BlockRegularizer::Zero => {}
            BlockRegularizer::L1 { lambda } => {
                let tau = t * lambda;
                v.iter_mut().for_each(|x| *x = soft_threshold(*x, tau));
            }
            BlockRegularizer::GroupL2 { lambda } => {
                let nv = norm(v);
                let tau = t * lambda;
                let s = if nv > tau { 1.0 - tau / nv } else { 0.0 };
                v.iter_mut().for_each(|x| *x *= s);
            }
        }
    }

    pub fn prox(&self, v: &[f64], t: f64) -> Vec<f64> {
        let mut out = v.to_vec();
        self.prox_in_place(&mut out, t);
        out
    }

    /// Lipschitz constant of `g_i` on a block of dimension `n_i`.
    pub fn lipschitz(&self, n_i: usize) -> f64 {
        match self {
            BlockRegularizer::Zero => 0.0,
            BlockRegularizer::L1 { lambda } => lambda * (n_i as f64).sqrt(),
            BlockRegularizer::GroupL2 { lambda } => *lambda,
        }
    }

    /// True if `g` is separable across coordinates.
    pub fn is_separable(&self) -> bool {
        !matches!(self, BlockRegularizer::GroupL2 { .. })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn regs() -> [BlockRegularizer; 3] {
        [
            BlockRegularizer::Zero,
            BlockRegularizer::L1 { lambda: 0.7 },
            BlockRegularizer::GroupL2 { lambda: 1.3 },
        ]
    }

    #[test]
    fn soft_threshold_closed_form() {
        assert_eq!(soft_threshold(3.0, 1.0), 2.0);
        assert_eq!(soft_threshold(-0.5, 1.0), 0.0);
        assert_eq!(soft_threshold(-2.5, 1.0), -1.5);
    }

    #[test]
    fn zero_json_form() {
        let r: BlockRegularizer = serde_json::from_str(r#"{"kind":"zero"}"#).unwrap();
        assert_eq!(r, BlockRegularizer::Zero);
        let r: BlockRegularizer = serde_json::from_str(r#"{"kind":"l1","lambda":2}"#).unwrap();
        assert_eq!(r, BlockRegularizer::L1 { lambda: 2.0 });
    }

    proptest! {
        #[test]
        fn midpoint_convexity(a in prop::collection::vec(-5.0f64..5.0, 3), b in prop::collection::vec(-5.0f64..5.0, 3)) {
            for g in regs() {
                let m: Vec<f64> = a.iter().zip(&b).map(|(x, y)| 0.5 * (x + y)).collect();
                prop_assert!(g.value(&m) <= 0.5 * (g.value(&a) + g.value(&b)) + 1e-12);
            }
        }

        #[test]
        fn prox_is_optimal(v in prop::collection::vec(-5.0f64..5.0, 3),
                           w in prop::collection::vec(-5.0f64..5.0, 3),
                           t in 0.01f64..3.0) {
            for g in regs() {
                let z = g.prox(&v, t);
                let obj = |p: &[f64]| g.value(p) + p.iter().zip(&v).map(|(a, b)| (a - b).powi(2)).sum::<f64>() / (2.0 * t);
                prop_assert!(obj(&z) <= obj(&w) + 1e-9);
            }
        }
    }
}
