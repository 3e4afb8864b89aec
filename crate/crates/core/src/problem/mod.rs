//! Block-structured problem instances
//! `min f(x) + Σ g_i(x_i)` over `x_i ∈ X_i`, optionally with private constraints
//! `c_{i,j}(x_i) ≤ 0`.

mod constraints;
mod partition;
mod regularizer;
mod sets;
mod smooth;

use std::path::Path;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub use constraints::{ConstraintFn, ConstraintShape, ConstraintSurrogateKind, IsoQuadratic, Region};
pub use partition::{BlockPartition, BlockVector};
pub use regularizer::{soft_threshold, BlockRegularizer};
pub use sets::{dykstra, project_ball, project_halfspace, ConvexBlockSet};
pub use smooth::{ConcavePart, QuadraticForm, SmoothKind, SmoothTerm};

/// A problem instance. Read-only after construction; all evaluators may be
/// called from several threads at once.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "ProblemFile", into = "ProblemFile")]
pub struct ProblemSpec {
    pub name: String,
    partition: Arc<BlockPartition>,
    pub smooth: SmoothTerm,
    pub regs: Vec<BlockRegularizer>,
    pub sets: Vec<ConvexBlockSet>,
    pub constraints: Option<Vec<Vec<ConstraintFn>>>,
    pub x0: Option<Vec<f64>>,
}

/// On-disk layout of a problem.
#[derive(Serialize, Deserialize)]
struct ProblemFile {
    name: String,
    n: usize,
    block_sizes: Vec<usize>,
    smooth: SmoothTerm,
    #[serde(default)]
    regs: Vec<BlockRegularizer>,
    #[serde(default)]
    sets: Vec<ConvexBlockSet>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    constraints: Option<Vec<Vec<ConstraintFn>>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    x0: Option<Vec<f64>>,
}

impl TryFrom<ProblemFile> for ProblemSpec {
    type Error = Error;

    fn try_from(f: ProblemFile) -> Result<Self> {
        let partition = BlockPartition::new(f.block_sizes)?;
        if partition.dim() != f.n {
            return Err(Error::Dimension(format!(
                "block sizes sum to {}, but n = {}",
                partition.dim(),
                f.n
            )));
        }
        let regs = if f.regs.is_empty() { vec![BlockRegularizer::Zero; partition.n_blocks()] } else { f.regs };
        let sets = if f.sets.is_empty() { vec![ConvexBlockSet::Whole; partition.n_blocks()] } else { f.sets };
        ProblemSpec::new(f.name, partition, f.smooth, regs, sets, f.constraints, f.x0)
    }
}

impl From<ProblemSpec> for ProblemFile {
    fn from(s: ProblemSpec) -> Self {
        ProblemFile {
            name: s.name,
            n: s.partition.dim(),
            block_sizes: s.partition.sizes().to_vec(),
            smooth: s.smooth,
            regs: s.regs,
            sets: s.sets,
            constraints: s.constraints,
            x0: s.x0,
        }
    }
}

/// Per-block outcome of [`check_feasibility`].
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BlockFeasibility {
    pub in_set: bool,
    pub set_violation: f64,
    /// `max_j c_{i,j}(x_i)`, absent when the block has no constraints.
    pub max_constraint: Option<f64>,
    /// `max(set_violation, max_constraint⁺)`.
    pub violation: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FeasibilityReport {
    pub blocks: Vec<BlockFeasibility>,
    pub max_violation: f64,
    pub feasible: bool,
}

impl ProblemSpec {
    pub fn new(
        name: impl Into<String>,
        partition: BlockPartition,
        smooth: SmoothTerm,
        regs: Vec<BlockRegularizer>,
        sets: Vec<ConvexBlockSet>,
        constraints: Option<Vec<Vec<ConstraintFn>>>,
        x0: Option<Vec<f64>>,
    ) -> Result<Self> {
        let nb = partition.n_blocks();
        smooth.validate(partition.dim())?;
        if regs.len() != nb || sets.len() != nb {
            return Err(Error::Dimension(format!(
                "{nb} blocks but {} regularizers and {} sets",
                regs.len(),
                sets.len()
            )));
        }
        for r in &regs {
            r.validate()?;
        }
        for (i, s) in sets.iter().enumerate() {
            s.validate(partition.size(i))?;
        }
        if let Some(cons) = &constraints {
            if cons.len() != nb {
                return Err(Error::Dimension(format!("{nb} blocks but {} constraint lists", cons.len())));
            }
            for (i, list) in cons.iter().enumerate() {
                for c in list {
                    c.validate(partition.size(i))?;
                }
            }
            if x0.is_none() {
                return Err(Error::Invalid("a constrained problem must store a feasible starting point x0".into()));
            }
        }
        if let Some(x) = &x0 {
            if x.len() != partition.dim() {
                return Err(Error::Dimension(format!("x0 has length {}, expected {}", x.len(), partition.dim())));
            }
        }
        Ok(Self { name: name.into(), partition: Arc::new(partition), smooth, regs, sets, constraints, x0 })
    }

    pub fn from_json_str(s: &str) -> Result<Self> {
        Ok(serde_json::from_str(s)?)
    }

    pub fn to_json_string(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_json_str(&std::fs::read_to_string(path)?)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        std::fs::write(path, self.to_json_string()?)?;
        Ok(())
    }

    pub fn partition(&self) -> &Arc<BlockPartition> {
        &self.partition
    }

    pub fn dim(&self) -> usize {
        self.partition.dim()
    }

    pub fn n_blocks(&self) -> usize {
        self.partition.n_blocks()
    }

    pub fn lipschitz(&self) -> f64 {
        self.smooth.lipschitz
    }

    /// True for problems with private nonconvex constraints.
    pub fn is_constrained(&self) -> bool {
        self.constraints.as_ref().is_some_and(|c| c.iter().any(|l| !l.is_empty()))
    }

    pub fn block_constraints(&self, i: usize) -> &[ConstraintFn] {
        self.constraints.as_ref().map_or(&[], |c| c[i].as_slice())
    }

    /// The stored start, or the projection of the origin onto `X`.
    pub fn start_point(&self) -> Vec<f64> {
        match &self.x0 {
            Some(x) => x.clone(),
            None => {
                let mut x = vec![0.0; self.dim()];
                for i in 0..self.n_blocks() {
                    self.sets[i].project_in_place(self.partition.block_mut(&mut x, i));
                }
                x
            }
        }
    }

    pub fn reg_value(&self, x: &[f64]) -> f64 {
        (0..self.n_blocks()).map(|i| self.regs[i].value(self.partition.block(x, i))).sum()
    }

    /// `F(x)` on a raw slice; the caller guarantees the length.
    pub fn objective(&self, x: &[f64]) -> f64 {
        debug_assert_eq!(x.len(), self.dim());
        self.smooth.value(x) + self.reg_value(x)
    }

    pub fn check_dim(&self, x: &[f64]) -> Result<()> {
        if x.len() != self.dim() {
            return Err(Error::Dimension(format!("point has length {}, problem has {}", x.len(), self.dim())));
        }
        Ok(())
    }

    pub fn block_feasibility(&self, i: usize, xi: &[f64], tol: f64) -> BlockFeasibility {
        let set_violation = self.sets[i].violation(xi);
        let max_constraint = {
            let cons = self.block_constraints(i);
            (!cons.is_empty()).then(|| cons.iter().map(|c| c.value(xi)).fold(f64::NEG_INFINITY, f64::max))
        };
        let violation = set_violation.max(max_constraint.map_or(0.0, |m| m.max(0.0)));
        BlockFeasibility { in_set: set_violation <= tol, set_violation, max_constraint, violation }
    }
}

/// `F(x) = f(x) + Σ_i g_i(x_i)`.
pub fn eval_objective(spec: &ProblemSpec, x: &BlockVector) -> Result<f64> {
    if x.partition().as_ref() != spec.partition.as_ref() {
        return Err(Error::Dimension("point partition differs from the problem partition".into()));
    }
    Ok(spec.objective(x.as_slice()))
}

/// Membership of every block in `X_i` and its private constraint set.
pub fn check_feasibility(spec: &ProblemSpec, x: &[f64], tol: f64) -> FeasibilityReport {
    if x.len() != spec.dim() {
        return FeasibilityReport { blocks: Vec::new(), max_violation: f64::INFINITY, feasible: false };
    }
    let blocks: Vec<BlockFeasibility> =
        (0..spec.n_blocks()).map(|i| spec.block_feasibility(i, spec.partition.block(x, i), tol)).collect();
    let max_violation = blocks.iter().map(|b| b.violation).fold(0.0, f64::max);
    FeasibilityReport { feasible: max_violation <= tol, max_violation, blocks }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::{DenseMatrix, Matrix};

    fn lasso_identity() -> ProblemSpec {
        let q = QuadraticForm::new(Matrix::Dense(DenseMatrix::identity(2)), vec![0.0, 0.0], 0.0).unwrap();
        ProblemSpec::new(
            "lasso-id",
            BlockPartition::new(vec![1, 1]).unwrap(),
            SmoothTerm::new(SmoothKind::Quadratic(q), 1.0),
            vec![BlockRegularizer::L1 { lambda: 1.0 }; 2],
            vec![ConvexBlockSet::Whole; 2],
            None,
            None,
        )
        .unwrap()
    }

    #[test]
    fn objective_hand_values() {
        let spec = lasso_identity();
        let p = spec.partition().clone();
        let zero = BlockVector::zeros(p.clone());
        assert_eq!(eval_objective(&spec, &zero).unwrap(), 0.0);
        let x = BlockVector::new(p, vec![1.0, -1.0]).unwrap();
        assert_eq!(eval_objective(&spec, &x).unwrap(), 3.0);
    }

    #[test]
    fn objective_rejects_foreign_partition() {
        let spec = lasso_identity();
        let other = Arc::new(BlockPartition::new(vec![2]).unwrap());
        assert!(matches!(eval_objective(&spec, &BlockVector::zeros(other)), Err(Error::Dimension(_))));
    }

    #[test]
    fn ball_constraint_violation() {
        let q = QuadraticForm::new(Matrix::Dense(DenseMatrix::identity(2)), vec![0.0, 0.0], 0.0).unwrap();
        let spec = ProblemSpec::new(
            "ring",
            BlockPartition::new(vec![2]).unwrap(),
            SmoothTerm::new(SmoothKind::Quadratic(q), 1.0),
            vec![BlockRegularizer::Zero],
            vec![ConvexBlockSet::Whole],
            Some(vec![vec![ConstraintFn::new(ConstraintShape::Sphere { a: 1.0, center: vec![0.0, 0.0], r: -1.0 })]]),
            Some(vec![0.0, 0.0]),
        )
        .unwrap();
        let rep = check_feasibility(&spec, &[2.0, 0.0], 1e-12);
        assert!(!rep.feasible);
        assert_eq!(rep.max_violation, 3.0);
        assert!(check_feasibility(&spec, &[0.0, 0.5], 1e-12).feasible);
    }

    #[test]
    fn constrained_problem_needs_start() {
        let q = QuadraticForm::new(Matrix::Dense(DenseMatrix::identity(1)), vec![0.0], 0.0).unwrap();
        let r = ProblemSpec::new(
            "p",
            BlockPartition::new(vec![1]).unwrap(),
            SmoothTerm::new(SmoothKind::Quadratic(q), 1.0),
            vec![BlockRegularizer::Zero],
            vec![ConvexBlockSet::Whole],
            Some(vec![vec![ConstraintFn::new(ConstraintShape::Affine { normal: vec![1.0], offset: 0.0 })]]),
            None,
        );
        assert!(matches!(r, Err(Error::Invalid(_))));
    }

    #[test]
    fn file_defaults_and_roundtrip() {
        let text = r#"{
            "name": "tiny", "n": 3, "block_sizes": [1, 2],
            "smooth": {"kind": "quadratic", "q": {"rows": [0,1,2], "cols": [0,1,2], "vals": [1,2,3]}, "c": [1,0,0], "L_f": 3}
        }"#;
        let spec = ProblemSpec::from_json_str(text).unwrap();
        assert_eq!(spec.regs, vec![BlockRegularizer::Zero; 2]);
        assert_eq!(spec.sets, vec![ConvexBlockSet::Whole; 2]);
        let back = ProblemSpec::from_json_str(&spec.to_json_string().unwrap()).unwrap();
        assert_eq!(back, spec);
        assert!(ProblemSpec::from_json_str(&text.replace("\"n\": 3", "\"n\": 4")).is_err());
    }
}
