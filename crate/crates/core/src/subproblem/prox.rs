//! Proximal map of `t·g + ι_C` for a block regularizer `g` and a convex region
//! `C` given as an intersection of simple pieces.

use crate::error::{Error, Result};
use crate::linalg::{dist, norm};
use crate::problem::{dykstra, project_ball, project_halfspace, BlockRegularizer, ConvexBlockSet, Region};

const SPLIT_TOL: f64 = 1e-14;
const SPLIT_MAX_ITER: usize = 20_000;

/// One convex piece of a feasible region.
#[derive(Debug, Clone)]
pub enum Piece<'a> {
    Set(&'a ConvexBlockSet),
    Ball { center: Vec<f64>, radius: f64 },
    Halfspace { normal: Vec<f64>, offset: f64 },
}

impl Piece<'_> {
    fn project(&self, v: &mut [f64]) {
        match self {
            Piece::Set(s) => s.project_in_place(v),
            Piece::Ball { center, radius } => project_ball(v, center, *radius),
            Piece::Halfspace { normal, offset } => project_halfspace(v, normal, *offset),
        }
    }

    fn violation(&self, v: &[f64]) -> f64 {
        match self {
            Piece::Set(s) => s.violation(v),
            Piece::Ball { center, radius } => (dist(v, center) - radius).max(0.0),
            Piece::Halfspace { normal, offset } => {
                ((crate::linalg::dot(normal, v) - offset) / norm(normal)).max(0.0)
            }
        }
    }
}

/// Intersection of convex pieces; whole space when empty.
#[derive(Debug, Clone, Default)]
pub struct FeasibleRegion<'a> {
    pieces: Vec<Piece<'a>>,
}

impl<'a> FeasibleRegion<'a> {
    pub fn new(set: &'a ConvexBlockSet) -> Self {
        let pieces = match set {
            ConvexBlockSet::Whole => Vec::new(),
            s => vec![Piece::Set(s)],
        };
        Self { pieces }
    }

    /// Adds the sublevel set of a constraint model.
    pub fn intersect(&mut self, region: Region) -> Result<()> {
        match region {
            Region::Whole => {}
            Region::Empty => {
                return Err(Error::InvariantViolation("convexified constraint set is empty".into()));
            }
            Region::Ball { center, radius } => self.pieces.push(Piece::Ball { center, radius }),
            Region::Halfspace { normal, offset } => self.pieces.push(Piece::Halfspace { normal, offset }),
        }
        Ok(())
    }

    pub fn is_whole(&self) -> bool {
        self.pieces.is_empty()
    }

    pub fn violation(&self, v: &[f64]) -> f64 {
        self.pieces.iter().map(|p| p.violation(v)).fold(0.0, f64::max)
    }

    pub fn project_in_place(&self, v: &mut [f64]) {
        match self.pieces.as_slice() {
            [] => {}
            [p] => p.project(v),
            pieces => {
                if pieces.iter().all(|p| p.violation(v) == 0.0) {
                    return;
                }
                let projs: Vec<Box<dyn Fn(&mut [f64]) + '_>> =
                    pieces.iter().map(|p| Box::new(move |z: &mut [f64]| p.project(z)) as Box<dyn Fn(&mut [f64])>).collect();
                let out = dykstra(v, &projs, SPLIT_TOL, SPLIT_MAX_ITER);
                v.copy_from_slice(&out);
            }
        }
    }

    /// True when the composite prox is a single closed-form evaluation.
    pub fn prox_is_exact(&self, reg: &BlockRegularizer) -> bool {
        if reg.is_zero() {
            return self.pieces.len() <= 1;
        }
        match self.pieces.as_slice() {
            [] => true,
            [Piece::Set(ConvexBlockSet::Box { .. })] => reg.is_separable(),
            _ => false,
        }
    }

    /// `argmin_z t·g(z) + ½‖z − v‖²` over the region, written into `v`.
    pub fn prox_in_place(&self, reg: &BlockRegularizer, v: &mut [f64], t: f64) {
        if reg.is_zero() {
            self.project_in_place(v);
            return;
        }
        if self.pieces.is_empty() {
            reg.prox_in_place(v, t);
            return;
        }
        if self.prox_is_exact(reg) {
            // separable g and a box: coordinatewise prox then clip
            reg.prox_in_place(v, t);
            self.project_in_place(v);
            return;
        }
        // Dykstra-type splitting for the prox of a sum of two convex functions
        let n = v.len();
        let mut x = v.to_vec();
        let mut p = vec![0.0; n];
        let mut q = vec![0.0; n];
        let mut y = vec![0.0; n];
        let mut y_prev = x.clone();
        let scale = 1.0 + norm(v);
        for _ in 0..SPLIT_MAX_ITER {
            y_prev.copy_from_slice(&y);
            for k in 0..n {
                y[k] = x[k] + p[k];
            }
            reg.prox_in_place(&mut y, t);
            for k in 0..n {
                p[k] += x[k] - y[k];
            }
            let prev = x.clone();
            for k in 0..n {
                x[k] = y[k] + q[k];
            }
            self.project_in_place(&mut x);
            for k in 0..n {
                q[k] += y[k] - x[k];
            }
            // x alone can stall for a step while the increments still move
            let change = dist(&prev, &x).max(dist(&y_prev, &y)).max(dist(&x, &y));
            if change <= SPLIT_TOL * scale {
                break;
            }
        }
        v.copy_from_slice(&x);
    }
}
