use serde::{Deserialize, Serialize};

use super::{iteration_bound, TheoryConstants};
use crate::error::Result;

/// One row of a K_ε table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KEpsilonRow {
    pub eps: f64,
    /// First iteration at which the seed-mean of `‖M_F‖²` is at most `eps`;
    /// `None` when censored by the budget.
    pub k: Option<u64>,
    pub mean_sq: Option<f64>,
    /// Worst-case iteration bound, when constants were supplied.
    pub bound: Option<f64>,
}

impl KEpsilonRow {
    pub fn censored(&self) -> bool {
        self.k.is_none()
    }
}

/// Seed-mean of `‖M_F(x^k)‖²` on the union of the iterations at which any
/// run was measured. Each run is held at its last measured value between
/// and after its measurements (a run that stopped early keeps its final value).
pub fn mean_square_series(runs: &[Vec<(u64, f64)>]) -> Vec<(u64, f64)> {
    let mut grid: Vec<u64> = runs.iter().flat_map(|r| r.iter().map(|p| p.0)).collect();
    grid.sort_unstable();
    grid.dedup();
    let mut pos = vec![0usize; runs.len()];
    let mut out = Vec::with_capacity(grid.len());
    for &k in &grid {
        let mut sum = 0.0;
        let mut seen = 0;
        for (r, run) in runs.iter().enumerate() {
            while pos[r] + 1 < run.len() && run[pos[r] + 1].0 <= k {
                pos[r] += 1;
            }
            if let Some(&(k0, v)) = run.get(pos[r]) {
                if k0 <= k {
                    sum += v * v;
                    seen += 1;
                }
            }
        }
        if seen == runs.len() {
            out.push((k, sum / seen as f64));
        }
    }
    out
}

/// First-hitting iterations of `E‖M_F‖² ≤ ε`, estimated by the seed mean.
pub fn k_epsilon(runs: &[Vec<(u64, f64)>], eps: &[f64]) -> Vec<KEpsilonRow> {
    let series = mean_square_series(runs);
    eps.iter()
        .map(|&e| {
            let hit = series.iter().find(|p| p.1 <= e);
            KEpsilonRow { eps: e, k: hit.map(|p| p.0), mean_sq: hit.map(|p| p.1), bound: None }
        })
        .collect()
}

/// Fills the `bound` column with the worst-case iteration count.
pub fn attach_bounds(rows: &mut [KEpsilonRow], tc: &TheoryConstants, update_bound: f64, gap: f64) -> Result<()> {
    for r in rows {
        r.bound = Some(iteration_bound(tc, update_bound, gap, r.eps)?);
    }
    Ok(())
}

/// Least-squares slope of `log K_ε` against `log(1/ε)` over uncensored rows
/// with `K_ε > 0`; `None` with fewer than two such rows.
pub fn loglog_slope(rows: &[KEpsilonRow]) -> Option<f64> {
    let pts: Vec<(f64, f64)> = rows
        .iter()
        .filter_map(|r| r.k.filter(|&k| k > 0).map(|k| ((1.0 / r.eps).ln(), (k as f64).ln())))
        .collect();
    if pts.len() < 2 {
        return None;
    }
    let n = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / n;
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
    (sxx > 0.0).then(|| sxy / sxx)
}
