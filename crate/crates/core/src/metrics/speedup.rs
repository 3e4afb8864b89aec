use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpeedupRow {
    pub workers: usize,
    /// Seconds to reach the stationarity target; `None` when censored.
    pub seconds: Option<f64>,
    pub speedup: Option<f64>,
    pub efficiency: Option<f64>,
}

/// Speedups relative to the single-worker time (or the smallest worker count
/// present, scaled by its count).
pub fn speedup_report(times: &[(usize, Option<f64>)]) -> Vec<SpeedupRow> {
    let mut sorted = times.to_vec();
    sorted.sort_by_key(|t| t.0);
    let base = sorted.first().and_then(|&(w, t)| t.map(|t| t * w as f64));
    sorted
        .into_iter()
        .map(|(w, t)| {
            let speedup = match (base, t) {
                (Some(b), Some(t)) if t > 0.0 => Some(b / t),
                _ => None,
            };
            SpeedupRow { workers: w, seconds: t, speedup, efficiency: speedup.map(|s| s / w as f64) }
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn single_worker_is_unit() {
        let rows = speedup_report(&[(4, Some(2.5)), (1, Some(8.0)), (2, None)]);
        assert_eq!(rows[0].speedup, Some(1.0));
        assert_eq!(rows[1].speedup, None);
        assert_eq!(rows[2].speedup, Some(3.2));
        assert_eq!(rows[2].efficiency, Some(0.8));
    }
}
