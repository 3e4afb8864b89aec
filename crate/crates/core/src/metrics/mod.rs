//! Stationarity measures, the Lyapunov function, stepsize and complexity
//! constants, delay statistics, first-hitting iteration tables and speedups.

mod delays;
mod kepsilon;
mod lyapunov;
mod speedup;
mod stationarity;
mod theory;

pub use delays::{delay_stats, DelayReport};
pub use kepsilon::{attach_bounds, k_epsilon, loglog_slope, mean_square_series, KEpsilonRow};
pub use lyapunov::{check_lyapunov_descent, lyapunov, DescentReport, LyapunovWindow};
pub use speedup::{speedup_report, SpeedupRow};
pub use stationarity::{prox_gradient_point, stationarity, stationarity_ncc};
pub use theory::{complexity_constants, iteration_bound, max_stepsize, TheoryConstants};
