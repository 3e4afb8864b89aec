use std::fmt::Write as _;
use std::path::PathBuf;

use anyhow::{bail, Context, Result};
use clap::{Args, ValueEnum};

use asyflexa::engine::{load_trace, EngineKind, RunSummary, Trace};
use asyflexa::metrics::{attach_bounds, check_lyapunov_descent, delay_stats, k_epsilon, loglog_slope, speedup_report};

#[derive(Clone, Copy, ValueEnum)]
pub enum Report {
    Descent,
    Delays,
    Kepsilon,
    Speedup,
}

#[derive(Args)]
pub struct AnalyzeArgs {
    #[arg(value_enum)]
    what: Report,
    /// Output prefixes of the runs to analyze.
    #[arg(required = true)]
    prefixes: Vec<PathBuf>,
    /// Thresholds for the K_ε table.
    #[arg(long, value_delimiter = ',', default_value = "1e-1,1e-2,1e-3")]
    eps: Vec<f64>,
    /// Optimal value used in the iteration bound; defaults to the lowest
    /// objective seen in any of the traces.
    #[arg(long)]
    f_star: Option<f64>,
    /// Report file (JSON for descent and delays, CSV for kepsilon and speedup).
    #[arg(long, short)]
    out: Option<PathBuf>,
}

fn load_all(prefixes: &[PathBuf]) -> Result<Vec<(Trace, RunSummary)>> {
    prefixes
        .iter()
        .map(|p| load_trace(p).with_context(|| format!("loading run {}", p.display())))
        .collect()
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map_or(String::new(), |v| format!("{v:.16e}"))
}

/// Exit code 0, or 2 when a descent check found violations.
pub fn run(a: AnalyzeArgs) -> Result<u8> {
    let runs = load_all(&a.prefixes)?;
    let mut code = 0;
    let file = match a.what {
        Report::Descent => {
            let mut reports = Vec::new();
            for ((trace, s), p) in runs.iter().zip(&a.prefixes) {
                if trace.records.iter().any(|r| r.f.is_nan() || r.ftilde.is_nan()) {
                    bail!("{} has no per-step objective values (threaded run without replay)", p.display());
                }
                let mut tc = s.run.theory;
                tc.delta = s.lyapunov_delta;
                let rep = check_lyapunov_descent(trace, &tc, None);
                println!("{}: steps: {}  violations: {}  min slack: {:.3e}", p.display(), rep.steps, rep.violations, rep.min_slack);
                if !rep.passed() {
                    code = 2;
                }
                reports.push(rep);
            }
            serde_json::to_string_pretty(&reports)? + "\n"
        }
        Report::Delays => {
            let mut reports = Vec::new();
            for ((trace, s), p) in runs.iter().zip(&a.prefixes) {
                let rep = delay_stats(trace, s.n_blocks, Some(s.lyapunov_delta));
                println!(
                    "{}: max delay {}  average delay {:.4}  average min delay {:.4}",
                    p.display(),
                    rep.max_delay,
                    rep.average_delay,
                    rep.average_min_delay
                );
                reports.push(rep);
            }
            serde_json::to_string_pretty(&reports)? + "\n"
        }
        Report::Kepsilon => {
            let series: Vec<Vec<(u64, f64)>> = runs.iter().map(|(t, _)| t.stationarity_series()).collect();
            let mut rows = k_epsilon(&series, &a.eps);
            let (first_trace, first) = &runs[0];
            let f_star = a.f_star.unwrap_or_else(|| {
                runs.iter()
                    .flat_map(|(t, _)| t.records.iter().map(|r| r.f).chain([t.f0]))
                    .fold(f64::INFINITY, f64::min)
            });
            let update_bound = runs
                .iter()
                .map(|(t, s)| delay_stats(t, s.n_blocks, Some(s.lyapunov_delta)).update_bound as f64)
                .fold(0.0, f64::max);
            let gap = first_trace.f0 - f_star;
            if runs.iter().any(|(t, _)| t.f0 != first_trace.f0) {
                eprintln!("warning: runs start from different objective values; the bound uses the first");
            }
            attach_bounds(&mut rows, &first.run.theory, update_bound, gap.max(0.0))?;
            let mut csv = String::from("eps,K_eps,mean_sq,bound\n");
            for r in &rows {
                writeln!(csv, "{:e},{},{},{}", r.eps, r.k.map_or(String::new(), |k| k.to_string()), fmt_opt(r.mean_sq), fmt_opt(r.bound))?;
                println!(
                    "eps {:e}  K {}  bound {}",
                    r.eps,
                    r.k.map_or("censored".into(), |k| k.to_string()),
                    r.bound.map_or("-".into(), |b| format!("{b:.4e}"))
                );
            }
            match loglog_slope(&rows) {
                Some(s) => println!("log-log slope {s:.4}"),
                None => println!("log-log slope: fewer than two uncensored rows"),
            }
            csv
        }
        Report::Speedup => {
            let mut times = Vec::new();
            for (_, s) in &runs {
                let Some(t) = &s.threaded else {
                    bail!("speedup needs threaded runs; {} is {:?}", s.problem, EngineKind::Sim);
                };
                times.push((t.workers, t.time_to_target_seconds));
            }
            let rows = speedup_report(&times);
            let mut csv = String::from("workers,seconds,speedup,efficiency\n");
            for r in &rows {
                writeln!(csv, "{},{},{},{}", r.workers, fmt_opt(r.seconds), fmt_opt(r.speedup), fmt_opt(r.efficiency))?;
                println!(
                    "workers {}  seconds {}  speedup {}  efficiency {}",
                    r.workers,
                    r.seconds.map_or("censored".into(), |v| format!("{v:.4}")),
                    r.speedup.map_or("-".into(), |v| format!("{v:.3}")),
                    r.efficiency.map_or("-".into(), |v| format!("{v:.3}"))
                );
            }
            csv
        }
    };
    if let Some(p) = &a.out {
        std::fs::write(p, file).with_context(|| format!("writing {}", p.display()))?;
    }
    Ok(code)
}
