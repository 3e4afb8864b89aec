use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::ResolvedRun;
use crate::error::{Error, Result};
use crate::metrics::DelayReport;
use crate::scheduler::ValidationReport;

/// One executed iteration. `f` and `ftilde` are the values after the update,
/// `F(x^{k+1})` and `F̃_{k+1}`; `mf` is `‖M_F(x^{k+1})‖` when measured.
#[derive(Debug, Clone, PartialEq)]
pub struct StepRecord {
    pub k: u64,
    pub worker: usize,
    pub i: usize,
    pub d_min: usize,
    pub d_max: usize,
    /// `‖x̂_i(x̃^k) − x_i^k‖`.
    pub step_norm: f64,
    pub f: f64,
    pub ftilde: f64,
    pub mf: Option<f64>,
    pub wall_ns: Option<u64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Trace {
    pub records: Vec<StepRecord>,
    pub f0: f64,
    pub mf0: Option<f64>,
    pub final_x: Vec<f64>,
    /// The stationarity target was met before the budget ran out.
    pub reached_target: bool,
}

impl Trace {
    pub fn empty(x0: Vec<f64>, f0: f64) -> Self {
        Trace { records: Vec::new(), f0, mf0: None, final_x: x0, reached_target: false }
    }

    pub fn iterations(&self) -> u64 {
        self.records.len() as u64
    }

    pub fn final_objective(&self) -> f64 {
        self.records.last().map_or(self.f0, |r| r.f)
    }

    /// `(k, ‖M_F(x^k)‖)` at every measured iterate, starting with `x⁰`.
    pub fn stationarity_series(&self) -> Vec<(u64, f64)> {
        self.mf0
            .map(|m| (0, m))
            .into_iter()
            .chain(self.records.iter().filter_map(|r| r.mf.map(|m| (r.k + 1, m))))
            .collect()
    }

    pub fn final_stationarity(&self) -> Option<f64> {
        self.records.iter().rev().find_map(|r| r.mf).or(self.mf0)
    }
}

/// Diagnostics specific to a threaded run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ThreadedDiagnostics {
    pub workers: usize,
    /// Block reads whose checksum did not match their data.
    pub torn_reads: u64,
    pub delta_cap: usize,
    /// Some reconstructed delay exceeded `delta_cap`.
    pub bounded_delay_unverifiable: bool,
    /// `max |x_final(threaded) − x_final(replay)|`, when replayed.
    pub replay_max_diff: Option<f64>,
    pub time_to_target_seconds: Option<f64>,
}

/// Summary JSON written next to the trace CSV.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunSummary {
    pub problem: String,
    pub engine: super::EngineKind,
    pub n: usize,
    pub n_blocks: usize,
    pub seed: u64,
    #[serde(flatten)]
    pub run: ResolvedRun,
    /// Delay bound of the history used to evaluate the Lyapunov function.
    pub lyapunov_delta: usize,
    pub iterations: u64,
    pub budget: u64,
    #[serde(rename = "F0")]
    pub f0: f64,
    #[serde(rename = "F_final")]
    pub f_final: f64,
    #[serde(rename = "MF0")]
    pub mf0: Option<f64>,
    #[serde(rename = "MF_final")]
    pub mf_final: Option<f64>,
    pub target_stationarity: Option<f64>,
    pub reached_target: bool,
    /// A target was set and not met within the budget.
    pub censored: bool,
    pub wall_seconds: f64,
    /// Largest violation of `X` or of the private constraints over all iterates.
    pub max_feasibility_violation: f64,
    pub delays: DelayReport,
    pub validation: Option<ValidationReport>,
    pub threaded: Option<ThreadedDiagnostics>,
    pub x_final: Vec<f64>,
}

const TRACE_HEADER: [&str; 10] = ["k", "worker", "i", "d_min", "d_max", "step_norm", "F", "Ftilde", "MF", "wall_ns"];

fn fmt_f64(v: f64) -> String {
    format!("{v:.16e}")
}

pub fn write_trace_csv<W: Write>(w: W, records: &[StepRecord]) -> Result<W> {
    let mut out = csv::Writer::from_writer(w);
    out.write_record(TRACE_HEADER)?;
    for r in records {
        out.write_record([
            r.k.to_string(),
            r.worker.to_string(),
            r.i.to_string(),
            r.d_min.to_string(),
            r.d_max.to_string(),
            fmt_f64(r.step_norm),
            fmt_f64(r.f),
            fmt_f64(r.ftilde),
            r.mf.map(fmt_f64).unwrap_or_default(),
            r.wall_ns.map(|t| t.to_string()).unwrap_or_default(),
        ])?;
    }
    out.flush()?;
    out.into_inner().map_err(|e| Error::Io(std::io::Error::other(e.to_string())))
}

pub fn read_trace_csv<R: Read>(r: R) -> Result<Vec<StepRecord>> {
    let mut rdr = csv::Reader::from_reader(r);
    let header: Vec<String> = rdr.headers()?.iter().map(str::to_string).collect();
    if header != TRACE_HEADER {
        return Err(Error::Parse(format!("trace header {header:?} does not match {TRACE_HEADER:?}")));
    }
    let mut out = Vec::new();
    for rec in rdr.records() {
        let rec = rec?;
        let line = rec.position().map_or(0, |p| p.line());
        let bad = |c: usize| Error::Parse(format!("line {line}: bad value '{}' in column {}", &rec[c], TRACE_HEADER[c]));
        let int = |c: usize| rec[c].parse::<u64>().map_err(|_| bad(c));
        let float = |c: usize| rec[c].parse::<f64>().map_err(|_| bad(c));
        out.push(StepRecord {
            k: int(0)?,
            worker: int(1)? as usize,
            i: int(2)? as usize,
            d_min: int(3)? as usize,
            d_max: int(4)? as usize,
            step_norm: float(5)?,
            f: float(6)?,
            ftilde: float(7)?,
            mf: if rec[8].is_empty() { None } else { Some(float(8)?) },
            wall_ns: if rec[9].is_empty() { None } else { Some(int(9)?) },
        });
    }
    Ok(out)
}

/// Paths of the files written for an output prefix.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct OutputPaths {
    pub trace: PathBuf,
    pub summary: PathBuf,
    pub events: PathBuf,
}

impl OutputPaths {
    pub fn new(prefix: &Path) -> Self {
        let with = |suffix: &str| {
            let mut s = prefix.as_os_str().to_owned();
            s.push(suffix);
            PathBuf::from(s)
        };
        OutputPaths { trace: with(".trace.csv"), summary: with(".summary.json"), events: with(".events.csv") }
    }
}

pub fn save_summary(path: &Path, summary: &RunSummary) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    serde_json::to_writer_pretty(&mut w, summary)?;
    w.write_all(b"\n")?;
    Ok(())
}

pub fn load_summary(path: &Path) -> Result<RunSummary> {
    Ok(serde_json::from_reader(BufReader::new(File::open(path)?))?)
}

/// Reassembles a trace from its CSV and summary.
pub fn load_trace(prefix: &Path) -> Result<(Trace, RunSummary)> {
    let paths = OutputPaths::new(prefix);
    let summary = load_summary(&paths.summary)?;
    let records = read_trace_csv(BufReader::new(File::open(&paths.trace)?))?;
    let trace = Trace {
        records,
        f0: summary.f0,
        mf0: summary.mf0,
        final_x: summary.x_final.clone(),
        reached_target: summary.reached_target,
    };
    Ok((trace, summary))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn csv_round_trip_is_exact() {
        let recs = vec![
            StepRecord { k: 0, worker: 1, i: 2, d_min: 0, d_max: 3, step_norm: 0.1 + 0.2, f: -1.0 / 3.0, ftilde: 1e-300, mf: None, wall_ns: Some(17) },
            StepRecord { k: 1, worker: 0, i: 0, d_min: 1, d_max: 1, step_norm: 0.0, f: 2.5, ftilde: 2.5, mf: Some(std::f64::consts::PI), wall_ns: None },
        ];
        let bytes = write_trace_csv(Vec::new(), &recs).unwrap();
        let text = String::from_utf8(bytes.clone()).unwrap();
        assert!(text.starts_with("k,worker,i,d_min,d_max,step_norm,F,Ftilde,MF,wall_ns\n"));
        assert_eq!(read_trace_csv(bytes.as_slice()).unwrap(), recs);
    }

    #[test]
    fn output_paths_append_suffixes() {
        let p = OutputPaths::new(Path::new("out/run1"));
        assert_eq!(p.trace, PathBuf::from("out/run1.trace.csv"));
        assert_eq!(p.events, PathBuf::from("out/run1.events.csv"));
    }
}
