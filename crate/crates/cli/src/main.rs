mod analyze;

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};

use asyflexa::engine::{self, Access, EngineKind, GammaSetting, RunConfig};
use asyflexa::generate::{generate, GeneratorKind, GeneratorSpec};
use asyflexa::oracle::reference_solve_with;
use asyflexa::scheduler::{DelayLaw, SchedulerConfig, SchedulerKind};
use asyflexa::surrogate::SurrogateKind;
use asyflexa::ProblemSpec;

#[derive(Parser)]
#[command(name = "asyflexa", version, about = "Asynchronous block successive convex approximation")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Write a seeded random problem instance as JSON.
    Generate(GenerateArgs),
    /// Solve a problem and write trace, events and summary files.
    Run(Box<RunArgs>),
    /// Reports over written traces.
    Analyze(analyze::AnalyzeArgs),
    /// High-accuracy reference solve for fixtures.
    Oracle(OracleArgs),
}

#[derive(Args)]
struct GenerateArgs {
    /// Generator settings as JSON; flags override its fields.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    kind: Option<GeneratorKind>,
    #[arg(long)]
    n: Option<usize>,
    #[arg(long)]
    blocks: Option<usize>,
    #[arg(long)]
    lambda: Option<f64>,
    #[arg(long)]
    sparse_fraction: Option<f64>,
    #[arg(long)]
    condition: Option<f64>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long, short)]
    out: PathBuf,
}

#[derive(Args)]
struct RunArgs {
    /// Run settings as JSON; flags override its fields.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    problem: Option<PathBuf>,
    #[arg(long)]
    engine: Option<String>,
    /// Number in (0, 1] or "auto".
    #[arg(long)]
    gamma: Option<GammaSetting>,
    #[arg(long)]
    surrogate: Option<SurrogateKind>,
    #[arg(long)]
    beta: Option<f64>,
    #[arg(long)]
    scheduler: Option<SchedulerKind>,
    #[arg(long)]
    delta: Option<usize>,
    /// constant, uniform or geometric:<p>.
    #[arg(long)]
    delay_law: Option<String>,
    #[arg(long)]
    workers: Option<usize>,
    /// partitioned or shared.
    #[arg(long)]
    access: Option<String>,
    #[arg(long)]
    budget: Option<u64>,
    #[arg(long)]
    target_stationarity: Option<f64>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    metric_every: Option<u64>,
    #[arg(long)]
    ncc: bool,
    #[arg(long)]
    alpha: Option<f64>,
    #[arg(long)]
    delta_cap: Option<usize>,
    #[arg(long)]
    delay_estimate: Option<usize>,
    #[arg(long)]
    inner_tol: Option<f64>,
    #[arg(long)]
    inner_max_iters: Option<usize>,
    /// Skip replaying threaded runs through the simulated engine.
    #[arg(long)]
    no_replay: bool,
    /// Output prefix; files are <prefix>.trace.csv, .events.csv, .summary.json.
    #[arg(long, short)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct OracleArgs {
    #[arg(long)]
    problem: PathBuf,
    #[arg(long, default_value_t = 1e-8)]
    tol: f64,
    #[arg(long, default_value_t = 2_000_000)]
    max_sweeps: usize,
    /// JSON output file; stdout when absent.
    #[arg(long, short)]
    out: Option<PathBuf>,
}

fn read_text(path: &Path) -> Result<String> {
    std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))
}

fn cmd_generate(a: GenerateArgs) -> Result<()> {
    let mut g = match &a.config {
        Some(p) => serde_json::from_str(&read_text(p)?).with_context(|| format!("parsing {}", p.display()))?,
        None => {
            let (Some(kind), Some(n), Some(blocks)) = (a.kind, a.n, a.blocks) else {
                bail!("--kind, --n and --blocks are required without --config");
            };
            GeneratorSpec::new(kind, n, blocks, 0)
        }
    };
    if let Some(v) = a.kind {
        g.kind = v;
    }
    if let Some(v) = a.n {
        g.n = v;
    }
    if let Some(v) = a.blocks {
        g.blocks = v;
    }
    if a.lambda.is_some() {
        g.lambda = a.lambda;
    }
    if let Some(v) = a.sparse_fraction {
        g.sparse_fraction = v;
    }
    if a.condition.is_some() {
        g.condition = a.condition;
    }
    if let Some(v) = a.seed {
        g.seed = v;
    }
    let spec = generate(&g)?;
    spec.save(&a.out)?;
    println!("wrote {} (n = {}, N = {}, seed = {})", a.out.display(), spec.dim(), spec.n_blocks(), g.seed);
    Ok(())
}

fn parse_delay_law(s: &str) -> Result<DelayLaw> {
    Ok(match s.split_once(':') {
        None if s == "constant" => DelayLaw::Constant,
        None if s == "uniform" => DelayLaw::Uniform,
        Some(("geometric", p)) => DelayLaw::Geometric { p: p.parse().context("geometric parameter")? },
        _ => bail!("unknown delay law '{s}' (constant, uniform, geometric:<p>)"),
    })
}

fn run_config(a: &RunArgs) -> Result<RunConfig> {
    let mut c = match &a.config {
        Some(p) => RunConfig::from_json_str(&read_text(p)?).with_context(|| format!("parsing {}", p.display()))?,
        None => RunConfig::default(),
    };
    if let Some(p) = &a.problem {
        c.problem_file = Some(p.clone());
    }
    if let Some(e) = &a.engine {
        c.engine = match e.as_str() {
            "sim" => EngineKind::Sim,
            "threaded" => EngineKind::Threaded,
            other => bail!("unknown engine '{other}' (sim, threaded)"),
        };
    }
    if let Some(g) = a.gamma {
        c.gamma = g;
    }
    if let Some(k) = a.surrogate {
        c.surrogate.kind = k;
    }
    if a.beta.is_some() {
        c.surrogate.beta = a.beta;
    }
    if c.engine == EngineKind::Sim && c.scheduler.is_none() {
        c.scheduler = Some(SchedulerConfig::new(SchedulerKind::Cyclic, 0));
    }
    if let Some(s) = c.scheduler.as_mut() {
        if let Some(k) = a.scheduler {
            s.kind = k;
        }
        if let Some(d) = a.delta {
            s.delta = d;
        }
        if let Some(l) = &a.delay_law {
            s.delay_law = parse_delay_law(l)?;
        }
        if let Some(w) = a.workers {
            s.workers = w;
        }
    }
    if let Some(w) = a.workers {
        c.workers.count = w;
    }
    if let Some(acc) = &a.access {
        c.workers.access = match acc.as_str() {
            "partitioned" => Access::Partitioned,
            "shared" => Access::Shared,
            other => bail!("unknown access '{other}' (partitioned, shared)"),
        };
    }
    if let Some(b) = a.budget {
        c.budget = b;
    }
    if a.target_stationarity.is_some() {
        c.target_stationarity = a.target_stationarity;
    }
    if let Some(s) = a.seed {
        c.seed = s;
    }
    if a.metric_every.is_some() {
        c.metric_every = a.metric_every;
    }
    if a.ncc {
        c.ncc = true;
    }
    if let Some(v) = a.alpha {
        c.alpha = v;
    }
    if let Some(v) = a.delta_cap {
        c.delta_cap = v;
    }
    if a.delay_estimate.is_some() {
        c.delay_estimate = a.delay_estimate;
    }
    if a.inner_tol.is_some() {
        c.inner.tol = a.inner_tol;
    }
    if let Some(v) = a.inner_max_iters {
        c.inner.max_iters = v;
    }
    if a.no_replay {
        c.replay = false;
    }
    if let Some(o) = &a.out {
        c.output_prefix = Some(o.clone());
    }
    if let Ok(cap) = std::env::var("ASYFLEXA_THREADS") {
        let cap: usize = cap.parse().with_context(|| format!("ASYFLEXA_THREADS = '{cap}'"))?;
        if cap > 0 && c.engine == EngineKind::Threaded && c.workers.count > cap {
            eprintln!("ASYFLEXA_THREADS caps workers from {} to {cap}", c.workers.count);
            c.workers.count = cap;
        }
    }
    Ok(c)
}

/// 0: done, 2: target not reached within the budget.
fn cmd_run(a: &RunArgs) -> Result<u8> {
    let cfg = run_config(a)?;
    let path = cfg.problem_file.clone().context("no problem file (--problem or problem_file)")?;
    let spec = ProblemSpec::load(&path).with_context(|| format!("loading {}", path.display()))?;
    let out = engine::run(&spec, &cfg)?;
    for w in &out.summary.run.warnings {
        eprintln!("warning: {w}");
    }
    let prefix = cfg.output_prefix.clone().unwrap_or_else(|| PathBuf::from("run"));
    let paths = engine::write_outputs(&prefix, &out)?;
    let s = &out.summary;
    println!(
        "iterations {}  F {:.10e} -> {:.10e}  |M_F| {} -> {}  gamma {:.6e} (bound {:.6e})",
        s.iterations,
        s.f0,
        s.f_final,
        s.mf0.map_or("-".into(), |m| format!("{m:.3e}")),
        s.mf_final.map_or("-".into(), |m| format!("{m:.3e}")),
        s.run.gamma,
        s.run.gamma_bound
    );
    if let Some(t) = &s.threaded {
        println!(
            "workers {}  torn reads {}  max delay {}  replay diff {}",
            t.workers,
            t.torn_reads,
            s.delays.max_delay,
            t.replay_max_diff.map_or("-".into(), |d| format!("{d:.3e}"))
        );
    }
    println!("wrote {}, {}, {}", paths.trace.display(), paths.events.display(), paths.summary.display());
    if let Some(e) = out.aborted {
        return Err(e).context("run stopped early");
    }
    if s.censored {
        eprintln!("target stationarity not reached within {} iterations", s.budget);
        return Ok(2);
    }
    Ok(0)
}

fn cmd_oracle(a: OracleArgs) -> Result<u8> {
    let spec = ProblemSpec::load(&a.problem).with_context(|| format!("loading {}", a.problem.display()))?;
    let r = reference_solve_with(&spec, a.tol, a.max_sweeps)?;
    let text = serde_json::to_string_pretty(&r)?;
    match &a.out {
        Some(p) => {
            std::fs::write(p, text + "\n")?;
            println!(
                "F* {:.16e}  |M_F| {:.3e}  sweeps {}  censored {}  -> {}",
                r.objective,
                r.stationarity,
                r.sweeps,
                r.censored,
                p.display()
            );
        }
        None => println!("{text}"),
    }
    Ok(if r.censored { 2 } else { 0 })
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let res = match cli.command {
        Command::Generate(a) => cmd_generate(a).map(|()| 0),
        Command::Run(a) => cmd_run(&a),
        Command::Analyze(a) => analyze::run(a),
        Command::Oracle(a) => cmd_oracle(a),
    };
    match res {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
    }
}
