//! The `jcc` command-line front end.
//!
//! Every command resolves its settings from three layers: built-in
//! defaults, an optional JSON config file (`--config`) and the flags, with
//! flags taking precedence. Output files are written atomically into the
//! `--out` directory.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{anyhow, bail, Context};
use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::{Deserialize, Serialize};

use crate::augment::initial_aug_state;
use crate::dp::{evaluate_at, MarkovPolicy};
use crate::dual::{
    log_range, pareto_sweep, pareto_to_csv, solve, solve_boole, BooleEval, Method, MixedPolicy,
    PolicyFiles, SolveReport, Status, DEFAULT_MAX_ITERS,
};
use crate::model::io::{read_model, write_model, KernelLayout};
use crate::model::{
    build_fishery, build_mdp_from_spec, build_unicycle, ContinuousSystemSpec, GriddedMdp,
    UnicycleVariant,
};
use crate::numfmt::to_json_vec;
use crate::sim::{empirical_stats, rollout, EmpiricalStats};
use crate::util::write_atomic;

pub const EXIT_OK: u8 = 0;
pub const EXIT_ERROR: u8 = 1;
pub const EXIT_INFEASIBLE: u8 = 2;
pub const EXIT_MAX_ITERS: u8 = 3;

const DEFAULT_ALPHA: f64 = 0.9;
const DEFAULT_DELTA: f64 = 1e-6;
const DEFAULT_LAMBDAS: &str = "logrange:100:1e6:100";
const DEFAULT_ROLLOUTS: usize = 150;
const DEFAULT_OUT: &str = "out";

#[derive(Debug, Parser)]
#[command(
    name = "jcc",
    version,
    about = "Joint chance-constrained optimal control on gridded MDPs"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Grid a continuous system and write the model file.
    BuildModel(CommonArgs),
    /// Solve the chance-constrained problem at level `alpha`.
    Solve(CommonArgs),
    /// Sweep the multiplier and write the Pareto front.
    Pareto(CommonArgs),
    /// Roll out a solved policy and report empirical statistics.
    Simulate(CommonArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Builtin {
    UnicycleA,
    UnicycleB,
    Fishery,
}

impl Builtin {
    pub fn spec(self) -> ContinuousSystemSpec {
        match self {
            Builtin::UnicycleA => build_unicycle(UnicycleVariant::A),
            Builtin::UnicycleB => build_unicycle(UnicycleVariant::B),
            Builtin::Fishery => build_fishery(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum MethodArg {
    Exact,
    Boole,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum EvalArg {
    Exact,
    Bound,
}

impl From<EvalArg> for BooleEval {
    fn from(e: EvalArg) -> Self {
        match e {
            EvalArg::Exact => BooleEval::Exact,
            EvalArg::Bound => BooleEval::Bound,
        }
    }
}

#[derive(Debug, Clone, Args)]
pub struct CommonArgs {
    /// Built-in system to grid.
    #[arg(long, value_enum, conflicts_with_all = ["spec", "model"])]
    pub builtin: Option<Builtin>,
    /// JSON system spec to grid.
    #[arg(long, conflicts_with = "model")]
    pub spec: Option<PathBuf>,
    /// JSON model file.
    #[arg(long)]
    pub model: Option<PathBuf>,
    /// JSON config file; flags override its fields.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Initial state as comma-separated coordinates, or `cell:<index>`.
    #[arg(long)]
    pub x0: Option<String>,
    /// Required probability of staying safe over the horizon
    #[arg(long)]
    pub alpha: Option<f64>,
    /// Target on the suboptimality certificate.
    #[arg(long)]
    pub delta: Option<f64>,
    /// Bisection iteration cap
    #[arg(long)]
    pub max_iters: Option<usize>,
    #[arg(long, value_enum)]
    pub method: Option<MethodArg>,
    /// Safety evaluation of the Boole method.
    #[arg(long, value_enum)]
    pub boole_eval: Option<EvalArg>,
    /// Comma-separated multipliers or `logrange:lo:hi:n`.
    #[arg(long)]
    pub lambdas: Option<String>,
    /// Number of Monte Carlo rollouts
    #[arg(long)]
    pub rollouts: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Solve report whose policies `simulate` rolls out.
    #[arg(long, conflicts_with = "policy")]
    pub report: Option<PathBuf>,
    /// Deterministic policy file for `simulate`.
    #[arg(long)]
    pub policy: Option<PathBuf>,
    /// Write the kernel densely in `build-model`.
    #[arg(long)]
    pub dense: bool,
    /// Output directory
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Worker threads; defaults to all cores.
    #[arg(long, env = "JCC_THREADS")]
    pub threads: Option<usize>,
}

/// Settings read from a `--config` file. Every field is optional.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub builtin: Option<Builtin>,
    pub spec: Option<PathBuf>,
    pub model: Option<PathBuf>,
    pub x0: Option<String>,
    pub alpha: Option<f64>,
    pub delta: Option<f64>,
    pub max_iters: Option<usize>,
    pub method: Option<MethodArg>,
    pub boole_eval: Option<EvalArg>,
    pub lambdas: Option<String>,
    pub rollouts: Option<usize>,
    pub seed: Option<u64>,
    pub out: Option<PathBuf>,
}

impl ExperimentConfig {
    pub fn read(path: &Path) -> anyhow::Result<Self> {
        let text = std::fs::read_to_string(path)
            .with_context(|| format!("reading config {}", path.display()))?;
        let mut cfg: ExperimentConfig = serde_json::from_str(&text)
            .with_context(|| format!("parsing config {}", path.display()))?;
        // relative paths in a config file are relative to the file
        let base = path.parent().unwrap_or(Path::new("."));
        for p in [&mut cfg.spec, &mut cfg.model, &mut cfg.out]
            .into_iter()
            .flatten()
        {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        }
        Ok(cfg)
    }
}

#[derive(Debug, Clone, PartialEq)]
enum Source {
    Builtin(Builtin),
    Spec(PathBuf),
    Model(PathBuf),
}

/// Fully resolved settings of one command.
#[derive(Debug, Clone)]
struct Settings {
    source: Source,
    x0: Option<String>,
    alpha: f64,
    delta: f64,
    max_iters: usize,
    method: Option<MethodArg>,
    boole_eval: Option<EvalArg>,
    lambdas: String,
    rollouts: usize,
    seed: u64,
    out: PathBuf,
}

fn resolve(args: &CommonArgs) -> anyhow::Result<Settings> {
    let cfg = match &args.config {
        Some(p) => ExperimentConfig::read(p)?,
        None => ExperimentConfig::default(),
    };
    let flag_source = match (&args.builtin, &args.spec, &args.model) {
        (Some(b), None, None) => Some(Source::Builtin(*b)),
        (None, Some(s), None) => Some(Source::Spec(s.clone())),
        (None, None, Some(m)) => Some(Source::Model(m.clone())),
        (None, None, None) => None,
        _ => bail!("give exactly one of --builtin, --spec, --model"),
    };
    let source = match flag_source {
        Some(s) => s,
        None => match (cfg.builtin, cfg.spec, cfg.model) {
            (Some(b), None, None) => Source::Builtin(b),
            (None, Some(s), None) => Source::Spec(s),
            (None, None, Some(m)) => Source::Model(m),
            (None, None, None) => bail!("no model source: give --builtin, --spec or --model"),
            _ => bail!("config file names more than one model source"),
        },
    };
    let alpha = args.alpha.or(cfg.alpha).unwrap_or(DEFAULT_ALPHA);
    if !(0.0..=1.0).contains(&alpha) {
        bail!("alpha must lie in [0, 1], got {alpha}");
    }
    let delta = args.delta.or(cfg.delta).unwrap_or(DEFAULT_DELTA);
    if !(delta > 0.0) {
        bail!("delta must be positive, got {delta}");
    }
    let max_iters = args
        .max_iters
        .or(cfg.max_iters)
        .unwrap_or(DEFAULT_MAX_ITERS);
    if max_iters == 0 {
        bail!("max-iters must be at least 1");
    }
    Ok(Settings {
        source,
        x0: args.x0.clone().or(cfg.x0),
        alpha,
        delta,
        max_iters,
        method: args.method.or(cfg.method),
        boole_eval: args.boole_eval.or(cfg.boole_eval),
        lambdas: args
            .lambdas
            .clone()
            .or(cfg.lambdas)
            .unwrap_or_else(|| DEFAULT_LAMBDAS.to_string()),
        rollouts: args.rollouts.or(cfg.rollouts).unwrap_or(DEFAULT_ROLLOUTS),
        seed: args.seed.or(cfg.seed).unwrap_or(0),
        out: args
            .out
            .clone()
            .or(cfg.out)
            .unwrap_or_else(|| PathBuf::from(DEFAULT_OUT)),
    })
}

/// A loaded model together with the spec it was gridded from, if any.
struct Loaded {
    mdp: GriddedMdp,
    spec: Option<ContinuousSystemSpec>,
}

fn read_spec(path: &Path) -> anyhow::Result<ContinuousSystemSpec> {
    let text = std::fs::read_to_string(path)
        .with_context(|| format!("reading spec {}", path.display()))?;
    serde_json::from_str(&text).with_context(|| format!("parsing spec {}", path.display()))
}

fn load(source: &Source) -> anyhow::Result<Loaded> {
    let spec = match source {
        Source::Builtin(b) => b.spec(),
        Source::Spec(p) => read_spec(p)?,
        Source::Model(p) => {
            let mdp = read_model(p).with_context(|| format!("reading model {}", p.display()))?;
            return Ok(Loaded { mdp, spec: None });
        }
    };
    let mdp = build_mdp_from_spec(&spec)?;
    Ok(Loaded {
        mdp,
        spec: Some(spec),
    })
}

/// Parses `--x0`. Defaults to the spec's initial state, else cell 0.
fn initial_cell(loaded: &Loaded, x0: Option<&str>) -> anyhow::Result<usize> {
    let mdp = &loaded.mdp;
    let point = match x0 {
        Some(s) => {
            if let Some(idx) = s.strip_prefix("cell:") {
                let cell: usize = idx.trim().parse().context("parsing --x0 cell index")?;
                mdp.check_state(cell)?;
                return Ok(cell);
            }
            s.split(',')
                .map(|t| t.trim().parse::<f64>())
                .collect::<Result<Vec<_>, _>>()
                .context("parsing --x0 coordinates")?
        }
        None => match loaded.spec.as_ref().and_then(|s| s.initial_state.clone()) {
            Some(p) => p,
            None => return Ok(0),
        },
    };
    let grid = mdp
        .grid()
        .ok_or_else(|| anyhow!("model has no grid; give the initial state as cell:<index>"))?;
    if point.len() != grid.dimension() {
        bail!(
            "--x0 has {} coordinates, model is {}-dimensional",
            point.len(),
            grid.dimension()
        );
    }
    Ok(grid.cell_of(&point))
}

fn parse_lambdas(s: &str) -> anyhow::Result<Vec<f64>> {
    if let Some(rest) = s.strip_prefix("logrange:") {
        let parts: Vec<&str> = rest.split(':').collect();
        if parts.len() != 3 {
            bail!("expected logrange:lo:hi:n, got {s}");
        }
        let lo: f64 = parts[0].parse().context("logrange lower end")?;
        let hi: f64 = parts[1].parse().context("logrange upper end")?;
        let n: usize = parts[2].parse().context("logrange count")?;
        return Ok(log_range(lo, hi, n)?);
    }
    let lambdas = s
        .split(',')
        .map(|t| t.trim().parse::<f64>())
        .collect::<Result<Vec<_>, _>>()
        .context("parsing --lambdas")?;
    if lambdas.is_empty() {
        bail!("--lambdas is empty");
    }
    Ok(lambdas)
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> anyhow::Result<()> {
    write_atomic(path, &to_json_vec(value)?).with_context(|| format!("writing {}", path.display()))
}

fn create_out(out: &Path) -> anyhow::Result<()> {
    std::fs::create_dir_all(out).with_context(|| format!("creating {}", out.display()))
}

fn exit_code(status: Status) -> u8 {
    match status {
        Status::Solved | Status::Trivial => EXIT_OK,
        Status::Infeasible => EXIT_INFEASIBLE,
        Status::MaxIters => EXIT_MAX_ITERS,
    }
}

fn run_solve(s: &Settings, loaded: &Loaded, x0: usize) -> anyhow::Result<SolveReport> {
    let report = match s.method.unwrap_or(MethodArg::Exact) {
        MethodArg::Exact => solve(&loaded.mdp, x0, s.alpha, s.delta, s.max_iters)?,
        MethodArg::Boole => solve_boole(
            &loaded.mdp,
            x0,
            s.alpha,
            s.delta,
            s.max_iters,
            s.boole_eval.unwrap_or(EvalArg::Exact).into(),
        )?,
    };
    Ok(report)
}

fn cmd_build_model(args: &CommonArgs) -> anyhow::Result<u8> {
    let s = resolve(args)?;
    if let Source::Model(_) = s.source {
        bail!("build-model needs --builtin or --spec");
    }
    let loaded = load(&s.source)?;
    create_out(&s.out)?;
    let layout = if args.dense {
        KernelLayout::Dense
    } else {
        KernelLayout::Sparse
    };
    let path = s.out.join("model.json");
    write_model(&path, &loaded.mdp, layout)
        .with_context(|| format!("writing {}", path.display()))?;
    println!(
        "{} states, {} actions, horizon {}",
        loaded.mdp.num_states(),
        loaded.mdp.num_actions(),
        loaded.mdp.horizon()
    );
    Ok(EXIT_OK)
}

fn cmd_solve(args: &CommonArgs) -> anyhow::Result<u8> {
    let s = resolve(args)?;
    let loaded = load(&s.source)?;
    let x0 = initial_cell(&loaded, s.x0.as_deref())?;
    let mut report = run_solve(&s, &loaded, x0)?;
    create_out(&s.out)?;
    if let Some(policy) = &report.policy {
        let files = PolicyFiles {
            pi_over: "pi_over.json".to_string(),
            pi_under: "pi_under.json".to_string(),
        };
        policy.pi_over.write(&s.out.join(&files.pi_over))?;
        policy.pi_under.write(&s.out.join(&files.pi_under))?;
        report.policy_files = Some(files);
    }
    write_json(&s.out.join("report.json"), &report)?;
    println!("{}", report.summary_line());
    Ok(exit_code(report.status))
}

fn cmd_pareto(args: &CommonArgs) -> anyhow::Result<u8> {
    let s = resolve(args)?;
    let lambdas = parse_lambdas(&s.lambdas)?;
    let loaded = load(&s.source)?;
    let x0 = initial_cell(&loaded, s.x0.as_deref())?;
    let methods: Vec<Method> = match (s.method, s.boole_eval) {
        (None, _) => Method::ALL.to_vec(),
        (Some(MethodArg::Exact), _) => vec![Method::Exact],
        (Some(MethodArg::Boole), Some(e)) => vec![Method::boole(e.into())],
        (Some(MethodArg::Boole), None) => vec![
            Method::boole(BooleEval::Exact),
            Method::boole(BooleEval::Bound),
        ],
    };
    let mut points = Vec::new();
    for m in methods {
        points.extend(pareto_sweep(&loaded.mdp, x0, &lambdas, m)?);
    }
    create_out(&s.out)?;
    let path = s.out.join("pareto.csv");
    write_atomic(&path, pareto_to_csv(&points).as_bytes())
        .with_context(|| format!("writing {}", path.display()))?;
    println!("{} points", points.len());
    Ok(EXIT_OK)
}

/// Partial view of a `report.json` written by `solve`.
#[derive(Debug, Deserialize)]
struct ReportFile {
    p_over: f64,
    policy_files: Option<PolicyFiles>,
}

fn read_report_policy(path: &Path) -> anyhow::Result<MixedPolicy> {
    let text = std::fs::read_to_string(path)
        .with_context(|| format!("reading report {}", path.display()))?;
    let report: ReportFile = serde_json::from_str(&text)
        .with_context(|| format!("parsing report {}", path.display()))?;
    let files = report
        .policy_files
        .ok_or_else(|| anyhow!("report {} lists no policy files", path.display()))?;
    let dir = path.parent().unwrap_or(Path::new("."));
    Ok(MixedPolicy {
        pi_over: MarkovPolicy::read(&dir.join(&files.pi_over))?,
        pi_under: MarkovPolicy::read(&dir.join(&files.pi_under))?,
        p_over: report.p_over,
    })
}

#[derive(Debug, Serialize)]
struct SimulateStats {
    #[serde(flatten)]
    empirical: EmpiricalStats,
    seed: u64,
    initial_state: usize,
    p_over: f64,
    /// Mixed cost and safety computed by dynamic programming.
    expected_cost: f64,
    expected_safety: f64,
}

fn cmd_simulate(args: &CommonArgs) -> anyhow::Result<u8> {
    let s = resolve(args)?;
    if s.rollouts == 0 {
        bail!("--rollouts must be at least 1");
    }
    let loaded = load(&s.source)?;
    let mdp = &loaded.mdp;
    let x0 = initial_cell(&loaded, s.x0.as_deref())?;
    let (policy, code) = match (&args.report, &args.policy) {
        (Some(r), _) => (read_report_policy(r)?, EXIT_OK),
        (None, Some(p)) => (MixedPolicy::deterministic(MarkovPolicy::read(p)?), EXIT_OK),
        (None, None) => {
            let report = run_solve(&s, &loaded, x0)?;
            let code = exit_code(report.status);
            let policy = report
                .policy
                .ok_or_else(|| anyhow!("solve returned no policy"))?;
            (policy, code)
        }
    };
    policy.pi_over.check_compatible(mdp)?;
    policy.pi_under.check_compatible(mdp)?;
    let batch = rollout(mdp, &policy, x0, s.rollouts, s.seed)?;
    let empirical = empirical_stats(&batch)?;
    let s0 = initial_aug_state(mdp, x0)?;
    let (c_over, v_over) = evaluate_at(mdp, &policy.pi_over, s0)?;
    let (c_under, v_under) = evaluate_at(mdp, &policy.pi_under, s0)?;
    let p = policy.p_over;
    let stats = SimulateStats {
        empirical,
        seed: s.seed,
        initial_state: x0,
        p_over: p,
        expected_cost: p * c_over + (1.0 - p) * c_under,
        expected_safety: p * v_over + (1.0 - p) * v_under,
    };
    create_out(&s.out)?;
    batch.write_csv(&s.out.join("rollouts.csv"))?;
    write_json(&s.out.join("stats.json"), &stats)?;
    println!(
        "{} rollouts: safety {} ± {}, mean cost {}",
        empirical.num_rollouts,
        crate::numfmt::fmt_f64(empirical.safety),
        crate::numfmt::fmt_f64(empirical.std_error),
        crate::numfmt::fmt_f64(empirical.mean_cost)
    );
    Ok(code)
}

fn init_threads(threads: Option<usize>) -> anyhow::Result<()> {
    if let Some(n) = threads {
        if n == 0 {
            bail!("--threads must be at least 1");
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .context("configuring the thread pool")?;
    }
    Ok(())
}

/// Runs a parsed command and returns its exit code; errors map to 1.
pub fn run(cli: Cli) -> ExitCode {
    let args = match &cli.command {
        Command::BuildModel(a) | Command::Solve(a) | Command::Pareto(a) | Command::Simulate(a) => a,
    };
    let result = init_threads(args.threads).and_then(|()| match &cli.command {
        Command::BuildModel(a) => cmd_build_model(a),
        Command::Solve(a) => cmd_solve(a),
        Command::Pareto(a) => cmd_pareto(a),
        Command::Simulate(a) => cmd_simulate(a),
    });
    match result {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(EXIT_ERROR)
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn lambda_lists() {
        assert_eq!(parse_lambdas("0, 1.5,2").unwrap(), vec![0.0, 1.5, 2.0]);
        let r = parse_lambdas("logrange:100:1e6:5").unwrap();
        assert_eq!(r.len(), 5);
        assert!((r[0] - 100.0).abs() < 1e-9 && (r[4] - 1e6).abs() < 1e-6);
        assert!(parse_lambdas("logrange:1:2").is_err());
        assert!(parse_lambdas("a,b").is_err());
    }

    #[test]
    fn flags_override_config() {
        let dir = tempfile::tempdir().unwrap();
        let cfg = dir.path().join("cfg.json");
        std::fs::write(&cfg, r#"{"builtin": "fishery", "alpha": 0.5, "seed": 7}"#).unwrap();
        let cli = Cli::parse_from([
            "jcc",
            "solve",
            "--config",
            cfg.to_str().unwrap(),
            "--alpha",
            "0.7",
        ]);
        let Command::Solve(args) = cli.command else {
            panic!("wrong command")
        };
        let s = resolve(&args).unwrap();
        assert_eq!(s.source, Source::Builtin(Builtin::Fishery));
        assert_eq!(s.alpha, 0.7);
        assert_eq!(s.seed, 7);
        assert_eq!(s.delta, DEFAULT_DELTA);
    }

    #[test]
    fn rejects_bad_settings() {
        for argv in [
            vec!["jcc", "solve", "--builtin", "fishery", "--alpha", "1.01"],
            vec!["jcc", "solve", "--builtin", "fishery", "--delta", "0"],
            vec!["jcc", "solve"],
        ] {
            let Command::Solve(args) = Cli::parse_from(argv).command else {
                panic!("wrong command")
            };
            assert!(resolve(&args).is_err());
        }
    }
}
