//! Command line front end for the spincool simulator.
//!
//! Four subcommands: `run` executes one cooling algorithm and emits a JSON
//! report, `sweep` runs a parameter grid and emits CSV, `verify` checks the
//! built-in reference values, and `compare` diffs the bias engine against
//! the oracle (or ideal cooling against multiscan averaging).
//!
//! Exit codes: 0 success, 1 runtime or check failure, 2 configuration
//! error, 3 backend-capability error.

use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::{Deserialize, Serialize};
use serde_json::json;

use spincool_core::analysis::{ideal_mpac_factor, multiscan_snr};
use spincool_core::engine::{
    execute, trajectory_csv, EngineConfig, Extended, GateModel, Mode, ResetModel, RunReport,
    TimingParams, TrajectoryMode, Units,
};
use spincool_core::golden::run_golden_suite;
use spincool_core::oracle::{
    execute_oracle, run_ppa, run_ppa_converged, OracleOptions, PpaInit, PpaRun,
};
use spincool_core::programs::{Algorithm, MTable, NewBonacciSpec, ProgramMeta};
use spincool_core::spin::SpinSystem;
use spincool_core::sweep::{run_sweep, sweep_csv, SweepSpec};
use spincool_core::Error as CoreError;

const DEFAULT_EPS0: f64 = 1e-5;
/// Convergence tolerance and iteration cap for `run --algo ppa` without an
/// explicit --iterations.
const PPA_TOL: f64 = 1e-9;
const PPA_MAX_ITERATIONS: u32 = 100_000;

#[derive(Parser)]
#[command(
    name = "spincool",
    version,
    about = "Heat-bath algorithmic cooling: run, sweep, verify, compare",
    after_help = "Biases are printed in units of eps0 unless --absolute. \
                  SPINCOOL_THREADS bounds the sweep worker pool."
)]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Execute one cooling algorithm and print a JSON report.
    Run(RunArgs),
    /// Run an n x R grid and print the sweep CSV.
    Sweep(SweepArgs),
    /// Check the built-in reference trajectories and factors.
    Verify,
    /// Compare the bias engine against the oracle, or cooling against
    /// multiscan averaging.
    Compare(CompareArgs),
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum AlgoKind {
    Mpac,
    MpacAll,
    Fib,
    DeltaFib,
    Trib,
    NewFib,
    NewTrib,
    Ppa,
}

impl AlgoKind {
    fn name(self) -> &'static str {
        match self {
            AlgoKind::Mpac => "mpac",
            AlgoKind::MpacAll => "mpac-all",
            AlgoKind::Fib => "fib",
            AlgoKind::DeltaFib => "delta-fib",
            AlgoKind::Trib => "trib",
            AlgoKind::NewFib => "new-fib",
            AlgoKind::NewTrib => "new-trib",
            AlgoKind::Ppa => "ppa",
        }
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum ModeArg {
    Linear,
    Exact,
}

impl From<ModeArg> for Mode {
    fn from(v: ModeArg) -> Mode {
        match v {
            ModeArg::Linear => Mode::Linear,
            ModeArg::Exact => Mode::Exact,
        }
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum ResetModelArg {
    /// Resets land at (1 - e^-d) eps0 regardless of the prior bias.
    Paper,
    /// Resets relax from the spin's current bias.
    General,
}

impl From<ResetModelArg> for ResetModel {
    fn from(v: ResetModelArg) -> ResetModel {
        match v {
            ResetModelArg::Paper => ResetModel::PaperSimplified,
            ResetModelArg::General => ResetModel::General,
        }
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum GateModelArg {
    Physical,
    Ideal,
}

impl From<GateModelArg> for GateModel {
    fn from(v: GateModelArg) -> GateModel {
        match v {
            GateModelArg::Physical => GateModel::Physical,
            GateModelArg::Ideal => GateModel::Ideal,
        }
    }
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum BackendArg {
    /// Marginal-bias engine (one number per spin).
    Bias,
    /// Full diagonal-distribution oracle (2^n numbers).
    Oracle,
}

#[derive(Clone, Copy, ValueEnum)]
enum TrajectoryArg {
    Off,
    Waits,
    Full,
}

impl From<TrajectoryArg> for TrajectoryMode {
    fn from(v: TrajectoryArg) -> TrajectoryMode {
        match v {
            TrajectoryArg::Off => TrajectoryMode::Off,
            TrajectoryArg::Waits => TrajectoryMode::Waits,
            TrajectoryArg::Full => TrajectoryMode::Full,
        }
    }
}

#[derive(Args)]
struct RunArgs {
    /// JSON file supplying any of the other flags; explicit flags win.
    #[arg(long, value_name = "FILE")]
    config: Option<PathBuf>,
    /// Algorithm to run [default: mpac-all]
    #[arg(long, value_enum)]
    algo: Option<AlgoKind>,
    /// Spin count [default: 7]
    #[arg(long)]
    n: Option<u32>,
    /// Compressions per recursion level, or the uniform m-table value
    /// [default: 2]
    #[arg(long)]
    m: Option<u32>,
    /// Per-level m values from bit 3 upward, comma separated (e.g. "3,2").
    #[arg(long, value_name = "LIST")]
    m_table: Option<String>,
    /// Goal fraction for delta-fib, or the greedy margin for new-fib and
    /// new-trib [default: 0.5 for delta-fib]
    #[arg(long)]
    delta: Option<f64>,
    /// Reset spins used by the ladder algorithms (1 or 2) [default: 2]
    #[arg(long)]
    reset_spins: Option<u32>,
    /// Relaxation ratio T1(comp)/T1(reset); "inf" for the ideal limit
    /// [default: inf]
    #[arg(long = "R", value_name = "R")]
    r: Option<Extended>,
    /// WAIT duration in units of T1(reset); "inf" for perfect resets
    /// [default: inf]
    #[arg(long)]
    d: Option<Extended>,
    /// Equilibrium bias of every spin [default: 1e-5]
    #[arg(long)]
    eps0: Option<f64>,
    /// Arithmetic mode [default: exact]
    #[arg(long, value_enum)]
    mode: Option<ModeArg>,
    /// WAIT semantics [default: paper]
    #[arg(long, value_enum)]
    reset_model: Option<ResetModelArg>,
    /// Compression accounting [default: physical in exact mode, ideal in
    /// linear mode]
    #[arg(long, value_enum)]
    gate_model: Option<GateModelArg>,
    /// State representation [default: bias]
    #[arg(long, value_enum)]
    backend: Option<BackendArg>,
    /// Trajectory sampling [default: off in exact mode, waits in linear]
    #[arg(long, value_enum)]
    trajectory: Option<TrajectoryArg>,
    /// Fixed PPA iteration count; omitted runs to convergence.
    #[arg(long)]
    iterations: Option<u32>,
    /// Emit biases in absolute units instead of units of eps0.
    #[arg(long)]
    absolute: bool,
    /// Write the JSON report here instead of stdout.
    #[arg(long, value_name = "FILE")]
    out: Option<PathBuf>,
    /// Also write the recorded trajectory as CSV.
    #[arg(long, value_name = "FILE")]
    trajectory_csv: Option<PathBuf>,
}

#[derive(Args)]
struct SweepArgs {
    /// JSON file supplying any of the other flags; explicit flags win.
    #[arg(long, value_name = "FILE")]
    config: Option<PathBuf>,
    /// Algorithm to sweep [default: mpac-all]
    #[arg(long, value_enum)]
    algo: Option<AlgoKind>,
    #[arg(long)]
    m: Option<u32>,
    #[arg(long, value_name = "LIST")]
    m_table: Option<String>,
    #[arg(long)]
    delta: Option<f64>,
    #[arg(long)]
    reset_spins: Option<u32>,
    /// Spin counts, odd and ascending [default: 3,5,...,21]
    #[arg(long, value_delimiter = ',')]
    ns: Option<Vec<u32>>,
    /// Relaxation ratios; "inf" allowed [default: 1e2..1e7 decades + inf]
    #[arg(long, value_delimiter = ',')]
    rs: Option<Vec<Extended>>,
    /// WAIT duration [default: 5]
    #[arg(long)]
    d: Option<Extended>,
    #[arg(long)]
    eps0: Option<f64>,
    #[arg(long, value_enum)]
    mode: Option<ModeArg>,
    #[arg(long, value_enum)]
    reset_model: Option<ResetModelArg>,
    /// Write the CSV here instead of stdout. Nothing is written if any
    /// grid cell fails.
    #[arg(long, value_name = "FILE")]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct CompareArgs {
    /// JSON file supplying any of the other flags; explicit flags win.
    #[arg(long, value_name = "FILE")]
    config: Option<PathBuf>,
    /// Algorithm to compare [default: mpac-all]
    #[arg(long, value_enum)]
    algo: Option<AlgoKind>,
    /// Spin count [default: 3; 7 with --multiscan]
    #[arg(long)]
    n: Option<u32>,
    #[arg(long)]
    m: Option<u32>,
    #[arg(long, value_name = "LIST")]
    m_table: Option<String>,
    #[arg(long)]
    delta: Option<f64>,
    #[arg(long)]
    reset_spins: Option<u32>,
    /// Relaxation ratio [default: 1000]
    #[arg(long = "R", value_name = "R")]
    r: Option<Extended>,
    /// WAIT duration [default: 5]
    #[arg(long)]
    d: Option<Extended>,
    #[arg(long)]
    eps0: Option<f64>,
    /// Compare ideal cooling against multiscan signal averaging instead
    /// of comparing backends.
    #[arg(long)]
    multiscan: bool,
    /// Scan count for the multiscan comparison [default: the algorithm's
    /// reset count]
    #[arg(long)]
    resets: Option<u64>,
    /// Ratio of multiscan repetition time to one reset duration
    /// [default: 1]
    #[arg(long)]
    reset_multiplier: Option<f64>,
    /// Emit biases in absolute units instead of units of eps0.
    #[arg(long)]
    absolute: bool,
    /// Write the JSON report here instead of stdout.
    #[arg(long, value_name = "FILE")]
    out: Option<PathBuf>,
}

/// Flags accepted from a --config JSON document. One permissive schema is
/// shared by all subcommands; keys a command does not use are ignored by
/// it. Keys match the long flag names (hyphenated and snake_case both
/// accepted).
#[derive(Default, Deserialize)]
#[serde(default, deny_unknown_fields)]
struct FileConfig {
    algo: Option<String>,
    n: Option<u32>,
    m: Option<u32>,
    #[serde(alias = "m-table")]
    m_table: Option<String>,
    delta: Option<f64>,
    #[serde(alias = "reset-spins")]
    reset_spins: Option<u32>,
    #[serde(rename = "R", alias = "r")]
    r: Option<Extended>,
    d: Option<Extended>,
    eps0: Option<f64>,
    mode: Option<String>,
    #[serde(alias = "reset-model")]
    reset_model: Option<String>,
    #[serde(alias = "gate-model")]
    gate_model: Option<String>,
    backend: Option<String>,
    trajectory: Option<String>,
    iterations: Option<u32>,
    absolute: Option<bool>,
    out: Option<PathBuf>,
    #[serde(alias = "trajectory-csv")]
    trajectory_csv: Option<PathBuf>,
    ns: Option<Vec<u32>>,
    rs: Option<Vec<Extended>>,
    multiscan: Option<bool>,
    resets: Option<u64>,
    #[serde(alias = "reset-multiplier")]
    reset_multiplier: Option<f64>,
}

enum CliError {
    /// Malformed request: bad flag combination, unparseable config,
    /// invalid algorithm parameters. Exit 2.
    Config(String),
    /// The request is well formed but the chosen backend cannot do it.
    /// Exit 3.
    Capability(String),
    /// IO failures and failed verification. Exit 1.
    Runtime(String),
}

impl CliError {
    fn exit_code(&self) -> u8 {
        match self {
            CliError::Runtime(_) => 1,
            CliError::Config(_) => 2,
            CliError::Capability(_) => 3,
        }
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CliError::Config(m) | CliError::Capability(m) | CliError::Runtime(m) => {
                f.write_str(m)
            }
        }
    }
}

impl From<CoreError> for CliError {
    fn from(e: CoreError) -> Self {
        if e.is_capability() {
            CliError::Capability(e.to_string())
        } else {
            CliError::Config(e.to_string())
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.cmd {
        Cmd::Run(args) => cmd_run(args),
        Cmd::Sweep(args) => cmd_sweep(args),
        Cmd::Verify => cmd_verify(),
        Cmd::Compare(args) => cmd_compare(args),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}

fn load_config(path: Option<&Path>) -> Result<FileConfig, CliError> {
    let Some(path) = path else {
        return Ok(FileConfig::default());
    };
    let text = fs::read_to_string(path)
        .map_err(|e| CliError::Config(format!("cannot read config {}: {e}", path.display())))?;
    serde_json::from_str(&text)
        .map_err(|e| CliError::Config(format!("config {}: {e}", path.display())))
}

/// Command line wins over the config file; both lose to the caller's
/// default.
fn pick<T: ValueEnum>(
    cli: Option<T>,
    file: Option<&str>,
    field: &str,
) -> Result<Option<T>, CliError> {
    if cli.is_some() {
        return Ok(cli);
    }
    match file {
        Some(s) => T::from_str(s, true)
            .map(Some)
            .map_err(|_| CliError::Config(format!("config field {field}: unknown value {s:?}"))),
        None => Ok(None),
    }
}

fn parse_m_table(s: &str) -> Result<MTable, CliError> {
    let levels: Vec<u32> = s
        .split(',')
        .map(|part| {
            part.trim()
                .parse::<u32>()
                .map_err(|_| CliError::Config(format!("--m-table: bad entry {part:?} in {s:?}")))
        })
        .collect::<Result<_, _>>()?;
    if levels.is_empty() {
        return Err(CliError::Config("--m-table: empty list".into()));
    }
    Ok(MTable::from_levels(&levels))
}

/// Translate the flag set into a core algorithm; PPA is not a program and
/// maps to None.
fn build_algorithm(
    kind: AlgoKind,
    m: Option<u32>,
    m_table: Option<&str>,
    delta: Option<f64>,
    reset_spins: u32,
) -> Result<Option<Algorithm>, CliError> {
    let table = |m: Option<u32>, s: Option<&str>| -> Result<MTable, CliError> {
        match (s, m) {
            (Some(s), _) => parse_m_table(s),
            (None, Some(m)) => Ok(MTable::uniform(m)),
            (None, None) => Ok(MTable::uniform(2)),
        }
    };
    let new_bonacci = |order: u32| -> Result<Algorithm, CliError> {
        let spec = match delta {
            Some(delta) => NewBonacciSpec::Delta(delta),
            None => NewBonacciSpec::Fixed(table(m, m_table)?),
        };
        Ok(Algorithm::NewBonacci { order, spec, reset_spins })
    };
    Ok(Some(match kind {
        AlgoKind::Mpac => Algorithm::Mpac { m: m.unwrap_or(2) },
        AlgoKind::MpacAll => Algorithm::MpacAll { m: m.unwrap_or(2) },
        AlgoKind::Fib => Algorithm::Fibonacci { m_table: table(m, m_table)?, reset_spins },
        AlgoKind::DeltaFib => {
            Algorithm::DeltaFibonacci { delta: delta.unwrap_or(0.5), reset_spins }
        }
        AlgoKind::Trib => Algorithm::Tribonacci { m_table: table(m, m_table)?, reset_spins },
        AlgoKind::NewFib => new_bonacci(2)?,
        AlgoKind::NewTrib => new_bonacci(3)?,
        AlgoKind::Ppa => return Ok(None),
    }))
}

fn cmd_run(args: RunArgs) -> Result<(), CliError> {
    let f = load_config(args.config.as_deref())?;
    let algo = pick(args.algo, f.algo.as_deref(), "algo")?.unwrap_or(AlgoKind::MpacAll);
    let n = args.n.or(f.n).unwrap_or(7);
    let r = args.r.or(f.r).unwrap_or(Extended::Infinite);
    let d = args.d.or(f.d).unwrap_or(Extended::Infinite);
    let eps0 = args.eps0.or(f.eps0).unwrap_or(DEFAULT_EPS0);
    let mode = pick(args.mode, f.mode.as_deref(), "mode")?.unwrap_or(ModeArg::Exact);
    let reset_model = pick(args.reset_model, f.reset_model.as_deref(), "reset-model")?;
    let gate_model = pick(args.gate_model, f.gate_model.as_deref(), "gate-model")?;
    let backend = pick(args.backend, f.backend.as_deref(), "backend")?.unwrap_or(BackendArg::Bias);
    let trajectory = pick(args.trajectory, f.trajectory.as_deref(), "trajectory")?;
    let reset_spins = args.reset_spins.or(f.reset_spins).unwrap_or(2);
    let iterations = args.iterations.or(f.iterations);
    let absolute = args.absolute || f.absolute.unwrap_or(false);
    let out = args.out.or(f.out);
    let tcsv = args.trajectory_csv.or(f.trajectory_csv);

    let t = TimingParams::new(r, d)?;
    let mut cfg = match mode {
        ModeArg::Exact => EngineConfig::exact(),
        ModeArg::Linear => EngineConfig::linear(),
    };
    if let Some(rm) = reset_model {
        cfg.reset_model = rm.into();
    }
    if let Some(gm) = gate_model {
        cfg.gate_model = gm.into();
    }
    if let Some(tr) = trajectory {
        cfg.trajectory = tr.into();
    }

    let mut report = if algo == AlgoKind::Ppa {
        if backend != BackendArg::Oracle {
            return Err(CoreError::UnsupportedAlgorithm {
                algo: "ppa".into(),
                reason: "partner pairing sorts the full distribution; use --backend oracle",
            }
            .into());
        }
        let sys = SpinSystem::new(n, 1, eps0)?;
        let run = match iterations {
            Some(iters) => run_ppa(&sys, &t, iters, PpaInit::Equilibrium)?,
            None => run_ppa_converged(&sys, &t, PPA_TOL, PPA_MAX_ITERATIONS, PpaInit::Equilibrium)?,
        };
        ppa_report(run, n, &t)
    } else {
        let algorithm = build_algorithm(algo, args.m.or(f.m), merged_str(&args.m_table, &f.m_table), args.delta.or(f.delta), reset_spins)?
            .expect("non-ppa algorithms always build");
        let program = algorithm.build(n)?;
        let sys = SpinSystem::new(n, algorithm.reset_spin_count(), eps0)?;
        match backend {
            BackendArg::Bias => execute(&program, &sys, &t, &cfg)?,
            BackendArg::Oracle => {
                let opts = OracleOptions {
                    extended_markov: true,
                    trajectory: cfg.trajectory,
                    initial: cfg.initial.clone(),
                };
                execute_oracle(&program, &sys, &t, &opts)?
            }
        }
    };

    convert_units(&mut report, absolute, eps0);
    if let Some(path) = &tcsv {
        let Some(points) = &report.trajectory else {
            return Err(CliError::Config(
                "--trajectory-csv needs --trajectory waits or full".into(),
            ));
        };
        write_text(path, &trajectory_csv(points, report.program.n))?;
    }
    emit(out.as_deref(), &to_pretty(&report)?)
}

fn merged_str<'a>(cli: &'a Option<String>, file: &'a Option<String>) -> Option<&'a str> {
    cli.as_deref().or(file.as_deref())
}

fn ppa_report(run: PpaRun, n: u32, t: &TimingParams) -> RunReport {
    let mut peak = 1.0;
    let mut at = 0u64;
    for (i, &factor) in run.msb_factors.iter().enumerate() {
        if factor > peak {
            peak = factor;
            at = i as u64 + 1;
        }
    }
    RunReport {
        program: ProgramMeta {
            name: "ppa".into(),
            n,
            params: json!({ "iterations": run.iterations, "converged": run.converged }),
        },
        final_biases: run.final_state.marginals().into_vec(),
        units: Units::Absolute,
        n_resets: u64::from(run.iterations),
        t_run: t.t_run(u64::from(run.iterations)),
        cooling_factor: run.msb_factors.last().copied().unwrap_or(1.0),
        peak_cooling_factor: peak,
        resets_at_peak: at,
        linear_regime_warning: false,
        trajectory: None,
        entropy: Some(run.ledger),
    }
}

fn cmd_sweep(args: SweepArgs) -> Result<(), CliError> {
    let f = load_config(args.config.as_deref())?;
    let algo = pick(args.algo, f.algo.as_deref(), "algo")?.unwrap_or(AlgoKind::MpacAll);
    let reset_spins = args.reset_spins.or(f.reset_spins).unwrap_or(2);
    let Some(algorithm) = build_algorithm(
        algo,
        args.m.or(f.m),
        merged_str(&args.m_table, &f.m_table),
        args.delta.or(f.delta),
        reset_spins,
    )?
    else {
        return Err(CoreError::UnsupportedAlgorithm {
            algo: "ppa".into(),
            reason: "sweep grids run program algorithms; use `run --algo ppa`",
        }
        .into());
    };
    let ns = args.ns.or(f.ns).unwrap_or_else(|| (3..=21).step_by(2).collect());
    let rs = args.rs.or(f.rs).unwrap_or_else(|| {
        (2..=7)
            .map(|e| Extended::Finite(10f64.powi(e)))
            .chain([Extended::Infinite])
            .collect()
    });
    let spec = SweepSpec {
        algorithm,
        ns,
        rs,
        d: args.d.or(f.d).unwrap_or(Extended::Finite(5.0)),
        eps0: args.eps0.or(f.eps0).unwrap_or(DEFAULT_EPS0),
        mode: pick(args.mode, f.mode.as_deref(), "mode")?.unwrap_or(ModeArg::Exact).into(),
        reset_model: pick(args.reset_model, f.reset_model.as_deref(), "reset-model")?
            .unwrap_or(ResetModelArg::Paper)
            .into(),
    };
    let cells = run_sweep(&spec)?;
    emit(args.out.or(f.out).as_deref(), &sweep_csv(&cells))
}

fn cmd_verify() -> Result<(), CliError> {
    let checks = run_golden_suite()?;
    let name_w = checks.iter().map(|c| c.name.len()).chain([5]).max().unwrap();
    let exp_w = checks.iter().map(|c| c.expected.len()).chain([8]).max().unwrap();
    let act_w = checks.iter().map(|c| c.actual.len()).chain([6]).max().unwrap();
    println!(
        "{:<name_w$}  {:<exp_w$}  {:<act_w$}  status",
        "check", "expected", "actual"
    );
    let mut failed = 0usize;
    for c in &checks {
        let status = if c.pass { "ok" } else { "MISMATCH" };
        println!("{:<name_w$}  {:<exp_w$}  {:<act_w$}  {status}", c.name, c.expected, c.actual);
        if let Some(note) = &c.note {
            println!("{:name_w$}  note: {note}", "");
        }
        failed += usize::from(!c.pass);
    }
    println!();
    println!("{} checks, {} failed", checks.len(), failed);
    if failed > 0 {
        return Err(CliError::Runtime(format!("{failed} reference checks failed")));
    }
    Ok(())
}

fn cmd_compare(args: CompareArgs) -> Result<(), CliError> {
    let f = load_config(args.config.as_deref())?;
    if args.multiscan || f.multiscan.unwrap_or(false) {
        return compare_multiscan(&args, &f);
    }
    let algo = pick(args.algo, f.algo.as_deref(), "algo")?.unwrap_or(AlgoKind::MpacAll);
    let n = args.n.or(f.n).unwrap_or(3);
    let r = args.r.or(f.r).unwrap_or(Extended::Finite(1000.0));
    let d = args.d.or(f.d).unwrap_or(Extended::Finite(5.0));
    let eps0 = args.eps0.or(f.eps0).unwrap_or(DEFAULT_EPS0);
    let reset_spins = args.reset_spins.or(f.reset_spins).unwrap_or(2);
    let Some(algorithm) = build_algorithm(
        algo,
        args.m.or(f.m),
        merged_str(&args.m_table, &f.m_table),
        args.delta.or(f.delta),
        reset_spins,
    )?
    else {
        return Err(CoreError::UnsupportedAlgorithm {
            algo: "ppa".into(),
            reason: "the bias engine cannot run partner pairing",
        }
        .into());
    };
    let program = algorithm.build(n)?;
    let sys = SpinSystem::new(n, algorithm.reset_spin_count(), eps0)?;
    let t = TimingParams::new(r, d)?;

    // The oracle relaxes every spin from its current state, so hold the
    // engine to the same reset model; gate handling stays physical.
    let cfg = EngineConfig::exact().with_reset_model(ResetModel::General);
    let engine = execute(&program, &sys, &t, &cfg)?;
    let markov = execute_oracle(&program, &sys, &t, &OracleOptions::default())?;
    let full = execute_oracle(
        &program,
        &sys,
        &t,
        &OracleOptions { extended_markov: false, ..OracleOptions::default() },
    )?;

    let scale = if args.absolute || f.absolute.unwrap_or(false) { 1.0 } else { eps0 };
    let in_units = |biases: &[f64]| -> Vec<f64> { biases.iter().map(|b| b / scale).collect() };
    let units = if scale == 1.0 { "absolute" } else { "eps0" };
    let doc = json!({
        "algo": algo.name(),
        "n": n,
        "R": r,
        "d": d,
        "eps0": eps0,
        "units": units,
        "bias_engine": {
            "final": in_units(&engine.final_biases),
            "cooling_factor": engine.cooling_factor,
        },
        "oracle_extended_markov": {
            "final": in_units(&markov.final_biases),
            "cooling_factor": markov.cooling_factor,
        },
        "oracle_full": {
            "final": in_units(&full.final_biases),
            "cooling_factor": full.cooling_factor,
        },
        "max_rel_diff_extended_markov": max_rel_diff(&engine.final_biases, &markov.final_biases),
        "max_rel_diff_full": max_rel_diff(&engine.final_biases, &full.final_biases),
    });
    emit(args.out.or(f.out).as_deref(), &to_pretty(&doc)?)
}

/// Ideal cooling factor of mPAC-all versus the square-root SNR gain of
/// plain signal averaging with the same number of resets.
fn compare_multiscan(args: &CompareArgs, f: &FileConfig) -> Result<(), CliError> {
    let n = args.n.or(f.n).unwrap_or(7);
    let m = args.m.or(f.m).unwrap_or(2);
    let program = Algorithm::MpacAll { m }.build(n)?;
    let resets = args.resets.or(f.resets).unwrap_or_else(|| program.count_resets());
    let multiplier = args.reset_multiplier.or(f.reset_multiplier).unwrap_or(1.0);
    if multiplier.is_nan() || multiplier <= 0.0 {
        return Err(CliError::Config(format!(
            "--reset-multiplier must be positive, got {multiplier}"
        )));
    }
    let doc = json!({
        "n": n,
        "m": m,
        "resets": resets,
        "reset_multiplier": multiplier,
        "ac": ideal_mpac_factor(m, (n - 1) / 2),
        "multiscan": multiscan_snr(resets, multiplier),
    });
    emit(args.out.as_ref().or(f.out.as_ref()).map(PathBuf::as_path), &to_pretty(&doc)?)
}

fn max_rel_diff(a: &[f64], b: &[f64]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(&x, &y)| (x - y).abs() / y.abs().max(f64::MIN_POSITIVE))
        .fold(0.0, f64::max)
}

/// Rescale the report's biases to the requested units. Cooling factors are
/// already dimensionless and entropy is in bits; both stay as they are.
fn convert_units(r: &mut RunReport, absolute: bool, eps0: f64) {
    enum Dir {
        ToAbsolute,
        ToEps0,
    }
    let dir = match (r.units, absolute) {
        (Units::Eps0, true) => Dir::ToAbsolute,
        (Units::Absolute, false) => Dir::ToEps0,
        _ => return,
    };
    let scale = |b: &mut f64| match dir {
        Dir::ToAbsolute => *b *= eps0,
        Dir::ToEps0 => *b /= eps0,
    };
    for b in &mut r.final_biases {
        scale(b);
    }
    if let Some(points) = &mut r.trajectory {
        for p in points {
            for b in &mut p.biases {
                scale(b);
            }
        }
    }
    r.units = match dir {
        Dir::ToAbsolute => Units::Absolute,
        Dir::ToEps0 => Units::Eps0,
    };
}

fn to_pretty<T: Serialize>(v: &T) -> Result<String, CliError> {
    serde_json::to_string_pretty(v)
        .map(|mut s| {
            s.push('\n');
            s
        })
        .map_err(|e| CliError::Runtime(format!("serialization failed: {e}")))
}

fn emit(out: Option<&Path>, text: &str) -> Result<(), CliError> {
    match out {
        Some(path) => write_text(path, text),
        None => {
            print!("{text}");
            Ok(())
        }
    }
}

fn write_text(path: &Path, text: &str) -> Result<(), CliError> {
    fs::write(path, text)
        .map_err(|e| CliError::Runtime(format!("cannot write {}: {e}", path.display())))
}
