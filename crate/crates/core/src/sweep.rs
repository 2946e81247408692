//! Parameter sweeps over (n, R) grids, as used for the achievable-bias
//! survey. Cells run in parallel; output order and content are
//! deterministic regardless of thread count.

use rayon::prelude::*;
use serde::Serialize;

use crate::engine::{
    execute, EngineConfig, Extended, InitialState, Mode, ResetModel, TimingParams, TrajectoryMode,
};
use crate::error::{Error, Result};
use crate::programs::Algorithm;
use crate::spin::SpinSystem;

/// Environment variable bounding the rayon pool used by sweeps.
pub const THREADS_ENV: &str = "SPINCOOL_THREADS";

#[derive(Debug, Clone)]
pub struct SweepSpec {
    pub algorithm: Algorithm,
    /// Spin counts, odd and strictly ascending.
    pub ns: Vec<u32>,
    /// Relaxation ratios; may include the infinite ideal.
    pub rs: Vec<Extended>,
    pub d: Extended,
    pub eps0: f64,
    pub mode: Mode,
    pub reset_model: ResetModel,
}

/// One grid point of a sweep.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SweepCell {
    pub n: u32,
    pub r: Extended,
    /// Peak MSB bias over the whole run, in units of eps0.
    pub max_bias_over_eps0: f64,
    /// Resets spent when the peak was reached.
    pub resets_at_max: u64,
    /// Total dimensionless run time d * N_r of the full program.
    pub t_run: Extended,
    /// MSB bias at program end, in units of eps0. Not part of the CSV;
    /// kept for peak-versus-final comparisons.
    pub final_bias_over_eps0: f64,
}

fn validate(spec: &SweepSpec) -> Result<()> {
    if spec.ns.is_empty() || spec.rs.is_empty() {
        return Err(Error::InvalidSweepGrid { reason: "empty axis".into() });
    }
    for w in spec.ns.windows(2) {
        if w[1] <= w[0] {
            return Err(Error::InvalidSweepGrid { reason: "spin counts must be strictly ascending".into() });
        }
    }
    if spec.ns.iter().any(|n| n % 2 == 0) {
        return Err(Error::InvalidSweepGrid { reason: "spin counts must be odd".into() });
    }
    Ok(())
}

fn run_cell(spec: &SweepSpec, n: u32, r: Extended) -> Result<SweepCell> {
    let sys = SpinSystem::new(n, spec.algorithm.reset_spin_count(), spec.eps0)?;
    let t = TimingParams::new(r, spec.d)?;
    let p = spec.algorithm.build(n)?;
    let cfg = EngineConfig {
        mode: spec.mode,
        reset_model: spec.reset_model,
        gate_model: match spec.mode {
            Mode::Exact => EngineConfig::exact().gate_model,
            Mode::Linear => EngineConfig::linear().gate_model,
        },
        trajectory: TrajectoryMode::Off,
        initial: InitialState::Equilibrium,
        elide_redundant_resets: false,
    };
    let report = execute(&p, &sys, &t, &cfg)?;
    Ok(SweepCell {
        n,
        r,
        max_bias_over_eps0: report.peak_cooling_factor,
        resets_at_max: report.resets_at_peak,
        t_run: report.t_run,
        final_bias_over_eps0: report.cooling_factor,
    })
}

/// Run the full grid, rows ordered by n then by the given R order. Any
/// failing cell aborts the whole sweep. The rayon pool honors
/// `SPINCOOL_THREADS` when set.
pub fn run_sweep(spec: &SweepSpec) -> Result<Vec<SweepCell>> {
    validate(spec)?;
    let grid: Vec<(u32, Extended)> = spec
        .ns
        .iter()
        .flat_map(|&n| spec.rs.iter().map(move |&r| (n, r)))
        .collect();
    let work = || {
        grid.par_iter()
            .map(|&(n, r)| run_cell(spec, n, r))
            .collect::<Result<Vec<SweepCell>>>()
    };
    match pool_from_env()? {
        Some(pool) => pool.install(work),
        None => work(),
    }
}

fn pool_from_env() -> Result<Option<rayon::ThreadPool>> {
    let Ok(raw) = std::env::var(THREADS_ENV) else { return Ok(None) };
    let threads: usize = raw
        .parse()
        .ok()
        .filter(|&t| t >= 1)
        .ok_or_else(|| Error::InvalidParameter(format!("{THREADS_ENV}={raw} is not a thread count")))?;
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build()
        .map_err(|e| Error::InvalidParameter(format!("thread pool: {e}")))?;
    Ok(Some(pool))
}

/// Render sweep results as CSV. Header and row order are stable so
/// repeated sweeps diff cleanly.
pub fn sweep_csv(cells: &[SweepCell]) -> String {
    let mut out = String::from("n,R,max_bias_over_eps0,resets_at_max,t_run\n");
    for c in cells {
        out.push_str(&format!(
            "{},{},{},{},{}\n",
            c.n, c.r, c.max_bias_over_eps0, c.resets_at_max, c.t_run
        ));
    }
    out
}
