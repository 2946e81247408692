//! The bias engine: executes cooling programs on marginal-bias state
//! under the extended-Markovian relaxation model.
//!
//! State is one bias per spin. Exact mode tracks absolute biases and
//! applies the exact product-state gate forms; linear mode tracks biases
//! in units of eps0 and is the bookkeeping in which the published
//! trajectories are written. Timing is dimensionless: WAIT duration d and
//! the relaxation-time ratio R = T1(comp)/T1(reset), both of which may be
//! infinite, carried as a distinct variant so e.g. e^{-d/R} is exactly 1
//! at R = infinity instead of a rounded float.

use std::fmt;

use serde::de::{self, Deserializer, Visitor};
use serde::ser::Serializer;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::oracle::EntropyLedger;
use crate::programs::{peephole, Algorithm, Instruction, Program, ProgramMeta};
use crate::spin::{kernel, SpinSystem};

/// A non-negative dimensionless quantity that may be infinite.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Extended {
    Finite(f64),
    Infinite,
}

impl Extended {
    pub fn finite(self) -> Option<f64> {
        match self {
            Extended::Finite(v) => Some(v),
            Extended::Infinite => None,
        }
    }

    pub fn is_infinite(self) -> bool {
        matches!(self, Extended::Infinite)
    }

    /// e^{-x}, with the infinite case mapping to exactly 0.
    pub fn exp_neg(self) -> f64 {
        match self {
            Extended::Finite(v) => (-v).exp(),
            Extended::Infinite => 0.0,
        }
    }

    fn check_positive(self, name: &'static str) -> Result<Self> {
        if let Extended::Finite(v) = self {
            if !v.is_finite() || v <= 0.0 {
                return Err(Error::NonPositiveParameter { name, value: v });
            }
        }
        Ok(self)
    }
}

impl fmt::Display for Extended {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Extended::Finite(v) => write!(f, "{v}"),
            Extended::Infinite => write!(f, "inf"),
        }
    }
}

impl From<f64> for Extended {
    fn from(v: f64) -> Self {
        if v.is_infinite() { Extended::Infinite } else { Extended::Finite(v) }
    }
}

impl std::str::FromStr for Extended {
    type Err = std::num::ParseFloatError;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        if s.eq_ignore_ascii_case("inf") || s.eq_ignore_ascii_case("infinity") {
            return Ok(Extended::Infinite);
        }
        s.parse::<f64>().map(Extended::from)
    }
}

impl Serialize for Extended {
    fn serialize<S: Serializer>(&self, serializer: S) -> std::result::Result<S::Ok, S::Error> {
        match self {
            Extended::Finite(v) => serializer.serialize_f64(*v),
            Extended::Infinite => serializer.serialize_str("inf"),
        }
    }
}

impl<'de> Deserialize<'de> for Extended {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        struct V;
        impl Visitor<'_> for V {
            type Value = Extended;
            fn expecting(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
                write!(f, "a number or the string \"inf\"")
            }
            fn visit_f64<E: de::Error>(self, v: f64) -> std::result::Result<Extended, E> {
                Ok(Extended::from(v))
            }
            fn visit_u64<E: de::Error>(self, v: u64) -> std::result::Result<Extended, E> {
                Ok(Extended::Finite(v as f64))
            }
            fn visit_i64<E: de::Error>(self, v: i64) -> std::result::Result<Extended, E> {
                Ok(Extended::Finite(v as f64))
            }
            fn visit_str<E: de::Error>(self, s: &str) -> std::result::Result<Extended, E> {
                s.parse().map_err(|_| E::custom(format!("invalid extended value {s:?}")))
            }
        }
        d.deserialize_any(V)
    }
}

/// Dimensionless timing of a run: R = T1(comp)/T1(reset) and
/// d = T_WAIT/T1(reset). The derived clocks Q = R/d, D = Q/N_r and
/// T_run = d N_r are recomputed on demand.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TimingParams {
    r: Extended,
    d: Extended,
}

impl TimingParams {
    pub fn new(r: Extended, d: Extended) -> Result<Self> {
        Ok(TimingParams { r: r.check_positive("R")?, d: d.check_positive("d")? })
    }

    pub fn r(&self) -> Extended {
        self.r
    }

    pub fn d(&self) -> Extended {
        self.d
    }

    /// Q = R/d.
    pub fn q(&self) -> Extended {
        match (self.r, self.d) {
            (Extended::Infinite, _) => Extended::Infinite,
            (Extended::Finite(r), Extended::Finite(d)) => Extended::Finite(r / d),
            (Extended::Finite(_), Extended::Infinite) => Extended::Finite(0.0),
        }
    }

    /// D = Q/N_r = R/(d N_r).
    pub fn clock_d(&self, n_resets: u64) -> Extended {
        match self.q() {
            Extended::Infinite => Extended::Infinite,
            Extended::Finite(q) => Extended::Finite(q / n_resets as f64),
        }
    }

    /// T_run = d N_r in units of T1(reset).
    pub fn t_run(&self, n_resets: u64) -> Extended {
        match self.d {
            Extended::Finite(d) => Extended::Finite(d * n_resets as f64),
            Extended::Infinite => {
                if n_resets == 0 {
                    Extended::Finite(0.0)
                } else {
                    Extended::Infinite
                }
            }
        }
    }

    /// Reset-spin decay factor over one WAIT: e^{-d}.
    pub fn reset_decay(&self) -> f64 {
        self.d.exp_neg()
    }

    /// Computation-spin decay factor over one WAIT: e^{-d/R}.
    pub fn comp_decay(&self) -> f64 {
        self.comp_decay_for(self.d)
    }

    /// Computation-spin decay factor over an arbitrary duration,
    /// e^{-duration/R}. R = infinity freezes computation spins exactly
    /// (factor 1) whatever the duration.
    pub fn comp_decay_for(&self, duration: Extended) -> f64 {
        match (self.r, duration) {
            (Extended::Infinite, _) => 1.0,
            (Extended::Finite(r), Extended::Finite(t)) => (-t / r).exp(),
            (Extended::Finite(_), Extended::Infinite) => 0.0,
        }
    }
}

/// Which arithmetic the engine runs in.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Mode {
    /// Biases in units of eps0, linearized gate updates; the bookkeeping
    /// of the published trajectories.
    Linear,
    /// Absolute biases, exact product-state gate forms.
    Exact,
}

/// What a WAIT does to the reset spins.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ResetModel {
    /// Reset spins are set to (1 - e^{-d}) eps0 outright, the published
    /// simulation's simplification (it assumes the spin had no
    /// polarization going into the reset).
    PaperSimplified,
    /// Reset spins relax from their actual current bias.
    General,
}

/// How a compression gate books the donor spins.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GateModel {
    /// The target gets the compression value; donors are booked as fully
    /// consumed (bias 0). This is the accounting used by the published
    /// trajectories, where donors are always refreshed before reuse.
    Ideal,
    /// All involved marginals get their true post-permutation values.
    Physical,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TrajectoryMode {
    Off,
    /// Record the state after every WAIT (bounded by the reset count).
    Waits,
    /// Record the state after every instruction; refused for n > 9 where
    /// streams reach 10^7 instructions.
    Full,
}

/// Starting state of a run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InitialState {
    /// Every spin at eps0 (1 in linear units).
    Equilibrium,
    /// Every spin at bias 0, the convention of the published
    /// trajectories.
    Depolarized,
    /// Explicit biases, least significant spin first, in the run's units.
    Custom(Vec<f64>),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EngineConfig {
    pub mode: Mode,
    pub reset_model: ResetModel,
    pub gate_model: GateModel,
    pub trajectory: TrajectoryMode,
    pub initial: InitialState,
    /// Drop WAITs that cannot change the state (no gate touched a reset
    /// spin since the previous WAIT). Off by default so reset counts and
    /// trajectories match the written-out algorithms.
    pub elide_redundant_resets: bool,
}

impl EngineConfig {
    /// Exact arithmetic with the published simulation's reset handling.
    pub fn exact() -> Self {
        EngineConfig {
            mode: Mode::Exact,
            reset_model: ResetModel::PaperSimplified,
            gate_model: GateModel::Physical,
            trajectory: TrajectoryMode::Off,
            initial: InitialState::Equilibrium,
            elide_redundant_resets: false,
        }
    }

    /// Linear bookkeeping as used by the worked trajectory examples:
    /// ideal donor accounting, depolarized start, states sampled at every
    /// WAIT.
    pub fn linear() -> Self {
        EngineConfig {
            mode: Mode::Linear,
            reset_model: ResetModel::PaperSimplified,
            gate_model: GateModel::Ideal,
            trajectory: TrajectoryMode::Waits,
            initial: InitialState::Depolarized,
            elide_redundant_resets: false,
        }
    }

    pub fn with_reset_model(mut self, m: ResetModel) -> Self {
        self.reset_model = m;
        self
    }

    pub fn with_gate_model(mut self, g: GateModel) -> Self {
        self.gate_model = g;
        self
    }

    pub fn with_trajectory(mut self, t: TrajectoryMode) -> Self {
        self.trajectory = t;
        self
    }

    pub fn with_initial(mut self, i: InitialState) -> Self {
        self.initial = i;
        self
    }
}

/// One recorded trajectory sample.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrajectoryPoint {
    /// 1-based instruction index within the stream.
    pub step: u64,
    /// Display form of the instruction that produced this state.
    pub instr: String,
    /// Biases after the instruction, least significant spin first.
    pub biases: Vec<f64>,
}

/// Units of the bias values in a report.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Units {
    Eps0,
    Absolute,
}

/// Everything a run produces.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    /// Program metadata of the executed program.
    pub program: ProgramMeta,
    /// Final biases, least significant spin first.
    #[serde(rename = "final")]
    pub final_biases: Vec<f64>,
    pub units: Units,
    /// WAIT steps actually executed.
    pub n_resets: u64,
    /// d times n_resets, in units of T1(reset).
    pub t_run: Extended,
    /// Final bias of the most significant spin in units of eps0.
    pub cooling_factor: f64,
    /// Largest MSB bias seen after any instruction, in units of eps0.
    pub peak_cooling_factor: f64,
    /// WAITs executed up to (and including) the peak.
    pub resets_at_peak: u64,
    /// Set when a linear-mode run left the small-bias regime
    /// (|eps| >= 0.01 in absolute terms); values are then untrustworthy.
    pub linear_regime_warning: bool,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub trajectory: Option<Vec<TrajectoryPoint>>,
    /// Per-reset entropy accounting; only the oracle backend fills this.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub entropy: Option<EntropyLedger>,
}

/// Execute a program per the config. WAITs relax every spin (or, under
/// the paper_simplified model, set reset spins outright); PT and 2BC
/// swap; 3BC/4BC apply the configured marginal updates; unitaries take
/// zero time. SORT needs the full distribution and is refused here.
pub fn execute(
    p: &Program,
    sys: &SpinSystem,
    t: &TimingParams,
    cfg: &EngineConfig,
) -> Result<RunReport> {
    run_stream(p, sys, t, cfg, u64::MAX)
}

/// Linear-regime execution with the trajectory bookkeeping used by the
/// worked examples. Equivalent to `execute` with `EngineConfig::linear()`.
pub fn execute_linear(p: &Program, sys: &SpinSystem, t: &TimingParams) -> Result<RunReport> {
    execute(p, sys, t, &EngineConfig::linear())
}

/// Build and run `algo` for the given n, returning the running maximum
/// of the MSB bias (in units of eps0) over the whole trajectory and the
/// number of resets executed up to that maximum. Cooling saturates and
/// then degrades once D = R/(d N_r) drops below 1, so the peak can
/// precede program end. At most `budget` instructions are executed.
pub fn max_achievable_bias(
    algo: &Algorithm,
    n: u32,
    sys: &SpinSystem,
    t: &TimingParams,
    cfg: &EngineConfig,
    budget: u64,
) -> Result<(f64, u64)> {
    if budget == 0 {
        return Err(Error::NonPositiveParameter { name: "budget", value: 0.0 });
    }
    let p = algo.build(n)?;
    let report = run_stream(&p, sys, t, cfg, budget)?;
    Ok((report.peak_cooling_factor, report.resets_at_peak))
}

fn initial_state(sys: &SpinSystem, cfg: &EngineConfig) -> Result<Vec<f64>> {
    let n = sys.n() as usize;
    let eq = match cfg.mode {
        Mode::Linear => 1.0,
        Mode::Exact => sys.eps0(),
    };
    match &cfg.initial {
        InitialState::Equilibrium => Ok(vec![eq; n]),
        InitialState::Depolarized => Ok(vec![0.0; n]),
        InitialState::Custom(biases) => {
            if biases.len() != n {
                return Err(Error::InvalidSpinCount {
                    n: sys.n(),
                    reason: "custom initial state has the wrong length",
                });
            }
            Ok(biases.clone())
        }
    }
}

fn run_stream(
    p: &Program,
    sys: &SpinSystem,
    t: &TimingParams,
    cfg: &EngineConfig,
    budget: u64,
) -> Result<RunReport> {
    if cfg.trajectory == TrajectoryMode::Full && sys.n() > 9 {
        return Err(Error::InvalidParameter(
            "full trajectory logging is limited to n <= 9".into(),
        ));
    }
    let n = sys.n() as usize;
    let mut state = initial_state(sys, cfg)?;
    let eps0 = sys.eps0();
    let to_factor = |bias: f64| match cfg.mode {
        Mode::Linear => bias,
        Mode::Exact => bias / eps0,
    };
    // WAIT endpoints, precomputed once
    let eq = match cfg.mode {
        Mode::Linear => 1.0,
        Mode::Exact => eps0,
    };
    let reset_decay = t.reset_decay();
    let comp_decay = t.comp_decay();
    let simplified_reset = eq * (1.0 - reset_decay);
    let warn_threshold = 0.01 / eps0;

    let mut resets = 0u64;
    let mut steps = 0u64;
    let mut peak = to_factor(state[n - 1]);
    let mut resets_at_peak = 0u64;
    let mut warned = false;
    let mut trajectory: Option<Vec<TrajectoryPoint>> = match cfg.trajectory {
        TrajectoryMode::Off => None,
        _ => Some(Vec::new()),
    };

    let run = |instr: Instruction,
                   state: &mut Vec<f64>,
                   resets: &mut u64|
     -> Result<()> {
        match instr {
            Instruction::Wait => {
                for (idx, x) in state.iter_mut().enumerate() {
                    if sys.is_reset(idx as u32 + 1) {
                        *x = match cfg.reset_model {
                            ResetModel::PaperSimplified => simplified_reset,
                            ResetModel::General => kernel::relax_toward(*x, eq, reset_decay),
                        };
                    } else {
                        *x = kernel::relax_toward(*x, eq, comp_decay);
                    }
                }
                *resets += 1;
                Ok(())
            }
            Instruction::Pt { src, dst } => {
                let (s, d) = (check_spin(src, n)?, check_spin(dst, n)?);
                state.swap(s, d);
                Ok(())
            }
            Instruction::C2 { k } => {
                if k < 2 {
                    return Err(Error::CompressionIndexTooLow {
                        gate: "2-spin compression",
                        k,
                        min: 2,
                    });
                }
                let i = check_spin(k, n)?;
                state.swap(i, i - 1);
                Ok(())
            }
            Instruction::C3 { k } => {
                if k < 3 {
                    return Err(Error::CompressionIndexTooLow {
                        gate: "3-spin compression",
                        k,
                        min: 3,
                    });
                }
                let i = check_spin(k, n)?;
                let (c, b, a) = (state[i], state[i - 1], state[i - 2]);
                let (c2, b2, a2) = match (cfg.mode, cfg.gate_model) {
                    (Mode::Exact, GateModel::Physical) => kernel::compress3(c, b, a),
                    (Mode::Linear, GateModel::Physical) => kernel::compress3_linear(c, b, a),
                    (Mode::Exact, GateModel::Ideal) => {
                        (kernel::compress3(c, b, a).0, 0.0, 0.0)
                    }
                    (Mode::Linear, GateModel::Ideal) => {
                        (kernel::compress3_linear(c, b, a).0, 0.0, 0.0)
                    }
                };
                state[i] = c2;
                state[i - 1] = b2;
                state[i - 2] = a2;
                Ok(())
            }
            Instruction::C4 { k } => {
                if k < 4 {
                    return Err(Error::CompressionIndexTooLow {
                        gate: "4-spin compression",
                        k,
                        min: 4,
                    });
                }
                let i = check_spin(k, n)?;
                let (d4, c, b, a) = (state[i], state[i - 1], state[i - 2], state[i - 3]);
                let (d2, c2, b2, a2) = match (cfg.mode, cfg.gate_model) {
                    (Mode::Exact, GateModel::Physical) => kernel::compress4(d4, c, b, a),
                    (Mode::Linear, GateModel::Physical) => {
                        kernel::compress4_linear(d4, c, b, a)
                    }
                    (Mode::Exact, GateModel::Ideal) => {
                        (kernel::compress4(d4, c, b, a).0, 0.0, 0.0, 0.0)
                    }
                    (Mode::Linear, GateModel::Ideal) => {
                        (kernel::compress4_linear(d4, c, b, a).0, 0.0, 0.0, 0.0)
                    }
                };
                state[i] = d2;
                state[i - 1] = c2;
                state[i - 2] = b2;
                state[i - 3] = a2;
                Ok(())
            }
            Instruction::Sort => Err(Error::UnsupportedInstruction {
                instr: "SORT".into(),
                backend: "bias engine",
            }),
        }
    };

    let mut drive = |stream: &mut dyn Iterator<Item = Instruction>| -> Result<()> {
        for instr in stream {
            if steps == budget {
                break;
            }
            run(instr, &mut state, &mut resets)?;
            steps += 1;
            let factor = to_factor(state[n - 1]);
            if factor > peak {
                peak = factor;
                resets_at_peak = resets;
            }
            if cfg.mode == Mode::Linear && !warned {
                warned = state.iter().any(|x| x.abs() >= warn_threshold);
            }
            if let Some(points) = trajectory.as_mut() {
                let record = match cfg.trajectory {
                    TrajectoryMode::Full => true,
                    TrajectoryMode::Waits => matches!(instr, Instruction::Wait),
                    TrajectoryMode::Off => false,
                };
                if record {
                    points.push(TrajectoryPoint {
                        step: steps,
                        instr: instr.to_string(),
                        biases: state.clone(),
                    });
                }
            }
        }
        Ok(())
    };

    if cfg.elide_redundant_resets {
        drive(&mut peephole(p.iter(), sys.reset_count()))?;
    } else {
        drive(&mut p.iter())?;
    }

    let cooling_factor = to_factor(state[n - 1]);
    Ok(RunReport {
        program: p.meta().clone(),
        final_biases: state,
        units: match cfg.mode {
            Mode::Linear => Units::Eps0,
            Mode::Exact => Units::Absolute,
        },
        n_resets: resets,
        t_run: t.t_run(resets),
        cooling_factor,
        peak_cooling_factor: peak,
        resets_at_peak,
        linear_regime_warning: warned,
        trajectory,
        entropy: None,
    })
}

fn check_spin(spin: u32, n: usize) -> Result<usize> {
    if spin < 1 || spin as usize > n {
        return Err(Error::SpinIndexOutOfRange { index: spin, n: n as u32 });
    }
    Ok(spin as usize - 1)
}

/// Render a recorded trajectory as CSV with header `step,instr,spin_1..spin_n`.
pub fn trajectory_csv(points: &[TrajectoryPoint], n: u32) -> String {
    let mut out = String::from("step,instr");
    for i in 1..=n {
        out.push_str(&format!(",spin_{i}"));
    }
    out.push('\n');
    for p in points {
        out.push_str(&format!("{},{}", p.step, p.instr));
        for b in &p.biases {
            out.push_str(&format!(",{b}"));
        }
        out.push('\n');
    }
    out
}
