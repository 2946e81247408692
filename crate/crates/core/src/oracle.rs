//! Brute-force oracle on the full diagonal density matrix.
//!
//! The oracle tracks all 2^n basis-state probabilities, so it sees
//! correlations the bias engine cannot. It exists to validate the
//! engine's marginal updates and to run the partner pairing algorithm,
//! whose SORT step has no marginal description. Capped at n <= 14.
//!
//! Probabilities are stored as deviations from the uniform distribution,
//! p_i = 2^{-n} + q_i. Every operation here is affine in the
//! probabilities, so it maps exactly onto the deviations, and the
//! interesting signal (of order eps0 * 2^{-n}) keeps full relative
//! precision instead of sitting in the last few bits of numbers of
//! order 2^{-n}. Marginal biases then come out as plain sums of
//! deviation differences with no cancellation against the uniform bulk.

use serde::{Deserialize, Serialize};

use crate::engine::{
    Extended, InitialState, RunReport, TimingParams, TrajectoryMode, TrajectoryPoint, Units,
};
use crate::error::{Error, Result};
use crate::programs::{Instruction, Program};
use crate::spin::{BiasVector, SpinSystem};

/// Largest spin count the oracle accepts; 2^14 probabilities is where
/// exhaustive runs stop being interactive.
pub const ORACLE_SPIN_CAP: u32 = 14;

/// Compensated (Neumaier) accumulator, used wherever many small terms
/// meet: marginals, entropies, ledger totals.
#[derive(Debug, Default, Clone, Copy)]
pub(crate) struct Neumaier {
    sum: f64,
    comp: f64,
}

impl Neumaier {
    pub(crate) fn add(&mut self, v: f64) {
        let t = self.sum + v;
        if self.sum.abs() >= v.abs() {
            self.comp += (self.sum - t) + v;
        } else {
            self.comp += (v - t) + self.sum;
        }
        self.sum = t;
    }

    pub(crate) fn value(&self) -> f64 {
        self.sum + self.comp
    }
}

/// Per-reset entropy accounting of a run, in bits. Deltas are
/// H(before) - H(after) around each reset step, so positive means the
/// step removed entropy from the system.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EntropyLedger {
    pub h_initial: f64,
    pub h_final: f64,
    pub deltas: Vec<f64>,
}

impl EntropyLedger {
    /// Sum of the per-reset deltas. Unitaries preserve entropy, so this
    /// telescopes to h_initial - h_final up to rounding.
    pub fn cumulative(&self) -> f64 {
        let mut acc = Neumaier::default();
        for &d in &self.deltas {
            acc.add(d);
        }
        acc.value()
    }

    pub fn max_delta(&self) -> f64 {
        self.deltas.iter().copied().fold(0.0, f64::max)
    }

    /// |h_initial - h_final - cumulative| <= tol.
    pub fn telescopes(&self, tol: f64) -> bool {
        (self.h_initial - self.h_final - self.cumulative()).abs() <= tol
    }
}

/// Full diagonal state of an n-spin system. Basis index bit i-1 holds
/// spin i (0 = the lower-energy state), so spin n is the most
/// significant bit.
#[derive(Debug, Clone, PartialEq)]
pub struct DiagState {
    n: u32,
    uniform: f64,
    dev: Vec<f64>,
}

fn check_cap(n: u32) -> Result<()> {
    if n < 1 {
        return Err(Error::InvalidSpinCount { n, reason: "need at least one spin" });
    }
    if n > ORACLE_SPIN_CAP {
        return Err(Error::OracleCapExceeded { n, cap: ORACLE_SPIN_CAP });
    }
    Ok(())
}

impl DiagState {
    /// Validates length 2^n, non-negativity and normalization to 1e-12.
    pub fn new(n: u32, probs: Vec<f64>) -> Result<Self> {
        check_cap(n)?;
        let dim = 1usize << n;
        if probs.len() != dim {
            return Err(Error::InvalidParameter(format!(
                "distribution over {n} spins needs {dim} entries, got {}",
                probs.len()
            )));
        }
        let mut acc = Neumaier::default();
        for &p in &probs {
            if !p.is_finite() || p < 0.0 {
                return Err(Error::InvalidParameter(format!("invalid probability {p}")));
            }
            acc.add(p);
        }
        let sum = acc.value();
        if (sum - 1.0).abs() > 1e-12 {
            return Err(Error::InvalidParameter(format!(
                "distribution sums to {sum}, expected 1"
            )));
        }
        let uniform = (dim as f64).recip();
        let dev = probs.iter().map(|&p| p - uniform).collect();
        Ok(DiagState { n, uniform, dev })
    }

    /// Product state with the given per-spin biases (spin 1 first).
    pub fn product(biases: &[f64]) -> Result<Self> {
        let n = biases.len() as u32;
        check_cap(n)?;
        for &b in biases {
            if !b.is_finite() || b.abs() > 1.0 {
                return Err(Error::BiasOutOfRange { value: b });
            }
        }
        let dim = 1usize << n;
        let uniform = (dim as f64).recip();
        // p_idx = uniform * prod_s (1 +- eps_s); build the deviation from
        // uniform as expm1(sum ln1p(+-eps)) so small biases keep full
        // relative precision
        let dev = (0..dim)
            .map(|idx| {
                let mut log_sum = 0.0;
                for (s, &b) in biases.iter().enumerate() {
                    let signed = if idx & (1 << s) == 0 { b } else { -b };
                    log_sum += signed.ln_1p();
                }
                uniform * log_sum.exp_m1()
            })
            .collect();
        Ok(DiagState { n, uniform, dev })
    }

    /// Every spin at the equilibrium bias eps0.
    pub fn equilibrium(sys: &SpinSystem) -> Result<Self> {
        Self::product(&vec![sys.eps0(); sys.n() as usize])
    }

    /// The uniform distribution.
    pub fn completely_mixed(n: u32) -> Result<Self> {
        check_cap(n)?;
        let dim = 1usize << n;
        Ok(DiagState { n, uniform: (dim as f64).recip(), dev: vec![0.0; dim] })
    }

    pub fn n(&self) -> u32 {
        self.n
    }

    pub fn dim(&self) -> usize {
        self.dev.len()
    }

    /// Reconstructed probabilities, basis index order.
    pub fn probs(&self) -> Vec<f64> {
        self.dev.iter().map(|q| self.uniform + q).collect()
    }

    /// Bias of one spin: P(0) - P(1) over its basis pairs.
    pub fn marginal(&self, spin: u32) -> Result<f64> {
        if spin < 1 || spin > self.n {
            return Err(Error::SpinIndexOutOfRange { index: spin, n: self.n });
        }
        let bit = 1usize << (spin - 1);
        let mut acc = Neumaier::default();
        for idx in 0..self.dev.len() {
            if idx & bit == 0 {
                acc.add(self.dev[idx] - self.dev[idx | bit]);
            }
        }
        Ok(acc.value())
    }

    /// All per-spin biases. Magnitudes are clamped to 1 to absorb the
    /// last-ulp excursions a nearly pure distribution can produce.
    pub fn marginals(&self) -> BiasVector {
        let values: Vec<f64> = (1..=self.n)
            .map(|s| self.marginal(s).expect("spin index in range").clamp(-1.0, 1.0))
            .collect();
        BiasVector::new(values).expect("clamped marginals are valid biases")
    }

    /// Shannon entropy in bits.
    pub fn entropy(&self) -> f64 {
        let mut acc = Neumaier::default();
        for &q in &self.dev {
            let p = self.uniform + q;
            if p > 0.0 {
                acc.add(-p * p.log2());
            }
        }
        acc.value()
    }

    /// Apply a unitary instruction as a permutation of basis states.
    /// WAIT and SORT are not permutations and are refused here.
    pub fn apply(&mut self, instr: Instruction) -> Result<()> {
        match instr {
            Instruction::Pt { src, dst } => self.swap_bits(src, dst),
            Instruction::C2 { k } => {
                if k < 2 {
                    return Err(Error::CompressionIndexTooLow {
                        gate: "2-spin compression",
                        k,
                        min: 2,
                    });
                }
                self.swap_bits(k, k - 1)
            }
            Instruction::C3 { k } => {
                if k < 3 {
                    return Err(Error::CompressionIndexTooLow {
                        gate: "3-spin compression",
                        k,
                        min: 3,
                    });
                }
                self.check_spin(k)?;
                // |100> <-> |011> on spins (k, k-1, k-2)
                let hi = 1usize << (k - 1);
                let lo = (1usize << (k - 2)) | (1usize << (k - 3));
                self.exchange_pattern(hi, lo);
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
                self.check_spin(k)?;
                // |1000> <-> |0111> on spins (k .. k-3)
                let hi = 1usize << (k - 1);
                let lo = (1usize << (k - 2)) | (1usize << (k - 3)) | (1usize << (k - 4));
                self.exchange_pattern(hi, lo);
                Ok(())
            }
            Instruction::Wait => Err(Error::UnsupportedInstruction {
                instr: "WAIT".into(),
                backend: "permutation application",
            }),
            Instruction::Sort => Err(Error::UnsupportedInstruction {
                instr: "SORT".into(),
                backend: "permutation application",
            }),
        }
    }

    fn check_spin(&self, spin: u32) -> Result<()> {
        if spin < 1 || spin > self.n {
            return Err(Error::SpinIndexOutOfRange { index: spin, n: self.n });
        }
        Ok(())
    }

    fn swap_bits(&mut self, a: u32, b: u32) -> Result<()> {
        self.check_spin(a)?;
        self.check_spin(b)?;
        if a == b {
            return Ok(());
        }
        let ba = 1usize << (a - 1);
        let bb = 1usize << (b - 1);
        let mask = ba | bb;
        for idx in 0..self.dev.len() {
            if idx & ba != 0 && idx & bb == 0 {
                self.dev.swap(idx, idx ^ mask);
            }
        }
        Ok(())
    }

    /// Swap each basis state whose masked bits read (hi set, lo clear)
    /// with its pattern partner (hi clear, lo set), for every spectator
    /// configuration.
    fn exchange_pattern(&mut self, hi: usize, lo: usize) {
        let mask = hi | lo;
        for idx in 0..self.dev.len() {
            if idx & hi != 0 && idx & lo == 0 {
                self.dev.swap(idx, idx ^ mask);
            }
        }
    }

    /// Sort probabilities in descending order onto ascending basis
    /// indices; ties keep their basis order. This is the PPA's
    /// permutation step in its canonical form.
    pub fn sort(&mut self) {
        // comparing deviations is comparing probabilities
        self.dev.sort_by(|a, b| b.total_cmp(a));
    }

    /// Thermal relaxation of every spin for the given duration: reset
    /// spins on their own T1 (the time unit), computation spins on
    /// T1 = R. With `extended_markov` the reset spins' correlations are
    /// discarded afterwards by rebuilding the state as (computation
    /// joint) x (reset marginals), which is the relaxation model the
    /// bias engine's general reset mode assumes.
    pub fn relax(
        &mut self,
        duration: Extended,
        t: &TimingParams,
        sys: &SpinSystem,
        extended_markov: bool,
    ) -> Result<()> {
        if sys.n() != self.n {
            return Err(Error::InvalidSpinCount {
                n: sys.n(),
                reason: "oracle state and spin system disagree on spin count",
            });
        }
        let p_eq = 0.5 * (1.0 + sys.eps0());
        for s in 1..=self.n {
            let decay = if sys.is_reset(s) {
                duration.exp_neg()
            } else {
                t.comp_decay_for(duration)
            };
            self.relax_one(s, 1.0 - decay, p_eq, sys.eps0());
        }
        if extended_markov {
            self.decorrelate_resets(sys.reset_count());
        }
        Ok(())
    }

    /// Relaxation channel on a single spin: each (0,1) basis pair moves
    /// a fraction lambda of the way to (p_eq, 1-p_eq) of its weight.
    fn relax_one(&mut self, spin: u32, lambda: f64, p_eq: f64, eps0: f64) {
        if lambda == 0.0 {
            return;
        }
        let inject = self.uniform * eps0;
        let bit = 1usize << (spin - 1);
        for idx in 0..self.dev.len() {
            if idx & bit == 0 {
                let hi = idx | bit;
                let (q0, q1) = (self.dev[idx], self.dev[hi]);
                let sq = q0 + q1;
                // p0' = p0 + lambda (p_eq S - p0), rewritten in deviations
                let new0 = q0 + lambda * (inject + p_eq * sq - q0);
                self.dev[idx] = new0;
                self.dev[hi] = sq - new0;
            }
        }
    }

    /// Rebuild the state as (computation joint) x (reset marginals),
    /// erasing all correlations involving reset spins.
    fn decorrelate_resets(&mut self, reset_count: u32) {
        let rc = reset_count as usize;
        debug_assert!((1..=2).contains(&rc));
        let dim = self.dev.len();
        let block = 1usize << rc;
        let comp_dim = dim >> rc;
        let u = self.uniform;
        // Rounding leaves the total mass at 1 + delta for some tiny delta;
        // the product rebuild below would square that factor (it enters
        // through gamma and phi alike), doubling delta at every reset. Center
        // both factors so the rebuilt state is normalized exactly instead.
        let mut total = Neumaier::default();
        for &q in &self.dev {
            total.add(q);
        }
        let mean = total.value() / comp_dim as f64;
        // computation joint, as relative deviation from its own uniform:
        // P_c = 2^rc u (1 + gamma_c)
        let scale = (block as f64 * u).recip();
        let mut gamma = vec![0.0f64; comp_dim];
        for (c, g) in gamma.iter_mut().enumerate() {
            let base = c << rc;
            let mut s = 0.0;
            for r in 0..block {
                s += self.dev[base | r];
            }
            *g = (s - mean) * scale;
        }
        // reset marginals, as p_(s, bit) = (1 + phi)/2 with phi_0 = -phi_1
        // held exactly (phi_0 is the spin's bias).
        let mut phi = [[0.0f64; 2]; 2];
        for (s, row) in phi.iter_mut().enumerate().take(rc) {
            let bit = 1usize << s;
            let mut acc = [Neumaier::default(), Neumaier::default()];
            for (idx, &q) in self.dev.iter().enumerate() {
                acc[usize::from(idx & bit != 0)].add(q);
            }
            row[0] = acc[0].value() - acc[1].value();
            row[1] = -row[0];
        }
        // p_idx = u (1 + gamma)(1 + phi_1)...(1 + phi_rc); expand the
        // product minus one explicitly so the deviation keeps full
        // relative precision
        for (idx, q) in self.dev.iter_mut().enumerate() {
            let g = gamma[idx >> rc];
            let rel = if rc == 1 {
                let f = phi[0][idx & 1];
                g + f + g * f
            } else {
                let fa = phi[0][idx & 1];
                let fb = phi[1][usize::from(idx & 2 != 0)];
                g + fa + fb + g * fa + g * fb + fa * fb + g * fa * fb
            };
            *q = u * rel;
        }
    }

    /// CSV dump of the full distribution, header `index,prob`.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("index,prob\n");
        for (idx, &q) in self.dev.iter().enumerate() {
            out.push_str(&format!("{},{}\n", idx, self.uniform + q));
        }
        out
    }
}

/// Run options for the oracle backend.
#[derive(Debug, Clone, PartialEq)]
pub struct OracleOptions {
    /// Discard reset-spin correlations after every relaxation, matching
    /// the model the bias engine assumes. Disable for full-correlation
    /// reference runs.
    pub extended_markov: bool,
    pub trajectory: TrajectoryMode,
    /// Custom biases describe a product state in absolute units.
    pub initial: InitialState,
}

impl Default for OracleOptions {
    fn default() -> Self {
        OracleOptions {
            extended_markov: true,
            trajectory: TrajectoryMode::Off,
            initial: InitialState::Equilibrium,
        }
    }
}

/// Execute a program on the full distribution. Unlike the bias engine
/// this backend accepts SORT, and it always reports an entropy ledger
/// with one delta per WAIT.
pub fn execute_oracle(
    p: &Program,
    sys: &SpinSystem,
    t: &TimingParams,
    opts: &OracleOptions,
) -> Result<RunReport> {
    if opts.trajectory == TrajectoryMode::Full && sys.n() > 9 {
        return Err(Error::InvalidParameter(
            "full trajectory logging is limited to n <= 9".into(),
        ));
    }
    let mut state = match &opts.initial {
        InitialState::Equilibrium => DiagState::equilibrium(sys)?,
        InitialState::Depolarized => DiagState::completely_mixed(sys.n())?,
        InitialState::Custom(biases) => {
            if biases.len() != sys.n() as usize {
                return Err(Error::InvalidSpinCount {
                    n: sys.n(),
                    reason: "custom initial state has the wrong length",
                });
            }
            DiagState::product(biases)?
        }
    };
    let eps0 = sys.eps0();
    let h_initial = state.entropy();
    let mut deltas = Vec::new();
    let mut resets = 0u64;
    let mut peak = state.marginal(sys.n())? / eps0;
    let mut resets_at_peak = 0u64;
    let mut trajectory: Option<Vec<TrajectoryPoint>> = match opts.trajectory {
        TrajectoryMode::Off => None,
        _ => Some(Vec::new()),
    };

    for (step, instr) in p.iter().enumerate() {
        match instr {
            Instruction::Wait => {
                let before = state.entropy();
                state.relax(t.d(), t, sys, opts.extended_markov)?;
                resets += 1;
                deltas.push(before - state.entropy());
            }
            Instruction::Sort => state.sort(),
            gate => state.apply(gate)?,
        }
        let factor = state.marginal(sys.n())? / eps0;
        if factor > peak {
            peak = factor;
            resets_at_peak = resets;
        }
        if let Some(points) = trajectory.as_mut() {
            let record = match opts.trajectory {
                TrajectoryMode::Full => true,
                TrajectoryMode::Waits => matches!(instr, Instruction::Wait),
                TrajectoryMode::Off => false,
            };
            if record {
                points.push(TrajectoryPoint {
                    step: step as u64 + 1,
                    instr: instr.to_string(),
                    biases: state.marginals().into_vec(),
                });
            }
        }
    }

    let h_final = state.entropy();
    let cooling_factor = state.marginal(sys.n())? / eps0;
    Ok(RunReport {
        program: p.meta().clone(),
        final_biases: state.marginals().into_vec(),
        units: Units::Absolute,
        n_resets: resets,
        t_run: t.t_run(resets),
        cooling_factor,
        peak_cooling_factor: peak,
        resets_at_peak,
        linear_regime_warning: false,
        trajectory,
        entropy: Some(EntropyLedger { h_initial, h_final, deltas }),
    })
}

/// Starting state of a partner pairing run.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PpaInit {
    Equilibrium,
    CompletelyMixed,
}

/// Result of a partner pairing run.
#[derive(Debug, Clone)]
pub struct PpaRun {
    pub final_state: DiagState,
    pub ledger: EntropyLedger,
    /// MSB bias in units of eps0 after each iteration.
    pub msb_factors: Vec<f64>,
    pub iterations: u32,
    /// Only meaningful from [`run_ppa_converged`]; fixed-count runs
    /// report false.
    pub converged: bool,
}

/// Partner pairing: alternate SORT with a reset of spin 1 (duration d on
/// the reset timescale; pass d = infinity for ideal resets, which set
/// spin 1 to the equilibrium bias exactly). Computation spins are left
/// untouched during the reset, the algorithm's idealization. Requires a
/// single reset spin.
pub fn run_ppa(
    sys: &SpinSystem,
    t: &TimingParams,
    iterations: u32,
    init: PpaInit,
) -> Result<PpaRun> {
    ppa_loop(sys, t, iterations, None, init)
}

/// The PPA's MSB factor moves in period-2 plateaus (a sort that changes
/// nothing above spin 1 follows every productive one), so convergence
/// compares across a window of iterations rather than adjacent ones.
const PPA_PATIENCE: usize = 10;

/// Iterate the partner pairing algorithm until the MSB cooling factor
/// changes by at most `tol` over [`PPA_PATIENCE`] consecutive
/// iterations, up to `max_iterations`.
pub fn run_ppa_converged(
    sys: &SpinSystem,
    t: &TimingParams,
    tol: f64,
    max_iterations: u32,
    init: PpaInit,
) -> Result<PpaRun> {
    if tol.is_nan() || tol <= 0.0 {
        return Err(Error::NonPositiveParameter { name: "tol", value: tol });
    }
    ppa_loop(sys, t, max_iterations, Some(tol), init)
}

fn ppa_loop(
    sys: &SpinSystem,
    t: &TimingParams,
    max_iterations: u32,
    tol: Option<f64>,
    init: PpaInit,
) -> Result<PpaRun> {
    if sys.reset_count() != 1 {
        return Err(Error::InvalidResetCount { count: sys.reset_count() });
    }
    let mut state = match init {
        PpaInit::Equilibrium => DiagState::equilibrium(sys)?,
        PpaInit::CompletelyMixed => DiagState::completely_mixed(sys.n())?,
    };
    let eps0 = sys.eps0();
    let p_eq = 0.5 * (1.0 + eps0);
    let lambda = 1.0 - t.d().exp_neg();
    let h_initial = state.entropy();
    let mut deltas = Vec::new();
    let mut msb_factors: Vec<f64> = Vec::new();
    let mut converged = false;
    let mut iterations = 0;

    for _ in 0..max_iterations {
        state.sort();
        let before = state.entropy();
        state.relax_one(1, lambda, p_eq, eps0);
        deltas.push(before - state.entropy());
        iterations += 1;
        let factor = state.marginal(sys.n())? / eps0;
        msb_factors.push(factor);
        if let Some(tol) = tol {
            let len = msb_factors.len();
            if len > PPA_PATIENCE && (factor - msb_factors[len - 1 - PPA_PATIENCE]).abs() <= tol {
                converged = true;
                break;
            }
        }
    }

    let h_final = state.entropy();
    Ok(PpaRun {
        final_state: state,
        ledger: EntropyLedger { h_initial, h_final, deltas },
        msb_factors,
        iterations,
        converged,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::engine::{execute, EngineConfig, GateModel, ResetModel};
    use crate::programs::build_mpac_all;
    use crate::spin::kernel;

    fn sys(n: u32, resets: u32, eps0: f64) -> SpinSystem {
        SpinSystem::new(n, resets, eps0).unwrap()
    }

    fn ideal() -> TimingParams {
        TimingParams::new(Extended::Infinite, Extended::Infinite).unwrap()
    }

    fn entropy_of(dist: &[f64]) -> f64 {
        dist.iter().filter(|&&p| p > 0.0).map(|&p| -p * p.log2()).sum()
    }

    fn mutual_information_reset(state: &DiagState) -> f64 {
        // I(spin 1 ; rest) from the reconstructed distribution
        let p = state.probs();
        let p0: f64 = p.iter().step_by(2).sum();
        let rest: Vec<f64> = p.chunks(2).map(|c| c[0] + c[1]).collect();
        entropy_of(&[p0, 1.0 - p0]) + entropy_of(&rest) - entropy_of(&p)
    }

    #[test]
    fn product_state_marginals_roundtrip() {
        let biases = [0.3, -0.2, 0.5];
        let state = DiagState::product(&biases).unwrap();
        for (i, &b) in biases.iter().enumerate() {
            assert!((state.marginal(i as u32 + 1).unwrap() - b).abs() < 1e-15);
        }
        let sum: f64 = state.probs().iter().sum();
        assert!((sum - 1.0).abs() < 1e-14);
    }

    #[test]
    fn new_validates_distributions() {
        assert!(DiagState::new(2, vec![0.5, 0.5, 0.25, -0.25]).is_err());
        assert!(DiagState::new(2, vec![0.5, 0.5, 0.5, 0.5]).is_err());
        assert!(DiagState::new(2, vec![0.25; 3]).is_err());
        assert!(DiagState::new(2, vec![0.25; 4]).is_ok());
        assert!(matches!(
            DiagState::completely_mixed(15).unwrap_err(),
            Error::OracleCapExceeded { n: 15, cap: 14 }
        ));
    }

    #[test]
    fn compression_marginals_match_closed_forms() {
        let (a, b, c) = (0.9, 0.5, -0.3);
        let mut state = DiagState::product(&[a, b, c]).unwrap();
        state.apply(Instruction::C3 { k: 3 }).unwrap();
        let (c2, b2, a2) = kernel::compress3(c, b, a);
        assert!((state.marginal(3).unwrap() - c2).abs() < 1e-15);
        assert!((state.marginal(2).unwrap() - b2).abs() < 1e-15);
        assert!((state.marginal(1).unwrap() - a2).abs() < 1e-15);

        let (a, b, c, d) = (0.25, -0.6, 0.1, 0.8);
        let mut state = DiagState::product(&[a, b, c, d]).unwrap();
        state.apply(Instruction::C4 { k: 4 }).unwrap();
        let (d2, c2, b2, a2) = kernel::compress4(d, c, b, a);
        assert!((state.marginal(4).unwrap() - d2).abs() < 1e-15);
        assert!((state.marginal(3).unwrap() - c2).abs() < 1e-15);
        assert!((state.marginal(2).unwrap() - b2).abs() < 1e-15);
        assert!((state.marginal(1).unwrap() - a2).abs() < 1e-15);
    }

    #[test]
    fn gates_are_involutions() {
        let mut state = DiagState::product(&[0.1, 0.2, 0.3, 0.4]).unwrap();
        let orig = state.clone();
        for instr in [
            Instruction::C3 { k: 3 },
            Instruction::C4 { k: 4 },
            Instruction::Pt { src: 1, dst: 4 },
            Instruction::C2 { k: 2 },
        ] {
            state.apply(instr).unwrap();
            state.apply(instr).unwrap();
            assert_eq!(state, orig, "{instr} twice should be the identity");
        }
    }

    #[test]
    fn pt_moves_marginals_and_c2_matches_pt() {
        let mut a = DiagState::product(&[0.1, 0.0, 0.7]).unwrap();
        a.apply(Instruction::Pt { src: 1, dst: 3 }).unwrap();
        assert!((a.marginal(3).unwrap() - 0.1).abs() < 1e-15);
        assert!((a.marginal(1).unwrap() - 0.7).abs() < 1e-15);

        let mut b = DiagState::product(&[0.1, 0.0, 0.7]).unwrap();
        let mut c = b.clone();
        b.apply(Instruction::C2 { k: 3 }).unwrap();
        c.apply(Instruction::Pt { src: 2, dst: 3 }).unwrap();
        assert_eq!(b, c);
    }

    #[test]
    fn completely_mixed_entropy_is_n_bits() {
        for n in 1..=6 {
            let state = DiagState::completely_mixed(n).unwrap();
            assert!((state.entropy() - n as f64).abs() < 1e-12);
        }
    }

    #[test]
    fn sort_orders_descending_and_is_idempotent() {
        let mut state = DiagState::product(&[0.3, -0.4, 0.2]).unwrap();
        state.apply(Instruction::C3 { k: 3 }).unwrap();
        state.sort();
        let p = state.probs();
        for w in p.windows(2) {
            assert!(w[0] >= w[1]);
        }
        let once = state.clone();
        state.sort();
        assert_eq!(state, once);
        // ties (equal biases give equal probabilities per excitation
        // pattern) stay in basis order
        let mut tied = DiagState::product(&[0.5, 0.5]).unwrap();
        tied.sort();
        let p = tied.probs();
        assert_eq!(p[1], p[2]);
    }

    #[test]
    fn infinite_relaxation_reaches_equilibrium() {
        let sys = sys(3, 1, 1e-3);
        let mut state = DiagState::product(&[0.9, -0.9, 0.5]).unwrap();
        state.relax(Extended::Infinite, &ideal(), &sys, false).unwrap();
        // R = inf froze the computation spins, spin 1 reset fully
        assert!((state.marginal(1).unwrap() - 1e-3).abs() < 1e-15);
        assert!((state.marginal(2).unwrap() + 0.9).abs() < 1e-15);
        let t = TimingParams::new(Extended::Finite(10.0), Extended::Infinite).unwrap();
        let mut state = DiagState::product(&[0.9, -0.9, 0.5]).unwrap();
        state.relax(Extended::Infinite, &t, &sys, false).unwrap();
        let eq = DiagState::equilibrium(&sys).unwrap();
        for s in 1..=3 {
            assert!((state.marginal(s).unwrap() - eq.marginal(s).unwrap()).abs() < 1e-15);
        }
    }

    #[test]
    fn zero_duration_relaxation_is_identity() {
        let sys = sys(2, 1, 1e-5);
        let t = TimingParams::new(Extended::Finite(100.0), Extended::Finite(5.0)).unwrap();
        let mut state = DiagState::product(&[0.2, 0.1]).unwrap();
        let orig = state.clone();
        state.relax(Extended::Finite(0.0), &t, &sys, false).unwrap();
        assert_eq!(state, orig);
    }

    #[test]
    fn extended_markov_reset_destroys_reset_correlations() {
        let sys = sys(3, 1, 1e-2);
        let t = TimingParams::new(Extended::Finite(1000.0), Extended::Finite(5.0)).unwrap();
        let mut state = DiagState::equilibrium(&sys).unwrap();
        state.apply(Instruction::C3 { k: 3 }).unwrap();
        state.relax(Extended::Finite(0.01), &t, &sys, false).unwrap();
        assert!(mutual_information_reset(&state) > 1e-9, "gate should correlate");
        let mut state2 = state.clone();
        state2.relax(Extended::Finite(0.01), &t, &sys, true).unwrap();
        assert!(mutual_information_reset(&state2) < 1e-13);
        // marginals survive the decorrelation
        for s in 1..=2 {
            let with = state2.marginal(s).unwrap();
            let mut plain = state.clone();
            plain.relax(Extended::Finite(0.01), &t, &sys, false).unwrap();
            assert!((with - plain.marginal(s).unwrap()).abs() < 1e-16);
        }
    }

    #[test]
    fn oracle_agrees_with_engine_on_mpac() {
        let p = build_mpac_all(3, 2).unwrap();
        let sys = sys(3, 1, 1e-5);
        let t = TimingParams::new(Extended::Finite(1000.0), Extended::Finite(5.0)).unwrap();
        let oracle = execute_oracle(&p, &sys, &t, &OracleOptions::default()).unwrap();
        let cfg = EngineConfig::exact()
            .with_reset_model(ResetModel::General)
            .with_gate_model(GateModel::Physical);
        let engine = execute(&p, &sys, &t, &cfg).unwrap();
        assert_eq!(oracle.n_resets, engine.n_resets);
        for s in 0..3 {
            let (o, e) = (oracle.final_biases[s], engine.final_biases[s]);
            assert!(
                ((o - e) / e).abs() < 1e-12,
                "spin {} differs: oracle {o} engine {e}",
                s + 1
            );
        }
    }

    #[test]
    fn oracle_run_reports_ledger_and_peak() {
        let p = build_mpac_all(3, 2).unwrap();
        let sys = sys(3, 1, 1e-5);
        let t = TimingParams::new(Extended::Finite(50.0), Extended::Finite(5.0)).unwrap();
        let report = execute_oracle(&p, &sys, &t, &OracleOptions::default()).unwrap();
        let ledger = report.entropy.as_ref().unwrap();
        assert_eq!(ledger.deltas.len() as u64, report.n_resets);
        assert!(ledger.telescopes(1e-10));
        assert!(report.peak_cooling_factor >= report.cooling_factor);
    }

    #[test]
    fn sort_is_refused_as_permutation_but_runs_in_program() {
        let mut state = DiagState::completely_mixed(2).unwrap();
        assert!(state.apply(Instruction::Sort).unwrap_err().is_capability());
        assert!(state.apply(Instruction::Wait).is_err());
    }

    #[test]
    fn ppa_reaches_asymptotic_factor_on_three_spins() {
        let sys = sys(3, 1, 1e-5);
        let run = run_ppa_converged(&sys, &ideal(), 1e-9, 10_000, PpaInit::Equilibrium).unwrap();
        assert!(run.converged, "no convergence in {} iterations", run.iterations);
        let factor = *run.msb_factors.last().unwrap();
        assert!((factor - 2.0).abs() / 2.0 < 0.02, "factor {factor}");
        assert!(run.ledger.telescopes(1e-10));
    }

    #[test]
    fn ppa_entropy_deltas_respect_single_spin_bound() {
        let eps0 = 1e-5;
        let sys = sys(3, 1, eps0);
        let run = run_ppa(&sys, &ideal(), 20, PpaInit::CompletelyMixed).unwrap();
        let bound = eps0 * eps0 / f64::ln(4.0) * (1.0 + 1e-3);
        for (i, &d) in run.ledger.deltas.iter().enumerate() {
            assert!(d <= bound, "reset {i} extracted {d} > {bound}");
        }
        // the very first reset of a mixed state extracts the full bound
        assert!(run.ledger.deltas[0] > bound / (1.0 + 1e-3) * 0.999);
    }

    #[test]
    fn ppa_requires_single_reset_spin() {
        let sys = sys(4, 2, 1e-5);
        assert!(matches!(
            run_ppa(&sys, &ideal(), 5, PpaInit::Equilibrium).unwrap_err(),
            Error::InvalidResetCount { count: 2 }
        ));
    }

    #[test]
    fn csv_dump_shape() {
        let state = DiagState::completely_mixed(1).unwrap();
        assert_eq!(state.to_csv(), "index,prob\n0,0.5\n1,0.5\n");
    }
}
