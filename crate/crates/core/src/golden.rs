//! Reference checks against published values: worked linear-regime
//! trajectories of the ladder algorithms, reset counts and ideal factors
//! of the practicable algorithm, finite-R simulation endpoints, and the
//! closed-form analysis examples. `spincool verify` prints these, and
//! the acceptance tests assert them.
//!
//! The trajectory states are dyadic rationals produced by exact halving
//! and quartering, so they are compared for exact f64 equality.

use crate::analysis::{ideal_mpac_factor, multiscan_snr};
use crate::engine::{execute, execute_linear, EngineConfig, Extended, TimingParams};
use crate::error::Result;
use crate::oracle::{run_ppa_converged, PpaInit};
use crate::programs::{
    build_fibonacci, build_mpac_all, build_new_bonacci, build_tribonacci, ideal, MTable,
    NewBonacciSpec, Program,
};
use crate::spin::SpinSystem;

/// One named comparison against a reference value.
#[derive(Debug, Clone)]
pub struct GoldenCheck {
    pub name: String,
    pub expected: String,
    pub actual: String,
    pub pass: bool,
    /// Known discrepancy or context worth printing next to the row.
    pub note: Option<String>,
}

/// Tolerance for the finite-R endpoint factors, which the source quotes
/// to two decimals.
pub const FINITE_R_TOL: f64 = 0.05;

/// Relative tolerance for the ideal practicable-algorithm factor.
pub const IDEAL_FACTOR_REL_TOL: f64 = 1e-6;

/// Relative tolerance for the partner pairing asymptote.
pub const PPA_REL_TOL: f64 = 0.02;

/// Run every reference check. An `Err` means a check could not even be
/// executed; value mismatches come back as `pass: false` rows instead.
pub fn run_golden_suite() -> Result<Vec<GoldenCheck>> {
    let mut checks = trajectory_checks()?;
    checks.extend(practicable_checks()?);
    checks.extend(finite_r_checks()?);
    checks.extend(analysis_checks()?);
    Ok(checks)
}

fn fmt_state(biases: &[f64]) -> String {
    let inner: Vec<String> = biases.iter().rev().map(|b| format!("{b}")).collect();
    format!("{{{}}}", inner.join(", "))
}

fn fmt_points(points: &[Vec<f64>]) -> String {
    points.iter().map(|p| fmt_state(p)).collect::<Vec<_>>().join(" ")
}

/// Sample the states a ladder-algorithm run displays: the linear-units
/// trajectory after each completed refresh block, i.e. every `stride`-th
/// WAIT, starting from depolarized spins.
fn sampled_points(program: &Program, stride: usize) -> Result<Vec<Vec<f64>>> {
    let sys = SpinSystem::new(4, 2, 1e-5)?;
    let t = TimingParams::new(Extended::Infinite, Extended::Infinite)?;
    let report = execute_linear(program, &sys, &t)?;
    let traj = report.trajectory.expect("linear runs record WAIT states");
    Ok(traj
        .iter()
        .skip(stride - 1)
        .step_by(stride)
        .map(|p| p.biases.clone())
        .collect())
}

fn trajectory_check(
    name: &str,
    program: &Program,
    stride: usize,
    expected: &[Vec<f64>],
    note: Option<&str>,
) -> Result<GoldenCheck> {
    let points = sampled_points(program, stride)?;
    let pass = points == expected;
    Ok(GoldenCheck {
        name: name.into(),
        expected: fmt_points(expected),
        actual: fmt_points(&points),
        pass,
        note: note.map(String::from),
    })
}

/// The published worked examples, states written MSB first in the
/// sources and spin 1 first here.
fn trajectory_checks() -> Result<Vec<GoldenCheck>> {
    let checks = vec![
        // bare level-3 ladder, three iterations, on four spins
        trajectory_check(
            "fibonacci F(4,3) trajectory, m=3",
            &build_fibonacci(3, &MTable::from_levels(&[3]), 2)?,
            1,
            &[
                vec![1.0, 1.0, 0.0, 0.0],
                vec![1.0, 1.0, 1.0, 0.0],
                vec![1.0, 1.0, 1.5, 0.0],
                vec![1.0, 1.0, 1.75, 0.0],
            ],
            None,
        )?,

        trajectory_check(
            "fibonacci F(4,4) trajectory, m43=2 m44=2",
            &build_fibonacci(4, &MTable::from_levels(&[2, 2]), 2)?,
            3,
            &[
                vec![1.0, 1.0, 1.5, 0.0],
                vec![1.0, 1.0, 1.5, 1.25],
                vec![1.0, 1.0, 1.5, 1.875],
            ],
            None,
        )?,

        trajectory_check(
            "fibonacci F(4,4) trajectory, m43=3 m44=2",
            &build_fibonacci(4, &MTable::from_levels(&[3, 2]), 2)?,
            4,
            &[
                vec![1.0, 1.0, 1.75, 0.0],
                vec![1.0, 1.0, 1.75, 1.375],
                vec![1.0, 1.0, 1.75, 2.0625],
            ],
            None,
        )?,

        trajectory_check(
            "tribonacci T(4,4) trajectory, m43=2 m44=3",
            &build_tribonacci(4, &MTable::from_levels(&[2, 3]), 2)?,
            3,
            &[
                vec![1.0, 1.0, 1.5, 0.0],
                vec![1.0, 1.0, 1.5, 0.875],
                vec![1.0, 1.0, 1.5, 1.53125],
                vec![1.0, 1.0, 1.5, 2.0234375],
            ],
            None,
        )?,

        trajectory_check(
            "tribonacci T(4,4) trajectory, m43=3 m44=3",
            &build_tribonacci(4, &MTable::from_levels(&[3, 3]), 2)?,
            4,
            &[
                vec![1.0, 1.0, 1.75, 0.0],
                vec![1.0, 1.0, 1.75, 0.9375],
                vec![1.0, 1.0, 1.75, 1.640625],
                vec![1.0, 1.0, 1.75, 2.16796875],
            ],
            None,
        )?,

        trajectory_check(
            "new-fibonacci NF(4,4) trajectory, m43=2",
            &build_new_bonacci(4, 2, &NewBonacciSpec::Fixed(MTable::from_levels(&[2, 2])), 2)?,
            3,
            &[
                vec![1.0, 1.0, 1.5, 0.0],
                vec![1.0, 1.0, 1.5, 1.5],
                vec![1.0, 1.0, 1.5, 2.0],
            ],
            None,
        )?,

        trajectory_check(
            "new-fibonacci NF(4,4) trajectory, m43=3",
            &build_new_bonacci(4, 2, &NewBonacciSpec::Fixed(MTable::from_levels(&[3, 2])), 2)?,
            4,
            &[
                vec![1.0, 1.0, 1.75, 0.0],
                vec![1.0, 1.0, 1.75, 1.75],
                vec![1.0, 1.0, 1.75, 2.25],
            ],
            None,
        )?,

        trajectory_check(
            "new-tribonacci NT(4,4) trajectory, m43=2",
            &build_new_bonacci(4, 3, &NewBonacciSpec::Fixed(MTable::from_levels(&[2, 3])), 2)?,
            3,
            &[
                vec![1.0, 1.0, 1.5, 0.0],
                vec![1.0, 1.0, 1.5, 1.5],
                vec![1.0, 1.0, 1.5, 2.0],
                vec![1.0, 1.0, 1.5, 2.375],
            ],
            Some(
                "the published sequence prints 2.5 for the last target bias, but its own \
                 4-spin update on the preceding state {2, 1.5, 1, 1} gives 19/8 = 2.375; \
                 2.5 would need the third spin at bias 2, which the level-3 ladder only \
                 approaches asymptotically",
            ),
        )?,

        trajectory_check(
            "new-tribonacci NT(4,4) trajectory, m43=3",
            &build_new_bonacci(4, 3, &NewBonacciSpec::Fixed(MTable::from_levels(&[3, 3])), 2)?,
            4,
            &[
                vec![1.0, 1.0, 1.75, 0.0],
                vec![1.0, 1.0, 1.75, 1.75],
                vec![1.0, 1.0, 1.75, 2.25],
                vec![1.0, 1.0, 1.75, 2.625],
            ],
            Some(
                "the published final state carries misprinted donor entries; the target \
                 bias 2 5/8 is the reference value, and the donors here are the refreshed \
                 values the sequence's own convention implies",
            ),
        )?,
    ];

    Ok(checks)
}

fn practicable_checks() -> Result<Vec<GoldenCheck>> {
    let mut checks = Vec::new();

    let p = build_mpac_all(7, 2)?;
    let count = p.count_resets();
    checks.push(GoldenCheck {
        name: "practicable suite reset count (n=7, m=2)".into(),
        expected: "187".into(),
        actual: count.to_string(),
        pass: count == 187,
        note: None,
    });

    let sys = SpinSystem::new(7, 1, 1e-5)?;
    let t = TimingParams::new(Extended::Infinite, Extended::Infinite)?;
    let report = execute(&p, &sys, &t, &EngineConfig::exact())?;
    let want = ideal_mpac_factor(2, 3); // 1.75^3 = 5.359375
    let pass = (report.cooling_factor - want).abs() / want < IDEAL_FACTOR_REL_TOL;
    checks.push(GoldenCheck {
        name: "ideal practicable cooling factor (n=7, m=2)".into(),
        expected: format!("{want}"),
        actual: format!("{}", report.cooling_factor),
        pass,
        note: None,
    });

    Ok(checks)
}

fn finite_r_checks() -> Result<Vec<GoldenCheck>> {
    let p = build_mpac_all(7, 2)?;
    let sys = SpinSystem::new(7, 1, 1e-5)?;
    let mut checks = Vec::new();
    for (r, want) in [(1e4, 5.11), (1e3, 3.63), (1e2, 1.07)] {
        let t = TimingParams::new(Extended::Finite(r), Extended::Finite(5.0))?;
        let report = execute(&p, &sys, &t, &EngineConfig::exact())?;
        let got = report.cooling_factor;
        checks.push(GoldenCheck {
            name: format!("final cooling factor at R=10^{} (n=7, m=2, d=5)", r.log10() as u32),
            expected: format!("{want} +- {FINITE_R_TOL}"),
            actual: format!("{got:.6}"),
            pass: (got - want).abs() <= FINITE_R_TOL,
            note: None,
        });
    }
    Ok(checks)
}

fn analysis_checks() -> Result<Vec<GoldenCheck>> {
    let mut checks = Vec::new();

    let got = multiscan_snr(3, 4.0);
    let want = 4.0 * 3f64.sqrt();
    checks.push(GoldenCheck {
        name: "multiscan SNR gain, 3 scans with 4x reset device".into(),
        expected: format!("{want}"),
        actual: format!("{got}"),
        pass: (got - want).abs() < 1e-9,
        note: Some("the published discussion rounds 4*sqrt(3) = 6.93 up to about 7".into()),
    });

    let ms = multiscan_snr(187, 1.0);
    let ac = ideal_mpac_factor(2, 3);
    checks.push(GoldenCheck {
        name: "multiscan with 187 thermal scans beats ideal 7-spin cooling".into(),
        expected: format!("> {ac}"),
        actual: format!("{ms:.6}"),
        pass: ms > ac,
        note: None,
    });

    let table = ideal::delta_fibonacci_m_table(4, 0.5)?;
    checks.push(GoldenCheck {
        name: "delta-fibonacci iteration table (n=4, delta=1/2)".into(),
        expected: "[2, 2]".into(),
        actual: format!("{table:?}"),
        pass: table == vec![2, 2],
        note: None,
    });

    let sys = SpinSystem::new(3, 1, 1e-5)?;
    let t = TimingParams::new(Extended::Infinite, Extended::Infinite)?;
    let run = run_ppa_converged(&sys, &t, 1e-9, 10_000, PpaInit::Equilibrium)?;
    let factor = run.msb_factors.last().copied().unwrap_or(1.0);
    checks.push(GoldenCheck {
        name: "partner pairing asymptote (n=3)".into(),
        expected: "2 (within 2%)".into(),
        actual: format!("{factor:.6} after {} iterations", run.iterations),
        pass: run.converged && (factor - 2.0).abs() / 2.0 < PPA_REL_TOL,
        note: None,
    });

    Ok(checks)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn golden_suite_is_all_green() {
        let checks = run_golden_suite().unwrap();
        assert!(checks.len() >= 16);
        for c in &checks {
            assert!(c.pass, "{} failed: expected {}, got {}", c.name, c.expected, c.actual);
        }
    }

    #[test]
    fn known_discrepancies_carry_notes() {
        let checks = run_golden_suite().unwrap();
        let noted: Vec<&GoldenCheck> =
            checks.iter().filter(|c| c.name.starts_with("new-tribonacci")).collect();
        assert_eq!(noted.len(), 2);
        assert!(noted.iter().all(|c| c.note.is_some()));
    }

    #[test]
    fn state_formatting_is_msb_first() {
        assert_eq!(fmt_state(&[1.0, 1.0, 1.5, 2.375]), "{2.375, 1.5, 1, 1}");
    }
}
