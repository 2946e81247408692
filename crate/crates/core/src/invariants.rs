//! Property tests for the crate-wide structural invariants: bias-domain
//! closure, probability conservation, determinism of program streams,
//! contraction of the relaxation channel, sort idempotence, and the
//! agreement between the exact and linear engines in the small-bias
//! regime.

use proptest::collection::vec;
use proptest::prelude::*;

use crate::engine::{execute, EngineConfig, Extended, Mode, TimingParams};
use crate::oracle::DiagState;
use crate::programs::{
    build_fibonacci, build_new_bonacci, build_tribonacci, Algorithm, Instruction, MTable,
    NewBonacciSpec, Program,
};
use crate::spin::{BiasVector, SpinSystem};

/// One unitary step applicable to an n-spin state, instantiated so its
/// window fits.
#[derive(Clone, Debug)]
enum Op {
    Pt(u32, u32),
    C2(u32),
    C3(u32),
    C4(u32),
}

impl Op {
    fn apply_biases(&self, b: BiasVector) -> BiasVector {
        match *self {
            Op::Pt(src, dst) => b.pt(src, dst).unwrap(),
            Op::C2(k) => b.pt(k - 1, k).unwrap(),
            Op::C3(k) => b.compress3(k).unwrap(),
            Op::C4(k) => b.compress4(k).unwrap(),
        }
    }

    fn instruction(&self) -> Instruction {
        match *self {
            Op::Pt(src, dst) => Instruction::Pt { src, dst },
            Op::C2(k) => Instruction::C2 { k },
            Op::C3(k) => Instruction::C3 { k },
            Op::C4(k) => Instruction::C4 { k },
        }
    }
}

fn op_strategy(n: u32) -> impl Strategy<Value = Op> {
    prop_oneof![
        (1..=n, 1..=n)
            .prop_filter("distinct spins", |(a, b)| a != b)
            .prop_map(|(a, b)| Op::Pt(a, b)),
        (2..=n).prop_map(Op::C2),
        (3..=n).prop_map(Op::C3),
        (4..=n).prop_map(Op::C4),
    ]
}

fn biases(n: u32) -> impl Strategy<Value = Vec<f64>> {
    vec(-1.0..=1.0f64, n as usize..=n as usize)
}

proptest! {
    /// Gate updates never leave the physical bias domain [-1, 1].
    #[test]
    fn gates_preserve_bias_domain(
        n in 4u32..=6,
        seed in biases(6),
        ops in vec(op_strategy(4), 0..24),
    ) {
        let mut state = BiasVector::new(seed[..n as usize].to_vec()).unwrap();
        for op in &ops {
            state = op.apply_biases(state);
            for s in 1..=n {
                let v = state.get(s).unwrap();
                prop_assert!(v.is_finite() && (-1.0..=1.0).contains(&v), "spin {s} left [-1,1]: {v}");
            }
        }
    }

    /// The oracle conserves total probability through gates, sorts and
    /// relaxation, and never produces a negative weight.
    #[test]
    fn oracle_conserves_probability(
        weights in vec(0.01..1.0f64, 16..=16),
        ops in vec(op_strategy(4), 1..16),
        d in 0.1..50.0f64,
        r in 1.0..1e6f64,
    ) {
        let total: f64 = weights.iter().sum();
        let probs: Vec<f64> = weights.iter().map(|w| w / total).collect();
        let mut state = DiagState::new(4, probs).unwrap();
        let sys = SpinSystem::new(4, 1, 1e-5).unwrap();
        let t = TimingParams::new(Extended::Finite(r), Extended::Finite(d)).unwrap();
        for op in &ops {
            state.apply(op.instruction()).unwrap();
        }
        state.sort();
        state.relax(Extended::Finite(d), &t, &sys, true).unwrap();
        let probs = state.probs();
        let sum: f64 = probs.iter().sum();
        prop_assert!((sum - 1.0).abs() <= 1e-12, "probability sum drifted to {sum}");
        prop_assert!(probs.iter().all(|&p| p >= -1e-15), "negative weight in {probs:?}");
    }

    /// Identical builder parameters produce identical instruction streams,
    /// and a built program yields the same stream on every traversal.
    #[test]
    fn program_streams_are_deterministic(
        n in prop_oneof![Just(3u32), Just(5), Just(7)],
        m in 1u32..=3,
    ) {
        let algo = Algorithm::MpacAll { m };
        let a: Vec<Instruction> = algo.build(n).unwrap().iter().collect();
        let again = algo.build(n).unwrap();
        let b: Vec<Instruction> = again.iter().collect();
        let c: Vec<Instruction> = again.iter().collect();
        prop_assert_eq!(&a, &b);
        prop_assert_eq!(&b, &c);
    }

    /// Relaxation contracts toward equilibrium: no spin ends farther from
    /// its equilibrium bias than it started.
    #[test]
    fn relaxation_is_a_contraction(
        start in biases(5),
        d in 0.0..100.0f64,
        r in 0.5..1e7f64,
    ) {
        let sys = SpinSystem::new(5, 2, 1e-5).unwrap();
        let t = TimingParams::new(Extended::Finite(r), Extended::Finite(1.0)).unwrap();
        let before = BiasVector::new(start).unwrap();
        let after = before.relax(Extended::Finite(d), &t, &sys).unwrap();
        let eq = sys.equilibrium();
        for s in 1..=5 {
            let (b, a, e) = (before.get(s).unwrap(), after.get(s).unwrap(), eq.get(s).unwrap());
            prop_assert!(
                (a - e).abs() <= (b - e).abs() * (1.0 + 1e-15) + f64::EPSILON,
                "spin {s} moved away from equilibrium: |{b} - {e}| -> |{a} - {e}|"
            );
        }
    }

    /// Sorting the distribution is idempotent.
    #[test]
    fn sort_is_idempotent(weights in vec(0.01..1.0f64, 8..=8)) {
        let total: f64 = weights.iter().sum();
        let probs: Vec<f64> = weights.iter().map(|w| w / total).collect();
        let mut once = DiagState::new(3, probs).unwrap();
        once.sort();
        let mut twice = once.clone();
        twice.sort();
        prop_assert_eq!(once, twice);
    }

    /// The derived clocks recombine into the relaxation ratio:
    /// R = D * N_r * d up to rounding.
    #[test]
    fn derived_clocks_recombine(
        r in 1e-3..1e9f64,
        d in 1e-3..1e3f64,
        n_resets in 1u64..1_000_000,
    ) {
        let t = TimingParams::new(Extended::Finite(r), Extended::Finite(d)).unwrap();
        let (q, big_d) = match (t.q(), t.clock_d(n_resets)) {
            (Extended::Finite(q), Extended::Finite(big_d)) => (q, big_d),
            other => return Err(TestCaseError::fail(format!("unexpected infinite clock: {other:?}"))),
        };
        prop_assert!((q - r / d).abs() <= q.abs() * 1e-14);
        let recombined = big_d * n_resets as f64 * d;
        prop_assert!(
            (recombined - r).abs() <= r * 1e-12,
            "D * N_r * d = {recombined} differs from R = {r}"
        );
    }
}

/// The exact engine agrees with the linear engine to high relative accuracy
/// at eps0 = 1e-5 on the reference ladder programs (both under the ideal
/// gate model, ideal timing, depolarized start): corrections enter at
/// O(eps0^2).
#[test]
fn exact_and_linear_engines_agree_in_small_bias_regime() {
    let programs: Vec<Program> = vec![
        build_fibonacci(4, &MTable::from_levels(&[3, 2]), 2).unwrap(),
        build_tribonacci(4, &MTable::from_levels(&[3, 3]), 2).unwrap(),
        build_new_bonacci(4, 3, &NewBonacciSpec::Fixed(MTable::from_levels(&[2, 3])), 2).unwrap(),
    ];
    let eps0 = 1e-5;
    let sys = SpinSystem::new(4, 2, eps0).unwrap();
    let t = TimingParams::new(Extended::Infinite, Extended::Infinite).unwrap();
    let linear_cfg = EngineConfig::linear();
    let exact_cfg = EngineConfig {
        mode: Mode::Exact,
        ..EngineConfig::linear()
    };
    for p in &programs {
        let lin = execute(p, &sys, &t, &linear_cfg).unwrap();
        let exact = execute(p, &sys, &t, &exact_cfg).unwrap();
        let lt = lin.trajectory.as_ref().unwrap();
        let et = exact.trajectory.as_ref().unwrap();
        assert_eq!(lt.len(), et.len());
        for (l, e) in lt.iter().zip(et) {
            for s in 0..4 {
                let lv = l.biases[s];
                let ev = e.biases[s] / eps0;
                if lv == 0.0 {
                    assert_eq!(ev, 0.0, "{}: zero point diverged", p.meta().name);
                } else {
                    let rel = ((ev - lv) / lv).abs();
                    assert!(
                        rel <= 1e-6,
                        "{} spin {} at step {}: linear {lv} vs exact {ev}",
                        p.meta().name,
                        s + 1,
                        l.step
                    );
                }
            }
        }
    }
}
