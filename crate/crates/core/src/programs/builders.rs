//! Constructors for the cooling algorithms.
//!
//! All recursions are written in the source convention "rightmost
//! operation executes first", so `[A B]^m C` expands to C, then m
//! repetitions of (B, A). Recursion bodies are shared arena nodes; the
//! emitted stream length can grow exponentially in the recursion depth
//! while the arena stays linear.

use serde::{Deserialize, Serialize};
use serde_json::json;
use std::collections::BTreeMap;

use super::ideal::{self, GateKind};
use super::{Instruction, NodeId, Program, ProgramBuilder, ProgramMeta};
use crate::error::{Error, Result};

/// Iteration counts m_{n,k} by recursion level k, with an optional
/// uniform default for levels not listed.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MTable {
    entries: BTreeMap<u32, u32>,
    default: Option<u32>,
}

impl MTable {
    /// Same `m` for every level.
    pub fn uniform(m: u32) -> Self {
        MTable { entries: BTreeMap::new(), default: Some(m) }
    }

    /// Explicit counts for consecutive levels starting at k = 3.
    pub fn from_levels(ms: &[u32]) -> Self {
        let entries = ms.iter().enumerate().map(|(i, &m)| (i as u32 + 3, m)).collect();
        MTable { entries, default: None }
    }

    pub fn set(&mut self, k: u32, m: u32) {
        self.entries.insert(k, m);
    }

    pub fn get(&self, n: u32, k: u32) -> Result<u32> {
        self.entries
            .get(&k)
            .copied()
            .or(self.default)
            .ok_or(Error::MissingMTableEntry { n, k })
    }

    /// Counts for levels 3..=n as a plain vector.
    fn resolve(&self, n: u32) -> Result<Vec<u32>> {
        (3..=n).map(|k| self.get(n, k)).collect()
    }
}

/// How a new-bonacci builder decides its per-level iteration counts.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum NewBonacciSpec {
    /// Fixed counts from a table.
    Fixed(MTable),
    /// Chase the bonacci goal S_k(1 - delta^{n-k+1}).
    Delta(f64),
}

/// A buildable algorithm plus its parameters; the unit of dispatch for
/// the sweep driver and the CLI.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum Algorithm {
    Mpac { m: u32 },
    MpacAll { m: u32 },
    Fibonacci { m_table: MTable, reset_spins: u32 },
    DeltaFibonacci { delta: f64, reset_spins: u32 },
    Tribonacci { m_table: MTable, reset_spins: u32 },
    NewBonacci { order: u32, spec: NewBonacciSpec, reset_spins: u32 },
}

impl Algorithm {
    pub fn build(&self, n: u32) -> Result<Program> {
        match self {
            Algorithm::Mpac { m } => build_mpac(n, *m),
            Algorithm::MpacAll { m } => build_mpac_all(n, *m),
            Algorithm::Fibonacci { m_table, reset_spins } => {
                build_fibonacci(n, m_table, *reset_spins)
            }
            Algorithm::DeltaFibonacci { delta, reset_spins } => {
                build_delta_fibonacci(n, *delta, *reset_spins)
            }
            Algorithm::Tribonacci { m_table, reset_spins } => {
                build_tribonacci(n, m_table, *reset_spins)
            }
            Algorithm::NewBonacci { order, spec, reset_spins } => {
                build_new_bonacci(n, *order, spec, *reset_spins)
            }
        }
    }

    /// Number of reset spins the built program assumes.
    pub fn reset_spin_count(&self) -> u32 {
        match self {
            Algorithm::Mpac { .. } | Algorithm::MpacAll { .. } => 1,
            Algorithm::Fibonacci { reset_spins, .. }
            | Algorithm::DeltaFibonacci { reset_spins, .. }
            | Algorithm::Tribonacci { reset_spins, .. }
            | Algorithm::NewBonacci { reset_spins, .. } => *reset_spins,
        }
    }
}

fn check_mpac_args(n: u32, m: u32) -> Result<u32> {
    if n.is_multiple_of(2) {
        return Err(Error::InvalidSpinCount { n, reason: "mPAC needs an odd spin count" });
    }
    if m == 0 {
        return Err(Error::NonPositiveParameter { name: "m", value: 0.0 });
    }
    Ok((n - 1) / 2)
}

/// Shared arena construction of the M_j levels; `levels[j]` is M_j(2j+1).
fn mpac_levels(b: &mut ProgramBuilder, jmax: u32, m: u32) -> Vec<NodeId> {
    let mut levels = vec![b.instr(Instruction::Wait)];
    for j in 1..=jmax {
        let k = 2 * j + 1;
        let sub = levels[(j - 1) as usize];
        let pt_top = b.instr(Instruction::Pt { src: k - 2, dst: k });
        let pt_mid = b.instr(Instruction::Pt { src: k - 2, dst: k - 1 });
        let gate = b.instr(Instruction::C3 { k });
        let iteration = b.seq(&[sub, pt_mid, sub, gate]);
        let reps = b.repeat(m, iteration);
        levels.push(b.seq(&[sub, pt_top, reps]));
    }
    levels
}

/// mPAC cooling of the most significant bit only:
/// M_j(k) = [3BC(k) M_{j-1}(k-2) PT(k-2 -> k-1) M_{j-1}(k-2)]^m
///          PT(k-2 -> k) M_{j-1}(k-2), with M_0(1) a single WAIT.
/// Spin 1 is the reset spin.
pub fn build_mpac(n: u32, m: u32) -> Result<Program> {
    let jmax = check_mpac_args(n, m)?;
    let mut b = ProgramBuilder::new();
    let levels = mpac_levels(&mut b, jmax, m);
    let meta = ProgramMeta { name: "mpac".into(), n, params: json!({ "m": m, "j": jmax }) };
    Ok(b.finish(levels[jmax as usize], meta))
}

/// mPAC cooling of every bit:
/// M_all(k) = M_all(k-2) PT(k-2 -> k-1) M_{j-1}(k-2) M_j(k),
/// M_all(1) = WAIT.
pub fn build_mpac_all(n: u32, m: u32) -> Result<Program> {
    let jmax = check_mpac_args(n, m)?;
    let mut b = ProgramBuilder::new();
    let levels = mpac_levels(&mut b, jmax, m);
    let mut all = levels[0];
    for j in 1..=jmax {
        let k = 2 * j + 1;
        let pt = b.instr(Instruction::Pt { src: k - 2, dst: k - 1 });
        all = b.seq(&[levels[j as usize], levels[(j - 1) as usize], pt, all]);
    }
    let meta = ProgramMeta { name: "mpac-all".into(), n, params: json!({ "m": m, "j": jmax }) };
    Ok(b.finish(all, meta))
}

fn check_bonacci_args(n: u32, reset_spins: u32) -> Result<()> {
    if n < 3 {
        return Err(Error::InvalidSpinCount {
            n,
            reason: "bonacci algorithms need at least three spins",
        });
    }
    if reset_spins != 1 && reset_spins != 2 {
        return Err(Error::InvalidResetCount { count: reset_spins });
    }
    Ok(())
}

/// Base of every bonacci recursion: F(n,2). With two reset spins a WAIT
/// refreshes both LSBs at once; with one, the fresh bias is swapped up
/// and the reset spin refreshed again, doubling the WAIT count.
fn bonacci_base(b: &mut ProgramBuilder, reset_spins: u32) -> NodeId {
    let w = b.instr(Instruction::Wait);
    if reset_spins == 2 {
        w
    } else {
        let swap = b.instr(Instruction::C2 { k: 2 });
        b.seq(&[w, swap, w])
    }
}

/// One recursion level k on top of `prev` = F(n,k-1):
/// [F(n,k-1) GATE(k)]^m F(n,k-1) executes as prev, then m x (gate, prev).
fn bonacci_level(b: &mut ProgramBuilder, prev: NodeId, gates: &[Instruction]) -> NodeId {
    let mut parts = vec![prev];
    for &g in gates {
        let gate = b.instr(g);
        parts.push(b.seq(&[gate, prev]));
    }
    b.seq(&parts)
}

fn uniform_gate_level(
    b: &mut ProgramBuilder,
    prev: NodeId,
    gate: Instruction,
    m: u32,
) -> NodeId {
    let g = b.instr(gate);
    let pair = b.seq(&[g, prev]);
    let reps = b.repeat(m, pair);
    b.seq(&[prev, reps])
}

/// Fibonacci AC: F(n,k) = [F(n,k-1) 3BC(k)]^{m_{n,k}} F(n,k-1).
pub fn build_fibonacci(n: u32, m_table: &MTable, reset_spins: u32) -> Result<Program> {
    check_bonacci_args(n, reset_spins)?;
    let ms = m_table.resolve(n)?;
    let mut b = ProgramBuilder::new();
    let mut prev = bonacci_base(&mut b, reset_spins);
    for k in 3..=n {
        prev = uniform_gate_level(&mut b, prev, Instruction::C3 { k }, ms[(k - 3) as usize]);
    }
    let meta = ProgramMeta {
        name: "fibonacci".into(),
        n,
        params: json!({ "m_table": ms, "reset_spins": reset_spins }),
    };
    Ok(b.finish(prev, meta))
}

/// delta-Fibonacci: iteration counts are chosen per level so bit k
/// reaches the goal F_k(1 - delta^{n-k+1}), then the plain Fibonacci
/// recursion is emitted with those counts.
pub fn build_delta_fibonacci(n: u32, delta: f64, reset_spins: u32) -> Result<Program> {
    check_bonacci_args(n, reset_spins)?;
    let ms = ideal::delta_fibonacci_m_table(n, delta)?;
    let mut b = ProgramBuilder::new();
    let mut prev = bonacci_base(&mut b, reset_spins);
    for k in 3..=n {
        prev = uniform_gate_level(&mut b, prev, Instruction::C3 { k }, ms[(k - 3) as usize]);
    }
    let meta = ProgramMeta {
        name: "delta-fibonacci".into(),
        n,
        params: json!({ "delta": delta, "m_table": ms, "reset_spins": reset_spins }),
    };
    Ok(b.finish(prev, meta))
}

/// Tribonacci AC: T(n,k) = [T(n,k-1) 4BC(k)]^{m_{n,k}} T(n,k-1) for
/// k >= 4, with T(n,3) = F(n,3).
pub fn build_tribonacci(n: u32, m_table: &MTable, reset_spins: u32) -> Result<Program> {
    check_bonacci_args(n, reset_spins)?;
    let ms = m_table.resolve(n)?;
    let mut b = ProgramBuilder::new();
    let mut prev = bonacci_base(&mut b, reset_spins);
    for k in 3..=n {
        let gate =
            if k == 3 { Instruction::C3 { k } } else { Instruction::C4 { k } };
        prev = uniform_gate_level(&mut b, prev, gate, ms[(k - 3) as usize]);
    }
    let meta = ProgramMeta {
        name: "tribonacci".into(),
        n,
        params: json!({ "m_table": ms, "reset_spins": reset_spins }),
    };
    Ok(b.finish(prev, meta))
}

/// new-bonacci family: per iteration, the compression gate is chosen
/// greedily to maximize the target bit's linear bias. Order 2 allows
/// {2BC, 3BC} (new-Fibonacci); orders 3 and 4 also allow 4BC, the
/// largest gate in the vocabulary.
pub fn build_new_bonacci(
    n: u32,
    order: u32,
    spec: &NewBonacciSpec,
    reset_spins: u32,
) -> Result<Program> {
    check_bonacci_args(n, reset_spins)?;
    let (plan, ms) = match spec {
        NewBonacciSpec::Fixed(table) => {
            let ms = table.resolve(n)?;
            (ideal::plan_new_bonacci_fixed(n, order, &ms)?, ms)
        }
        NewBonacciSpec::Delta(delta) => {
            let (plan, ms) = ideal::plan_new_bonacci_delta(n, order, *delta)?;
            (plan, ms)
        }
    };
    let mut b = ProgramBuilder::new();
    let mut prev = bonacci_base(&mut b, reset_spins);
    for k in 3..=n {
        let gates: Vec<Instruction> = plan.gates[(k - 3) as usize]
            .iter()
            .map(|g| match g {
                GateKind::C2 => Instruction::C2 { k },
                GateKind::C3 => Instruction::C3 { k },
                GateKind::C4 => Instruction::C4 { k },
            })
            .collect();
        prev = bonacci_level(&mut b, prev, &gates);
    }
    let name = match order {
        2 => "new-fibonacci",
        3 => "new-tribonacci",
        _ => "new-4-bonacci",
    };
    // predicted per-spin biases in units of eps0, useful when checking a
    // run against the plan
    let ideal_biases = &plan.values[1..];
    let params = match spec {
        NewBonacciSpec::Fixed(_) => json!({
            "order": order, "m_table": ms, "reset_spins": reset_spins,
            "ideal_biases": ideal_biases,
        }),
        NewBonacciSpec::Delta(d) => json!({
            "order": order, "delta": d, "m_table": ms, "reset_spins": reset_spins,
            "ideal_biases": ideal_biases,
        }),
    };
    Ok(b.finish(prev, ProgramMeta { name: name.into(), n, params }))
}

#[cfg(test)]
mod tests {
    use super::*;
    use Instruction::*;

    #[test]
    fn mpac_3_2_expands_to_the_published_stream() {
        let p = build_mpac(3, 2).unwrap();
        let stream: Vec<_> = p.iter().collect();
        assert_eq!(
            stream,
            vec![
                Wait,
                Pt { src: 1, dst: 3 },
                Wait,
                Pt { src: 1, dst: 2 },
                Wait,
                C3 { k: 3 },
                Wait,
                Pt { src: 1, dst: 2 },
                Wait,
                C3 { k: 3 },
            ]
        );
        assert_eq!(p.count_resets(), 5);
    }

    #[test]
    fn mpac_base_case_is_a_single_wait() {
        for m in 1..4 {
            let p = build_mpac(1, m).unwrap();
            assert_eq!(p.iter().collect::<Vec<_>>(), vec![Wait]);
        }
    }

    #[test]
    fn mpac_reset_counts_follow_five_to_the_j() {
        // N_r(M_j) = 5^j for m = 2, checked against actual streams where
        // feasible and against the DP count throughout
        for j in 1..=6u32 {
            let n = 2 * j + 1;
            let p = build_mpac(n, 2).unwrap();
            assert_eq!(p.count_resets(), 5u64.pow(j), "j={j}");
        }
        let p = build_mpac(7, 2).unwrap();
        assert_eq!(p.count_resets(), 125);
        assert_eq!(p.iter().filter(|i| matches!(i, Wait)).count(), 125);
    }

    #[test]
    fn mpac_all_reset_counts() {
        assert_eq!(build_mpac_all(1, 2).unwrap().count_resets(), 1);
        assert_eq!(build_mpac_all(3, 2).unwrap().count_resets(), 7);
        assert_eq!(build_mpac_all(5, 2).unwrap().count_resets(), 37);
        assert_eq!(build_mpac_all(7, 2).unwrap().count_resets(), 187);
        // recurrence N_all(j) = N_all(j-1) + 5^{j-1} + 5^j for m = 2
        let mut expected = 1u64;
        for j in 1..=6u32 {
            expected += 5u64.pow(j - 1) + 5u64.pow(j);
            let p = build_mpac_all(2 * j + 1, 2).unwrap();
            assert_eq!(p.count_resets(), expected, "j={j}");
        }
    }

    #[test]
    fn mpac_rejects_even_n_and_zero_m() {
        assert!(build_mpac(4, 2).is_err());
        assert!(build_mpac_all(6, 2).is_err());
        assert!(build_mpac(3, 0).is_err());
    }

    #[test]
    fn fibonacci_one_reset_spin_doubles_waits() {
        let table = MTable::uniform(2);
        for n in 3..=6 {
            let two = build_fibonacci(n, &table, 2).unwrap();
            let one = build_fibonacci(n, &table, 1).unwrap();
            assert_eq!(one.count_resets(), 2 * two.count_resets(), "n={n}");
        }
    }

    #[test]
    fn fibonacci_with_zero_iterations_collapses_to_base() {
        let p = build_fibonacci(5, &MTable::uniform(0), 2).unwrap();
        assert_eq!(p.iter().collect::<Vec<_>>(), vec![Wait]);
        let p = build_fibonacci(5, &MTable::uniform(0), 1).unwrap();
        assert_eq!(p.iter().collect::<Vec<_>>(), vec![Wait, C2 { k: 2 }, Wait]);
    }

    #[test]
    fn fibonacci_missing_table_entry_errors() {
        let mut table = MTable::from_levels(&[2]);
        assert!(matches!(
            build_fibonacci(4, &table, 2),
            Err(Error::MissingMTableEntry { n: 4, k: 4 })
        ));
        table.set(4, 2);
        assert!(build_fibonacci(4, &table, 2).is_ok());
    }

    #[test]
    fn fibonacci_level_structure() {
        // F(4,3) with m=2: W, then 2 x (3BC(3), W); level 4 wraps that
        let p = build_fibonacci(3, &MTable::from_levels(&[2]), 2).unwrap();
        assert_eq!(
            p.iter().collect::<Vec<_>>(),
            vec![Wait, C3 { k: 3 }, Wait, C3 { k: 3 }, Wait]
        );
    }

    #[test]
    fn tribonacci_uses_c4_above_level_three() {
        let p = build_tribonacci(4, &MTable::from_levels(&[2, 2]), 2).unwrap();
        let stream: Vec<_> = p.iter().collect();
        assert!(stream.contains(&C4 { k: 4 }));
        assert!(stream.contains(&C3 { k: 3 }));
        assert!(!stream.contains(&C4 { k: 3 }));
    }

    #[test]
    fn tribonacci_with_zero_top_iterations_equals_level_three_fibonacci() {
        let trib = build_tribonacci(4, &MTable::from_levels(&[2, 0]), 2).unwrap();
        let fib = build_fibonacci(3, &MTable::from_levels(&[2]), 2).unwrap();
        assert_eq!(trib.iter().collect::<Vec<_>>(), fib.iter().collect::<Vec<_>>());
    }

    #[test]
    fn delta_fibonacci_half_picks_m_2_2_for_n4() {
        let p = build_delta_fibonacci(4, 0.5, 2).unwrap();
        assert_eq!(p.meta().params["m_table"], serde_json::json!([2, 2]));
        // same WAIT count as the explicit table
        let q = build_fibonacci(4, &MTable::from_levels(&[2, 2]), 2).unwrap();
        assert_eq!(p.count_resets(), q.count_resets());
    }

    #[test]
    fn new_fibonacci_swaps_in_c2_on_first_level_iterations() {
        let spec = NewBonacciSpec::Fixed(MTable::from_levels(&[2, 2]));
        let p = build_new_bonacci(4, 2, &spec, 2).unwrap();
        let stream: Vec<_> = p.iter().collect();
        // level 4's first gate is 2BC(4) (the donor's 1.5 beats 1.25)
        let first_level4 = stream
            .iter()
            .find(|i| matches!(i, C2 { k: 4 } | C3 { k: 4 }))
            .copied();
        assert_eq!(first_level4, Some(C2 { k: 4 }));
        assert!(stream.contains(&C3 { k: 4 }));
        assert!(!stream.contains(&C4 { k: 4 }));
    }

    #[test]
    fn new_tribonacci_emits_the_published_gate_order() {
        let spec = NewBonacciSpec::Fixed(MTable::from_levels(&[2, 3]));
        let p = build_new_bonacci(4, 3, &spec, 2).unwrap();
        let level4: Vec<_> = p
            .iter()
            .filter(|i| matches!(i, C2 { k: 4 } | C3 { k: 4 } | C4 { k: 4 }))
            .collect();
        assert_eq!(level4, vec![C2 { k: 4 }, C3 { k: 4 }, C4 { k: 4 }]);
    }

    #[test]
    fn new_bonacci_rejects_bad_order() {
        let spec = NewBonacciSpec::Fixed(MTable::uniform(2));
        assert!(build_new_bonacci(4, 1, &spec, 2).is_err());
        assert!(build_new_bonacci(4, 5, &spec, 2).is_err());
    }

    #[test]
    fn bonacci_rejects_tiny_systems_and_bad_reset_counts() {
        let table = MTable::uniform(2);
        assert!(build_fibonacci(2, &table, 2).is_err());
        assert!(build_fibonacci(4, &table, 0).is_err());
        assert!(build_fibonacci(4, &table, 3).is_err());
    }

    #[test]
    fn algorithm_dispatch_matches_direct_builders() {
        let a = Algorithm::MpacAll { m: 2 };
        assert_eq!(a.build(7).unwrap().count_resets(), 187);
        assert_eq!(a.reset_spin_count(), 1);
        let f = Algorithm::Fibonacci { m_table: MTable::uniform(2), reset_spins: 2 };
        assert_eq!(f.reset_spin_count(), 2);
        assert!(f.build(4).is_ok());
    }

    #[test]
    fn meta_reports_builder_parameters() {
        let p = build_mpac_all(7, 2).unwrap();
        assert_eq!(p.meta().name, "mpac-all");
        assert_eq!(p.meta().n, 7);
        assert_eq!(p.meta().params["m"], 2);
        assert_eq!(p.meta().params["j"], 3);
    }
}
