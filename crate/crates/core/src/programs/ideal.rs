//! Ideal linear-regime bias recursion, used while *building* programs.
//!
//! The recursive cooling algorithms make decisions (how many iterations
//! per level, which compression gate) based on the bias each level would
//! reach under ideal resets. Those values follow a tiny scalar recursion
//! per level, so builders run the recursion directly instead of invoking
//! the full engine: in units of the equilibrium bias, a refreshed donor
//! holds s_{k'}, and the target evolves as
//!   2BC: x <- g_{k-1}
//!   3BC: x <- (x + g_{k-1} + g_{k-2}) / 2
//!   4BC: x <- (3x + g_{k-1} + g_{k-2} + g_{k-3}) / 4
//! with g_1 = g_2 = 1 (reset-fed bits).

use crate::analysis::bonacci_sequence;
use crate::error::{Error, Result};

/// Safety cap on goal-chasing iterations for deltas where no analytic
/// bound is available.
pub(crate) const MAX_GOAL_ITERATIONS: u32 = 10_000;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub(crate) enum GateKind {
    C2,
    C3,
    C4,
}

/// Per-level gate schedule plus the ideal bias each level ends at.
#[derive(Debug, Clone)]
pub(crate) struct LevelPlan {
    /// `gates[k - 3]` is the gate sequence for recursion level k.
    pub gates: Vec<Vec<GateKind>>,
    /// `values[k]` is the ideal final bias of bit k in units of eps0
    /// (indices 0..=n, entries 1 and 2 fixed at 1).
    pub values: Vec<f64>,
}

/// Goal bias for bit k: S_k (1 - delta^{n-k+1}) in units of eps0, with
/// S the generalized bonacci sequence of the given order.
pub(crate) fn goal_value(order: u32, n: u32, k: u32, delta: f64) -> f64 {
    bonacci_sequence(order, k) * (1.0 - delta.powi((n - k + 1) as i32))
}

fn check_delta(delta: f64) -> Result<()> {
    if !(delta > 0.0 && delta < 1.0) {
        return Err(Error::InvalidDelta { value: delta });
    }
    Ok(())
}

fn base_values(n: u32) -> Vec<f64> {
    let mut values = vec![0.0; n as usize + 1];
    values[1] = 1.0;
    if n >= 2 {
        values[2] = 1.0;
    }
    values
}

/// Iteration counts m_{n,k} for delta-Fibonacci, one entry per level
/// k = 3..=n. For delta = 1/2 the count is provably bounded by n-k+2 and
/// that bound is enforced; other deltas fall back to the safety cap.
pub(crate) fn delta_fibonacci_m_table(n: u32, delta: f64) -> Result<Vec<u32>> {
    check_delta(delta)?;
    let mut values = base_values(n);
    let mut table = Vec::with_capacity((n - 2) as usize);
    for k in 3..=n {
        let goal = goal_value(2, n, k, delta);
        let bound =
            if delta == 0.5 { n - k + 2 } else { MAX_GOAL_ITERATIONS };
        let g1 = values[(k - 1) as usize];
        let g2 = values[(k - 2) as usize];
        let mut x = 0.0;
        let mut m = 0u32;
        while x < goal {
            if m == bound {
                return Err(Error::GoalUnreachable { n, k, bound });
            }
            x = 0.5 * (x + g1 + g2);
            m += 1;
        }
        values[k as usize] = x;
        table.push(m);
    }
    Ok(table)
}

/// Greedy gate choice: the gate (from the order's allowed set) whose
/// linear update maximizes the target bit's bias; ties break toward the
/// smaller gate, which disturbs fewer spins.
fn greedy_step(x: f64, k: u32, order: u32, values: &[f64]) -> (GateKind, f64) {
    let g1 = values[(k - 1) as usize];
    let g2 = values[(k - 2) as usize];
    let mut best = (GateKind::C2, g1);
    let v3 = 0.5 * (x + g1 + g2);
    if v3 > best.1 {
        best = (GateKind::C3, v3);
    }
    if order >= 3 && k >= 4 {
        let g3 = values[(k - 3) as usize];
        let v4 = 0.25 * (3.0 * x + g1 + g2 + g3);
        if v4 > best.1 {
            best = (GateKind::C4, v4);
        }
    }
    best
}

/// Greedy plan with a fixed iteration count per level (`ms[k - 3]`).
pub(crate) fn plan_new_bonacci_fixed(n: u32, order: u32, ms: &[u32]) -> Result<LevelPlan> {
    check_order(order)?;
    let mut values = base_values(n);
    let mut gates = Vec::with_capacity(ms.len());
    for k in 3..=n {
        let m = ms[(k - 3) as usize];
        let mut level = Vec::with_capacity(m as usize);
        let mut x = 0.0;
        for _ in 0..m {
            let (gate, v) = greedy_step(x, k, order, &values);
            level.push(gate);
            x = v;
        }
        values[k as usize] = x;
        gates.push(level);
    }
    Ok(LevelPlan { gates, values })
}

/// Greedy plan chasing the order's bonacci goal at each level; returns
/// the plan and the iteration counts it settled on.
pub(crate) fn plan_new_bonacci_delta(
    n: u32,
    order: u32,
    delta: f64,
) -> Result<(LevelPlan, Vec<u32>)> {
    check_order(order)?;
    check_delta(delta)?;
    let mut values = base_values(n);
    let mut gates = Vec::new();
    let mut table = Vec::new();
    for k in 3..=n {
        let goal = goal_value(order, n, k, delta);
        let mut level = Vec::new();
        let mut x = 0.0;
        while x < goal {
            if level.len() as u32 == MAX_GOAL_ITERATIONS {
                return Err(Error::GoalUnreachable { n, k, bound: MAX_GOAL_ITERATIONS });
            }
            let (gate, v) = greedy_step(x, k, order, &values);
            level.push(gate);
            x = v;
        }
        table.push(level.len() as u32);
        values[k as usize] = x;
        gates.push(level);
    }
    Ok((LevelPlan { gates, values }, table))
}

fn check_order(order: u32) -> Result<()> {
    if !(2..=4).contains(&order) {
        return Err(Error::InvalidOrder { order });
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use GateKind::*;

    #[test]
    fn delta_half_goals_for_four_spins() {
        // MSB-first: {1.5, 1.5, 7/8, 15/16}
        assert_eq!(goal_value(2, 4, 4, 0.5), 1.5);
        assert_eq!(goal_value(2, 4, 3, 0.5), 1.5);
        assert_eq!(goal_value(2, 4, 2, 0.5), 0.875);
        assert_eq!(goal_value(2, 4, 1, 0.5), 0.9375);
        // Tribonacci variant: {2, 1.5, 7/8, 15/16}
        assert_eq!(goal_value(3, 4, 4, 0.5), 2.0);
        assert_eq!(goal_value(3, 4, 3, 0.5), 1.5);
    }

    #[test]
    fn delta_fibonacci_m_table_n4() {
        let table = delta_fibonacci_m_table(4, 0.5).unwrap();
        assert_eq!(table, vec![2, 2]);
    }

    #[test]
    fn delta_fibonacci_respects_half_bound() {
        // bound n-k+2 holds for every level over a range of sizes
        for n in 3..=10 {
            let table = delta_fibonacci_m_table(n, 0.5).unwrap();
            for (i, &m) in table.iter().enumerate() {
                let k = i as u32 + 3;
                assert!(m <= n - k + 2, "n={n} k={k} m={m}");
            }
        }
    }

    #[test]
    fn delta_fibonacci_rejects_bad_delta() {
        assert!(delta_fibonacci_m_table(4, 0.0).is_err());
        assert!(delta_fibonacci_m_table(4, 1.0).is_err());
        assert!(delta_fibonacci_m_table(4, -0.25).is_err());
    }

    #[test]
    fn greedy_reproduces_new_fibonacci_level_sequences() {
        // n=4, m_{4,3}=2, m_{4,4}=2: level 3 ties toward 2BC then picks
        // 3BC; level 4 starts with 2BC (donor 1.5 beats compression 1.25)
        let plan = plan_new_bonacci_fixed(4, 2, &[2, 2]).unwrap();
        assert_eq!(plan.gates[0], vec![C2, C3]);
        assert_eq!(plan.gates[1], vec![C2, C3]);
        assert_eq!(plan.values[3], 1.5);
        assert_eq!(plan.values[4], 2.0);
    }

    #[test]
    fn greedy_new_tribonacci_gate_progression() {
        // m_{4,3}=2, three iterations at level 4: 2BC, 3BC (tie with 4BC,
        // smaller gate wins), then 4BC
        let plan = plan_new_bonacci_fixed(4, 3, &[2, 3]).unwrap();
        assert_eq!(plan.gates[1], vec![C2, C3, C4]);
        assert_eq!(plan.values[4], 2.375);

        // m_{4,3}=3 variant ends at 2 5/8
        let plan = plan_new_bonacci_fixed(4, 3, &[3, 3]).unwrap();
        assert_eq!(plan.gates[0], vec![C2, C3, C3]);
        assert_eq!(plan.values[3], 1.75);
        assert_eq!(plan.gates[1], vec![C2, C3, C4]);
        assert_eq!(plan.values[4], 2.625);
    }

    #[test]
    fn greedy_delta_chase_reaches_tribonacci_goals() {
        let (plan, table) = plan_new_bonacci_delta(4, 3, 0.5).unwrap();
        assert!(plan.values[3] >= goal_value(3, 4, 3, 0.5));
        assert!(plan.values[4] >= goal_value(3, 4, 4, 0.5));
        // goal is reached strictly before a 4BC is ever needed at level 4
        assert!(!table.is_empty());
    }

    #[test]
    fn invalid_order_is_rejected() {
        assert!(matches!(
            plan_new_bonacci_fixed(4, 5, &[1, 1]),
            Err(Error::InvalidOrder { order: 5 })
        ));
        assert!(matches!(
            plan_new_bonacci_fixed(4, 1, &[1, 1]),
            Err(Error::InvalidOrder { order: 1 })
        ));
    }
}
