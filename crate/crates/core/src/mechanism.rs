//! The per-period mechanism: an efficient allocation plus Clarke-pivot
//! (VCG) delays.
//!
//! Agent `i` is charged the welfare loss it imposes on the others:
//! `d_i = W(N \ {i}) - sum_{l != i} v_l(A*)`, where `W(N \ {i})` is the optimal
//! welfare without `i`. Delays are computed from `n + 1` independent solves
//! (one full, one per excluded agent) and are raw reals in periods.

use crate::error::Result;
use crate::exec::Execution;
use crate::oracle;
use crate::solver;
use crate::types::{welfare_unchecked, Allocation, Assignment, Instance, Outcome};

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct MechanismConfig {
    /// Use the brute-force enumerator instead of the flow solver (small
    /// instances only).
    pub use_oracle: bool,
    /// How the exclusion solves are scheduled.
    pub execution: Execution,
}

impl MechanismConfig {
    pub fn sequential() -> Self {
        MechanismConfig {
            use_oracle: false,
            execution: Execution::Sequential,
        }
    }

    pub fn oracle() -> Self {
        MechanismConfig {
            use_oracle: true,
            execution: Execution::Sequential,
        }
    }
}

fn allocate(instance: &Instance, config: &MechanismConfig) -> Result<Allocation> {
    if config.use_oracle {
        Ok(oracle::solve_exact(instance)?.0)
    } else {
        Ok(solver::solve(instance))
    }
}

/// Sum of the others' valuations under `allocation`, in agent order.
fn others_value(instance: &Instance, allocation: &Allocation, agent: usize) -> f64 {
    let mut total = 0.0;
    for (l, a) in allocation.assignments().iter().enumerate() {
        if l == agent {
            continue;
        }
        if let Assignment::Slot(j) = *a {
            total += instance.valuation(l, j);
        }
    }
    total
}

fn excluded_welfare(instance: &Instance, agent: usize, config: &MechanismConfig) -> Result<f64> {
    if config.use_oracle {
        oracle::solve_exact_excluding(instance, agent)
    } else {
        let without = solver::solve_excluding(instance, agent)?;
        Ok(welfare_unchecked(instance, &without))
    }
}

fn clarke_delay(excluded: f64, others: f64) -> f64 {
    let d = excluded - others;
    debug_assert!(
        d >= -1e-9 * (1.0 + excluded.abs()),
        "negative delay {d}: the full optimum restricted to the others is feasible without the agent"
    );
    d.max(0.0)
}

/// Delay of `agent` given an optimal allocation `full` of `instance`.
pub fn delay_for_agent(instance: &Instance, agent: usize, full: &Allocation) -> Result<f64> {
    delay_for_agent_with(instance, agent, full, &MechanismConfig::sequential())
}

pub fn delay_for_agent_with(
    instance: &Instance,
    agent: usize,
    full: &Allocation,
    config: &MechanismConfig,
) -> Result<f64> {
    instance.check_agent(agent)?;
    let excluded = excluded_welfare(instance, agent, config)?;
    Ok(clarke_delay(excluded, others_value(instance, full, agent)))
}

/// One mechanism round: efficient allocation and per-agent delays.
pub fn run_period(instance: &Instance, config: &MechanismConfig) -> Result<Outcome> {
    let allocation = allocate(instance, config)?;
    let delays = config
        .execution
        .map_indices(instance.n(), |i| delay_for_agent_with(instance, i, &allocation, config))
        .into_iter()
        .collect::<Result<Vec<f64>>>()?;
    Outcome::new(instance, allocation, delays)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::types::{payoff, welfare};

    fn two_agent_example() -> Instance {
        Instance::new(2, 1, vec![vec![51.0, 50.0], vec![50.0, 0.0]]).unwrap()
    }

    #[test]
    fn two_agent_example_delays() {
        let inst = two_agent_example();
        for config in [MechanismConfig::default(), MechanismConfig::oracle()] {
            let out = run_period(&inst, &config).unwrap();
            assert_eq!(out.allocation(), &Allocation::from_slots(&[Some(1), Some(0)]));
            assert_eq!(out.delays(), &[0.0, 1.0]);
            assert_eq!(out.welfare(), 100.0);
            assert_eq!(payoff(&inst, &out, 1).unwrap().value(), 49.0);
        }
        let full = solver::solve(&inst);
        assert_eq!(delay_for_agent(&inst, 1, &full).unwrap(), 1.0);
        assert!(delay_for_agent(&inst, 2, &full).is_err());
    }

    #[test]
    fn single_agent_pays_nothing() {
        let inst = Instance::new(3, 1, vec![vec![1.0, 6.0, 2.0]]).unwrap();
        let out = run_period(&inst, &MechanismConfig::default()).unwrap();
        assert_eq!(out.allocation(), &Allocation::from_slots(&[Some(1)]));
        assert_eq!(out.delays(), &[0.0]);
    }

    #[test]
    fn three_class_delays_match_hand_vcg() {
        // A* = {0 -> slot 0, 1 -> slot 1}, welfare 4.3.
        // Without 0: {1 -> 0, 2 -> 1} = 2 + 0.65 = 2.65; others in A* = 1.3.
        // Without 1: {0 -> 0, 2 -> 1} = 3 + 0.65 = 3.65; others in A* = 3.
        // Without 2: unchanged.
        let inst = Instance::new(
            2,
            1,
            vec![vec![3.0, 3.0 * 0.65], vec![2.0, 2.0 * 0.65], vec![1.0, 0.65]],
        )
        .unwrap();
        let flow = run_period(&inst, &MechanismConfig::default()).unwrap();
        let brute = run_period(&inst, &MechanismConfig::oracle()).unwrap();
        let expected = [2.65 - 1.3, 3.65 - 3.0, 0.0];
        for (out, name) in [(&flow, "flow"), (&brute, "oracle")] {
            for (d, e) in out.delays().iter().zip(expected) {
                assert!((d - e).abs() <= 1e-9, "{name}: {:?}", out.delays());
            }
        }
        assert_eq!(flow.delays()[2], 0.0);
    }

    #[test]
    fn no_competition_no_delay() {
        let inst = Instance::new(
            3,
            1,
            vec![vec![5.0, 0.0, 0.0], vec![0.0, 4.0, 0.0], vec![0.0, 0.0, 3.0]],
        )
        .unwrap();
        let out = run_period(&inst, &MechanismConfig::default()).unwrap();
        assert_eq!(out.delays(), &[0.0, 0.0, 0.0]);
        assert_eq!(out.welfare(), welfare(&inst, out.allocation()).unwrap());
    }

    #[test]
    fn unallocated_agent_has_zero_delay() {
        let inst = Instance::new(1, 1, vec![vec![3.0], vec![2.0], vec![1.0]]).unwrap();
        let out = run_period(&inst, &MechanismConfig::default()).unwrap();
        assert_eq!(out.allocation(), &Allocation::from_slots(&[Some(0), None, None]));
        assert_eq!(out.delays(), &[2.0, 0.0, 0.0]);
    }

    #[test]
    fn empty_instance() {
        let inst = Instance::new(2, 1, vec![]).unwrap();
        let out = run_period(&inst, &MechanismConfig::default()).unwrap();
        assert!(out.allocation().is_empty());
        assert_eq!(out.welfare(), 0.0);
    }

    #[test]
    fn execution_modes_agree() {
        let inst = Instance::new(
            3,
            2,
            vec![
                vec![4.0, 1.0, 0.5],
                vec![4.0, 3.0, 0.0],
                vec![4.5, 4.0, 1.0],
                vec![2.0, 2.0, 2.0],
                vec![9.0, 0.5, 0.25],
                vec![1.0, 8.0, 0.0],
                vec![3.0, 3.0, 3.0],
            ],
        )
        .unwrap();
        let seq = run_period(&inst, &MechanismConfig::sequential()).unwrap();
        let par = run_period(&inst, &MechanismConfig::default()).unwrap();
        assert_eq!(seq, par);
    }
}
