//! Multi-day scheduling with carryover.
//!
//! Each day the mechanism allocates the carried-over pool plus the day's new
//! arrivals. Allocated customers leave. Unallocated customers come back the
//! next day one urgency level higher with the same slot preferences, until
//! they have been passed over [`MAX_WAIT_DAYS`] days in a row, at which point
//! they are dropped.

use serde::Serialize;

use super::{instance_for, proximity_order, random_urgency, AgentSpec, ValuationModel};
use crate::error::{Error, Result};
use crate::exec::Execution;
use crate::mechanism::{run_period, MechanismConfig};
use crate::rng::{derive_seed, rng_from};
use crate::types::{Allocation, Outcome};

pub const MAX_WAIT_DAYS: u8 = 3;

#[derive(Debug, Clone, Copy)]
pub struct SimConfig {
    pub m: usize,
    pub k: usize,
    pub model: ValuationModel,
    /// Keep simulating days without arrivals until the pool is empty.
    pub drain: bool,
    pub execution: Execution,
}

impl SimConfig {
    pub fn new(m: usize, k: usize) -> Self {
        SimConfig {
            m,
            k,
            model: ValuationModel::default(),
            drain: true,
            execution: Execution::default(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct InstanceSummary {
    pub n: usize,
    pub m: usize,
    pub k: usize,
}

/// One simulated day.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DaySim {
    pub day: usize,
    /// Day after the last arrival day, run only to settle the pool.
    pub drain: bool,
    pub instance: InstanceSummary,
    /// The day's pool in instance order.
    pub agents: Vec<AgentSpec>,
    pub outcome: Outcome,
    pub new_arrivals: usize,
    pub carryover: Vec<u64>,
    pub dropped: Vec<u64>,
}

impl DaySim {
    pub fn allocation(&self) -> &Allocation {
        self.outcome.allocation()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SimTrace {
    pub days: Vec<DaySim>,
}

impl SimTrace {
    pub fn arrival_days(&self) -> impl Iterator<Item = &DaySim> {
        self.days.iter().filter(|d| !d.drain)
    }

    pub fn dropped_total(&self) -> usize {
        self.days.iter().map(|d| d.dropped.len()).sum()
    }
}

/// Runs the mechanism day by day over `arrivals` (arrival hour per customer
/// per day). Urgencies of new customers are uniform over the three classes;
/// their preferences follow [`proximity_order`] around the arrival hour.
pub fn simulate_days(arrivals: &[Vec<usize>], config: &SimConfig, seed: u64) -> Result<SimTrace> {
    if config.k == 0 || config.m == 0 {
        return Err(Error::Config("slot count and capacity must be at least 1".into()));
    }
    if let Some(&h) = arrivals.iter().flatten().find(|&&h| h >= config.m) {
        return Err(Error::Config(format!("arrival hour {h} outside {} slots", config.m)));
    }
    let mechanism = MechanismConfig {
        use_oracle: false,
        execution: config.execution,
    };
    let mut next_id = 0u64;
    let mut pool: Vec<AgentSpec> = Vec::new();
    let mut days = Vec::new();

    let mut day = 0;
    while day < arrivals.len() || (config.drain && !pool.is_empty()) {
        let drain = day >= arrivals.len();
        let mut rng = rng_from(derive_seed(seed, &[day as u64]));
        let fresh = if drain { &[][..] } else { &arrivals[day][..] };
        for &hour in fresh {
            pool.push(AgentSpec {
                id: next_id,
                urgency: random_urgency(&mut rng),
                pref_order: proximity_order(hour, config.m),
                days_waiting: 0,
            });
            next_id += 1;
        }

        let instance = instance_for(&pool, &config.model, config.m, config.k)?;
        let outcome = run_period(&instance, &mechanism)?;

        let mut carry = Vec::new();
        let mut dropped = Vec::new();
        for (agent, a) in pool.iter().zip(outcome.allocation().assignments()) {
            if a.is_allocated() {
                continue;
            }
            let waited = agent.days_waiting + 1;
            if waited >= MAX_WAIT_DAYS {
                dropped.push(agent.id);
            } else {
                carry.push(AgentSpec {
                    id: agent.id,
                    urgency: agent.urgency.escalate(),
                    pref_order: agent.pref_order.clone(),
                    days_waiting: waited,
                });
            }
        }

        days.push(DaySim {
            day,
            drain,
            instance: InstanceSummary {
                n: instance.n(),
                m: config.m,
                k: config.k,
            },
            agents: std::mem::replace(&mut pool, carry),
            outcome,
            new_arrivals: fresh.len(),
            carryover: Vec::new(),
            dropped,
        });
        let last = days.last_mut().expect("just pushed");
        last.carryover = pool.iter().map(|a| a.id).collect();
        day += 1;
    }
    Ok(SimTrace { days })
}
