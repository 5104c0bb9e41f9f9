//! Domain values shared by every module: instances, allocations, outcomes and
//! the quasi-linear payoff.
//!
//! Agents are identified by their row index in an [`Instance`]. All values are
//! immutable once built and are checked at construction (or deserialization),
//! so downstream code can rely on the dimension invariants.

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// One period's allocation problem: `m` slots of capacity `k` and an
/// agent-by-slot valuation matrix (row `i` is agent `i`'s valuation vector,
/// measured in waiting periods the agent would accept).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "InstanceRepr", into = "InstanceRepr")]
pub struct Instance {
    m: usize,
    k: usize,
    valuations: Vec<Vec<f64>>,
}

#[derive(Serialize, Deserialize)]
struct InstanceRepr {
    m: usize,
    k: usize,
    valuations: Vec<Vec<f64>>,
}

impl TryFrom<InstanceRepr> for Instance {
    type Error = Error;

    fn try_from(repr: InstanceRepr) -> Result<Self> {
        Instance::new(repr.m, repr.k, repr.valuations)
    }
}

impl From<Instance> for InstanceRepr {
    fn from(instance: Instance) -> Self {
        InstanceRepr {
            m: instance.m,
            k: instance.k,
            valuations: instance.valuations,
        }
    }
}

impl Instance {
    pub fn new(m: usize, k: usize, valuations: Vec<Vec<f64>>) -> Result<Self> {
        if m == 0 {
            return Err(Error::InvalidInstance("slot count m must be at least 1".into()));
        }
        if k == 0 {
            return Err(Error::InvalidInstance("capacity k must be at least 1".into()));
        }
        for (i, row) in valuations.iter().enumerate() {
            if row.len() != m {
                return Err(Error::InvalidInstance(format!(
                    "agent {i} has {} valuations, expected {m}",
                    row.len()
                )));
            }
            if let Some(j) = row.iter().position(|v| !v.is_finite() || *v < 0.0) {
                return Err(Error::InvalidInstance(format!(
                    "valuation of agent {i} for slot {j} is {}, must be finite and non-negative",
                    row[j]
                )));
            }
        }
        Ok(Instance { m, k, valuations })
    }

    /// Number of agents.
    pub fn n(&self) -> usize {
        self.valuations.len()
    }

    pub fn m(&self) -> usize {
        self.m
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn valuation(&self, agent: usize, slot: usize) -> f64 {
        self.valuations[agent][slot]
    }

    pub fn row(&self, agent: usize) -> &[f64] {
        &self.valuations[agent]
    }

    pub fn rows(&self) -> &[Vec<f64>] {
        &self.valuations
    }

    /// The sub-instance with `agent` removed; remaining agents keep their
    /// relative order.
    pub fn without_agent(&self, agent: usize) -> Result<Instance> {
        self.check_agent(agent)?;
        let valuations = self
            .valuations
            .iter()
            .enumerate()
            .filter(|(i, _)| *i != agent)
            .map(|(_, row)| row.clone())
            .collect();
        Ok(Instance {
            m: self.m,
            k: self.k,
            valuations,
        })
    }

    /// Same instance with `agent`'s row replaced by a (mis)report.
    pub fn with_report(&self, agent: usize, report: Vec<f64>) -> Result<Instance> {
        self.check_agent(agent)?;
        let mut valuations = self.valuations.clone();
        valuations[agent] = report;
        Instance::new(self.m, self.k, valuations)
    }

    /// Every valuation multiplied by `factor` (`factor > 0`).
    pub fn scaled(&self, factor: f64) -> Result<Instance> {
        let valuations = self
            .valuations
            .iter()
            .map(|row| row.iter().map(|v| v * factor).collect())
            .collect();
        Instance::new(self.m, self.k, valuations)
    }

    pub(crate) fn check_agent(&self, agent: usize) -> Result<()> {
        if agent >= self.n() {
            return Err(Error::AgentOutOfRange {
                index: agent,
                n: self.n(),
            });
        }
        Ok(())
    }
}

/// Where a single agent ended up.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Assignment {
    Slot(usize),
    Unallocated,
}

impl Assignment {
    pub fn slot(self) -> Option<usize> {
        match self {
            Assignment::Slot(j) => Some(j),
            Assignment::Unallocated => None,
        }
    }

    pub fn is_allocated(self) -> bool {
        matches!(self, Assignment::Slot(_))
    }
}

impl From<Option<usize>> for Assignment {
    fn from(slot: Option<usize>) -> Self {
        slot.map_or(Assignment::Unallocated, Assignment::Slot)
    }
}

impl Serialize for Assignment {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        self.slot().serialize(s)
    }
}

impl<'de> Deserialize<'de> for Assignment {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        Option::<usize>::deserialize(d).map(Assignment::from)
    }
}

/// Per-agent slot assignment (the 0/1 matrix in row form: one entry per agent).
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Allocation {
    assignment: Vec<Assignment>,
}

impl Allocation {
    pub fn new(assignment: Vec<Assignment>) -> Self {
        Allocation { assignment }
    }

    pub fn unallocated(n: usize) -> Self {
        Allocation {
            assignment: vec![Assignment::Unallocated; n],
        }
    }

    pub fn from_slots(slots: &[Option<usize>]) -> Self {
        Allocation {
            assignment: slots.iter().map(|s| Assignment::from(*s)).collect(),
        }
    }

    pub fn len(&self) -> usize {
        self.assignment.len()
    }

    pub fn is_empty(&self) -> bool {
        self.assignment.is_empty()
    }

    pub fn get(&self, agent: usize) -> Assignment {
        self.assignment[agent]
    }

    pub fn assignments(&self) -> &[Assignment] {
        &self.assignment
    }

    pub fn allocated_count(&self) -> usize {
        self.assignment.iter().filter(|a| a.is_allocated()).count()
    }

    /// Number of agents in each of `m` slots. Out-of-range slots are ignored.
    pub fn loads(&self, m: usize) -> Vec<usize> {
        let mut loads = vec![0; m];
        for a in &self.assignment {
            if let Assignment::Slot(j) = *a {
                if j < m {
                    loads[j] += 1;
                }
            }
        }
        loads
    }
}

/// A violated allocation constraint.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Violation {
    /// Allocation does not have one entry per agent.
    AgentCount { expected: usize, found: usize },
    /// An agent is assigned a slot index outside `0..m`.
    SlotOutOfRange { agent: usize, slot: usize, m: usize },
    /// More than `k` agents share a slot.
    Capacity { slot: usize, load: usize, k: usize },
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Violation::AgentCount { expected, found } => {
                write!(f, "allocation has {found} entries for {expected} agents")
            }
            Violation::SlotOutOfRange { agent, slot, m } => {
                write!(f, "agent {agent} assigned slot {slot} but only {m} slots exist")
            }
            Violation::Capacity { slot, load, k } => {
                write!(f, "slot {slot} holds {load} agents, capacity is {k}")
            }
        }
    }
}

/// Checks both constraint families: at most one slot per agent (structural
/// plus range check) and at most `k` agents per slot.
pub fn validate(instance: &Instance, allocation: &Allocation) -> std::result::Result<(), Violation> {
    if allocation.len() != instance.n() {
        return Err(Violation::AgentCount {
            expected: instance.n(),
            found: allocation.len(),
        });
    }
    for (agent, a) in allocation.assignments().iter().enumerate() {
        if let Assignment::Slot(slot) = *a {
            if slot >= instance.m() {
                return Err(Violation::SlotOutOfRange {
                    agent,
                    slot,
                    m: instance.m(),
                });
            }
        }
    }
    let loads = allocation.loads(instance.m());
    if let Some((slot, &load)) = loads.iter().enumerate().find(|(_, &l)| l > instance.k()) {
        return Err(Violation::Capacity {
            slot,
            load,
            k: instance.k(),
        });
    }
    Ok(())
}

/// Sum of allocated valuations, accumulated in agent order from `0.0`.
pub fn welfare(instance: &Instance, allocation: &Allocation) -> Result<f64> {
    validate(instance, allocation).map_err(Error::Infeasible)?;
    Ok(welfare_unchecked(instance, allocation))
}

pub(crate) fn welfare_unchecked(instance: &Instance, allocation: &Allocation) -> f64 {
    let mut total = 0.0;
    for (i, a) in allocation.assignments().iter().enumerate() {
        if let Assignment::Slot(j) = *a {
            total += instance.valuation(i, j);
        }
    }
    total
}

/// Valuation of `agent` for what it received; zero if unallocated.
pub fn received_value(instance: &Instance, allocation: &Allocation, agent: usize) -> f64 {
    match allocation.get(agent) {
        Assignment::Slot(j) => instance.valuation(agent, j),
        Assignment::Unallocated => 0.0,
    }
}

/// Allocation plus per-agent delays and the resulting welfare.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "OutcomeRepr", into = "OutcomeRepr")]
pub struct Outcome {
    allocation: Allocation,
    delays: Vec<f64>,
    welfare: f64,
}

#[derive(Serialize, Deserialize)]
struct OutcomeRepr {
    assignment: Allocation,
    delays: Vec<f64>,
    welfare: f64,
}

impl TryFrom<OutcomeRepr> for Outcome {
    type Error = Error;

    fn try_from(repr: OutcomeRepr) -> Result<Self> {
        Outcome::from_parts(repr.assignment, repr.delays, repr.welfare)
    }
}

impl From<Outcome> for OutcomeRepr {
    fn from(outcome: Outcome) -> Self {
        OutcomeRepr {
            assignment: outcome.allocation,
            delays: outcome.delays,
            welfare: outcome.welfare,
        }
    }
}

impl Outcome {
    /// Builds an outcome for `instance`, recomputing the welfare from the
    /// allocation.
    pub fn new(instance: &Instance, allocation: Allocation, delays: Vec<f64>) -> Result<Self> {
        let welfare = welfare(instance, &allocation)?;
        Outcome::from_parts(allocation, delays, welfare)
    }

    fn from_parts(allocation: Allocation, delays: Vec<f64>, welfare: f64) -> Result<Self> {
        if delays.len() != allocation.len() {
            return Err(Error::DimensionMismatch {
                expected: allocation.len(),
                found: delays.len(),
            });
        }
        if let Some(i) = delays.iter().position(|d| !d.is_finite() || *d < 0.0) {
            return Err(Error::InvalidInstance(format!(
                "delay of agent {i} is {}, must be finite and non-negative",
                delays[i]
            )));
        }
        if !welfare.is_finite() {
            return Err(Error::InvalidInstance("welfare must be finite".into()));
        }
        Ok(Outcome {
            allocation,
            delays,
            welfare,
        })
    }

    pub fn allocation(&self) -> &Allocation {
        &self.allocation
    }

    pub fn delays(&self) -> &[f64] {
        &self.delays
    }

    pub fn welfare(&self) -> f64 {
        self.welfare
    }
}

/// Quasi-linear payoff of one agent, in periods.
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd, Serialize, Deserialize)]
pub struct Payoff(pub f64);

impl Payoff {
    pub fn value(self) -> f64 {
        self.0
    }
}

/// `v_i(A) - d_i` for `agent`, using the valuations in `instance`.
pub fn payoff(instance: &Instance, outcome: &Outcome, agent: usize) -> Result<Payoff> {
    if outcome.allocation().len() != instance.n() {
        return Err(Error::DimensionMismatch {
            expected: instance.n(),
            found: outcome.allocation().len(),
        });
    }
    instance.check_agent(agent)?;
    if let Assignment::Slot(j) = outcome.allocation().get(agent) {
        if j >= instance.m() {
            return Err(Error::DimensionMismatch {
                expected: instance.m(),
                found: j + 1,
            });
        }
    }
    Ok(Payoff(
        received_value(instance, outcome.allocation(), agent) - outcome.delays()[agent],
    ))
}
