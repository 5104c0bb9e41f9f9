//! Comparison schedulers without delays: first-come-first-served booking and
//! the urgency-sorted sequential dictator.

use crate::error::{Error, Result};
use crate::types::{Allocation, Assignment, Instance, Outcome};

/// A permutation of agent indices giving the order of arrival.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ArrivalOrder(Vec<usize>);

impl ArrivalOrder {
    pub fn new(order: Vec<usize>) -> Result<Self> {
        let mut seen = vec![false; order.len()];
        for &i in &order {
            if i >= order.len() || seen[i] {
                return Err(Error::MalformedPermutation(format!(
                    "{order:?} is not a permutation of 0..{}",
                    order.len()
                )));
            }
            seen[i] = true;
        }
        Ok(ArrivalOrder(order))
    }

    pub fn identity(n: usize) -> Self {
        ArrivalOrder((0..n).collect())
    }

    pub fn as_slice(&self) -> &[usize] {
        &self.0
    }
}

/// Highest-valued slot with spare capacity, lowest index on ties. With
/// `positive_only`, zero-valued slots are never taken.
fn pick(row: &[f64], load: &[usize], k: usize, positive_only: bool) -> Option<usize> {
    let mut best: Option<usize> = None;
    for (j, &v) in row.iter().enumerate() {
        if load[j] >= k || (positive_only && v <= 0.0) {
            continue;
        }
        if best.is_none_or(|b| v > row[b]) {
            best = Some(j);
        }
    }
    best
}

fn serve(instance: &Instance, order: &[usize], positive_only: bool) -> Allocation {
    let mut load = vec![0; instance.m()];
    let mut assignment = vec![Assignment::Unallocated; instance.n()];
    for &i in order {
        if let Some(j) = pick(instance.row(i), &load, instance.k(), positive_only) {
            load[j] += 1;
            assignment[i] = Assignment::Slot(j);
        }
    }
    Allocation::new(assignment)
}

/// First-come-first-served booking: each arriving agent books its best slot
/// that still has room. Agents never book a slot they value at zero. No delay
/// is charged.
pub fn fcfs(instance: &Instance, order: &ArrivalOrder) -> Result<Outcome> {
    if order.as_slice().len() != instance.n() {
        return Err(Error::DimensionMismatch {
            expected: instance.n(),
            found: order.as_slice().len(),
        });
    }
    let allocation = serve(instance, order.as_slice(), true);
    Outcome::new(instance, allocation, vec![0.0; instance.n()])
}

/// Agents sorted by decreasing urgency (index order on ties) each pick their
/// favorite remaining slot. No delay is charged.
pub fn sequential_dictator(instance: &Instance, urgencies: &[f64]) -> Result<Outcome> {
    if urgencies.len() != instance.n() {
        return Err(Error::DimensionMismatch {
            expected: instance.n(),
            found: urgencies.len(),
        });
    }
    let mut order: Vec<usize> = (0..instance.n()).collect();
    order.sort_by(|&a, &b| urgencies[b].total_cmp(&urgencies[a]).then(a.cmp(&b)));
    let allocation = serve(instance, &order, false);
    Outcome::new(instance, allocation, vec![0.0; instance.n()])
}
