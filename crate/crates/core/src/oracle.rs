//! Exhaustive solver for the integer program, used as ground truth.
//!
//! Each agent picks from `slot 0, .., slot m-1, Unallocated` (in that order)
//! and partial choices that overflow a slot are pruned. Candidates come out in
//! lexicographic order over the agents' choices.

use crate::error::{Error, Result};
use crate::types::{welfare_unchecked, Allocation, Assignment, Instance};

/// Largest agent count the enumerator accepts.
pub const MAX_AGENTS: usize = 10;

/// Iterator over every feasible allocation of an instance.
pub struct Allocations<'a> {
    instance: &'a Instance,
    /// Current choice per agent; `m` encodes Unallocated.
    choice: Vec<usize>,
    load: Vec<usize>,
    started: bool,
    exhausted: bool,
}

impl<'a> Allocations<'a> {
    fn current(&self) -> Allocation {
        let m = self.instance.m();
        Allocation::new(
            self.choice
                .iter()
                .map(|&c| {
                    if c == m {
                        Assignment::Unallocated
                    } else {
                        Assignment::Slot(c)
                    }
                })
                .collect(),
        )
    }

    /// Moves agent `i` to its next choice that respects capacity. Returns
    /// false once the agent has run past Unallocated.
    fn bump(&mut self, i: usize) -> bool {
        let (m, k) = (self.instance.m(), self.instance.k());
        if self.choice[i] < m {
            self.load[self.choice[i]] -= 1;
        }
        let mut c = self.choice[i] + 1;
        while c < m && self.load[c] >= k {
            c += 1;
        }
        if c > m {
            return false;
        }
        self.choice[i] = c;
        if c < m {
            self.load[c] += 1;
        }
        true
    }

    /// Resets agents `from..` to their first feasible choice.
    fn fill_from(&mut self, from: usize) {
        let (m, k) = (self.instance.m(), self.instance.k());
        for i in from..self.choice.len() {
            let c = (0..m).find(|&c| self.load[c] < k).unwrap_or(m);
            self.choice[i] = c;
            if c < m {
                self.load[c] += 1;
            }
        }
    }
}

impl Iterator for Allocations<'_> {
    type Item = Allocation;

    fn next(&mut self) -> Option<Allocation> {
        if self.exhausted {
            return None;
        }
        if !self.started {
            self.started = true;
            self.fill_from(0);
            return Some(self.current());
        }
        // Odometer step: advance the last agent that still has a choice left.
        let n = self.choice.len();
        let mut i = n;
        while i > 0 {
            i -= 1;
            if self.bump(i) {
                self.fill_from(i + 1);
                return Some(self.current());
            }
            self.choice[i] = self.instance.m();
        }
        self.exhausted = true;
        None
    }
}

pub fn enumerate_allocations(instance: &Instance) -> Result<Allocations<'_>> {
    if instance.n() > MAX_AGENTS {
        return Err(Error::TooLarge {
            n: instance.n(),
            limit: MAX_AGENTS,
        });
    }
    Ok(Allocations {
        instance,
        choice: vec![instance.m(); instance.n()],
        load: vec![0; instance.m()],
        started: false,
        exhausted: false,
    })
}

/// A welfare-maximizing allocation and its welfare. The first maximum in
/// enumeration order wins ties.
pub fn solve_exact(instance: &Instance) -> Result<(Allocation, f64)> {
    let mut best: Option<(Allocation, f64)> = None;
    for alloc in enumerate_allocations(instance)? {
        let w = welfare_unchecked(instance, &alloc);
        if best.as_ref().is_none_or(|(_, bw)| w > *bw) {
            best = Some((alloc, w));
        }
    }
    Ok(best.expect("enumeration always yields the empty allocation"))
}

/// Optimal welfare of the instance with `excluded` removed.
pub fn solve_exact_excluding(instance: &Instance, excluded: usize) -> Result<f64> {
    let sub = instance.without_agent(excluded)?;
    solve_exact(&sub).map(|(_, w)| w)
}
