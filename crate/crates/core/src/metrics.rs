//! Evaluation metrics: allocated preference ranks, mispriority, per-class
//! statistics and congestion profiles.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::types::{Allocation, Assignment};

/// Urgency class of an agent.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(try_from = "u8", into = "u8")]
pub enum Urgency {
    NotUrgent = 1,
    Medium = 2,
    Urgent = 3,
}

impl Urgency {
    pub const ALL: [Urgency; 3] = [Urgency::Urgent, Urgency::Medium, Urgency::NotUrgent];

    pub fn level(self) -> u8 {
        self as u8
    }

    /// One level up, saturating at urgent.
    pub fn escalate(self) -> Urgency {
        match self {
            Urgency::NotUrgent => Urgency::Medium,
            Urgency::Medium | Urgency::Urgent => Urgency::Urgent,
        }
    }

    pub fn label(self) -> &'static str {
        match self {
            Urgency::NotUrgent => "not-urgent",
            Urgency::Medium => "medium",
            Urgency::Urgent => "urgent",
        }
    }
}

impl TryFrom<u8> for Urgency {
    type Error = Error;

    fn try_from(level: u8) -> Result<Self> {
        match level {
            1 => Ok(Urgency::NotUrgent),
            2 => Ok(Urgency::Medium),
            3 => Ok(Urgency::Urgent),
            other => Err(Error::InvalidModel(format!("urgency level {other} not in 1..=3"))),
        }
    }
}

impl From<Urgency> for u8 {
    fn from(u: Urgency) -> u8 {
        u.level()
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct UrgencyProfile(Vec<Urgency>);

impl UrgencyProfile {
    pub fn new(urg: Vec<Urgency>) -> Self {
        UrgencyProfile(urg)
    }

    pub fn from_levels(levels: &[u8]) -> Result<Self> {
        levels
            .iter()
            .map(|&l| Urgency::try_from(l))
            .collect::<Result<Vec<_>>>()
            .map(UrgencyProfile)
    }

    pub fn as_slice(&self) -> &[Urgency] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }
}

/// Preference rank of each agent's assigned slot (1 = most preferred);
/// unallocated agents get `m + 1`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RankProfile(Vec<usize>);

impl RankProfile {
    pub fn new(ranks: Vec<usize>) -> Self {
        RankProfile(ranks)
    }

    pub fn as_slice(&self) -> &[usize] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }
}

pub(crate) fn check_permutation(order: &[usize], m: usize) -> Result<()> {
    if order.len() != m {
        return Err(Error::MalformedPermutation(format!(
            "preference order {order:?} has length {}, expected {m}",
            order.len()
        )));
    }
    let mut seen = vec![false; m];
    for &j in order {
        if j >= m || seen[j] {
            return Err(Error::MalformedPermutation(format!(
                "{order:?} is not a permutation of 0..{m}"
            )));
        }
        seen[j] = true;
    }
    Ok(())
}

pub fn ranks(preferences: &[Vec<usize>], allocation: &Allocation, m: usize) -> Result<RankProfile> {
    if preferences.len() != allocation.len() {
        return Err(Error::DimensionMismatch {
            expected: allocation.len(),
            found: preferences.len(),
        });
    }
    preferences
        .iter()
        .zip(allocation.assignments())
        .map(|(order, a)| {
            check_permutation(order, m)?;
            Ok(match *a {
                Assignment::Unallocated => m + 1,
                Assignment::Slot(j) => {
                    order
                        .iter()
                        .position(|&s| s == j)
                        .ok_or_else(|| Error::MalformedPermutation(format!("slot {j} missing from {order:?}")))?
                        + 1
                }
            })
        })
        .collect::<Result<Vec<_>>>()
        .map(RankProfile)
}

/// Sum over ordered pairs `(i, j)` where `j` is more urgent but got a worse
/// rank than `i`, weighted by the rank gap plus the urgency gap.
pub fn mispriority(ranks: &RankProfile, urg: &UrgencyProfile) -> Result<f64> {
    if ranks.len() != urg.len() {
        return Err(Error::DimensionMismatch {
            expected: urg.len(),
            found: ranks.len(),
        });
    }
    let rho = ranks.as_slice();
    let u = urg.as_slice();
    let mut total = 0u64;
    for i in 0..rho.len() {
        for j in 0..rho.len() {
            if rho[j] > rho[i] && u[j] > u[i] {
                total += (rho[j] - rho[i]) as u64 + (u[j].level() - u[i].level()) as u64;
            }
        }
    }
    Ok(total as f64)
}

/// Mean number of allocated agents per slot across days.
pub fn congestion_profile(days: &[Allocation], m: usize) -> Result<Vec<f64>> {
    let mut totals = vec![0usize; m];
    for alloc in days {
        for a in alloc.assignments() {
            if let Assignment::Slot(j) = *a {
                if j >= m {
                    return Err(Error::DimensionMismatch {
                        expected: m,
                        found: j + 1,
                    });
                }
                totals[j] += 1;
            }
        }
    }
    if days.is_empty() {
        return Ok(vec![0.0; m]);
    }
    Ok(totals.iter().map(|&t| t as f64 / days.len() as f64).collect())
}

/// Count, mean and sample standard deviation. Mean is absent for an empty
/// sample; the deviation needs at least two values.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Summary {
    pub count: usize,
    pub mean: Option<f64>,
    pub std: Option<f64>,
}

pub fn summarize(values: &[f64]) -> Summary {
    let count = values.len();
    if count == 0 {
        return Summary {
            count,
            mean: None,
            std: None,
        };
    }
    let mean = values.iter().sum::<f64>() / count as f64;
    let std = (count > 1).then(|| {
        let ss: f64 = values.iter().map(|v| (v - mean) * (v - mean)).sum();
        (ss / (count - 1) as f64).sqrt()
    });
    Summary {
        count,
        mean: Some(mean),
        std,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ClassStats {
    pub urgency: Urgency,
    pub rank: Summary,
    pub delay: Summary,
}

/// Rank and delay statistics per urgency class, urgent first.
pub fn class_stats(ranks: &RankProfile, delays: &[f64], urg: &UrgencyProfile) -> Result<Vec<ClassStats>> {
    if ranks.len() != urg.len() || delays.len() != urg.len() {
        return Err(Error::DimensionMismatch {
            expected: urg.len(),
            found: if ranks.len() != urg.len() {
                ranks.len()
            } else {
                delays.len()
            },
        });
    }
    Ok(Urgency::ALL
        .iter()
        .map(|&class| {
            let members = || (0..urg.len()).filter(move |&i| urg.as_slice()[i] == class);
            let r: Vec<f64> = members().map(|i| ranks.as_slice()[i] as f64).collect();
            let d: Vec<f64> = members().map(|i| delays[i]).collect();
            ClassStats {
                urgency: class,
                rank: summarize(&r),
                delay: summarize(&d),
            }
        })
        .collect())
}

/// Average ranks (1-based) with ties sharing their mean rank.
fn fractional_ranks(values: &[f64]) -> Vec<f64> {
    let mut idx: Vec<usize> = (0..values.len()).collect();
    idx.sort_by(|&a, &b| values[a].total_cmp(&values[b]));
    let mut out = vec![0.0; values.len()];
    let mut start = 0;
    while start < idx.len() {
        let mut end = start + 1;
        while end < idx.len() && values[idx[end]] == values[idx[start]] {
            end += 1;
        }
        let avg = (start + end + 1) as f64 / 2.0;
        for &i in &idx[start..end] {
            out[i] = avg;
        }
        start = end;
    }
    out
}

/// Spearman rank correlation; `None` when undefined (fewer than two points or
/// a constant series).
pub fn spearman(x: &[f64], y: &[f64]) -> Option<f64> {
    if x.len() != y.len() || x.len() < 2 {
        return None;
    }
    let rx = fractional_ranks(x);
    let ry = fractional_ranks(y);
    let n = x.len() as f64;
    let mx = rx.iter().sum::<f64>() / n;
    let my = ry.iter().sum::<f64>() / n;
    let mut sxy = 0.0;
    let mut sxx = 0.0;
    let mut syy = 0.0;
    for (a, b) in rx.iter().zip(&ry) {
        sxy += (a - mx) * (b - my);
        sxx += (a - mx) * (a - mx);
        syy += (b - my) * (b - my);
    }
    if sxx == 0.0 || syy == 0.0 {
        return None;
    }
    Some(sxy / (sxx * syy).sqrt())
}
