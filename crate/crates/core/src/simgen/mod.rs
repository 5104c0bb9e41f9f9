//! Experiment inputs: the urgency-class valuation model, synthetic agent
//! populations, store footfall, and the multi-day scheduling simulation.

mod footfall;
mod simulate;

pub use footfall::{
    gen_footfall, ingest_footfall, proximity_order, write_footfall_csv, FootfallModel, HOURS, OPENING_HOUR,
};
pub use simulate::{simulate_days, DaySim, InstanceSummary, SimConfig, SimTrace, MAX_WAIT_DAYS};

use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::metrics::{check_permutation, Urgency};
use crate::rng::rng_from;
use crate::types::Instance;

/// An agent as seen by the experiments: urgency class, slot preference order
/// (most preferred first) and the number of days it has been waiting.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AgentSpec {
    pub id: u64,
    pub urgency: Urgency,
    pub pref_order: Vec<usize>,
    pub days_waiting: u8,
}

/// Valuation of the `t`-th preferred slot (0-based) is
/// `class_value(urgency) * delta^t`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ValuationModel {
    delta: f64,
    /// Values for not-urgent, medium, urgent.
    class_values: [f64; 3],
}

impl Default for ValuationModel {
    fn default() -> Self {
        ValuationModel {
            delta: 0.65,
            class_values: [1.0, 2.0, 3.0],
        }
    }
}

impl ValuationModel {
    pub fn new(delta: f64) -> Result<Self> {
        if !(delta > 0.0 && delta < 1.0) {
            return Err(Error::InvalidModel(format!("delta {delta} must lie in (0, 1)")));
        }
        Ok(ValuationModel {
            delta,
            ..Default::default()
        })
    }

    pub fn delta(&self) -> f64 {
        self.delta
    }

    pub fn class_value(&self, urgency: Urgency) -> f64 {
        self.class_values[urgency.level() as usize - 1]
    }
}

pub fn valuations_from_spec(spec: &AgentSpec, model: &ValuationModel, m: usize) -> Result<Vec<f64>> {
    if spec.pref_order.len() != m {
        return Err(Error::DimensionMismatch {
            expected: m,
            found: spec.pref_order.len(),
        });
    }
    check_permutation(&spec.pref_order, m)?;
    let top = model.class_value(spec.urgency);
    let mut row = vec![0.0; m];
    for (t, &slot) in spec.pref_order.iter().enumerate() {
        row[slot] = top * model.delta.powi(t as i32);
    }
    Ok(row)
}

/// Builds the period instance for a population.
pub fn instance_for(specs: &[AgentSpec], model: &ValuationModel, m: usize, k: usize) -> Result<Instance> {
    let rows = specs
        .iter()
        .map(|s| valuations_from_spec(s, model, m))
        .collect::<Result<Vec<_>>>()?;
    Instance::new(m, k, rows)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum PreferenceRegime {
    /// Everyone ranks the slots `0, 1, .., m-1`.
    #[default]
    Identical,
    /// Independent uniformly random orders.
    Random,
}

impl std::str::FromStr for PreferenceRegime {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "identical" => Ok(PreferenceRegime::Identical),
            "random" => Ok(PreferenceRegime::Random),
            other => Err(Error::Config(format!("unknown preference regime {other:?}"))),
        }
    }
}

impl PreferenceRegime {
    pub fn name(self) -> &'static str {
        match self {
            PreferenceRegime::Identical => "identical",
            PreferenceRegime::Random => "random",
        }
    }
}

pub(crate) fn random_urgency<R: Rng>(rng: &mut R) -> Urgency {
    match rng.random_range(1..=3u8) {
        1 => Urgency::NotUrgent,
        2 => Urgency::Medium,
        _ => Urgency::Urgent,
    }
}

/// `n` agents with uniform urgency and preferences drawn per `regime`.
/// Agent ids are `0..n`.
pub fn gen_population(n: usize, m: usize, regime: PreferenceRegime, seed: u64) -> Vec<AgentSpec> {
    let mut rng = rng_from(seed);
    (0..n)
        .map(|i| {
            let urgency = random_urgency(&mut rng);
            let mut pref_order: Vec<usize> = (0..m).collect();
            if regime == PreferenceRegime::Random {
                pref_order.shuffle(&mut rng);
            }
            AgentSpec {
                id: i as u64,
                urgency,
                pref_order,
                days_waiting: 0,
            }
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use std::collections::HashMap;

    use super::*;

    fn spec(urgency: Urgency, pref_order: Vec<usize>) -> AgentSpec {
        AgentSpec {
            id: 0,
            urgency,
            pref_order,
            days_waiting: 0,
        }
    }

    #[test]
    fn class_valuations() {
        let model = ValuationModel::new(0.65).unwrap();
        let row = valuations_from_spec(&spec(Urgency::Medium, vec![0, 1, 2]), &model, 3).unwrap();
        for (v, e) in row.iter().zip([2.0, 1.3, 0.845]) {
            assert!((v - e).abs() <= 1e-12);
        }
        let row = valuations_from_spec(&spec(Urgency::Urgent, vec![1, 0]), &model, 2).unwrap();
        assert_eq!(row[1], 3.0);
        let row = valuations_from_spec(&spec(Urgency::NotUrgent, vec![1, 0]), &model, 2).unwrap();
        assert_eq!(row[0], 0.65);
        assert!(valuations_from_spec(&spec(Urgency::Urgent, vec![0, 1]), &model, 3).is_err());
        assert!(valuations_from_spec(&spec(Urgency::Urgent, vec![0, 0]), &model, 2).is_err());
    }

    #[test]
    fn delta_bounds() {
        assert!(ValuationModel::new(0.0).is_err());
        assert!(ValuationModel::new(1.0).is_err());
        assert!(ValuationModel::new(f64::NAN).is_err());
        assert!(ValuationModel::new(0.5).is_ok());
    }

    #[test]
    fn identical_regime() {
        let pop = gen_population(50, 5, PreferenceRegime::Identical, 1);
        assert!(pop.iter().all(|a| a.pref_order == vec![0, 1, 2, 3, 4]));
        assert!(gen_population(0, 5, PreferenceRegime::Random, 1).is_empty());
    }

    #[test]
    fn random_regime_is_reproducible_and_uniform() {
        let a = gen_population(30, 4, PreferenceRegime::Random, 99);
        assert_eq!(a, gen_population(30, 4, PreferenceRegime::Random, 99));

        // Chi-square over the 3! orders of 3 slots; 5 degrees of freedom,
        // 20.52 is the 0.999 quantile.
        let pop = gen_population(6000, 3, PreferenceRegime::Random, 2024);
        let mut counts: HashMap<Vec<usize>, usize> = HashMap::new();
        for agent in &pop {
            *counts.entry(agent.pref_order.clone()).or_default() += 1;
        }
        assert_eq!(counts.len(), 6);
        let expected = 1000.0;
        let chi2: f64 = counts.values().map(|&c| (c as f64 - expected).powi(2) / expected).sum();
        assert!(chi2 < 20.52, "chi-square {chi2}");

        let mut per_class = [0usize; 3];
        for agent in &pop {
            per_class[agent.urgency.level() as usize - 1] += 1;
        }
        let chi2: f64 = per_class.iter().map(|&c| (c as f64 - 2000.0).powi(2) / 2000.0).sum();
        assert!(chi2 < 13.82, "urgency chi-square {chi2}");
    }
}
