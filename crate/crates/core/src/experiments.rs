//! Experiment runners behind the CLI. Each produces plot-ready rows and a
//! fixed CSV layout; plotting is left to external tools.
//!
//! Every run takes one root seed. Per-trial seeds are derived from
//! `(root, experiment tag, n, trial)`, so trials can run in any order (or in
//! parallel) and rows are always assembled in `(n, trial)` order.

use std::fmt::Write as _;
use std::io::Write as _;
use std::path::Path;
use std::time::Instant;

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::baselines::{fcfs, ArrivalOrder};
use crate::error::{Error, Result};
use crate::exec::Execution;
use crate::mechanism::{run_period, MechanismConfig};
use crate::metrics::{
    class_stats, congestion_profile, mispriority, ranks, summarize, Summary, Urgency, UrgencyProfile,
};
use crate::rng::{derive_seed, rng_from};
use crate::simgen::{
    gen_footfall, gen_population, instance_for, simulate_days, FootfallModel, PreferenceRegime, SimConfig,
    ValuationModel, HOURS, OPENING_HOUR,
};
use crate::solver;
use crate::types::{Allocation, Assignment};

const TAG_PRIORITY: u64 = 1;
const TAG_MISPRIORITY: u64 = 2;
const TAG_FOOTFALL: u64 = 3;
const TAG_SIMULATION: u64 = 4;
const TAG_BENCH: u64 = 5;

/// Settings shared by the experiment commands. Loadable from JSON; absent
/// fields take the defaults below.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub experiment: String,
    pub m: usize,
    pub k: usize,
    pub n_min: usize,
    /// Defaults to `ceil(1.1 * m * k)`.
    pub n_max: Option<usize>,
    pub delta: f64,
    /// Trials per population size are `10 * n * trials_multiplier`.
    pub trials_multiplier: usize,
    pub seed: u64,
    pub regime: PreferenceRegime,
    pub capacities: Vec<usize>,
    pub days: usize,
    pub output: String,
    pub bench_k: usize,
    pub bench_m: Vec<usize>,
    pub bench_trials: usize,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            experiment: String::new(),
            m: 5,
            k: 4,
            n_min: 2,
            n_max: None,
            delta: 0.65,
            trials_multiplier: 1,
            seed: 2021,
            regime: PreferenceRegime::Identical,
            capacities: vec![24, 30],
            days: 31,
            output: "out".into(),
            bench_k: 12,
            bench_m: vec![1, 2, 4, 7, 14],
            bench_trials: 3,
        }
    }
}

impl ExperimentConfig {
    pub fn max_population(&self) -> usize {
        // ceil(1.1 * m * k) without float rounding.
        (11 * self.m * self.k).div_ceil(10)
    }

    pub fn n_range(&self) -> std::ops::RangeInclusive<usize> {
        self.n_min..=self.n_max.unwrap_or_else(|| self.max_population())
    }

    pub fn trials_for(&self, n: usize) -> usize {
        10 * n * self.trials_multiplier
    }

    pub fn model(&self) -> Result<ValuationModel> {
        ValuationModel::new(self.delta)
    }

    pub fn validate(&self) -> Result<()> {
        if self.m == 0 || self.k == 0 {
            return Err(Error::Config("m and k must be at least 1".into()));
        }
        if self.trials_multiplier == 0 {
            return Err(Error::Config("trials multiplier must be at least 1".into()));
        }
        let range = self.n_range();
        if *range.start() < 2 || range.end() < range.start() || *range.end() > self.max_population() {
            return Err(Error::Config(format!(
                "n range {}..={} must lie within [2, {}]",
                range.start(),
                range.end(),
                self.max_population()
            )));
        }
        if self.capacities.is_empty() || self.capacities.contains(&0) {
            return Err(Error::Config("capacities must be non-empty and at least 1".into()));
        }
        if self.days == 0 {
            return Err(Error::Config("days must be at least 1".into()));
        }
        if self.bench_k == 0 || self.bench_m.is_empty() || self.bench_m.contains(&0) || self.bench_trials == 0 {
            return Err(Error::Config(
                "bench needs k >= 1, a non-empty m list of positive values and trials >= 1".into(),
            ));
        }
        self.model().map(|_| ())
    }
}

fn fmt_opt(x: Option<f64>) -> String {
    x.map(|v| v.to_string()).unwrap_or_default()
}

/// One randomized mechanism run of the prioritization experiment.
#[derive(Debug, Clone, PartialEq)]
pub struct PriorityTrial {
    pub n: usize,
    pub urgencies: Vec<Urgency>,
    pub ranks: Vec<usize>,
    pub delays: Vec<f64>,
    pub allocation: Allocation,
}

/// Runs the mechanism on `trials_for(n)` random populations of size `n`.
pub fn priority_trials(
    cfg: &ExperimentConfig,
    regime: PreferenceRegime,
    n: usize,
    exec: Execution,
) -> Result<Vec<PriorityTrial>> {
    let model = cfg.model()?;
    let regime_tag = regime as u64;
    exec.map_indices(cfg.trials_for(n), |t| {
        let seed = derive_seed(cfg.seed, &[TAG_PRIORITY, regime_tag, n as u64, t as u64]);
        let pop = gen_population(n, cfg.m, regime, seed);
        let instance = instance_for(&pop, &model, cfg.m, cfg.k)?;
        let outcome = run_period(&instance, &MechanismConfig::sequential())?;
        let prefs: Vec<Vec<usize>> = pop.iter().map(|a| a.pref_order.clone()).collect();
        let rank = ranks(&prefs, outcome.allocation(), cfg.m)?;
        Ok(PriorityTrial {
            n,
            urgencies: pop.iter().map(|a| a.urgency).collect(),
            ranks: rank.as_slice().to_vec(),
            delays: outcome.delays().to_vec(),
            allocation: outcome.allocation().clone(),
        })
    })
    .into_iter()
    .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct PriorityRow {
    pub n: usize,
    pub urgency: Urgency,
    pub rank: Summary,
    pub delay: Summary,
}

/// Pools ranks and delays of each urgency class over all trials.
pub fn summarize_priority(n: usize, trials: &[PriorityTrial]) -> Result<Vec<PriorityRow>> {
    let mut all_ranks = Vec::new();
    let mut all_delays = Vec::new();
    let mut all_urg = Vec::new();
    for t in trials {
        all_ranks.extend_from_slice(&t.ranks);
        all_delays.extend_from_slice(&t.delays);
        all_urg.extend_from_slice(&t.urgencies);
    }
    let stats = class_stats(
        &crate::metrics::RankProfile::new(all_ranks),
        &all_delays,
        &UrgencyProfile::new(all_urg),
    )?;
    Ok(stats
        .into_iter()
        .map(|s| PriorityRow {
            n,
            urgency: s.urgency,
            rank: s.rank,
            delay: s.delay,
        })
        .collect())
}

pub fn prioritization_rows(
    cfg: &ExperimentConfig,
    regime: PreferenceRegime,
    exec: Execution,
) -> Result<Vec<PriorityRow>> {
    let mut rows = Vec::new();
    for n in cfg.n_range() {
        let trials = priority_trials(cfg, regime, n, exec)?;
        rows.extend(summarize_priority(n, &trials)?);
    }
    Ok(rows)
}

pub fn rank_csv(rows: &[PriorityRow]) -> String {
    let mut out = String::from("n,class,mean_rank,std_rank\n");
    for r in rows {
        let _ = writeln!(
            out,
            "{},{},{},{}",
            r.n,
            r.urgency.label(),
            fmt_opt(r.rank.mean),
            fmt_opt(r.rank.std)
        );
    }
    out
}

pub fn delay_csv(rows: &[PriorityRow]) -> String {
    let mut out = String::from("n,class,mean_delay\n");
    for r in rows {
        let _ = writeln!(out, "{},{},{}", r.n, r.urgency.label(), fmt_opt(r.delay.mean));
    }
    out
}

/// Files written by the prioritization command, as `(name, contents)`.
pub fn prioritization_outputs(cfg: &ExperimentConfig, exec: Execution) -> Result<Vec<(String, String)>> {
    cfg.validate()?;
    let identical = prioritization_rows(cfg, PreferenceRegime::Identical, exec)?;
    let random = prioritization_rows(cfg, PreferenceRegime::Random, exec)?;
    Ok(vec![
        ("prioritization_identical.csv".into(), rank_csv(&identical)),
        ("prioritization_random.csv".into(), rank_csv(&random)),
        ("priority_delay.csv".into(), delay_csv(&identical)),
    ])
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct MispriorityRow {
    pub n: usize,
    pub fcfs: f64,
    pub mechanism: f64,
}

/// Mispriority of FCFS (random arrival order) and of the mechanism's
/// allocation on the same random populations; one `(fcfs, mechanism)` pair
/// per trial.
pub fn mispriority_trials(cfg: &ExperimentConfig, n: usize, exec: Execution) -> Result<Vec<(f64, f64)>> {
    let model = cfg.model()?;
    exec.map_indices(cfg.trials_for(n), |t| {
        let seed = derive_seed(cfg.seed, &[TAG_MISPRIORITY, n as u64, t as u64]);
        let pop = gen_population(n, cfg.m, cfg.regime, seed);
        let instance = instance_for(&pop, &model, cfg.m, cfg.k)?;
        let mut order: Vec<usize> = (0..n).collect();
        order.shuffle(&mut rng_from(derive_seed(seed, &[0])));
        let prefs: Vec<Vec<usize>> = pop.iter().map(|a| a.pref_order.clone()).collect();
        let urg = UrgencyProfile::new(pop.iter().map(|a| a.urgency).collect());

        let booked = fcfs(&instance, &ArrivalOrder::new(order)?)?;
        let fcfs_mis = mispriority(&ranks(&prefs, booked.allocation(), cfg.m)?, &urg)?;
        let optimal = solver::solve(&instance);
        let mech_mis = mispriority(&ranks(&prefs, &optimal, cfg.m)?, &urg)?;
        Ok((fcfs_mis, mech_mis))
    })
    .into_iter()
    .collect()
}

pub fn mispriority_rows(cfg: &ExperimentConfig, exec: Execution) -> Result<Vec<MispriorityRow>> {
    cfg.validate()?;
    cfg.n_range()
        .map(|n| {
            let trials = mispriority_trials(cfg, n, exec)?;
            let count = trials.len() as f64;
            Ok(MispriorityRow {
                n,
                fcfs: trials.iter().map(|t| t.0).sum::<f64>() / count,
                mechanism: trials.iter().map(|t| t.1).sum::<f64>() / count,
            })
        })
        .collect()
}

pub fn mispriority_csv(rows: &[MispriorityRow]) -> String {
    let mut out = String::from("n,mechanism,mean_mispriority\n");
    for r in rows {
        let _ = writeln!(out, "{},fcfs,{}", r.n, r.fcfs);
        let _ = writeln!(out, "{},vcg,{}", r.n, r.mechanism);
    }
    out
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CongestionRow {
    pub capacity: usize,
    /// Clock hour at the start of the slot (7 = 7AM).
    pub hour: u32,
    pub baseline_mean: f64,
    pub allocated_mean: f64,
    pub dropped_count: usize,
}

/// Baseline hourly population vs. the scheduled one for each capacity, on
/// the same arrival trace. Averages are over arrival days; dropped counts
/// include the days needed to settle the pool, attributed to the customer's
/// original hour.
pub fn congestion_rows(
    arrivals: &[Vec<usize>],
    capacities: &[usize],
    model: &ValuationModel,
    seed: u64,
    exec: Execution,
) -> Result<Vec<CongestionRow>> {
    if arrivals.is_empty() {
        return Err(Error::Config("congestion needs at least one day of arrivals".into()));
    }
    let days = arrivals.len() as f64;
    let mut baseline = vec![0.0; HOURS];
    for &h in arrivals.iter().flatten() {
        baseline[h] += 1.0;
    }
    for b in &mut baseline {
        *b /= days;
    }

    let sim_seed = derive_seed(seed, &[TAG_SIMULATION]);
    let mut rows = Vec::new();
    for &capacity in capacities {
        if capacity == 0 {
            return Err(Error::Config("capacity must be at least 1".into()));
        }
        let config = SimConfig {
            model: *model,
            execution: exec,
            ..SimConfig::new(HOURS, capacity)
        };
        let trace = simulate_days(arrivals, &config, sim_seed)?;
        let allocations: Vec<Allocation> = trace.arrival_days().map(|d| d.allocation().clone()).collect();
        let allocated = congestion_profile(&allocations, HOURS)?;
        let mut dropped = [0usize; HOURS];
        for day in &trace.days {
            for id in &day.dropped {
                let agent = day
                    .agents
                    .iter()
                    .find(|a| a.id == *id)
                    .expect("dropped agent is in the pool");
                dropped[agent.pref_order[0]] += 1;
            }
        }
        for h in 0..HOURS {
            rows.push(CongestionRow {
                capacity,
                hour: OPENING_HOUR + h as u32,
                baseline_mean: baseline[h],
                allocated_mean: allocated[h],
                dropped_count: dropped[h],
            });
        }
    }
    Ok(rows)
}

/// Calibrated synthetic arrivals for `cfg.days` days.
pub fn synthetic_arrivals(cfg: &ExperimentConfig) -> Result<Vec<Vec<usize>>> {
    gen_footfall(
        &FootfallModel::calibrated_store(),
        cfg.days,
        derive_seed(cfg.seed, &[TAG_FOOTFALL]),
    )
}

pub fn congestion_csv(rows: &[CongestionRow]) -> String {
    let mut out = String::from("hour,baseline_mean,allocated_mean,dropped_count\n");
    for r in rows {
        let _ = writeln!(
            out,
            "{},{},{},{}",
            r.hour, r.baseline_mean, r.allocated_mean, r.dropped_count
        );
    }
    out
}

pub fn congestion_outputs(rows: &[CongestionRow]) -> Vec<(String, String)> {
    let mut caps: Vec<usize> = rows.iter().map(|r| r.capacity).collect();
    caps.dedup();
    caps.into_iter()
        .map(|cap| {
            let mine: Vec<CongestionRow> = rows.iter().filter(|r| r.capacity == cap).cloned().collect();
            (format!("congestion_cap{cap}.csv"), congestion_csv(&mine))
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct BenchRow {
    pub m: usize,
    pub n: usize,
    pub mean_seconds: f64,
}

/// Wall time of one full mechanism round (allocation plus all `n` exclusion
/// solves) at `n = m * k`, averaged over `trials` random populations.
pub fn bench_rows(
    k: usize,
    m_list: &[usize],
    trials: usize,
    seed: u64,
    mechanism: MechanismConfig,
) -> Result<Vec<BenchRow>> {
    if m_list.is_empty() || trials == 0 || k == 0 {
        return Err(Error::Config(
            "bench needs a non-empty m list, k >= 1 and trials >= 1".into(),
        ));
    }
    let model = ValuationModel::default();
    m_list
        .iter()
        .map(|&m| {
            let n = m * k;
            let mut total = 0.0;
            for t in 0..trials {
                let pop = gen_population(
                    n,
                    m,
                    PreferenceRegime::Random,
                    derive_seed(seed, &[TAG_BENCH, m as u64, t as u64]),
                );
                let instance = instance_for(&pop, &model, m, k)?;
                let start = Instant::now();
                let outcome = run_period(&instance, &mechanism)?;
                total += start.elapsed().as_secs_f64();
                std::hint::black_box(outcome);
            }
            Ok(BenchRow {
                m,
                n,
                mean_seconds: total / trials as f64,
            })
        })
        .collect()
}

pub fn bench_csv(rows: &[BenchRow]) -> String {
    let mut out = String::from("m,n,mean_seconds\n");
    for r in rows {
        let _ = writeln!(out, "{},{},{}", r.m, r.n, r.mean_seconds);
    }
    out
}

/// Least-squares slope of `ln(seconds)` against `ln(m)`.
pub fn loglog_slope(rows: &[BenchRow]) -> Option<f64> {
    let pts: Vec<(f64, f64)> = rows
        .iter()
        .filter(|r| r.m > 0 && r.mean_seconds > 0.0)
        .map(|r| ((r.m as f64).ln(), r.mean_seconds.ln()))
        .collect();
    if pts.len() < 2 {
        return None;
    }
    let n = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / n;
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    (sxx > 0.0).then(|| sxy / sxx)
}

/// Indices of agents left unallocated.
pub fn unallocated(allocation: &Allocation) -> impl Iterator<Item = usize> + '_ {
    allocation
        .assignments()
        .iter()
        .enumerate()
        .filter(|(_, a)| **a == Assignment::Unallocated)
        .map(|(i, _)| i)
}

/// Mean of a sample, `None` when empty.
pub fn mean(values: &[f64]) -> Option<f64> {
    summarize(values).mean
}

/// Writes `contents` to `dir/name` through a temporary file and a rename, so
/// readers never observe a partial file.
pub fn write_atomic(dir: &Path, name: &str, contents: &str) -> std::io::Result<()> {
    std::fs::create_dir_all(dir)?;
    let tmp = dir.join(format!(".{name}.tmp"));
    {
        let mut file = std::fs::File::create(&tmp)?;
        file.write_all(contents.as_bytes())?;
        file.sync_all()?;
    }
    std::fs::rename(&tmp, dir.join(name))
}
