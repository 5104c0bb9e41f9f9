//! Acceptance run: one PASS/FAIL line per criterion. Tolerances and sizes are
//! pinned here. The exit code is non-zero on any failure, except a failure
//! the check itself proves no correct allocation could avoid on the sampled
//! data; that line still reads FAIL.

use std::panic::{catch_unwind, AssertUnwindSafe};
use std::time::{Duration, Instant};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use slotsched::baselines::sequential_dictator;
use slotsched::experiments::{
    bench_rows, congestion_csv, congestion_rows, loglog_slope, mispriority_csv, mispriority_rows, mispriority_trials,
    prioritization_outputs, prioritization_rows, priority_trials, summarize_priority, synthetic_arrivals,
    ExperimentConfig, PriorityRow,
};
use slotsched::metrics::{spearman, Urgency};
use slotsched::oracle;
use slotsched::simgen::{gen_population, instance_for, PreferenceRegime, ValuationModel, HOURS};
use slotsched::solver;
use slotsched::{payoff, run_period, validate, welfare, Allocation, Execution, Instance, MechanismConfig};

const TOL: f64 = 1e-9;
const SEED: u64 = 20_210_601;
/// Marks a failure that no correct allocation can avoid on the sampled data.
const UNATTAINABLE: &str = "unattainable on this sample";

type Verdict = Result<String, String>;
type Criterion<'a> = (&'static str, Box<dyn Fn() -> Verdict + 'a>);

fn check(ok: bool, detail: String) -> Verdict {
    if ok {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn random_instance(rng: &mut ChaCha8Rng, max_n: usize, max_m: usize, max_k: usize) -> Instance {
    let n = rng.random_range(1..=max_n);
    let m = rng.random_range(1..=max_m);
    let k = rng.random_range(1..=max_k);
    // A quarter of the corpus uses integer values to exercise ties.
    let integral = rng.random_bool(0.25);
    let valuations = (0..n)
        .map(|_| {
            (0..m)
                .map(|_| {
                    if integral {
                        rng.random_range(0..=10) as f64
                    } else {
                        rng.random_range(0.0..10.0)
                    }
                })
                .collect()
        })
        .collect();
    Instance::new(m, k, valuations).unwrap()
}

fn fuzz_corpus(count: usize) -> Vec<Instance> {
    let mut rng = ChaCha8Rng::seed_from_u64(SEED ^ 2);
    (0..count).map(|_| random_instance(&mut rng, 6, 3, 2)).collect()
}

fn oracle_equivalence() -> Verdict {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(SEED ^ 1);
    let total = 10_000;
    let mut mismatches = 0;
    for _ in 0..total {
        let inst = random_instance(&mut rng, 8, 4, 2);
        let alloc = solver::solve(&inst);
        let ours = welfare(&inst, &alloc).map_err(|e| e.to_string())?;
        let (_, exact) = oracle::solve_exact(&inst).map_err(|e| e.to_string())?;
        if ours != exact {
            mismatches += 1;
        }
    }
    let elapsed = start.elapsed();
    check(
        mismatches == 0 && elapsed < Duration::from_secs(60),
        format!(
            "{total} instances, {mismatches} welfare mismatches, {:.1}s (limit 60s)",
            elapsed.as_secs_f64()
        ),
    )
}

fn misreports(rng: &mut ChaCha8Rng, truth: &[f64]) -> Vec<Vec<f64>> {
    let m = truth.len();
    let mut shifted = truth.to_vec();
    shifted.rotate_left(1);
    let mut boosted = truth.to_vec();
    boosted[rng.random_range(0..m)] = 10.0;
    vec![
        (0..m).map(|_| rng.random_range(0.0..10.0)).collect(),
        vec![0.0; m],
        truth.iter().map(|v| v * 2.0).collect(),
        shifted,
        boosted,
    ]
}

fn truthfulness() -> Verdict {
    let mut rng = ChaCha8Rng::seed_from_u64(SEED ^ 3);
    let config = MechanismConfig::default();
    let mut triples = 0;
    let mut violations = 0;
    let mut worst = 0.0f64;
    for inst in fuzz_corpus(500) {
        let truthful = run_period(&inst, &config).map_err(|e| e.to_string())?;
        let agent = rng.random_range(0..inst.n());
        let honest = payoff(&inst, &truthful, agent).map_err(|e| e.to_string())?.value();
        for report in misreports(&mut rng, inst.row(agent)) {
            let lied = inst.with_report(agent, report).map_err(|e| e.to_string())?;
            let outcome = run_period(&lied, &config).map_err(|e| e.to_string())?;
            // Evaluate the misreport outcome under the true valuations.
            let gained = payoff(&inst, &outcome, agent).map_err(|e| e.to_string())?.value();
            triples += 1;
            if gained > honest + TOL {
                violations += 1;
                worst = worst.max(gained - honest);
            }
        }
    }
    check(
        triples >= 2000 && violations == 0,
        format!("{triples} triples, {violations} profitable misreports (worst gain {worst:e})"),
    )
}

fn individual_rationality() -> Verdict {
    let config = MechanismConfig::default();
    let (mut agents, mut bad_payoff, mut bad_delay, mut bad_unallocated) = (0, 0, 0, 0);
    for inst in fuzz_corpus(2000) {
        let outcome = run_period(&inst, &config).map_err(|e| e.to_string())?;
        for i in 0..inst.n() {
            agents += 1;
            let d = outcome.delays()[i];
            if payoff(&inst, &outcome, i).map_err(|e| e.to_string())?.value() < -TOL {
                bad_payoff += 1;
            }
            if d < -TOL {
                bad_delay += 1;
            }
            if !outcome.allocation().get(i).is_allocated() && d > TOL {
                bad_unallocated += 1;
            }
        }
    }
    check(
        bad_payoff + bad_delay + bad_unallocated == 0,
        format!(
            "{agents} agents: {bad_payoff} negative payoffs, {bad_delay} negative delays, \
             {bad_unallocated} charged unallocated agents"
        ),
    )
}

fn two_agent_example() -> Verdict {
    let inst = Instance::new(2, 1, vec![vec![51.0, 50.0], vec![50.0, 0.0]]).unwrap();
    let fast = run_period(&inst, &MechanismConfig::default()).map_err(|e| e.to_string())?;
    let exact = run_period(&inst, &MechanismConfig::oracle()).map_err(|e| e.to_string())?;
    let dictator = sequential_dictator(&inst, &[2.0, 1.0]).map_err(|e| e.to_string())?;
    let expected = Allocation::from_slots(&[Some(1), Some(0)]);
    let ok = fast.welfare() == 100.0
        && fast.allocation() == &expected
        && dictator.welfare() == 51.0
        && fast.delays() == [0.0, 1.0]
        && exact.delays() == fast.delays()
        && exact.welfare() == fast.welfare();
    check(
        ok,
        format!(
            "welfare {} with {:?}, delays {:?} (oracle {:?}), dictator welfare {}",
            fast.welfare(),
            fast.allocation().assignments(),
            fast.delays(),
            exact.delays(),
            dictator.welfare()
        ),
    )
}

fn class_row(rows: &[PriorityRow], urgency: Urgency) -> &PriorityRow {
    rows.iter().find(|r| r.urgency == urgency).expect("one row per class")
}

fn prioritization(cfg: &ExperimentConfig) -> Verdict {
    let start = Instant::now();
    let rows = prioritization_rows(cfg, PreferenceRegime::Identical, Execution::Parallel).map_err(|e| e.to_string())?;
    let elapsed = start.elapsed();
    let at20: Vec<PriorityRow> = rows.iter().filter(|r| r.n == 20).cloned().collect();
    let rank = |u| class_row(&at20, u).rank.mean.unwrap_or(f64::NAN);
    let (urgent, medium, relaxed) = (rank(Urgency::Urgent), rank(Urgency::Medium), rank(Urgency::NotUrgent));
    let trials = cfg.trials_for(20);

    // No agent may be left out while a less urgent one is served. When a
    // population has fewer not-urgent agents than the overflow n - mk, some
    // more urgent agent must go unallocated under any allocation; such
    // trials are counted separately.
    let capacity = cfg.m * cfg.k;
    let (mut overflow_trials, mut left_out, mut infeasible, mut inversions) = (0, 0, 0, 0);
    for n in capacity + 1..=cfg.max_population() {
        for trial in
            priority_trials(cfg, PreferenceRegime::Identical, n, Execution::Parallel).map_err(|e| e.to_string())?
        {
            overflow_trials += 1;
            let fates: Vec<(bool, Urgency)> = trial
                .allocation
                .assignments()
                .iter()
                .map(|a| a.is_allocated())
                .zip(trial.urgencies.iter().copied())
                .collect();
            if fates.iter().any(|&(served, u)| !served && u != Urgency::NotUrgent) {
                left_out += 1;
                let relaxed = trial.urgencies.iter().filter(|&&u| u == Urgency::NotUrgent).count();
                infeasible += usize::from(relaxed < n - capacity);
            }
            let worst_served = fates.iter().filter(|f| f.0).map(|f| f.1.level()).min();
            let best_unserved = fates.iter().filter(|f| !f.0).map(|f| f.1.level()).max();
            if let (Some(served), Some(unserved)) = (worst_served, best_unserved) {
                inversions += usize::from(unserved > served);
            }
        }
    }
    let detail = format!(
        "n=20 over {trials} trials: mean rank urgent {urgent:.3} < medium {medium:.3} < not-urgent {relaxed:.3}; \
         n>20: {left_out}/{overflow_trials} trials leave out an urgent or medium agent \
         ({infeasible} of them have fewer not-urgent agents than the overflow), \
         {inversions} trials serve a less urgent agent over a more urgent one; sweep {:.1}s (limit 120s)",
        elapsed.as_secs_f64()
    );
    let trend = trials >= 200 && medium - urgent > 0.2 && relaxed - medium > 0.2 && elapsed < Duration::from_secs(120);
    if trend && inversions == 0 && left_out > 0 && left_out == infeasible {
        return Err(format!("{detail} [{UNATTAINABLE}]"));
    }
    check(trend && left_out == 0 && inversions == 0, detail)
}

fn priority_delay(cfg: &ExperimentConfig) -> Verdict {
    let trials =
        priority_trials(cfg, PreferenceRegime::Identical, 20, Execution::Parallel).map_err(|e| e.to_string())?;
    let rows = summarize_priority(20, &trials).map_err(|e| e.to_string())?;
    let delay = |u| class_row(&rows, u).delay.mean.unwrap_or(f64::NAN);
    let (urgent, relaxed) = (delay(Urgency::Urgent), delay(Urgency::NotUrgent));
    check(
        trials.len() >= 200 && urgent > relaxed,
        format!(
            "{} trials at n=20: mean delay urgent {urgent:.4} > not-urgent {relaxed:.4}",
            trials.len()
        ),
    )
}

fn mispriority_trend(cfg: &ExperimentConfig) -> Verdict {
    let mut nonzero = 0;
    let mut trials = 0;
    for n in cfg.n_range() {
        for (_, mech) in mispriority_trials(cfg, n, Execution::Parallel).map_err(|e| e.to_string())? {
            trials += 1;
            nonzero += usize::from(mech != 0.0);
        }
    }
    let rows = mispriority_rows(cfg, Execution::Parallel).map_err(|e| e.to_string())?;
    let first = rows.first().expect("non-empty sweep");
    let last = rows.last().expect("non-empty sweep");
    let ns: Vec<f64> = rows.iter().map(|r| r.n as f64).collect();
    let fcfs: Vec<f64> = rows.iter().map(|r| r.fcfs).collect();
    let rho = spearman(&ns, &fcfs).unwrap_or(f64::NAN);
    check(
        nonzero == 0 && last.n == 22 && first.n == 2 && last.fcfs > first.fcfs && rho > 0.9,
        format!(
            "mechanism non-zero in {nonzero}/{trials} trials; FCFS mean {:.3} at n=2 vs {:.3} at n=22; Spearman {rho:.4}",
            first.fcfs, last.fcfs
        ),
    )
}

fn congestion(cfg: &ExperimentConfig) -> Verdict {
    let start = Instant::now();
    let arrivals = synthetic_arrivals(cfg).map_err(|e| e.to_string())?;
    let rows = congestion_rows(
        &arrivals,
        &[24, 30],
        &cfg.model().unwrap(),
        cfg.seed,
        Execution::Parallel,
    )
    .map_err(|e| e.to_string())?;
    let elapsed = start.elapsed();
    let cap = |c: usize| rows.iter().filter(move |r| r.capacity == c);
    let max_allocated = cap(24).map(|r| r.allocated_mean).fold(0.0, f64::max);
    let rush = |r: &&slotsched::experiments::CongestionRow| (17..20).contains(&r.hour);
    let base: f64 = cap(24).filter(rush).map(|r| r.baseline_mean).sum();
    let sched: f64 = cap(24).filter(rush).map(|r| r.allocated_mean).sum();
    let reduction = 1.0 - sched / base;
    let dropped = |c| cap(c).map(|r| r.dropped_count).sum::<usize>();
    check(
        rows.len() == 2 * HOURS
            && max_allocated <= 24.0
            && reduction >= 0.40
            && dropped(30) <= dropped(24)
            && elapsed < Duration::from_secs(120),
        format!(
            "{} days: max hourly allocated {max_allocated:.2} at cap 24, 5-8PM reduction {:.1}%, \
             dropped {} (cap 30) vs {} (cap 24), {:.1}s (limit 120s)",
            arrivals.len(),
            reduction * 100.0,
            dropped(30),
            dropped(24),
            elapsed.as_secs_f64()
        ),
    )
}

fn scalability(cfg: &ExperimentConfig) -> Verdict {
    let pop = gen_population(168, 14, PreferenceRegime::Random, SEED);
    let inst = instance_for(&pop, &ValuationModel::default(), 14, 12).map_err(|e| e.to_string())?;
    let start = Instant::now();
    let outcome = run_period(&inst, &MechanismConfig::sequential()).map_err(|e| e.to_string())?;
    let elapsed = start.elapsed();
    validate(&inst, outcome.allocation()).map_err(|e| e.to_string())?;
    let rows =
        bench_rows(12, &[1, 2, 4, 7, 14], 3, cfg.seed, MechanismConfig::sequential()).map_err(|e| e.to_string())?;
    let slope = loglog_slope(&rows).unwrap_or(f64::NAN);
    check(
        elapsed < Duration::from_secs(5) && slope < 5.0,
        format!(
            "m=14 k=12 n=168 sequential round {:.3}s (limit 5s); log-log slope {slope:.2} over m in {{1,2,4,7,14}}",
            elapsed.as_secs_f64()
        ),
    )
}

fn csv_bundle(cfg: &ExperimentConfig, exec: Execution) -> Result<Vec<(String, String)>, String> {
    let mut files = prioritization_outputs(cfg, exec).map_err(|e| e.to_string())?;
    let mis = mispriority_rows(cfg, exec).map_err(|e| e.to_string())?;
    files.push(("mispriority.csv".into(), mispriority_csv(&mis)));
    let short = ExperimentConfig { days: 4, ..cfg.clone() };
    let arrivals = synthetic_arrivals(&short).map_err(|e| e.to_string())?;
    let rows =
        congestion_rows(&arrivals, &[24, 30], &cfg.model().unwrap(), cfg.seed, exec).map_err(|e| e.to_string())?;
    files.push(("congestion.csv".into(), congestion_csv(&rows)));
    Ok(files)
}

fn determinism(cfg: &ExperimentConfig) -> Verdict {
    let first = csv_bundle(cfg, Execution::Parallel)?;
    let again = csv_bundle(cfg, Execution::Parallel)?;
    let sequential = csv_bundle(cfg, Execution::Sequential)?;
    let bytes: usize = first.iter().map(|(_, c)| c.len()).sum();
    check(
        first == again && first == sequential,
        format!(
            "{} CSV files ({bytes} bytes) identical across a repeat and a sequential run",
            first.len()
        ),
    )
}

fn main() {
    let cfg = ExperimentConfig::default();
    let criteria: Vec<Criterion> = vec![
        ("1 oracle equivalence", Box::new(oracle_equivalence)),
        ("2 truthfulness", Box::new(truthfulness)),
        (
            "3 individual rationality and delay sign",
            Box::new(individual_rationality),
        ),
        ("4 two-agent worked example", Box::new(two_agent_example)),
        ("5 prioritization trend", Box::new(|| prioritization(&cfg))),
        ("6 priority-delay trade-off", Box::new(|| priority_delay(&cfg))),
        ("7 mispriority", Box::new(|| mispriority_trend(&cfg))),
        ("8 congestion", Box::new(|| congestion(&cfg))),
        ("9 scalability", Box::new(|| scalability(&cfg))),
        ("10 determinism", Box::new(|| determinism(&cfg))),
    ];
    let (mut failed, mut unattainable) = (0, 0);
    for (name, run) in &criteria {
        let verdict = catch_unwind(AssertUnwindSafe(run)).unwrap_or_else(|_| Err("panicked".into()));
        match verdict {
            Ok(detail) => println!("PASS  {name}: {detail}"),
            Err(detail) if detail.ends_with(&format!("[{UNATTAINABLE}]")) => {
                unattainable += 1;
                println!("FAIL  {name}: {detail}");
            }
            Err(detail) => {
                failed += 1;
                println!("FAIL  {name}: {detail}");
            }
        }
    }
    println!(
        "{}/{} criteria passed, {failed} failed, {unattainable} unattainable on the sampled data",
        criteria.len() - failed - unattainable,
        criteria.len()
    );
    if failed > 0 {
        std::process::exit(1);
    }
}
