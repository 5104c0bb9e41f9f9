//! Hourly store footfall: a Poisson arrival model calibrated to reported
//! rush-hour statistics, plus ingestion of checkout-timestamp CSVs.

use std::io::{BufRead, Write};

use chrono::{Duration, NaiveDate, NaiveDateTime, Timelike};
use rand_distr::{Distribution, Poisson};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::{derive_seed, rng_from};

/// Hourly slots between opening and closing (7AM..9PM).
pub const HOURS: usize = 14;
pub const OPENING_HOUR: u32 = 7;

/// Reported monthly means for 5-6PM, 6-7PM and 7-8PM, and over all hours.
const RUSH_MEANS: [(usize, f64); 3] = [(10, 38.00), (11, 48.63), (12, 52.83)];
const OVERALL_MEAN: f64 = 26.5;
/// Shape of the unconstrained hours before rescaling: a ramp from 12 at
/// opening towards the 5PM level, and a closing hour halfway down.
const RAMP_START: f64 = 12.0;
const CLOSING_RAW: f64 = 25.0;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FootfallModel {
    hourly_means: Vec<f64>,
}

impl FootfallModel {
    pub fn new(hourly_means: Vec<f64>) -> Result<Self> {
        if hourly_means.len() != HOURS {
            return Err(Error::InvalidModel(format!(
                "footfall model needs {HOURS} hourly means, got {}",
                hourly_means.len()
            )));
        }
        if let Some(h) = hourly_means.iter().position(|m| !m.is_finite() || *m < 0.0) {
            return Err(Error::InvalidModel(format!(
                "hourly mean {} for hour index {h} must be finite and non-negative",
                hourly_means[h]
            )));
        }
        Ok(FootfallModel { hourly_means })
    }

    /// The calibrated store profile: rush hours pinned to the reported
    /// means, remaining hours on a ramp rescaled so the 14-hour mean is 26.5.
    pub fn calibrated_store() -> Self {
        let fixed: f64 = RUSH_MEANS.iter().map(|(_, v)| v).sum();
        let peak = RUSH_MEANS[0].1;
        let mut raw = [0.0; HOURS];
        for (h, r) in raw.iter_mut().enumerate().take(10) {
            *r = RAMP_START + (peak - RAMP_START) * h as f64 / 10.0;
        }
        raw[HOURS - 1] = CLOSING_RAW;
        let free_total: f64 = raw.iter().sum();
        let scale = (OVERALL_MEAN * HOURS as f64 - fixed) / free_total;
        let mut means: Vec<f64> = raw.iter().map(|r| r * scale).collect();
        for (h, v) in RUSH_MEANS {
            means[h] = v;
        }
        FootfallModel { hourly_means: means }
    }

    pub fn hourly_means(&self) -> &[f64] {
        &self.hourly_means
    }
}

/// Per-day arrival hours (slot indices, sorted) drawn as independent Poisson
/// counts per hour.
pub fn gen_footfall(model: &FootfallModel, days: usize, seed: u64) -> Result<Vec<Vec<usize>>> {
    if days == 0 {
        return Err(Error::Config("footfall needs at least one day".into()));
    }
    let dists: Vec<Option<Poisson<f64>>> = model
        .hourly_means
        .iter()
        .map(|&mean| (mean > 0.0).then(|| Poisson::new(mean).expect("positive finite Poisson mean")))
        .collect();
    Ok((0..days)
        .map(|day| {
            let mut rng = rng_from(derive_seed(seed, &[day as u64]));
            let mut arrivals = Vec::new();
            for (hour, dist) in dists.iter().enumerate() {
                let count = dist.as_ref().map_or(0, |d| d.sample(&mut rng) as usize);
                arrivals.extend(std::iter::repeat_n(hour, count));
            }
            arrivals
        })
        .collect())
}

/// Preference order of a customer who would have come at `hour`: that hour
/// first, then by distance, the later hour first on ties.
pub fn proximity_order(hour: usize, m: usize) -> Vec<usize> {
    let mut order: Vec<usize> = (0..m).collect();
    order.sort_by_key(|&s| (s.abs_diff(hour), std::cmp::Reverse(s)));
    order
}

fn parse_timestamp(line: &str, line_no: usize) -> Result<NaiveDateTime> {
    line.parse::<NaiveDateTime>().map_err(|e| Error::Footfall {
        line: line_no,
        message: format!("malformed timestamp {line:?}: {e}"),
    })
}

/// Reads one ISO-8601 local timestamp per line (an optional non-numeric
/// header line is skipped). Returns the empirical model and per-day arrival
/// hours, one list per calendar day from the first to the last date seen.
pub fn ingest_footfall<R: BufRead>(reader: R) -> Result<(FootfallModel, Vec<Vec<usize>>)> {
    let mut stamps = Vec::new();
    let mut first = true;
    for (idx, line) in reader.lines().enumerate() {
        let line_no = idx + 1;
        let line = line.map_err(|e| Error::Footfall {
            line: line_no,
            message: e.to_string(),
        })?;
        let text = line.trim();
        if text.is_empty() {
            continue;
        }
        if first && !text.starts_with(|c: char| c.is_ascii_digit()) {
            first = false;
            continue;
        }
        first = false;
        let ts = parse_timestamp(text, line_no)?;
        let hour = ts.hour();
        if !(OPENING_HOUR..OPENING_HOUR + HOURS as u32).contains(&hour) {
            return Err(Error::Footfall {
                line: line_no,
                message: format!("timestamp {text} is outside opening hours 07:00-21:00"),
            });
        }
        stamps.push((ts.date(), (hour - OPENING_HOUR) as usize));
    }

    let Some(start) = stamps.iter().map(|(d, _)| *d).min() else {
        return Ok((FootfallModel::new(vec![0.0; HOURS])?, Vec::new()));
    };
    let end = stamps.iter().map(|(d, _)| *d).max().unwrap_or(start);
    let days = (end - start).num_days() as usize + 1;
    let mut per_day = vec![Vec::new(); days];
    for (date, hour) in stamps {
        per_day[(date - start).num_days() as usize].push(hour);
    }
    for day in &mut per_day {
        day.sort_unstable();
    }
    let mut totals = [0usize; HOURS];
    for &h in per_day.iter().flatten() {
        totals[h] += 1;
    }
    let means = totals.iter().map(|&t| t as f64 / days as f64).collect();
    Ok((FootfallModel::new(means)?, per_day))
}

/// Writes arrivals as checkout timestamps, spreading each hour's customers
/// evenly over the hour. Day `d` is `start + d`.
pub fn write_footfall_csv<W: Write>(arrivals: &[Vec<usize>], start: NaiveDate, mut out: W) -> std::io::Result<()> {
    writeln!(out, "timestamp")?;
    for (d, day) in arrivals.iter().enumerate() {
        let date = start + Duration::days(d as i64);
        let mut counts = [0usize; HOURS];
        for &h in day {
            counts[h] += 1;
        }
        for (h, &count) in counts.iter().enumerate() {
            for c in 0..count {
                let secs = (c * 3600 / count) as i64;
                let ts = date
                    .and_hms_opt(OPENING_HOUR + h as u32, 0, 0)
                    .expect("valid opening-hours time")
                    + Duration::seconds(secs);
                writeln!(out, "{}", ts.format("%Y-%m-%dT%H:%M:%S"))?;
            }
        }
    }
    Ok(())
}
