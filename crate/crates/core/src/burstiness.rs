//! Inter-arrival burstiness statistics.
//!
//! The burstiness of an inter-arrival distribution with mean `mu` and
//! standard deviation `sigma` is `B = (sigma - mu) / (sigma + mu)`: −1 for a
//! perfectly regular sequence, 0 for a Poisson process, approaching 1 for
//! highly bursty sequences. Short sequences bias `B`, so per-AS comparisons
//! use the finite-size corrected `B(n)` where `n` is the number of events.

use std::io::Write;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::ingest::{Asn, EventSeries};
use crate::time::TimeWindow;

/// Announcement threshold below which burstiness is not reported.
pub const DEFAULT_MIN_EVENTS: usize = 5;
pub const DEFAULT_NULL_SAMPLES: usize = 100;
pub const DEFAULT_SIGNIFICANCE: f64 = 0.05;
pub const MIN_USABLE_NULL_WINDOWS: usize = 20;
pub const QUADRANT_PERCENTILE: f64 = 95.0;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum StatsError {
    #[error("burstiness undefined: {0}")]
    Undefined(&'static str),
    #[error("insufficient data: {n_events} events, at least {min_events} required")]
    InsufficientData { n_events: usize, min_events: usize },
    #[error("degenerate table: {qualifying} qualifying ASes, at least 2 required")]
    DegenerateTable { qualifying: usize },
    #[error("insufficient null data: {usable} usable null windows, at least {required} required")]
    InsufficientNullData { usable: usize, required: usize },
    #[error("null window {null:?} overlaps incident window {incident:?}")]
    NullOverlapsIncident { null: TimeWindow, incident: TimeWindow },
}

/// Gaps between consecutive events of one series.
#[derive(Clone, Debug, PartialEq)]
pub struct InterArrivalSample {
    intervals: Vec<f64>,
    n_events: usize,
}

impl InterArrivalSample {
    /// A sample of `intervals.len() + 1` events. Panics on negative gaps.
    pub fn from_intervals(intervals: Vec<f64>) -> Self {
        assert!(intervals.iter().all(|&x| x >= 0.0), "negative inter-arrival time");
        let n_events = intervals.len() + 1;
        InterArrivalSample { intervals, n_events }
    }

    pub fn intervals(&self) -> &[f64] {
        &self.intervals
    }

    pub fn n_events(&self) -> usize {
        self.n_events
    }
}

pub fn inter_arrivals(series: &EventSeries) -> InterArrivalSample {
    let ts = series.timestamps();
    InterArrivalSample {
        intervals: ts.windows(2).map(|w| (w[1] - w[0]) as f64).collect(),
        n_events: ts.len(),
    }
}

/// Mean and population standard deviation.
fn mean_std(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    let var = xs.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / n;
    (mean, var.sqrt())
}

fn raw_from(sample: &InterArrivalSample) -> Result<(f64, f64, f64), StatsError> {
    if sample.intervals.is_empty() {
        return Err(StatsError::Undefined("no inter-arrival times"));
    }
    let (mu, sigma) = mean_std(&sample.intervals);
    if mu + sigma <= 0.0 {
        return Err(StatsError::Undefined("all inter-arrival times are zero"));
    }
    let b = ((sigma - mu) / (sigma + mu)).clamp(-1.0, 1.0);
    Ok((mu, sigma, b))
}

pub fn burstiness_raw(sample: &InterArrivalSample) -> Result<f64, StatsError> {
    raw_from(sample).map(|(_, _, b)| b)
}

/// Finite-size correction of a raw burstiness `b` measured on `n` events.
pub fn finite_size_correction(b: f64, n: usize) -> f64 {
    let n = n as f64;
    let up = (n + 1.0).sqrt();
    let down = (n - 1.0).sqrt();
    let num = up - down + (up + down) * b;
    let den = up + down - 2.0 + (up - down - 2.0) * b;
    (num / den).clamp(-1.0, 1.0)
}

pub fn burstiness_corrected(sample: &InterArrivalSample, min_events: usize) -> Result<f64, StatsError> {
    if sample.n_events < min_events.max(2) {
        return Err(StatsError::InsufficientData { n_events: sample.n_events, min_events });
    }
    let b = burstiness_raw(sample)?;
    Ok(finite_size_correction(b, sample.n_events))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BurstinessResult {
    pub mu: f64,
    pub sigma: f64,
    pub b_raw: f64,
    /// `None` below the minimum event count.
    pub b_corrected: Option<f64>,
    pub n_events: usize,
}

impl BurstinessResult {
    pub fn compute(sample: &InterArrivalSample, min_events: usize) -> Result<Self, StatsError> {
        let (mu, sigma, b_raw) = raw_from(sample)?;
        let b_corrected = (sample.n_events >= min_events.max(2))
            .then(|| finite_size_correction(b_raw, sample.n_events));
        Ok(BurstinessResult { mu, sigma, b_raw, b_corrected, n_events: sample.n_events })
    }

    pub fn of_series(series: &EventSeries, min_events: usize) -> Result<Self, StatsError> {
        Self::compute(&inter_arrivals(series), min_events)
    }
}

/// Linear-interpolation percentile (`p` in [0, 100]) of unsorted values.
pub fn percentile(values: &[f64], p: f64) -> f64 {
    assert!(!values.is_empty(), "percentile of empty set");
    let mut sorted = values.to_vec();
    sorted.sort_by(f64::total_cmp);
    let rank = p / 100.0 * (sorted.len() - 1) as f64;
    let lo = rank.floor() as usize;
    let hi = rank.ceil() as usize;
    sorted[lo] + (sorted[hi] - sorted[lo]) * (rank - lo as f64)
}

/// Position relative to the two 95th-percentile thresholds, with
/// burstiness on the horizontal axis and announcement count on the
/// vertical axis. "High" means strictly above the threshold.
#[derive(Copy, Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Quadrant {
    /// high burstiness, high count
    First = 1,
    /// low burstiness, high count
    Second = 2,
    /// low burstiness, low count
    Third = 3,
    /// high burstiness, low count
    Fourth = 4,
}

impl Quadrant {
    pub fn classify(b: f64, count: usize, b_threshold: f64, count_threshold: f64) -> Self {
        match (b > b_threshold, count as f64 > count_threshold) {
            (true, true) => Quadrant::First,
            (false, true) => Quadrant::Second,
            (false, false) => Quadrant::Third,
            (true, false) => Quadrant::Fourth,
        }
    }

    pub fn number(self) -> u8 {
        self as u8
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct JointRow {
    pub asn: Asn,
    pub b_corrected: f64,
    pub count: usize,
    pub quadrant: Quadrant,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SkippedAs {
    pub asn: Asn,
    pub count: usize,
    pub reason: String,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct JointActivityTable {
    pub window: TimeWindow,
    /// Sorted by ASN.
    pub rows: Vec<JointRow>,
    pub b_p95: f64,
    pub count_p95: f64,
    pub min_events: usize,
    pub skipped: Vec<SkippedAs>,
}

#[derive(Serialize)]
struct JointSidecar<'a> {
    window: &'a TimeWindow,
    b_p95: f64,
    count_p95: f64,
    min_events: usize,
    skipped: &'a [SkippedAs],
}

impl JointActivityTable {
    pub fn row(&self, asn: Asn) -> Option<&JointRow> {
        self.rows.iter().find(|r| r.asn == asn)
    }

    pub fn write_csv<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        writeln!(out, "asn,b_corrected,count,quadrant")?;
        for r in &self.rows {
            writeln!(out, "{},{},{},{}", r.asn.0, r.b_corrected, r.count, r.quadrant.number())?;
        }
        out.flush()
    }

    /// Thresholds, window and skipped ASes as JSON.
    pub fn sidecar_json(&self) -> serde_json::Value {
        serde_json::to_value(JointSidecar {
            window: &self.window,
            b_p95: self.b_p95,
            count_p95: self.count_p95,
            min_events: self.min_events,
            skipped: &self.skipped,
        })
        .expect("sidecar serializes")
    }
}

/// Per-AS corrected burstiness against announcement count within one
/// window of one collector.
pub fn joint_distribution(
    corpus: &[EventSeries],
    window: TimeWindow,
    min_events: usize,
) -> Result<JointActivityTable, StatsError> {
    let mut qualifying: Vec<(Asn, f64, usize)> = Vec::new();
    let mut skipped = Vec::new();
    for series in corpus {
        let inside = series.window(window.start, window.end);
        let count = inside.len();
        match BurstinessResult::of_series(&inside, min_events) {
            Ok(BurstinessResult { b_corrected: Some(b), .. }) => qualifying.push((series.origin_asn, b, count)),
            Ok(_) => skipped.push(SkippedAs {
                asn: series.origin_asn,
                count,
                reason: StatsError::InsufficientData { n_events: count, min_events }.to_string(),
            }),
            Err(e) => skipped.push(SkippedAs { asn: series.origin_asn, count, reason: e.to_string() }),
        }
    }
    if qualifying.len() < 2 {
        return Err(StatsError::DegenerateTable { qualifying: qualifying.len() });
    }
    qualifying.sort_by_key(|&(asn, _, _)| asn);
    skipped.sort_by_key(|s| s.asn);

    let bs: Vec<f64> = qualifying.iter().map(|q| q.1).collect();
    let counts: Vec<f64> = qualifying.iter().map(|q| q.2 as f64).collect();
    let b_p95 = percentile(&bs, QUADRANT_PERCENTILE);
    let count_p95 = percentile(&counts, QUADRANT_PERCENTILE);

    let rows = qualifying
        .into_iter()
        .map(|(asn, b, count)| JointRow {
            asn,
            b_corrected: b,
            count,
            quadrant: Quadrant::classify(b, count, b_p95, count_p95),
        })
        .collect();
    Ok(JointActivityTable { window, rows, b_p95, count_p95, min_events, skipped })
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct NullTestConfig {
    /// Maximum number of null samples used.
    pub samples: usize,
    /// Two-sided significance level.
    pub alpha: f64,
    pub min_events: usize,
}

impl Default for NullTestConfig {
    fn default() -> Self {
        NullTestConfig {
            samples: DEFAULT_NULL_SAMPLES,
            alpha: DEFAULT_SIGNIFICANCE,
            min_events: DEFAULT_MIN_EVENTS,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SignificanceResult {
    pub observed_b: f64,
    pub null_samples: Vec<f64>,
    /// Rank-based p-value of the tail the observation falls in:
    /// `(1 + #{null >= observed}) / (1 + K)` for the upper tail.
    pub empirical_p: f64,
    pub two_sided_p: f64,
    pub alpha: f64,
    pub significant: bool,
    /// Acceptance band `[lower, upper]`; the observation is significant iff
    /// it lies strictly outside. `None` when K is too small for any
    /// observation to reach the level.
    pub band: Option<(f64, f64)>,
    pub skipped_windows: usize,
}

/// Compares an observed corrected burstiness with the distribution over
/// incident-free windows of the same AS and collector.
pub fn monte_carlo_null_test(
    null_windows: &[EventSeries],
    observed: &BurstinessResult,
    config: &NullTestConfig,
) -> Result<SignificanceResult, StatsError> {
    let observed_b = observed.b_corrected.ok_or(StatsError::InsufficientData {
        n_events: observed.n_events,
        min_events: config.min_events,
    })?;
    let mut null_samples = Vec::with_capacity(config.samples);
    let mut skipped_windows = 0;
    for window in null_windows {
        if null_samples.len() == config.samples {
            break;
        }
        match BurstinessResult::of_series(window, config.min_events) {
            Ok(BurstinessResult { b_corrected: Some(b), .. }) => null_samples.push(b),
            _ => skipped_windows += 1,
        }
    }
    if null_samples.len() < MIN_USABLE_NULL_WINDOWS {
        return Err(StatsError::InsufficientNullData {
            usable: null_samples.len(),
            required: MIN_USABLE_NULL_WINDOWS,
        });
    }

    Ok(rank_test(observed_b, null_samples, config.alpha, skipped_windows))
}

fn rank_test(observed_b: f64, null_samples: Vec<f64>, alpha: f64, skipped_windows: usize) -> SignificanceResult {
    let k = null_samples.len();
    let at_or_above = null_samples.iter().filter(|&&b| b >= observed_b).count();
    let at_or_below = null_samples.iter().filter(|&&b| b <= observed_b).count();
    let tail_count = at_or_above.min(at_or_below);
    let empirical_p = (1 + tail_count) as f64 / (1 + k) as f64;
    let two_sided_p = (2.0 * empirical_p).min(1.0);

    // Largest tail count that still reaches the level; the band edges are
    // the order statistics just inside it.
    let critical = (alpha / 2.0 * (k + 1) as f64 - 1.0 + 1e-9).floor();
    let (significant, band) = if critical < 0.0 {
        (false, None)
    } else {
        let c = critical as usize;
        let mut sorted = null_samples.clone();
        sorted.sort_by(f64::total_cmp);
        let band = (c < k).then(|| (sorted[c], sorted[k - 1 - c]));
        (tail_count <= c, band)
    };

    SignificanceResult {
        observed_b,
        null_samples,
        empirical_p,
        two_sided_p,
        alpha,
        significant,
        band,
        skipped_windows,
    }
}

/// Null windows must be incident-free.
pub fn check_null_windows(null: &[TimeWindow], incidents: &[TimeWindow]) -> Result<(), StatsError> {
    for n in null {
        if let Some(i) = incidents.iter().find(|i| i.overlaps(n)) {
            return Err(StatsError::NullOverlapsIncident { null: *n, incident: *i });
        }
    }
    Ok(())
}
