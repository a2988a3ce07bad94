//! Streaming intensity detector.
//!
//! Each announcement updates an exponentially decayed count
//! `Q(t) = 1 + 2^(-r * dt) * Q(t-1)` whose half-life is `1/r` seconds. An EMA
//! predictor tracks the mean `psi` and standard deviation `sigma` of `Q`, and
//! an event is anomalous when `Q(t) >= psi(t) + delta * sigma(t)`, with `psi`
//! and `sigma` already including `Q(t)`. The same band criterion applied to
//! per-second unique-prefix counts gives the volume baseline.

use std::collections::BTreeSet;
use std::io::Write;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::ingest::{Asn, EventSeries, Timestamp, VolumeSeries};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum DetectError {
    #[error("out-of-order timestamp {next} after {prev}")]
    OutOfOrder { prev: Timestamp, next: Timestamp },
    #[error("invalid detector config: {0}")]
    InvalidConfig(String),
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DetectorConfig {
    /// Decay factor in 1/seconds.
    pub r: f64,
    /// EMA window length in events.
    pub omega: u32,
    /// Band width in standard deviations.
    pub delta: f64,
    /// Number of leading observations whose flags are suppressed.
    pub warmup: usize,
    /// Lower bound applied to sigma in the flag test; 0 disables it.
    pub variance_floor: f64,
    /// Minimum announcements for burstiness statistics.
    pub min_events: usize,
    pub min_series_len: usize,
}

impl Default for DetectorConfig {
    fn default() -> Self {
        DetectorConfig {
            r: 1.0 / 300.0,
            omega: 200,
            delta: 2.0,
            warmup: 0,
            variance_floor: 1e-9,
            min_events: crate::burstiness::DEFAULT_MIN_EVENTS,
            min_series_len: 2,
        }
    }
}

impl DetectorConfig {
    /// Settings that reproduce the published runs: no warmup, no floor.
    pub fn published() -> Self {
        DetectorConfig { variance_floor: 0.0, ..Default::default() }
    }

    /// EMA weighting decrease `2 / (1 + omega)`.
    pub fn a(&self) -> f64 {
        2.0 / (1.0 + self.omega as f64)
    }

    pub fn validate(&self) -> Result<(), DetectError> {
        let bad = |m: &str| Err(DetectError::InvalidConfig(m.to_string()));
        if !(self.r > 0.0 && self.r.is_finite()) {
            return bad("r must be positive");
        }
        if self.omega < 1 {
            return bad("omega must be at least 1");
        }
        if !(self.delta > 0.0 && self.delta.is_finite()) {
            return bad("delta must be positive");
        }
        if self.variance_floor.is_nan() || self.variance_floor < 0.0 {
            return bad("variance_floor must be non-negative");
        }
        Ok(())
    }

    /// Overrides fields from `key=value` lines (`#` comments allowed). `r`
    /// also accepts a fraction such as `1/300`.
    pub fn apply_key_values(&mut self, text: &str) -> Result<(), DetectError> {
        for line in text.lines() {
            let line = line.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| DetectError::InvalidConfig(format!("expected key=value, got {line:?}")))?;
            self.set(key.trim(), value.trim())?;
        }
        self.validate()
    }

    pub fn set(&mut self, key: &str, value: &str) -> Result<(), DetectError> {
        fn num<T: FromStr>(key: &str, v: &str) -> Result<T, DetectError> {
            v.parse()
                .map_err(|_| DetectError::InvalidConfig(format!("bad value {v:?} for {key}")))
        }
        match key {
            "r" => {
                self.r = match value.split_once('/') {
                    Some((n, d)) => num::<f64>(key, n.trim())? / num::<f64>(key, d.trim())?,
                    None => num(key, value)?,
                }
            }
            "omega" => self.omega = num(key, value)?,
            "delta" => self.delta = num(key, value)?,
            "warmup" => self.warmup = num(key, value)?,
            "variance_floor" => self.variance_floor = num(key, value)?,
            "min_events" => self.min_events = num(key, value)?,
            "min_series_len" => self.min_series_len = num(key, value)?,
            _ => return Err(DetectError::InvalidConfig(format!("unknown key {key:?}"))),
        }
        Ok(())
    }

    /// JSON object or `key=value` text; missing keys keep their defaults.
    pub fn parse(text: &str) -> Result<Self, DetectError> {
        if text.trim_start().starts_with('{') {
            let cfg: DetectorConfig =
                serde_json::from_str(text).map_err(|e| DetectError::InvalidConfig(e.to_string()))?;
            cfg.validate()?;
            Ok(cfg)
        } else {
            let mut cfg = DetectorConfig::default();
            cfg.apply_key_values(text)?;
            Ok(cfg)
        }
    }
}

/// One step of the intensity recursion.
pub fn intensity_update(q: f64, dt: f64, r: f64) -> f64 {
    1.0 + (-r * dt).exp2() * q
}

/// One EMA step. The variance uses the mean from before this update.
/// Returns `(mean, variance, std)`.
pub fn ema_update(mean: f64, var: f64, y: f64, a: f64) -> (f64, f64, f64) {
    let resid = y - mean;
    let mean_next = a * y + (1.0 - a) * mean;
    let var_next = (1.0 - a) * (var + a * resid * resid);
    (mean_next, var_next, var_next.sqrt())
}

/// Mean and standard deviation forecast after an update.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Band {
    pub mean: f64,
    pub std: f64,
}

/// Anything that can stand in for the EMA predictor.
pub trait Predictor {
    fn update(&mut self, y: f64) -> Band;
}

#[derive(Clone, Debug, PartialEq)]
pub struct Ema {
    a: f64,
    mean: f64,
    var: f64,
}

impl Ema {
    /// Starts from mean 0 and variance 0.
    pub fn new(a: f64) -> Self {
        Ema { a, mean: 0.0, var: 0.0 }
    }

    pub fn with_window(omega: u32) -> Self {
        Ema::new(2.0 / (1.0 + omega as f64))
    }

    pub fn mean(&self) -> f64 {
        self.mean
    }

    pub fn var(&self) -> f64 {
        self.var
    }
}

impl Predictor for Ema {
    fn update(&mut self, y: f64) -> Band {
        let (mean, var, std) = ema_update(self.mean, self.var, y, self.a);
        self.mean = mean;
        self.var = var;
        Band { mean, std }
    }
}

/// Running state of one series.
#[derive(Clone, Debug, PartialEq)]
pub struct IntensityState {
    pub q: f64,
    pub last_ts: Option<Timestamp>,
    pub ema_mean: f64,
    pub ema_var: f64,
    pub events_seen: usize,
}

impl Default for IntensityState {
    fn default() -> Self {
        IntensityState { q: 0.0, last_ts: None, ema_mean: 0.0, ema_var: 0.0, events_seen: 0 }
    }
}

impl IntensityState {
    /// Advances `q` to `new_ts`. The first call only records the time.
    pub fn intensity_update(&mut self, new_ts: Timestamp, r: f64) -> Result<f64, DetectError> {
        if let Some(prev) = self.last_ts {
            if new_ts < prev {
                return Err(DetectError::OutOfOrder { prev, next: new_ts });
            }
            self.q = intensity_update(self.q, (new_ts - prev) as f64, r);
        }
        self.last_ts = Some(new_ts);
        self.events_seen += 1;
        Ok(self.q)
    }

    pub fn ema_update(&mut self, y: f64, a: f64) -> (f64, f64, f64) {
        let (m, v, s) = ema_update(self.ema_mean, self.ema_var, y, a);
        self.ema_mean = m;
        self.ema_var = v;
        (m, v, s)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct TracePoint {
    pub ts: Timestamp,
    /// `Q` for the intensity detector, the prefix count for volume.
    pub q: f64,
    pub psi: f64,
    pub sigma: f64,
    pub flag: bool,
}

/// Event-at-a-time detector for one series.
pub struct StreamingDetector<P = Ema> {
    config: DetectorConfig,
    state: IntensityState,
    predictor: P,
}

impl StreamingDetector<Ema> {
    pub fn new(config: DetectorConfig) -> Self {
        let predictor = Ema::with_window(config.omega);
        StreamingDetector::with_predictor(config, predictor)
    }
}

impl<P: Predictor> StreamingDetector<P> {
    pub fn with_predictor(config: DetectorConfig, predictor: P) -> Self {
        StreamingDetector { config, state: IntensityState::default(), predictor }
    }

    pub fn state(&self) -> &IntensityState {
        &self.state
    }

    /// Feeds the next announcement time. The first event only seeds the
    /// clock and is never flagged.
    pub fn push(&mut self, ts: Timestamp) -> Result<TracePoint, DetectError> {
        let first = self.state.last_ts.is_none();
        let q = self.state.intensity_update(ts, self.config.r)?;
        if first {
            return Ok(TracePoint { ts, q, psi: 0.0, sigma: 0.0, flag: false });
        }
        let band = self.predictor.update(q);
        self.state.ema_mean = band.mean;
        self.state.ema_var = band.std * band.std;
        let index = self.state.events_seen - 1;
        let flag = index > self.config.warmup && exceeds(q, band, &self.config);
        Ok(TracePoint { ts, q, psi: band.mean, sigma: band.std, flag })
    }
}

fn exceeds(y: f64, band: Band, config: &DetectorConfig) -> bool {
    y >= band.mean + config.delta * band.std.max(config.variance_floor)
}

#[derive(Copy, Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DetectorKind {
    Burstiness,
    Volume,
}

impl DetectorKind {
    pub fn name(self) -> &'static str {
        match self {
            DetectorKind::Burstiness => "burstiness",
            DetectorKind::Volume => "volume",
        }
    }
}

impl FromStr for DetectorKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "burstiness" => Ok(DetectorKind::Burstiness),
            "volume" => Ok(DetectorKind::Volume),
            _ => Err(format!("unknown detector {s:?}")),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AnomalyReport {
    pub asn: Asn,
    pub collector: String,
    pub detector: DetectorKind,
    pub anomalous_timestamps: BTreeSet<Timestamp>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub trace: Option<Vec<TracePoint>>,
}

impl AnomalyReport {
    fn empty(asn: Asn, collector: &str, detector: DetectorKind) -> Self {
        AnomalyReport {
            asn,
            collector: collector.to_string(),
            detector,
            anomalous_timestamps: BTreeSet::new(),
            trace: None,
        }
    }

    pub fn write_trace_csv<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        writeln!(out, "ts,q,psi,sigma,flag")?;
        for p in self.trace.iter().flatten() {
            writeln!(out, "{},{},{},{},{}", p.ts, p.q, p.psi, p.sigma, p.flag as u8)?;
        }
        out.flush()
    }
}

pub fn detect_events(series: &EventSeries, config: &DetectorConfig) -> Result<AnomalyReport, DetectError> {
    run_events(series, config, false)
}

/// As [`detect_events`], keeping the per-event trace.
pub fn detect_events_traced(series: &EventSeries, config: &DetectorConfig) -> Result<AnomalyReport, DetectError> {
    run_events(series, config, true)
}

fn run_events(series: &EventSeries, config: &DetectorConfig, keep_trace: bool) -> Result<AnomalyReport, DetectError> {
    config.validate()?;
    let mut report = AnomalyReport::empty(series.origin_asn, &series.collector, DetectorKind::Burstiness);
    if series.len() < config.min_series_len.max(2) {
        return Ok(report);
    }
    let mut detector = StreamingDetector::new(*config);
    let mut trace = keep_trace.then(|| Vec::with_capacity(series.len()));
    for &ts in series.timestamps() {
        let point = detector.push(ts)?;
        if point.flag {
            report.anomalous_timestamps.insert(ts);
        }
        if let Some(t) = trace.as_mut() {
            t.push(point);
        }
    }
    report.trace = trace;
    Ok(report)
}

pub fn detect_volume(volume: &VolumeSeries, config: &DetectorConfig) -> Result<AnomalyReport, DetectError> {
    run_volume(volume, config, false)
}

pub fn detect_volume_traced(volume: &VolumeSeries, config: &DetectorConfig) -> Result<AnomalyReport, DetectError> {
    run_volume(volume, config, true)
}

/// Every point is an observation, including the first; there is no
/// inter-arrival to wait for.
fn run_volume(volume: &VolumeSeries, config: &DetectorConfig, keep_trace: bool) -> Result<AnomalyReport, DetectError> {
    config.validate()?;
    let mut report = AnomalyReport::empty(volume.origin_asn, &volume.collector, DetectorKind::Volume);
    if volume.len() < config.min_series_len.max(1) {
        return Ok(report);
    }
    let mut ema = Ema::with_window(config.omega);
    let mut trace = keep_trace.then(|| Vec::with_capacity(volume.len()));
    let mut prev: Option<Timestamp> = None;
    for (i, &(ts, count)) in volume.points.iter().enumerate() {
        if let Some(p) = prev.filter(|&p| ts <= p) {
            return Err(DetectError::OutOfOrder { prev: p, next: ts });
        }
        prev = Some(ts);
        let y = count as f64;
        let band = ema.update(y);
        let flag = i + 1 > config.warmup && exceeds(y, band, config);
        if flag {
            report.anomalous_timestamps.insert(ts);
        }
        if let Some(t) = trace.as_mut() {
            t.push(TracePoint { ts, q: y, psi: band.mean, sigma: band.std, flag });
        }
    }
    report.trace = trace;
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;

    fn series(ts: Vec<u64>) -> EventSeries {
        EventSeries::new(Asn(1), "rv", ts)
    }

    #[test]
    fn default_config_values() {
        let c = DetectorConfig::default();
        assert_eq!(c.r, 1.0 / 300.0);
        assert_eq!(c.omega, 200);
        assert_eq!(c.delta, 2.0);
        assert_eq!(c.a(), 2.0 / 201.0);
        assert_eq!(c.warmup, 0);
        c.validate().unwrap();
    }

    #[test]
    fn config_parsing() {
        let c = DetectorConfig::parse("r = 1/600\nomega=50 # shorter\ndelta=3\n").unwrap();
        assert_eq!(c.r, 1.0 / 600.0);
        assert_eq!(c.omega, 50);
        assert_eq!(c.delta, 3.0);
        let c = DetectorConfig::parse(r#"{"delta": 2.5, "warmup": 10}"#).unwrap();
        assert_eq!(c.delta, 2.5);
        assert_eq!(c.warmup, 10);
        assert_eq!(c.omega, 200);
        assert!(DetectorConfig::parse("bogus=1").is_err());
        assert!(DetectorConfig::parse("delta=-1").is_err());
        assert!(DetectorConfig::parse("omega=0").is_err());
        assert!(DetectorConfig::parse(r#"{"nope": 1}"#).is_err());
    }

    #[test]
    fn intensity_examples() {
        assert_eq!(intensity_update(0.0, 12345.0, 1.0 / 300.0), 1.0);
        assert_eq!(intensity_update(1.0, 300.0, 1.0 / 300.0), 1.5);
        assert_eq!(intensity_update(1.0, 0.0, 1.0 / 300.0), 2.0);
        let mut q = 0.0;
        for _ in 0..200 {
            q = intensity_update(q, 300.0, 1.0 / 300.0);
        }
        assert_abs_diff_eq!(q, 2.0, epsilon = 1e-12);
    }

    #[test]
    fn state_rejects_out_of_order() {
        let mut s = IntensityState::default();
        s.intensity_update(10, 0.01).unwrap();
        assert_eq!(s.intensity_update(20, 0.01).unwrap(), 1.0);
        assert_eq!(s.intensity_update(5, 0.01), Err(DetectError::OutOfOrder { prev: 20, next: 5 }));
    }

    #[test]
    fn ema_examples() {
        assert_eq!(ema_update(3.0, 0.0, 3.0, 0.1), (3.0, 0.0, 0.0));
        assert_eq!(ema_update(0.0, 0.0, 1.0, 0.5), (0.5, 0.25, 0.5));
    }

    #[test]
    fn two_event_series() {
        // Q(1) = 1, psi = a, var = (1 - a) * a; flagged since 1 >= a + 2 sqrt((1-a)a)
        let a: f64 = 2.0 / 201.0;
        let expected = 1.0 >= a + 2.0 * ((1.0 - a) * a).sqrt();
        let r = detect_events_traced(&series(vec![100, 160]), &DetectorConfig::published()).unwrap();
        assert_eq!(r.anomalous_timestamps.contains(&160), expected);
        assert!(expected);
        assert!(!r.anomalous_timestamps.contains(&100));
        let trace = r.trace.unwrap();
        assert_eq!(trace.len(), 2);
        assert_eq!(trace[0].q, 0.0);
        assert_eq!(trace[1].q, 1.0);
        assert_abs_diff_eq!(trace[1].psi, a, epsilon = 1e-15);
    }

    #[test]
    fn short_series_empty_report() {
        let r = detect_events(&series(vec![5]), &DetectorConfig::default()).unwrap();
        assert!(r.anomalous_timestamps.is_empty());
        let cfg = DetectorConfig { min_series_len: 10, ..Default::default() };
        let r = detect_events(&series((0..9).collect()), &cfg).unwrap();
        assert!(r.anomalous_timestamps.is_empty());
    }

    #[test]
    fn regular_series_flags_only_early_events() {
        // reference transcription: flags stop after event 23 for 300 s spacing
        let ts: Vec<u64> = (0..500).map(|i| i * 300).collect();
        let r = detect_events(&series(ts), &DetectorConfig::published()).unwrap();
        let flagged: Vec<u64> = r.anomalous_timestamps.iter().map(|t| t / 300).collect();
        assert_eq!(flagged, (1..=23).collect::<Vec<_>>());
    }

    #[test]
    fn warmup_suppresses_early_flags() {
        let ts: Vec<u64> = (0..500).map(|i| i * 300).collect();
        let cfg = DetectorConfig { warmup: 30, ..DetectorConfig::published() };
        assert!(detect_events(&series(ts), &cfg).unwrap().anomalous_timestamps.is_empty());
    }

    #[test]
    fn floor_stops_zero_variance_flagging() {
        // omega = 1 gives a = 1: psi tracks Q exactly and sigma is 0, so
        // without a floor Q >= psi + delta * sigma holds for every event
        let ts: Vec<u64> = (0..50).map(|i| i * 300).collect();
        let raw = DetectorConfig { omega: 1, ..DetectorConfig::published() };
        let r = detect_events(&series(ts.clone()), &raw).unwrap();
        assert_eq!(r.anomalous_timestamps.len(), 49);
        let floored = DetectorConfig { omega: 1, ..DetectorConfig::default() };
        assert!(detect_events(&series(ts), &floored).unwrap().anomalous_timestamps.is_empty());
    }

    #[test]
    fn volume_examples() {
        let cfg = DetectorConfig::default();
        let flat = VolumeSeries {
            collector: "rv".into(),
            origin_asn: Asn(1),
            points: (0..1000).map(|i| (i * 60, 1)).collect(),
        };
        let r = detect_volume(&flat, &cfg).unwrap();
        assert!(r.anomalous_timestamps.iter().all(|&t| t < 100 * 60), "{:?}", r.anomalous_timestamps);

        let mut spiky = flat.clone();
        spiky.points[600].1 = 10_000;
        let r = detect_volume(&spiky, &cfg).unwrap();
        assert!(r.anomalous_timestamps.contains(&(600 * 60)));

        let empty = VolumeSeries { collector: "rv".into(), origin_asn: Asn(1), points: vec![] };
        assert!(detect_volume(&empty, &cfg).unwrap().anomalous_timestamps.is_empty());
        assert_eq!(detect_volume(&empty, &cfg).unwrap().detector, DetectorKind::Volume);
    }

    #[test]
    fn trace_csv_layout() {
        let r = detect_events_traced(&series(vec![0, 10, 20]), &DetectorConfig::default()).unwrap();
        let mut buf = Vec::new();
        r.write_trace_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines[0], "ts,q,psi,sigma,flag");
        assert_eq!(lines.len(), 4);
        assert!(lines[1].starts_with("0,0,0,0,0"));
    }

    /// Records every band it is asked for; used to check the predictor seam.
    struct Fixed(Band);

    impl Predictor for Fixed {
        fn update(&mut self, _y: f64) -> Band {
            self.0
        }
    }

    #[test]
    fn custom_predictor() {
        let cfg = DetectorConfig::default();
        let mut d = StreamingDetector::with_predictor(cfg, Fixed(Band { mean: 1.5, std: 0.1 }));
        assert!(!d.push(0).unwrap().flag);
        assert!(!d.push(1000).unwrap().flag); // q ~ 1.0
        assert!(d.push(1000).unwrap().flag); // q ~ 2.0
    }

    proptest! {
        #[test]
        fn q_shift_invariant(gaps in prop::collection::vec(0u64..5000, 1..300), shift in 0u64..1_000_000_000) {
            let mut ts = vec![0u64];
            for g in &gaps { ts.push(ts.last().unwrap() + g); }
            let shifted: Vec<u64> = ts.iter().map(|t| t + shift).collect();
            let a = detect_events_traced(&series(ts), &DetectorConfig::default()).unwrap().trace.unwrap();
            let b = detect_events_traced(&series(shifted), &DetectorConfig::default()).unwrap().trace.unwrap();
            for (x, y) in a.iter().zip(&b) {
                prop_assert_eq!(x.q, y.q);
                prop_assert_eq!(x.flag, y.flag);
            }
        }

        #[test]
        fn q_bounded_by_min_gap(g in 1u64..2000, extra in prop::collection::vec(0u64..5000, 1..300)) {
            let r = 1.0 / 300.0;
            let bound = 1.0 / (1.0 - (-r * g as f64).exp2());
            let mut t = 0u64;
            let mut s = IntensityState::default();
            s.intensity_update(t, r).unwrap();
            for e in extra {
                t += g + e;
                let q = s.intensity_update(t, r).unwrap();
                prop_assert!(q <= bound * (1.0 + 1e-12));
            }
        }

        #[test]
        fn ema_mean_stays_in_range(ys in prop::collection::vec(-100.0f64..100.0, 1..500), omega in 1u32..400) {
            let lo = ys.iter().cloned().fold(f64::INFINITY, f64::min);
            let hi = ys.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            let a = 2.0 / (1.0 + omega as f64);
            let (mut mean, mut var) = (ys[0], 0.0);
            for &y in &ys {
                let (m, v, s) = ema_update(mean, var, y, a);
                prop_assert!(m >= lo - 1e-9 && m <= hi + 1e-9);
                prop_assert!(v >= 0.0 && s >= 0.0);
                mean = m;
                var = v;
            }
        }

        #[test]
        fn flags_invariant_under_joint_scaling(ys in prop::collection::vec(0.0f64..100.0, 2..300), k in 0u32..8) {
            // power-of-two scaling keeps every floating-point step exact
            let s = (1u64 << k) as f64;
            let cfg = DetectorConfig::published();
            let flags = |scale: f64| {
                let mut ema = Ema::with_window(cfg.omega);
                ys.iter().map(|&y| exceeds(y * scale, ema.update(y * scale), &cfg)).collect::<Vec<_>>()
            };
            prop_assert_eq!(flags(1.0), flags(s));
        }
    }
}
