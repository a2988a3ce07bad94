//! Binned precision/recall scoring against ground-truth incident windows.
//!
//! The study period `[t0, t1)` is cut into consecutive bins of `m` seconds
//! (the last one may be short). A bin is ground truth when it overlaps the
//! incident window and detected when it holds at least one flagged
//! timestamp.

use std::collections::BTreeSet;
use std::io::Write;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::detector::AnomalyReport;
use crate::ingest::{Asn, Timestamp};
use crate::time::{format_rfc3339, parse_rfc3339, TimeError, TimeWindow};

/// Detection resolution: three hours.
pub const DEFAULT_BIN_SECONDS: u64 = 3 * 3600;

const BUILTIN_INCIDENTS: &str = include_str!("../data/incidents.json");

#[derive(Debug, Error, Clone, PartialEq)]
pub enum EvalError {
    #[error("{} timestamps outside study bounds [{t0}, {t1}): {offenders:?}", offenders.len())]
    OutOfBounds { t0: Timestamp, t1: Timestamp, offenders: Vec<Timestamp> },
    #[error("incident {name:?} [{start}, {end}) is not inside study bounds [{t0}, {t1})")]
    WindowOutsideBounds { name: String, start: Timestamp, end: Timestamp, t0: Timestamp, t1: Timestamp },
    #[error("incidents {0:?} and {1:?} overlap")]
    OverlappingIncidents(String, String),
    #[error("invalid incident config: {0}")]
    Config(String),
    #[error("bin length must be positive")]
    ZeroBinLength,
    #[error(transparent)]
    Time(#[from] TimeError),
}

#[derive(Copy, Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum IncidentKind {
    LargeScale,
    Interception,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct IncidentWindow {
    pub name: String,
    pub perpetrator_asn: Asn,
    pub window: TimeWindow,
    pub kind: IncidentKind,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct IncidentRecord {
    name: String,
    asn: u32,
    start_utc: String,
    end_utc: String,
    kind: IncidentKind,
}

impl IncidentWindow {
    fn from_record(r: IncidentRecord) -> Result<Self, EvalError> {
        let start = parse_rfc3339(&r.start_utc)?;
        let end = parse_rfc3339(&r.end_utc)?;
        let window = TimeWindow::new(start, end)
            .map_err(|_| EvalError::Config(format!("incident {:?}: start must precede end", r.name)))?;
        Ok(IncidentWindow { name: r.name, perpetrator_asn: Asn(r.asn), window, kind: r.kind })
    }

    fn to_record(&self) -> IncidentRecord {
        IncidentRecord {
            name: self.name.clone(),
            asn: self.perpetrator_asn.0,
            start_utc: format_rfc3339(self.window.start),
            end_utc: format_rfc3339(self.window.end),
            kind: self.kind,
        }
    }
}

/// Parses the incident config: a JSON array of
/// `{name, asn, start_utc, end_utc, kind}`. Windows must not overlap.
pub fn parse_incidents(json: &str) -> Result<Vec<IncidentWindow>, EvalError> {
    let records: Vec<IncidentRecord> = serde_json::from_str(json).map_err(|e| EvalError::Config(e.to_string()))?;
    let incidents = records
        .into_iter()
        .map(IncidentWindow::from_record)
        .collect::<Result<Vec<_>, _>>()?;
    for (i, a) in incidents.iter().enumerate() {
        if let Some(b) = incidents[i + 1..].iter().find(|b| a.window.overlaps(&b.window)) {
            return Err(EvalError::OverlappingIncidents(a.name.clone(), b.name.clone()));
        }
    }
    Ok(incidents)
}

pub fn incidents_to_json(incidents: &[IncidentWindow]) -> String {
    let records: Vec<IncidentRecord> = incidents.iter().map(IncidentWindow::to_record).collect();
    serde_json::to_string_pretty(&records).expect("incidents serialize")
}

/// The seven documented incidents shipped with the crate.
pub fn builtin_incidents() -> Vec<IncidentWindow> {
    parse_incidents(BUILTIN_INCIDENTS).expect("bundled incident file is valid")
}

/// Equal-width partition of a study period.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Binning {
    pub t0: Timestamp,
    pub t1: Timestamp,
    /// Bin length in seconds.
    pub m: u64,
}

impl Binning {
    pub fn new(bounds: TimeWindow, m: u64) -> Result<Self, EvalError> {
        if m == 0 {
            return Err(EvalError::ZeroBinLength);
        }
        Ok(Binning { t0: bounds.start, t1: bounds.end, m })
    }

    /// Bounds `[first, last + 1)` covering every given timestamp.
    pub fn covering(timestamps: impl IntoIterator<Item = Timestamp>, m: u64) -> Option<Result<Self, EvalError>> {
        let mut it = timestamps.into_iter();
        let first = it.next()?;
        let (lo, hi) = it.fold((first, first), |(lo, hi), t| (lo.min(t), hi.max(t)));
        Some(Binning::new(TimeWindow { start: lo, end: hi + 1 }, m))
    }

    pub fn bounds(&self) -> TimeWindow {
        TimeWindow { start: self.t0, end: self.t1 }
    }

    pub fn n_bins(&self) -> usize {
        (self.t1 - self.t0).div_ceil(self.m) as usize
    }

    /// `[start, end)` of bin `i`; the last bin is clipped at `t1`.
    pub fn bin_range(&self, i: usize) -> (Timestamp, Timestamp) {
        let start = self.t0 + i as u64 * self.m;
        (start, (start + self.m).min(self.t1))
    }

    fn index(&self, ts: Timestamp) -> usize {
        ((ts - self.t0) / self.m) as usize
    }
}

/// Bin index of every timestamp; duplicates collapse.
pub fn bin_timestamps<'a, I>(timestamps: I, binning: &Binning) -> Result<BTreeSet<usize>, EvalError>
where
    I: IntoIterator<Item = &'a Timestamp>,
{
    let bounds = binning.bounds();
    let mut bins = BTreeSet::new();
    let mut offenders = Vec::new();
    for &ts in timestamps {
        if bounds.contains(ts) {
            bins.insert(binning.index(ts));
        } else {
            offenders.push(ts);
        }
    }
    if !offenders.is_empty() {
        return Err(EvalError::OutOfBounds { t0: binning.t0, t1: binning.t1, offenders });
    }
    Ok(bins)
}

/// Every bin that overlaps the incident window by any amount.
pub fn incident_bins(incident: &IncidentWindow, binning: &Binning) -> Result<BTreeSet<usize>, EvalError> {
    let w = incident.window;
    if !binning.bounds().contains_window(&w) {
        return Err(EvalError::WindowOutsideBounds {
            name: incident.name.clone(),
            start: w.start,
            end: w.end,
            t0: binning.t0,
            t1: binning.t1,
        });
    }
    Ok((binning.index(w.start)..=binning.index(w.end - 1)).collect())
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Metrics {
    pub tp: usize,
    pub fp: usize,
    #[serde(rename = "fn")]
    pub fn_: usize,
    pub tn: usize,
    /// `None` when nothing was detected.
    pub precision: Option<f64>,
    /// `None` when the ground truth is empty.
    pub recall: Option<f64>,
    /// `None` unless precision and recall are both defined.
    pub f1: Option<f64>,
}

/// Confusion counts and derived metrics over `n` bins.
pub fn score(truth: &BTreeSet<usize>, detected: &BTreeSet<usize>, n: usize) -> Metrics {
    let tp = truth.intersection(detected).count();
    let fp = detected.len() - tp;
    let fn_ = truth.len() - tp;
    let tn = n - tp - fp - fn_;
    let ratio = |num: usize, den: usize| (den > 0).then(|| num as f64 / den as f64);
    let precision = ratio(tp, tp + fp);
    let recall = ratio(tp, tp + fn_);
    let f1 = match (precision, recall) {
        (Some(p), Some(r)) if p + r > 0.0 => Some(2.0 * p * r / (p + r)),
        (Some(_), Some(_)) => Some(0.0),
        _ => None,
    };
    Metrics { tp, fp, fn_, tn, precision, recall, f1 }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BinnedEvaluation {
    pub binning: Binning,
    pub n: usize,
    pub truth: BTreeSet<usize>,
    pub detected: BTreeSet<usize>,
    pub metrics: Metrics,
}

pub fn evaluate_report(
    report: &AnomalyReport,
    incident: &IncidentWindow,
    binning: &Binning,
) -> Result<BinnedEvaluation, EvalError> {
    let truth = incident_bins(incident, binning)?;
    let detected = bin_timestamps(&report.anomalous_timestamps, binning)?;
    let n = binning.n_bins();
    let metrics = score(&truth, &detected, n);
    Ok(BinnedEvaluation { binning: *binning, n, truth, detected, metrics })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvaluationRow {
    pub incident: String,
    pub collector: String,
    pub detector: String,
    #[serde(flatten)]
    pub metrics: Metrics,
}

/// One row per report, ordered by collector then detector.
pub fn evaluate_incident(
    reports: &[AnomalyReport],
    incident: &IncidentWindow,
    binning: &Binning,
) -> Result<Vec<EvaluationRow>, EvalError> {
    let mut rows = reports
        .iter()
        .map(|r| {
            evaluate_report(r, incident, binning).map(|e| EvaluationRow {
                incident: incident.name.clone(),
                collector: r.collector.clone(),
                detector: r.detector.name().to_string(),
                metrics: e.metrics,
            })
        })
        .collect::<Result<Vec<_>, _>>()?;
    rows.sort_by(|a, b| (&a.collector, &a.detector).cmp(&(&b.collector, &b.detector)));
    Ok(rows)
}

/// Results table; undefined metrics are left empty.
pub fn write_results_csv<W: Write>(rows: &[EvaluationRow], mut out: W) -> std::io::Result<()> {
    fn opt(v: Option<f64>) -> String {
        v.map(|x| x.to_string()).unwrap_or_default()
    }
    writeln!(out, "incident,collector,detector,precision,recall,f1,tp,fp,fn,tn")?;
    for r in rows {
        let m = &r.metrics;
        writeln!(
            out,
            "{},{},{},{},{},{},{},{},{},{}",
            r.incident,
            r.collector,
            r.detector,
            opt(m.precision),
            opt(m.recall),
            opt(m.f1),
            m.tp,
            m.fp,
            m.fn_,
            m.tn
        )?;
    }
    out.flush()
}
