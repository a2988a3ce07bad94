//! Synthetic announcement streams with known inter-arrival laws, and
//! injected incident bursts.
//!
//! Event times are sampled in continuous time and rounded to whole seconds,
//! the resolution collectors record, so same-second ties appear exactly as
//! they would in real dumps.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Exp, Pareto};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::ingest::{AnnouncementEvent, Asn, EventSeries, Prefix, Timestamp};

/// Index offset separating incident prefixes from background prefixes.
const INCIDENT_PREFIX_BASE: u32 = 1 << 16;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SynthError {
    #[error("invalid {field}: {reason}")]
    InvalidField { field: &'static str, reason: String },
    #[error("incident [{start}, {end}) is not inside the background span [{first}, {last}]")]
    OutsideBackground { start: Timestamp, end: Timestamp, first: Timestamp, last: Timestamp },
}

fn invalid(field: &'static str, reason: impl Into<String>) -> SynthError {
    SynthError::InvalidField { field, reason: reason.into() }
}

#[derive(Copy, Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Process {
    Regular,
    Poisson,
    Pareto,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GeneratorSpec {
    pub process: Process,
    /// Mean inter-arrival time in seconds.
    pub mean_gap: f64,
    /// Shape of the Pareto law; must exceed 1.
    #[serde(default)]
    pub pareto_alpha: Option<f64>,
    pub n_events: usize,
    pub start_ts: Timestamp,
    pub asn: Asn,
    pub collector: String,
    pub seed: u64,
}

impl GeneratorSpec {
    pub fn validate(&self) -> Result<(), SynthError> {
        if !(self.mean_gap > 0.0 && self.mean_gap.is_finite()) {
            return Err(invalid("mean_gap", "must be positive"));
        }
        if self.n_events < 1 {
            return Err(invalid("n_events", "must be at least 1"));
        }
        if self.process == Process::Pareto {
            match self.pareto_alpha {
                Some(a) if a > 1.0 && a.is_finite() => {}
                Some(_) => return Err(invalid("pareto_alpha", "must exceed 1 for a finite mean")),
                None => return Err(invalid("pareto_alpha", "required for the pareto process")),
            }
        }
        Ok(())
    }
}

/// A generated stream: the series and the matching canonical events.
#[derive(Clone, Debug, PartialEq)]
pub struct SyntheticStream {
    pub series: EventSeries,
    pub events: Vec<AnnouncementEvent>,
}

fn sample_gaps(spec: &GeneratorSpec, rng: &mut ChaCha8Rng) -> Vec<f64> {
    let n = spec.n_events - 1;
    match spec.process {
        Process::Regular => vec![spec.mean_gap; n],
        Process::Poisson => {
            let exp = Exp::new(1.0 / spec.mean_gap).expect("positive rate");
            (0..n).map(|_| exp.sample(rng)).collect()
        }
        Process::Pareto => {
            let alpha = spec.pareto_alpha.expect("validated");
            // minimum gap chosen so the mean is mean_gap
            let scale = spec.mean_gap * (alpha - 1.0) / alpha;
            let pareto = Pareto::new(scale, alpha).expect("valid pareto");
            (0..n).map(|_| pareto.sample(rng)).collect()
        }
    }
}

/// Deterministic for a fixed spec and seed. The first event is at
/// `start_ts`; each event carries its own synthetic prefix.
pub fn generate_stream(spec: &GeneratorSpec) -> Result<SyntheticStream, SynthError> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let gaps = sample_gaps(spec, &mut rng);

    let mut timestamps = Vec::with_capacity(spec.n_events);
    timestamps.push(spec.start_ts);
    let mut clock = 0.0f64;
    for gap in gaps {
        clock += gap;
        timestamps.push(spec.start_ts + clock.round() as Timestamp);
    }

    let events = timestamps
        .iter()
        .enumerate()
        .map(|(i, &ts)| {
            let prefix = Prefix::synthetic_v4(i as u32 % INCIDENT_PREFIX_BASE);
            AnnouncementEvent::announcement(ts, spec.collector.clone(), prefix, spec.asn)
        })
        .collect();
    let series = EventSeries::new(spec.asn, spec.collector.clone(), timestamps);
    Ok(SyntheticStream { series, events })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct IncidentSpec {
    pub start: Timestamp,
    pub end: Timestamp,
    /// Seconds between burst instants.
    pub burst_gap: u64,
    /// Distinct prefixes announced at each burst instant.
    pub prefixes_per_second: u32,
}

impl IncidentSpec {
    pub fn validate(&self) -> Result<(), SynthError> {
        if self.start >= self.end {
            return Err(invalid("end", format!("incident end {} must follow start {}", self.end, self.start)));
        }
        if self.burst_gap == 0 {
            return Err(invalid("burst_gap", "must be positive"));
        }
        if self.prefixes_per_second == 0 {
            return Err(invalid("prefixes_per_second", "must be at least 1"));
        }
        Ok(())
    }

    /// Burst instants `start, start + burst_gap, ...` before `end`.
    fn instants(&self) -> impl Iterator<Item = Timestamp> + '_ {
        (self.start..self.end).step_by(self.burst_gap as usize)
    }

    /// The injected timestamps, one per prefix per instant.
    pub fn timestamps(&self) -> Vec<Timestamp> {
        let k = self.prefixes_per_second as usize;
        self.instants().flat_map(|t| std::iter::repeat_n(t, k)).collect()
    }

    pub fn events(&self, asn: Asn, collector: &str) -> Vec<AnnouncementEvent> {
        self.instants()
            .flat_map(|t| {
                (0..self.prefixes_per_second).map(move |k| {
                    AnnouncementEvent::announcement(t, collector, Prefix::synthetic_v4(INCIDENT_PREFIX_BASE + k), asn)
                })
            })
            .collect()
    }

    fn check_within(&self, background: &EventSeries) -> Result<(), SynthError> {
        self.validate()?;
        let (Some(first), Some(last)) = (background.first(), background.last()) else {
            return Err(invalid("background", "empty series"));
        };
        if self.start < first || self.end > last + 1 {
            return Err(SynthError::OutsideBackground { start: self.start, end: self.end, first, last });
        }
        Ok(())
    }
}

/// Merges an incident burst into a background series.
pub fn inject_incident(background: &EventSeries, incident: &IncidentSpec) -> Result<EventSeries, SynthError> {
    incident.check_within(background)?;
    let mut ts = background.timestamps().to_vec();
    ts.extend(incident.timestamps());
    Ok(EventSeries::new(background.origin_asn, background.collector.clone(), ts))
}

/// [`inject_incident`] at the event level, for canonical output.
pub fn inject_incident_stream(background: &SyntheticStream, incident: &IncidentSpec) -> Result<SyntheticStream, SynthError> {
    let series = inject_incident(&background.series, incident)?;
    let mut events = background.events.clone();
    events.extend(incident.events(background.series.origin_asn, &background.series.collector));
    events.sort_by_key(|e| e.timestamp);
    Ok(SyntheticStream { series, events })
}

/// Simulation input: one stream plus any incidents to inject.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SimulationSpec {
    #[serde(flatten)]
    pub stream: GeneratorSpec,
    #[serde(default)]
    pub incidents: Vec<IncidentSpec>,
}

impl SimulationSpec {
    pub fn run(&self) -> Result<SyntheticStream, SynthError> {
        let mut stream = generate_stream(&self.stream)?;
        for incident in &self.incidents {
            stream = inject_incident_stream(&stream, incident)?;
        }
        Ok(stream)
    }
}
