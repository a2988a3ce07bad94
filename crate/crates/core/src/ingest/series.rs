use std::collections::{BTreeMap, HashSet};
use std::io::Write;

use serde::{Deserialize, Serialize};

use super::{AnnouncementEvent, Asn, Prefix, Timestamp};

/// Announcement timestamps of one origin AS as seen by one collector.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct EventSeries {
    pub origin_asn: Asn,
    pub collector: String,
    timestamps: Vec<Timestamp>,
}

impl EventSeries {
    /// Sorts `timestamps`; ties are kept.
    pub fn new(origin_asn: Asn, collector: impl Into<String>, mut timestamps: Vec<Timestamp>) -> Self {
        timestamps.sort_unstable();
        EventSeries { origin_asn, collector: collector.into(), timestamps }
    }

    pub fn timestamps(&self) -> &[Timestamp] {
        &self.timestamps
    }

    pub fn into_timestamps(self) -> Vec<Timestamp> {
        self.timestamps
    }

    pub fn len(&self) -> usize {
        self.timestamps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.timestamps.is_empty()
    }

    pub fn first(&self) -> Option<Timestamp> {
        self.timestamps.first().copied()
    }

    pub fn last(&self) -> Option<Timestamp> {
        self.timestamps.last().copied()
    }

    /// The sub-series with timestamps in `[start, end)`.
    pub fn window(&self, start: Timestamp, end: Timestamp) -> EventSeries {
        let lo = self.timestamps.partition_point(|&t| t < start);
        let hi = self.timestamps.partition_point(|&t| t < end);
        EventSeries {
            origin_asn: self.origin_asn,
            collector: self.collector.clone(),
            timestamps: self.timestamps[lo..hi.max(lo)].to_vec(),
        }
    }
}

/// Per-second count of distinct announced prefixes.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct VolumeSeries {
    pub collector: String,
    pub origin_asn: Asn,
    pub points: Vec<(Timestamp, u32)>,
}

impl VolumeSeries {
    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn write_csv<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        writeln!(out, "ts,count")?;
        for (ts, count) in &self.points {
            writeln!(out, "{ts},{count}")?;
        }
        out.flush()
    }
}

fn contributes(event: &AnnouncementEvent, origin: Asn, collector: &str) -> bool {
    event.is_announcement()
        && !event.origin_as_set
        && event.origin_asn == Some(origin)
        && event.collector == collector
}

/// Announcement timestamps for `(origin, collector)`. Withdrawals and
/// AS_SET-origin events are excluded; each NLRI entry is one event.
pub fn build_series<'a, I>(events: I, origin: Asn, collector: &str) -> EventSeries
where
    I: IntoIterator<Item = &'a AnnouncementEvent>,
{
    let timestamps = events
        .into_iter()
        .filter(|e| contributes(e, origin, collector))
        .map(|e| e.timestamp)
        .collect();
    EventSeries::new(origin, collector, timestamps)
}

/// For every second with at least one announcement from `(origin,
/// collector)`, the number of distinct prefixes announced in it.
pub fn build_volume_series<'a, I>(events: I, origin: Asn, collector: &str) -> VolumeSeries
where
    I: IntoIterator<Item = &'a AnnouncementEvent>,
{
    let mut by_second: BTreeMap<Timestamp, HashSet<Prefix>> = BTreeMap::new();
    for e in events.into_iter().filter(|e| contributes(e, origin, collector)) {
        by_second.entry(e.timestamp).or_default().insert(e.prefix);
    }
    VolumeSeries {
        collector: collector.to_string(),
        origin_asn: origin,
        points: by_second
            .into_iter()
            .map(|(ts, set)| (ts, set.len() as u32))
            .collect(),
    }
}
