//! UTC time handling. Everything is whole unix seconds.

use chrono::{DateTime, SecondsFormat, Utc};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::ingest::Timestamp;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum TimeError {
    #[error("window start {start} is not before end {end}")]
    EmptyWindow { start: Timestamp, end: Timestamp },
    #[error("invalid RFC 3339 time {0:?}")]
    BadRfc3339(String),
    #[error("time {0:?} is before the unix epoch")]
    BeforeEpoch(String),
}

/// Half-open interval `[start, end)` of unix seconds.
#[derive(Copy, Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct TimeWindow {
    pub start: Timestamp,
    pub end: Timestamp,
}

impl TimeWindow {
    pub fn new(start: Timestamp, end: Timestamp) -> Result<Self, TimeError> {
        if start >= end {
            return Err(TimeError::EmptyWindow { start, end });
        }
        Ok(TimeWindow { start, end })
    }

    pub fn duration(&self) -> u64 {
        self.end - self.start
    }

    pub fn contains(&self, ts: Timestamp) -> bool {
        self.start <= ts && ts < self.end
    }

    pub fn overlaps(&self, other: &TimeWindow) -> bool {
        self.start < other.end && other.start < self.end
    }

    pub fn contains_window(&self, other: &TimeWindow) -> bool {
        self.start <= other.start && other.end <= self.end
    }
}

pub fn parse_rfc3339(s: &str) -> Result<Timestamp, TimeError> {
    let dt = DateTime::parse_from_rfc3339(s).map_err(|_| TimeError::BadRfc3339(s.to_string()))?;
    u64::try_from(dt.timestamp()).map_err(|_| TimeError::BeforeEpoch(s.to_string()))
}

pub fn format_rfc3339(ts: Timestamp) -> String {
    DateTime::<Utc>::from_timestamp(ts as i64, 0)
        .expect("timestamp in chrono range")
        .to_rfc3339_opts(SecondsFormat::Secs, true)
}
