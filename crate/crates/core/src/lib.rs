//! Burstiness-based detection of BGP hijack incidents from collector
//! UPDATE archives.

pub mod burstiness;
pub mod detector;
pub mod evaluation;
pub mod ingest;
pub mod synth;
pub mod time;

pub use ingest::{AnnouncementEvent, Asn, EventSeries, Prefix, Timestamp};
pub use time::TimeWindow;
