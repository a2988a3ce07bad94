//! Ingestion of BGP update data.
//!
//! Raw MRT dumps and the canonical line format both decode into
//! [`AnnouncementEvent`]s, which are then sliced into per-(origin AS,
//! collector) [`EventSeries`] and [`VolumeSeries`].

mod canonical;
mod mrt;
mod series;

use std::fmt;
use std::net::{IpAddr, Ipv4Addr, Ipv6Addr};
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use canonical::{event_to_line, parse_event_lines, write_event_lines};
pub use mrt::{decompress, parse_mrt_updates, MrtOutput, ParseStats};
pub use series::{build_series, build_volume_series, EventSeries, VolumeSeries};

/// Unix time in whole seconds.
pub type Timestamp = u64;

/// Autonomous system number. 32-bit throughout.
#[derive(Copy, Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Asn(pub u32);

impl Asn {
    pub const AS_TRANS: Asn = Asn(23456);
}

impl fmt::Display for Asn {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "AS{}", self.0)
    }
}

impl From<u32> for Asn {
    fn from(v: u32) -> Self {
        Asn(v)
    }
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum PrefixError {
    #[error("missing '/' in prefix {0:?}")]
    MissingMask(String),
    #[error("invalid address in prefix {0:?}")]
    BadAddress(String),
    #[error("invalid mask length in prefix {0:?}")]
    BadMask(String),
}

/// An IP prefix, v4 or v6. The address is kept as given (host bits are
/// not cleared) so textual round-trips are exact.
#[derive(Copy, Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Prefix {
    addr: IpAddr,
    len: u8,
}

#[allow(clippy::len_without_is_empty)]
impl Prefix {
    pub fn new(addr: IpAddr, len: u8) -> Option<Self> {
        let max = match addr {
            IpAddr::V4(_) => 32,
            IpAddr::V6(_) => 128,
        };
        (len <= max).then_some(Prefix { addr, len })
    }

    pub fn addr(&self) -> IpAddr {
        self.addr
    }

    pub fn len(&self) -> u8 {
        self.len
    }

    pub fn is_ipv4(&self) -> bool {
        self.addr.is_ipv4()
    }

    /// Synthetic, distinct IPv4 prefix for index `i` (a /24 inside 10/8,
    /// then 11/8 and so on).
    pub fn synthetic_v4(i: u32) -> Self {
        let base = 10u32 << 24;
        let addr = Ipv4Addr::from(base.wrapping_add(i << 8));
        Prefix { addr: IpAddr::V4(addr), len: 24 }
    }

    pub(crate) fn from_nlri_bytes(v6: bool, len: u8, bytes: &[u8]) -> Option<Self> {
        if v6 {
            let mut octets = [0u8; 16];
            octets.get_mut(..bytes.len())?.copy_from_slice(bytes);
            Prefix::new(IpAddr::V6(Ipv6Addr::from(octets)), len)
        } else {
            let mut octets = [0u8; 4];
            octets.get_mut(..bytes.len())?.copy_from_slice(bytes);
            Prefix::new(IpAddr::V4(Ipv4Addr::from(octets)), len)
        }
    }
}

impl fmt::Display for Prefix {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}/{}", self.addr, self.len)
    }
}

impl FromStr for Prefix {
    type Err = PrefixError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let (addr, len) = s
            .split_once('/')
            .ok_or_else(|| PrefixError::MissingMask(s.to_string()))?;
        let addr: IpAddr = addr
            .parse()
            .map_err(|_| PrefixError::BadAddress(s.to_string()))?;
        let len: u8 = len.parse().map_err(|_| PrefixError::BadMask(s.to_string()))?;
        Prefix::new(addr, len).ok_or_else(|| PrefixError::BadMask(s.to_string()))
    }
}

impl Serialize for Prefix {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for Prefix {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

#[derive(Copy, Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum EventKind {
    Announcement,
    Withdrawal,
}

/// One announced or withdrawn prefix as seen by a collector.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct AnnouncementEvent {
    pub timestamp: Timestamp,
    pub collector: String,
    pub peer_asn: Option<Asn>,
    pub prefix: Prefix,
    /// Last ASN of the AS-PATH. Always present for announcements.
    pub origin_asn: Option<Asn>,
    pub kind: EventKind,
    /// The final AS-PATH segment was an AS_SET, so `origin_asn` is only one
    /// member of it. Such events never enter a series.
    pub origin_as_set: bool,
}

impl AnnouncementEvent {
    pub fn announcement(
        timestamp: Timestamp,
        collector: impl Into<String>,
        prefix: Prefix,
        origin: Asn,
    ) -> Self {
        AnnouncementEvent {
            timestamp,
            collector: collector.into(),
            peer_asn: None,
            prefix,
            origin_asn: Some(origin),
            kind: EventKind::Announcement,
            origin_as_set: false,
        }
    }

    pub fn is_announcement(&self) -> bool {
        self.kind == EventKind::Announcement
    }
}

#[derive(Debug, Error)]
pub enum IngestError {
    #[error("truncated MRT record at byte offset {offset}: {detail}")]
    Truncated { offset: u64, detail: String },
    #[error("line {line}: {message}")]
    Line { line: usize, message: String },
    #[error("decompression failed: {0}")]
    Decompress(std::io::Error),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}
