//! MRT (RFC 6396) BGP4MP update decoding.
//!
//! Only BGP4MP and BGP4MP_ET records carrying UPDATE messages produce
//! events. Every other record is skipped and counted.

use std::borrow::Cow;
use std::io::Read;

use serde::Serialize;

use super::{AnnouncementEvent, Asn, EventKind, IngestError, Prefix, Timestamp};

const MRT_HEADER_LEN: usize = 12;

const TYPE_BGP4MP: u16 = 16;
const TYPE_BGP4MP_ET: u16 = 17;
const KNOWN_TYPES: [u16; 9] = [11, 12, 13, 16, 17, 32, 33, 48, 49];

const BGP_MARKER_LEN: usize = 16;
const BGP_HEADER_LEN: usize = 19;
const BGP_UPDATE: u8 = 2;

const ATTR_AS_PATH: u8 = 2;
const ATTR_MP_REACH: u8 = 14;
const ATTR_MP_UNREACH: u8 = 15;
const ATTR_AS4_PATH: u8 = 17;

const SEG_AS_SET: u8 = 1;
const SEG_AS_SEQUENCE: u8 = 2;
const SEG_CONFED_SEQUENCE: u8 = 3;
const SEG_CONFED_SET: u8 = 4;

const AFI_IPV4: u16 = 1;
const AFI_IPV6: u16 = 2;

/// Counters collected while decoding. For any input,
/// `events_emitted + dropped_malformed_as_path + dropped_missing_origin
/// == nlri_entries`.
#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize)]
pub struct ParseStats {
    pub records: u64,
    pub update_messages: u64,
    /// Records that carry no UPDATE: other MRT types, state changes,
    /// non-UPDATE BGP messages.
    pub skipped_records: u64,
    /// Subset of `skipped_records` whose MRT type is not defined by RFC 6396.
    pub unknown_type_records: u64,
    /// Complete records whose BGP payload could not be decoded.
    pub malformed_records: u64,
    /// MP_REACH/MP_UNREACH attributes for SAFIs other than unicast/multicast.
    pub skipped_mp_attributes: u64,
    pub nlri_entries: u64,
    pub events_emitted: u64,
    pub withdrawals: u64,
    pub ambiguous_origin: u64,
    pub dropped_malformed_as_path: u64,
    pub dropped_missing_origin: u64,
}

impl ParseStats {
    pub fn dropped(&self) -> u64 {
        self.dropped_malformed_as_path + self.dropped_missing_origin
    }

    pub fn merge(&mut self, other: &ParseStats) {
        self.records += other.records;
        self.update_messages += other.update_messages;
        self.skipped_records += other.skipped_records;
        self.unknown_type_records += other.unknown_type_records;
        self.malformed_records += other.malformed_records;
        self.skipped_mp_attributes += other.skipped_mp_attributes;
        self.nlri_entries += other.nlri_entries;
        self.events_emitted += other.events_emitted;
        self.withdrawals += other.withdrawals;
        self.ambiguous_origin += other.ambiguous_origin;
        self.dropped_malformed_as_path += other.dropped_malformed_as_path;
        self.dropped_missing_origin += other.dropped_missing_origin;
    }
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct MrtOutput {
    pub events: Vec<AnnouncementEvent>,
    pub stats: ParseStats,
}

/// Inflates gzip or bzip2 input, detected by magic bytes. Anything else is
/// returned unchanged.
pub fn decompress(raw: &[u8]) -> Result<Cow<'_, [u8]>, IngestError> {
    let mut out = Vec::new();
    if raw.starts_with(&[0x1f, 0x8b]) {
        flate2::read::MultiGzDecoder::new(raw)
            .read_to_end(&mut out)
            .map_err(IngestError::Decompress)?;
        Ok(Cow::Owned(out))
    } else if raw.starts_with(b"BZh") {
        bzip2::read::MultiBzDecoder::new(raw)
            .read_to_end(&mut out)
            .map_err(IngestError::Decompress)?;
        Ok(Cow::Owned(out))
    } else {
        Ok(Cow::Borrowed(raw))
    }
}

/// Decodes a concatenation of MRT records into one event per NLRI prefix.
///
/// MRT carries no collector name, so the caller supplies it. Compressed
/// input is inflated first.
pub fn parse_mrt_updates(raw: &[u8], collector: &str) -> Result<MrtOutput, IngestError> {
    let data = decompress(raw)?;
    let data = data.as_ref();
    let mut out = MrtOutput::default();
    let mut offset = 0usize;

    while offset < data.len() {
        let header = data.get(offset..offset + MRT_HEADER_LEN).ok_or_else(|| {
            IngestError::Truncated {
                offset: offset as u64,
                detail: format!("{} bytes left, header needs {MRT_HEADER_LEN}", data.len() - offset),
            }
        })?;
        let timestamp = u32::from_be_bytes(header[0..4].try_into().unwrap()) as Timestamp;
        let mrt_type = u16::from_be_bytes(header[4..6].try_into().unwrap());
        let subtype = u16::from_be_bytes(header[6..8].try_into().unwrap());
        let length = u32::from_be_bytes(header[8..12].try_into().unwrap()) as usize;
        let body_start = offset + MRT_HEADER_LEN;
        let body = data
            .get(body_start..body_start.saturating_add(length))
            .ok_or_else(|| IngestError::Truncated {
                offset: offset as u64,
                detail: format!(
                    "record declares {length} body bytes, {} available",
                    data.len() - body_start
                ),
            })?;
        out.stats.records += 1;

        match mrt_type {
            TYPE_BGP4MP | TYPE_BGP4MP_ET => {
                // The microsecond field of BGP4MP_ET is dropped: collectors
                // stamp updates at one-second accuracy.
                let body = if mrt_type == TYPE_BGP4MP_ET {
                    body.get(4..)
                } else {
                    Some(body)
                };
                match body.map(|b| decode_bgp4mp(b, subtype, timestamp, collector, &mut out)) {
                    Some(Ok(())) => {}
                    Some(Err(Malformed)) | None => out.stats.malformed_records += 1,
                }
            }
            t => {
                out.stats.skipped_records += 1;
                if !KNOWN_TYPES.contains(&t) {
                    out.stats.unknown_type_records += 1;
                }
            }
        }
        offset = body_start + length;
    }
    Ok(out)
}

/// Marker for a complete record whose payload does not decode.
struct Malformed;

struct Reader<'a> {
    buf: &'a [u8],
}

impl<'a> Reader<'a> {
    fn new(buf: &'a [u8]) -> Self {
        Reader { buf }
    }

    fn is_empty(&self) -> bool {
        self.buf.is_empty()
    }

    fn take(&mut self, n: usize) -> Result<&'a [u8], Malformed> {
        if n > self.buf.len() {
            return Err(Malformed);
        }
        let (head, tail) = self.buf.split_at(n);
        self.buf = tail;
        Ok(head)
    }

    fn u8(&mut self) -> Result<u8, Malformed> {
        Ok(self.take(1)?[0])
    }

    fn u16(&mut self) -> Result<u16, Malformed> {
        Ok(u16::from_be_bytes(self.take(2)?.try_into().unwrap()))
    }

    fn u32(&mut self) -> Result<u32, Malformed> {
        Ok(u32::from_be_bytes(self.take(4)?.try_into().unwrap()))
    }

    fn asn(&mut self, four_byte: bool) -> Result<Asn, Malformed> {
        if four_byte {
            self.u32().map(Asn)
        } else {
            self.u16().map(|v| Asn(v as u32))
        }
    }
}

#[derive(Clone, Copy)]
struct SubtypeInfo {
    as4: bool,
    add_path: bool,
}

fn subtype_info(subtype: u16) -> Option<SubtypeInfo> {
    // 1 MESSAGE, 4 MESSAGE_AS4, 6/7 the *_LOCAL variants, 8-11 ADDPATH.
    let info = match subtype {
        1 | 6 => SubtypeInfo { as4: false, add_path: false },
        4 | 7 => SubtypeInfo { as4: true, add_path: false },
        8 | 10 => SubtypeInfo { as4: false, add_path: true },
        9 | 11 => SubtypeInfo { as4: true, add_path: true },
        _ => return None,
    };
    Some(info)
}

fn decode_bgp4mp(
    body: &[u8],
    subtype: u16,
    timestamp: Timestamp,
    collector: &str,
    out: &mut MrtOutput,
) -> Result<(), Malformed> {
    let Some(info) = subtype_info(subtype) else {
        // state changes and anything else without a BGP message
        out.stats.skipped_records += 1;
        return Ok(());
    };
    let mut r = Reader::new(body);
    let peer_asn = r.asn(info.as4)?;
    let _local_asn = r.asn(info.as4)?;
    let _if_index = r.u16()?;
    let afi = r.u16()?;
    let ip_len = match afi {
        AFI_IPV4 => 4,
        AFI_IPV6 => 16,
        _ => return Err(Malformed),
    };
    r.take(ip_len)?; // peer address
    r.take(ip_len)?; // local address

    r.take(BGP_MARKER_LEN)?;
    let msg_len = r.u16()? as usize;
    let msg_type = r.u8()?;
    if msg_len < BGP_HEADER_LEN {
        return Err(Malformed);
    }
    if msg_type != BGP_UPDATE {
        out.stats.skipped_records += 1;
        return Ok(());
    }
    let mut msg = Reader::new(r.take(msg_len - BGP_HEADER_LEN)?);
    let update = decode_update(&mut msg, info)?;
    out.stats.update_messages += 1;
    update.emit(timestamp, collector, Some(peer_asn), out);
    Ok(())
}

#[derive(Default)]
struct Update {
    withdrawn: Vec<Prefix>,
    announced: Vec<Prefix>,
    origin: OriginOutcome,
    skipped_mp: u64,
}

#[derive(Default)]
enum OriginOutcome {
    #[default]
    Missing,
    Malformed,
    Found {
        asn: Asn,
        as_set: bool,
    },
}

impl Update {
    fn emit(self, timestamp: Timestamp, collector: &str, peer_asn: Option<Asn>, out: &mut MrtOutput) {
        let stats = &mut out.stats;
        stats.skipped_mp_attributes += self.skipped_mp;
        stats.nlri_entries += (self.withdrawn.len() + self.announced.len()) as u64;

        for prefix in self.withdrawn {
            stats.events_emitted += 1;
            stats.withdrawals += 1;
            out.events.push(AnnouncementEvent {
                timestamp,
                collector: collector.to_string(),
                peer_asn,
                prefix,
                origin_asn: None,
                kind: EventKind::Withdrawal,
                origin_as_set: false,
            });
        }

        let n = self.announced.len() as u64;
        match self.origin {
            OriginOutcome::Missing => stats.dropped_missing_origin += n,
            OriginOutcome::Malformed => stats.dropped_malformed_as_path += n,
            OriginOutcome::Found { asn, as_set } => {
                stats.events_emitted += n;
                if as_set {
                    stats.ambiguous_origin += n;
                }
                out.events.extend(self.announced.into_iter().map(|prefix| AnnouncementEvent {
                    timestamp,
                    collector: collector.to_string(),
                    peer_asn,
                    prefix,
                    origin_asn: Some(asn),
                    kind: EventKind::Announcement,
                    origin_as_set: as_set,
                }));
            }
        }
    }
}

fn decode_update(msg: &mut Reader<'_>, info: SubtypeInfo) -> Result<Update, Malformed> {
    let mut update = Update::default();

    let withdrawn_len = msg.u16()? as usize;
    let withdrawn = msg.take(withdrawn_len)?;
    decode_nlri(withdrawn, false, info.add_path, &mut update.withdrawn)?;

    let attrs_len = msg.u16()? as usize;
    let mut attrs = Reader::new(msg.take(attrs_len)?);

    let mut as_path: Option<Result<Option<(Asn, bool)>, Malformed>> = None;
    let mut as4_path: Option<Result<Option<(Asn, bool)>, Malformed>> = None;

    while !attrs.is_empty() {
        let flags = attrs.u8()?;
        let code = attrs.u8()?;
        let len = if flags & 0x10 != 0 {
            attrs.u16()? as usize
        } else {
            attrs.u8()? as usize
        };
        let value = attrs.take(len)?;
        match code {
            ATTR_AS_PATH => as_path = Some(path_origin(value, info.as4)),
            ATTR_AS4_PATH => as4_path = Some(path_origin(value, true)),
            ATTR_MP_REACH => {
                let mut v = Reader::new(value);
                let afi = v.u16()?;
                let safi = v.u8()?;
                let nh_len = v.u8()? as usize;
                v.take(nh_len)?;
                v.u8()?; // reserved
                match mp_family(afi, safi) {
                    Some(v6) => decode_nlri(v.buf, v6, info.add_path, &mut update.announced)?,
                    None => update.skipped_mp += 1,
                }
            }
            ATTR_MP_UNREACH => {
                let mut v = Reader::new(value);
                let afi = v.u16()?;
                let safi = v.u8()?;
                match mp_family(afi, safi) {
                    Some(v6) => decode_nlri(v.buf, v6, info.add_path, &mut update.withdrawn)?,
                    None => update.skipped_mp += 1,
                }
            }
            _ => {}
        }
    }

    decode_nlri(msg.buf, false, info.add_path, &mut update.announced)?;

    // AS4_PATH carries the true 4-byte tail of the path on 2-byte sessions;
    // without it AS_TRANS is passed through as-is.
    let as4 = match as4_path {
        Some(Ok(Some(found))) if !info.as4 => Some(found),
        _ => None,
    };
    update.origin = match (as_path, as4) {
        (Some(Ok(Some(_))), Some((asn, as_set))) => OriginOutcome::Found { asn, as_set },
        (Some(Ok(Some((asn, as_set)))), None) => OriginOutcome::Found { asn, as_set },
        (Some(Ok(None)), _) | (None, _) => OriginOutcome::Missing,
        (Some(Err(Malformed)), _) => OriginOutcome::Malformed,
    };
    Ok(update)
}

/// `Some(is_v6)` for unicast/multicast IPv4/IPv6.
fn mp_family(afi: u16, safi: u8) -> Option<bool> {
    if !matches!(safi, 1 | 2) {
        return None;
    }
    match afi {
        AFI_IPV4 => Some(false),
        AFI_IPV6 => Some(true),
        _ => None,
    }
}

/// Origin of an AS_PATH-encoded attribute: the last ASN of the final
/// segment, flagged when that segment is a set. `Ok(None)` for an empty
/// path.
fn path_origin(value: &[u8], four_byte: bool) -> Result<Option<(Asn, bool)>, Malformed> {
    let mut r = Reader::new(value);
    let mut last = None;
    while !r.is_empty() {
        let seg_type = r.u8()?;
        let count = r.u8()? as usize;
        let is_set = match seg_type {
            SEG_AS_SET | SEG_CONFED_SET => true,
            SEG_AS_SEQUENCE | SEG_CONFED_SEQUENCE => false,
            _ => return Err(Malformed),
        };
        if count == 0 {
            return Err(Malformed);
        }
        let mut asn = Asn(0);
        for _ in 0..count {
            asn = r.asn(four_byte)?;
        }
        last = Some((asn, is_set));
    }
    Ok(last)
}

fn decode_nlri(buf: &[u8], v6: bool, add_path: bool, out: &mut Vec<Prefix>) -> Result<(), Malformed> {
    let mut r = Reader::new(buf);
    let max = if v6 { 128 } else { 32 };
    while !r.is_empty() {
        if add_path {
            r.u32()?;
        }
        let len = r.u8()?;
        if len > max {
            return Err(Malformed);
        }
        let bytes = r.take((len as usize).div_ceil(8))?;
        out.push(Prefix::from_nlri_bytes(v6, len, bytes).ok_or(Malformed)?);
    }
    Ok(())
}
