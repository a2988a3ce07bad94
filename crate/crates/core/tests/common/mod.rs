#![allow(dead_code)]

use std::collections::BTreeSet;
use std::net::Ipv4Addr;

use bgpburst::evaluation::{Binning, IncidentKind, IncidentWindow, DEFAULT_BIN_SECONDS};
use bgpburst::synth::{generate_stream, inject_incident_stream, GeneratorSpec, IncidentSpec, Process};
use bgpburst::{AnnouncementEvent, Asn, TimeWindow};
use rand::Rng;

/// Array-based transcription of the event-detection pseudocode: Q, Psi and
/// Sigma all start at zero and step t runs over 1..n.
pub fn naive_algorithm1(t: &[u64], r: f64, omega: u32, delta: f64) -> BTreeSet<u64> {
    let n = t.len();
    let a = 2.0 / (1.0 + omega as f64);
    let mut q = vec![0.0f64; n];
    let mut psi = vec![0.0f64; n];
    let mut s = vec![0.0f64; n];
    let mut flagged = BTreeSet::new();
    for i in 1..n {
        let dt = (t[i] - t[i - 1]) as f64;
        q[i] = 1.0 + 2f64.powf(-r * dt) * q[i - 1];
        psi[i] = a * q[i] + (1.0 - a) * psi[i - 1];
        let d = q[i] - psi[i - 1];
        s[i] = (1.0 - a) * (s[i - 1] + a * d * d);
        if q[i] >= psi[i] + delta * s[i].sqrt() {
            flagged.insert(t[i]);
        }
    }
    flagged
}

/// Same band criterion over per-second counts, every point observed.
pub fn naive_volume(points: &[(u64, u32)], omega: u32, delta: f64) -> BTreeSet<u64> {
    let a = 2.0 / (1.0 + omega as f64);
    let (mut mean, mut var) = (0.0f64, 0.0f64);
    let mut flagged = BTreeSet::new();
    for &(ts, y) in points {
        let y = y as f64;
        let d = y - mean;
        mean = a * y + (1.0 - a) * mean;
        var = (1.0 - a) * (var + a * d * d);
        if y >= mean + delta * var.sqrt() {
            flagged.insert(ts);
        }
    }
    flagged
}

/// Sorted timestamps mixing same-second ties, short and long gaps.
pub fn random_series<R: Rng>(rng: &mut R, max_len: usize) -> Vec<u64> {
    let n = rng.gen_range(2..=max_len);
    let mut t = rng.gen_range(1_000_000_000u64..1_500_000_000);
    let mut out = Vec::with_capacity(n);
    for _ in 0..n {
        out.push(t);
        t += match rng.gen_range(0..10) {
            0..=1 => 0,
            2..=5 => rng.gen_range(1..60),
            6..=8 => rng.gen_range(60..3_600),
            _ => rng.gen_range(3_600..200_000),
        };
    }
    out
}

pub const WEEK: u64 = 7 * 24 * 3600;
pub const SCENARIO_ASN: Asn = Asn(64_512);
pub const SCENARIO_COLLECTOR: &str = "synthetic";

/// One week of Poisson background (mean gap 600 s) for a single AS with a
/// three-hour burst of 100 prefixes per second starting at bin 28.
pub struct Scenario {
    pub events: Vec<AnnouncementEvent>,
    pub binning: Binning,
    pub incident: IncidentWindow,
}

pub fn synthetic_incident_scenario(seed: u64) -> Scenario {
    let t0 = 1_500_000_000u64;
    let spec = GeneratorSpec {
        process: Process::Poisson,
        mean_gap: 600.0,
        pareto_alpha: None,
        n_events: 1_200,
        start_ts: t0,
        asn: SCENARIO_ASN,
        collector: SCENARIO_COLLECTOR.into(),
        seed,
    };
    let mut stream = generate_stream(&spec).unwrap();
    stream.events.retain(|e| e.timestamp < t0 + WEEK);
    let ts: Vec<u64> = stream.events.iter().map(|e| e.timestamp).collect();
    stream.series = bgpburst::EventSeries::new(SCENARIO_ASN, SCENARIO_COLLECTOR, ts);

    let start = t0 + 28 * DEFAULT_BIN_SECONDS;
    let end = start + DEFAULT_BIN_SECONDS;
    let burst = IncidentSpec { start, end, burst_gap: 1, prefixes_per_second: 100 };
    let merged = inject_incident_stream(&stream, &burst).unwrap();

    Scenario {
        events: merged.events,
        binning: Binning::new(TimeWindow::new(t0, t0 + WEEK).unwrap(), DEFAULT_BIN_SECONDS).unwrap(),
        incident: IncidentWindow {
            name: "synthetic".into(),
            perpetrator_asn: SCENARIO_ASN,
            window: TimeWindow::new(start, end).unwrap(),
            kind: IncidentKind::LargeScale,
        },
    }
}

/// Minimal MRT writer for BGP4MP_MESSAGE_AS4 updates with IPv4 NLRI.
pub mod mrt {
    use super::*;

    #[derive(Clone, Debug)]
    pub enum PathSpec {
        Sequence(Vec<u32>),
        /// Segment header claims more ASNs than follow.
        Truncated,
        Absent,
    }

    #[derive(Clone, Debug)]
    pub struct UpdateSpec {
        pub ts: u32,
        pub peer: u32,
        pub withdrawn: Vec<(Ipv4Addr, u8)>,
        pub announced: Vec<(Ipv4Addr, u8)>,
        pub path: PathSpec,
    }

    fn nlri(prefixes: &[(Ipv4Addr, u8)]) -> Vec<u8> {
        let mut out = Vec::new();
        for &(addr, len) in prefixes {
            out.push(len);
            out.extend_from_slice(&addr.octets()[..(len as usize).div_ceil(8)]);
        }
        out
    }

    pub fn record(spec: &UpdateSpec) -> Vec<u8> {
        let mut attrs = Vec::new();
        match &spec.path {
            PathSpec::Sequence(asns) => {
                let mut value = vec![2u8, asns.len() as u8];
                for a in asns {
                    value.extend_from_slice(&a.to_be_bytes());
                }
                attrs.extend_from_slice(&[0x40, 2, value.len() as u8]);
                attrs.extend_from_slice(&value);
            }
            PathSpec::Truncated => attrs.extend_from_slice(&[0x40, 2, 6, 2, 3, 0, 0, 0, 1]),
            PathSpec::Absent => {}
        }
        let withdrawn = nlri(&spec.withdrawn);
        let announced = nlri(&spec.announced);

        let mut update = Vec::new();
        update.extend_from_slice(&(withdrawn.len() as u16).to_be_bytes());
        update.extend_from_slice(&withdrawn);
        update.extend_from_slice(&(attrs.len() as u16).to_be_bytes());
        update.extend_from_slice(&attrs);
        update.extend_from_slice(&announced);

        let mut body = Vec::new();
        body.extend_from_slice(&spec.peer.to_be_bytes());
        body.extend_from_slice(&6447u32.to_be_bytes());
        body.extend_from_slice(&[0, 0, 0, 1]);
        body.extend_from_slice(&[192, 0, 2, 1, 192, 0, 2, 2]);
        body.extend_from_slice(&[0xff; 16]);
        body.extend_from_slice(&((19 + update.len()) as u16).to_be_bytes());
        body.push(2);
        body.extend_from_slice(&update);

        let mut out = Vec::new();
        out.extend_from_slice(&spec.ts.to_be_bytes());
        out.extend_from_slice(&16u16.to_be_bytes());
        out.extend_from_slice(&4u16.to_be_bytes());
        out.extend_from_slice(&(body.len() as u32).to_be_bytes());
        out.extend_from_slice(&body);
        out
    }

    /// Masks host bits so the prefix is in canonical form.
    pub fn canonical(addr: u32, len: u8) -> (Ipv4Addr, u8) {
        let mask = if len == 0 { 0 } else { u32::MAX << (32 - len) };
        (Ipv4Addr::from(addr & mask), len)
    }
}
