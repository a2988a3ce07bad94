//! Canonical line-delimited JSON event format.
//!
//! ```text
//! {"ts":1396463160,"collector":"route-views.linx","prefix":"10.0.0.0/8","origin_asn":4761,"type":"A"}
//! ```

use std::io::{BufRead, Write};

use serde::{Deserialize, Serialize};

use super::{AnnouncementEvent, Asn, EventKind, IngestError, Prefix, Timestamp};

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct Line {
    ts: Timestamp,
    collector: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    peer_asn: Option<u32>,
    prefix: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    origin_asn: Option<u32>,
    #[serde(rename = "type")]
    kind: LineKind,
    #[serde(default, skip_serializing_if = "std::ops::Not::not")]
    origin_as_set: bool,
}

#[derive(Serialize, Deserialize)]
enum LineKind {
    A,
    W,
}

/// Serializes one event as a canonical line (no trailing newline).
pub fn event_to_line(event: &AnnouncementEvent) -> String {
    let line = Line {
        ts: event.timestamp,
        collector: event.collector.clone(),
        peer_asn: event.peer_asn.map(|a| a.0),
        prefix: event.prefix.to_string(),
        origin_asn: event.origin_asn.map(|a| a.0),
        kind: match event.kind {
            EventKind::Announcement => LineKind::A,
            EventKind::Withdrawal => LineKind::W,
        },
        origin_as_set: event.origin_as_set,
    };
    serde_json::to_string(&line).expect("canonical line serializes")
}

pub fn write_event_lines<'a, W, I>(events: I, mut out: W) -> std::io::Result<()>
where
    W: Write,
    I: IntoIterator<Item = &'a AnnouncementEvent>,
{
    for event in events {
        out.write_all(event_to_line(event).as_bytes())?;
        out.write_all(b"\n")?;
    }
    out.flush()
}

/// Parses canonical lines in file order. Blank lines are ignored; the first
/// bad line aborts with its 1-based line number.
pub fn parse_event_lines<R: BufRead>(reader: R) -> Result<Vec<AnnouncementEvent>, IngestError> {
    let mut events = Vec::new();
    for (idx, line) in reader.lines().enumerate() {
        let line = line?;
        let text = line.trim();
        if text.is_empty() {
            continue;
        }
        events.push(parse_line(text).map_err(|message| IngestError::Line { line: idx + 1, message })?);
    }
    Ok(events)
}

fn parse_line(text: &str) -> Result<AnnouncementEvent, String> {
    let line: Line = serde_json::from_str(text).map_err(|e| e.to_string())?;
    let prefix: Prefix = line.prefix.parse().map_err(|e| format!("{e}"))?;
    let kind = match line.kind {
        LineKind::A => EventKind::Announcement,
        LineKind::W => EventKind::Withdrawal,
    };
    if kind == EventKind::Announcement && line.origin_asn.is_none() {
        return Err("missing field `origin_asn` for announcement".to_string());
    }
    Ok(AnnouncementEvent {
        timestamp: line.ts,
        collector: line.collector,
        peer_asn: line.peer_asn.map(Asn),
        prefix,
        origin_asn: line.origin_asn.map(Asn),
        kind,
        origin_as_set: line.origin_as_set,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn parse(text: &str) -> Result<Vec<AnnouncementEvent>, IngestError> {
        parse_event_lines(text.as_bytes())
    }

    #[test]
    fn announcement_line() {
        let events = parse(
            r#"{"ts":1396463160,"collector":"route-views.linx","prefix":"10.0.0.0/8","origin_asn":4761,"type":"A"}"#,
        )
        .unwrap();
        assert_eq!(
            events,
            vec![AnnouncementEvent::announcement(
                1396463160,
                "route-views.linx",
                "10.0.0.0/8".parse().unwrap(),
                Asn(4761)
            )]
        );
    }

    #[test]
    fn withdrawal_without_origin() {
        let events =
            parse(r#"{"ts":5,"collector":"c","prefix":"10.0.0.0/8","type":"W","peer_asn":7}"#).unwrap();
        assert_eq!(events[0].kind, EventKind::Withdrawal);
        assert_eq!(events[0].origin_asn, None);
        assert_eq!(events[0].peer_asn, Some(Asn(7)));
    }

    #[test]
    fn blank_lines_ignored_and_order_kept() {
        let text = "\n{\"ts\":9,\"collector\":\"c\",\"prefix\":\"1.0.0.0/24\",\"origin_asn\":1,\"type\":\"A\"}\n\n\
                    {\"ts\":3,\"collector\":\"c\",\"prefix\":\"2.0.0.0/24\",\"origin_asn\":2,\"type\":\"A\"}\n";
        let ts: Vec<_> = parse(text).unwrap().iter().map(|e| e.timestamp).collect();
        assert_eq!(ts, [9, 3]);
    }

    #[test]
    fn missing_field_reports_line_number() {
        let text = "{\"ts\":9,\"collector\":\"c\",\"prefix\":\"1.0.0.0/24\",\"origin_asn\":1,\"type\":\"A\"}\n\
                    {\"ts\":9,\"prefix\":\"1.0.0.0/24\",\"origin_asn\":1,\"type\":\"A\"}\n";
        match parse(text) {
            Err(IngestError::Line { line, message }) => {
                assert_eq!(line, 2);
                assert!(message.contains("collector"), "{message}");
            }
            other => panic!("{other:?}"),
        }
        match parse(r#"{"ts":1,"collector":"c","prefix":"1.0.0.0/24","type":"A"}"#) {
            Err(IngestError::Line { line: 1, message }) => assert!(message.contains("origin_asn")),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn bad_prefix_is_line_error() {
        let r = parse(r#"{"ts":1,"collector":"c","prefix":"10.0.0.0/40","origin_asn":1,"type":"A"}"#);
        assert!(matches!(r, Err(IngestError::Line { line: 1, .. })));
        let r = parse(r#"{"ts":1,"collector":"c","prefix":"nope","origin_asn":1,"type":"A"}"#);
        assert!(matches!(r, Err(IngestError::Line { line: 1, .. })));
    }

    #[test]
    fn serialized_field_order() {
        let mut e = AnnouncementEvent::announcement(1, "c", "10.0.0.0/8".parse().unwrap(), Asn(4761));
        assert_eq!(
            event_to_line(&e),
            r#"{"ts":1,"collector":"c","prefix":"10.0.0.0/8","origin_asn":4761,"type":"A"}"#
        );
        e.peer_asn = Some(Asn(3356));
        e.origin_as_set = true;
        assert_eq!(
            event_to_line(&e),
            r#"{"ts":1,"collector":"c","peer_asn":3356,"prefix":"10.0.0.0/8","origin_asn":4761,"type":"A","origin_as_set":true}"#
        );
    }
}
