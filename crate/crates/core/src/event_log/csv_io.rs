use std::fs::File;
use std::io::{Read, Write};
use std::path::Path;

use super::{AttrKind, AttrScope, ColumnHint, Event, EventLog, Value};
use crate::error::{Error, Result};

const CASE_ID: &str = "case_id";
const ACTIVITY: &str = "activity";
const TIMESTAMP: &str = "timestamp";

/// Loads an event log from a CSV file. Columns other than the three mandatory
/// ones are read only if declared in `hints`; empty cells mean "absent".
pub fn load_csv(path: impl AsRef<Path>, hints: &[ColumnHint]) -> Result<EventLog> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    read_csv(file, hints)
}

pub fn read_csv<R: Read>(reader: R, hints: &[ColumnHint]) -> Result<EventLog> {
    let mut rdr = csv::ReaderBuilder::new().has_headers(true).from_reader(reader);
    let headers = rdr.headers()?.clone();
    let column = |name: &str| -> Result<usize> {
        headers
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| Error::Schema(format!("missing mandatory column `{name}`")))
    };
    let case_col = column(CASE_ID)?;
    let act_col = column(ACTIVITY)?;
    let ts_col = column(TIMESTAMP)?;
    let hinted = hints
        .iter()
        .map(|h| {
            headers
                .iter()
                .position(|c| c == h.name)
                .map(|i| (i, h))
                .ok_or_else(|| Error::Schema(format!("hinted column `{}` not in header", h.name)))
        })
        .collect::<Result<Vec<_>>>()?;

    let mut events = Vec::new();
    for (i, record) in rdr.records().enumerate() {
        let row = i + 1;
        let record = record.map_err(|e| Error::MalformedRow { row, message: e.to_string() })?;
        let field = |idx: usize| record.get(idx).unwrap_or("");
        let case_id = field(case_col);
        if case_id.is_empty() {
            return Err(Error::MalformedRow { row, message: "empty case_id".into() });
        }
        let timestamp: f64 = field(ts_col).trim().parse().map_err(|_| Error::MalformedRow {
            row,
            message: format!("timestamp `{}` is not a number", field(ts_col)),
        })?;
        if !timestamp.is_finite() {
            return Err(Error::MalformedRow { row, message: "non-finite timestamp".into() });
        }
        let mut event = Event::new(case_id, field(act_col), timestamp);
        for &(idx, hint) in &hinted {
            let raw = field(idx);
            if raw.is_empty() {
                continue;
            }
            let value = match hint.kind {
                AttrKind::Num => Value::Num(raw.trim().parse().map_err(|_| Error::MalformedRow {
                    row,
                    message: format!("column `{}` value `{raw}` is not a number", hint.name),
                })?),
                AttrKind::Cat => Value::Cat(raw.to_string()),
            };
            match hint.scope {
                AttrScope::Event => event.event_attrs.insert(hint.name.clone(), value),
                AttrScope::Static => event.static_attrs.insert(hint.name.clone(), value),
            };
        }
        events.push(event);
    }
    EventLog::from_events(events)
}

/// Writes a log in the format [`read_csv`] accepts. Numbers use the shortest
/// representation that parses back to the same `f64`.
pub fn write_csv<W: Write>(log: &EventLog, hints: &[ColumnHint], writer: W) -> Result<()> {
    let mut wtr = csv::Writer::from_writer(writer);
    let mut header = vec![CASE_ID.to_string(), ACTIVITY.to_string(), TIMESTAMP.to_string()];
    header.extend(hints.iter().map(|h| h.name.clone()));
    wtr.write_record(&header)?;
    for event in log.events() {
        let mut row = vec![event.case_id.clone(), event.activity.clone(), event.timestamp.to_string()];
        for hint in hints {
            let attrs = match hint.scope {
                AttrScope::Event => &event.event_attrs,
                AttrScope::Static => &event.static_attrs,
            };
            row.push(attrs.get(&hint.name).map(Value::to_string).unwrap_or_default());
        }
        wtr.write_record(&row)?;
    }
    wtr.flush().map_err(|e| Error::io("<csv writer>", e))?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn hints() -> Vec<ColumnHint> {
        vec![ColumnHint::event("duration", AttrKind::Num), ColumnHint::static_attr("kind", AttrKind::Cat)]
    }

    #[test]
    fn single_case_three_rows() {
        let csv = "case_id,activity,timestamp,duration,kind\n\
                   c1,a,0,1.5,car\nc1,b,1,2,car\nc1,c,2.5,,car\n";
        let log = read_csv(csv.as_bytes(), &hints()).unwrap();
        assert_eq!(log.n_cases(), 1);
        assert_eq!(log.n_events(), 3);
        let t = &log.traces[0];
        assert_eq!(t.events[0].event_attrs["duration"], Value::Num(1.5));
        assert!(!t.events[2].event_attrs.contains_key("duration"));
        assert_eq!(t.static_attrs().unwrap()["kind"], Value::Cat("car".into()));
    }

    #[test]
    fn interleaved_cases_are_partitioned() {
        let csv = "case_id,activity,timestamp\nA,x,0\nB,x,0\nA,y,1\nB,y,3\nA,z,2\n";
        let log = read_csv(csv.as_bytes(), &[]).unwrap();
        assert_eq!(log.n_cases(), 2);
        assert_eq!(log.traces[0].case_id, "A");
        assert_eq!(log.traces[0].len(), 3);
        assert_eq!(log.traces[1].len(), 2);
        assert!(log.traces[0].events.iter().all(|e| e.case_id == "A"));
    }

    #[test]
    fn string_timestamp_names_row() {
        let csv = "case_id,activity,timestamp\nA,x,0\nA,y,noon\n";
        match read_csv(csv.as_bytes(), &[]) {
            Err(Error::MalformedRow { row, .. }) => assert_eq!(row, 2),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn missing_mandatory_column() {
        let csv = "case_id,activity\nA,x\n";
        assert!(matches!(read_csv(csv.as_bytes(), &[]), Err(Error::Schema(_))));
    }

    #[test]
    fn missing_hinted_column() {
        let csv = "case_id,activity,timestamp\nA,x,0\n";
        assert!(matches!(read_csv(csv.as_bytes(), &hints()), Err(Error::Schema(_))));
    }

    #[test]
    fn decreasing_timestamps_name_case() {
        let csv = "case_id,activity,timestamp\nA,x,5\nB,x,0\nA,y,1\n";
        match read_csv(csv.as_bytes(), &[]) {
            Err(Error::NonMonotonicTimestamps { case, .. }) => assert_eq!(case, "A"),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn bad_numeric_attribute() {
        let csv = "case_id,activity,timestamp,duration,kind\nA,x,0,fast,car\n";
        assert!(matches!(read_csv(csv.as_bytes(), &hints()), Err(Error::MalformedRow { row: 1, .. })));
    }

    #[test]
    fn write_then_read_is_identity() {
        let csv = "case_id,activity,timestamp,duration,kind\n\
                   c1,a,0,0.1,car\nc1,b,1.25,2,car\nc2,a,0.3333333333333333,,home\n";
        let log = read_csv(csv.as_bytes(), &hints()).unwrap();
        let mut out = Vec::new();
        write_csv(&log, &hints(), &mut out).unwrap();
        let back = read_csv(out.as_slice(), &hints()).unwrap();
        assert_eq!(log, back);
    }
}
