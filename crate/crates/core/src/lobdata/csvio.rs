//! LOB snapshot CSV format.
//!
//! Header `ts,day,ap1,av1,...,ap10,av10,bp1,bv1,...,bp10,bv10`, one row per book
//! update, all fields integers (nanosecond timestamp, day index, prices in ticks,
//! volumes in shares).

use std::io::{Read, Write};

use super::snapshot::{Level, Snapshot, LEVELS};
use crate::error::{Error, Result};

pub fn header() -> Vec<String> {
    let mut h = vec!["ts".to_string(), "day".to_string()];
    for side in ["a", "b"] {
        for l in 1..=LEVELS {
            h.push(format!("{side}p{l}"));
            h.push(format!("{side}v{l}"));
        }
    }
    h
}

const COLUMNS: usize = 2 + 4 * LEVELS;

fn field<T: std::str::FromStr>(rec: &csv::StringRecord, idx: usize, line: u64) -> Result<T> {
    let raw = rec.get(idx).unwrap_or("");
    raw.trim().parse().map_err(|_| Error::Parse {
        line,
        message: format!("column {} is not an integer: {raw:?}", idx + 1),
    })
}

/// Parses and validates a snapshot stream.
pub fn parse_snapshots<R: Read>(input: R) -> Result<Vec<Snapshot>> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(true)
        .flexible(true)
        .from_reader(input);
    let expected = header();
    {
        let hdr = rdr.headers().map_err(|e| Error::Parse {
            line: 1,
            message: e.to_string(),
        })?;
        let got: Vec<&str> = hdr.iter().map(str::trim).collect();
        if got != expected {
            return Err(Error::Parse {
                line: 1,
                message: "unexpected header".into(),
            });
        }
    }

    let mut out: Vec<Snapshot> = Vec::new();
    for rec in rdr.records() {
        let rec = rec.map_err(|e| Error::Parse {
            line: e.position().map(|p| p.line()).unwrap_or(0),
            message: e.to_string(),
        })?;
        let line = rec.position().map(|p| p.line()).unwrap_or(0);
        if rec.len() != COLUMNS {
            return Err(Error::Parse {
                line,
                message: format!("expected {COLUMNS} fields, found {}", rec.len()),
            });
        }
        let timestamp: i64 = field(&rec, 0, line)?;
        let day_id: u32 = field(&rec, 1, line)?;
        let mut asks = [Level::default(); LEVELS];
        let mut bids = [Level::default(); LEVELS];
        for l in 0..LEVELS {
            asks[l] = Level::new(field(&rec, 2 + 2 * l, line)?, field(&rec, 3 + 2 * l, line)?);
            bids[l] = Level::new(
                field(&rec, 2 + 2 * LEVELS + 2 * l, line)?,
                field(&rec, 3 + 2 * LEVELS + 2 * l, line)?,
            );
        }
        let snap = Snapshot {
            timestamp,
            day_id,
            asks,
            bids,
        };
        snap.validate()
            .map_err(|message| Error::InvalidSnapshot { line, message })?;
        if let Some(prev) = out.last() {
            if snap.day_id < prev.day_id {
                return Err(Error::InvalidSnapshot {
                    line,
                    message: format!("day {} follows day {}", snap.day_id, prev.day_id),
                });
            }
            if snap.day_id == prev.day_id && snap.timestamp < prev.timestamp {
                return Err(Error::InvalidSnapshot {
                    line,
                    message: "timestamp decreases within a day".into(),
                });
            }
        }
        out.push(snap);
    }
    Ok(out)
}

pub fn write_snapshots<W: Write>(mut out: W, snapshots: &[Snapshot]) -> Result<()> {
    writeln!(out, "{}", header().join(","))?;
    let mut line = String::with_capacity(512);
    for s in snapshots {
        use std::fmt::Write as _;
        line.clear();
        let _ = write!(line, "{},{}", s.timestamp, s.day_id);
        for side in [&s.asks, &s.bids] {
            for lv in side.iter() {
                let _ = write!(line, ",{},{}", lv.price, lv.volume);
            }
        }
        line.push('\n');
        out.write_all(line.as_bytes())?;
    }
    out.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::super::snapshot::test_support::book;
    use super::*;

    fn to_bytes(s: &[Snapshot]) -> Vec<u8> {
        let mut buf = Vec::new();
        write_snapshots(&mut buf, s).unwrap();
        buf
    }

    #[test]
    fn three_rows_in_order() {
        let snaps = vec![
            book(10, 0, 99, 101, 7),
            book(20, 0, 100, 101, 8),
            book(30, 0, 98, 100, 9),
        ];
        let parsed = parse_snapshots(&to_bytes(&snaps)[..]).unwrap();
        assert_eq!(parsed, snaps);
    }

    #[test]
    fn crossed_row_reports_line() {
        let snaps = vec![book(10, 0, 99, 101, 7), book(20, 0, 99, 101, 7)];
        let text = String::from_utf8(to_bytes(&snaps)).unwrap();
        let mut lines: Vec<String> = text.lines().map(str::to_string).collect();
        // best bid 101 against best ask 101
        lines[2] = lines[2].replacen(",99,", ",101,", 1);
        let err = parse_snapshots(lines.join("\n").as_bytes()).unwrap_err();
        match err {
            Error::InvalidSnapshot { line, .. } => assert_eq!(line, 3),
            other => panic!("unexpected {other}"),
        }
    }

    #[test]
    fn malformed_row_reports_line() {
        let snaps = vec![book(10, 0, 99, 101, 7)];
        let mut text = String::from_utf8(to_bytes(&snaps)).unwrap();
        text.push_str("20,0,abc\n");
        match parse_snapshots(text.as_bytes()).unwrap_err() {
            Error::Parse { line, .. } => assert_eq!(line, 3),
            other => panic!("unexpected {other}"),
        }
        let mut text = String::from_utf8(to_bytes(&snaps)).unwrap();
        text = text.replacen(",7,", ",x,", 1);
        assert!(matches!(
            parse_snapshots(text.as_bytes()).unwrap_err(),
            Error::Parse { line: 2, .. }
        ));
    }

    #[test]
    fn bad_header_rejected() {
        assert!(parse_snapshots("ts,day,foo\n".as_bytes()).is_err());
    }

    #[test]
    fn decreasing_timestamp_rejected() {
        let snaps = vec![book(20, 0, 99, 101, 7), book(10, 0, 99, 101, 7)];
        assert!(parse_snapshots(&to_bytes(&snaps)[..]).is_err());
    }
}
