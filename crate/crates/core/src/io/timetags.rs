//! Time-tag CSV: `t_seconds,t_subsecond,detector_id`, one tag per row.
//!
//! The whole-second and sub-second parts are stored separately so a file
//! keeps femtosecond resolution for any run length. Floats are written in
//! shortest round-trip form, so export followed by import is exact.

use std::collections::HashMap;
use std::io::{Read, Write};
use std::path::Path;

use crate::detection::{DetectorId, TagOrigin, TimeTag};
use crate::error::{Error, Result};
use crate::units::SplitTime;

pub const TIMETAG_HEADER: [&str; 3] = ["t_seconds", "t_subsecond", "detector_id"];

pub fn write_timetags<W: Write>(tags: &[TimeTag], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(TIMETAG_HEADER).map_err(csv_error)?;
    for t in tags {
        w.write_record([
            t.t.seconds().to_string(),
            t.t.subsecond().to_string(),
            t.detector.0.to_string(),
        ])
        .map_err(csv_error)?;
    }
    w.flush()?;
    Ok(())
}

pub fn timetags_to_csv(tags: &[TimeTag]) -> String {
    let mut buf = Vec::new();
    write_timetags(tags, &mut buf).expect("writing to memory");
    String::from_utf8(buf).expect("ASCII output")
}

pub fn export_timetags(tags: &[TimeTag], path: &Path) -> Result<()> {
    let file = std::fs::File::create(path)?;
    write_timetags(tags, std::io::BufWriter::new(file))
}

/// Reads tags and checks that each detector's stream is time-ordered. Row
/// numbers in errors are file line numbers (the header is row 1). Imported
/// tags carry no simulation truth and are marked as photon detections.
pub fn read_timetags<R: Read>(input: R) -> Result<Vec<TimeTag>> {
    let mut r = csv::ReaderBuilder::new().has_headers(false).from_reader(input);
    let mut records = r.records();
    match records.next() {
        Some(Ok(h)) if h.iter().map(str::trim).eq(TIMETAG_HEADER) => {}
        Some(Ok(h)) => {
            return Err(Error::Format {
                row: 1,
                message: format!("expected header {:?}, found {:?}", TIMETAG_HEADER.join(","), h.iter().collect::<Vec<_>>().join(",")),
            })
        }
        Some(Err(e)) => return Err(row_error(1, e)),
        None => {
            return Err(Error::Format {
                row: 1,
                message: "empty file".into(),
            })
        }
    }
    let mut last: HashMap<u32, SplitTime> = HashMap::new();
    let mut tags = Vec::new();
    for (i, rec) in records.enumerate() {
        let row = i + 2;
        let rec = rec.map_err(|e| row_error(row, e))?;
        if rec.len() != 3 {
            return Err(Error::Format {
                row,
                message: format!("expected 3 fields, found {}", rec.len()),
            });
        }
        let field = |k: usize| rec[k].trim();
        let secs: i64 = field(0).parse().map_err(|e| Error::Format {
            row,
            message: format!("t_seconds {:?}: {e}", field(0)),
        })?;
        let frac: f64 = field(1).parse().map_err(|e| Error::Format {
            row,
            message: format!("t_subsecond {:?}: {e}", field(1)),
        })?;
        if !(0.0..1.0).contains(&frac) {
            return Err(Error::Format {
                row,
                message: format!("t_subsecond {frac} outside [0, 1)"),
            });
        }
        let id: u32 = field(2).parse().map_err(|e| Error::Format {
            row,
            message: format!("detector_id {:?}: {e}", field(2)),
        })?;
        let t = SplitTime::new(secs, frac);
        if let Some(prev) = last.insert(id, t) {
            if t < prev {
                return Err(Error::Format {
                    row,
                    message: format!("detector {id} tag at {secs} s + {frac} precedes the previous tag of that detector"),
                });
            }
        }
        tags.push(TimeTag {
            t,
            detector: DetectorId(id),
            origin: TagOrigin::Photon,
        });
    }
    Ok(tags)
}

pub fn import_timetags(path: &Path) -> Result<Vec<TimeTag>> {
    read_timetags(std::io::BufReader::new(std::fs::File::open(path)?))
}

fn csv_error(e: csv::Error) -> Error {
    match e.into_kind() {
        csv::ErrorKind::Io(io) => Error::Io(io),
        other => Error::Format {
            row: 0,
            message: format!("{other:?}"),
        },
    }
}

fn row_error(row: usize, e: csv::Error) -> Error {
    Error::Format {
        row,
        message: e.to_string(),
    }
}
