//! CSV and JSON files consumed by the analysis scripts.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use serde::Serialize;

use crate::engine::{InteractionRecord, TrialResult, CSV_HEADER};
use crate::error::{Error, Result};

pub fn write_csv<W: Write>(out: W, rows: &[TrialResult]) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    for row in rows {
        w.serialize(row)?;
    }
    if rows.is_empty() {
        w.write_record(CSV_HEADER.split(','))?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_csv<R: Read>(input: R) -> Result<Vec<TrialResult>> {
    let mut r = csv::Reader::from_reader(input);
    let header: Vec<String> = r.headers()?.iter().map(str::to_owned).collect();
    if header.join(",") != CSV_HEADER {
        return Err(Error::input(format!("unexpected CSV header {:?}", header.join(","))));
    }
    r.deserialize().map(|row| row.map_err(Error::from)).collect()
}

pub fn write_json<W: Write, T: Serialize + ?Sized>(out: W, value: &T) -> Result<()> {
    let mut out = out;
    serde_json::to_writer_pretty(&mut out, value)?;
    out.write_all(b"\n")?;
    Ok(())
}

pub fn read_json_rows<R: Read>(input: R) -> Result<Vec<TrialResult>> {
    Ok(serde_json::from_reader(input)?)
}

/// Writes trial rows to `path` as CSV and, with `json`, a mirror at the same
/// path with the extension swapped to `.json`.
pub fn save_rows(path: &Path, rows: &[TrialResult], json: bool) -> Result<()> {
    write_csv(BufWriter::new(File::create(path)?), rows)?;
    if json {
        write_json(BufWriter::new(File::create(path.with_extension("json"))?), rows)?;
    }
    Ok(())
}

pub fn load_rows(path: &Path) -> Result<Vec<TrialResult>> {
    let file = BufReader::new(File::open(path)?);
    match path.extension().and_then(|e| e.to_str()) {
        Some("json") => read_json_rows(file),
        _ => read_csv(file),
    }
}

/// One JSON object per line, in execution order.
pub fn write_trace<W: Write>(out: W, trace: &[InteractionRecord]) -> Result<()> {
    let mut out = out;
    for rec in trace {
        serde_json::to_writer(&mut out, rec)?;
        out.write_all(b"\n")?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::engine::{DetectionChannel, Events};

    fn rows() -> Vec<TrialResult> {
        vec![
            TrialResult {
                n: 64,
                seed: u64::MAX,
                input_kind: "dup:3".into(),
                steps_to_stable: Some(12345),
                parallel_time: Some(12345.0 / 64.0),
                max_state_bits: 33,
                detection_channel: DetectionChannel::Cdwb,
                epochs_elapsed: 7,
                false_positive: false,
            },
            TrialResult {
                n: 64,
                seed: 0,
                input_kind: "distinct".into(),
                steps_to_stable: None,
                parallel_time: None,
                max_state_bits: 30,
                detection_channel: DetectionChannel::None,
                epochs_elapsed: 0,
                false_positive: false,
            },
        ]
    }

    #[test]
    fn csv_round_trip() {
        let mut buf = Vec::new();
        write_csv(&mut buf, &rows()).unwrap();
        let text = String::from_utf8(buf.clone()).unwrap();
        assert_eq!(text.lines().next().unwrap(), CSV_HEADER);
        assert!(text.contains(",cdwb,"));
        assert_eq!(read_csv(buf.as_slice()).unwrap(), rows());
    }

    #[test]
    fn empty_csv_keeps_header() {
        let mut buf = Vec::new();
        write_csv(&mut buf, &[]).unwrap();
        assert_eq!(String::from_utf8(buf).unwrap().trim(), CSV_HEADER);
    }

    #[test]
    fn json_round_trip_and_files() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("rows.csv");
        save_rows(&path, &rows(), true).unwrap();
        assert_eq!(load_rows(&path).unwrap(), rows());
        assert_eq!(load_rows(&path.with_extension("json")).unwrap(), rows());
    }

    #[test]
    fn wrong_header_is_rejected() {
        assert!(read_csv("a,b\n1,2\n".as_bytes()).is_err());
    }

    #[test]
    fn trace_is_line_delimited() {
        let rec = InteractionRecord {
            t: 1,
            initiator: 0,
            responder: 1,
            events: Events::RAISED_BACKUP,
        };
        let mut buf = Vec::new();
        write_trace(&mut buf, &[rec, rec]).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert_eq!(text.lines().count(), 2);
        let back: InteractionRecord = serde_json::from_str(text.lines().next().unwrap()).unwrap();
        assert_eq!(back, rec);
    }
}
