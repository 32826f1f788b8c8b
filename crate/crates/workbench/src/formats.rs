//! File formats: JSON documents, draw id lists and annotation exports.

use std::fs::{self, File};
use std::io::{BufWriter, Read, Write};
use std::path::Path;

use chrono::{DateTime, SecondsFormat, Utc};
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use workbench_core::annotation::AnnotationSubmission;
use workbench_core::{AnnotationRecord, Scale, TweetId, SCHEMA_VERSION};

use crate::error::{Result, WorkbenchError};

/// Export columns, in order.
pub const CSV_COLUMNS: [&str; 13] = [
    "sample_id",
    "tweet_id",
    "annotator_id",
    "deleted",
    "foreign_language",
    "score",
    "ihra_disagree",
    "alt_judgment",
    "sentiment",
    "calling_out",
    "comment",
    "duration_seconds",
    "submitted_at",
];

pub fn to_json_pretty<T: Serialize>(value: &T) -> String {
    let mut s = serde_json::to_string_pretty(value).expect("in-memory serialization");
    s.push('\n');
    s
}

pub fn write_json_file<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    fs::write(path, to_json_pretty(value)).map_err(|e| WorkbenchError::io(path, e))
}

pub fn read_json_file<T: DeserializeOwned>(path: &Path) -> Result<T> {
    let text = fs::read_to_string(path).map_err(|e| WorkbenchError::io(path, e))?;
    serde_json::from_str(&text).map_err(|e| WorkbenchError::format(path, e))
}

pub fn write_id_list(path: &Path, ids: &[TweetId]) -> Result<()> {
    let io = |e| WorkbenchError::io(path, e);
    let mut out = BufWriter::new(File::create(path).map_err(io)?);
    for id in ids {
        writeln!(out, "{id}").map_err(io)?;
    }
    out.flush().map_err(io)
}

pub fn read_id_list(path: &Path) -> Result<Vec<TweetId>> {
    let text = fs::read_to_string(path).map_err(|e| WorkbenchError::io(path, e))?;
    text.lines()
        .map(str::trim)
        .filter(|l| !l.is_empty())
        .map(|l| TweetId::new(l).map_err(|e| WorkbenchError::format(path, e)))
        .collect()
}

fn format_time(t: &DateTime<Utc>) -> String {
    t.to_rfc3339_opts(SecondsFormat::AutoSi, true)
}

fn scale_cell(s: Option<Scale>) -> String {
    s.map(|v| v.to_string()).unwrap_or_default()
}

pub fn annotations_to_csv(records: &[AnnotationRecord]) -> String {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(CSV_COLUMNS).expect("write to memory");
    for r in records {
        w.write_record([
            r.sample_id.clone(),
            r.tweet_id.to_string(),
            r.annotator_id.clone(),
            r.deleted.to_string(),
            r.foreign_language.to_string(),
            scale_cell(r.score),
            r.ihra_disagree.to_string(),
            scale_cell(r.alt_judgment),
            scale_cell(r.sentiment),
            r.calling_out.to_string(),
            r.comment.clone(),
            r.duration_seconds.to_string(),
            format_time(&r.submitted_at),
        ])
        .expect("write to memory");
    }
    String::from_utf8(w.into_inner().expect("flush to memory")).expect("csv of utf-8 input")
}

fn parse_bool(cell: &str, column: &str) -> std::result::Result<bool, String> {
    match cell {
        "true" => Ok(true),
        "false" => Ok(false),
        other => Err(format!("{column}: expected true or false, got {other:?}")),
    }
}

fn parse_opt_int(cell: &str, column: &str) -> std::result::Result<Option<i64>, String> {
    if cell.is_empty() {
        return Ok(None);
    }
    cell.parse().map(Some).map_err(|_| format!("{column}: not an integer: {cell:?}"))
}

fn row_to_submission(row: &csv::StringRecord) -> std::result::Result<AnnotationSubmission, String> {
    let cell = |i: usize| row.get(i).unwrap_or("");
    Ok(AnnotationSubmission {
        sample_id: cell(0).into(),
        tweet_id: cell(1).into(),
        annotator_id: cell(2).into(),
        deleted: parse_bool(cell(3), CSV_COLUMNS[3])?,
        foreign_language: parse_bool(cell(4), CSV_COLUMNS[4])?,
        score: parse_opt_int(cell(5), CSV_COLUMNS[5])?,
        ihra_disagree: parse_bool(cell(6), CSV_COLUMNS[6])?,
        alt_judgment: parse_opt_int(cell(7), CSV_COLUMNS[7])?,
        sentiment: parse_opt_int(cell(8), CSV_COLUMNS[8])?,
        calling_out: parse_bool(cell(9), CSV_COLUMNS[9])?,
        comment: cell(10).into(),
        duration_seconds: cell(11).parse().map_err(|_| format!("duration_seconds: not a number: {:?}", cell(11)))?,
        submitted_at: Some(
            DateTime::parse_from_rfc3339(cell(12))
                .map_err(|e| format!("submitted_at: {e}"))?
                .with_timezone(&Utc),
        ),
    })
}

fn validated(sub: AnnotationSubmission, where_: &str) -> std::result::Result<AnnotationRecord, String> {
    sub.validate(Utc::now()).map_err(|errors| {
        let joined: Vec<String> = errors.iter().map(ToString::to_string).collect();
        format!("{where_}: {}", joined.join("; "))
    })
}

/// Parses a CSV export. Every row is re-validated.
pub fn annotations_from_csv<R: Read>(reader: R, label: &Path) -> Result<Vec<AnnotationRecord>> {
    let mut rdr = csv::ReaderBuilder::new().has_headers(true).from_reader(reader);
    let headers = rdr.headers().map_err(|e| WorkbenchError::format(label, e))?.clone();
    if headers.iter().ne(CSV_COLUMNS) {
        return Err(WorkbenchError::format(label, format!("unexpected header {:?}", headers.iter().collect::<Vec<_>>())));
    }
    let mut out = Vec::new();
    for (i, row) in rdr.records().enumerate() {
        let row = row.map_err(|e| WorkbenchError::format(label, e))?;
        let where_ = format!("row {}", i + 2);
        let sub = row_to_submission(&row).map_err(|m| WorkbenchError::format(label, format!("{where_}: {m}")))?;
        out.push(validated(sub, &where_).map_err(|m| WorkbenchError::format(label, m))?);
    }
    Ok(out)
}

#[derive(Debug, Serialize, Deserialize)]
pub struct AnnotationExport {
    #[serde(default = "schema_version")]
    pub schema_version: u32,
    pub sample_id: String,
    pub annotations: Vec<AnnotationRecord>,
}

fn schema_version() -> u32 {
    SCHEMA_VERSION
}

pub fn annotations_to_json(sample_id: &str, records: &[AnnotationRecord]) -> String {
    to_json_pretty(&AnnotationExport { schema_version: SCHEMA_VERSION, sample_id: sample_id.into(), annotations: records.to_vec() })
}

/// Parses a JSON export, re-validating every record.
pub fn annotations_from_json(text: &str, label: &Path) -> Result<Vec<AnnotationRecord>> {
    #[derive(Deserialize)]
    struct Loose {
        annotations: Vec<AnnotationSubmission>,
    }
    let doc: Loose = serde_json::from_str(text).map_err(|e| WorkbenchError::format(label, e))?;
    doc.annotations
        .into_iter()
        .enumerate()
        .map(|(i, sub)| validated(sub, &format!("annotation {}", i + 1)).map_err(|m| WorkbenchError::format(label, m)))
        .collect()
}

/// Reads an export file, choosing the format from the extension.
pub fn read_annotations(path: &Path) -> Result<Vec<AnnotationRecord>> {
    let text = fs::read_to_string(path).map_err(|e| WorkbenchError::io(path, e))?;
    if path.extension().is_some_and(|e| e.eq_ignore_ascii_case("csv")) {
        annotations_from_csv(text.as_bytes(), path)
    } else {
        annotations_from_json(&text, path)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use chrono::TimeZone;

    fn record(comment: &str, score: Option<i64>) -> AnnotationRecord {
        AnnotationSubmission {
            sample_id: "s".into(),
            tweet_id: "42".into(),
            annotator_id: "B".into(),
            deleted: score.is_none(),
            score,
            sentiment: score.map(|_| -1),
            comment: comment.into(),
            duration_seconds: 119.25,
            submitted_at: Some(Utc.with_ymd_and_hms(2019, 3, 1, 12, 0, 0).unwrap()),
            ..Default::default()
        }
        .validate(Utc::now())
        .unwrap()
    }

    #[test]
    fn csv_layout() {
        let csv = annotations_to_csv(&[record("says \"hi\", then\nleaves", Some(2)), record("", None)]);
        let mut lines = csv.lines();
        assert_eq!(lines.next().unwrap(), CSV_COLUMNS.join(","));
        assert_eq!(lines.next().unwrap(), r#"s,42,B,false,false,2,false,,-1,false,"says ""hi"", then"#);
        let back = annotations_from_csv(csv.as_bytes(), Path::new("x.csv")).unwrap();
        assert_eq!(back[0].comment, "says \"hi\", then\nleaves");
        assert!(csv.ends_with("s,42,B,true,false,,false,,,false,,119.25,2019-03-01T12:00:00Z\n"));
    }

    #[test]
    fn csv_rejects_bad_rows() {
        let header = CSV_COLUMNS.join(",");
        let bad_scale = format!("{header}\ns,1,B,false,false,3,false,,0,false,,1,2019-03-01T12:00:00Z\n");
        assert!(annotations_from_csv(bad_scale.as_bytes(), Path::new("x")).is_err());
        assert!(annotations_from_csv("a,b\n".as_bytes(), Path::new("x")).is_err());
    }

    #[test]
    fn json_export_has_schema_version() {
        let json = annotations_to_json("s", &[record("", Some(0))]);
        assert!(json.contains("\"schema_version\": 1"));
        assert_eq!(annotations_from_json(&json, Path::new("x")).unwrap(), [record("", Some(0))]);
    }
}
