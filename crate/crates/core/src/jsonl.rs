//! JSON-Lines persistence. Every line is an object carrying `v` (schema
//! version) and `type` (record discriminator) ahead of the record's own fields.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use serde::de::DeserializeOwned;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::model::{Artifact, Link, SatdPair};

pub const SCHEMA_VERSION: u64 = 1;

/// A record type that can live in a JSONL file.
pub trait Record: Serialize + DeserializeOwned {
    /// Value of the `type` discriminator.
    const TYPE: &'static str;

    fn validate(&self) -> std::result::Result<(), String> {
        Ok(())
    }
}

impl Record for Artifact {
    const TYPE: &'static str = "artifact";
    fn validate(&self) -> std::result::Result<(), String> {
        Artifact::validate(self)
    }
}

impl Record for Link {
    const TYPE: &'static str = "link";
    fn validate(&self) -> std::result::Result<(), String> {
        Link::validate(self)
    }
}

impl Record for SatdPair {
    const TYPE: &'static str = "pair";
    fn validate(&self) -> std::result::Result<(), String> {
        SatdPair::validate(self)
    }
}

#[derive(Serialize)]
struct Envelope<'a, T> {
    v: u64,
    #[serde(rename = "type")]
    ty: &'static str,
    #[serde(flatten)]
    record: &'a T,
}

/// Serializes one record as a single JSONL line (without the newline).
pub fn to_line<T: Record>(record: &T) -> Result<String> {
    serde_json::to_string(&Envelope {
        v: SCHEMA_VERSION,
        ty: T::TYPE,
        record,
    })
    .map_err(|e| Error::invalid(e.to_string()))
}

/// Parses one line; `line_no` is 1-based and only used for error messages.
pub fn from_line<T: Record>(line: &str, line_no: usize) -> Result<T> {
    let malformed = |reason: String| Error::MalformedLine { line: line_no, reason };
    let mut value: serde_json::Value = serde_json::from_str(line).map_err(|e| malformed(e.to_string()))?;
    let obj = value
        .as_object_mut()
        .ok_or_else(|| malformed("not a JSON object".into()))?;
    let version = obj
        .remove("v")
        .ok_or_else(|| malformed("missing `v` field".into()))?
        .as_u64()
        .ok_or_else(|| malformed("`v` is not an unsigned integer".into()))?;
    if version != SCHEMA_VERSION {
        return Err(Error::SchemaVersion {
            line: line_no,
            found: version,
            expected: SCHEMA_VERSION,
        });
    }
    match obj.remove("type") {
        Some(serde_json::Value::String(t)) if t == T::TYPE => {}
        Some(other) => return Err(malformed(format!("expected type `{}`, found {other}", T::TYPE))),
        None => return Err(malformed("missing `type` field".into())),
    }
    let record: T = serde_json::from_value(value).map_err(|e| malformed(e.to_string()))?;
    record.validate().map_err(malformed)?;
    Ok(record)
}

/// Writes `records` to `path`, one per line. Nothing is written if any record
/// fails validation.
pub fn write_jsonl<T: Record>(records: &[T], path: impl AsRef<Path>) -> Result<usize> {
    let path = path.as_ref();
    let mut lines = Vec::with_capacity(records.len());
    for (index, r) in records.iter().enumerate() {
        r.validate().map_err(|reason| Error::InvalidRecord { index, reason })?;
        lines.push(to_line(r)?);
    }
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    for line in &lines {
        w.write_all(line.as_bytes())
            .and_then(|_| w.write_all(b"\n"))
            .map_err(|e| Error::io(path, e))?;
    }
    w.flush().map_err(|e| Error::io(path, e))?;
    Ok(lines.len())
}

/// Reads every record of type `T` from `path`. Blank lines are ignored.
pub fn read_jsonl<T: Record>(path: impl AsRef<Path>) -> Result<Vec<T>> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut out = Vec::new();
    for (i, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|e| Error::io(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        out.push(from_line(&line, i + 1)?);
    }
    Ok(out)
}

/// Appends a single record and syncs it to disk before returning.
pub fn append_line<T: Record>(file: &mut File, record: &T) -> std::io::Result<()> {
    let line = to_line(record).map_err(|e| std::io::Error::new(std::io::ErrorKind::InvalidData, e.to_string()))?;
    file.write_all(line.as_bytes())?;
    file.write_all(b"\n")?;
    file.sync_data()
}
