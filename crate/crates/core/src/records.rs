//! Result records written as JSON lines.

/// Serializes non-finite floats as the strings `"inf"`, `"-inf"` and `"nan"`.
pub mod float_or_string {
    use serde::{de::Error, Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(v: &f64, s: S) -> Result<S::Ok, S::Error> {
        if v.is_finite() {
            s.serialize_f64(*v)
        } else if v.is_nan() {
            s.serialize_str("nan")
        } else if *v > 0.0 {
            s.serialize_str("inf")
        } else {
            s.serialize_str("-inf")
        }
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<f64, D::Error> {
        #[derive(Deserialize)]
        #[serde(untagged)]
        enum Repr {
            Num(f64),
            Str(String),
        }
        match Repr::deserialize(d)? {
            Repr::Num(x) => Ok(x),
            Repr::Str(s) => match s.as_str() {
                "inf" => Ok(f64::INFINITY),
                "-inf" => Ok(f64::NEG_INFINITY),
                "nan" => Ok(f64::NAN),
                other => Err(D::Error::custom(format!("unexpected float string {other:?}"))),
            },
        }
    }
}

use crate::error::{Error, Result};
use serde::{Deserialize, Serialize};
use serde_json::Value;
use sha2::{Digest, Sha256};
use std::io::{BufRead, Write};
use std::path::Path;

/// JSON Schema for one line of `results.jsonl`.
pub const RECORD_SCHEMA: &str = include_str!("../schema/result_record.schema.json");

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RecordKind {
    IdsPoint,
    Bound,
    Fit,
    Regime,
    StatTest,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ResultRecord {
    /// Seconds since the epoch, taken from `SOURCE_DATE_EPOCH` (0 when unset).
    pub timestamp: u64,
    pub config_hash: String,
    pub kind: RecordKind,
    pub seed: u64,
    pub payload: Value,
}

/// `SOURCE_DATE_EPOCH` if set and numeric, else 0.
pub fn timestamp() -> u64 {
    std::env::var("SOURCE_DATE_EPOCH").ok().and_then(|s| s.trim().parse().ok()).unwrap_or(0)
}

/// Recursively key-sorted compact JSON.
pub fn canonical_json<T: Serialize>(v: &T) -> Result<String> {
    fn sort(v: Value) -> Value {
        match v {
            Value::Object(m) => {
                let mut entries: Vec<(String, Value)> = m.into_iter().map(|(k, v)| (k, sort(v))).collect();
                entries.sort_by(|a, b| a.0.cmp(&b.0));
                Value::Object(entries.into_iter().collect())
            }
            Value::Array(a) => Value::Array(a.into_iter().map(sort).collect()),
            other => other,
        }
    }
    Ok(serde_json::to_string(&sort(serde_json::to_value(v)?))?)
}

/// SHA-256 of the canonical JSON form, hex encoded.
pub fn config_hash<T: Serialize>(v: &T) -> Result<String> {
    Ok(hex::encode(Sha256::digest(canonical_json(v)?.as_bytes())))
}

/// Builds records that share a config hash, seed and timestamp.
#[derive(Debug, Clone)]
pub struct RecordSink {
    config_hash: String,
    seed: u64,
    timestamp: u64,
    records: Vec<ResultRecord>,
}

impl RecordSink {
    pub fn new(config_hash: String, seed: u64) -> Self {
        Self { config_hash, seed, timestamp: timestamp(), records: Vec::new() }
    }

    pub fn push<T: Serialize>(&mut self, kind: RecordKind, payload: &T) -> Result<()> {
        self.records.push(ResultRecord {
            timestamp: self.timestamp,
            config_hash: self.config_hash.clone(),
            kind,
            seed: self.seed,
            payload: serde_json::to_value(payload)?,
        });
        Ok(())
    }

    pub fn records(&self) -> &[ResultRecord] {
        &self.records
    }

    pub fn into_records(self) -> Vec<ResultRecord> {
        self.records
    }
}

pub fn write_jsonl<W: Write>(mut w: W, records: &[ResultRecord]) -> Result<()> {
    for r in records {
        serde_json::to_writer(&mut w, r)?;
        w.write_all(b"\n")?;
    }
    Ok(())
}

pub fn read_jsonl<R: BufRead>(r: R) -> Result<Vec<ResultRecord>> {
    let mut out = Vec::new();
    for (i, line) in r.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let v: Value = serde_json::from_str(&line).map_err(|e| Error::Parse(format!("line {}: {e}", i + 1)))?;
        validate_record(&v).map_err(|e| Error::Parse(format!("line {}: {e}", i + 1)))?;
        out.push(serde_json::from_value(v)?);
    }
    Ok(out)
}

pub fn read_jsonl_file(path: &Path) -> Result<Vec<ResultRecord>> {
    read_jsonl(std::io::BufReader::new(std::fs::File::open(path)?))
}

/// Checks `v` against [`RECORD_SCHEMA`].
pub fn validate_record(v: &Value) -> Result<()> {
    let schema: Value = serde_json::from_str(RECORD_SCHEMA)?;
    validate(&schema, v, "$").map_err(Error::Parse)
}

/// Validates against the subset of JSON Schema used by the shipped schema:
/// `type`, `required`, `properties`, `additionalProperties: false`, `enum`,
/// `minimum`, `pattern` (only `^[0-9a-f]{64}$`) and `items`.
fn validate(schema: &Value, v: &Value, path: &str) -> std::result::Result<(), String> {
    if let Some(t) = schema.get("type") {
        let types: Vec<&str> = match t {
            Value::String(s) => vec![s.as_str()],
            Value::Array(a) => a.iter().filter_map(Value::as_str).collect(),
            _ => return Err(format!("{path}: bad schema type")),
        };
        let ok = types.iter().any(|t| match *t {
            "object" => v.is_object(),
            "array" => v.is_array(),
            "string" => v.is_string(),
            "integer" => v.is_u64() || v.is_i64(),
            "number" => v.is_number(),
            "boolean" => v.is_boolean(),
            "null" => v.is_null(),
            _ => false,
        });
        if !ok {
            return Err(format!("{path}: expected {types:?}"));
        }
    }
    if let Some(Value::Array(allowed)) = schema.get("enum") {
        if !allowed.contains(v) {
            return Err(format!("{path}: {v} not in enum"));
        }
    }
    if let (Some(min), Some(x)) = (schema.get("minimum").and_then(Value::as_f64), v.as_f64()) {
        if x < min {
            return Err(format!("{path}: {x} < {min}"));
        }
    }
    if let (Some(p), Some(s)) = (schema.get("pattern").and_then(Value::as_str), v.as_str()) {
        if p != "^[0-9a-f]{64}$" {
            return Err(format!("{path}: unsupported pattern {p}"));
        }
        if s.len() != 64 || !s.bytes().all(|b| b.is_ascii_digit() || (b'a'..=b'f').contains(&b)) {
            return Err(format!("{path}: {s:?} is not a sha256 hex digest"));
        }
    }
    if let Some(obj) = v.as_object() {
        if let Some(Value::Array(req)) = schema.get("required") {
            for k in req.iter().filter_map(Value::as_str) {
                if !obj.contains_key(k) {
                    return Err(format!("{path}: missing {k}"));
                }
            }
        }
        let props = schema.get("properties").and_then(Value::as_object);
        for (k, x) in obj {
            match props.and_then(|p| p.get(k)) {
                Some(s) => validate(s, x, &format!("{path}.{k}"))?,
                None if schema.get("additionalProperties") == Some(&Value::Bool(false)) => {
                    return Err(format!("{path}: unexpected key {k}"));
                }
                None => {}
            }
        }
    }
    if let (Some(items), Some(a)) = (schema.get("items"), v.as_array()) {
        for (i, x) in a.iter().enumerate() {
            validate(items, x, &format!("{path}[{i}]"))?;
        }
    }
    Ok(())
}

/// Minimal CSV table writer; floats use the shortest round-trip form.
pub struct CsvTable {
    header: Vec<String>,
    rows: Vec<Vec<String>>,
}

impl CsvTable {
    pub fn new<S: AsRef<str>>(header: &[S]) -> Self {
        Self { header: header.iter().map(|s| s.as_ref().to_string()).collect(), rows: Vec::new() }
    }

    pub fn push(&mut self, row: Vec<String>) -> Result<()> {
        if row.len() != self.header.len() {
            return Err(Error::InvalidParameter(format!("row has {} fields, header {}", row.len(), self.header.len())));
        }
        self.rows.push(row);
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn write<W: Write>(&self, w: W) -> Result<()> {
        let mut c = csv::Writer::from_writer(w);
        c.write_record(&self.header).map_err(csv_err)?;
        for r in &self.rows {
            c.write_record(r).map_err(csv_err)?;
        }
        c.flush()?;
        Ok(())
    }

    pub fn write_file(&self, path: &Path) -> Result<()> {
        self.write(std::io::BufWriter::new(std::fs::File::create(path)?))
    }
}

pub(crate) fn csv_err(e: csv::Error) -> Error {
    Error::Parse(e.to_string())
}

/// Formats a float for CSV output; non-finite values become `inf`, `-inf` or `nan`.
pub fn fmt_f64(x: f64) -> String {
    if x.is_nan() {
        "nan".into()
    } else if x.is_infinite() {
        if x > 0.0 { "inf".into() } else { "-inf".into() }
    } else {
        serde_json::to_string(&x).unwrap_or_else(|_| x.to_string())
    }
}

pub fn fmt_opt(x: Option<f64>) -> String {
    x.map(fmt_f64).unwrap_or_default()
}
