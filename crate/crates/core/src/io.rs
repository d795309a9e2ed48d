//! JSON Lines formats.
//!
//! Vectors (data points, templates) use one object per line:
//!
//! ```text
//! {"id":"pos-0","space":"ext:16","label":1,"values":[0.5,-1.25,...]}
//! {"id":"template","space":"hog:4x4x9/8","kind":"template","mode":"noise-only","trials_used":1200,"values":[...]}
//! ```
//!
//! `label` and `kind` are optional; any further keys are kept as metadata.
//! Trial logs hold one [`TrialRecord`](crate::classimg::TrialRecord) per line.

use std::collections::BTreeMap;
use std::fs::File;
use std::io::{BufRead, BufReader, Write};
use std::path::Path;

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::featspace::{FeatureSpace, FeatureVector};
use crate::{Error, Result};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct VectorRecord {
    pub id: String,
    pub space: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub label: Option<i8>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub kind: Option<String>,
    #[serde(flatten)]
    pub meta: BTreeMap<String, serde_json::Value>,
    pub values: Vec<f64>,
}

impl VectorRecord {
    pub fn new(id: impl Into<String>, vector: &FeatureVector) -> Self {
        Self {
            id: id.into(),
            space: vector.space_id().to_owned(),
            label: None,
            kind: None,
            meta: BTreeMap::new(),
            values: vector.values().to_vec(),
        }
    }

    pub fn labeled(id: impl Into<String>, vector: &FeatureVector, label: i8) -> Self {
        Self {
            label: Some(label),
            ..Self::new(id, vector)
        }
    }

    pub fn vector(&self) -> Result<FeatureVector> {
        FeatureVector::new(self.space.clone(), self.values.clone())
    }

    /// The vector after checking it belongs to `space`.
    pub fn vector_in(&self, space: &FeatureSpace) -> Result<FeatureVector> {
        if self.space != space.id() {
            return Err(Error::space_mismatch(space.id(), &self.space));
        }
        space.vector(self.values.clone())
    }

    pub fn validate(&self) -> Result<()> {
        if let Some(label) = self.label {
            if label != 1 && label != -1 {
                return Err(Error::invalid(format!(
                    "record `{}`: label must be -1 or 1, got {label}",
                    self.id
                )));
            }
        }
        self.vector().map(|_| ())
    }
}

/// Parses JSON Lines, skipping blank lines. Errors carry 1-based line numbers.
pub fn read_jsonl<T: DeserializeOwned, R: BufRead>(reader: R) -> Result<Vec<T>> {
    let mut out = Vec::new();
    for (i, line) in reader.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let item = serde_json::from_str(&line).map_err(|e| Error::Parse {
            line: i + 1,
            message: e.to_string(),
        })?;
        out.push(item);
    }
    Ok(out)
}

pub fn read_jsonl_file<T: DeserializeOwned>(path: impl AsRef<Path>) -> Result<Vec<T>> {
    read_jsonl(BufReader::new(File::open(path)?))
}

pub fn write_jsonl<T: Serialize, W: Write>(mut writer: W, items: &[T]) -> Result<()> {
    for item in items {
        writeln!(writer, "{}", to_line(item)?)?;
    }
    Ok(())
}

pub fn to_line<T: Serialize>(item: &T) -> Result<String> {
    serde_json::to_string(item).map_err(|e| Error::invalid(e.to_string()))
}

/// Reads vector records and validates each one.
pub fn read_vectors<R: BufRead>(reader: R) -> Result<Vec<VectorRecord>> {
    let records: Vec<VectorRecord> = read_jsonl(reader)?;
    for (i, r) in records.iter().enumerate() {
        r.validate().map_err(|e| Error::Parse {
            line: i + 1,
            message: e.to_string(),
        })?;
    }
    Ok(records)
}

pub fn read_vectors_file(path: impl AsRef<Path>) -> Result<Vec<VectorRecord>> {
    read_vectors(BufReader::new(File::open(path)?))
}
