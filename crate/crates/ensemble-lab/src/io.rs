//! Output files: schema-versioned CSV tables and JSON documents whose
//! numbers are written with 17 significant digits, so a value printed in
//! a CSV cell and in JSON is the same decimal string.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Serialize, Serializer};
use sha2::{Digest, Sha256};

use crate::error::{LabError, LabResult};

/// Version tag appended to every table's schema name.
pub const SCHEMA_VERSION: u32 = 1;

/// `x` with 17 significant digits, or `inf`, `-inf`, `nan`.
pub fn fmt17(x: f64) -> String {
    if x.is_nan() {
        "nan".into()
    } else if x.is_infinite() {
        if x > 0.0 { "inf".into() } else { "-inf".into() }
    } else {
        format!("{x:.16e}")
    }
}

/// A float serialized as a bare JSON number with 17 significant digits;
/// non-finite values become the strings `"inf"`, `"-inf"`, `"nan"`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Num(pub f64);

impl Serialize for Num {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        if self.0.is_finite() {
            let raw = serde_json::value::RawValue::from_string(fmt17(self.0)).map_err(serde::ser::Error::custom)?;
            raw.serialize(s)
        } else {
            s.serialize_str(&fmt17(self.0))
        }
    }
}

impl From<f64> for Num {
    fn from(x: f64) -> Self {
        Num(x)
    }
}

/// One output file of a run.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct OutputFile {
    pub path: String,
    pub schema: String,
    pub sha256: String,
}

/// Collects the files written into one output directory.
#[derive(Debug)]
pub struct OutputDir {
    root: PathBuf,
    files: Vec<OutputFile>,
}

impl OutputDir {
    pub fn create(root: impl Into<PathBuf>) -> LabResult<Self> {
        let root = root.into();
        fs::create_dir_all(&root).map_err(|e| LabError::io(&root, e))?;
        Ok(OutputDir { root, files: Vec::new() })
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    pub fn files(&self) -> &[OutputFile] {
        &self.files
    }

    /// Writes a CSV table; `schema` names the column set.
    pub fn write_csv<R>(&mut self, name: &str, schema: &str, header: &[&str], rows: R) -> LabResult<()>
    where
        R: IntoIterator<Item = Vec<String>>,
    {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(header)?;
        for row in rows {
            debug_assert_eq!(row.len(), header.len());
            w.write_record(&row)?;
        }
        let bytes = w.into_inner().map_err(|e| LabError::io(name, e.into_error()))?;
        self.write_bytes(name, &format!("{schema}/v{SCHEMA_VERSION}"), &bytes)
    }

    /// Writes a pretty-printed JSON document.
    pub fn write_json<T: Serialize>(&mut self, name: &str, schema: &str, value: &T) -> LabResult<()> {
        let mut bytes = serde_json::to_vec_pretty(value)?;
        bytes.push(b'\n');
        self.write_bytes(name, &format!("{schema}/v{SCHEMA_VERSION}"), &bytes)
    }

    fn write_bytes(&mut self, name: &str, schema: &str, bytes: &[u8]) -> LabResult<()> {
        let path = self.root.join(name);
        fs::write(&path, bytes).map_err(|e| LabError::io(&path, e))?;
        self.files.push(OutputFile { path: name.into(), schema: schema.into(), sha256: sha256_hex(bytes) });
        Ok(())
    }
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}
