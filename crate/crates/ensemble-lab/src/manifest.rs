//! Run manifests: the effective parameters of a command together with the
//! digests of every file it wrote.

use serde::Serialize;
use serde_json::{Map, Value};
use time::format_description::well_known::Rfc3339;
use time::OffsetDateTime;

use crate::error::LabResult;
use crate::io::{OutputDir, OutputFile};

pub const MANIFEST_FILE: &str = "manifest.json";

#[derive(Debug, Clone, Serialize)]
pub struct RunManifest {
    pub command: String,
    /// The effective configuration; feeding it back through `--config`
    /// reproduces the run.
    pub parameters: Map<String, Value>,
    pub library_version: String,
    pub seed: Option<u64>,
    pub started_at: String,
    pub finished_at: String,
    pub outputs: Vec<OutputFile>,
}

pub fn now_rfc3339() -> String {
    OffsetDateTime::now_utc().format(&Rfc3339).unwrap_or_default()
}

impl RunManifest {
    pub fn new(command: &str, parameters: Map<String, Value>, seed: Option<u64>, started_at: String) -> Self {
        RunManifest {
            command: command.into(),
            parameters,
            library_version: env!("CARGO_PKG_VERSION").into(),
            seed,
            started_at,
            finished_at: String::new(),
            outputs: Vec::new(),
        }
    }

    /// Records the files written so far and writes `manifest.json`.
    pub fn finish(mut self, out: &mut OutputDir) -> LabResult<()> {
        self.outputs = out.files().to_vec();
        self.finished_at = now_rfc3339();
        out.write_json(MANIFEST_FILE, "manifest", &self)
    }
}
