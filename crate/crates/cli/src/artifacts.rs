//! Output directory handling: staged writes, metadata stamping and failure
//! markers.

use std::fs;
use std::path::{Path, PathBuf};

use serde::Serialize;
use serde_json::{json, Value};

use crate::CliError;

pub const SCHEMA_VERSION: u32 = 1;
pub const FAILED_MARKER: &str = ".failed";
const STAGING_DIR: &str = ".staging";

pub fn build_id() -> &'static str {
    env!("SUPSEARCH_BUILD_ID")
}

/// Provenance attached to every artifact of a run.
#[derive(Debug, Clone, Serialize)]
pub struct Metadata {
    pub schema_version: u32,
    pub command: String,
    pub seed: u64,
    pub build: String,
    /// Snapshot of the settings the command used.
    pub params: Value,
}

impl Metadata {
    pub fn new(command: &str, seed: u64, params: Value) -> Self {
        Self { schema_version: SCHEMA_VERSION, command: command.into(), seed, build: build_id().into(), params }
    }

    fn line(&self) -> String {
        format!("# meta {}", serde_json::to_string(self).expect("metadata serializes"))
    }
}

/// Collects a command's artifacts in a staging directory and moves them
/// into place only when every artifact has been written.
pub struct OutputDir {
    root: PathBuf,
    staging: PathBuf,
    meta: Metadata,
    written: Vec<String>,
}

fn io_err(what: &str, path: &Path, e: std::io::Error) -> CliError {
    CliError::Runtime(format!("{what} {}: {e}", path.display()))
}

impl OutputDir {
    pub fn create(root: &Path, meta: Metadata) -> Result<Self, CliError> {
        fs::create_dir_all(root).map_err(|e| io_err("cannot create", root, e))?;
        let staging = root.join(STAGING_DIR);
        if staging.exists() {
            fs::remove_dir_all(&staging).map_err(|e| io_err("cannot clear", &staging, e))?;
        }
        fs::create_dir_all(&staging).map_err(|e| io_err("cannot create", &staging, e))?;
        Ok(Self { root: root.to_path_buf(), staging, meta, written: Vec::new() })
    }

    pub fn meta(&self) -> &Metadata {
        &self.meta
    }

    fn put(&mut self, name: &str, bytes: &[u8]) -> Result<(), CliError> {
        let path = self.staging.join(name);
        fs::write(&path, bytes).map_err(|e| io_err("cannot write", &path, e))?;
        self.written.push(name.to_string());
        Ok(())
    }

    /// CSV produced by `write`. A leading schema line, if the writer emits
    /// one, is kept first; the metadata line follows it.
    pub fn csv(
        &mut self,
        name: &str,
        table: &str,
        write: impl FnOnce(&mut Vec<u8>) -> Result<(), CliError>,
    ) -> Result<(), CliError> {
        let mut body = Vec::new();
        write(&mut body)?;
        let mut out = Vec::with_capacity(body.len() + 256);
        let rest = if body.starts_with(b"# schema_version=") {
            let end = body.iter().position(|&b| b == b'\n').map_or(body.len(), |i| i + 1);
            out.extend_from_slice(&body[..end]);
            &body[end..]
        } else {
            out.extend_from_slice(format!("# schema_version={SCHEMA_VERSION} table={table}\n").as_bytes());
            &body[..]
        };
        out.extend_from_slice(self.meta.line().as_bytes());
        out.push(b'\n');
        out.extend_from_slice(rest);
        self.put(name, &out)
    }

    /// Pretty JSON document `{"meta": ..., "data": ...}`.
    pub fn json<T: Serialize>(&mut self, name: &str, data: &T) -> Result<(), CliError> {
        let doc = json!({ "meta": self.meta, "data": data });
        let mut text = serde_json::to_string_pretty(&doc).map_err(|e| CliError::Runtime(e.to_string()))?;
        text.push('\n');
        self.put(name, text.as_bytes())
    }

    /// Plain text lines, each already carrying its own structure (JSON
    /// lines); the first line is the metadata.
    pub fn lines(&mut self, name: &str, lines: impl Iterator<Item = String>) -> Result<(), CliError> {
        let mut text = serde_json::to_string(&json!({ "meta": self.meta })).expect("metadata serializes");
        text.push('\n');
        for l in lines {
            text.push_str(&l);
            text.push('\n');
        }
        self.put(name, text.as_bytes())
    }

    /// Moves staged files into the output directory, one rename each, and
    /// clears any failure marker left by an earlier run.
    pub fn commit(self) -> Result<Vec<PathBuf>, CliError> {
        let mut out = Vec::with_capacity(self.written.len());
        for name in &self.written {
            let to = self.root.join(name);
            fs::rename(self.staging.join(name), &to).map_err(|e| io_err("cannot move into place", &to, e))?;
            out.push(to);
        }
        fs::remove_dir_all(&self.staging).map_err(|e| io_err("cannot remove", &self.staging, e))?;
        let marker = self.root.join(FAILED_MARKER);
        if marker.exists() {
            fs::remove_file(&marker).map_err(|e| io_err("cannot remove", &marker, e))?;
        }
        Ok(out)
    }
}

/// Drops staged output and leaves a marker describing the failure.
pub fn mark_failed(root: &Path, report: &Value) {
    let _ = fs::remove_dir_all(root.join(STAGING_DIR));
    if fs::create_dir_all(root).is_ok() {
        let text = serde_json::to_string_pretty(report).unwrap_or_default();
        let _ = fs::write(root.join(FAILED_MARKER), text + "\n");
    }
}
