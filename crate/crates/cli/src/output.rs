//! Where results go.
//!
//! JSON results embed the tool version and resolved config. JSONL, CSV and
//! PNG results cannot, so when they are written to a file the same header
//! goes into `<file>.meta.json` next to it.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use serde_json::{Map, Value};
use visbias_core::TOOL_VERSION;

pub struct Output {
    path: Option<PathBuf>,
}

pub fn header(command: &str, config: Value) -> Map<String, Value> {
    let mut m = Map::new();
    m.insert("tool".into(), TOOL_VERSION.into());
    m.insert("command".into(), command.into());
    m.insert("config".into(), config);
    m
}

pub fn pretty(value: &Value) -> String {
    let mut s = serde_json::to_string_pretty(value).expect("JSON values serialize");
    s.push('\n');
    s
}

pub fn write_file(path: &Path, bytes: &[u8]) -> Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).with_context(|| format!("cannot create {}", dir.display()))?;
    }
    fs::write(path, bytes).with_context(|| format!("cannot write {}", path.display()))
}

pub fn sidecar_path(path: &Path) -> PathBuf {
    let mut s = path.as_os_str().to_owned();
    s.push(".meta.json");
    PathBuf::from(s)
}

impl Output {
    pub fn new(path: Option<PathBuf>) -> Self {
        Self { path }
    }

    pub fn path(&self) -> Option<&Path> {
        self.path.as_deref()
    }

    pub fn write(&self, bytes: &[u8]) -> Result<()> {
        match &self.path {
            Some(p) => write_file(p, bytes),
            None => {
                let mut out = std::io::stdout().lock();
                out.write_all(bytes)?;
                out.flush()?;
                Ok(())
            }
        }
    }

    /// A JSON document that carries its own header.
    pub fn json(&self, header: Map<String, Value>, body: Map<String, Value>) -> Result<()> {
        let mut doc = header;
        doc.extend(body);
        self.write(pretty(&Value::Object(doc)).as_bytes())
    }

    /// Headerless data plus a sidecar, if writing to a file.
    pub fn data(&self, bytes: &[u8], header: Map<String, Value>) -> Result<()> {
        self.write(bytes)?;
        if let Some(p) = &self.path {
            write_file(&sidecar_path(p), pretty(&Value::Object(header)).as_bytes())?;
        }
        Ok(())
    }
}
