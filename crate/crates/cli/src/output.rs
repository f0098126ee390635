//! CSV output with a `#`-prefixed manifest header block, plus the sidecar
//! manifest file.
//!
//! The CSV bytes are a pure function of the run configuration: the header
//! echoes the config (sorted `# key = value` lines) and rows are formatted
//! with Rust's shortest-roundtrip float printing. Wall time and versions go
//! to the sidecar `<output>.manifest.toml` only, so re-running a manifest
//! reproduces the CSV byte for byte.

use std::fmt::Write as _;
use std::time::Instant;

use crate::config::{ManifestDoc, ManifestResult, RunConfig};

pub const VERSION: &str = env!("CARGO_PKG_VERSION");

pub struct CsvDoc {
    text: String,
    rows: usize,
}

impl CsvDoc {
    /// Start a document with the config echo and column header.
    pub fn new(cfg: &RunConfig, columns: &[&str]) -> Self {
        let mut text = String::new();
        let mut entries: Vec<(String, String)> = Vec::new();
        // echo through the TOML form so the header tracks the config fields
        for line in cfg.to_toml().lines() {
            if let Some((k, v)) = line.split_once(" = ") {
                entries.push((k.trim().to_string(), v.trim().to_string()));
            }
        }
        entries.sort();
        for (k, v) in entries {
            let _ = writeln!(text, "# {k} = {v}");
        }
        let _ = writeln!(text, "{}", columns.join(","));
        Self { text, rows: 0 }
    }

    pub fn push_row(&mut self, values: &[f64]) {
        let mut first = true;
        for v in values {
            if !first {
                self.text.push(',');
            }
            let _ = write!(self.text, "{v}");
            first = false;
        }
        self.text.push('\n');
        self.rows += 1;
    }

    /// Row with a trailing pass/fail marker.
    pub fn push_row_status(&mut self, values: &[f64], pass: bool) {
        for v in values {
            let _ = write!(self.text, "{v},");
        }
        self.text.push_str(if pass { "pass" } else { "fail" });
        self.text.push('\n');
        self.rows += 1;
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn text(&self) -> &str {
        &self.text
    }
}

/// Write the CSV and its manifest sidecar.
pub fn write_outputs(
    cfg: &RunConfig,
    doc: &CsvDoc,
    started: Instant,
) -> Result<(), std::io::Error> {
    let path = cfg.output.as_deref().unwrap_or("cee-out.csv");
    std::fs::write(path, doc.text())?;
    let manifest = ManifestDoc {
        config: cfg.clone(),
        result: Some(ManifestResult {
            version: VERSION.to_string(),
            wall_ms: started.elapsed().as_millis() as u64,
            rows: doc.rows(),
        }),
    };
    let manifest_text = toml::to_string_pretty(&manifest).expect("manifest serializes");
    std::fs::write(format!("{path}.manifest.toml"), manifest_text)?;
    Ok(())
}
