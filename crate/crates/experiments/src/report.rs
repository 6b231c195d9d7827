//! Run reports and output-directory bookkeeping.

use std::fs;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use sha2::{Digest, Sha256};

use crate::config::ExperimentKind;
use crate::error::{ExpError, Result};

/// File name of the report written into every run directory.
pub const REPORT_FILE: &str = "report.txt";

#[derive(Debug, Clone, PartialEq)]
pub struct RunReport {
    pub kind: ExperimentKind,
    /// SHA-256 over the config text, the netlist texts and the seed.
    pub input_digest: String,
    /// Ordered `key = value` summaries.
    pub metrics: Vec<(String, String)>,
    /// Files written, relative to the output directory.
    pub manifest: Vec<String>,
}

impl RunReport {
    pub fn metric(&self, key: &str) -> Option<&str> {
        self.metrics.iter().find(|(k, _)| k == key).map(|(_, v)| v.as_str())
    }

    pub fn metric_f64(&self, key: &str) -> Option<f64> {
        self.metric(key).and_then(|v| v.parse().ok())
    }

    /// Flat text: `kind`, `input_digest`, `metric.<key>` and `file` lines.
    pub fn write<W: Write>(&self, out: &mut W) -> std::io::Result<()> {
        writeln!(out, "kind={}", self.kind)?;
        writeln!(out, "input_digest={}", self.input_digest)?;
        for (k, v) in &self.metrics {
            writeln!(out, "metric.{k}={v}")?;
        }
        for f in &self.manifest {
            writeln!(out, "file={f}")?;
        }
        Ok(())
    }

    /// Every manifest entry exists under `dir` and is non-empty.
    pub fn check_manifest(&self, dir: &Path) -> Result<()> {
        for f in &self.manifest {
            let p = dir.join(f);
            let len = fs::metadata(&p).map_err(|e| ExpError::io(&p, e))?.len();
            if len == 0 {
                return Err(ExpError::io(&p, std::io::Error::other("empty output file")));
            }
        }
        Ok(())
    }
}

pub fn input_digest(config_text: &str, netlists: &[String], seed: u64) -> String {
    let mut h = Sha256::new();
    h.update(config_text.as_bytes());
    for n in netlists {
        h.update([0u8]);
        h.update(n.as_bytes());
    }
    h.update(seed.to_le_bytes());
    hex::encode(h.finalize())
}

/// Output directory that records every file written through it.
#[derive(Debug)]
pub struct OutputDir {
    root: PathBuf,
    written: Vec<String>,
}

impl OutputDir {
    pub fn create(root: &Path) -> Result<OutputDir> {
        fs::create_dir_all(root).map_err(|e| ExpError::io(root, e))?;
        Ok(OutputDir { root: root.to_path_buf(), written: Vec::new() })
    }

    pub fn path(&self) -> &Path {
        &self.root
    }

    /// Write `name` with `fill`, adding it to the manifest.
    pub fn write<F>(&mut self, name: &str, fill: F) -> Result<()>
    where
        F: FnOnce(&mut dyn Write) -> std::io::Result<()>,
    {
        let p = self.root.join(name);
        let file = fs::File::create(&p).map_err(|e| ExpError::io(&p, e))?;
        let mut w = BufWriter::new(file);
        fill(&mut w).and_then(|_| w.flush()).map_err(|e| ExpError::io(&p, e))?;
        self.written.push(name.to_string());
        Ok(())
    }

    /// Finish the run: write the report and check the manifest.
    pub fn finish(self, kind: ExperimentKind, input_digest: String, metrics: Vec<(String, String)>) -> Result<RunReport> {
        let report = RunReport { kind, input_digest, metrics, manifest: self.written };
        let p = self.root.join(REPORT_FILE);
        let mut buf = Vec::new();
        report.write(&mut buf).map_err(|e| ExpError::io(&p, e))?;
        fs::write(&p, buf).map_err(|e| ExpError::io(&p, e))?;
        report.check_manifest(&self.root)?;
        Ok(report)
    }
}

/// Shortest round-trip formatting for metric values.
pub fn num(v: f64) -> String {
    format!("{v:e}")
}
