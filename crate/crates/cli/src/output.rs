//! CSV tables with a leading `#` metadata block.

use std::fmt::Display;
use std::io::{self, Write};

use crate::config::ExperimentConfig;

/// Provenance written above every table.
#[derive(Debug, Clone, PartialEq)]
pub struct RunMeta {
    pub command: String,
    pub version: String,
    /// Seconds since the epoch.
    pub timestamp: u64,
}

impl RunMeta {
    /// Uses `SOURCE_DATE_EPOCH` when set so reruns are byte-identical.
    pub fn from_env(command: &str) -> Self {
        let timestamp = std::env::var("SOURCE_DATE_EPOCH")
            .ok()
            .and_then(|v| v.trim().parse().ok())
            .unwrap_or_else(|| {
                std::time::SystemTime::now()
                    .duration_since(std::time::UNIX_EPOCH)
                    .map(|d| d.as_secs())
                    .unwrap_or(0)
            });
        Self {
            command: command.to_string(),
            version: env!("CARGO_PKG_VERSION").to_string(),
            timestamp,
        }
    }
}

pub struct CsvTable {
    meta: Vec<(String, String)>,
    header: Vec<String>,
    rows: Vec<Vec<String>>,
}

impl CsvTable {
    pub fn new(run: &RunMeta, config: &ExperimentConfig, header: &[&str]) -> Self {
        let mut meta = vec![
            ("command".to_string(), run.command.clone()),
            ("version".to_string(), run.version.clone()),
            ("timestamp".to_string(), run.timestamp.to_string()),
        ];
        for (k, v) in config.to_map() {
            meta.push((format!("config.{k}"), v));
        }
        Self {
            meta,
            header: header.iter().map(|s| s.to_string()).collect(),
            rows: Vec::new(),
        }
    }

    pub fn with_header(run: &RunMeta, config: &ExperimentConfig, header: Vec<String>) -> Self {
        let mut t = Self::new(run, config, &[]);
        t.header = header;
        t
    }

    pub fn meta(&mut self, key: &str, value: impl Display) {
        self.meta.push((key.to_string(), value.to_string()));
    }

    pub fn push(&mut self, row: Vec<String>) {
        assert_eq!(row.len(), self.header.len(), "row width must match header");
        self.rows.push(row);
    }

    pub fn rows(&self) -> &[Vec<String>] {
        &self.rows
    }

    pub fn write<W: Write>(&self, mut out: W) -> io::Result<()> {
        for (k, v) in &self.meta {
            writeln!(out, "# {k} = {v}")?;
        }
        writeln!(out, "{}", self.header.join(","))?;
        for row in &self.rows {
            writeln!(out, "{}", row.join(","))?;
        }
        out.flush()
    }
}

/// Shortest round-trip representation; `inf`/`nan` spelled out.
pub fn num(x: f64) -> String {
    if x.is_finite() {
        format!("{x:e}")
    } else if x.is_nan() {
        "nan".into()
    } else if x > 0.0 {
        "inf".into()
    } else {
        "-inf".into()
    }
}

/// Splits a written table into its metadata pairs and CSV lines.
pub fn parse_written(text: &str) -> (Vec<(String, String)>, Vec<Vec<String>>) {
    let mut meta = Vec::new();
    let mut rows = Vec::new();
    for line in text.lines() {
        if let Some(rest) = line.strip_prefix("# ") {
            if let Some((k, v)) = rest.split_once(" = ") {
                meta.push((k.to_string(), v.to_string()));
            }
        } else if !line.is_empty() {
            rows.push(line.split(',').map(|s| s.to_string()).collect());
        }
    }
    (meta, rows)
}
