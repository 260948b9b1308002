//! Schema-versioned JSON reports and CSV side tables.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use finhol::transport::ConvergenceTable;
use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::config::ExperimentConfig;
use crate::error::CliError;

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ErrorInfo {
    pub kind: String,
    pub message: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Status {
    pub exit_code: i32,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<ErrorInfo>,
}

/// Everything is deterministic given config and seed except `timings`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Report {
    pub schema_version: u32,
    pub tool: String,
    pub version: String,
    pub command: String,
    pub config: ExperimentConfig,
    pub status: Status,
    pub results: BTreeMap<String, Value>,
    pub warnings: Vec<String>,
    /// Named CSV tables written next to the report.
    pub tables: BTreeMap<String, ConvergenceTable>,
    /// Wall-clock seconds per stage.
    pub timings: BTreeMap<String, f64>,
}

impl Report {
    pub fn new(command: &str, config: ExperimentConfig) -> Self {
        Report {
            schema_version: SCHEMA_VERSION,
            tool: "finhol".into(),
            version: env!("CARGO_PKG_VERSION").into(),
            command: command.into(),
            config,
            status: Status { exit_code: 0, error: None },
            results: BTreeMap::new(),
            warnings: Vec::new(),
            tables: BTreeMap::new(),
            timings: BTreeMap::new(),
        }
    }

    pub fn insert<T: Serialize>(&mut self, key: &str, value: &T) {
        let v = serde_json::to_value(value).expect("report values serialize");
        self.results.insert(key.to_string(), v);
    }

    pub fn fail(&mut self, e: &CliError) {
        self.status = Status {
            exit_code: e.exit_code(),
            error: Some(ErrorInfo { kind: e.kind().into(), message: e.to_string() }),
        };
    }

    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("report serializes");
        s.push('\n');
        s
    }

    pub fn from_json(s: &str) -> Result<Self, serde_json::Error> {
        serde_json::from_str(s)
    }

    /// Paths of the CSV side files for a report written to `out`.
    pub fn table_path(out: &Path, name: &str) -> PathBuf {
        let stem = out.file_stem().and_then(|s| s.to_str()).unwrap_or("report");
        out.with_file_name(format!("{stem}.{name}.csv"))
    }

    pub fn write(&self, out: Option<&Path>) -> Result<(), CliError> {
        let io = |e: std::io::Error| CliError::Io(e.to_string());
        match out {
            None => {
                print!("{}", self.to_json());
                Ok(())
            }
            Some(path) => {
                std::fs::write(path, self.to_json()).map_err(io)?;
                for (name, table) in &self.tables {
                    write_csv(&Self::table_path(path, name), table)?;
                }
                Ok(())
            }
        }
    }
}

pub fn write_csv(path: &Path, table: &ConvergenceTable) -> Result<(), CliError> {
    let io = |e: csv::Error| CliError::Io(e.to_string());
    let mut w = csv::Writer::from_path(path).map_err(io)?;
    for row in &table.rows {
        w.serialize(row).map_err(io)?;
    }
    w.flush().map_err(|e| CliError::Io(e.to_string()))
}
