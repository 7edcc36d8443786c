//! Artifact bundle: results, datasets, plots with sibling CSVs, and a run log.

use std::fs;
use std::path::{Path, PathBuf};

use clap::ValueEnum;
use serde::Serialize;
use serde_json::Value;

use crate::error::CliError;

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum Format {
    Csv,
    Json,
}

pub struct Bundle {
    dir: PathBuf,
    format: Format,
    files: Vec<String>,
    log: Vec<String>,
}

impl Bundle {
    pub fn create(dir: &Path, format: Format) -> Result<Self, CliError> {
        fs::create_dir_all(dir).map_err(|e| CliError::Io(format!("{}: {e}", dir.display())))?;
        Ok(Self {
            dir: dir.to_path_buf(),
            format,
            files: Vec::new(),
            log: Vec::new(),
        })
    }

    pub fn log(&mut self, line: impl Into<String>) {
        let line = line.into();
        log::info!("{line}");
        self.log.push(line);
    }

    fn write(&mut self, name: &str, contents: &[u8]) -> Result<(), CliError> {
        let path = self.dir.join(name);
        fs::write(&path, contents).map_err(|e| CliError::Io(format!("{}: {e}", path.display())))?;
        self.files.push(name.to_string());
        Ok(())
    }

    /// Writes `results.json` or `results.csv` depending on the output format.
    pub fn results<T: Serialize>(&mut self, value: &T) -> Result<(), CliError> {
        let json = serde_json::to_value(value).map_err(|e| CliError::Runtime(e.to_string()))?;
        match self.format {
            Format::Json => {
                let mut text = serde_json::to_string_pretty(&json).map_err(|e| CliError::Runtime(e.to_string()))?;
                text.push('\n');
                self.write("results.json", text.as_bytes())
            }
            Format::Csv => {
                let mut rows = Vec::new();
                flatten("", &json, &mut rows);
                let mut w = csv::Writer::from_writer(Vec::new());
                w.write_record(["key", "value"]).map_err(csv_err)?;
                for (k, v) in rows {
                    w.write_record([k, v]).map_err(csv_err)?;
                }
                let bytes = w.into_inner().map_err(|e| CliError::Io(e.to_string()))?;
                self.write("results.csv", &bytes)
            }
        }
    }

    pub fn table(&mut self, name: &str, header: &[&str], rows: &[Vec<String>]) -> Result<(), CliError> {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(header).map_err(csv_err)?;
        for r in rows {
            w.write_record(r).map_err(csv_err)?;
        }
        let bytes = w.into_inner().map_err(|e| CliError::Io(e.to_string()))?;
        self.write(name, &bytes)
    }

    pub fn raw(&mut self, name: &str, bytes: &[u8]) -> Result<(), CliError> {
        self.write(name, bytes)
    }

    /// Writes `<stem>.svg` and the data behind it as `<stem>.csv`.
    pub fn plot(&mut self, stem: &str, svg: &str, header: &[&str], rows: &[Vec<String>]) -> Result<(), CliError> {
        self.table(&format!("{stem}.csv"), header, rows)?;
        self.write(&format!("{stem}.svg"), svg.as_bytes())
    }

    /// Writes `run.log` and returns the list of files in the bundle.
    pub fn finish(mut self) -> Result<Vec<String>, CliError> {
        let mut text = self.log.join("\n");
        text.push('\n');
        self.write("run.log", text.as_bytes())?;
        Ok(self.files)
    }
}

fn csv_err(e: csv::Error) -> CliError {
    CliError::Io(e.to_string())
}

fn flatten(prefix: &str, v: &Value, out: &mut Vec<(String, String)>) {
    let key = |k: &str| if prefix.is_empty() { k.to_string() } else { format!("{prefix}.{k}") };
    match v {
        Value::Object(map) => map.iter().for_each(|(k, x)| flatten(&key(k), x, out)),
        Value::Array(xs) => xs.iter().enumerate().for_each(|(i, x)| flatten(&key(&i.to_string()), x, out)),
        Value::String(s) => out.push((prefix.to_string(), s.clone())),
        Value::Null => out.push((prefix.to_string(), String::new())),
        other => out.push((prefix.to_string(), other.to_string())),
    }
}

/// Fixed-precision float formatting for CSV cells.
pub fn num(x: f64) -> String {
    format!("{x:.9e}")
}
