use std::io::Write;

use serde_json::{Map, Value};

use crate::config::Settings;
use crate::CliError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum)]
pub enum Format {
    Csv,
    Json,
}

/// Result rows plus a summary. CSV output carries the rows only and never
/// timing, so identical inputs give identical bytes. JSON adds the echoed
/// inputs, the summary and the elapsed time.
pub struct Report {
    pub columns: Vec<String>,
    pub rows: Vec<Vec<Value>>,
    pub summary: Map<String, Value>,
    /// Set when a checked quantity missed its tolerance.
    pub violation: Option<String>,
}

impl Report {
    pub fn new(columns: &[&str]) -> Self {
        Report {
            columns: columns.iter().map(|c| c.to_string()).collect(),
            rows: Vec::new(),
            summary: Map::new(),
            violation: None,
        }
    }

    pub fn push(&mut self, row: Vec<Value>) {
        debug_assert_eq!(row.len(), self.columns.len());
        self.rows.push(row);
    }

    pub fn note(&mut self, key: &str, v: impl Into<Value>) {
        self.summary.insert(key.to_string(), v.into());
    }

    pub fn violate(&mut self, msg: String) {
        if self.violation.is_none() {
            self.violation = Some(msg);
        }
    }
}

fn cell(v: &Value) -> String {
    match v {
        Value::Null => String::new(),
        Value::String(s) => s.clone(),
        other => other.to_string(),
    }
}

pub fn write(
    report: &Report,
    command: &str,
    settings: &Settings,
    format: Format,
    elapsed: f64,
    out: &mut dyn Write,
) -> Result<(), CliError> {
    let hash = settings.hash();
    match format {
        Format::Csv => {
            let mut w = csv::Writer::from_writer(out);
            let mut header = report.columns.clone();
            header.push("config_hash".into());
            w.write_record(&header).map_err(io)?;
            for row in &report.rows {
                let mut rec: Vec<String> = row.iter().map(cell).collect();
                rec.push(hash.clone());
                w.write_record(&rec).map_err(io)?;
            }
            w.flush().map_err(|e| CliError::Io(e.to_string()))?;
        }
        Format::Json => {
            let rows: Vec<Value> = report
                .rows
                .iter()
                .map(|r| Value::Object(report.columns.iter().cloned().zip(r.iter().cloned()).collect()))
                .collect();
            let mut doc = Map::new();
            doc.insert("command".into(), command.into());
            doc.insert("config_hash".into(), hash.into());
            doc.insert("inputs".into(), serde_json::to_value(settings.inputs()).expect("inputs"));
            doc.insert("rows".into(), rows.into());
            doc.insert("summary".into(), Value::Object(report.summary.clone()));
            doc.insert("tolerance_violation".into(), report.violation.clone().into());
            doc.insert("elapsed_s".into(), elapsed.into());
            serde_json::to_writer_pretty(&mut *out, &Value::Object(doc)).map_err(|e| CliError::Io(e.to_string()))?;
            writeln!(out).map_err(|e| CliError::Io(e.to_string()))?;
        }
    }
    Ok(())
}

fn io(e: csv::Error) -> CliError {
    CliError::Io(e.to_string())
}
