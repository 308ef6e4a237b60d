use std::collections::BTreeMap;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Raw scores keyed by model, then benchmark. BTreeMaps keep every
/// emitted artifact in sorted order.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct ScoreTable {
    pub scores: BTreeMap<String, BTreeMap<String, f64>>,
}

impl ScoreTable {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&mut self, model: impl Into<String>, benchmark: impl Into<String>, score: f64) {
        self.scores
            .entry(model.into())
            .or_default()
            .insert(benchmark.into(), score);
    }

    pub fn get(&self, model: &str, benchmark: &str) -> Option<f64> {
        self.scores.get(model)?.get(benchmark).copied()
    }

    pub fn benchmarks(&self) -> Vec<String> {
        let mut b: Vec<String> = self.scores.values().flat_map(|m| m.keys().cloned()).collect();
        b.sort();
        b.dedup();
        b
    }

    /// (min, max) of each benchmark column.
    pub fn column_ranges(&self) -> BTreeMap<String, (f64, f64)> {
        let mut r: BTreeMap<String, (f64, f64)> = BTreeMap::new();
        for row in self.scores.values() {
            for (b, &x) in row {
                let e = r.entry(b.clone()).or_insert((x, x));
                e.0 = e.0.min(x);
                e.1 = e.1.max(x);
            }
        }
        r
    }

    fn validate(&self) -> Result<()> {
        for (m, row) in &self.scores {
            for (b, x) in row {
                if !x.is_finite() {
                    return Err(Error::contract(format!("score for {m}/{b} is not finite")));
                }
            }
        }
        Ok(())
    }
}

/// Per-benchmark `(x - min + 10) / (max - min + 10)`.
pub fn normalize_scores(table: &ScoreTable) -> ScoreTable {
    let ranges = table.column_ranges();
    let mut out = ScoreTable::new();
    for (m, row) in &table.scores {
        for (b, &x) in row {
            let (lo, hi) = ranges[b];
            out.insert(m.clone(), b.clone(), (x - lo + 10.0) / (hi - lo + 10.0));
        }
    }
    out
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ReportFormat {
    Csv,
    Json,
}

impl FromStr for ReportFormat {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "csv" => Ok(Self::Csv),
            "json" => Ok(Self::Json),
            other => Err(Error::UnsupportedFormat(other.to_string())),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportRow {
    pub model: String,
    pub benchmark: String,
    pub raw: f64,
    pub normalized: f64,
}

fn rows(table: &ScoreTable) -> Vec<ReportRow> {
    let norm = normalize_scores(table);
    table
        .scores
        .iter()
        .flat_map(|(m, row)| {
            let norm = &norm;
            row.iter().map(move |(b, &raw)| ReportRow {
                model: m.clone(),
                benchmark: b.clone(),
                raw,
                normalized: norm.get(m, b).unwrap_or(f64::NAN),
            })
        })
        .collect()
}

/// Report body sorted by model, then benchmark.
pub fn render_report(table: &ScoreTable, format: ReportFormat) -> Result<String> {
    table.validate()?;
    let rows = rows(table);
    match format {
        ReportFormat::Csv => {
            let mut w = csv::Writer::from_writer(Vec::new());
            for r in &rows {
                w.serialize(r).map_err(|e| Error::contract(e.to_string()))?;
            }
            if rows.is_empty() {
                w.write_record(["model", "benchmark", "raw", "normalized"])
                    .map_err(|e| Error::contract(e.to_string()))?;
            }
            let bytes = w.into_inner().map_err(|e| Error::contract(e.to_string()))?;
            String::from_utf8(bytes).map_err(|e| Error::contract(e.to_string()))
        }
        ReportFormat::Json => Ok(serde_json::to_string_pretty(&rows)? + "\n"),
    }
}

/// Writes the report atomically to `path`.
pub fn emit_report(table: &ScoreTable, format: ReportFormat, path: impl AsRef<Path>) -> Result<()> {
    let body = render_report(table, format)?;
    crate::fsio::write_atomic(path, body.as_bytes())
}
