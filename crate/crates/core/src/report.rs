// SPDX-License-Identifier: Apache-2.0

//! Result rows and their CSV / JSON encodings.

use std::fs;
use std::io::Write;
use std::path::Path;
use std::str::FromStr;

use serde_json::{Map, Number, Value};

use crate::error::{Error, Result};

pub const HEADER: [&str; 11] = [
    "dataset",
    "score",
    "epsilon",
    "lambda",
    "seed",
    "decision",
    "correct",
    "abstained",
    "margin",
    "sigma",
    "predicted_utility",
];

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Format {
    Csv,
    Json,
}

impl FromStr for Format {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        match s {
            "csv" => Ok(Format::Csv),
            "json" => Ok(Format::Json),
            _ => Err(format!("unknown format '{s}' (expected csv or json)")),
        }
    }
}

/// Trial rows carry one decision; aggregate rows summarize a grid cell.
#[derive(Debug, Clone, PartialEq)]
pub enum Outcome {
    Trial {
        decision: String,
        correct: Option<bool>,
        abstained: bool,
    },
    Aggregate {
        correct_rate: Option<f64>,
        abstain_rate: f64,
    },
    Failed(String),
}

#[derive(Debug, Clone, PartialEq)]
pub struct ResultRow {
    pub dataset: String,
    pub score: String,
    /// `None` for non-private runs.
    pub epsilon: Option<f64>,
    pub lambda: f64,
    /// `None` marks an aggregate row.
    pub seed: Option<u64>,
    pub outcome: Outcome,
    pub margin: Option<f64>,
    pub sigma: Option<f64>,
    pub predicted_utility: Option<f64>,
}

/// Rounds to 12 significant digits and prints the shortest decimal for the result.
pub fn format_float(v: f64) -> String {
    if !v.is_finite() {
        return v.to_string();
    }
    let rounded: f64 = format!("{v:.11e}").parse().expect("scientific float parses");
    format!("{rounded}")
}

fn float_value(v: f64) -> Value {
    if !v.is_finite() {
        return Value::String(v.to_string());
    }
    let rounded: f64 = format_float(v).parse().expect("formatted float parses");
    Number::from_f64(rounded).map_or(Value::Null, Value::Number)
}

enum Cell {
    Text(String),
    Float(f64),
    Bool(bool),
    Missing,
}

impl Cell {
    fn opt_float(v: Option<f64>) -> Self {
        v.map_or(Cell::Missing, Cell::Float)
    }

    fn csv(&self) -> String {
        match self {
            Cell::Text(s) => s.clone(),
            Cell::Float(v) => format_float(*v),
            Cell::Bool(b) => b.to_string(),
            Cell::Missing => String::new(),
        }
    }

    fn json(&self) -> Value {
        match self {
            Cell::Text(s) => Value::String(s.clone()),
            Cell::Float(v) => float_value(*v),
            Cell::Bool(b) => Value::Bool(*b),
            Cell::Missing => Value::Null,
        }
    }
}

impl ResultRow {
    fn cells(&self) -> [Cell; 11] {
        let (decision, correct, abstained) = match &self.outcome {
            Outcome::Trial {
                decision,
                correct,
                abstained,
            } => (
                Cell::Text(decision.clone()),
                correct.map_or(Cell::Missing, Cell::Bool),
                Cell::Bool(*abstained),
            ),
            Outcome::Aggregate {
                correct_rate,
                abstain_rate,
            } => (
                Cell::Text("aggregate".into()),
                Cell::opt_float(*correct_rate),
                Cell::Float(*abstain_rate),
            ),
            Outcome::Failed(message) => (Cell::Text(format!("error: {message}")), Cell::Missing, Cell::Missing),
        };
        [
            Cell::Text(self.dataset.clone()),
            Cell::Text(self.score.clone()),
            self.epsilon.map_or(Cell::Text("none".into()), Cell::Float),
            Cell::Float(self.lambda),
            Cell::Text(self.seed.map_or_else(|| "aggregate".to_string(), |s| s.to_string())),
            decision,
            correct,
            abstained,
            Cell::opt_float(self.margin),
            Cell::opt_float(self.sigma),
            Cell::opt_float(self.predicted_utility),
        ]
    }

    pub fn is_abstained(&self) -> bool {
        matches!(self.outcome, Outcome::Trial { abstained: true, .. })
    }

    pub fn is_trial(&self) -> bool {
        matches!(self.outcome, Outcome::Trial { .. })
    }
}

pub fn render_csv(rows: &[ResultRow]) -> Result<String> {
    let mut writer = csv::Writer::from_writer(Vec::new());
    let encode = |e: csv::Error| Error::Encode(e.to_string());
    writer.write_record(HEADER).map_err(encode)?;
    for row in rows {
        writer.write_record(row.cells().iter().map(Cell::csv)).map_err(encode)?;
    }
    let bytes = writer.into_inner().map_err(|e| Error::Encode(e.to_string()))?;
    String::from_utf8(bytes).map_err(|e| Error::Encode(e.to_string()))
}

pub fn render_json(rows: &[ResultRow]) -> Result<String> {
    // serde_json maps are sorted, so keys are written by hand in header order
    let mut out = String::from("[\n");
    for (i, row) in rows.iter().enumerate() {
        out.push_str("  {");
        for (j, (key, cell)) in HEADER.iter().zip(row.cells()).enumerate() {
            if j > 0 {
                out.push_str(", ");
            }
            let value = serde_json::to_string(&cell.json()).map_err(|e| Error::Encode(e.to_string()))?;
            out.push_str(&format!("\"{key}\": {value}"));
        }
        out.push('}');
        if i + 1 < rows.len() {
            out.push(',');
        }
        out.push('\n');
    }
    out.push_str("]\n");
    Ok(out)
}

pub fn render(rows: &[ResultRow], format: Format) -> Result<String> {
    match format {
        Format::Csv => render_csv(rows),
        Format::Json => render_json(rows),
    }
}

/// Writes `rows` to `path`, or to stdout when `path` is `None`.
pub fn emit_report(rows: &[ResultRow], format: Format, path: Option<&Path>) -> Result<()> {
    if rows.is_empty() {
        return Err(Error::invalid("rows", 0.0, "report has no rows"));
    }
    let text = render(rows, format)?;
    match path {
        Some(p) => fs::write(p, text).map_err(|source| Error::Io {
            path: p.to_path_buf(),
            source,
        }),
        None => {
            let stdout = std::io::stdout();
            let mut lock = stdout.lock();
            lock.write_all(text.as_bytes()).map_err(|source| Error::Io {
                path: "<stdout>".into(),
                source,
            })
        }
    }
}

/// Parses a JSON report back into generic objects (used by tests and tooling).
pub fn parse_json_report(text: &str) -> Result<Vec<Map<String, Value>>> {
    let value: Value = serde_json::from_str(text).map_err(|e| Error::Encode(e.to_string()))?;
    match value {
        Value::Array(items) => items
            .into_iter()
            .map(|v| match v {
                Value::Object(map) => Ok(map),
                other => Err(Error::Encode(format!("expected an object, found {other}"))),
            })
            .collect(),
        other => Err(Error::Encode(format!("expected an array, found {other}"))),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn row() -> ResultRow {
        ResultRow {
            dataset: "pair, \"odd\"".into(),
            score: "kendall".into(),
            epsilon: Some(1.0),
            lambda: 0.1,
            seed: Some(17),
            outcome: Outcome::Trial {
                decision: "X->Y".into(),
                correct: Some(true),
                abstained: false,
            },
            margin: Some(0.123_456_789_012_345_7),
            sigma: Some(0.04),
            predicted_utility: Some(2.0 / 3.0),
        }
    }

    #[test]
    fn float_digits() {
        assert_eq!(format_float(0.1), "0.1");
        assert_eq!(format_float(2.0 / 3.0), "0.666666666667");
        assert_eq!(format_float(1234567.891234567), "1234567.89123");
        assert_eq!(format_float(1e-20 / 3.0), "0.00000000000000000000333333333333");
        assert_eq!(format_float(f64::INFINITY), "inf");
    }

    #[test]
    fn csv_one_row() {
        let text = render_csv(&[row()]).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines.len(), 2);
        assert_eq!(lines[0], HEADER.join(","));
        let mut reader = csv::Reader::from_reader(text.as_bytes());
        let rec = reader.records().next().unwrap().unwrap();
        assert_eq!(&rec[0], "pair, \"odd\"");
        assert_eq!(&rec[8], "0.123456789012");
        assert_eq!(&rec[6], "true");
    }

    #[test]
    fn json_roundtrip() {
        let mut agg = row();
        agg.seed = None;
        agg.epsilon = None;
        agg.outcome = Outcome::Aggregate {
            correct_rate: Some(0.75),
            abstain_rate: 0.0,
        };
        let text = render_json(&[row(), agg]).unwrap();
        let parsed = parse_json_report(&text).unwrap();
        assert_eq!(parsed.len(), 2);
        for obj in &parsed {
            let mut keys: Vec<&str> = obj.keys().map(String::as_str).collect();
            let mut expected = HEADER.to_vec();
            keys.sort_unstable();
            expected.sort_unstable();
            assert_eq!(keys, expected);
        }
        assert_eq!(parsed[0]["correct"], Value::Bool(true));
        assert_eq!(parsed[1]["seed"], Value::String("aggregate".into()));
        assert_eq!(parsed[1]["correct"].as_f64(), Some(0.75));
        assert_eq!(parsed[0]["predicted_utility"].as_f64(), Some(0.666666666667));
        let pos: Vec<usize> = HEADER.iter().map(|k| text.find(&format!("\"{k}\"")).unwrap()).collect();
        assert!(pos.windows(2).all(|w| w[0] < w[1]));
    }

    #[test]
    fn empty_and_unwritable() {
        assert!(emit_report(&[], Format::Csv, None).is_err());
        let err = emit_report(&[row()], Format::Csv, Some(Path::new("/nonexistent/dir/out.csv"))).unwrap_err();
        assert!(err.to_string().contains("/nonexistent/dir/out.csv"));
    }
}
