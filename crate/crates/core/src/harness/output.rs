//! Result records and their CSV form.
//!
//! Columns, in order:
//!
//! | column         | content                                              |
//! |----------------|------------------------------------------------------|
//! | `command`      | command that produced the row                        |
//! | `params`       | `key=value` pairs joined by `;`, lists joined by `\|` |
//! | `metric`       | metric name                                          |
//! | `value`        | metric value                                         |
//! | `std_error`    | Monte Carlo standard error, empty if not sampled     |
//! | `bound`        | theoretical bound the value is checked against       |
//! | `pass`         | `true` / `false`, empty when nothing is checked      |
//! | `wall_time_ms` | wall time of the producing run                       |
//!
//! Floats are written with 15 significant digits in scientific notation.

use std::fs::File;
use std::io::{Read, Write};
use std::path::Path;

use crate::error::{Error, Result};

pub const CSV_HEADER: [&str; 8] = [
    "command",
    "params",
    "metric",
    "value",
    "std_error",
    "bound",
    "pass",
    "wall_time_ms",
];

#[derive(Debug, Clone, PartialEq)]
pub struct ResultRecord {
    pub command: String,
    pub params: Vec<(String, String)>,
    pub metric: String,
    pub value: f64,
    pub std_error: Option<f64>,
    pub bound: Option<f64>,
    pub pass: Option<bool>,
    pub wall_time_ms: f64,
}

impl ResultRecord {
    pub fn new(command: &str, params: &[(String, String)], metric: &str, value: f64) -> Self {
        Self {
            command: command.to_string(),
            params: params.to_vec(),
            metric: metric.to_string(),
            value,
            std_error: None,
            bound: None,
            pass: None,
            wall_time_ms: 0.0,
        }
    }

    pub fn with_std_error(mut self, se: f64) -> Self {
        self.std_error = Some(se);
        self
    }

    pub fn with_bound(mut self, bound: f64) -> Self {
        self.bound = Some(bound);
        self
    }

    pub fn with_pass(mut self, pass: bool) -> Self {
        self.pass = Some(pass);
        self
    }

    pub fn param(&self, key: &str) -> Option<&str> {
        self.params
            .iter()
            .find(|(k, _)| k == key)
            .map(|(_, v)| v.as_str())
    }

    pub fn failed(&self) -> bool {
        self.pass == Some(false)
    }
}

pub fn format_float(x: f64) -> String {
    format!("{x:.14e}")
}

fn format_params(params: &[(String, String)]) -> String {
    params
        .iter()
        .map(|(k, v)| format!("{k}={v}"))
        .collect::<Vec<_>>()
        .join(";")
}

fn parse_params(text: &str) -> Result<Vec<(String, String)>, String> {
    if text.is_empty() {
        return Ok(Vec::new());
    }
    text.split(';')
        .map(|kv| {
            kv.split_once('=')
                .map(|(k, v)| (k.to_string(), v.to_string()))
                .ok_or_else(|| format!("malformed parameter `{kv}`"))
        })
        .collect()
}

fn record_fields(r: &ResultRecord) -> [String; 8] {
    let opt = |x: Option<f64>| x.map(format_float).unwrap_or_default();
    [
        r.command.clone(),
        format_params(&r.params),
        r.metric.clone(),
        format_float(r.value),
        opt(r.std_error),
        opt(r.bound),
        r.pass.map(|p| p.to_string()).unwrap_or_default(),
        format!("{:.3}", r.wall_time_ms),
    ]
}

/// Writes the records as CSV to any sink.
pub fn write_csv_to<W: Write>(records: &[ResultRecord], sink: W) -> Result<(), csv::Error> {
    let mut w = csv::WriterBuilder::new()
        .terminator(csv::Terminator::Any(b'\n'))
        .from_writer(sink);
    w.write_record(CSV_HEADER)?;
    for r in records {
        w.write_record(record_fields(r))?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_csv(records: &[ResultRecord], path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    write_csv_to(records, file).map_err(|e| match e.into_kind() {
        csv::ErrorKind::Io(io) => Error::io(path, io),
        other => Error::Format {
            path: path.to_path_buf(),
            message: format!("{other:?}"),
        },
    })
}

/// Parses CSV produced by [`write_csv_to`].
pub fn read_csv_from<R: Read>(source: R, path: &Path) -> Result<Vec<ResultRecord>> {
    let fmt = |message: String| Error::Format {
        path: path.to_path_buf(),
        message,
    };
    let mut rdr = csv::Reader::from_reader(source);
    let header = rdr.headers().map_err(|e| fmt(e.to_string()))?;
    if header.iter().ne(CSV_HEADER) {
        return Err(fmt(format!(
            "unexpected header {:?}",
            header.iter().collect::<Vec<_>>()
        )));
    }
    let mut out = Vec::new();
    for (i, row) in rdr.records().enumerate() {
        let row = row.map_err(|e| fmt(e.to_string()))?;
        let line = i + 2;
        let num = |col: usize| -> Result<f64> {
            row[col]
                .parse()
                .map_err(|e| fmt(format!("line {line}, {}: {e}", CSV_HEADER[col])))
        };
        let opt = |col: usize| -> Result<Option<f64>> {
            if row[col].is_empty() {
                Ok(None)
            } else {
                num(col).map(Some)
            }
        };
        let pass = match &row[6] {
            "" => None,
            "true" => Some(true),
            "false" => Some(false),
            other => return Err(fmt(format!("line {line}, pass: `{other}`"))),
        };
        out.push(ResultRecord {
            command: row[0].to_string(),
            params: parse_params(&row[1]).map_err(|m| fmt(format!("line {line}: {m}")))?,
            metric: row[2].to_string(),
            value: num(3)?,
            std_error: opt(4)?,
            bound: opt(5)?,
            pass,
            wall_time_ms: num(7)?,
        });
    }
    Ok(out)
}

pub fn read_csv(path: impl AsRef<Path>) -> Result<Vec<ResultRecord>> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    read_csv_from(file, path)
}
