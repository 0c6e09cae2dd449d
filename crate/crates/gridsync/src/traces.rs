//! Recorded channels and the `traces.csv` format.
//!
//! Values are written with Rust's shortest round-trip float formatting, so
//! parsing the file back reproduces every sample bit for bit.

use std::io::Write;
use std::path::Path;

use crate::OutputError;

#[derive(Debug, Clone, PartialEq, Default)]
pub struct Traces {
    pub time_s: Vec<f64>,
    pub names: Vec<String>,
    /// One column per name, each as long as `time_s`.
    pub columns: Vec<Vec<f64>>,
}

#[derive(Debug, thiserror::Error)]
pub enum CsvError {
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error("missing header")]
    MissingHeader,
    #[error("first column must be time_s")]
    NoTimeColumn,
    #[error("row {row}: {msg}")]
    Row { row: usize, msg: String },
}

impl Traces {
    pub fn new(names: Vec<String>) -> Self {
        let columns = vec![Vec::new(); names.len()];
        Self {
            time_s: Vec::new(),
            names,
            columns,
        }
    }

    pub fn len(&self) -> usize {
        self.time_s.len()
    }

    pub fn is_empty(&self) -> bool {
        self.time_s.is_empty()
    }

    pub fn column(&self, name: &str) -> Option<&[f64]> {
        let i = self.names.iter().position(|n| n == name)?;
        Some(&self.columns[i])
    }

    pub fn write_csv<W: Write>(&self, out: W) -> Result<(), csv::Error> {
        let mut w = csv::Writer::from_writer(out);
        let header = std::iter::once("time_s").chain(self.names.iter().map(String::as_str));
        w.write_record(header)?;
        let mut row = Vec::with_capacity(self.names.len() + 1);
        for (i, t) in self.time_s.iter().enumerate() {
            row.clear();
            row.push(t.to_string());
            row.extend(self.columns.iter().map(|c| c[i].to_string()));
            w.write_record(&row)?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn to_csv_string(&self) -> String {
        let mut buf = Vec::new();
        self.write_csv(&mut buf).expect("writing to memory");
        String::from_utf8(buf).expect("csv output is ascii")
    }

    pub fn parse_csv(text: &str) -> Result<Self, CsvError> {
        let mut r = csv::ReaderBuilder::new()
            .has_headers(false)
            .from_reader(text.as_bytes());
        let mut records = r.records();
        let header = records.next().ok_or(CsvError::MissingHeader)??;
        let mut fields = header.iter();
        if fields.next() != Some("time_s") {
            return Err(CsvError::NoTimeColumn);
        }
        let mut traces = Traces::new(fields.map(str::to_string).collect());
        for (row, record) in records.enumerate() {
            let record = record?;
            let mut values = record.iter().map(|v| {
                v.parse::<f64>().map_err(|e| CsvError::Row {
                    row: row + 1,
                    msg: format!("`{v}`: {e}"),
                })
            });
            traces.time_s.push(values.next().ok_or(CsvError::Row {
                row: row + 1,
                msg: "empty row".into(),
            })??);
            for col in traces.columns.iter_mut() {
                col.push(values.next().ok_or(CsvError::Row {
                    row: row + 1,
                    msg: "too few fields".into(),
                })??);
            }
        }
        Ok(traces)
    }
}

pub fn emit_csv(traces: &Traces, path: &Path) -> Result<(), OutputError> {
    let file = std::fs::File::create(path).map_err(|e| OutputError::new(path, e))?;
    traces
        .write_csv(std::io::BufWriter::new(file))
        .map_err(|e| OutputError::new(path, e))
}
