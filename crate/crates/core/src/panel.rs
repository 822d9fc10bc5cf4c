//! Column-oriented numeric tables with optional (entity, time) keys.
//!
//! Every cell is an `f64`; a missing cell is stored as NaN. Key columns must be
//! complete and integer valued, and (entity, time) pairs must be unique.

use std::collections::HashSet;
use std::fs::File;
use std::io::{Read, Write};
use std::path::Path;

use crate::error::{Error, Result};

/// Names of the entity (household) and time (wave) columns.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PanelKeys {
    pub entity: String,
    pub time: String,
}

impl PanelKeys {
    pub fn new(entity: impl Into<String>, time: impl Into<String>) -> Self {
        Self {
            entity: entity.into(),
            time: time.into(),
        }
    }
}

#[derive(Debug, Clone, Default)]
pub struct Panel {
    names: Vec<String>,
    columns: Vec<Vec<f64>>,
    nrows: usize,
    keys: Option<PanelKeys>,
}

impl PartialEq for Panel {
    /// Cell-wise comparison where two missing cells compare equal.
    fn eq(&self, other: &Self) -> bool {
        self.names == other.names
            && self.nrows == other.nrows
            && self.keys == other.keys
            && self.columns.iter().zip(&other.columns).all(|(a, b)| {
                a.iter()
                    .zip(b)
                    .all(|(x, y)| x == y || (x.is_nan() && y.is_nan()))
            })
    }
}

/// Per-column count of missing cells.
#[derive(Debug, Clone, PartialEq)]
pub struct MissingReport {
    pub rows: usize,
    pub missing: Vec<(String, usize)>,
}

fn is_missing_token(s: &str) -> bool {
    matches!(s, "" | "NA" | "na" | "NaN" | "nan" | ".")
}

impl Panel {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn nrows(&self) -> usize {
        self.nrows
    }

    pub fn ncols(&self) -> usize {
        self.names.len()
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn keys(&self) -> Option<&PanelKeys> {
        self.keys.as_ref()
    }

    pub fn has_column(&self, name: &str) -> bool {
        self.position(name).is_some()
    }

    fn position(&self, name: &str) -> Option<usize> {
        self.names.iter().position(|n| n == name)
    }

    pub fn column(&self, name: &str) -> Result<&[f64]> {
        self.position(name)
            .map(|i| self.columns[i].as_slice())
            .ok_or_else(|| Error::UnknownColumn(name.to_string()))
    }

    /// Appends a new column. The first column fixes the row count.
    pub fn push_column(&mut self, name: impl Into<String>, values: Vec<f64>) -> Result<()> {
        let name = name.into();
        if self.has_column(&name) {
            return Err(Error::DuplicateColumn(name));
        }
        if self.names.is_empty() {
            self.nrows = values.len();
        } else if values.len() != self.nrows {
            return Err(Error::ColumnLength {
                column: name,
                expected: self.nrows,
                got: values.len(),
            });
        }
        self.names.push(name);
        self.columns.push(values);
        Ok(())
    }

    /// Replaces a column in place, or appends it when absent.
    pub fn set_column(&mut self, name: impl Into<String>, values: Vec<f64>) -> Result<()> {
        let name = name.into();
        match self.position(&name) {
            Some(i) => {
                if values.len() != self.nrows {
                    return Err(Error::ColumnLength {
                        column: name,
                        expected: self.nrows,
                        got: values.len(),
                    });
                }
                if self.keys.as_ref().is_some_and(|k| k.entity == name || k.time == name) {
                    return Err(Error::Spec(format!("cannot overwrite key column `{name}`")));
                }
                self.columns[i] = values;
                Ok(())
            }
            None => self.push_column(name, values),
        }
    }

    /// Builds a column from a row-wise function of existing columns.
    ///
    /// Used for derived variables such as participation intensity
    /// (pillar count divided by household size).
    pub fn derive_column<F>(&mut self, name: &str, inputs: &[&str], f: F) -> Result<()>
    where
        F: Fn(&[f64]) -> f64,
    {
        let cols = inputs
            .iter()
            .map(|c| self.column(c))
            .collect::<Result<Vec<_>>>()?;
        let mut buf = vec![0.0; cols.len()];
        let values = (0..self.nrows)
            .map(|r| {
                for (b, c) in buf.iter_mut().zip(&cols) {
                    *b = c[r];
                }
                f(&buf)
            })
            .collect();
        self.set_column(name, values)
    }

    /// Declares the key columns, validating completeness and uniqueness.
    pub fn with_keys(mut self, keys: PanelKeys) -> Result<Self> {
        let entity = self.column(&keys.entity)?;
        let time = self.column(&keys.time)?;
        let mut seen = HashSet::with_capacity(self.nrows);
        for (row, (&e, &t)) in entity.iter().zip(time).enumerate() {
            for (col, v) in [(&keys.entity, e), (&keys.time, t)] {
                if v.is_nan() {
                    return Err(Error::MissingValue {
                        column: col.clone(),
                        row,
                    });
                }
            }
            if !seen.insert((e.to_bits(), t.to_bits())) {
                return Err(Error::DuplicateKey {
                    entity: e.to_string(),
                    time: t.to_string(),
                });
            }
        }
        self.keys = Some(keys);
        Ok(self)
    }

    /// Row subset in the given order; keys are carried over.
    pub fn select_rows(&self, rows: &[usize]) -> Panel {
        Panel {
            names: self.names.clone(),
            columns: self
                .columns
                .iter()
                .map(|c| rows.iter().map(|&r| c[r]).collect())
                .collect(),
            nrows: rows.len(),
            keys: self.keys.clone(),
        }
    }

    pub fn missing_report(&self) -> MissingReport {
        MissingReport {
            rows: self.nrows,
            missing: self
                .names
                .iter()
                .zip(&self.columns)
                .map(|(n, c)| (n.clone(), c.iter().filter(|v| v.is_nan()).count()))
                .collect(),
        }
    }

    /// Reads a comma-delimited table with a header row.
    pub fn read_csv<R: Read>(reader: R) -> Result<Panel> {
        let mut rdr = csv::ReaderBuilder::new()
            .has_headers(true)
            .trim(csv::Trim::All)
            .from_reader(reader);
        let headers: Vec<String> = rdr.headers()?.iter().map(str::to_string).collect();
        if headers.is_empty() || headers.iter().all(String::is_empty) {
            return Err(Error::Empty("no header row".into()));
        }
        let mut columns: Vec<Vec<f64>> = vec![Vec::new(); headers.len()];
        for (i, record) in rdr.records().enumerate() {
            let row = i + 2; // 1-based, after the header
            let record = record.map_err(|e| Error::MalformedRow {
                row,
                reason: e.to_string(),
            })?;
            for (j, cell) in record.iter().enumerate() {
                let value = if is_missing_token(cell) {
                    f64::NAN
                } else {
                    cell.parse::<f64>().map_err(|_| Error::MalformedRow {
                        row,
                        reason: format!("column `{}`: cannot parse `{cell}`", headers[j]),
                    })?
                };
                columns[j].push(value);
            }
        }
        if columns[0].is_empty() {
            return Err(Error::Empty("table has a header but no rows".into()));
        }
        let mut panel = Panel::new();
        for (name, values) in headers.into_iter().zip(columns) {
            panel.push_column(name, values)?;
        }
        Ok(panel)
    }

    pub fn read_csv_path(path: impl AsRef<Path>) -> Result<Panel> {
        let path = path.as_ref();
        let file = File::open(path)?;
        if file.metadata()?.len() == 0 {
            return Err(Error::Empty(format!("{} is empty", path.display())));
        }
        Panel::read_csv(file)
    }

    /// Writes the table; missing cells are written as empty fields and
    /// numbers use the shortest representation that round-trips.
    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut wtr = csv::Writer::from_writer(writer);
        wtr.write_record(&self.names)?;
        let mut record = Vec::with_capacity(self.ncols());
        for r in 0..self.nrows {
            record.clear();
            for c in &self.columns {
                let v = c[r];
                record.push(if v.is_nan() { String::new() } else { v.to_string() });
            }
            wtr.write_record(&record)?;
        }
        wtr.flush()?;
        Ok(())
    }

    pub fn to_csv_string(&self) -> Result<String> {
        let mut buf = Vec::new();
        self.write_csv(&mut buf)?;
        Ok(String::from_utf8(buf).expect("csv output is utf-8"))
    }
}
