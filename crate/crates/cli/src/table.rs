//! Row tables and their CSV and JSON encodings.

use std::io::Write;

use serde_json::{Map, Number, Value};

use crate::CliError;

#[derive(Debug, Clone, PartialEq)]
pub enum Cell {
    Num(f64),
    Int(i64),
    Text(String),
}

impl From<f64> for Cell {
    fn from(v: f64) -> Self {
        Cell::Num(v)
    }
}

impl From<usize> for Cell {
    fn from(v: usize) -> Self {
        Cell::Int(v as i64)
    }
}

impl From<&str> for Cell {
    fn from(v: &str) -> Self {
        Cell::Text(v.to_string())
    }
}

impl From<String> for Cell {
    fn from(v: String) -> Self {
        Cell::Text(v)
    }
}

/// Seventeen significant digits, enough to round-trip every `f64`.
pub fn format_float(v: f64) -> String {
    if v.is_finite() {
        format!("{v:.16e}")
    } else if v.is_nan() {
        "NaN".to_string()
    } else if v > 0.0 {
        "inf".to_string()
    } else {
        "-inf".to_string()
    }
}

impl Cell {
    fn render(&self) -> String {
        match self {
            Cell::Num(v) => format_float(*v),
            Cell::Int(v) => v.to_string(),
            Cell::Text(s) => s.clone(),
        }
    }

    fn to_json(&self) -> Value {
        match self {
            Cell::Num(v) => Number::from_f64(*v).map(Value::Number).unwrap_or(Value::Null),
            Cell::Int(v) => Value::from(*v),
            Cell::Text(s) => Value::String(s.clone()),
        }
    }

    pub fn as_f64(&self) -> Option<f64> {
        match self {
            Cell::Num(v) => Some(*v),
            Cell::Int(v) => Some(*v as f64),
            Cell::Text(_) => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Table {
    pub header: Vec<String>,
    pub rows: Vec<Vec<Cell>>,
}

impl Table {
    pub fn new<S: AsRef<str>>(header: &[S]) -> Self {
        Table {
            header: header.iter().map(|s| s.as_ref().to_string()).collect(),
            rows: Vec::new(),
        }
    }

    pub fn push(&mut self, row: Vec<Cell>) {
        assert_eq!(row.len(), self.header.len(), "row width must match the header");
        self.rows.push(row);
    }

    pub fn column(&self, name: &str) -> Option<usize> {
        self.header.iter().position(|h| h == name)
    }

    /// Values of a column, `None` for text cells.
    pub fn values(&self, name: &str) -> Vec<Option<f64>> {
        match self.column(name) {
            Some(j) => self.rows.iter().map(|r| r[j].as_f64()).collect(),
            None => Vec::new(),
        }
    }

    pub fn write_csv<W: Write>(&self, out: W) -> Result<(), CliError> {
        let mut w = csv::WriterBuilder::new()
            .terminator(csv::Terminator::Any(b'\n'))
            .from_writer(out);
        w.write_record(&self.header)?;
        for row in &self.rows {
            w.write_record(row.iter().map(Cell::render))?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn to_csv_string(&self) -> Result<String, CliError> {
        let mut buf = Vec::new();
        self.write_csv(&mut buf)?;
        Ok(String::from_utf8(buf).expect("csv output is utf-8"))
    }

    /// JSON array with one object per row, keys in header order.
    pub fn write_json<W: Write>(&self, mut out: W) -> Result<(), CliError> {
        let rows: Vec<Value> = self
            .rows
            .iter()
            .map(|r| {
                let mut m = Map::new();
                for (h, c) in self.header.iter().zip(r) {
                    m.insert(h.clone(), c.to_json());
                }
                Value::Object(m)
            })
            .collect();
        serde_json::to_writer_pretty(&mut out, &Value::Array(rows))?;
        out.write_all(b"\n")?;
        Ok(())
    }

    /// Reads a file written by [`Table::write_csv`]. Cells that parse as
    /// numbers come back as `Num` (integers included), the rest as `Text`.
    pub fn read_csv<R: std::io::Read>(input: R) -> Result<Table, CliError> {
        let mut r = csv::Reader::from_reader(input);
        let header: Vec<String> = r.headers()?.iter().map(str::to_string).collect();
        let mut table = Table::new(&header);
        for rec in r.records() {
            let rec = rec?;
            let row = rec
                .iter()
                .map(|s| match s.parse::<f64>() {
                    Ok(v) => Cell::Num(v),
                    Err(_) => Cell::Text(s.to_string()),
                })
                .collect();
            table.rows.push(row);
        }
        Ok(table)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn floats_use_seventeen_significant_digits() {
        assert_eq!(format_float(0.1), "1.0000000000000001e-1");
        assert_eq!(format_float(0.0), "0.0000000000000000e0");
        assert_eq!(format_float(f64::NAN), "NaN");
    }

    #[test]
    fn empty_table_is_header_only() {
        let t = Table::new(&["a", "b"]);
        assert_eq!(t.to_csv_string().unwrap(), "a,b\n");
    }
}
