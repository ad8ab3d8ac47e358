//! Column-oriented numeric logs written as CSV with round-trip precision.

use std::io;
use std::path::Path;

/// Rows of `f64` under named columns.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct Table {
    pub columns: Vec<String>,
    pub rows: Vec<Vec<f64>>,
}

/// Enough digits (17 significant) to reproduce every `f64` exactly.
pub fn format_value(v: f64) -> String {
    format!("{v:.16e}")
}

impl Table {
    pub fn new<I, S>(columns: I) -> Self
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        Self {
            columns: columns.into_iter().map(Into::into).collect(),
            rows: Vec::new(),
        }
    }

    pub fn push(&mut self, row: Vec<f64>) {
        debug_assert_eq!(row.len(), self.columns.len(), "row width");
        self.rows.push(row);
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn index_of(&self, name: &str) -> Option<usize> {
        self.columns.iter().position(|c| c == name)
    }

    pub fn column(&self, name: &str) -> Option<Vec<f64>> {
        let i = self.index_of(name)?;
        Some(self.rows.iter().map(|r| r[i]).collect())
    }

    pub fn last(&self, name: &str) -> Option<f64> {
        let i = self.index_of(name)?;
        self.rows.last().map(|r| r[i])
    }

    pub fn write_csv<W: io::Write>(&self, out: W) -> io::Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(&self.columns)?;
        for row in &self.rows {
            w.write_record(row.iter().map(|v| format_value(*v)))?;
        }
        w.flush()
    }

    pub fn to_csv_string(&self) -> String {
        let mut buf = Vec::new();
        self.write_csv(&mut buf).expect("writing to memory");
        String::from_utf8(buf).expect("CSV output is ASCII")
    }

    pub fn save(&self, path: &Path) -> io::Result<()> {
        let file = std::fs::File::create(path)?;
        self.write_csv(io::BufWriter::new(file))
    }
}

/// Column names `prefix_x`, `prefix_y`, `prefix_z`.
pub fn xyz(prefix: &str) -> [String; 3] {
    [format!("{prefix}_x"), format!("{prefix}_y"), format!("{prefix}_z")]
}

/// Column names `prefix_0` … `prefix_3` for a quaternion.
pub fn quat(prefix: &str) -> [String; 4] {
    [
        format!("{prefix}_0"),
        format!("{prefix}_1"),
        format!("{prefix}_2"),
        format!("{prefix}_3"),
    ]
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn round_trip_precision() {
        let mut t = Table::new(["t", "x"]);
        let x = 0.1 + 0.2;
        t.push(vec![0.0, x]);
        t.push(vec![1.0, -1e-300]);
        let s = t.to_csv_string();
        let mut r = csv::Reader::from_reader(s.as_bytes());
        let rows: Vec<Vec<f64>> = r
            .records()
            .map(|rec| rec.unwrap().iter().map(|v| v.parse().unwrap()).collect())
            .collect();
        assert_eq!(rows, t.rows);
        assert!(s.starts_with("t,x\n"));
    }

    #[test]
    fn column_access() {
        let mut t = Table::new(["a", "b"]);
        t.push(vec![1.0, 2.0]);
        t.push(vec![3.0, 4.0]);
        assert_eq!(t.column("b"), Some(vec![2.0, 4.0]));
        assert_eq!(t.last("a"), Some(3.0));
        assert_eq!(t.column("c"), None);
    }
}
