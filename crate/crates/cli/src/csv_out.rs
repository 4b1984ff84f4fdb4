//! CSV artifacts: one header row with unit-annotated names, floats written
//! with 17 significant digits so that they parse back to the same `f64`.

use std::path::Path;

use crate::error::{CliError, CliResult};

pub fn real(v: f64) -> String {
    format!("{v:.16e}")
}

pub fn write(path: &Path, header: &[&str], rows: impl IntoIterator<Item = Vec<String>>) -> CliResult<()> {
    let map = |e: csv::Error| match e.into_kind() {
        csv::ErrorKind::Io(io) => CliError::io(path, io),
        other => CliError::corrupt(path, format!("{other:?}")),
    };
    let mut w = csv::Writer::from_path(path).map_err(map)?;
    w.write_record(header).map_err(map)?;
    for row in rows {
        if row.len() != header.len() {
            return Err(CliError::corrupt(path, format!("row of {} fields under a {}-column header", row.len(), header.len())));
        }
        w.write_record(&row).map_err(map)?;
    }
    w.flush().map_err(|e| CliError::io(path, e))
}

/// A parsed CSV file.
#[derive(Debug, Clone, PartialEq)]
pub struct Table {
    pub header: Vec<String>,
    pub rows: Vec<Vec<String>>,
}

impl Table {
    pub fn column(&self, name: &str) -> Option<usize> {
        self.header.iter().position(|h| h == name)
    }

    /// Numeric column by header name.
    pub fn reals(&self, name: &str, path: &Path) -> CliResult<Vec<f64>> {
        let c = self.column(name).ok_or_else(|| CliError::corrupt(path, format!("missing column '{name}'")))?;
        self.rows
            .iter()
            .map(|r| r[c].parse::<f64>().map_err(|_| CliError::corrupt(path, format!("non-numeric '{}' in '{name}'", r[c]))))
            .collect()
    }
}

pub fn read(path: &Path) -> CliResult<Table> {
    let map = |e: csv::Error| match e.into_kind() {
        csv::ErrorKind::Io(io) => CliError::io(path, io),
        other => CliError::corrupt(path, format!("{other:?}")),
    };
    let mut r = csv::Reader::from_path(path).map_err(map)?;
    let header = r.headers().map_err(map)?.iter().map(str::to_string).collect();
    let mut rows = Vec::new();
    for rec in r.records() {
        rows.push(rec.map_err(map)?.iter().map(str::to_string).collect());
    }
    Ok(Table { header, rows })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn seventeen_digits_round_trip() {
        for v in [0.1, -1.0 / 3.0, 1.4034170022049808, 5e-324, -0.0, 123_456_789.123_456_79] {
            let s = real(v);
            assert_eq!(s.parse::<f64>().unwrap().to_bits(), v.to_bits(), "{s}");
        }
        assert_eq!(real(1.0), "1.0000000000000000e0");
    }

    #[test]
    fn write_then_read() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("t.csv");
        write(&p, &["step", "value[-]"], vec![vec!["0".into(), real(2.5)], vec!["1".into(), real(-1e-9)]]).unwrap();
        let t = read(&p).unwrap();
        assert_eq!(t.header, vec!["step", "value[-]"]);
        assert_eq!(t.reals("value[-]", &p).unwrap(), vec![2.5, -1e-9]);
        assert!(t.reals("missing", &p).is_err());
        assert!(write(&p, &["a"], vec![vec!["1".into(), "2".into()]]).is_err());
    }
}
