use std::io::Write;
use std::path::Path;

use crate::error::{Error, Result};

pub const CSV_VERSION: &str = "v1";

/// Rows of one scenario in output order.
#[derive(Debug, Clone, PartialEq)]
pub struct Table {
    pub scenario: String,
    /// Extra `# ...` lines written after the version line.
    pub comments: Vec<String>,
    pub columns: Vec<String>,
    pub rows: Vec<Vec<String>>,
    /// One human-readable line per grid point.
    pub summary: Vec<String>,
}

impl Table {
    pub fn new(scenario: &str, columns: &[&str]) -> Self {
        Table {
            scenario: scenario.to_string(),
            comments: Vec::new(),
            columns: columns.iter().map(|c| c.to_string()).collect(),
            rows: Vec::new(),
            summary: Vec::new(),
        }
    }

    pub fn push(&mut self, row: Vec<String>) {
        debug_assert_eq!(row.len(), self.columns.len());
        self.rows.push(row);
    }

    pub fn column(&self, name: &str) -> Option<usize> {
        self.columns.iter().position(|c| c == name)
    }

    pub fn write_csv<W: Write>(&self, out: &mut W) -> std::io::Result<()> {
        writeln!(out, "# fedprice-csv {CSV_VERSION} {}", self.scenario)?;
        for c in &self.comments {
            writeln!(out, "# {c}")?;
        }
        writeln!(out, "{}", self.columns.join(","))?;
        for r in &self.rows {
            writeln!(out, "{}", r.join(","))?;
        }
        Ok(())
    }

    pub fn to_csv_string(&self) -> String {
        let mut buf = Vec::new();
        self.write_csv(&mut buf).expect("writing to memory");
        String::from_utf8(buf).expect("csv is utf-8")
    }

    /// Writes to a temporary file next to `path` and renames it into place.
    pub fn write_atomic(&self, path: &Path) -> Result<()> {
        let dir = match path.parent() {
            Some(d) if !d.as_os_str().is_empty() => d,
            _ => Path::new("."),
        };
        let mut tmp = tempfile::NamedTempFile::new_in(dir)
            .map_err(|e| Error::Config(format!("cannot create output in {}: {e}", dir.display())))?;
        self.write_csv(&mut tmp)?;
        tmp.as_file().sync_all()?;
        tmp.persist(path)
            .map_err(|e| Error::Config(format!("cannot write {}: {}", path.display(), e.error)))?;
        Ok(())
    }
}

/// Shortest round-trip text of a float.
pub fn num(x: f64) -> String {
    format!("{x}")
}

pub fn opt_num(x: Option<f64>) -> String {
    x.map(num).unwrap_or_default()
}

/// Status text safe to place in a CSV field.
pub fn status<T>(r: &Result<T>) -> String {
    match r {
        Ok(_) => "ok".to_string(),
        Err(e) => field(&e.to_string()),
    }
}

pub fn field(s: &str) -> String {
    s.replace([',', '\n', '\r'], ";")
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn header_and_rows() {
        let mut t = Table::new("demo", &["a", "b"]);
        t.push(vec![num(0.1), num(f64::NAN)]);
        assert_eq!(t.to_csv_string(), "# fedprice-csv v1 demo\na,b\n0.1,NaN\n");
    }

    #[test]
    fn atomic_write_replaces_file() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("out.csv");
        std::fs::write(&path, "old").unwrap();
        let t = Table::new("demo", &["x"]);
        t.write_atomic(&path).unwrap();
        assert_eq!(std::fs::read_to_string(&path).unwrap(), "# fedprice-csv v1 demo\nx\n");
        assert_eq!(std::fs::read_dir(dir.path()).unwrap().count(), 1);
        assert!(t.write_atomic(&dir.path().join("missing/out.csv")).is_err());
    }

    #[test]
    fn fields_have_no_separators() {
        assert_eq!(field("a,b\nc"), "a;b;c");
    }
}
