//! CSV tables with a `#`-prefixed metadata header.

use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use super::HarnessError;

/// Metadata written at the top of every table.
#[derive(Debug, Clone)]
pub struct Header {
    pub command: String,
    pub config_hash: String,
    pub seed: u64,
}

/// One output table; cells are already formatted.
#[derive(Debug, Clone, PartialEq)]
pub struct Table {
    pub name: String,
    pub columns: Vec<String>,
    pub rows: Vec<Vec<String>>,
}

impl Table {
    pub fn new(name: &str, columns: &[&str]) -> Self {
        Self {
            name: name.to_string(),
            columns: columns.iter().map(|c| c.to_string()).collect(),
            rows: Vec::new(),
        }
    }

    pub fn push(&mut self, row: Vec<String>) {
        debug_assert_eq!(row.len(), self.columns.len());
        self.rows.push(row);
    }

    pub fn write(&self, dir: &Path, header: &Header) -> Result<PathBuf, HarnessError> {
        fs::create_dir_all(dir)?;
        let path = dir.join(format!("{}.csv", self.name));
        let mut out = BufWriter::new(File::create(&path)?);
        writeln!(out, "# qrelax {}", crate::VERSION)?;
        writeln!(out, "# command: {}", header.command)?;
        writeln!(out, "# config_hash: {}", header.config_hash)?;
        writeln!(out, "# seed: {}", header.seed)?;
        {
            let mut w = csv::Writer::from_writer(&mut out);
            w.write_record(&self.columns)?;
            for r in &self.rows {
                w.write_record(r)?;
            }
            w.flush()?;
        }
        out.flush()?;
        Ok(path)
    }
}

/// Shortest round-trip representation; `NaN` and infinities spelled out.
pub fn num(x: f64) -> String {
    if x.is_nan() {
        "NaN".to_string()
    } else if x.is_infinite() {
        if x > 0.0 { "inf" } else { "-inf" }.to_string()
    } else {
        format!("{x:e}")
    }
}

pub fn opt(x: Option<f64>) -> String {
    x.map(num).unwrap_or_default()
}

/// Reads a table written by [`Table::write`], skipping the header block.
pub fn read_table(path: &Path) -> Result<Table, HarnessError> {
    let text = fs::read_to_string(path)?;
    let body: String = text
        .lines()
        .filter(|l| !l.starts_with('#'))
        .map(|l| format!("{l}\n"))
        .collect();
    let mut r = csv::Reader::from_reader(body.as_bytes());
    let columns = r.headers()?.iter().map(str::to_string).collect();
    let mut rows = Vec::new();
    for rec in r.records() {
        rows.push(rec?.iter().map(str::to_string).collect());
    }
    let name = path
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_default();
    Ok(Table {
        name,
        columns,
        rows,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn roundtrip_with_header() {
        let dir = tempfile::tempdir().unwrap();
        let mut t = Table::new("demo", &["a", "b"]);
        t.push(vec![num(0.1), num(f64::NAN)]);
        t.push(vec![num(-2.5e-12), "x,y".into()]);
        let h = Header {
            command: "quench".into(),
            config_hash: "abc".into(),
            seed: 3,
        };
        let p = t.write(dir.path(), &h).unwrap();
        let text = fs::read_to_string(&p).unwrap();
        assert!(text.starts_with("# qrelax "));
        assert!(text.contains("# seed: 3\n"));
        let back = read_table(&p).unwrap();
        assert_eq!(back, t);
        assert_eq!(back.rows[0][0].parse::<f64>().unwrap(), 0.1);
    }
}
