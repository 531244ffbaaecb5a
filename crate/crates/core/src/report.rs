//! CSV and JSON emission for experiment runs.
//!
//! CSV bodies are deterministic: RFC 4180 records (CRLF line ends) with
//! floats printed at 17 significant digits, so identical configurations
//! produce byte-identical files.

use std::io::Write;
use std::path::Path;

use crate::error::Result;

/// One CSV cell.
#[derive(Debug, Clone)]
pub enum Cell {
    Int(i64),
    UInt(u64),
    Float(f64),
    Str(String),
}

impl From<usize> for Cell {
    fn from(v: usize) -> Cell {
        Cell::UInt(v as u64)
    }
}

impl From<u64> for Cell {
    fn from(v: u64) -> Cell {
        Cell::UInt(v)
    }
}

impl From<f64> for Cell {
    fn from(v: f64) -> Cell {
        Cell::Float(v)
    }
}

impl From<&str> for Cell {
    fn from(v: &str) -> Cell {
        Cell::Str(v.to_string())
    }
}

/// 17 significant digits, locale independent.
pub fn format_float(x: f64) -> String {
    format!("{x:.16e}")
}

fn format_cell(c: &Cell) -> String {
    match c {
        Cell::Int(v) => v.to_string(),
        Cell::UInt(v) => v.to_string(),
        Cell::Float(v) => format_float(*v),
        Cell::Str(s) => {
            if s.contains([',', '"', '\n', '\r']) {
                format!("\"{}\"", s.replace('"', "\"\""))
            } else {
                s.clone()
            }
        }
    }
}

/// Write an RFC 4180 CSV file.
pub fn write_csv(path: &Path, header: &[&str], rows: &[Vec<Cell>]) -> Result<()> {
    let mut out = Vec::new();
    out.extend_from_slice(header.join(",").as_bytes());
    out.extend_from_slice(b"\r\n");
    for row in rows {
        let line: Vec<String> = row.iter().map(format_cell).collect();
        out.extend_from_slice(line.join(",").as_bytes());
        out.extend_from_slice(b"\r\n");
    }
    let mut f = std::fs::File::create(path)?;
    f.write_all(&out)?;
    Ok(())
}

/// Write pretty-printed JSON.
pub fn write_json(path: &Path, value: &serde_json::Value) -> Result<()> {
    let mut f = std::fs::File::create(path)?;
    f.write_all(serde_json::to_string_pretty(value)?.as_bytes())?;
    f.write_all(b"\n")?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn csv_bodies_are_deterministic() {
        let dir = std::env::temp_dir();
        let p1 = dir.join("ridgevar_csv_a.csv");
        let p2 = dir.join("ridgevar_csv_b.csv");
        let rows = vec![
            vec![Cell::from(8usize), Cell::from(0.1234567890123456789f64)],
            vec![Cell::from(16usize), Cell::from(1.0f64 / 3.0)],
        ];
        write_csv(&p1, &["n", "error"], &rows).unwrap();
        write_csv(&p2, &["n", "error"], &rows).unwrap();
        let a = std::fs::read(&p1).unwrap();
        let b = std::fs::read(&p2).unwrap();
        assert_eq!(a, b);
        let text = String::from_utf8(a).unwrap();
        assert!(text.contains("\r\n"));
        assert!(text.contains("3.3333333333333331e-1"));
    }

    #[test]
    fn strings_with_commas_are_quoted() {
        assert_eq!(format_cell(&Cell::from("a,b")), "\"a,b\"");
        assert_eq!(format_cell(&Cell::from("plain")), "plain");
    }
}
