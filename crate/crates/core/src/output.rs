//! Serialization of sweep grids and tabular results.
//!
//! Floats are written in Rust's shortest round-trip form, so reading a file
//! back gives bit-identical values and identical input gives identical bytes.

use serde::{Deserialize, Serialize};
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use crate::config::OutputFormat;
use crate::error::{Error, Result};
use crate::sweep::{Axis, CellFlag, GridMetadata, SweepGrid};

fn fmt_f64(v: f64) -> String {
    format!("{v:?}")
}

fn write_file(path: &Path, contents: &str) -> Result<()> {
    std::fs::write(path, contents).map_err(|e| Error::io(path, e))
}

fn read_file(path: &Path) -> Result<String> {
    std::fs::read_to_string(path).map_err(|e| Error::io(path, e))
}

fn format_err(path: &Path, message: impl Into<String>) -> Error {
    Error::Format {
        path: path.to_path_buf(),
        message: message.into(),
    }
}

/// `<path>.flags.json`, next to a CSV grid.
pub fn flags_sidecar(path: &Path) -> PathBuf {
    let mut s = path.as_os_str().to_os_string();
    s.push(".flags.json");
    PathBuf::from(s)
}

#[derive(Serialize, Deserialize)]
struct GridAxes {
    rows: Axis,
    cols: Axis,
}

#[derive(Serialize, Deserialize)]
struct GridDocument {
    axes: GridAxes,
    /// Row-major; null where a cell is flagged.
    values: Vec<Option<f64>>,
    flags: Vec<CellFlag>,
    metadata: GridMetadata,
}

#[derive(Serialize, Deserialize)]
struct FlagsDocument {
    flags: Vec<CellFlag>,
    metadata: GridMetadata,
}

pub fn grid_to_json(grid: &SweepGrid) -> Result<String> {
    grid.validate()?;
    let doc = GridDocument {
        axes: GridAxes {
            rows: grid.rows.clone(),
            cols: grid.cols.clone(),
        },
        values: grid.values.iter().map(|v| (!v.is_nan()).then_some(*v)).collect(),
        flags: grid.flags.clone(),
        metadata: grid.metadata.clone(),
    };
    let mut s = serde_json::to_string_pretty(&doc).map_err(|e| Error::invalid(e.to_string()))?;
    s.push('\n');
    Ok(s)
}

/// Header row: `<rows label>\<cols label>` then the column axis values; one
/// data row per row-axis value. Flagged cells are empty fields.
pub fn grid_to_csv(grid: &SweepGrid) -> Result<String> {
    grid.validate()?;
    let (nr, nc) = grid.shape();
    let mut s = String::new();
    s.push_str(&grid.rows.label);
    s.push('\\');
    s.push_str(&grid.cols.label);
    for &c in &grid.cols.values {
        s.push(',');
        s.push_str(&fmt_f64(c));
    }
    s.push('\n');
    for r in 0..nr {
        s.push_str(&fmt_f64(grid.rows.values[r]));
        for c in 0..nc {
            s.push(',');
            let v = grid.get(r, c);
            if !v.is_nan() {
                s.push_str(&fmt_f64(v));
            }
        }
        s.push('\n');
    }
    Ok(s)
}

/// Writes a grid. CSV output also writes a `.flags.json` sidecar holding
/// the flag reasons and metadata.
pub fn write_grid(grid: &SweepGrid, path: &Path, format: OutputFormat) -> Result<()> {
    match format {
        OutputFormat::Json => write_file(path, &grid_to_json(grid)?),
        OutputFormat::Csv => {
            write_file(path, &grid_to_csv(grid)?)?;
            let side = FlagsDocument {
                flags: grid.flags.clone(),
                metadata: grid.metadata.clone(),
            };
            let mut text = serde_json::to_string_pretty(&side).map_err(|e| Error::invalid(e.to_string()))?;
            text.push('\n');
            write_file(&flags_sidecar(path), &text)
        }
    }
}

pub fn read_grid(path: &Path, format: OutputFormat) -> Result<SweepGrid> {
    let text = read_file(path)?;
    match format {
        OutputFormat::Json => {
            let doc: GridDocument = serde_json::from_str(&text).map_err(|e| format_err(path, e.to_string()))?;
            let grid = SweepGrid {
                rows: doc.axes.rows,
                cols: doc.axes.cols,
                values: doc.values.into_iter().map(|v| v.unwrap_or(f64::NAN)).collect(),
                flags: doc.flags,
                metadata: doc.metadata,
            };
            grid.validate().map_err(|e| format_err(path, e.to_string()))?;
            Ok(grid)
        }
        OutputFormat::Csv => {
            let side_path = flags_sidecar(path);
            let side: FlagsDocument =
                serde_json::from_str(&read_file(&side_path)?).map_err(|e| format_err(&side_path, e.to_string()))?;
            let grid = parse_csv(&text, side).map_err(|m| format_err(path, m))?;
            grid.validate().map_err(|e| format_err(path, e.to_string()))?;
            Ok(grid)
        }
    }
}

fn parse_csv(text: &str, side: FlagsDocument) -> std::result::Result<SweepGrid, String> {
    let mut lines = text.lines();
    let header = lines.next().ok_or("empty file")?;
    let mut fields = header.split(',');
    let corner = fields.next().ok_or("missing header")?;
    let (row_label, col_label) = corner.split_once('\\').ok_or("header corner must be `rows\\cols`")?;
    let parse = |s: &str, line: usize| {
        s.parse::<f64>()
            .map_err(|e| format!("line {line}: bad number {s:?}: {e}"))
    };
    let cols = fields
        .map(|f| parse(f, 1))
        .collect::<std::result::Result<Vec<_>, _>>()?;
    let mut rows = Vec::new();
    let mut values = Vec::new();
    for (i, line) in lines.enumerate() {
        let lno = i + 2;
        let mut f = line.split(',');
        rows.push(parse(f.next().ok_or(format!("line {lno}: empty row"))?, lno)?);
        let before = values.len();
        for cell in f {
            values.push(if cell.is_empty() { f64::NAN } else { parse(cell, lno)? });
        }
        if values.len() - before != cols.len() {
            return Err(format!(
                "line {lno}: expected {} values, found {}",
                cols.len(),
                values.len() - before
            ));
        }
    }
    Ok(SweepGrid {
        rows: Axis {
            label: row_label.to_string(),
            values: rows,
        },
        cols: Axis {
            label: col_label.to_string(),
            values: cols,
        },
        values,
        flags: side.flags,
        metadata: side.metadata,
    })
}

/// Named columns of numbers plus free-form metadata.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Table {
    pub columns: Vec<String>,
    pub rows: Vec<Vec<f64>>,
    pub metadata: serde_json::Value,
}

impl Table {
    pub fn to_csv(&self) -> String {
        let mut s = self.columns.join(",");
        s.push('\n');
        for row in &self.rows {
            let cells: Vec<String> = row
                .iter()
                .map(|v| if v.is_nan() { String::new() } else { fmt_f64(*v) })
                .collect();
            writeln!(s, "{}", cells.join(",")).unwrap();
        }
        s
    }

    pub fn to_json(&self) -> Result<String> {
        #[derive(Serialize)]
        struct Doc<'a> {
            columns: &'a [String],
            rows: Vec<Vec<Option<f64>>>,
            metadata: &'a serde_json::Value,
        }
        let doc = Doc {
            columns: &self.columns,
            rows: self
                .rows
                .iter()
                .map(|r| r.iter().map(|v| (!v.is_nan()).then_some(*v)).collect())
                .collect(),
            metadata: &self.metadata,
        };
        let mut s = serde_json::to_string_pretty(&doc).map_err(|e| Error::invalid(e.to_string()))?;
        s.push('\n');
        Ok(s)
    }

    pub fn write(&self, path: &Path, format: OutputFormat) -> Result<()> {
        match format {
            OutputFormat::Csv => write_file(path, &self.to_csv()),
            OutputFormat::Json => write_file(path, &self.to_json()?),
        }
    }
}

/// Writes any serializable document as pretty JSON.
pub fn write_json<T: Serialize>(value: &T, path: &Path) -> Result<()> {
    let mut s = serde_json::to_string_pretty(value).map_err(|e| Error::invalid(e.to_string()))?;
    s.push('\n');
    write_file(path, &s)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sweep::Quantity;
    use proptest::prelude::*;

    fn grid(values: Vec<f64>, rows: Vec<f64>, cols: Vec<f64>) -> SweepGrid {
        let nc = cols.len();
        let flags = values
            .iter()
            .enumerate()
            .filter(|(_, v)| v.is_nan())
            .map(|(i, _)| CellFlag {
                row: i / nc,
                col: i % nc,
                reason: "test flag".into(),
            })
            .collect();
        SweepGrid {
            rows: Axis {
                label: "b_s_mt".into(),
                values: rows,
            },
            cols: Axis {
                label: "f_la_mhz".into(),
                values: cols,
            },
            values,
            flags,
            metadata: GridMetadata {
                quantity: Quantity::PzRatio,
                version: "0".into(),
                config: serde_json::json!({"mode": "sweep"}),
            },
        }
    }

    fn bits(v: &[f64]) -> Vec<u64> {
        v.iter().map(|x| x.to_bits()).collect()
    }

    #[test]
    fn two_by_two_csv_has_three_lines() {
        let g = grid(vec![0.1, 0.2, 0.3, 0.4], vec![100.0, 101.0], vec![10.0, 20.0]);
        let csv = grid_to_csv(&g).unwrap();
        assert_eq!(csv.lines().count(), 3);
        assert_eq!(csv.lines().next().unwrap(), "b_s_mt\\f_la_mhz,10.0,20.0");
    }

    #[test]
    fn nan_is_empty_csv_field_with_sidecar() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("g.csv");
        let g = grid(vec![0.1, f64::NAN, 0.3, 0.4], vec![1.0, 2.0], vec![3.0, 4.0]);
        write_grid(&g, &path, OutputFormat::Csv).unwrap();
        let text = std::fs::read_to_string(&path).unwrap();
        assert_eq!(text.lines().nth(1).unwrap(), "1.0,0.1,");
        let side = std::fs::read_to_string(flags_sidecar(&path)).unwrap();
        assert!(side.contains("test flag"));
        let back = read_grid(&path, OutputFormat::Csv).unwrap();
        assert!(back.get(0, 1).is_nan());
        assert_eq!(back.flags, g.flags);
    }

    #[test]
    fn json_null_for_nan() {
        let g = grid(vec![f64::NAN, 0.5], vec![1.0], vec![3.0, 4.0]);
        let j = grid_to_json(&g).unwrap();
        let v: serde_json::Value = serde_json::from_str(&j).unwrap();
        assert!(v["values"][0].is_null());
        assert_eq!(v["values"][1], 0.5);
    }

    #[test]
    fn unflagged_nan_rejected() {
        let mut g = grid(vec![f64::NAN, 0.5], vec![1.0], vec![3.0, 4.0]);
        g.flags.clear();
        assert!(grid_to_csv(&g).is_err());
    }

    #[test]
    fn io_errors_carry_path() {
        let g = grid(vec![0.5], vec![1.0], vec![3.0]);
        let path = Path::new("/nonexistent-dir/out.json");
        let err = write_grid(&g, path, OutputFormat::Json).unwrap_err().to_string();
        assert!(err.contains("/nonexistent-dir/out.json"), "{err}");
        let err = read_grid(path, OutputFormat::Json).unwrap_err().to_string();
        assert!(err.contains("/nonexistent-dir/out.json"), "{err}");
    }

    #[test]
    fn table_formats() {
        let t = Table {
            columns: vec!["a".into(), "b".into()],
            rows: vec![vec![1.0, f64::NAN], vec![0.25, 3e-20]],
            metadata: serde_json::json!({"k": 1}),
        };
        assert_eq!(t.to_csv(), "a,b\n1.0,\n0.25,3e-20\n");
        let v: serde_json::Value = serde_json::from_str(&t.to_json().unwrap()).unwrap();
        assert!(v["rows"][0][1].is_null());
    }

    proptest! {
        #[test]
        fn round_trip_bitwise(
            vals in proptest::collection::vec(prop_oneof![any::<f64>().prop_filter("finite", |v| v.is_finite()), Just(f64::NAN)], 12),
            rows in proptest::collection::vec(-1e6f64..1e6, 3),
            cols in proptest::collection::vec(any::<f64>().prop_filter("finite", |v| v.is_finite()), 4),
        ) {
            let g = grid(vals, rows, cols);
            let dir = tempfile::tempdir().unwrap();
            for (name, fmt) in [("g.csv", OutputFormat::Csv), ("g.json", OutputFormat::Json)] {
                let path = dir.path().join(name);
                write_grid(&g, &path, fmt).unwrap();
                let back = read_grid(&path, fmt).unwrap();
                prop_assert_eq!(bits(&back.values), bits(&g.values));
                prop_assert_eq!(bits(&back.rows.values), bits(&g.rows.values));
                prop_assert_eq!(bits(&back.cols.values), bits(&g.cols.values));
                prop_assert_eq!(&back.flags, &g.flags);
                prop_assert_eq!(&back.metadata, &g.metadata);
            }
        }
    }
}
