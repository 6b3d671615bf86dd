//! CSV tables in and out, and the `key: value` report format.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use anyhow::Context;
use fracwave_core::{Error, Samples, TimeGrid};

/// 17 significant digits.
pub fn num(v: f64) -> String {
    format!("{v:.16e}")
}

/// A numeric table with an optional header and `# key = value` comment lines.
#[derive(Debug, Clone, Default)]
pub struct Table {
    pub header: Option<Vec<String>>,
    pub rows: Vec<Vec<f64>>,
    /// Source line of each row.
    pub lines: Vec<usize>,
    pub meta: Vec<(String, String)>,
}

impl Table {
    pub fn meta(&self, key: &str) -> Option<&str> {
        self.meta.iter().find(|(k, _)| k == key).map(|(_, v)| v.as_str())
    }
}

pub fn parse_table(text: &str, name: &str) -> Result<Table, Error> {
    let err = |line: usize, msg: String| Error::Parse {
        source_name: name.to_string(),
        line,
        msg,
    };
    let mut table = Table::default();
    let mut width = None;
    for (idx, raw) in text.lines().enumerate() {
        let line_no = idx + 1;
        let line = raw.trim();
        if line.is_empty() {
            continue;
        }
        if let Some(c) = line.strip_prefix('#') {
            if let Some((k, v)) = c.split_once('=') {
                table.meta.push((k.trim().to_string(), v.trim().to_string()));
            }
            continue;
        }
        let cols: Vec<&str> = line.split(',').map(str::trim).collect();
        let parsed: Result<Vec<f64>, _> = cols.iter().map(|c| c.parse::<f64>()).collect();
        match parsed {
            Ok(row) => {
                let w = *width.get_or_insert(row.len());
                if row.len() != w {
                    return Err(err(line_no, format!("expected {w} columns, got {}", row.len())));
                }
                table.rows.push(row);
                table.lines.push(line_no);
            }
            Err(_) if table.header.is_none() && table.rows.is_empty() => {
                width = Some(cols.len());
                table.header = Some(cols.iter().map(|s| s.to_string()).collect());
            }
            Err(_) => return Err(err(line_no, format!("non-numeric entry in {line:?}"))),
        }
    }
    if table.rows.is_empty() {
        return Err(err(0, "no data rows".into()));
    }
    Ok(table)
}

pub fn read_table(path: &Path) -> Result<Table, Error> {
    let text = fs::read_to_string(path).map_err(|e| Error::Parse {
        source_name: path.display().to_string(),
        line: 0,
        msg: format!("cannot read: {e}"),
    })?;
    parse_table(&text, &path.display().to_string())
}

/// Column `col` of a table whose first column is `t`, checked against `grid`.
pub fn column_on_grid(table: &Table, col: usize, grid: &TimeGrid, name: &str) -> Result<Samples, Error> {
    let width = table.rows[0].len();
    if col == 0 || col >= width {
        return Err(Error::Parse {
            source_name: name.to_string(),
            line: table.lines[0],
            msg: format!("expected at least {} columns (t first), got {width}", col + 1),
        });
    }
    if table.rows.len() != grid.len() {
        return Err(Error::GridMismatch(format!(
            "{name}: {} rows but the grid has N + 1 = {} nodes",
            table.rows.len(),
            grid.len()
        )));
    }
    let tol = 1e-9 * grid.horizon().max(1.0);
    for (i, row) in table.rows.iter().enumerate() {
        if (row[0] - grid.node(i)).abs() > tol {
            return Err(Error::GridMismatch(format!(
                "{name}:{}: t = {} but grid node {i} is {}",
                table.lines[i],
                row[0],
                grid.node(i)
            )));
        }
    }
    Samples::new(*grid, table.rows.iter().map(|r| r[col]).collect())
}

/// Sparse `k,value` list (1-based `k`) expanded to `dim` entries.
pub fn parse_mode_list(text: &str, name: &str, dim: usize) -> Result<Vec<f64>, Error> {
    let table = parse_table(text, name)?;
    let mut out = vec![0.0; dim];
    for (row, &line) in table.rows.iter().zip(&table.lines) {
        let err = |msg: String| Error::Parse {
            source_name: name.to_string(),
            line,
            msg,
        };
        if row.len() != 2 {
            return Err(err("expected two columns `k,value`".into()));
        }
        let k = row[0];
        if k.fract() != 0.0 || k < 1.0 || k > dim as f64 {
            return Err(err(format!("mode index {k} outside 1..={dim}")));
        }
        out[k as usize - 1] = row[1];
    }
    Ok(out)
}

/// Header plus rows, every value through [`num`].
pub fn csv(header: &[&str], rows: impl IntoIterator<Item = Vec<f64>>) -> String {
    let mut s = header.join(",");
    s.push('\n');
    for row in rows {
        let cells: Vec<String> = row.into_iter().map(num).collect();
        s.push_str(&cells.join(","));
        s.push('\n');
    }
    s
}

/// Header plus pre-formatted cells.
pub fn csv_cells(header: &[&str], rows: impl IntoIterator<Item = Vec<String>>) -> String {
    let mut s = header.join(",");
    s.push('\n');
    for row in rows {
        s.push_str(&row.join(","));
        s.push('\n');
    }
    s
}

pub fn write_file(path: &Path, body: &str) -> anyhow::Result<PathBuf> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    }
    fs::write(path, body).with_context(|| format!("writing {}", path.display()))?;
    Ok(path.to_path_buf())
}

/// `PREFIX_suffix`
pub fn prefixed(prefix: &Path, suffix: &str) -> PathBuf {
    let mut s = prefix.as_os_str().to_os_string();
    s.push("_");
    s.push(suffix);
    PathBuf::from(s)
}

/// Ordered `key: value` lines.
#[derive(Debug, Clone, Default)]
pub struct Report {
    entries: Vec<(String, String)>,
}

impl Report {
    pub fn set(&mut self, key: impl Into<String>, value: impl ToString) {
        self.entries.push((key.into(), value.to_string()));
    }

    pub fn num(&mut self, key: impl Into<String>, v: f64) {
        self.set(key, num(v));
    }

    pub fn get(&self, key: &str) -> Option<&str> {
        self.entries.iter().find(|(k, _)| k == key).map(|(_, v)| v.as_str())
    }

    pub fn render(&self) -> String {
        let mut s = String::new();
        for (k, v) in &self.entries {
            // keep one entry per line
            let v = v.replace('\n', " | ");
            let _ = writeln!(s, "{k}: {v}");
        }
        s
    }
}
