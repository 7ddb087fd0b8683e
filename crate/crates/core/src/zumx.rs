//! `zumx-csv v1` matrix files.
//!
//! ```text
//! # zumx v1 rows=2 cols=3
//! 1.0000000000000000e0,2.0000000000000000e0,3.0000000000000000e0
//! 4.0000000000000000e0,5.0000000000000000e0,6.0000000000000000e0
//! ```
//!
//! Entries carry 17 significant digits, enough to round-trip every `f64`.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use crate::error::{Error, Result};
use crate::matrix::Matrix;

pub fn to_string(m: &Matrix) -> String {
    let (rows, cols) = m.shape();
    let mut out = format!("# zumx v1 rows={rows} cols={cols}\n");
    for i in 0..rows {
        for j in 0..cols {
            if j > 0 {
                out.push(',');
            }
            write!(out, "{:.16e}", m.get(i, j)).expect("writing to a String");
        }
        out.push('\n');
    }
    out
}

pub fn parse(text: &str) -> Result<Matrix> {
    let mut lines = text.lines();
    let header = lines.next().ok_or(Error::Format {
        line: 1,
        msg: "empty file".into(),
    })?;
    let (rows, cols) = parse_header(header)?;

    let mut entries = Vec::with_capacity(rows * cols);
    let mut seen = 0usize;
    for (idx, line) in lines.enumerate() {
        let lineno = idx + 2;
        if line.trim().is_empty() && (cols > 0 || seen >= rows) {
            continue;
        }
        seen += 1;
        if seen > rows {
            return Err(Error::Format {
                line: lineno,
                msg: format!("more than the declared {rows} rows"),
            });
        }
        if cols == 0 {
            continue;
        }
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != cols {
            return Err(Error::Format {
                line: lineno,
                msg: format!("expected {cols} values, found {}", fields.len()),
            });
        }
        for f in fields {
            let v: f64 = f.trim().parse().map_err(|_| Error::Format {
                line: lineno,
                msg: format!("not a number: {f:?}"),
            })?;
            if !v.is_finite() {
                return Err(Error::Format {
                    line: lineno,
                    msg: format!("non-finite value {f:?}"),
                });
            }
            entries.push(v);
        }
    }
    if seen < rows && cols > 0 {
        return Err(Error::Format {
            line: seen + 2,
            msg: format!("declared {rows} rows, found {seen}"),
        });
    }
    Matrix::from_row_slice(rows, cols, &entries)
}

fn parse_header(line: &str) -> Result<(usize, usize)> {
    let bad = |msg: &str| Error::Format {
        line: 1,
        msg: format!("{msg}: {line:?}"),
    };
    let mut parts = line.split_whitespace();
    if parts.next() != Some("#") || parts.next() != Some("zumx") || parts.next() != Some("v1") {
        return Err(bad("expected header `# zumx v1 rows=<r> cols=<c>`"));
    }
    let mut dim = |key: &str| -> Result<usize> {
        parts
            .next()
            .and_then(|p| p.strip_prefix(key))
            .and_then(|v| v.parse().ok())
            .ok_or_else(|| bad(&format!("missing or invalid `{key}`")))
    };
    let rows = dim("rows=")?;
    let cols = dim("cols=")?;
    Ok((rows, cols))
}

pub fn write(path: &Path, m: &Matrix) -> Result<()> {
    fs::write(path, to_string(m)).map_err(|e| Error::io(path, e))
}

pub fn read(path: &Path) -> Result<Matrix> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse(&text).map_err(|e| match e {
        Error::Format { line, msg } => Error::Format {
            line,
            msg: format!("{}: {msg}", path.display()),
        },
        other => other,
    })
}
