use std::fs::File;
use std::io::{BufRead, BufReader, Write};
use std::path::Path;

use crate::error::{Error, Result};

use super::CrsMatrix;

#[derive(Clone, Copy, PartialEq, Eq)]
enum Field {
    Real,
    Integer,
    Pattern,
}

#[derive(Clone, Copy, PartialEq, Eq)]
enum Symmetry {
    General,
    Symmetric,
}

fn parse_err<T>(line: usize, msg: impl Into<String>) -> Result<T> {
    Err(Error::Parse { line, msg: msg.into() })
}

/// Loads a coordinate-format Matrix Market file.
pub fn load_matrix_market(path: impl AsRef<Path>) -> Result<CrsMatrix> {
    let file = File::open(path)?;
    read_matrix_market(BufReader::new(file))
}

/// Parses coordinate Matrix Market data (`real`, `integer` or `pattern`
/// field; `general` or `symmetric` storage).
///
/// Symmetric storage is expanded to full storage, pattern entries get the
/// value 1.0 and duplicate coordinates are summed.
pub fn read_matrix_market(reader: impl BufRead) -> Result<CrsMatrix> {
    let mut lines = reader.lines().enumerate().map(|(i, l)| (i + 1, l));

    let (hline, header) = match lines.next() {
        Some((n, l)) => (n, l?),
        None => return parse_err(1, "empty input"),
    };
    let tokens: Vec<String> = header.split_whitespace().map(str::to_lowercase).collect();
    if tokens.len() != 5 || tokens[0] != "%%matrixmarket" || tokens[1] != "matrix" {
        return parse_err(hline, "expected '%%MatrixMarket matrix <format> <field> <symmetry>'");
    }
    if tokens[2] != "coordinate" {
        return parse_err(hline, format!("unsupported format '{}'", tokens[2]));
    }
    let field = match tokens[3].as_str() {
        "real" | "double" => Field::Real,
        "integer" => Field::Integer,
        "pattern" => Field::Pattern,
        other => return parse_err(hline, format!("unsupported field '{other}'")),
    };
    let symmetry = match tokens[4].as_str() {
        "general" => Symmetry::General,
        "symmetric" => Symmetry::Symmetric,
        other => return parse_err(hline, format!("unsupported symmetry '{other}'")),
    };

    // size line, skipping comments
    let (nrows, ncols, nnz) = loop {
        let (n, line) = match lines.next() {
            Some((n, l)) => (n, l?),
            None => return parse_err(hline + 1, "missing size line"),
        };
        let t = line.trim();
        if t.is_empty() || t.starts_with('%') {
            continue;
        }
        let parts: Vec<&str> = t.split_whitespace().collect();
        if parts.len() != 3 {
            return parse_err(n, "size line must have three integers");
        }
        let parse = |s: &str| s.parse::<usize>().or_else(|_| parse_err(n, format!("bad integer '{s}'")));
        break (parse(parts[0])?, parse(parts[1])?, parse(parts[2])?);
    };
    if nrows != ncols {
        return Err(Error::NotSquare { rows: nrows, cols: ncols });
    }

    let mut triplets = Vec::with_capacity(if symmetry == Symmetry::Symmetric { 2 * nnz } else { nnz });
    let mut seen = 0usize;
    let mut last_line = 0;
    for (n, line) in lines {
        let line = line?;
        last_line = n;
        let t = line.trim();
        if t.is_empty() || t.starts_with('%') {
            continue;
        }
        if seen == nnz {
            return parse_err(n, format!("more than the declared {nnz} entries"));
        }
        let mut parts = t.split_whitespace();
        let mut index = |what: &str| -> Result<usize> {
            let s = match parts.next() {
                Some(s) => s,
                None => return parse_err(n, format!("missing {what} index")),
            };
            let i: usize = s.parse().or_else(|_| parse_err(n, format!("bad {what} index '{s}'")))?;
            if i == 0 || i > nrows {
                return parse_err(n, format!("{what} index {i} outside 1..={nrows}"));
            }
            Ok(i - 1)
        };
        let r = index("row")?;
        let c = index("column")?;
        let v = match field {
            Field::Pattern => 1.0,
            Field::Real | Field::Integer => {
                let s = match parts.next() {
                    Some(s) => s,
                    None => return parse_err(n, "missing value"),
                };
                s.parse::<f64>().or_else(|_| parse_err(n, format!("bad value '{s}'")))?
            }
        };
        triplets.push((r, c, v));
        if symmetry == Symmetry::Symmetric && r != c {
            triplets.push((c, r, v));
        }
        seen += 1;
    }
    if seen != nnz {
        return parse_err(last_line.max(hline), format!("expected {nnz} entries, found {seen}"));
    }
    CrsMatrix::from_triplets(nrows, &triplets)
}

/// Writes `a` as a `coordinate real general` Matrix Market file with
/// round-trip exact values.
pub fn write_matrix_market(a: &CrsMatrix, mut w: impl Write) -> Result<()> {
    writeln!(w, "%%MatrixMarket matrix coordinate real general")?;
    writeln!(w, "{} {} {}", a.n_rows(), a.n_rows(), a.nnz())?;
    for (r, c, v) in a.to_triplets() {
        writeln!(w, "{} {} {:?}", r + 1, c + 1, v)?;
    }
    Ok(())
}
