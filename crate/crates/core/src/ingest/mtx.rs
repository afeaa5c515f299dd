use std::collections::BTreeMap;
use std::fmt::Write as _;

use super::{parse_err, IngestError};

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct MatrixEntry {
    pub row: usize,
    pub col: usize,
    pub value: f64,
}

/// Lower-triangular part of a square sparse matrix, zero-based,
/// row-major with the diagonal included.
#[derive(Clone, Debug, PartialEq)]
pub struct SparseMatrix {
    pub dim: usize,
    pub entries: Vec<MatrixEntry>,
    pub diagonal: Vec<f64>,
}

impl SparseMatrix {
    /// Builds from arbitrary (row, col, value) triples: keeps `row >= col`,
    /// sums duplicates and checks the diagonal.
    pub fn from_triplets(
        dim: usize,
        triplets: impl IntoIterator<Item = (usize, usize, f64)>,
    ) -> Result<Self, IngestError> {
        let mut acc: BTreeMap<(usize, usize), f64> = BTreeMap::new();
        for (r, c, v) in triplets {
            if r >= c {
                *acc.entry((r, c)).or_insert(0.0) += v;
            }
        }
        let mut diagonal = vec![0.0; dim];
        let entries: Vec<MatrixEntry> = acc
            .into_iter()
            .map(|((row, col), value)| {
                if row == col {
                    diagonal[row] = value;
                }
                MatrixEntry { row, col, value }
            })
            .collect();
        if let Some(row) = diagonal.iter().position(|&d| d == 0.0) {
            return Err(IngestError::ZeroDiagonal(row));
        }
        Ok(SparseMatrix { dim, entries, diagonal })
    }

    /// Strictly-lower entries of each row, in column order.
    pub fn off_diagonal_rows(&self) -> Vec<Vec<(usize, f64)>> {
        let mut rows = vec![Vec::new(); self.dim];
        for e in &self.entries {
            if e.row != e.col {
                rows[e.row].push((e.col, e.value));
            }
        }
        rows
    }
}

/// Parses MatrixMarket coordinate text (real, integer or pattern; general
/// or symmetric), keeping the lower triangle.
pub fn parse_matrix_market(text: &str) -> Result<SparseMatrix, IngestError> {
    let mut lines = text.lines().enumerate().map(|(i, l)| (i + 1, l));
    let (hline, header) = lines.next().ok_or_else(|| parse_err(1, "empty input"))?;
    let words: Vec<String> = header.split_whitespace().map(|w| w.to_ascii_lowercase()).collect();
    if words.len() != 5 || words[0] != "%%matrixmarket" || words[1] != "matrix" {
        return Err(parse_err(hline, "expected `%%MatrixMarket matrix coordinate <field> <symmetry>`"));
    }
    if words[2] != "coordinate" {
        return Err(parse_err(hline, format!("unsupported format `{}`", words[2])));
    }
    let pattern = match words[3].as_str() {
        "real" | "integer" => false,
        "pattern" => true,
        other => return Err(parse_err(hline, format!("unsupported field `{other}`"))),
    };
    let symmetric = match words[4].as_str() {
        "general" => false,
        "symmetric" => true,
        other => return Err(parse_err(hline, format!("unsupported symmetry `{other}`"))),
    };

    let mut body = lines.filter(|(_, l)| {
        let t = l.trim();
        !t.is_empty() && !t.starts_with('%')
    });
    let (sline, size) = body.next().ok_or_else(|| parse_err(hline + 1, "missing size line"))?;
    let dims: Vec<usize> = size
        .split_whitespace()
        .map(|w| w.parse::<usize>())
        .collect::<Result<_, _>>()
        .map_err(|e| parse_err(sline, format!("bad size line: {e}")))?;
    let [rows, cols, nnz] = dims[..] else {
        return Err(parse_err(sline, "size line needs rows, cols and nnz"));
    };
    if rows != cols {
        return Err(parse_err(sline, format!("matrix is {rows}x{cols}, expected square")));
    }

    let mut triplets = Vec::with_capacity(nnz * if symmetric { 2 } else { 1 });
    let mut seen = 0usize;
    for (lno, line) in body {
        if seen == nnz {
            return Err(parse_err(lno, "more entries than declared"));
        }
        let mut it = line.split_whitespace();
        let mut index = |what: &str| -> Result<usize, IngestError> {
            let w = it.next().ok_or_else(|| parse_err(lno, format!("missing {what}")))?;
            let v: usize = w.parse().map_err(|_| parse_err(lno, format!("bad {what} `{w}`")))?;
            if v == 0 || v > rows {
                return Err(parse_err(lno, format!("{what} {v} out of range 1..={rows}")));
            }
            Ok(v - 1)
        };
        let r = index("row")?;
        let c = index("column")?;
        let value = if pattern {
            1.0
        } else {
            let w = it.next().ok_or_else(|| parse_err(lno, "missing value"))?;
            let v: f64 = w.parse().map_err(|_| parse_err(lno, format!("bad value `{w}`")))?;
            if !v.is_finite() {
                return Err(parse_err(lno, format!("non-finite value `{w}`")));
            }
            v
        };
        if it.next().is_some() {
            return Err(parse_err(lno, "trailing fields"));
        }
        triplets.push((r, c, value));
        if symmetric && r != c {
            triplets.push((c, r, value));
        }
        seen += 1;
    }
    if seen != nnz {
        return Err(parse_err(text.lines().count().max(1), format!("declared {nnz} entries, found {seen}")));
    }
    SparseMatrix::from_triplets(rows, triplets)
}

/// Writes the lower triangle as a general real coordinate file.
pub fn write_matrix_market(m: &SparseMatrix) -> String {
    let mut s = String::from("%%MatrixMarket matrix coordinate real general\n");
    let _ = writeln!(s, "{} {} {}", m.dim, m.dim, m.entries.len());
    for e in &m.entries {
        let _ = writeln!(s, "{} {} {:e}", e.row + 1, e.col + 1, e.value);
    }
    s
}
