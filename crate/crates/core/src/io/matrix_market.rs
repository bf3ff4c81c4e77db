//! Matrix Market reader and writer for real matrices in `coordinate` or
//! `array` layout with `general` or `symmetric` storage. `integer` and
//! `pattern` fields are read as reals (pattern entries as 1).

use std::io::Write;
use std::sync::Arc;

use nalgebra::DMatrix;

use super::parse_error;
use crate::error::{Error, Result};
use crate::operator::{CsrMatrix, SymOperator};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Symmetry {
    General,
    Symmetric,
}

/// Entries as stored in the file, 0-based. Symmetric files hold one triangle.
#[derive(Debug, Clone)]
pub struct MmMatrix {
    pub nrows: usize,
    pub ncols: usize,
    pub symmetry: Symmetry,
    pub entries: Vec<(usize, usize, f64)>,
}

impl MmMatrix {
    pub fn to_dense(&self) -> DMatrix<f64> {
        let mut m = DMatrix::zeros(self.nrows, self.ncols);
        for &(i, j, v) in &self.entries {
            m[(i, j)] += v;
            if self.symmetry == Symmetry::Symmetric && i != j {
                m[(j, i)] += v;
            }
        }
        m
    }

    /// Sparse symmetric operator. General storage is accepted if it is square;
    /// symmetry is left to [`crate::CrqProblem::new`] to verify.
    pub fn to_operator(&self) -> Result<Arc<dyn SymOperator>> {
        if self.nrows != self.ncols {
            return Err(Error::Dimension(format!(
                "operator must be square, got {}×{}",
                self.nrows, self.ncols
            )));
        }
        let csr = match self.symmetry {
            Symmetry::Symmetric => CsrMatrix::from_symmetric_triangle(self.nrows, &self.entries),
            Symmetry::General => CsrMatrix::from_triplets(self.nrows, &self.entries),
        };
        Ok(Arc::new(csr))
    }
}

pub fn read(text: &str, source_name: &str) -> Result<MmMatrix> {
    let mut lines = text.lines().enumerate();
    let (_, header) = lines
        .next()
        .ok_or_else(|| parse_error(source_name, 1, "empty file"))?;
    let h: Vec<String> = header.split_whitespace().map(|t| t.to_ascii_lowercase()).collect();
    if h.len() != 5 || h[0] != "%%matrixmarket" || h[1] != "matrix" {
        return Err(parse_error(source_name, 1, "expected `%%MatrixMarket matrix <format> <field> <symmetry>`"));
    }
    let coordinate = match h[2].as_str() {
        "coordinate" => true,
        "array" => false,
        other => return Err(parse_error(source_name, 1, format!("unsupported format `{other}`"))),
    };
    let pattern = match h[3].as_str() {
        "real" | "integer" | "double" => false,
        "pattern" if coordinate => true,
        other => return Err(parse_error(source_name, 1, format!("unsupported field `{other}`"))),
    };
    let symmetry = match h[4].as_str() {
        "general" => Symmetry::General,
        "symmetric" => Symmetry::Symmetric,
        other => return Err(parse_error(source_name, 1, format!("unsupported symmetry `{other}`"))),
    };

    let mut body = lines.filter(|(_, l)| {
        let t = l.trim();
        !t.is_empty() && !t.starts_with('%')
    });
    let (size_line, size) = body
        .next()
        .ok_or_else(|| parse_error(source_name, 2, "missing size line"))?;
    let dims: Vec<usize> = size
        .split_whitespace()
        .map(|t| t.parse::<usize>())
        .collect::<std::result::Result<_, _>>()
        .map_err(|_| parse_error(source_name, size_line + 1, "bad size line"))?;
    let want = if coordinate { 3 } else { 2 };
    if dims.len() != want {
        return Err(parse_error(source_name, size_line + 1, format!("size line needs {want} integers")));
    }
    let (nrows, ncols) = (dims[0], dims[1]);
    if symmetry == Symmetry::Symmetric && nrows != ncols {
        return Err(parse_error(source_name, size_line + 1, "symmetric matrix must be square"));
    }

    let mut entries = Vec::new();
    if coordinate {
        let nnz = dims[2];
        entries.reserve(nnz);
        for (lineno, line) in body.by_ref().take(nnz) {
            let err = |msg: &str| parse_error(source_name, lineno + 1, msg);
            let mut tok = line.split_whitespace();
            let mut index = |limit: usize| -> Result<usize> {
                let v: usize = tok
                    .next()
                    .and_then(|t| t.parse().ok())
                    .ok_or_else(|| err("bad index"))?;
                if v == 0 || v > limit {
                    return Err(err("index out of range"));
                }
                Ok(v - 1)
            };
            let i = index(nrows)?;
            let j = index(ncols)?;
            let v = if pattern {
                1.0
            } else {
                tok.next()
                    .and_then(|t| t.parse::<f64>().ok())
                    .ok_or_else(|| err("bad value"))?
            };
            let (i, j) = if symmetry == Symmetry::Symmetric && j > i { (j, i) } else { (i, j) };
            entries.push((i, j, v));
        }
        if entries.len() != nnz {
            return Err(parse_error(source_name, 0, format!("expected {nnz} entries, found {}", entries.len())));
        }
    } else {
        // Column-major; symmetric arrays hold the lower triangle only.
        let mut cells = Vec::new();
        for j in 0..ncols {
            let start = if symmetry == Symmetry::Symmetric { j } else { 0 };
            for i in start..nrows {
                cells.push((i, j));
            }
        }
        let mut values = body.flat_map(|(lineno, l)| l.split_whitespace().map(move |t| (lineno, t)));
        for &(i, j) in &cells {
            let (lineno, t) = values
                .next()
                .ok_or_else(|| parse_error(source_name, 0, format!("expected {} values", cells.len())))?;
            let v: f64 = t
                .parse()
                .map_err(|_| parse_error(source_name, lineno + 1, format!("not a number: `{t}`")))?;
            if v != 0.0 {
                entries.push((i, j, v));
            }
        }
    }
    Ok(MmMatrix {
        nrows,
        ncols,
        symmetry,
        entries,
    })
}

pub fn read_file(path: &std::path::Path) -> Result<MmMatrix> {
    let text = std::fs::read_to_string(path)?;
    read(&text, &path.display().to_string())
}

/// Lower triangle of a symmetric matrix in coordinate format, zeros skipped.
pub fn write_symmetric<W: Write>(a: &DMatrix<f64>, mut out: W) -> Result<()> {
    let n = a.nrows();
    let entries: Vec<(usize, usize, f64)> = (0..n)
        .flat_map(|j| (j..n).map(move |i| (i, j)))
        .map(|(i, j)| (i, j, a[(i, j)]))
        .filter(|e| e.2 != 0.0)
        .collect();
    writeln!(out, "%%MatrixMarket matrix coordinate real symmetric")?;
    writeln!(out, "{n} {n} {}", entries.len())?;
    for (i, j, v) in entries {
        writeln!(out, "{} {} {v:e}", i + 1, j + 1)?;
    }
    Ok(())
}

/// Upper triangle of a sparse symmetric matrix, written as the lower one.
pub fn write_csr_symmetric<W: Write>(a: &CsrMatrix, mut out: W) -> Result<()> {
    let entries = a.upper_triplets();
    let n = a.dim();
    writeln!(out, "%%MatrixMarket matrix coordinate real symmetric")?;
    writeln!(out, "{n} {n} {}", entries.len())?;
    for (i, j, v) in entries {
        writeln!(out, "{} {} {v:e}", j + 1, i + 1)?;
    }
    Ok(())
}

/// Dense general matrix in array format.
pub fn write_array<W: Write>(a: &DMatrix<f64>, mut out: W) -> Result<()> {
    writeln!(out, "%%MatrixMarket matrix array real general")?;
    writeln!(out, "{} {}", a.nrows(), a.ncols())?;
    for v in a.iter() {
        writeln!(out, "{v:e}")?;
    }
    Ok(())
}
