//! Symmetric linear operators.
//!
//! The solvers only ever need `x ↦ Ax`, so the problem matrix is held behind
//! [`SymOperator`]. Dense and compressed-row implementations are provided here;
//! the instance generator and the clustering pipeline supply their own.

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;

/// Row count above which matrix-vector products are split across threads.
const PAR_ROWS: usize = 4096;

/// A real symmetric linear map on `R^n`.
pub trait SymOperator: Send + Sync {
    fn dim(&self) -> usize;

    /// Writes `A x` into `y`. Both slices have length `dim()`.
    fn apply(&self, x: &[f64], y: &mut [f64]);

    fn apply_vec(&self, x: &DVector<f64>) -> DVector<f64> {
        let mut y = DVector::zeros(self.dim());
        self.apply(x.as_slice(), y.as_mut_slice());
        y
    }

    /// Materializes the operator column by column.
    fn to_dense(&self) -> DMatrix<f64> {
        let n = self.dim();
        let mut out = DMatrix::zeros(n, n);
        let mut e = vec![0.0; n];
        let mut col = vec![0.0; n];
        for j in 0..n {
            e[j] = 1.0;
            self.apply(&e, &mut col);
            out.column_mut(j).copy_from_slice(&col);
            e[j] = 0.0;
        }
        out
    }
}

/// Dense symmetric matrix.
#[derive(Debug, Clone)]
pub struct DenseSym {
    mat: DMatrix<f64>,
}

impl DenseSym {
    /// Wraps `mat`; the caller is responsible for symmetry.
    pub fn new(mat: DMatrix<f64>) -> Self {
        assert_eq!(mat.nrows(), mat.ncols(), "DenseSym needs a square matrix");
        Self { mat }
    }

    pub fn from_diagonal(d: &[f64]) -> Self {
        Self::new(DMatrix::from_diagonal(&DVector::from_column_slice(d)))
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.mat
    }
}

impl SymOperator for DenseSym {
    fn dim(&self) -> usize {
        self.mat.nrows()
    }

    fn apply(&self, x: &[f64], y: &mut [f64]) {
        let n = self.dim();
        // Column-major storage, so accumulate column by column.
        y.iter_mut().for_each(|v| *v = 0.0);
        for (j, &xj) in x.iter().enumerate().take(n) {
            if xj == 0.0 {
                continue;
            }
            let col = &self.mat.as_slice()[j * n..(j + 1) * n];
            for (yi, &cij) in y.iter_mut().zip(col) {
                *yi += cij * xj;
            }
        }
    }

    fn to_dense(&self) -> DMatrix<f64> {
        self.mat.clone()
    }
}

/// Compressed sparse row matrix holding both triangles of a symmetric matrix.
#[derive(Debug, Clone)]
pub struct CsrMatrix {
    n: usize,
    row_ptr: Vec<usize>,
    col_idx: Vec<usize>,
    values: Vec<f64>,
}

impl CsrMatrix {
    /// Builds from `(row, col, value)` triplets. Duplicates are summed.
    /// Entries are taken as given: pass both triangles for a symmetric matrix.
    pub fn from_triplets(n: usize, triplets: &[(usize, usize, f64)]) -> Self {
        let mut counts = vec![0usize; n + 1];
        for &(i, _, _) in triplets {
            counts[i + 1] += 1;
        }
        for i in 0..n {
            counts[i + 1] += counts[i];
        }
        let mut next = counts.clone();
        let mut col_idx = vec![0usize; triplets.len()];
        let mut values = vec![0.0; triplets.len()];
        for &(i, j, v) in triplets {
            let p = next[i];
            col_idx[p] = j;
            values[p] = v;
            next[i] += 1;
        }
        // Sort each row by column and merge duplicates.
        let mut row_ptr = vec![0usize; n + 1];
        let mut out_cols = Vec::with_capacity(col_idx.len());
        let mut out_vals = Vec::with_capacity(values.len());
        for i in 0..n {
            let mut row: Vec<(usize, f64)> = (counts[i]..counts[i + 1])
                .map(|p| (col_idx[p], values[p]))
                .collect();
            row.sort_by_key(|e| e.0);
            for (j, v) in row {
                if out_cols.len() > row_ptr[i] && *out_cols.last().unwrap() == j {
                    *out_vals.last_mut().unwrap() += v;
                } else {
                    out_cols.push(j);
                    out_vals.push(v);
                }
            }
            row_ptr[i + 1] = out_cols.len();
        }
        Self {
            n,
            row_ptr,
            col_idx: out_cols,
            values: out_vals,
        }
    }

    /// Builds from one triangle plus the diagonal, mirroring off-diagonal entries.
    pub fn from_symmetric_triangle(n: usize, triplets: &[(usize, usize, f64)]) -> Self {
        let mut full = Vec::with_capacity(2 * triplets.len());
        for &(i, j, v) in triplets {
            full.push((i, j, v));
            if i != j {
                full.push((j, i, v));
            }
        }
        Self::from_triplets(n, &full)
    }

    /// Builds from per-row `(col, value)` lists already sorted by column
    /// without duplicates.
    pub fn from_sorted_rows(rows: Vec<Vec<(usize, f64)>>) -> Self {
        let n = rows.len();
        let mut row_ptr = Vec::with_capacity(n + 1);
        row_ptr.push(0);
        let nnz = rows.iter().map(Vec::len).sum();
        let mut col_idx = Vec::with_capacity(nnz);
        let mut values = Vec::with_capacity(nnz);
        for row in rows {
            debug_assert!(row.windows(2).all(|w| w[0].0 < w[1].0));
            for (j, v) in row {
                col_idx.push(j);
                values.push(v);
            }
            row_ptr.push(col_idx.len());
        }
        Self {
            n,
            row_ptr,
            col_idx,
            values,
        }
    }

    pub fn nnz(&self) -> usize {
        self.values.len()
    }

    /// Iterates `(col, value)` over row `i`.
    pub fn row(&self, i: usize) -> impl Iterator<Item = (usize, f64)> + '_ {
        let r = self.row_ptr[i]..self.row_ptr[i + 1];
        self.col_idx[r.clone()]
            .iter()
            .copied()
            .zip(self.values[r].iter().copied())
    }

    /// Row sums.
    pub fn row_sums(&self) -> Vec<f64> {
        (0..self.n).map(|i| self.row(i).map(|(_, v)| v).sum()).collect()
    }

    /// Entries of the upper triangle including the diagonal, row-major.
    pub fn upper_triplets(&self) -> Vec<(usize, usize, f64)> {
        let mut out = Vec::new();
        for i in 0..self.n {
            for (j, v) in self.row(i) {
                if j >= i {
                    out.push((i, j, v));
                }
            }
        }
        out
    }

    fn row_dot(&self, i: usize, x: &[f64]) -> f64 {
        let mut s = 0.0;
        for p in self.row_ptr[i]..self.row_ptr[i + 1] {
            s += self.values[p] * x[self.col_idx[p]];
        }
        s
    }
}

impl SymOperator for CsrMatrix {
    fn dim(&self) -> usize {
        self.n
    }

    fn apply(&self, x: &[f64], y: &mut [f64]) {
        if self.n >= PAR_ROWS {
            y.par_iter_mut()
                .enumerate()
                .for_each(|(i, yi)| *yi = self.row_dot(i, x));
        } else {
            for (i, yi) in y.iter_mut().enumerate() {
                *yi = self.row_dot(i, x);
            }
        }
    }
}
