//! Compressed-row sparse matrices.

use std::io::{self, Write};

use rayon::prelude::*;

use super::KrylovError;

/// Rows per parallel task in [`CsrMatrix::spmv_into`].
const ROW_GRAIN: usize = 512;

#[derive(Debug, Clone, PartialEq)]
pub struct CsrMatrix {
    n: usize,
    row_ptr: Vec<usize>,
    col_idx: Vec<usize>,
    values: Vec<f64>,
}

impl CsrMatrix {
    /// Square matrix from raw arrays; checks every structural invariant.
    pub fn new(n: usize, row_ptr: Vec<usize>, col_idx: Vec<usize>, values: Vec<f64>) -> Result<Self, KrylovError> {
        let bad = |m: String| Err(KrylovError::InvalidMatrix(m));
        if row_ptr.len() != n + 1 || row_ptr[0] != 0 {
            return bad(format!("row offsets must have length {} and start at 0", n + 1));
        }
        if row_ptr.windows(2).any(|w| w[1] < w[0]) {
            return bad("row offsets are not monotone".into());
        }
        if row_ptr[n] != col_idx.len() || col_idx.len() != values.len() {
            return bad("offsets, column indices and values disagree in length".into());
        }
        for i in 0..n {
            let cols = &col_idx[row_ptr[i]..row_ptr[i + 1]];
            if cols.windows(2).any(|w| w[1] <= w[0]) {
                return bad(format!("row {i}: column indices not sorted and unique"));
            }
            if cols.last().is_some_and(|&c| c >= n) {
                return bad(format!("row {i}: column index out of range"));
            }
        }
        if let Some(k) = values.iter().position(|v| !v.is_finite()) {
            return bad(format!("non-finite value at entry {k}"));
        }
        Ok(CsrMatrix { n, row_ptr, col_idx, values })
    }

    /// Builds from `(row, col, value)` triplets, summing duplicates in input order.
    pub fn from_triplets(n: usize, triplets: &[(usize, usize, f64)]) -> Result<Self, KrylovError> {
        let mut rows: Vec<Vec<(usize, f64)>> = vec![Vec::new(); n];
        for &(i, j, v) in triplets {
            if i >= n || j >= n {
                return Err(KrylovError::InvalidMatrix(format!("entry ({i}, {j}) outside {n}x{n}")));
            }
            rows[i].push((j, v));
        }
        let mut row_ptr = vec![0];
        let mut col_idx = Vec::new();
        let mut values = Vec::new();
        for mut r in rows {
            r.sort_by_key(|e| e.0);
            for (j, v) in r {
                if col_idx.len() > *row_ptr.last().unwrap() && *col_idx.last().unwrap() == j {
                    *values.last_mut().unwrap() += v;
                } else {
                    col_idx.push(j);
                    values.push(v);
                }
            }
            row_ptr.push(col_idx.len());
        }
        Self::new(n, row_ptr, col_idx, values)
    }

    /// Zero-valued matrix with the given sorted per-row column lists.
    pub fn from_pattern(rows: &[Vec<usize>]) -> Result<Self, KrylovError> {
        let n = rows.len();
        let mut row_ptr = Vec::with_capacity(n + 1);
        row_ptr.push(0);
        let mut col_idx = Vec::with_capacity(rows.iter().map(Vec::len).sum());
        for r in rows {
            col_idx.extend_from_slice(r);
            row_ptr.push(col_idx.len());
        }
        let values = vec![0.0; col_idx.len()];
        Self::new(n, row_ptr, col_idx, values)
    }

    pub fn identity(n: usize) -> Self {
        CsrMatrix { n, row_ptr: (0..=n).collect(), col_idx: (0..n).collect(), values: vec![1.0; n] }
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    pub fn nnz(&self) -> usize {
        self.values.len()
    }

    pub fn row_ptr(&self) -> &[usize] {
        &self.row_ptr
    }

    pub fn col_idx(&self) -> &[usize] {
        &self.col_idx
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }

    pub fn row(&self, i: usize) -> (&[usize], &[f64]) {
        let r = self.row_ptr[i]..self.row_ptr[i + 1];
        (&self.col_idx[r.clone()], &self.values[r])
    }

    /// Position of entry `(i, j)` in the value array, if stored.
    pub fn find(&self, i: usize, j: usize) -> Option<usize> {
        let start = self.row_ptr[i];
        self.col_idx[start..self.row_ptr[i + 1]].binary_search(&j).ok().map(|k| start + k)
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.find(i, j).map_or(0.0, |k| self.values[k])
    }

    pub fn diagonal(&self) -> Vec<f64> {
        (0..self.n).map(|i| self.get(i, i)).collect()
    }

    pub fn clear(&mut self) {
        self.values.iter_mut().for_each(|v| *v = 0.0);
    }

    pub fn spmv(&self, x: &[f64]) -> Vec<f64> {
        let mut y = vec![0.0; self.n];
        self.spmv_into(x, &mut y);
        y
    }

    /// `y = A x`; every row is a sequential dot product in column order.
    pub fn spmv_into(&self, x: &[f64], y: &mut [f64]) {
        assert_eq!(x.len(), self.n, "spmv: vector length does not match matrix");
        assert_eq!(y.len(), self.n, "spmv: output length does not match matrix");
        y.par_chunks_mut(ROW_GRAIN).enumerate().for_each(|(c, out)| {
            let base = c * ROW_GRAIN;
            for (k, yi) in out.iter_mut().enumerate() {
                let i = base + k;
                let mut s = 0.0;
                for e in self.row_ptr[i]..self.row_ptr[i + 1] {
                    s += self.values[e] * x[self.col_idx[e]];
                }
                *yi = s;
            }
        });
    }

    /// Matrix Market coordinate format, 1-based indices.
    pub fn write_matrix_market<W: Write>(&self, mut w: W) -> io::Result<()> {
        writeln!(w, "%%MatrixMarket matrix coordinate real general")?;
        writeln!(w, "{} {} {}", self.n, self.n, self.nnz())?;
        for i in 0..self.n {
            let (cols, vals) = self.row(i);
            for (j, v) in cols.iter().zip(vals) {
                writeln!(w, "{} {} {:.17e}", i + 1, j + 1, v)?;
            }
        }
        Ok(())
    }
}

/// Matrix plus right-hand side.
#[derive(Debug, Clone, PartialEq)]
pub struct SparseSystem {
    pub matrix: CsrMatrix,
    pub rhs: Vec<f64>,
}

impl SparseSystem {
    pub fn dim(&self) -> usize {
        self.matrix.dim()
    }

    /// ‖b − Ax‖ / ‖b‖ (absolute norm when b = 0).
    pub fn relative_residual(&self, x: &[f64]) -> f64 {
        relative_residual(&self.matrix, &self.rhs, x)
    }
}

pub fn relative_residual(a: &CsrMatrix, b: &[f64], x: &[f64]) -> f64 {
    let ax = a.spmv(x);
    let r: Vec<f64> = b.iter().zip(&ax).map(|(bi, ai)| bi - ai).collect();
    let nb = super::norm(b);
    let nr = super::norm(&r);
    if nb > 0.0 {
        nr / nb
    } else {
        nr
    }
}
