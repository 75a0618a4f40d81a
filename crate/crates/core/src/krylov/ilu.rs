//! Incomplete LU factorization with zero fill-in.

use super::{CsrMatrix, KrylovError};

/// `L U ≈ A` on the sparsity pattern of `A`; `L` has a unit diagonal and is
/// stored below the diagonal, `U` on and above it.
#[derive(Debug, Clone, PartialEq)]
pub struct Ilu0 {
    lu: CsrMatrix,
    diag: Vec<usize>,
}

impl Ilu0 {
    pub fn new(a: &CsrMatrix) -> Result<Self, KrylovError> {
        let n = a.dim();
        let mut lu = a.clone();
        let row_ptr = lu.row_ptr().to_vec();
        let cols = lu.col_idx().to_vec();
        let mut diag = Vec::with_capacity(n);
        for i in 0..n {
            let pos = lu.find(i, i).ok_or(KrylovError::ZeroDiagonal { row: i })?;
            diag.push(pos);
        }
        let vals = lu.values_mut();
        let mut marker = vec![usize::MAX; n];
        for i in 0..n {
            let (start, end) = (row_ptr[i], row_ptr[i + 1]);
            for p in start..end {
                marker[cols[p]] = p;
            }
            for p in start..end {
                let k = cols[p];
                if k >= i {
                    break;
                }
                let pivot = vals[diag[k]];
                if pivot == 0.0 || !pivot.is_finite() {
                    return Err(KrylovError::ZeroPivot { row: k });
                }
                let lik = vals[p] / pivot;
                vals[p] = lik;
                for q in diag[k] + 1..row_ptr[k + 1] {
                    let m = marker[cols[q]];
                    if m != usize::MAX {
                        vals[m] -= lik * vals[q];
                    }
                }
            }
            for p in start..end {
                marker[cols[p]] = usize::MAX;
            }
            if vals[diag[i]] == 0.0 {
                return Err(KrylovError::ZeroPivot { row: i });
            }
        }
        Ok(Ilu0 { lu, diag })
    }

    /// `out = (LU)⁻¹ v`
    pub fn apply_into(&self, v: &[f64], out: &mut [f64]) {
        let n = self.lu.dim();
        let (rp, ci, va) = (self.lu.row_ptr(), self.lu.col_idx(), self.lu.values());
        for i in 0..n {
            let mut s = v[i];
            for p in rp[i]..self.diag[i] {
                s -= va[p] * out[ci[p]];
            }
            out[i] = s;
        }
        for i in (0..n).rev() {
            let mut s = out[i];
            for p in self.diag[i] + 1..rp[i + 1] {
                s -= va[p] * out[ci[p]];
            }
            out[i] = s / va[self.diag[i]];
        }
    }

    pub fn apply(&self, v: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; v.len()];
        self.apply_into(v, &mut out);
        out
    }
}
