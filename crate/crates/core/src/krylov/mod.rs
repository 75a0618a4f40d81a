//! Sparse linear algebra: compressed-row matrices, the GPBi-CG solver for
//! nonsymmetric systems and a conjugate-gradient solver for SPD ones.
//!
//! Reductions are split into fixed-size chunks whose partial sums are combined
//! pairwise, so results do not depend on the number of threads.

mod csr;
mod ilu;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

pub use csr::{relative_residual, CsrMatrix, SparseSystem};
pub use ilu::Ilu0;

/// Elements per partial sum in [`dot`].
const DOT_CHUNK: usize = 2048;

/// Inner products below this magnitude count as breakdown.
pub const BREAKDOWN: f64 = 1e-300;

/// Restarts allowed after breakdown, drift or divergence.
const MAX_RESTARTS: usize = 20;

/// Growth of the true residual over the best one that triggers a restart
/// from the best iterate.
const DIVERGENCE: f64 = 100.0;

/// Iterations between true-residual recomputations.
pub const RESIDUAL_REFRESH: usize = 50;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum KrylovError {
    #[error("invalid matrix: {0}")]
    InvalidMatrix(String),
    #[error("zero diagonal entry in row {row}")]
    ZeroDiagonal { row: usize },
    #[error("zero pivot in incomplete factorization at row {row}")]
    ZeroPivot { row: usize },
    #[error("dimension mismatch: matrix is {matrix}, vector has {vector}")]
    DimensionMismatch { matrix: usize, vector: usize },
    #[error("non-finite entry in right-hand side at {0}")]
    NonFinite(usize),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum PrecondKind {
    None,
    #[default]
    Jacobi,
    /// Incomplete LU with zero fill-in.
    Ilu0,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SolverConfig {
    pub tol: f64,
    pub max_iter: usize,
    pub precond: PrecondKind,
}

impl Default for SolverConfig {
    fn default() -> Self {
        SolverConfig { tol: 1e-8, max_iter: 5000, precond: PrecondKind::Jacobi }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SolveReport {
    pub iterations: usize,
    /// ‖b − Ax‖/‖b‖ of the returned iterate, recomputed from scratch.
    pub residual: f64,
    pub converged: bool,
    pub breakdown: bool,
}

/// Fixed-order chunked dot product.
pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    debug_assert_eq!(a.len(), b.len());
    let partial: Vec<f64> = a
        .par_chunks(DOT_CHUNK)
        .zip(b.par_chunks(DOT_CHUNK))
        .map(|(x, y)| x.iter().zip(y).map(|(p, q)| p * q).sum::<f64>())
        .collect();
    pairwise_sum(&partial)
}

fn pairwise_sum(v: &[f64]) -> f64 {
    match v.len() {
        0 => 0.0,
        1 => v[0],
        n => pairwise_sum(&v[..n / 2]) + pairwise_sum(&v[n / 2..]),
    }
}

pub fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

/// `y += a x`
fn axpy(a: f64, x: &[f64], y: &mut [f64]) {
    y.par_iter_mut().zip(x.par_iter()).for_each(|(yi, xi)| *yi += a * xi);
}

#[derive(Debug, Clone, PartialEq)]
pub struct Jacobi {
    inv_diag: Vec<f64>,
}

impl Jacobi {
    pub fn apply(&self, v: &[f64]) -> Vec<f64> {
        v.iter().zip(&self.inv_diag).map(|(x, d)| x * d).collect()
    }

    fn apply_into(&self, v: &[f64], out: &mut [f64]) {
        out.par_iter_mut().zip(v.par_iter().zip(self.inv_diag.par_iter())).for_each(|(o, (x, d))| *o = x * d);
    }
}

pub fn jacobi_precondition(a: &CsrMatrix) -> Result<Jacobi, KrylovError> {
    let diag = a.diagonal();
    if let Some(row) = diag.iter().position(|&d| d == 0.0) {
        return Err(KrylovError::ZeroDiagonal { row });
    }
    Ok(Jacobi { inv_diag: diag.iter().map(|d| 1.0 / d).collect() })
}

enum Precond {
    Identity,
    Jacobi(Jacobi),
    Ilu0(Ilu0),
}

impl Precond {
    fn build(a: &CsrMatrix, kind: PrecondKind) -> Result<Self, KrylovError> {
        Ok(match kind {
            PrecondKind::None => Precond::Identity,
            PrecondKind::Jacobi => Precond::Jacobi(jacobi_precondition(a)?),
            PrecondKind::Ilu0 => Precond::Ilu0(Ilu0::new(a)?),
        })
    }

    fn apply_into(&self, v: &[f64], out: &mut [f64]) {
        match self {
            Precond::Identity => out.copy_from_slice(v),
            Precond::Jacobi(m) => m.apply_into(v, out),
            Precond::Ilu0(m) => m.apply_into(v, out),
        }
    }
}

/// Right-preconditioned operator `v -> A M⁻¹ v` and the map `M⁻¹`.
struct Operator<'a> {
    a: &'a CsrMatrix,
    m: Precond,
    scratch: Vec<f64>,
}

impl Operator<'_> {
    fn apply(&mut self, v: &[f64], out: &mut [f64]) {
        self.m.apply_into(v, &mut self.scratch);
        self.a.spmv_into(&self.scratch, out);
    }

    /// `x += M⁻¹ v`
    fn add_unpreconditioned(&mut self, v: &[f64], x: &mut [f64]) {
        self.m.apply_into(v, &mut self.scratch);
        axpy(1.0, &self.scratch, x);
    }
}

fn check_inputs(a: &CsrMatrix, b: &[f64], x0: &[f64]) -> Result<(), KrylovError> {
    for v in [b, x0] {
        if v.len() != a.dim() {
            return Err(KrylovError::DimensionMismatch { matrix: a.dim(), vector: v.len() });
        }
    }
    if let Some(i) = b.iter().position(|v| !v.is_finite()) {
        return Err(KrylovError::NonFinite(i));
    }
    Ok(())
}

fn true_residual(a: &CsrMatrix, b: &[f64], x: &[f64], r: &mut [f64]) {
    a.spmv_into(x, r);
    r.par_iter_mut().zip(b.par_iter()).for_each(|(ri, bi)| *ri = bi - *ri);
}

/// GPBi-CG (Zhang's generalized product-type BiCG) with optional right
/// Jacobi preconditioning.
///
/// Never panics on numerical trouble: breakdown and iteration exhaustion are
/// reported in the [`SolveReport`] together with the best iterate seen.
pub fn gpbicg(
    a: &CsrMatrix,
    b: &[f64],
    x0: &[f64],
    cfg: &SolverConfig,
) -> Result<(Vec<f64>, SolveReport), KrylovError> {
    check_inputs(a, b, x0)?;
    let n = a.dim();
    let mut op = Operator { a, m: Precond::build(a, cfg.precond)?, scratch: vec![0.0; n] };
    let bnorm = norm(b);
    let scale = if bnorm > 0.0 { bnorm } else { 1.0 };
    let mut x = x0.to_vec();
    let mut r = vec![0.0; n];
    true_residual(a, b, &x, &mut r);
    let mut rel = norm(&r) / scale;
    let mut report = SolveReport { iterations: 0, residual: rel, converged: false, breakdown: false };
    if bnorm == 0.0 && x.iter().all(|&v| v == 0.0) || rel <= cfg.tol {
        report.converged = true;
        return Ok((x, report));
    }

    let mut r0s = r.clone();
    let mut p = vec![0.0; n];
    let mut u = vec![0.0; n];
    let mut z = vec![0.0; n];
    let mut t_prev = vec![0.0; n];
    let mut w = vec![0.0; n];
    let mut ap = vec![0.0; n];
    let mut t = vec![0.0; n];
    let mut at = vec![0.0; n];
    let mut y = vec![0.0; n];
    let mut step = vec![0.0; n];
    let mut beta = 0.0;
    let mut rho = dot(&r0s, &r);
    let mut best = (rel, x.clone());
    let mut restart_rel = rel;
    let mut restarts = 0;
    let mut first = true;
    let mut reset = false;

    for it in 0..cfg.max_iter {
        report.iterations = it + 1;
        let healthy = 'step: {
            // p = r + beta (p - u)
            p.par_iter_mut().zip(r.par_iter().zip(u.par_iter())).for_each(|(pi, (ri, ui))| *pi = ri + beta * (*pi - ui));
            op.apply(&p, &mut ap);
            let sigma = dot(&r0s, &ap);
            if sigma.abs() < BREAKDOWN || rho.abs() < BREAKDOWN {
                break 'step false;
            }
            let alpha = rho / sigma;
            // y = t_prev - r - alpha w + alpha Ap ; t = r - alpha Ap
            for i in 0..n {
                y[i] = t_prev[i] - r[i] - alpha * w[i] + alpha * ap[i];
                t[i] = r[i] - alpha * ap[i];
            }
            if norm(&t) / scale <= cfg.tol * 0.5 {
                // t is already the next residual: take the BiCG half step
                step.par_iter_mut().zip(p.par_iter()).for_each(|(si, pi)| *si = alpha * pi);
                op.add_unpreconditioned(&step, &mut x);
                true_residual(a, b, &x, &mut r);
                rel = norm(&r) / scale;
                if rel <= cfg.tol {
                    report.converged = true;
                    break 'step true;
                }
                // recurrence drift; continue from the true residual
                reset = true;
                break 'step true;
            }
            op.apply(&t, &mut at);
            let (zeta, eta) = if first {
                let d = dot(&at, &at);
                if d < BREAKDOWN {
                    break 'step false;
                }
                (dot(&at, &t) / d, 0.0)
            } else {
                let yy = dot(&y, &y);
                let atat = dot(&at, &at);
                let att = dot(&at, &t);
                let yt = dot(&y, &t);
                let aty = dot(&at, &y);
                let d = atat * yy - aty * aty;
                if d.abs() < BREAKDOWN {
                    break 'step false;
                }
                ((yy * att - yt * aty) / d, (atat * yt - aty * att) / d)
            };
            if zeta.abs() < BREAKDOWN || !zeta.is_finite() || !eta.is_finite() {
                break 'step false;
            }
            // u = zeta Ap + eta (t_prev - r + beta u); z = zeta r + eta z - alpha u
            for i in 0..n {
                u[i] = zeta * ap[i] + eta * (t_prev[i] - r[i] + beta * u[i]);
                z[i] = zeta * r[i] + eta * z[i] - alpha * u[i];
                step[i] = alpha * p[i] + z[i];
            }
            op.add_unpreconditioned(&step, &mut x);
            // r = t - eta y - zeta At
            for i in 0..n {
                r[i] = t[i] - eta * y[i] - zeta * at[i];
            }
            if (it + 1) % RESIDUAL_REFRESH == 0 {
                true_residual(a, b, &x, &mut r);
                if norm(&r) / scale > DIVERGENCE * best.0 && restarts < MAX_RESTARTS {
                    // the iteration is running away: go back to the best iterate
                    restarts += 1;
                    x.copy_from_slice(&best.1);
                    true_residual(a, b, &x, &mut r);
                    rel = norm(&r) / scale;
                    r0s.copy_from_slice(&r);
                    reset = true;
                    break 'step true;
                }
            }
            rel = norm(&r) / scale;
            if !rel.is_finite() {
                break 'step false;
            }
            if rel < best.0 {
                best = (rel, x.clone());
            }
            if rel <= cfg.tol {
                true_residual(a, b, &x, &mut r);
                rel = norm(&r) / scale;
                if rel <= cfg.tol {
                    report.converged = true;
                    break 'step true;
                }
                // the recurrence drifted away from the true residual;
                // restart from it with a fresh shadow vector
                if restarts < MAX_RESTARTS {
                    restarts += 1;
                    r0s.copy_from_slice(&r);
                    reset = true;
                    break 'step true;
                }
            }
            let rho_next = dot(&r0s, &r);
            beta = alpha / zeta * rho_next / rho;
            rho = rho_next;
            // w = At + beta Ap
            for i in 0..n {
                w[i] = at[i] + beta * ap[i];
            }
            std::mem::swap(&mut t_prev, &mut t);
            first = false;
            true
        };
        if report.converged {
            best = (rel, x.clone());
            break;
        }
        if !healthy {
            // restart with a fresh shadow residual, but only after real progress
            true_residual(a, b, &x, &mut r);
            rel = norm(&r) / scale;
            if restarts >= MAX_RESTARTS || !(rel < 0.5 * restart_rel) {
                report.breakdown = true;
                break;
            }
            restarts += 1;
            restart_rel = rel;
            r0s.copy_from_slice(&r);
            reset = true;
        }
        if reset {
            reset = false;
            rho = dot(&r0s, &r);
            beta = 0.0;
            first = true;
            for v in [&mut u, &mut z, &mut t_prev, &mut w] {
                v.iter_mut().for_each(|e| *e = 0.0);
            }
        }
    }

    let x = if report.converged { x } else { best.1 };
    report.residual = relative_residual(a, b, &x);
    report.converged = report.converged && report.residual <= cfg.tol;
    Ok((x, report))
}

/// Preconditioned conjugate gradients for symmetric positive-definite systems.
pub fn cg(
    a: &CsrMatrix,
    b: &[f64],
    x0: &[f64],
    cfg: &SolverConfig,
) -> Result<(Vec<f64>, SolveReport), KrylovError> {
    check_inputs(a, b, x0)?;
    let n = a.dim();
    let m = Precond::build(a, cfg.precond)?;
    let precond = |r: &[f64]| {
        let mut out = vec![0.0; r.len()];
        m.apply_into(r, &mut out);
        out
    };
    let bnorm = norm(b);
    let scale = if bnorm > 0.0 { bnorm } else { 1.0 };
    let mut x = x0.to_vec();
    let mut r = vec![0.0; n];
    true_residual(a, b, &x, &mut r);
    let mut report = SolveReport { iterations: 0, residual: norm(&r) / scale, converged: false, breakdown: false };
    if report.residual <= cfg.tol {
        report.converged = true;
        return Ok((x, report));
    }
    let mut z = precond(&r);
    let mut p = z.clone();
    let mut rz = dot(&r, &z);
    let mut ap = vec![0.0; n];
    for it in 0..cfg.max_iter {
        report.iterations = it + 1;
        a.spmv_into(&p, &mut ap);
        let pap = dot(&p, &ap);
        if pap.abs() < BREAKDOWN {
            report.breakdown = true;
            break;
        }
        let alpha = rz / pap;
        axpy(alpha, &p, &mut x);
        if (it + 1) % RESIDUAL_REFRESH == 0 {
            true_residual(a, b, &x, &mut r);
        } else {
            axpy(-alpha, &ap, &mut r);
        }
        if norm(&r) / scale <= cfg.tol {
            true_residual(a, b, &x, &mut r);
            if norm(&r) / scale <= cfg.tol {
                report.converged = true;
                break;
            }
        }
        z = precond(&r);
        let rz_next = dot(&r, &z);
        let beta = rz_next / rz;
        rz = rz_next;
        p.par_iter_mut().zip(z.par_iter()).for_each(|(pi, zi)| *pi = zi + beta * *pi);
    }
    report.residual = relative_residual(a, b, &x);
    report.converged = report.converged && report.residual <= cfg.tol;
    Ok((x, report))
}
