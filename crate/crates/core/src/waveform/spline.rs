//! Periodic cubic spline on a non-uniform grid.

/// Second derivatives `m` of the periodic interpolating cubic through
/// `(t[i], y[i])` with `y` repeating after `period`.
pub(crate) fn periodic_second_derivatives(t: &[f64], y: &[f64], period: f64) -> Vec<f64> {
    let n = t.len();
    let h: Vec<f64> = (0..n)
        .map(|i| if i + 1 < n { t[i + 1] - t[i] } else { t[0] + period - t[n - 1] })
        .collect();
    let slope: Vec<f64> = (0..n).map(|i| (y[(i + 1) % n] - y[i]) / h[i]).collect();
    let mut sub = vec![0.0; n];
    let mut diag = vec![0.0; n];
    let mut sup = vec![0.0; n];
    let mut rhs = vec![0.0; n];
    for i in 0..n {
        let hp = h[(i + n - 1) % n];
        sub[i] = hp;
        diag[i] = 2.0 * (hp + h[i]);
        sup[i] = h[i];
        rhs[i] = 6.0 * (slope[i] - slope[(i + n - 1) % n]);
    }
    solve_cyclic(&sub, &diag, &sup, &rhs)
}

/// Cyclic tridiagonal solve: row `i` reads
/// `sub[i] x[i-1] + diag[i] x[i] + sup[i] x[i+1] = rhs[i]` with wrap-around.
/// Sherman–Morrison on top of the Thomas algorithm; the system here is
/// strictly diagonally dominant so no pivoting is needed.
fn solve_cyclic(sub: &[f64], diag: &[f64], sup: &[f64], rhs: &[f64]) -> Vec<f64> {
    let n = diag.len();
    let alpha = sup[n - 1]; // bottom-left corner
    let beta = sub[0]; // top-right corner
    let gamma = -diag[0];
    let mut b = diag.to_vec();
    b[0] -= gamma;
    b[n - 1] -= alpha * beta / gamma;
    let x = thomas(sub, &b, sup, rhs);
    let mut u = vec![0.0; n];
    u[0] = gamma;
    u[n - 1] = alpha;
    let z = thomas(sub, &b, sup, &u);
    let fact = (x[0] + beta * x[n - 1] / gamma) / (1.0 + z[0] + beta * z[n - 1] / gamma);
    x.iter().zip(&z).map(|(xi, zi)| xi - fact * zi).collect()
}

fn thomas(sub: &[f64], diag: &[f64], sup: &[f64], rhs: &[f64]) -> Vec<f64> {
    let n = diag.len();
    let mut c = vec![0.0; n];
    let mut d = vec![0.0; n];
    c[0] = sup[0] / diag[0];
    d[0] = rhs[0] / diag[0];
    for i in 1..n {
        let m = diag[i] - sub[i] * c[i - 1];
        c[i] = sup[i] / m;
        d[i] = (rhs[i] - sub[i] * d[i - 1]) / m;
    }
    let mut x = vec![0.0; n];
    x[n - 1] = d[n - 1];
    for i in (0..n - 1).rev() {
        x[i] = d[i] - c[i] * x[i + 1];
    }
    x
}
