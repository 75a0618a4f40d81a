//! Element stabilization parameters.

/// SUPG intrinsic time, s. `dt = f64::INFINITY` gives the steady form.
pub fn tau_supg(h: f64, u_norm: f64, nu: f64, dt: f64) -> f64 {
    let transient = 2.0 / dt;
    let advective = 2.0 * u_norm / h;
    let diffusive = 4.0 * nu / (h * h);
    (transient * transient + advective * advective + diffusive * diffusive).powf(-0.5)
}

/// PSPG uses the SUPG value.
pub fn tau_pspg(h: f64, u_norm: f64, nu: f64, dt: f64) -> f64 {
    tau_supg(h, u_norm, nu, dt)
}

/// Grad-div coefficient, m²/s.
pub fn tau_lsic(h: f64, u_norm: f64) -> f64 {
    0.5 * u_norm * h
}
