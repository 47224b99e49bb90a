use super::ParamVector;
use crate::error::{Error, Result};

/// Default Spike Compensation coefficients for a delay of `delay` steps:
/// `a = m^D` and `b = 1 + m + ... + m^(D-1)`.
///
/// `b` is summed directly rather than as `(1 - m^D) / (1 - m)`, which keeps
/// it exact for `D <= 1` and well defined as `m -> 1`.
pub fn sc_default_coeffs(m: f64, delay: usize) -> (f64, f64) {
    let mut a = 1.0;
    let mut b = 0.0;
    for _ in 0..delay {
        b += a;
        a *= m;
    }
    (a, b)
}

/// GSC coefficients that reproduce linear weight prediction with horizon
/// `horizon` on a locally linear gradient: `a + b = 1 + T` and `m b = T`.
pub fn gsc_from_lwp(m: f64, horizon: f64) -> Result<(f64, f64)> {
    if !(m > 0.0 && m < 1.0) {
        return Err(Error::Domain(format!(
            "GSC/LWP equivalence needs momentum in (0, 1), got {m}"
        )));
    }
    Ok((1.0 - (1.0 - m) * horizon / m, horizon / m))
}

/// Scales a stage gradient by `gamma^delay`.
pub fn shrink_gradient(g: &ParamVector, gamma: f64, delay: usize) -> ParamVector {
    let factor = shrink_factor(gamma, delay);
    if factor == 1.0 {
        g.clone()
    } else {
        g.scaled(factor)
    }
}

pub(crate) fn shrink_factor(gamma: f64, delay: usize) -> f64 {
    gamma.powi(delay as i32)
}

/// Transfers a reference `(eta_r, m_r)` tuned at update size `n_r` to update
/// size `n`, keeping the per-sample momentum decay and the per-sample
/// effective step `eta / (1 - m)` unchanged.
pub fn scale_hyperparams(eta_r: f64, m_r: f64, n_r: usize, n: usize) -> (f64, f64) {
    if n == n_r {
        return (eta_r, m_r);
    }
    let ratio = n as f64 / n_r as f64;
    if m_r == 0.0 {
        return (eta_r * ratio, 0.0);
    }
    // 1 - m via expm1 avoids cancellation when m is close to one
    let log_m = ratio * m_r.ln();
    let m = log_m.exp();
    let one_minus_m = -log_m.exp_m1();
    let eta = one_minus_m * n as f64 / ((1.0 - m_r) * n_r as f64) * eta_r;
    (eta, m)
}
