use super::hyper::hyp_pfq_reg;
use super::{EvalResult, SeriesControl, SpecError};
use std::f64::consts::PI;

/// Modified Bessel function I_ν(x), x ≥ 0. For large x the result carries
/// `log_scale = x`, i.e. `value` is e^{−x}I_ν(x).
pub fn bessel_i(nu: f64, x: f64) -> Result<EvalResult, SpecError> {
    if !(x >= 0.0) || !nu.is_finite() {
        return Err(SpecError::Domain(format!("bessel_i needs x >= 0, got {x}")));
    }
    if x == 0.0 {
        return match nu {
            n if n == 0.0 => Ok(EvalResult::exact(1.0)),
            n if n > 0.0 || n == n.round() => Ok(EvalResult::exact(0.0)),
            _ => Err(SpecError::Domain("I_ν(0) is infinite for negative non-integer ν".into())),
        };
    }
    if x > 40.0 && x > nu * nu {
        let (v, n) = hankel_i_scaled(nu, x);
        return Ok(EvalResult { value: v, terms_used: n, converged: true, log_scale: x });
    }
    let mut r = hyp_pfq_reg(&[], &[nu + 1.0], 0.25 * x * x, &SeriesControl::default())?;
    r.log_scale += nu * (0.5 * x).ln();
    Ok(r)
}

/// e^{−x} I_ν(x).
pub fn bessel_i_scaled(nu: f64, x: f64) -> Result<f64, SpecError> {
    if nu == 0.0 && x >= 0.0 {
        return Ok(exp_i0_scaled(x));
    }
    let r = bessel_i(nu, x)?;
    Ok(r.value * (r.log_scale - x).exp())
}

// e^{−x}I_ν(x) ~ (2πx)^{−1/2} Σ (−1)^k a_k(ν) / x^k
fn hankel_i_scaled(nu: f64, x: f64) -> (f64, usize) {
    let mu = 4.0 * nu * nu;
    let mut term = 1.0;
    let mut sum = 1.0;
    let mut n = 1;
    for k in 1..200 {
        let kf = k as f64;
        let next = -term * (mu - (2.0 * kf - 1.0).powi(2)) / (kf * 8.0 * x);
        if next.abs() > term.abs() {
            break;
        }
        term = next;
        sum += term;
        n += 1;
        if term.abs() < 1e-17 * sum.abs() {
            break;
        }
    }
    (sum / (2.0 * PI * x).sqrt(), n)
}

/// e^{−x} I₀(x) for x ≥ 0, fast path used by the lattice kernels.
pub fn exp_i0_scaled(x: f64) -> f64 {
    if x <= 40.0 {
        let q = 0.25 * x * x;
        let mut t = 1.0;
        let mut s = 1.0;
        let mut k = 1.0;
        loop {
            t *= q / (k * k);
            s += t;
            if t < 1e-17 * s {
                break;
            }
            k += 1.0;
        }
        s * (-x).exp()
    } else {
        hankel_i_scaled(0.0, x).0
    }
}

/// e^{−x} I₁(x) for x ≥ 0.
pub fn exp_i1_scaled(x: f64) -> f64 {
    if x <= 40.0 {
        let q = 0.25 * x * x;
        let mut t = 0.5 * x;
        let mut s = t;
        let mut k = 1.0;
        while t > 1e-17 * s && k < 500.0 {
            t *= q / (k * (k + 1.0));
            s += t;
            k += 1.0;
        }
        s * (-x).exp()
    } else {
        hankel_i_scaled(1.0, x).0
    }
}

/// Bessel function of the first kind J_ν(x), ν ≥ −1, x ≥ 0.
pub fn bessel_j(nu: f64, x: f64) -> Result<f64, SpecError> {
    if !(x >= 0.0) || !(nu >= -1.0) {
        return Err(SpecError::Domain(format!("bessel_j needs nu >= -1, x >= 0 (got {nu}, {x})")));
    }
    if x == 0.0 {
        if nu == 0.0 {
            return Ok(1.0);
        }
        if nu > 0.0 || nu == -1.0 {
            return Ok(0.0);
        }
        return Err(SpecError::Domain("J_ν(0) is infinite for −1 < ν < 0".into()));
    }
    let r = hyp_pfq_reg(&[], &[nu + 1.0], -0.25 * x * x, &SeriesControl::default())?;
    Ok(r.value * (r.log_scale + nu * (0.5 * x).ln()).exp())
}
