use super::gamma::log_gamma;
use super::hyper::hyp_pfq;
use super::{SeriesControl, SpecError};

fn ctl() -> SeriesControl {
    SeriesControl::with_rel_tol(1e-14)
}

/// (1 − ₀F₁(½; −x))/x evaluated as 2·₁F₂(1; 3/2, 2; −x), with no
/// cancellation at small x. At x = 0 the value is 2.
pub fn one_minus_0f1_half_over_x(x: f64) -> f64 {
    match hyp_pfq(&[1.0], &[1.5, 2.0], -x, &ctl()) {
        Ok(r) => 2.0 * r.to_f64(),
        Err(_) => f64::NAN,
    }
}

/// 2x·₂F₃(1, 1; 3/2, 2, 2; x), the ε → 0 limit of (1 − ₁F₂(−ε; 1, ½; x))/ε.
pub fn eps_limit_1f2(x: f64) -> f64 {
    if x == 0.0 {
        return 0.0;
    }
    match hyp_pfq(&[1.0, 1.0], &[1.5, 2.0, 2.0], x, &ctl()) {
        Ok(r) => 2.0 * x * r.to_f64(),
        Err(_) => f64::NAN,
    }
}

/// ∂ⁿ_γ of f(γ) = e^{−γZ}(4πγt)^{−d/2}:
/// (−1)ⁿ f Σ_k n!/(k!(n−k)!) Γ(d/2+k)/Γ(d/2) γ^{−k} Z^{n−k}.
pub fn heat_kernel_gamma_derivative(n: u32, d: f64, gamma: f64, z: f64, t: f64) -> Result<f64, SpecError> {
    if !(gamma > 0.0 && t > 0.0 && d > 0.0) {
        return Err(SpecError::Domain("need γ, t, d > 0".into()));
    }
    let f = (-gamma * z).exp() * (4.0 * std::f64::consts::PI * gamma * t).powf(-d / 2.0);
    let lgd = log_gamma(d / 2.0)?;
    let mut s = 0.0;
    let mut binom = 1.0;
    for k in 0..=n {
        if k > 0 {
            binom *= (n - k + 1) as f64 / k as f64;
        }
        let r = (log_gamma(d / 2.0 + k as f64)? - lgd).exp();
        s += binom * r * gamma.powi(-(k as i32)) * z.powi((n - k) as i32);
    }
    let sign = if n % 2 == 0 { 1.0 } else { -1.0 };
    Ok(sign * f * s)
}
