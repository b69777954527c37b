use super::gamma::log_gamma_sign;
use super::hyper::hyp_pfq;
use super::{is_nonpos_int, EvalResult, Kahan, SeriesControl, SpecError};
use crate::quad::gauss_kronrod;

/// Confluent Humbert Φ₃(β; γ; x, y) = Σ_{m,n} (β)_m/(γ)_{m+n} x^m/m! y^n/n!,
/// summed along anti-diagonals m + n = N.
pub fn humbert_phi3_series(beta: f64, gam: f64, x: f64, y: f64, ctl: &SeriesControl) -> Result<EvalResult, SpecError> {
    ctl.validate()?;
    if is_nonpos_int(gam) {
        return Err(SpecError::Domain(format!("Φ₃ index γ = {gam} is a non-positive integer")));
    }
    // u_m = (β)_m x^m/m!, v_n = y^n/n!, grown as N increases
    let mut u = vec![1.0];
    let mut v = vec![1.0];
    let mut c = 1.0; // 1/(γ)_N
    let mut total = Kahan::default();
    let mut max_partial: f64 = 1.0;
    let mut ok = 0;
    let mut used = 0;
    for n in 0..ctl.max_terms {
        if n > 0 {
            let nf = n as f64;
            let um = u[n - 1] * (beta + nf - 1.0) * x / nf;
            let vn = v[n - 1] * y / nf;
            u.push(um);
            v.push(vn);
            c /= gam + nf - 1.0;
        }
        let mut diag = Kahan::default();
        let mut diag_abs = 0.0;
        for m in 0..=n {
            let t = u[m] * v[n - m];
            diag.add(t);
            diag_abs += t.abs();
        }
        let s = diag.value() * c;
        total.add(s);
        used += 1;
        max_partial = max_partial.max((diag_abs * c).abs()).max(total.value().abs());
        let nf = n as f64;
        let tail_shrinks = nf > x.abs() + y.abs() + beta.abs() + gam.abs();
        if (diag_abs * c).abs() <= ctl.rel_tol * total.value().abs() + ctl.abs_tol && tail_shrinks {
            ok += 1;
            if ok >= 3 {
                let value = total.value();
                if value.abs() < 1e-8 * max_partial {
                    return Err(SpecError::Cancellation { value, max_partial });
                }
                return Ok(EvalResult { value, terms_used: used, converged: true, log_scale: 0.0 });
            }
        } else {
            ok = 0;
        }
        if !c.is_finite() || !max_partial.is_finite() {
            break;
        }
    }
    Err(SpecError::NoConvergence { terms: used, estimate: total.value() })
}

/// Φ₃(β; γ; x, y) through the convolution
/// Γ(γ)/(Γ(γ−ε)Γ(ε)) ∫₀¹ v^{γ−ε−1}(1−v)^{ε−1} ₁F₁(β; γ−ε; xv) ₀F₁(ε; y(1−v)) dv,
/// valid for any 0 < ε < γ.
pub fn humbert_phi3_conv(beta: f64, gam_idx: f64, x: f64, y: f64, eps: f64) -> Result<f64, SpecError> {
    let alpha = gam_idx - eps;
    if !(eps > 0.0 && alpha > 0.0) {
        return Err(SpecError::Domain(format!("need 0 < ε < γ (ε = {eps}, γ = {gam_idx})")));
    }
    let ctl = SeriesControl::with_rel_tol(1e-14);
    let kernel = |v: f64| -> f64 {
        let f1 = if x == 0.0 { 1.0 } else { hyp_pfq(&[beta], &[alpha], x * v, &ctl).map(|r| r.to_f64()).unwrap_or(f64::NAN) };
        let f2 = if y == 0.0 { 1.0 } else { hyp_pfq(&[], &[eps], y * (1.0 - v), &ctl).map(|r| r.to_f64()).unwrap_or(f64::NAN) };
        f1 * f2
    };
    // [0, ½]: v = u^{1/α};  [½, 1]: 1 − v = s^{1/ε}
    let ua = 0.5f64.powf(alpha);
    let left = gauss_kronrod(
        |u| {
            let v = u.powf(1.0 / alpha);
            (1.0 - v).powf(eps - 1.0) * kernel(v)
        },
        0.0,
        ua,
        1e-13,
    )?;
    let se = 0.5f64.powf(eps);
    let right = gauss_kronrod(
        |s| {
            let w = s.powf(1.0 / eps);
            (1.0 - w).powf(alpha - 1.0) * kernel(1.0 - w)
        },
        0.0,
        se,
        1e-13,
    )?;
    let val = left.0 / alpha + right.0 / eps;
    if !val.is_finite() {
        return Err(SpecError::NoConvergence { terms: 0, estimate: left.1 + right.1 });
    }
    let (lg, sg) = log_gamma_sign(gam_idx)?;
    let (la, sa) = log_gamma_sign(alpha)?;
    let (le, se_) = log_gamma_sign(eps)?;
    Ok(val * sg * sa * se_ * (lg - la - le).exp())
}
