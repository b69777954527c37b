//! Identity table behind `qsm specfun-selftest`.

use super::*;
use std::f64::consts::PI;

#[derive(Debug, Clone, PartialEq)]
pub struct IdentityCheck {
    pub name: &'static str,
    pub value: f64,
    pub reference: f64,
    pub rel_error: f64,
    pub tol: f64,
    pub pass: bool,
}

fn check(name: &'static str, value: std::result::Result<f64, SpecError>, reference: f64, tol: f64) -> IdentityCheck {
    let value = value.unwrap_or(f64::NAN);
    let rel_error = (value - reference).abs() / reference.abs().max(1e-300);
    IdentityCheck { name, value, reference, rel_error, tol, pass: rel_error <= tol }
}

fn ctl() -> SeriesControl {
    SeriesControl::with_rel_tol(1e-15)
}

/// Evaluates every identity; all rows pass on a healthy build.
pub fn identity_suite() -> Vec<IdentityCheck> {
    let x = 2.7;
    let big = 45.0;
    vec![
        check("Gamma(1/2) = sqrt(pi)", gamma(0.5), PI.sqrt(), 1e-14),
        check("Gamma(-3/2) = 4 sqrt(pi)/3", gamma(-1.5), 4.0 * PI.sqrt() / 3.0, 1e-14),
        check("ln Gamma(100)", log_gamma(100.0), 359.134_205_369_575_4, 1e-14),
        check("0F0(;;x) = e^x", hyp_pfq(&[], &[], x, &ctl()).map(|r| r.to_f64()), x.exp(), 1e-14),
        check("1F1(1;2;x) = (e^x - 1)/x", hyp_pfq(&[1.0], &[2.0], x, &ctl()).map(|r| r.to_f64()), x.exp_m1() / x, 1e-14),
        check("0F1(;1/2;-x^2/4) = cos x", hyp_pfq(&[], &[0.5], -x * x / 4.0, &ctl()).map(|r| r.to_f64()), x.cos(), 1e-13),
        check("0F1(;3/2;x^2/4) = sinh x / x", hyp_pfq(&[], &[1.5], x * x / 4.0, &ctl()).map(|r| r.to_f64()), x.sinh() / x, 1e-14),
        check(
            "0F1(;1/2;-x) asymptotic = cos 2sqrt(x)",
            hyp_pfq(&[], &[0.5], -big * big / 4.0, &ctl()).map(|r| r.to_f64()),
            big.cos(),
            1e-9,
        ),
        check("1F2(1;3/2,2;-x) = sin^2 sqrt(x)/x", Ok(one_minus_0f1_half_over_x(x) / 2.0), x.sqrt().sin().powi(2) / x, 1e-13),
        check("regularized 1F1(1;0;x) = x e^x", hyp_pfq_reg(&[1.0], &[0.0], x, &ctl()).map(|r| r.to_f64()), x * x.exp(), 1e-13),
        check("I_1/2(x) = sqrt(2/(pi x)) sinh x", bessel_i(0.5, x).map(|r| r.to_f64()), (2.0 / (PI * x)).sqrt() * x.sinh(), 1e-13),
        check("J_1/2(x) = sqrt(2/(pi x)) sin x", bessel_j(0.5, x), (2.0 / (PI * x)).sqrt() * x.sin(), 1e-12),
        check("J_-1/2(x) = sqrt(2/(pi x)) cos x", bessel_j(-0.5, x), (2.0 / (PI * x)).sqrt() * x.cos(), 1e-12),
        check("Gamma(0, x) = E1(x) at x = 1", gamma_upper(0.0, 1.0), 0.219_383_934_395_520_3, 1e-13),
        check("W0(e) = 1", lambert_w(0, std::f64::consts::E), 1.0, 1e-15),
        check("W-1(-ln2/2) = -2 ln 2", lambert_w(-1, -std::f64::consts::LN_2 / 2.0), -2.0 * std::f64::consts::LN_2, 1e-14),
        check("Phi3(b;c;0,y) = 0F1(;c;y)", humbert_phi3_series(0.7, 1.3, 0.0, x, &ctl()).map(|r| r.to_f64()), hyp_pfq(&[], &[1.3], x, &ctl()).map(|r| r.to_f64()).unwrap_or(f64::NAN), 1e-14),
        check("Phi3(b;c;x,0) = 1F1(b;c;x)", humbert_phi3_series(0.7, 1.3, x, 0.0, &ctl()).map(|r| r.to_f64()), hyp_pfq(&[0.7], &[1.3], x, &ctl()).map(|r| r.to_f64()).unwrap_or(f64::NAN), 1e-14),
    ]
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn all_identities_pass() {
        for c in identity_suite() {
            assert!(c.pass, "{}: {} vs {} (rel {:e})", c.name, c.value, c.reference, c.rel_error);
        }
    }
}
