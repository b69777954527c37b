use super::SpecError;
use std::f64::consts::E;

const INV_E: f64 = 1.0 / E;

/// Real Lambert W on branch 0 (x ≥ −1/e) or −1 (−1/e ≤ x < 0).
pub fn lambert_w(branch: i32, x: f64) -> Result<f64, SpecError> {
    match branch {
        0 if x >= -INV_E - 1e-16 => Ok(w0(x)),
        -1 if x >= -INV_E - 1e-16 && x < 0.0 => Ok(wm1(x)),
        0 | -1 => Err(SpecError::Domain(format!("x = {x} outside branch {branch} of Lambert W"))),
        _ => Err(SpecError::Domain(format!("unsupported Lambert W branch {branch}"))),
    }
}

fn branch_p(x: f64) -> f64 {
    (2.0 * (E * x + 1.0)).max(0.0).sqrt()
}

fn w0(x: f64) -> f64 {
    if x == 0.0 {
        return 0.0;
    }
    let w = if x < -0.3 {
        let p = branch_p(x);
        -1.0 + p - p * p / 3.0 + 11.0 / 72.0 * p * p * p
    } else if x < 3.0 {
        // Padé-ish seed around the origin
        let l = x.ln_1p();
        l * (1.0 - l.ln_1p() / (2.0 + l))
    } else {
        let l1 = x.ln();
        let l2 = l1.ln();
        l1 - l2 + l2 / l1
    };
    halley(x, w)
}

fn wm1(x: f64) -> f64 {
    let w = if x < -0.25 {
        let p = branch_p(x);
        -1.0 - p - p * p / 3.0 - 11.0 / 72.0 * p * p * p
    } else {
        let l1 = (-x).ln();
        let l2 = (-l1).ln();
        l1 - l2 + l2 / l1
    };
    halley(x, w)
}

fn halley(x: f64, mut w: f64) -> f64 {
    if x <= -INV_E {
        return -1.0;
    }
    for _ in 0..50 {
        let ew = w.exp();
        let f = w * ew - x;
        let wp1 = w + 1.0;
        if wp1 == 0.0 {
            break;
        }
        let denom = ew * wp1 - (w + 2.0) * f / (2.0 * wp1);
        let dw = f / denom;
        w -= dw;
        if dw.abs() <= 1e-15 * (1.0 + w.abs()) {
            break;
        }
    }
    w
}
