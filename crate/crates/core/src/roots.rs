//! Bracketed scalar root finding.

use crate::{Error, Result};

/// Brent's method on [a, b] with f(a), f(b) of opposite sign.
pub fn brent<F: FnMut(f64) -> Result<f64>>(mut f: F, mut a: f64, mut b: f64, xtol: f64, max_iter: usize) -> Result<(f64, usize)> {
    let mut fa = f(a)?;
    let mut fb = f(b)?;
    if fa == 0.0 {
        return Ok((a, 0));
    }
    if fb == 0.0 {
        return Ok((b, 0));
    }
    if fa.signum() == fb.signum() {
        return Err(Error::NoConvergence(format!("root not bracketed: f({a:e}) = {fa:e}, f({b:e}) = {fb:e}")));
    }
    let mut c = a;
    let mut fc = fa;
    let mut d = b - a;
    let mut e = d;
    for it in 0..max_iter {
        if fb.signum() == fc.signum() {
            c = a;
            fc = fa;
            d = b - a;
            e = d;
        }
        if fc.abs() < fb.abs() {
            a = b;
            b = c;
            c = a;
            fa = fb;
            fb = fc;
            fc = fa;
        }
        let tol = 2.0 * f64::EPSILON * b.abs() + 0.5 * xtol;
        let m = 0.5 * (c - b);
        if m.abs() <= tol || fb == 0.0 {
            return Ok((b, it));
        }
        if e.abs() >= tol && fa.abs() > fb.abs() {
            let s = fb / fa;
            let (mut p, mut q);
            if a == c {
                p = 2.0 * m * s;
                q = 1.0 - s;
            } else {
                let qq = fa / fc;
                let r = fb / fc;
                p = s * (2.0 * m * qq * (qq - r) - (b - a) * (r - 1.0));
                q = (qq - 1.0) * (r - 1.0) * (s - 1.0);
            }
            if p > 0.0 {
                q = -q;
            } else {
                p = -p;
            }
            if 2.0 * p < (3.0 * m * q - (tol * q).abs()).min((e * q).abs()) {
                e = d;
                d = p / q;
            } else {
                d = m;
                e = m;
            }
        } else {
            d = m;
            e = m;
        }
        a = b;
        fa = fb;
        b += if d.abs() > tol { d } else { tol * m.signum() };
        fb = f(b)?;
    }
    Err(Error::NoConvergence(format!("Brent did not converge in {max_iter} iterations (x = {b:e}, f = {fb:e})")))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn cubic_root() {
        let (x, _) = brent(|x| Ok(x * x * x - 2.0), 0.0, 3.0, 1e-15, 100).unwrap();
        assert!((x - 2f64.cbrt()).abs() < 1e-14);
        assert!(brent(|x| Ok(x * x + 1.0), -1.0, 1.0, 1e-12, 50).is_err());
    }
}
