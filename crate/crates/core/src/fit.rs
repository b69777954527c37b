//! Ordinary least squares for the log-log and semi-log fits.

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LinearFit {
    pub slope: f64,
    pub intercept: f64,
    pub r2: f64,
    pub n: usize,
}

/// Fit y = intercept + slope·x.
pub fn linear_fit(x: &[f64], y: &[f64]) -> LinearFit {
    assert_eq!(x.len(), y.len());
    let n = x.len();
    let nf = n as f64;
    let mx = x.iter().sum::<f64>() / nf;
    let my = y.iter().sum::<f64>() / nf;
    let (mut sxx, mut sxy, mut syy) = (0.0, 0.0, 0.0);
    for (&a, &b) in x.iter().zip(y) {
        sxx += (a - mx) * (a - mx);
        sxy += (a - mx) * (b - my);
        syy += (b - my) * (b - my);
    }
    let slope = sxy / sxx;
    let r2 = if syy == 0.0 { 1.0 } else { sxy * sxy / (sxx * syy) };
    LinearFit { slope, intercept: my - slope * mx, r2, n }
}

/// Least-squares coefficients of y ≈ Σ c_j x^j, j = 0..=deg, by normal
/// equations with column scaling; adequate for the low degrees used here.
pub fn poly_fit(x: &[f64], y: &[f64], deg: usize) -> (Vec<f64>, f64) {
    let m = deg + 1;
    let scale = x.iter().fold(0.0f64, |a, &b| a.max(b.abs())).max(f64::MIN_POSITIVE);
    let mut a = vec![vec![0.0; m + 1]; m];
    for (&xi, &yi) in x.iter().zip(y) {
        let u = xi / scale;
        let pw: Vec<f64> = (0..m).map(|j| u.powi(j as i32)).collect();
        for r in 0..m {
            for c in 0..m {
                a[r][c] += pw[r] * pw[c];
            }
            a[r][m] += pw[r] * yi;
        }
    }
    for col in 0..m {
        let piv = (col..m).max_by(|&i, &j| a[i][col].abs().total_cmp(&a[j][col].abs())).unwrap();
        a.swap(col, piv);
        for r in 0..m {
            if r != col {
                let f = a[r][col] / a[col][col];
                for c in col..=m {
                    a[r][c] -= f * a[col][c];
                }
            }
        }
    }
    let coef: Vec<f64> = (0..m).map(|j| a[j][m] / a[j][j] / scale.powi(j as i32)).collect();
    let my = y.iter().sum::<f64>() / y.len() as f64;
    let (mut ss_res, mut ss_tot) = (0.0, 0.0);
    for (&xi, &yi) in x.iter().zip(y) {
        let p: f64 = coef.iter().rev().fold(0.0, |acc, &c| acc * xi + c);
        ss_res += (yi - p) * (yi - p);
        ss_tot += (yi - my) * (yi - my);
    }
    let r2 = if ss_tot == 0.0 { 1.0 } else { 1.0 - ss_res / ss_tot };
    (coef, r2)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn exact_line_and_quadratic() {
        let x: Vec<f64> = (0..20).map(|i| i as f64 * 0.3).collect();
        let y: Vec<f64> = x.iter().map(|v| 2.0 - 0.5 * v).collect();
        let f = linear_fit(&x, &y);
        assert!((f.slope + 0.5).abs() < 1e-13 && (f.intercept - 2.0).abs() < 1e-13 && f.r2 > 1.0 - 1e-12);
        let y: Vec<f64> = x.iter().map(|v| 1.0 + 0.25 * v - 3.0 * v * v).collect();
        let (c, r2) = poly_fit(&x, &y, 2);
        assert!((c[0] - 1.0).abs() < 1e-10 && (c[1] - 0.25).abs() < 1e-10 && (c[2] + 3.0).abs() < 1e-10);
        assert!(r2 > 1.0 - 1e-12);
    }
}
