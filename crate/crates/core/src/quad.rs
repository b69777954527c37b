//! Quadrature: Gauss–Legendre rules and adaptive Gauss–Kronrod (G7/K15).

use crate::specfun::SpecError;
use std::collections::BinaryHeap;

const XGK: [f64; 8] = [
    0.991_455_371_120_812_639_206_854_697_526_329,
    0.949_107_912_342_758_524_526_189_684_047_851,
    0.864_864_423_359_769_072_789_712_788_640_926,
    0.741_531_185_599_394_439_863_864_773_280_788,
    0.586_087_235_467_691_130_294_144_845_693_013,
    0.405_845_151_377_397_166_906_606_412_076_961,
    0.207_784_955_007_898_467_600_689_403_773_245,
    0.0,
];
const WGK: [f64; 8] = [
    0.022_935_322_010_529_224_963_732_008_058_970,
    0.063_092_092_629_978_553_290_700_663_189_204,
    0.104_790_010_322_250_183_839_876_322_541_518,
    0.140_653_259_715_525_918_745_189_590_510_238,
    0.169_004_726_639_267_902_826_583_426_598_550,
    0.190_350_578_064_785_409_913_256_402_421_014,
    0.204_432_940_075_298_892_414_161_999_234_649,
    0.209_482_141_084_727_828_012_999_174_891_714,
];
const WG: [f64; 4] = [
    0.129_484_966_168_869_693_270_611_432_679_082,
    0.279_705_391_489_276_667_901_467_771_423_780,
    0.381_830_050_505_118_944_950_369_775_488_975,
    0.417_959_183_673_469_387_755_102_040_816_327,
];

fn gk15<F: FnMut(f64) -> f64>(f: &mut F, a: f64, b: f64) -> (f64, f64) {
    let c = 0.5 * (a + b);
    let h = 0.5 * (b - a);
    let fc = f(c);
    let mut rk = fc * WGK[7];
    let mut rg = fc * WG[3];
    for j in 0..7 {
        let x = h * XGK[j];
        let s = f(c - x) + f(c + x);
        rk += WGK[j] * s;
        if j % 2 == 1 {
            rg += WG[j / 2] * s;
        }
    }
    (rk * h, ((rk - rg) * h).abs())
}

struct Seg {
    a: f64,
    b: f64,
    val: f64,
    err: f64,
}

impl PartialEq for Seg {
    fn eq(&self, o: &Self) -> bool {
        self.err == o.err
    }
}
impl Eq for Seg {}
impl PartialOrd for Seg {
    fn partial_cmp(&self, o: &Self) -> Option<std::cmp::Ordering> {
        Some(self.cmp(o))
    }
}
impl Ord for Seg {
    fn cmp(&self, o: &Self) -> std::cmp::Ordering {
        self.err.total_cmp(&o.err)
    }
}

/// Adaptive Gauss–Kronrod on [a, b] to relative tolerance `rel_tol`.
/// Returns (value, error estimate).
pub fn gauss_kronrod<F: FnMut(f64) -> f64>(f: F, a: f64, b: f64, rel_tol: f64) -> Result<(f64, f64), SpecError> {
    gauss_kronrod_tol(f, a, b, rel_tol, 0.0, 4000)
}

/// Adaptive Gauss–Kronrod with both relative and absolute targets.
pub fn gauss_kronrod_tol<F: FnMut(f64) -> f64>(
    mut f: F,
    a: f64,
    b: f64,
    rel_tol: f64,
    abs_tol: f64,
    max_segments: usize,
) -> Result<(f64, f64), SpecError> {
    if a == b {
        return Ok((0.0, 0.0));
    }
    let mut heap = BinaryHeap::new();
    let (v, e) = gk15(&mut f, a, b);
    heap.push(Seg { a, b, val: v, err: e });
    let mut total = v;
    let mut err = e;
    let mut n = 1;
    while err > abs_tol.max(rel_tol * total.abs()) {
        if n >= max_segments {
            return Err(SpecError::NoConvergence { terms: n, estimate: err });
        }
        let s = heap.pop().unwrap();
        let m = 0.5 * (s.a + s.b);
        if m <= s.a || m >= s.b {
            heap.push(s);
            break;
        }
        let (v1, e1) = gk15(&mut f, s.a, m);
        let (v2, e2) = gk15(&mut f, m, s.b);
        total += v1 + v2 - s.val;
        err += e1 + e2 - s.err;
        heap.push(Seg { a: s.a, b: m, val: v1, err: e1 });
        heap.push(Seg { a: m, b: s.b, val: v2, err: e2 });
        n += 1;
        if n % 64 == 0 {
            // resum to shed drift
            total = heap.iter().map(|s| s.val).sum();
            err = heap.iter().map(|s| s.err).sum();
        }
    }
    let total: f64 = heap.iter().map(|s| s.val).sum();
    let err: f64 = heap.iter().map(|s| s.err).sum();
    Ok((total, err))
}

/// ∫_a^∞ f via t = a + u/(1−u).
pub fn gauss_kronrod_inf<F: FnMut(f64) -> f64>(mut f: F, a: f64, rel_tol: f64) -> Result<(f64, f64), SpecError> {
    gauss_kronrod(
        |u| {
            if u >= 1.0 {
                return 0.0;
            }
            let w = 1.0 - u;
            let v = f(a + u / w);
            if v == 0.0 { 0.0 } else { v / (w * w) }
        },
        0.0,
        1.0,
        rel_tol,
    )
}

/// n-point Gauss–Legendre nodes and weights on [−1, 1].
pub fn gauss_legendre(n: usize) -> (Vec<f64>, Vec<f64>) {
    assert!(n >= 1);
    let mut x = vec![0.0; n];
    let mut w = vec![0.0; n];
    let m = (n + 1) / 2;
    for i in 0..m {
        let mut z = (std::f64::consts::PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        let mut dp = 0.0;
        for _ in 0..100 {
            let (mut p0, mut p1) = (1.0, z);
            if n == 1 {
                p1 = z;
                p0 = 1.0;
            } else {
                for k in 2..=n {
                    let p2 = ((2 * k - 1) as f64 * z * p1 - (k - 1) as f64 * p0) / k as f64;
                    p0 = p1;
                    p1 = p2;
                }
            }
            // p1 = P_n, p0 = P_{n−1}
            dp = n as f64 * (z * p1 - p0) / (z * z - 1.0);
            let dz = p1 / dp;
            z -= dz;
            if dz.abs() < 1e-16 {
                break;
            }
        }
        x[i] = -z;
        x[n - 1 - i] = z;
        w[i] = 2.0 / ((1.0 - z * z) * dp * dp);
        w[n - 1 - i] = w[i];
    }
    (x, w)
}

/// Gauss–Legendre rule mapped to [a, b].
pub fn gauss_legendre_on(n: usize, a: f64, b: f64) -> (Vec<f64>, Vec<f64>) {
    let (x, w) = gauss_legendre(n);
    let c = 0.5 * (a + b);
    let h = 0.5 * (b - a);
    (x.iter().map(|t| c + h * t).collect(), w.iter().map(|t| h * t).collect())
}
