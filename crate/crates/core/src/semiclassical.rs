//! Semi-classical dynamics to first order in g: the Volterra equation
//! G(t) = F(t) + γT* ∫₀ᵗ G(τ)F(t−τ) dτ with F(t) = (e^{−2γt}I₀(2γt))^d,
//! the correlator built from G, and the long-time regime checks.
//!
//! Here γ is the damping rate per unit of 𝔷+ω, `ModelParams::gamma()`.

use crate::fit::{linear_fit, LinearFit};
use crate::lattice::{bz_exp_integral, bz_integral, Kernel, Mode};
use crate::quad::gauss_legendre_on;
use crate::roots::brent;
use crate::specfun::{gamma as gamma_fn, hyp_pfq, SeriesControl};
use crate::{Error, ModelParams, Result};
use rustfft::num_complex::Complex;
use rustfft::FftPlanner;
use std::f64::consts::PI;

/// F(t) = ∫_B e^{−γtω}.
pub fn kernel_f(t: f64, gamma: f64, d: f64) -> f64 {
    bz_exp_integral(gamma * t, d)
}

/// T* = T/(1 − g/12T).
pub fn effective_temperature(t: f64, g: f64) -> Result<f64> {
    if !(t >= 0.0) || !(g >= 0.0) {
        return Err(Error::Domain(format!("need T ≥ 0 and g ≥ 0 (got {t}, {g})")));
    }
    if g == 0.0 {
        return Ok(t);
    }
    if !(g < 12.0 * t) {
        return Err(Error::Domain(format!("semi-classical expansion invalid: g = {g} ≥ 12T = {}", 12.0 * t)));
    }
    Ok(t / (1.0 - g / (12.0 * t)))
}

/// A₁ = ∫_B 1/ω, finite for d > 2.
pub fn a1(d: f64) -> Result<f64> {
    if !(d > 2.0) {
        return Err(Error::Domain(format!("A₁ diverges for d = {d} ≤ 2")));
    }
    bz_integral(&Kernel::PowShift { z: 0.0, n: 1.0 }, d)
}

/// T*_c = 1/A₁.
pub fn critical_teff(d: f64) -> Result<f64> {
    Ok(1.0 / a1(d)?)
}

/// Bath temperature T with T*(T, g) = T*_c, i.e. T = T*_c − g/12.
pub fn critical_temperature_sc(d: f64, g: f64) -> Result<f64> {
    Ok(critical_teff(d)? - g / 12.0)
}

#[derive(Debug, Clone)]
pub struct VolterraSolution {
    pub h: f64,
    pub t: Vec<f64>,
    pub g: Vec<f64>,
    pub f: Vec<f64>,
    pub teff: f64,
    pub gamma: f64,
    pub d: f64,
    /// Largest relative discrete residual over the checked nodes.
    pub residual: f64,
    /// |G_h − G_{h/2}|/G at t_max.
    pub halving_change: f64,
    pub warnings: Vec<String>,
}

impl VolterraSolution {
    /// G at arbitrary t ∈ [0, t_max], linear in ln G between nodes.
    pub fn g_at(&self, t: f64) -> f64 {
        let (i, w) = self.locate(t);
        if w == 0.0 {
            return self.g[i];
        }
        (self.g[i].ln() * (1.0 - w) + self.g[i + 1].ln() * w).exp()
    }

    /// Z(t) = ln G(t)/γ.
    pub fn big_z(&self, i: usize) -> f64 {
        self.g[i].ln() / self.gamma
    }

    fn locate(&self, t: f64) -> (usize, f64) {
        let n = self.t.len() - 1;
        let x = (t / self.h).clamp(0.0, n as f64);
        let i = (x.floor() as usize).min(n);
        if i == n {
            return (n, 0.0);
        }
        (i, x - i as f64)
    }
}

const DIRECT_BLOCK: usize = 64;

/// Product-trapezoid weights for ∫₀^{t_n} G(τ)F(t_n−τ)dτ with G piecewise
/// linear: α_k = ∫ F(s)((k+1)h − s)/h and β_k = ∫ F(s)(s − kh)/h over
/// [kh, (k+1)h]. The quadrature is Σ_j K_{n−j}G_j − α_nG₀ with K₀ = α₀,
/// K_l = α_l + β_{l−1}.
#[derive(Debug, Clone)]
pub struct ProductWeights {
    pub h: f64,
    pub kernel: Vec<f64>,
    pub alpha: Vec<f64>,
}

impl ProductWeights {
    /// Weights for n nodes, by 8-point Gauss–Legendre per interval.
    pub fn new<F: Fn(f64) -> f64>(f: F, h: f64, n: usize) -> Self {
        let (x, w) = gauss_legendre_on(8, 0.0, 1.0);
        let mut alpha = vec![0.0; n];
        let mut beta = vec![0.0; n];
        for k in 0..n {
            let (mut a, mut b) = (0.0, 0.0);
            for (u, wu) in x.iter().zip(&w) {
                let v = f((k as f64 + u) * h) * wu;
                a += v * (1.0 - u);
                b += v * u;
            }
            alpha[k] = a * h;
            beta[k] = b * h;
        }
        let kernel = (0..n).map(|l| if l == 0 { alpha[0] } else { alpha[l] + beta[l - 1] }).collect();
        ProductWeights { h, kernel, alpha }
    }
}

/// Marches G = F + c∫G(τ)F(t−τ)dτ with product-trapezoid weights; the
/// history sums are accumulated by divide-and-conquer FFT convolutions
/// (O(N log²N)).
pub fn volterra_march(c: f64, f: &[f64], w: &ProductWeights) -> Vec<f64> {
    let n = f.len();
    assert!(w.kernel.len() >= n);
    let mut g = vec![0.0; n];
    if n == 0 {
        return g;
    }
    let mut s = vec![0.0; n];
    g[0] = f[0];
    let mut planner = FftPlanner::<f64>::new();
    let mut m = March { c, f, w, g: &mut g, s: &mut s, denom: 1.0 - c * w.kernel[0], planner: &mut planner };
    m.block(0, n);
    g
}

struct March<'a> {
    c: f64,
    f: &'a [f64],
    w: &'a ProductWeights,
    g: &'a mut [f64],
    s: &'a mut [f64],
    denom: f64,
    planner: &'a mut FftPlanner<f64>,
}

impl March<'_> {
    fn block(&mut self, lo: usize, hi: usize) {
        let k = &self.w.kernel;
        if hi - lo <= DIRECT_BLOCK {
            for m in lo.max(1)..hi {
                let mut acc = self.s[m];
                for j in lo..m {
                    acc += self.g[j] * k[m - j];
                }
                self.s[m] = acc;
                self.g[m] = (self.f[m] + self.c * (acc - self.w.alpha[m] * self.g[0])) / self.denom;
            }
            return;
        }
        let mid = (lo + hi) / 2;
        self.block(lo, mid);
        let la = mid - lo;
        let lb = hi - lo;
        let size = (la + lb - 1).next_power_of_two();
        let mut a: Vec<Complex<f64>> = (0..size).map(|i| Complex::new(if i < la { self.g[lo + i] } else { 0.0 }, 0.0)).collect();
        let mut b: Vec<Complex<f64>> = (0..size).map(|i| Complex::new(if i < lb { k[i] } else { 0.0 }, 0.0)).collect();
        let fwd = self.planner.plan_fft_forward(size);
        let inv = self.planner.plan_fft_inverse(size);
        fwd.process(&mut a);
        fwd.process(&mut b);
        for (x, y) in a.iter_mut().zip(&b) {
            *x *= y;
        }
        inv.process(&mut a);
        let norm = 1.0 / size as f64;
        for m in mid..hi {
            self.s[m] += a[m - lo].re * norm;
        }
        self.block(mid, hi);
    }
}

/// Relative residual of the discrete equation at node m, summed directly.
pub fn discrete_residual(c: f64, f: &[f64], w: &ProductWeights, g: &[f64], m: usize) -> f64 {
    if m == 0 {
        return (g[0] - f[0]).abs() / g[0].abs();
    }
    let k = &w.kernel;
    let mut conv = -w.alpha[m] * g[0];
    let mut comp = 0.0;
    for j in 0..=m {
        let y = g[j] * k[m - j] - comp;
        let t = conv + y;
        comp = (t - conv) - y;
        conv = t;
    }
    (g[m] - f[m] - c * conv).abs() / g[m].abs()
}

fn march_run(p: &ModelParams, n: usize, h: f64, c: f64) -> (Vec<f64>, ProductWeights, Vec<f64>) {
    let gamma = p.gamma();
    let f: Vec<f64> = (0..n).map(|i| kernel_f(i as f64 * h, gamma, p.d)).collect();
    let w = ProductWeights::new(|t| kernel_f(t, gamma, p.d), h, n);
    let g = volterra_march(c, &f, &w);
    (f, w, g)
}

/// Solves the Volterra equation on [0, t_max] with step h, checks the
/// discrete residual at up to 64 nodes and compares G(t_max) against a run
/// at h/2.
pub fn solve_volterra(p: &ModelParams, t_max: f64, h: f64) -> Result<VolterraSolution> {
    if !(h > 0.0) || !(t_max > 0.0) || !(t_max / h <= 1e7) {
        return Err(Error::Domain(format!("need h > 0, t_max > 0, t_max/h ≤ 1e7 (got h = {h}, t_max = {t_max})")));
    }
    if !(p.d > 0.0) {
        return Err(Error::Domain(format!("dimension d = {} must be positive", p.d)));
    }
    let teff = effective_temperature(p.temperature, p.g)?;
    let gamma = p.gamma();
    if !(gamma > 0.0) {
        return Err(Error::Domain(format!("damping γ = {gamma} must be positive")));
    }
    let n = (t_max / h).round() as usize + 1;
    let c = gamma * teff;
    let (f, w, g) = march_run(p, n, h, c);
    let mut warnings = Vec::new();
    if let Some(i) = g.iter().position(|v| !(v.is_finite() && *v > 0.0)) {
        return Err(Error::NoConvergence(format!("G lost positivity or overflowed at t = {}", i as f64 * h)));
    }
    let stride = (n / 64).max(1);
    let mut residual = 0.0f64;
    for m in (0..n).step_by(stride).chain(std::iter::once(n - 1)) {
        residual = residual.max(discrete_residual(c, &f, &w, &g, m));
    }
    if residual > 1e-8 {
        warnings.push(format!("discrete residual {residual:e} exceeds 1e-8"));
    }
    let (_, _, g2) = march_run(p, 2 * n - 1, 0.5 * h, c);
    let halving_change = (g[n - 1] - g2[2 * n - 2]).abs() / g[n - 1];
    if halving_change > 1e-4 {
        warnings.push(format!("step halving changes G(t_max) by {halving_change:e} > 1e-4"));
    }
    let t = (0..n).map(|i| i as f64 * h).collect();
    Ok(VolterraSolution { h, t, g, f, teff, gamma, d: p.d, residual, halving_change, warnings })
}

/// (∫₀¹e^{−au}(1−u)du, ∫₀¹e^{−au}u du).
fn exp_hat_weights(a: f64) -> (f64, f64) {
    if a.abs() < 1e-3 {
        let a2 = a * a;
        return (0.5 - a / 6.0 + a2 / 24.0 - a2 * a / 120.0, 0.5 - a / 3.0 + a2 / 8.0 - a2 * a / 30.0);
    }
    let e = (-a).exp();
    ((a - 1.0 + e) / (a * a), (1.0 - (1.0 + a) * e) / (a * a))
}

fn q_at_node(omega: f64, m: usize, sol: &VolterraSolution, p: &ModelParams) -> f64 {
    let gam = sol.gamma;
    let h = sol.h;
    let e = (-gam * m as f64 * h * omega).exp();
    let gm = sol.g[m];
    let hard = if p.g == 0.0 { 0.0 } else { p.g / (12.0 * p.temperature) };
    let a = gam * h * omega;
    let (wa, wb) = exp_hat_weights(a);
    let decay = (-a).exp();
    // Σ_k e^{−ka}(wa G_{m−k} + wb G_{m−k−1}), k = 0..m−1
    let mut conv = 0.0;
    let mut ek = 1.0;
    for k in 0..m {
        conv += ek * (wa * sol.g[m - k] + wb * sol.g[m - k - 1]);
        ek *= decay;
        if ek == 0.0 {
            break;
        }
    }
    conv *= h;
    e / gm + hard * (1.0 - e / gm) + gam * p.temperature * conv / gm
}

/// Q(ω, t) = e^{−γtω}/G + (g/12T)(1 − e^{−γtω}/G) + (γT/G)∫₀ᵗ G(τ)e^{−γ(t−τ)ω} dτ,
/// with the integral by the same product-trapezoid rule as the march; off-grid
/// times interpolate linearly between neighbouring nodes.
pub fn q_correlator_sc_omega(omega: f64, t: f64, sol: &VolterraSolution, p: &ModelParams) -> f64 {
    let (i, w) = sol.locate(t);
    let q0 = q_at_node(omega, i, sol, p);
    if w == 0.0 {
        return q0;
    }
    (1.0 - w) * q0 + w * q_at_node(omega, i + 1, sol, p)
}

pub fn q_correlator_sc(mode: &Mode, t: f64, sol: &VolterraSolution, p: &ModelParams) -> f64 {
    q_correlator_sc_omega(mode.omega, t, sol, p)
}

fn universal_coefficient(d: f64) -> Result<f64> {
    Ok(gamma_fn(1.0 - 0.5 * d)?.abs() * (4.0 * PI).powf(-0.5 * d))
}

/// Relaxation time above T*_c from its near-critical form,
/// γτ_eq ≃ [T*_c²/(T* − T*_c) · |Γ(1−d/2)|/(4π)^{d/2}]^{2/(d−2)} (2 < d < 4).
pub fn t_eq_near_critical(d: f64, teff: f64, gamma: f64) -> Result<f64> {
    if !(d > 2.0 && d < 4.0) {
        return Err(Error::Domain(format!("near-critical relaxation time needs 2 < d < 4 (got {d})")));
    }
    let tc = critical_teff(d)?;
    if !(teff > tc) {
        return Err(Error::Domain(format!("T* = {teff} is not above T*_c = {tc}")));
    }
    Ok((tc * tc / (teff - tc) * universal_coefficient(d)?).powf(2.0 / (d - 2.0)) / gamma)
}

/// Relaxation time from the exact pole of the Laplace-transformed equation,
/// T*∫_B 1/(ω + 1/(γτ)) = 1.
pub fn t_eq_pole(d: f64, teff: f64, gamma: f64) -> Result<f64> {
    let f = |u: f64| -> Result<f64> { Ok(teff * bz_integral(&Kernel::PowShift { z: u.exp(), n: 1.0 }, d)? - 1.0) };
    let mut lo = -1.0;
    while f(lo)? < 0.0 {
        lo -= 2.0;
        if lo < -200.0 {
            return Err(Error::Domain(format!("no relaxation pole for T* = {teff} (ordered regime)")));
        }
    }
    let mut hi = 1.0;
    while f(hi)? > 0.0 {
        hi += 2.0;
    }
    let (u, _) = brent(f, lo, hi, 1e-14, 300)?;
    Ok(1.0 / (gamma * u.exp()))
}

/// t_eq from the semi-log slope of G over the last decade of the run.
pub fn measure_t_eq(sol: &VolterraSolution) -> LinearFit {
    let tmax = *sol.t.last().unwrap();
    let (x, y): (Vec<f64>, Vec<f64>) = sol.t.iter().zip(&sol.g).filter(|(t, _)| **t >= 0.1 * tmax).map(|(t, g)| (*t, g.ln())).unzip();
    linear_fit(&x, &y)
}

/// G(t)m⁴(4πγt)^{d/2} with m² = 1 − T*/T*_c; tends to 1 below T*_c.
pub fn ordered_amplitude(sol: &VolterraSolution, t: f64) -> Result<f64> {
    let m2 = 1.0 - sol.teff / critical_teff(sol.d)?;
    Ok(sol.g_at(t) * m2 * m2 * (4.0 * PI * sol.gamma * t).powf(0.5 * sol.d))
}

/// Critical-quench scaling form g/12T_c + (2γT_c/(d−2)) t ₁F₁(1; d/2; −γωt), 2 < d < 4.
pub fn q_critical_form(omega: f64, t: f64, p: &ModelParams) -> Result<f64> {
    let d = p.d;
    if !(d > 2.0 && d < 4.0) {
        return Err(Error::Domain(format!("critical form needs 2 < d < 4 (got {d})")));
    }
    let gam = p.gamma();
    let hard = if p.g == 0.0 { 0.0 } else { p.g / (12.0 * p.temperature) };
    let m = hyp_pfq(&[1.0], &[0.5 * d], -gam * omega * t, &SeriesControl::default())?.to_f64();
    Ok(hard + 2.0 * gam * p.temperature / (d - 2.0) * t * m)
}

#[derive(Debug, Clone)]
pub struct PlateauReport {
    /// Fitted dZ/d ln t over the window.
    pub slope: f64,
    /// ϝ/2 with ϝ = −d/2 below T*_c, −(4−d)/2 at T*_c (d < 4), 0 at T*_c (d > 4).
    pub predicted: f64,
    pub fit: LinearFit,
    pub window: (f64, f64),
    /// Largest deviation of (Q − g/12T)/((1 − g/12T)m²(4πγt)^{d/2}) from e^{−γωt}
    /// over γωt ∈ [0, 2] at the end of the window; None at criticality.
    pub collapse_error: Option<f64>,
    pub warnings: Vec<String>,
}

/// Fits Z = ln G/γ against ln t over the last decade of a run at or below
/// T*_c and compares with the classical slopes.
pub fn classical_plateau_check(sol: &VolterraSolution, p: &ModelParams) -> Result<PlateauReport> {
    let d = sol.d;
    let tc = critical_teff(d)?;
    let rel = (sol.teff - tc) / tc;
    if rel > 1e-9 {
        return Err(Error::Domain(format!("T* = {} above T*_c = {tc}: no plateau regime", sol.teff)));
    }
    let critical = rel.abs() <= 1e-9;
    let predicted = if critical {
        if d < 4.0 {
            -0.25 * (4.0 - d)
        } else {
            0.0
        }
    } else {
        -0.25 * d
    };
    let tmax = *sol.t.last().unwrap();
    let window = (0.1 * tmax, tmax);
    let (x, y): (Vec<f64>, Vec<f64>) = sol
        .t
        .iter()
        .enumerate()
        .filter(|(_, t)| **t >= window.0 && **t > 0.0)
        .map(|(i, t)| (t.ln(), sol.big_z(i)))
        .unzip();
    let mut warnings = Vec::new();
    if x.len() < 20 || sol.gamma * window.0 < 10.0 {
        warnings.push(format!("fit window [{:e}, {:e}] too short for asymptotics", window.0, window.1));
    }
    let fit = linear_fit(&x, &y);
    let collapse_error = if critical {
        None
    } else {
        let hard = if p.g == 0.0 { 0.0 } else { p.g / (12.0 * p.temperature) };
        let m2 = 1.0 - sol.teff / tc;
        let amp = (1.0 - hard) * m2 * (4.0 * PI * sol.gamma * tmax).powf(0.5 * d);
        let mut worst = 0.0f64;
        for u in [0.0, 0.5, 1.0, 2.0] {
            let omega = u / (sol.gamma * tmax);
            let q = q_correlator_sc_omega(omega, tmax, sol, p);
            worst = worst.max(((q - hard) / amp - (-u).exp()).abs());
        }
        Some(worst)
    };
    Ok(PlateauReport { slope: fit.slope, predicted, fit, window, collapse_error, warnings })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lattice::bz_tensor_quadrature;
    use crate::lattice::dispersion;
    use crate::quad::{gauss_kronrod, gauss_legendre_on};

    fn params(d: f64, g: f64, t: f64, gamma: f64) -> ModelParams {
        ModelParams { d, g, temperature: t, lambda: 1.0, gamma0: 2.0 * gamma, ..ModelParams::default() }
    }

    #[test]
    fn kernel_values() {
        assert_eq!(kernel_f(0.0, 1.3, 2.5), 1.0);
        let t = 2.0e4;
        let asym = (4.0 * PI * t).powf(-1.5);
        assert!((kernel_f(t, 1.0, 3.0) / asym - 1.0).abs() < 1e-4);
        // d=3, γ=1, t=2 against the product of one-dimensional angular integrals
        let (one, _) = gauss_kronrod(|k: f64| (-2.0 * 2.0 * (1.0 - k.cos())).exp(), 0.0, PI, 1e-14).unwrap();
        let one = one / PI;
        assert!((kernel_f(2.0, 1.0, 3.0) - one.powi(3)).abs() < 1e-14);
    }

    #[test]
    fn effective_temperature_cases() {
        assert_eq!(effective_temperature(0.7, 0.0).unwrap(), 0.7);
        assert!((effective_temperature(1.0, 1.2).unwrap() - 1.0 / 0.9).abs() < 1e-15);
        assert!(effective_temperature(0.09, 1.2).is_err());
    }

    #[test]
    fn march_matches_direct_solution() {
        // direct O(N²) march as an independent implementation
        let (c, h) = (0.9, 0.05);
        let f: Vec<f64> = (0..700).map(|i| kernel_f(i as f64 * h, 1.0, 2.5)).collect();
        let w = ProductWeights::new(|t| kernel_f(t, 1.0, 2.5), h, 700);
        let g = volterra_march(c, &f, &w);
        let mut gd = vec![f[0]];
        for m in 1..f.len() {
            let mut acc = w.kernel[m] * gd[0] - w.alpha[m] * gd[0];
            for j in 1..m {
                acc += gd[j] * w.kernel[m - j];
            }
            gd.push((f[m] + c * acc) / (1.0 - c * w.kernel[0]));
        }
        for m in 0..f.len() {
            assert!((g[m] / gd[m] - 1.0).abs() < 1e-12, "{m}");
        }
    }

    #[test]
    fn exponential_kernel_closed_form() {
        // F = e^{−t}, c = 1/2: G' = −G/2 with G(0)=1 ⇒ G = e^{−t/2}
        let h = 1e-3;
        let f: Vec<f64> = (0..5001).map(|i| (-(i as f64) * h).exp()).collect();
        let w = ProductWeights::new(|t| (-t).exp(), h, 5001);
        let g = volterra_march(0.5, &f, &w);
        for m in (0..5001).step_by(500) {
            let t = m as f64 * h;
            assert!((g[m] - (-0.5 * t).exp()).abs() < 1e-7);
        }
    }

    #[test]
    fn zero_temperature_is_kernel() {
        let p = params(3.0, 0.0, 0.0, 1.0);
        let sol = solve_volterra(&p, 50.0, 0.05).unwrap();
        for (g, f) in sol.g.iter().zip(&sol.f) {
            assert_eq!(g, f);
        }
    }

    #[test]
    fn second_order_in_step() {
        let p = params(3.0, 0.3, 3.0, 1.0);
        let tm = 10.0;
        let g = |h: f64| *solve_volterra(&p, tm, h).unwrap().g.last().unwrap();
        let (a, b, c) = (g(0.2), g(0.1), g(0.05));
        let order = ((a - b) / (b - c)).log2();
        assert!((1.9..=2.1).contains(&order), "{order}");
    }

    #[test]
    fn residual_and_positivity() {
        let tc = critical_teff(3.0).unwrap();
        for t in [0.5 * tc, tc, 1.3 * tc] {
            let sol = solve_volterra(&params(3.0, 0.0, t, 1.0), 400.0, 0.01).unwrap();
            assert!(sol.residual < 1e-8, "{}", sol.residual);
            assert!(sol.g.iter().all(|g| *g > 0.0));
            assert!(sol.f.windows(2).all(|w| w[1] < w[0]));
            if t <= tc {
                assert!(sol.warnings.is_empty(), "{:?}", sol.warnings);
            }
        }
    }

    #[test]
    fn sum_rule() {
        let p = params(3.0, 0.4, 4.5, 1.0);
        let sol = solve_volterra(&p, 20.0, 0.01).unwrap();
        for i in 1..=20 {
            let t = i as f64;
            let s = bz_tensor_quadrature(|k| q_correlator_sc_omega(dispersion(k), t, &sol, &p), 3, 8, 4);
            assert!((s - 1.0).abs() < 1e-4, "t = {t}: {s}");
        }
        assert_eq!(q_correlator_sc_omega(1.3, 0.0, &sol, &p), 1.0);
    }

    #[test]
    fn classical_limit_of_correlator() {
        // g → 0 reproduces the classical correlator e^{−γtω}/G + γT/G ∫ G e^{−γ(t−τ)ω}
        let p0 = params(3.0, 0.0, 2.0, 1.0);
        let sol = solve_volterra(&p0, 5.0, 0.01).unwrap();
        let omega = 0.7;
        let t = 5.0;
        let n = sol.g.len() - 1;
        // G linear between nodes, each panel integrated by 20-point Gauss–Legendre
        let (x, w) = gauss_legendre_on(20, 0.0, 1.0);
        let mut conv = 0.0;
        for j in 0..n {
            for (u, wu) in x.iter().zip(&w) {
                let tau = sol.t[j] + u * 0.01;
                conv += wu * 0.01 * (sol.g[j] * (1.0 - u) + sol.g[j + 1] * u) * (-(t - tau) * omega).exp();
            }
        }
        let classical = (-(t * omega)).exp() / sol.g[n] + 2.0 * conv / sol.g[n];
        let mut p = p0;
        p.g = 1e-12;
        assert!((q_correlator_sc_omega(omega, t, &sol, &p) - classical).abs() < 1e-10);
    }

    #[test]
    fn relaxation_pole_is_equilibrium_gap() {
        // the pole condition is the classical equilibrium constraint at T*
        let tc = critical_teff(3.0).unwrap();
        let te = t_eq_pole(3.0, 1.5 * tc, 1.0).unwrap();
        let v = 1.5 * tc * bz_integral(&Kernel::PowShift { z: 1.0 / te, n: 1.0 }, 3.0).unwrap();
        assert!((v - 1.0).abs() < 1e-12);
        assert!(t_eq_pole(3.0, 0.9 * tc, 1.0).is_err());
    }

    #[test]
    fn measured_relaxation_time_is_pole() {
        let tc = critical_teff(3.0).unwrap();
        let te = t_eq_pole(3.0, 1.5 * tc, 1.0).unwrap();
        let sol = solve_volterra(&params(3.0, 0.0, 1.5 * tc, 1.0), 20.0 * te, te / 500.0).unwrap();
        let fit = measure_t_eq(&sol);
        assert!((1.0 / fit.slope / te - 1.0).abs() < 1e-3, "{} vs {te}", 1.0 / fit.slope);
    }

    #[test]
    fn critical_correlator_form() {
        let tc = critical_teff(3.0).unwrap();
        let p = params(3.0, 0.0, tc, 1.0);
        let sol = solve_volterra(&p, 4000.0, 0.05).unwrap();
        let t = 4000.0;
        for u in [0.5, 1.0, 3.0] {
            let omega = u / t;
            let q = q_correlator_sc_omega(omega, t, &sol, &p);
            let form = q_critical_form(omega, t, &p).unwrap();
            assert!((q / form - 1.0).abs() < 0.01, "u = {u}: {q} vs {form}");
        }
    }

    #[test]
    fn plateau_slope_at_zero_temperature() {
        let p = params(3.0, 0.0, 0.0, 2.0);
        let sol = solve_volterra(&p, 2000.0, 0.05).unwrap();
        let r = classical_plateau_check(&sol, &p).unwrap();
        assert_eq!(r.predicted, -0.75);
        assert!((r.slope / r.predicted - 1.0).abs() < 0.05, "{}", r.slope);
    }
}
