//! Equilibrium spherical constraint, its solution for the spherical
//! parameter, and the critical lines g_c(d, λ) and T_c(d, g).
//!
//! For general anisotropy λ the gap variable is 𝔷 = 2(S − S_c) with
//! S_c = (1+|λ|)d/2, which reduces to 𝔷 = 2(S − d) at λ = ±1.

use crate::lattice::{bz_integral, lambda_pm_omega, Kernel, Mode};
use crate::roots::brent;
use crate::{Correlators, Error, ModelParams, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Phase {
    Paramagnetic,
    Critical,
    Ferromagnetic,
}

impl Phase {
    pub fn as_str(&self) -> &'static str {
        match self {
            Phase::Paramagnetic => "paramagnetic",
            Phase::Critical => "critical",
            Phase::Ferromagnetic => "ferromagnetic",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EquilibriumSolution {
    pub z: f64,
    pub residual: f64,
    pub phase: Phase,
    pub iterations: usize,
    /// 1 − constraint_lhs(0) in the ordered phase, else 0.
    pub condensate: f64,
}

/// Stability bound S_c = (1+|λ|)d/2.
pub fn s_critical(d: f64, lambda: f64) -> f64 {
    0.5 * (1.0 + lambda.abs()) * d
}

/// Spherical parameter S for gap variable 𝔷.
pub fn s_of_z(z: f64, d: f64, lambda: f64) -> f64 {
    s_critical(d, lambda) + 0.5 * z
}

fn check(p: &ModelParams) -> Result<()> {
    if !(p.d > 0.0) || !(p.g >= 0.0) || !(p.temperature >= 0.0) || !(p.lambda.abs() <= 1.0) {
        return Err(Error::Domain(format!("invalid parameters {p:?}")));
    }
    if p.g == 0.0 && p.temperature == 0.0 {
        return Err(Error::Domain("g = 0 and T = 0 together leave the constraint undefined".into()));
    }
    Ok(())
}

/// Left-hand side of the equilibrium constraint,
/// √(g/8S) ∫ (Λ₋/Λ₊) coth(E/2T), as a function of 𝔷 ≥ 0.
pub fn constraint_lhs(z: f64, p: &ModelParams) -> Result<f64> {
    check(p)?;
    if !(z >= 0.0) {
        return Err(Error::Domain(format!("𝔷 = {z} must be non-negative")));
    }
    let (d, g, t) = (p.d, p.g, p.temperature);
    if p.lambda == 1.0 {
        if g == 0.0 {
            return Ok(t * bz_integral(&Kernel::PowShift { z, n: 1.0 }, d)?);
        }
        let k = if t == 0.0 {
            Kernel::PowShift { z, n: 0.5 }
        } else {
            Kernel::CothSqrt { z, g, temperature: t }
        };
        return Ok(0.5 * g.sqrt() * bz_integral(&k, d)?);
    }
    let lam = p.lambda;
    let s = s_of_z(z, d, lam);
    let (bp, bm) = (0.25 * (1.0 + lam), 0.25 * (1.0 - lam));
    let (ap, am) = (s - 2.0 * d * bp, s - 2.0 * d * bm);
    if g == 0.0 {
        // coth(E/2T) → 2T/E: T ∫ 1/(2Λ₊²)
        if bp == 0.0 {
            return Ok(t / (2.0 * ap));
        }
        return Ok(t / (2.0 * bp) * bz_integral(&Kernel::PowShift { z: ap / bp, n: 1.0 }, d)?);
    }
    let pref = (g / (8.0 * s)).sqrt();
    if t == 0.0 {
        return Ok(pref * bz_integral(&Kernel::RatioSqrt { c0: am, c1: bm, e0: ap, e1: bp }, d)?);
    }
    let e_scale = (2.0 * g / s).sqrt();
    let h = move |w: f64| {
        let np = (ap + bp * w).max(0.0);
        let nm = (am + bm * w).max(0.0);
        let e = e_scale * (np * nm).sqrt();
        (nm / np).sqrt() / (e / (2.0 * t)).tanh()
    };
    Ok(pref * bz_integral(&Kernel::Custom(Box::new(h)), d)?)
}

fn lhs_at_zero(p: &ModelParams) -> Result<f64> {
    match constraint_lhs(0.0, p) {
        Err(Error::Divergent(_)) => Ok(f64::INFINITY),
        other => other,
    }
}

/// Solves constraint_lhs(𝔷) = 1.
pub fn solve_z(p: &ModelParams) -> Result<EquilibriumSolution> {
    let l0 = lhs_at_zero(p)?;
    if (l0 - 1.0).abs() <= 1e-10 {
        return Ok(EquilibriumSolution { z: 0.0, residual: l0 - 1.0, phase: Phase::Critical, iterations: 0, condensate: 0.0 });
    }
    if l0 < 1.0 {
        return Ok(EquilibriumSolution { z: 0.0, residual: 0.0, phase: Phase::Ferromagnetic, iterations: 0, condensate: 1.0 - l0 });
    }
    // large-𝔷 asymptotes: T/𝔷 classically, √g/(2√𝔷) quantum
    let mut hi = (2.0 * p.temperature).max(0.5 * p.g).max(1.0);
    let mut n = 0;
    while constraint_lhs(hi, p)? >= 1.0 {
        hi *= 2.0;
        n += 1;
        if n > 200 {
            return Err(Error::NoConvergence(format!("could not bracket 𝔷 (lhs({hi:e}) >= 1)")));
        }
    }
    let mut lo = 0.5 * hi;
    while lo > 1e-300 && constraint_lhs(lo, p)? < 1.0 {
        lo *= 0.5;
    }
    let (u, it) = brent(|u: f64| Ok(constraint_lhs(u.exp(), p)? - 1.0), lo.ln(), hi.ln(), 1e-14, 300)?;
    let z = u.exp();
    let residual = constraint_lhs(z, p)? - 1.0;
    if residual.abs() > 1e-10 {
        return Err(Error::NoConvergence(format!("𝔷 = {z:e} leaves residual {residual:e}")));
    }
    Ok(EquilibriumSolution { z, residual, phase: Phase::Paramagnetic, iterations: it, condensate: 0.0 })
}

/// Zero-temperature critical coupling g_c = 8S_c/(∫Λ₋/Λ₊)² at S = S_c.
pub fn critical_coupling(d: f64, lambda: f64) -> Result<f64> {
    if !(d > 1.0) {
        return Err(Error::Domain(format!("no quantum phase transition for d = {d} <= 1")));
    }
    if !(lambda.abs() <= 1.0) {
        return Err(Error::Domain(format!("λ = {lambda} outside [−1, 1]")));
    }
    let integral = if lambda == 1.0 {
        // Λ₋/Λ₊ = √(2d/ω)
        (2.0 * d).sqrt() * bz_integral(&Kernel::PowShift { z: 0.0, n: 0.5 }, d)?
    } else {
        let s = s_critical(d, lambda);
        let (bp, bm) = (0.25 * (1.0 + lambda), 0.25 * (1.0 - lambda));
        let (ap, am) = ((s - 2.0 * d * bp).max(0.0), (s - 2.0 * d * bm).max(0.0));
        bz_integral(&Kernel::RatioSqrt { c0: am, c1: bm, e0: ap, e1: bp }, d)?
    };
    Ok(8.0 * s_critical(d, lambda) / (integral * integral))
}

/// Critical temperature T_c(d, g) at λ = 1; zero when there is no
/// finite-temperature transition (d ≤ 2 or g ≥ g_c).
pub fn critical_temperature(d: f64, g: f64) -> Result<f64> {
    if !(g >= 0.0) {
        return Err(Error::Domain(format!("g = {g} must be non-negative")));
    }
    if d <= 2.0 {
        return Ok(0.0);
    }
    let a1 = bz_integral(&Kernel::PowShift { z: 0.0, n: 1.0 }, d)?;
    let tc0 = 1.0 / a1;
    if g == 0.0 {
        return Ok(tc0);
    }
    if g >= critical_coupling(d, 1.0)? {
        return Ok(0.0);
    }
    let f = |t: f64| -> Result<f64> {
        let p = ModelParams { d, g, temperature: t, lambda: 1.0, ..ModelParams::default() };
        Ok(constraint_lhs(0.0, &p)? - 1.0)
    };
    let hi = tc0 * 1.001;
    let mut lo = 0.5 * tc0;
    while f(lo)? > 0.0 {
        lo *= 0.5;
        if lo < 1e-8 * tc0 {
            return Ok(0.0);
        }
    }
    Ok(brent(f, lo, hi, 1e-14 * tc0, 200)?.0)
}

/// Stationary correlators Q = ¼√(2g/S)(Λ₋/Λ₊)(2n̄+1), Π = √(S/2g)(Λ₊/Λ₋)(2n̄+1), Ξ = 0.
pub fn stationary_correlators_omega(omega: f64, d: f64, p: &ModelParams, s: f64) -> Result<Correlators> {
    if !(p.g > 0.0) {
        return Err(Error::Domain("stationary correlators need g > 0".into()));
    }
    let (lp, lm) = lambda_pm_omega(omega, d, s, p.lambda)?;
    let e = (2.0 * p.g / s).sqrt() * lp * lm;
    let occ = if p.temperature == 0.0 { 1.0 } else { 1.0 / (e / (2.0 * p.temperature)).tanh() };
    Ok(Correlators {
        q: 0.25 * (2.0 * p.g / s).sqrt() * lm / lp * occ,
        pi: (s / (2.0 * p.g)).sqrt() * lp / lm * occ,
        xi: 0.0,
    })
}

pub fn stationary_correlators(mode: &Mode, p: &ModelParams, s: f64) -> Result<Correlators> {
    stationary_correlators_omega(mode.omega, mode.dim(), p, s)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lattice::{bz_exp_integral, bz_omega_exp_integral, bz_tensor_quadrature, dispersion};
    use crate::quad::gauss_kronrod_tol;
    use proptest::prelude::*;

    fn params(d: f64, g: f64, t: f64, lambda: f64) -> ModelParams {
        ModelParams { d, g, temperature: t, lambda, ..ModelParams::default() }
    }

    #[test]
    fn zero_temperature_reduction() {
        let p = params(3.0, 0.7, 0.0, 1.0);
        let a = constraint_lhs(0.3, &p).unwrap();
        let b = (0.7f64 / 4.0).sqrt() * bz_integral(&Kernel::PowShift { z: 0.3, n: 0.5 }, 3.0).unwrap();
        assert!((a - b).abs() < 1e-14);
    }

    #[test]
    fn semiclassical_expansion() {
        let (t, z) = (2.0, 0.4);
        let classical = t * bz_integral(&Kernel::PowShift { z, n: 1.0 }, 3.0).unwrap();
        let mut prev = f64::INFINITY;
        for g in [0.04, 0.02, 0.01] {
            let l = constraint_lhs(z, &params(3.0, g, t, 1.0)).unwrap();
            let r = (l - classical - g / (12.0 * t)).abs();
            // remainder is O(g²)
            assert!(r < 0.3 * g * g + 1e-12, "g={g}: {r}");
            assert!(r < prev);
            prev = r;
        }
    }

    // √(N/D) = N ∫∫ (π² s u)^{−½} e^{−sD − uN} ds du, zone-averaged with F and −F'.
    fn ratio_oracle(c0: f64, c1: f64, e0: f64, e1: f64, d: f64) -> f64 {
        let inner = |s: f64| {
            // u = v², s-fixed
            gauss_kronrod_tol(
                |v: f64| {
                    if v >= 1.0 {
                        return 0.0;
                    }
                    let x = v / (1.0 - v);
                    let u = x * x;
                    let arg = s * e1 + u * c1;
                    let w = 2.0 * (-s * e0 - u * c0).exp() / std::f64::consts::PI;
                    w * (c0 * bz_exp_integral(arg, d) + c1 * bz_omega_exp_integral(arg, d)) / ((1.0 - v) * (1.0 - v))
                },
                0.0,
                1.0,
                1e-12,
                0.0,
                4000,
            )
            .unwrap()
            .0
        };
        gauss_kronrod_tol(
            |v: f64| {
                if v >= 1.0 {
                    return 0.0;
                }
                let x = v / (1.0 - v);
                2.0 * inner(x * x) / ((1.0 - v) * (1.0 - v))
            },
            0.0,
            1.0,
            1e-11,
            0.0,
            4000,
        )
        .unwrap()
        .0
    }

    #[test]
    fn anisotropic_zero_temperature_against_double_integral() {
        let (d, lam, z, g) = (1.5, 0.3, 0.4, 0.9);
        let p = params(d, g, 0.0, lam);
        let s = s_of_z(z, d, lam);
        let (bp, bm) = (0.25 * (1.0 + lam), 0.25 * (1.0 - lam));
        let (ap, am) = (s - 2.0 * d * bp, s - 2.0 * d * bm);
        let oracle = (g / (8.0 * s)).sqrt() * ratio_oracle(am, bm, ap, bp, d);
        let v = constraint_lhs(z, &p).unwrap();
        assert!(((v - oracle) / oracle).abs() < 1e-8, "{v} vs {oracle}");
    }

    #[test]
    fn classical_three_dimensions() {
        let tc = critical_temperature(3.0, 0.0).unwrap();
        let a1 = bz_tensor_quadrature(|k| 1.0 / dispersion(k), 3, 16, 40);
        assert!((tc - 1.0 / a1).abs() < 1e-7 * tc);
        let mut prev = f64::INFINITY;
        for t in [6.0, 5.0, 4.5, 4.1, 1.0001 * tc] {
            let sol = solve_z(&params(3.0, 0.0, t, 1.0)).unwrap();
            assert_eq!(sol.phase, Phase::Paramagnetic);
            assert!(sol.residual.abs() <= 1e-10);
            assert!(sol.z < prev);
            prev = sol.z;
        }
        assert!(prev < 1e-4);
        let sol = solve_z(&params(3.0, 0.0, 0.9 * tc, 1.0)).unwrap();
        assert_eq!(sol.phase, Phase::Ferromagnetic);
        assert!((sol.condensate - 0.1).abs() < 1e-8);
    }

    #[test]
    fn one_dimension_quantum() {
        let mut prev = f64::INFINITY;
        for g in [1.0, 0.3, 0.1, 0.03] {
            let sol = solve_z(&params(1.0, g, 0.0, 1.0)).unwrap();
            assert_eq!(sol.phase, Phase::Paramagnetic);
            assert!(sol.z > 0.0 && sol.z < prev);
            prev = sol.z;
        }
        assert!(critical_coupling(1.0, 1.0).is_err());
    }

    #[test]
    fn critical_coupling_two_paths() {
        let gc = critical_coupling(3.0, 1.0).unwrap();
        let i = bz_tensor_quadrature(|k| 1.0 / dispersion(k).sqrt(), 3, 16, 40);
        assert!((gc - 4.0 / (i * i)).abs() < 1e-8 * gc);
        assert!((gc - GC3).abs() < 1e-9 * gc, "{gc}");
        let sol = solve_z(&params(3.0, gc, 0.0, 1.0)).unwrap();
        assert!(sol.z < 1e-8);
        // anisotropic path at λ → 1 agrees with the isotropic formula
        let g2 = critical_coupling(3.0, 1.0 - 1e-9).unwrap();
        assert!((g2 - gc).abs() < 1e-6 * gc);
        assert!(critical_coupling(1.02, 1.0).unwrap() < 0.2 * critical_coupling(1.5, 1.0).unwrap());
    }

    // frozen after two-path agreement (Laplace kernel vs graded tensor quadrature)
    const GC3: f64 = 19.292151163849212;

    #[test]
    fn reentrance_at_d_1_8() {
        let gs: Vec<f64> = [0.0, 0.1, 0.2, 0.4, 0.7, 1.0].iter().map(|&l| critical_coupling(1.8, l).unwrap()).collect();
        let increasing = gs.windows(2).all(|w| w[1] >= w[0]);
        let decreasing = gs.windows(2).all(|w| w[1] <= w[0]);
        assert!(!increasing && !decreasing, "{gs:?}");
    }

    #[test]
    fn critical_temperature_endpoints() {
        let gc = critical_coupling(3.0, 1.0).unwrap();
        let t1 = critical_temperature(3.0, 0.9 * gc).unwrap();
        let t2 = critical_temperature(3.0, 0.99 * gc).unwrap();
        assert!(t2 < t1 && t1 < critical_temperature(3.0, 0.0).unwrap());
        assert_eq!(critical_temperature(3.0, 1.01 * gc).unwrap(), 0.0);
        assert_eq!(critical_temperature(2.0, 0.1).unwrap(), 0.0);
    }

    #[test]
    fn stationary_values() {
        let p = params(2.0, 0.6, 0.0, 1.0);
        let z = 0.3;
        let s = s_of_z(z, 2.0, 1.0);
        let c = stationary_correlators_omega(1.7, 2.0, &p, s).unwrap();
        assert_eq!(c.xi, 0.0);
        assert!((c.q - 0.6f64.sqrt() / (2.0 * (z + 1.7f64).sqrt())).abs() < 1e-15);
        let p = params(2.0, 0.6, 0.8, 0.4);
        let s = s_of_z(0.5, 2.0, 0.4);
        let c = stationary_correlators_omega(2.3, 2.0, &p, s).unwrap();
        let (lp, lm) = lambda_pm_omega(2.3, 2.0, s, 0.4).unwrap();
        let e = (2.0 * 0.6 / s).sqrt() * lp * lm;
        let nbar = 1.0 / ((e / 0.8).exp() - 1.0);
        assert!((c.q * c.pi - (2.0 * nbar + 1.0).powi(2) / 4.0).abs() < 1e-13);
    }

    #[test]
    fn closure_with_stationary_correlators() {
        for p in [params(3.0, 1.5, 5.0, 1.0), params(3.0, 1.2, 12.0, 0.5), params(2.0, 2.0, 1.5, 0.4)] {
            let sol = solve_z(&p).unwrap();
            assert_eq!(sol.phase, Phase::Paramagnetic);
            let s = s_of_z(sol.z, p.d, p.lambda);
            let sum = bz_tensor_quadrature(
                |k| stationary_correlators_omega(dispersion(k), p.d, &p, s).unwrap().q,
                p.d as usize,
                16,
                40,
            );
            assert!((sum - 1.0).abs() < 1e-8, "{p:?}: {sum}");
        }
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(24))]
        #[test]
        fn lhs_decreasing(z in 0.01f64..5.0, g in 0.1f64..3.0, t in 0.0f64..3.0, lam in prop::sample::select(vec![1.0, 0.5, -0.3, 0.0])) {
            let d = if lam == 1.0 { 2.6 } else { 2.0 };
            let p = params(d, g, t, lam);
            let a = constraint_lhs(z, &p).unwrap();
            let b = constraint_lhs(z * 1.1, &p).unwrap();
            prop_assert!(b < a);
        }
    }
}
