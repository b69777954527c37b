//! Direct integration of the equal-time mode correlator equations on a
//! finite lattice, with the spherical constraint enforced by projecting 𝔷
//! after every step. An oracle for the closed forms elsewhere; λ = 1 only.
//!
//! Per mode, with e = 𝔷 + ω, γ_k = γ e and the bath targets
//! Q* = ½√(g/e)·coth(E/2T), Π* = ½√(e/g)·coth(E/2T), E = √(ge):
//!
//!   Q′ = −γ_k(Q − Q*) + 2gΞ
//!   Ξ′ = −γ_kΞ + gΠ − eQ
//!   Π′ = −γ_k(Π − Π*) − 2eΞ

use crate::equilibrium::stationary_correlators_omega;
use crate::lattice::dispersion;
use crate::roots::brent;
use crate::{Correlators, Error, ModelParams, Result};
use rayon::prelude::*;
use std::collections::BTreeMap;

/// Modes of an n^d periodic lattice, k_j = 2πj/n, merged by symmetry into
/// distinct dispersion values with multiplicity weights summing to 1.
#[derive(Debug, Clone, PartialEq)]
pub struct ModeGrid {
    pub d: usize,
    pub n_per_axis: usize,
    pub omega: Vec<f64>,
    pub weights: Vec<f64>,
}

impl ModeGrid {
    pub fn new(d: usize, n: usize) -> Result<Self> {
        if !(1..=3).contains(&d) || n < 2 {
            return Err(Error::Domain(format!("mode grid needs d ∈ {{1,2,3}} and n ≥ 2 (got d={d}, n={n})")));
        }
        // multiplicity of each folded index 0..=n/2
        let half = n / 2;
        let mult: Vec<usize> = (0..=half).map(|j| if j == 0 || 2 * j == n { 1 } else { 2 }).collect();
        let mut classes: BTreeMap<Vec<usize>, usize> = BTreeMap::new();
        let mut idx = vec![0usize; d];
        loop {
            let mut key = idx.clone();
            key.sort_unstable();
            let m: usize = idx.iter().map(|&j| mult[j]).product();
            *classes.entry(key).or_insert(0) += m;
            let mut a = 0;
            loop {
                if a == d {
                    break;
                }
                idx[a] += 1;
                if idx[a] <= half {
                    break;
                }
                idx[a] = 0;
                a += 1;
            }
            if a == d {
                break;
            }
        }
        let total = (n as f64).powi(d as i32);
        let mut omega = Vec::with_capacity(classes.len());
        let mut weights = Vec::with_capacity(classes.len());
        for (key, count) in classes {
            let k: Vec<f64> = key.iter().map(|&j| 2.0 * std::f64::consts::PI * j as f64 / n as f64).collect();
            omega.push(dispersion(&k));
            weights.push(count as f64 / total);
        }
        Ok(Self { d, n_per_axis: n, omega, weights })
    }

    pub fn len(&self) -> usize {
        self.omega.len()
    }

    pub fn is_empty(&self) -> bool {
        self.omega.is_empty()
    }

    /// Σ_k w_k Q_k.
    pub fn constraint_sum(&self, triples: &[Correlators]) -> f64 {
        self.weights.iter().zip(triples).map(|(w, c)| w * c.q).sum()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct OdeState {
    pub t: f64,
    pub triples: Vec<Correlators>,
    /// 𝔷 used over the last step.
    pub z: f64,
    /// Z = ∫₀ᵗ 𝔷.
    pub big_z: f64,
}

impl OdeState {
    /// Same (Q, Π, Ξ) on every mode; (1, 𝒞, 0) is the infinitely disordered state.
    pub fn uniform(grid: &ModeGrid, q: f64, pi: f64, xi: f64) -> Self {
        Self { t: 0.0, triples: vec![Correlators { q, pi, xi }; grid.len()], z: 0.0, big_z: 0.0 }
    }

    /// Stationary correlators at spherical parameter 𝔷 for parameters `p`.
    pub fn stationary(grid: &ModeGrid, p: &ModelParams, z: f64) -> Result<Self> {
        let d = grid.d as f64;
        let s = d + 0.5 * z;
        let triples = grid.omega.iter().map(|&w| stationary_correlators_omega(w, d, p, s)).collect::<Result<Vec<_>>>()?;
        Ok(Self { t: 0.0, triples, z, big_z: 0.0 })
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OdeOptions {
    pub bath_on: bool,
    /// Hold 𝔷 at this value and skip the projection.
    pub freeze_z: Option<f64>,
    pub rtol: f64,
    pub atol: f64,
    pub dt_init: f64,
    pub dt_max: f64,
    /// Tolerance on Σw_kQ_k − 1 in the projection.
    pub constraint_tol: f64,
}

impl Default for OdeOptions {
    fn default() -> Self {
        Self {
            bath_on: true,
            freeze_z: None,
            rtol: 1e-10,
            atol: 1e-13,
            dt_init: 1e-3,
            dt_max: 1.0,
            constraint_tol: 1e-13,
        }
    }
}

fn check_lambda(p: &ModelParams) -> Result<()> {
    if p.lambda != 1.0 {
        return Err(Error::Unsupported(format!("dynamics implemented for λ = 1 only (got {})", p.lambda)));
    }
    if !(p.g > 0.0) {
        return Err(Error::Domain("dynamics needs g > 0".into()));
    }
    Ok(())
}

/// Bath drive terms (γ_kQ*, γ_kΠ*) for e = 𝔷 + ω. For e ≤ 0 the e → 0⁺
/// limits (γT, 0) are used.
fn bath_drive(e: f64, p: &ModelParams) -> (f64, f64) {
    let gam = p.gamma();
    let t = p.temperature;
    if e <= 0.0 {
        return (gam * t, 0.0);
    }
    let energy = (p.g * e).sqrt();
    if t == 0.0 {
        return (0.5 * gam * energy, 0.5 * gam * e * (e / p.g).sqrt());
    }
    let x = energy / (2.0 * t);
    // γ e ·½√(g/e)·coth x = ½γE coth x, finite as E → 0
    let ecoth = if x < 1e-8 { 2.0 * t } else { energy / x.tanh() };
    (0.5 * gam * ecoth, 0.5 * gam * e / p.g * ecoth)
}

fn mode_rhs(c: &Correlators, omega: f64, z: f64, p: &ModelParams, bath_on: bool) -> Correlators {
    let e = z + omega;
    let g = p.g;
    let mut dq = 2.0 * g * c.xi;
    let mut dxi = g * c.pi - e * c.q;
    let mut dpi = -2.0 * e * c.xi;
    if bath_on {
        let gk = p.gamma() * e;
        let (aq, api) = bath_drive(e, p);
        dq += -gk * c.q + aq;
        dxi += -gk * c.xi;
        dpi += -gk * c.pi + api;
    }
    Correlators { q: dq, pi: dpi, xi: dxi }
}

/// Time derivatives of all mode triples at fixed 𝔷.
pub fn rhs(grid: &ModeGrid, triples: &[Correlators], z: f64, p: &ModelParams, bath_on: bool) -> Result<Vec<Correlators>> {
    check_lambda(p)?;
    Ok(triples.iter().zip(&grid.omega).map(|(c, &w)| mode_rhs(c, w, z, p, bath_on)).collect())
}

// Dormand–Prince 5(4)
const A: [[f64; 6]; 7] = [
    [0.0; 6],
    [1.0 / 5.0, 0.0, 0.0, 0.0, 0.0, 0.0],
    [3.0 / 40.0, 9.0 / 40.0, 0.0, 0.0, 0.0, 0.0],
    [44.0 / 45.0, -56.0 / 15.0, 32.0 / 9.0, 0.0, 0.0, 0.0],
    [19372.0 / 6561.0, -25360.0 / 2187.0, 64448.0 / 6561.0, -212.0 / 729.0, 0.0, 0.0],
    [9017.0 / 3168.0, -355.0 / 33.0, 46732.0 / 5247.0, 49.0 / 176.0, -5103.0 / 18656.0, 0.0],
    [35.0 / 384.0, 0.0, 500.0 / 1113.0, 125.0 / 192.0, -2187.0 / 6784.0, 11.0 / 84.0],
];
const B5: [f64; 7] = [35.0 / 384.0, 0.0, 500.0 / 1113.0, 125.0 / 192.0, -2187.0 / 6784.0, 11.0 / 84.0, 0.0];
const B4: [f64; 7] = [
    5179.0 / 57600.0,
    0.0,
    7571.0 / 16695.0,
    393.0 / 640.0,
    -92097.0 / 339200.0,
    187.0 / 2100.0,
    1.0 / 40.0,
];

fn axpy(y: &Correlators, k: &[Correlators; 7], coef: &[f64], h: f64) -> Correlators {
    let mut r = *y;
    for (j, &a) in coef.iter().enumerate() {
        if a != 0.0 {
            r.q += h * a * k[j].q;
            r.pi += h * a * k[j].pi;
            r.xi += h * a * k[j].xi;
        }
    }
    r
}

/// One Dormand–Prince step per mode at frozen 𝔷; returns the 5th-order
/// solution and the scaled error norm (≤ 1 means acceptable).
fn dp_step(grid: &ModeGrid, y: &[Correlators], z: f64, p: &ModelParams, o: &OdeOptions, h: f64) -> (Vec<Correlators>, f64) {
    let res: Vec<(Correlators, f64)> = y
        .par_iter()
        .zip(grid.omega.par_iter())
        .map(|(y0, &w)| {
            let mut k = [Correlators::default(); 7];
            for s in 0..7 {
                let ys = axpy(y0, &k, &A[s][..s.min(6)], h);
                k[s] = mode_rhs(&ys, w, z, p, o.bath_on);
            }
            let y5 = axpy(y0, &k, &B5, h);
            let y4 = axpy(y0, &k, &B4, h);
            let sc = |a: f64, b: f64| o.atol + o.rtol * a.abs().max(b.abs());
            let err = ((y5.q - y4.q) / sc(y0.q, y5.q))
                .abs()
                .max(((y5.pi - y4.pi) / sc(y0.pi, y5.pi)).abs())
                .max(((y5.xi - y4.xi) / sc(y0.xi, y5.xi)).abs());
            (y5, err)
        })
        .collect();
    let err = res.iter().fold(0.0f64, |m, r| m.max(r.1));
    (res.into_iter().map(|r| r.0).collect(), err)
}

/// Advance by `dt` holding 𝔷 fixed within the step, with 𝔷 chosen by a
/// scalar root solve so that Σw_kQ_k = 1 at t + dt (skipped when frozen).
/// Returns the new state and the step error norm.
pub fn step_with_constraint(grid: &ModeGrid, s: &OdeState, p: &ModelParams, o: &OdeOptions, dt: f64) -> Result<(OdeState, f64)> {
    check_lambda(p)?;
    let z = match o.freeze_z {
        Some(z) => z,
        None => project_z(grid, s, p, o, dt)?,
    };
    let (y, err) = dp_step(grid, &s.triples, z, p, o, dt);
    Ok((OdeState { t: s.t + dt, triples: y, z, big_z: s.big_z + z * dt }, err))
}

fn project_z(grid: &ModeGrid, s: &OdeState, p: &ModelParams, o: &OdeOptions, dt: f64) -> Result<f64> {
    let f = |z: f64| -> Result<f64> {
        let (y, _) = dp_step(grid, &s.triples, z, p, o, dt);
        Ok(grid.constraint_sum(&y) - 1.0)
    };
    // Σw Q(t+dt) decreases with 𝔷
    let z0 = s.z;
    let f0 = f(z0)?;
    if f0.abs() <= o.constraint_tol {
        return Ok(z0);
    }
    let mut step = (1e-3 * (1.0 + z0.abs())).max(1e-6);
    let dir = if f0 > 0.0 { 1.0 } else { -1.0 };
    let (mut a, mut fa) = (z0, f0);
    for _ in 0..200 {
        let b = a + dir * step;
        let fb = f(b)?;
        if !fb.is_finite() {
            return Err(Error::NoConvergence("projection: non-finite constraint sum".into()));
        }
        if fb.signum() != fa.signum() {
            let (lo, hi) = if a < b { (a, b) } else { (b, a) };
            let (z, _) = brent(f, lo, hi, 1e-15 * (1.0 + z0.abs()), 200)?;
            return Ok(z);
        }
        a = b;
        fa = fb;
        step *= 2.0;
    }
    Err(Error::NoConvergence(format!("projection root not bracketed at t = {}", s.t)))
}

/// Per-mode minimum of QΠ − Ξ², with a flag for values below 1/4 − 1e-9.
pub fn heisenberg_monitor(s: &OdeState) -> (f64, bool) {
    let m = s.triples.iter().map(|c| c.uncertainty()).fold(f64::INFINITY, f64::min);
    (m, m < 0.25 - 1e-9)
}

#[derive(Debug, Clone, PartialEq)]
pub struct OdeRecord {
    pub t: f64,
    pub z: f64,
    pub big_z: f64,
    pub min_heisenberg: f64,
    /// Σw_kQ_k − 1.
    pub residual: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct OdeRun {
    pub records: Vec<OdeRecord>,
    pub state: OdeState,
    /// Mode snapshots at the requested output times.
    pub snapshots: Vec<OdeState>,
    pub steps: usize,
    pub rejected: usize,
    pub warnings: Vec<String>,
}

/// Adaptive integration to `t_end`, recording every accepted step and
/// landing exactly on each of `snapshot_times`.
pub fn integrate(grid: &ModeGrid, init: OdeState, p: &ModelParams, o: &OdeOptions, t_end: f64, snapshot_times: &[f64]) -> Result<OdeRun> {
    check_lambda(p)?;
    let mut s = init;
    let mut h = o.dt_init.min(o.dt_max);
    let mut run = OdeRun { records: Vec::new(), state: s.clone(), snapshots: Vec::new(), steps: 0, rejected: 0, warnings: Vec::new() };
    let mut targets: Vec<f64> = snapshot_times.iter().copied().filter(|&t| t > s.t && t <= t_end).collect();
    targets.sort_by(f64::total_cmp);
    let mut next = 0;
    let record = |s: &OdeState| {
        let (m, _) = heisenberg_monitor(s);
        OdeRecord { t: s.t, z: s.z, big_z: s.big_z, min_heisenberg: m, residual: grid.constraint_sum(&s.triples) - 1.0 }
    };
    run.records.push(record(&s));
    let mut flagged = false;
    while s.t < t_end {
        let stop = if next < targets.len() { targets[next] } else { t_end };
        let mut dt = h.min(stop - s.t);
        let landing = dt == stop - s.t;
        let (ns, err) = match step_with_constraint(grid, &s, p, o, dt) {
            Ok(r) => r,
            Err(e) => {
                h *= 0.5;
                run.rejected += 1;
                if h < 1e-14 * (1.0 + s.t) {
                    return Err(e);
                }
                continue;
            }
        };
        if err > 1.0 || !err.is_finite() {
            h = dt * (0.9 * err.powf(-0.2)).clamp(0.1, 0.5);
            run.rejected += 1;
            if h < 1e-14 * (1.0 + s.t) {
                return Err(Error::NoConvergence(format!("step size underflow at t = {}", s.t)));
            }
            continue;
        }
        let grow = if err == 0.0 { 5.0 } else { (0.9 * err.powf(-0.2)).clamp(0.2, 5.0) };
        if !landing {
            h = (dt * grow).min(o.dt_max);
        }
        dt = ns.t - s.t;
        let _ = dt;
        s = ns;
        run.steps += 1;
        let rec = record(&s);
        if rec.min_heisenberg < 0.25 - 1e-9 && !flagged {
            run.warnings.push(format!("QΠ − Ξ² = {:e} below 1/4 at t = {}", rec.min_heisenberg, s.t));
            flagged = true;
        }
        run.records.push(rec);
        if landing && next < targets.len() {
            s.t = targets[next];
            run.snapshots.push(s.clone());
            next += 1;
        }
    }
    run.state = s;
    Ok(run)
}

/// Fixed-step integration at frozen 𝔷 (no error control).
pub fn integrate_fixed(grid: &ModeGrid, init: &OdeState, p: &ModelParams, o: &OdeOptions, z: f64, dt: f64, n: usize) -> Result<OdeState> {
    check_lambda(p)?;
    let mut y = init.triples.clone();
    for _ in 0..n {
        y = dp_step(grid, &y, z, p, o, dt).0;
    }
    Ok(OdeState { t: init.t + dt * n as f64, triples: y, z, big_z: init.big_z + z * dt * n as f64 })
}

/// 𝔷 at which the stationary correlators satisfy Σw_kQ_k = 1 on the grid.
pub fn grid_equilibrium_z(grid: &ModeGrid, p: &ModelParams) -> Result<f64> {
    let f = |lz: f64| -> Result<f64> {
        let s = OdeState::stationary(grid, p, lz.exp())?;
        Ok(grid.constraint_sum(&s.triples) - 1.0)
    };
    let (mut lo, mut hi) = (-30.0, 5.0);
    while f(hi)? > 0.0 {
        hi += 2.0;
        if hi > 60.0 {
            return Err(Error::NoConvergence("grid equilibrium upper bracket".into()));
        }
    }
    while f(lo)? < 0.0 {
        lo -= 5.0;
        if lo < -700.0 {
            return Err(Error::NoConvergence("grid equilibrium lower bracket".into()));
        }
    }
    Ok(brent(f, lo, hi, 1e-15, 400)?.0.exp())
}

/// Sup-norm distance between two sets of mode triples.
pub fn sup_distance(a: &[Correlators], b: &[Correlators]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(x, y)| (x.q - y.q).abs().max((x.pi - y.pi).abs()).max((x.xi - y.xi).abs()))
        .fold(0.0, f64::max)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::deepquench::{correlators_quench_omega, QuenchProtocol};
    use proptest::prelude::*;

    fn params(g: f64, t: f64, gamma0: f64) -> ModelParams {
        ModelParams { d: 2.0, g, temperature: t, lambda: 1.0, spin: 0.5, gamma0 }
    }

    #[test]
    fn grid_weights_and_modes() {
        for (d, n) in [(1, 7), (2, 16), (3, 8)] {
            let g = ModeGrid::new(d, n).unwrap();
            let s: f64 = g.weights.iter().sum();
            assert!((s - 1.0).abs() < 1e-14);
            // ∫ω = 2d
            let m: f64 = g.weights.iter().zip(&g.omega).map(|(w, o)| w * o).sum();
            assert!((m - 2.0 * d as f64).abs() < 1e-12);
        }
        assert!(ModeGrid::new(4, 8).is_err());
    }

    #[test]
    fn stationary_point_of_rhs() {
        let grid = ModeGrid::new(2, 8).unwrap();
        for t in [0.0, 0.3, 2.0] {
            let p = params(0.7, t, 1.3);
            let s = OdeState::stationary(&grid, &p, 0.4).unwrap();
            let r = rhs(&grid, &s.triples, 0.4, &p, true).unwrap();
            for c in &r {
                assert!(c.q.abs() < 1e-14 && c.pi.abs() < 1e-13 && c.xi.abs() < 1e-14);
            }
            let (m, flag) = heisenberg_monitor(&s);
            assert!(!flag && m >= 0.25 - 1e-15);
            if t == 0.0 {
                assert!((m - 0.25).abs() < 1e-14);
            }
        }
    }

    #[test]
    fn classical_limit_of_q_equation() {
        // g → 0: Q′ = −γ_kQ + γ_kT/(𝔷+ω) with Ξ = 0
        let grid = ModeGrid::new(1, 6).unwrap();
        let p = params(1e-12, 0.8, 2.0);
        let z = 0.3;
        let y = vec![Correlators { q: 0.9, pi: 0.0, xi: 0.0 }; grid.len()];
        let r = rhs(&grid, &y, z, &p, true).unwrap();
        for (c, &w) in r.iter().zip(&grid.omega) {
            let gk = p.gamma() * (z + w);
            let want = -gk * 0.9 + gk * 0.8 / (z + w);
            assert!((c.q - want).abs() < 1e-9, "{} vs {want}", c.q);
        }
    }

    #[test]
    fn invariant_without_bath() {
        let grid = ModeGrid::new(2, 8).unwrap();
        let p = params(0.5, 0.0, 1.0);
        let o = OdeOptions { bath_on: false, freeze_z: Some(0.6), rtol: 1e-12, atol: 1e-14, ..OdeOptions::default() };
        let init = OdeState::uniform(&grid, 1.0, 0.75, 0.1);
        let run = integrate(&grid, init.clone(), &p, &o, 100.0, &[]).unwrap();
        for (a, b) in run.state.triples.iter().zip(&init.triples) {
            assert!((a.uncertainty() - b.uncertainty()).abs() < 1e-9);
        }
    }

    #[test]
    fn frozen_run_matches_oscillator_closed_form() {
        let grid = ModeGrid::new(1, 8).unwrap();
        let p = params(0.4, 0.0, 1.0);
        let z = -0.2;
        let o = OdeOptions { bath_on: false, freeze_z: Some(z), rtol: 1e-12, atol: 1e-14, ..OdeOptions::default() };
        let c = 0.8;
        let init = OdeState::uniform(&grid, 1.0, c, 0.0);
        let t_end = 6.0;
        let run = integrate(&grid, init, &p, &o, t_end, &[]).unwrap();
        let proto = QuenchProtocol { t0: None, g0: None, c, g: p.g, gamma: 0.0, d: 1.0 };
        for (y, &w) in run.state.triples.iter().zip(&grid.omega) {
            let e = correlators_quench_omega(w, t_end, z * t_end, &proto).to_correlators();
            assert!(((y.q - e.q) / e.q).abs() < 1e-9, "Q {} vs {}", y.q, e.q);
            assert!((y.pi - e.pi).abs() < 1e-9 * e.pi.abs().max(1.0));
            assert!((y.xi - e.xi).abs() < 1e-9 * e.xi.abs().max(1.0), "Ξ {} vs {}", y.xi, e.xi);
        }
    }

    #[test]
    fn fourth_order_convergence() {
        let grid = ModeGrid::new(1, 4).unwrap();
        let p = params(0.5, 0.0, 1.0);
        let z = 0.5;
        let o = OdeOptions { bath_on: false, ..OdeOptions::default() };
        let proto = QuenchProtocol { t0: None, g0: None, c: 1.0, g: p.g, gamma: 0.0, d: 1.0 };
        let init = OdeState::uniform(&grid, 1.0, 1.0, 0.0);
        let t_end = 20.0;
        let err = |n: usize| {
            let s = integrate_fixed(&grid, &init, &p, &o, z, t_end / n as f64, n).unwrap();
            s.triples
                .iter()
                .zip(&grid.omega)
                .map(|(y, &w)| (y.q - correlators_quench_omega(w, t_end, z * t_end, &proto).to_correlators().q).abs())
                .fold(0.0, f64::max)
        };
        let e: Vec<f64> = [40, 80, 160].iter().map(|&n| err(n)).collect();
        for w in e.windows(2) {
            let slope = (w[0] / w[1]).log2();
            assert!(slope > 3.7, "observed order {slope}");
        }
    }

    #[test]
    fn relaxes_to_grid_equilibrium() {
        let grid = ModeGrid::new(2, 8).unwrap();
        let p = params(1.0, 1.0, 1.0);
        let z_eq = grid_equilibrium_z(&grid, &p).unwrap();
        let eq = OdeState::stationary(&grid, &p, z_eq).unwrap();
        let init = OdeState::uniform(&grid, 1.0, 1.0, 0.0);
        let t_end = 50.0 / (p.gamma() * z_eq);
        let o = OdeOptions { dt_max: 2.0, ..OdeOptions::default() };
        let run = integrate(&grid, init, &p, &o, t_end, &[]).unwrap();
        let dist = sup_distance(&run.state.triples, &eq.triples);
        assert!(dist < 1e-8, "distance {dist}");
        assert!(run.records.iter().all(|r| r.residual.abs() < 1e-11));
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(32))]
        #[test]
        fn invariant_rate_vanishes(q in 0.1f64..3.0, pi in 0.1f64..3.0, xi in -1.0f64..1.0, z in -1.0f64..2.0, g in 0.1f64..2.0) {
            let grid = ModeGrid::new(1, 6).unwrap();
            let p = params(g, 0.0, 1.0);
            let y = vec![Correlators { q, pi, xi }; grid.len()];
            let r = rhs(&grid, &y, z, &p, false).unwrap();
            for d in r {
                let rate = d.q * pi + q * d.pi - 2.0 * xi * d.xi;
                prop_assert!(rate.abs() < 1e-12);
            }
        }
    }
}
