//! `qsm`: command-line driver for the dissipative quantum spherical model.

mod output;

use clap::{Args, Parser, Subcommand, ValueEnum};
use output::{fmt_num, manifest_path, sibling, write_json, Format, Manifest, Table};
use qsm_core::deepquench::{self as dq, QuenchProtocol};
use qsm_core::dynamics::{self, ModeGrid, OdeOptions, OdeState};
use qsm_core::equilibrium::{self, Phase};
use qsm_core::semiclassical;
use qsm_core::specfun::selftest::identity_suite;
use qsm_core::ModelParams;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

const VERSION: &str = env!("CARGO_PKG_VERSION");

#[derive(Parser, Debug)]
#[command(name = "qsm", version, about = "Dissipative quantum spherical model: equilibrium, semiclassical and quench dynamics")]
struct Cli {
    /// TOML file with a table per subcommand; flags override it.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Primary output file (default `<command>.csv` or `.json`).
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    #[arg(long, global = true, value_enum)]
    format: Option<Format>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Spherical parameter 𝔷 and phase of the equilibrium state.
    Equilibrium(EqArgs),
    /// Critical lines g_c(d, λ) or T_c(d, g).
    PhaseDiagram(PhaseArgs),
    /// Semiclassical quench: Volterra solution and mode correlators.
    Semiclassical(ScArgs),
    /// Deep quench from a disordered state: constraint solution and observables.
    Quench(QuenchArgs),
    /// Direct mode-by-mode integration on a finite lattice.
    Ode(OdeArgs),
    #[command(hide = true)]
    SpecfunSelftest,
}

macro_rules! merge_from {
    ($a:expr, $b:expr; $($f:ident),*) => {
        $( if $a.$f.is_none() { $a.$f = $b.$f.clone(); } )*
    };
}

/// `start:stop:count`, linear and inclusive.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
struct Sweep {
    start: f64,
    stop: f64,
    count: usize,
}

impl Sweep {
    fn parse(field: &str, s: &str) -> Result<Self, CliError> {
        let parts: Vec<&str> = s.split(':').collect();
        let bad = || CliError::Usage(format!("{field}: expected start:stop:count, got {s:?}"));
        if parts.len() != 3 {
            return Err(bad());
        }
        let start: f64 = parts[0].trim().parse().map_err(|_| bad())?;
        let stop: f64 = parts[1].trim().parse().map_err(|_| bad())?;
        let count: usize = parts[2].trim().parse().map_err(|_| bad())?;
        if count == 0 || !start.is_finite() || !stop.is_finite() {
            return Err(bad());
        }
        Ok(Self { start, stop, count })
    }

    fn values(&self) -> Vec<f64> {
        if self.count == 1 {
            return vec![self.start];
        }
        (0..self.count).map(|i| self.start + (self.stop - self.start) * i as f64 / (self.count - 1) as f64).collect()
    }
}

#[derive(Debug)]
enum CliError {
    Usage(String),
    Io(String),
    Solver(String),
}

fn usage(field: &str, msg: impl std::fmt::Display) -> CliError {
    CliError::Usage(format!("{field}: {msg}"))
}

fn require(ok: bool, field: &str, msg: &str) -> Result<(), CliError> {
    if ok {
        Ok(())
    } else {
        Err(usage(field, msg))
    }
}

fn solver(e: qsm_core::Error) -> CliError {
    CliError::Solver(e.to_string())
}

struct Outcome {
    tables: Vec<(Option<&'static str>, Table)>,
    tolerances: Value,
    diagnostics: Value,
}

// ---------------------------------------------------------------------------
// equilibrium

#[derive(Args, Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields, rename_all = "kebab-case")]
struct EqArgs {
    #[arg(long)]
    d: Option<f64>,
    #[arg(long, allow_hyphen_values = true)]
    lambda: Option<f64>,
    #[arg(long)]
    g: Option<f64>,
    #[arg(long = "T")]
    #[serde(rename = "T")]
    t: Option<f64>,
    /// Temperature sweep start:stop:count (replaces --T).
    #[arg(long = "T-sweep")]
    #[serde(rename = "T-sweep")]
    t_sweep: Option<String>,
    /// Coupling sweep start:stop:count (replaces --g).
    #[arg(long = "g-sweep")]
    g_sweep: Option<String>,
}

#[derive(Debug, Serialize)]
struct EqInputs {
    d: f64,
    lambda: f64,
    temperatures: Vec<f64>,
    couplings: Vec<f64>,
    t_sweep: Option<Sweep>,
    g_sweep: Option<Sweep>,
}

fn eq_resolve(mut a: EqArgs, f: Option<&EqArgs>) -> Result<EqInputs, CliError> {
    if let Some(f) = f {
        merge_from!(a, f; d, lambda, g, t, t_sweep, g_sweep);
    }
    let d = a.d.unwrap_or(3.0);
    let lambda = a.lambda.unwrap_or(1.0);
    require(d > 0.0, "equilibrium.d", "must be positive")?;
    require(lambda.abs() <= 1.0, "equilibrium.lambda", "must lie in [-1, 1]")?;
    let t_sweep = a.t_sweep.as_deref().map(|s| Sweep::parse("equilibrium.T-sweep", s)).transpose()?;
    let g_sweep = a.g_sweep.as_deref().map(|s| Sweep::parse("equilibrium.g-sweep", s)).transpose()?;
    let temperatures = t_sweep.map(|s| s.values()).unwrap_or_else(|| vec![a.t.unwrap_or(1.0)]);
    let couplings = g_sweep.map(|s| s.values()).unwrap_or_else(|| vec![a.g.unwrap_or(0.0)]);
    require(temperatures.iter().all(|&t| t >= 0.0), "equilibrium.T", "must be non-negative")?;
    require(couplings.iter().all(|&g| g >= 0.0), "equilibrium.g", "must be non-negative")?;
    Ok(EqInputs { d, lambda, temperatures, couplings, t_sweep, g_sweep })
}

fn eq_run(i: &EqInputs) -> Result<Outcome, CliError> {
    let points: Vec<(f64, f64)> = i.temperatures.iter().flat_map(|&t| i.couplings.iter().map(move |&g| (t, g))).collect();
    let sols = points
        .par_iter()
        .map(|&(t, g)| {
            let p = ModelParams { d: i.d, g, temperature: t, lambda: i.lambda, ..ModelParams::default() };
            equilibrium::solve_z(&p).map_err(|e| CliError::Solver(format!("T = {t}, g = {g}: {e}")))
        })
        .collect::<Result<Vec<_>, _>>()?;
    let mut tab = Table::new(&["d", "lambda", "T", "g", "z", "phase"]);
    let mut max_res = 0.0f64;
    let mut ordered = 0usize;
    for (&(t, g), s) in points.iter().zip(&sols) {
        max_res = max_res.max(s.residual.abs());
        if s.phase == Phase::Ferromagnetic {
            ordered += 1;
        }
        tab.push(vec![i.d.into(), i.lambda.into(), t.into(), g.into(), s.z.into(), s.phase.as_str().into()]);
    }
    Ok(Outcome {
        tables: vec![(None, tab)],
        tolerances: json!({ "constraint_residual": 1e-10 }),
        diagnostics: json!({ "points": points.len(), "ordered_points": ordered, "max_residual": max_res }),
    })
}

// ---------------------------------------------------------------------------
// phase diagram

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, ValueEnum)]
#[serde(rename_all = "lowercase")]
enum DiagramKind {
    /// g_c against λ at T = 0.
    Coupling,
    /// T_c against g at λ = 1.
    Temperature,
}

#[derive(Args, Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields, rename_all = "kebab-case")]
struct PhaseArgs {
    #[arg(long, value_enum)]
    kind: Option<DiagramKind>,
    /// Comma-separated dimensions.
    #[arg(long, value_delimiter = ',')]
    d: Option<Vec<f64>>,
    /// Points per curve.
    #[arg(long)]
    points: Option<usize>,
}

#[derive(Debug, Serialize)]
struct PhaseInputs {
    kind: DiagramKind,
    d: Vec<f64>,
    points: usize,
}

fn phase_resolve(mut a: PhaseArgs, f: Option<&PhaseArgs>) -> Result<PhaseInputs, CliError> {
    if let Some(f) = f {
        merge_from!(a, f; kind, d, points);
    }
    let kind = a.kind.unwrap_or(DiagramKind::Coupling);
    let d = a.d.unwrap_or_else(|| match kind {
        DiagramKind::Coupling => vec![1.5, 1.8, 2.0, 2.5, 3.0],
        DiagramKind::Temperature => vec![3.0],
    });
    let points = a.points.unwrap_or(101);
    require(points >= 2, "phase-diagram.points", "need at least 2")?;
    match kind {
        DiagramKind::Coupling => require(d.iter().all(|&x| x > 1.0), "phase-diagram.d", "g_c needs d > 1")?,
        DiagramKind::Temperature => require(d.iter().all(|&x| x > 2.0), "phase-diagram.d", "T_c > 0 needs d > 2")?,
    }
    Ok(PhaseInputs { kind, d, points })
}

fn phase_run(i: &PhaseInputs) -> Result<Outcome, CliError> {
    let n = i.points;
    let tab = match i.kind {
        DiagramKind::Coupling => {
            let pts: Vec<(f64, f64)> = i.d.iter().flat_map(|&d| (0..n).map(move |j| (d, -1.0 + 2.0 * j as f64 / (n - 1) as f64))).collect();
            let gc = pts
                .par_iter()
                .map(|&(d, l)| equilibrium::critical_coupling(d, l).map_err(solver))
                .collect::<Result<Vec<_>, _>>()?;
            let mut tab = Table::new(&["d", "lambda", "g_c"]);
            for (&(d, l), g) in pts.iter().zip(gc) {
                tab.push(vec![d.into(), l.into(), g.into()]);
            }
            tab
        }
        DiagramKind::Temperature => {
            let mut pts = Vec::new();
            for &d in &i.d {
                let gc = equilibrium::critical_coupling(d, 1.0).map_err(solver)?;
                pts.extend((0..n).map(|j| (d, gc * j as f64 / (n - 1) as f64)));
            }
            let rows = pts
                .par_iter()
                .map(|&(d, g)| -> Result<(f64, f64), CliError> {
                    let tc = equilibrium::critical_temperature(d, g).map_err(solver)?;
                    let tc1 = semiclassical::critical_temperature_sc(d, g).map_err(solver)?;
                    Ok((tc, tc1))
                })
                .collect::<Result<Vec<_>, _>>()?;
            let mut tab = Table::new(&["d", "g", "T_c", "T_c_first_order"]);
            for (&(d, g), (tc, tc1)) in pts.iter().zip(rows) {
                tab.push(vec![d.into(), g.into(), tc.into(), tc1.into()]);
            }
            tab
        }
    };
    Ok(Outcome { tables: vec![(None, tab)], tolerances: json!({}), diagnostics: json!({ "rows": i.d.len() * n }) })
}

// ---------------------------------------------------------------------------
// semiclassical

#[derive(Args, Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields, rename_all = "kebab-case")]
struct ScArgs {
    #[arg(long)]
    d: Option<f64>,
    #[arg(long)]
    g: Option<f64>,
    #[arg(long = "T")]
    #[serde(rename = "T")]
    t: Option<f64>,
    /// Damping rate per unit of 𝔷+ω (γ₀/2).
    #[arg(long)]
    gamma: Option<f64>,
    #[arg(long)]
    tmax: Option<f64>,
    #[arg(long)]
    dt: Option<f64>,
    /// Write every n-th node of the (t, F, G, Z) table.
    #[arg(long)]
    every: Option<usize>,
    /// Wave numbers along a lattice axis for the Q table.
    #[arg(long, value_delimiter = ',')]
    k: Option<Vec<f64>>,
    /// Times for the Q table (default: tmax).
    #[arg(long = "q-times", value_delimiter = ',')]
    q_times: Option<Vec<f64>>,
}

#[derive(Debug, Serialize)]
struct ScInputs {
    d: f64,
    g: f64,
    temperature: f64,
    gamma: f64,
    tmax: f64,
    dt: f64,
    every: usize,
    k: Vec<f64>,
    q_times: Vec<f64>,
}

fn sc_resolve(mut a: ScArgs, f: Option<&ScArgs>) -> Result<ScInputs, CliError> {
    if let Some(f) = f {
        merge_from!(a, f; d, g, t, gamma, tmax, dt, every, k, q_times);
    }
    let i = ScInputs {
        d: a.d.unwrap_or(3.0),
        g: a.g.unwrap_or(0.0),
        temperature: a.t.unwrap_or(1.0),
        gamma: a.gamma.unwrap_or(0.5),
        tmax: a.tmax.unwrap_or(100.0),
        dt: a.dt.unwrap_or(0.01),
        every: a.every.unwrap_or(1),
        k: a.k.unwrap_or_else(|| vec![0.0, 0.25, 0.5, 1.0]),
        q_times: Vec::new(),
    };
    let q_times = a.q_times.unwrap_or_else(|| vec![i.tmax]);
    require(i.d > 0.0, "semiclassical.d", "must be positive")?;
    require(i.g >= 0.0, "semiclassical.g", "must be non-negative")?;
    require(i.temperature > i.g / 12.0, "semiclassical.T", "must exceed g/12")?;
    require(i.gamma > 0.0, "semiclassical.gamma", "must be positive")?;
    require(i.tmax > 0.0, "semiclassical.tmax", "must be positive")?;
    require(i.dt > 0.0 && i.tmax / i.dt <= 1e7, "semiclassical.dt", "must be positive with tmax/dt <= 1e7")?;
    require(i.every >= 1, "semiclassical.every", "must be at least 1")?;
    require(q_times.iter().all(|&t| (0.0..=i.tmax).contains(&t)), "semiclassical.q-times", "must lie in [0, tmax]")?;
    Ok(ScInputs { q_times, ..i })
}

fn sc_run(i: &ScInputs) -> Result<Outcome, CliError> {
    let p = ModelParams { d: i.d, g: i.g, temperature: i.temperature, gamma0: 2.0 * i.gamma, ..ModelParams::default() };
    let sol = semiclassical::solve_volterra(&p, i.tmax, i.dt).map_err(solver)?;
    let mut main = Table::new(&["t", "F", "G", "Z"]);
    for j in (0..sol.t.len()).step_by(i.every) {
        main.push(vec![sol.t[j].into(), sol.f[j].into(), sol.g[j].into(), sol.big_z(j).into()]);
    }
    let mut q = Table::new(&["k", "t", "Q"]);
    for &t in &i.q_times {
        for &k in &i.k {
            let omega = 2.0 * (1.0 - k.cos());
            q.push(vec![k.into(), t.into(), semiclassical::q_correlator_sc_omega(omega, t, &sol, &p).into()]);
        }
    }
    Ok(Outcome {
        tables: vec![(None, main), (Some("q"), q)],
        tolerances: json!({ "discrete_residual": 1e-8, "step_halving_change": 1e-4 }),
        diagnostics: json!({
            "effective_temperature": sol.teff,
            "discrete_residual": sol.residual,
            "step_halving_change": sol.halving_change,
            "warnings": sol.warnings,
        }),
    })
}

// ---------------------------------------------------------------------------
// quench

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, ValueEnum)]
enum Observable {
    #[value(name = "Z")]
    Z,
    #[value(name = "Qk")]
    Qk,
    #[value(name = "C_of_R")]
    #[serde(rename = "C_of_R")]
    COfR,
    #[value(name = "L2")]
    L2,
    #[value(name = "chi")]
    #[serde(rename = "chi")]
    Chi,
    #[value(name = "xi0")]
    #[serde(rename = "xi0")]
    Xi0,
}

#[derive(Args, Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields, rename_all = "kebab-case")]
struct QuenchArgs {
    #[arg(long)]
    d: Option<f64>,
    #[arg(long)]
    g: Option<f64>,
    /// Damping rate per unit of 𝔷+ω.
    #[arg(long)]
    gamma: Option<f64>,
    /// Initial momentum correlator 𝒞 (0 or ≥ 1/4).
    #[arg(long = "C", conflicts_with_all = ["t0", "g0"])]
    #[serde(rename = "C")]
    c: Option<f64>,
    /// Initial temperature; with --g0 determines 𝒞.
    #[arg(long = "T0", requires = "g0")]
    #[serde(rename = "T0")]
    t0: Option<f64>,
    #[arg(long, requires = "t0")]
    g0: Option<f64>,
    #[arg(long)]
    tmin: Option<f64>,
    #[arg(long)]
    tmax: Option<f64>,
    /// Log-spaced time nodes.
    #[arg(long)]
    nodes: Option<usize>,
    #[arg(long, value_enum)]
    observable: Option<Observable>,
    /// Largest wave number for Qk.
    #[arg(long = "k-max")]
    k_max: Option<f64>,
    #[arg(long = "k-points")]
    k_points: Option<usize>,
    /// Largest distance for C_of_R.
    #[arg(long = "r-max")]
    r_max: Option<f64>,
    #[arg(long = "r-points")]
    r_points: Option<usize>,
}

#[derive(Debug, Serialize)]
struct QuenchInputs {
    d: f64,
    g: f64,
    gamma: f64,
    c: f64,
    t0: Option<f64>,
    g0: Option<f64>,
    tmin: f64,
    tmax: f64,
    nodes: usize,
    observable: Observable,
    k_max: f64,
    k_points: usize,
    r_max: f64,
    r_points: usize,
    #[serde(skip)]
    initial_warning: Option<String>,
}

fn quench_resolve(mut a: QuenchArgs, f: Option<&QuenchArgs>) -> Result<QuenchInputs, CliError> {
    if let Some(f) = f {
        if a.c.is_none() && a.t0.is_none() {
            merge_from!(a, f; c, t0, g0);
        }
        merge_from!(a, f; d, g, gamma, tmin, tmax, nodes, observable, k_max, k_points, r_max, r_points);
    }
    let d = a.d.unwrap_or(2.0);
    let g = a.g.unwrap_or(0.1);
    let gamma = a.gamma.unwrap_or(1.0);
    require(d > 1.0, "quench.d", "must exceed 1")?;
    require(g > 0.0, "quench.g", "must be positive")?;
    require(gamma > 0.0, "quench.gamma", "must be positive")?;
    let (c, warn) = match (a.t0, a.g0) {
        (Some(t0), Some(g0)) => {
            require(t0 > 0.0, "quench.T0", "must be positive")?;
            require(g0 > 0.0, "quench.g0", "must be positive")?;
            let (c, w) = dq::initial_c(t0, g0).map_err(|e| usage("quench.T0", e))?;
            (c.max(0.25), w)
        }
        (None, None) => (a.c.unwrap_or(0.25), None),
        _ => return Err(usage("quench.T0", "T0 and g0 go together")),
    };
    require(c == 0.0 || c >= 0.25, "quench.C", "must be 0 or at least 1/4")?;
    let tmin = a.tmin.unwrap_or(1.0);
    let tmax = a.tmax.unwrap_or(1e4);
    let nodes = a.nodes.unwrap_or(41);
    require(tmin > 0.0, "quench.tmin", "must be positive")?;
    require(tmax >= tmin, "quench.tmax", "must be at least tmin")?;
    require(nodes >= 1, "quench.nodes", "must be at least 1")?;
    let k_max = a.k_max.unwrap_or(std::f64::consts::PI);
    let k_points = a.k_points.unwrap_or(129);
    let r_max = a.r_max.unwrap_or(50.0);
    let r_points = a.r_points.unwrap_or(51);
    require(k_max > 0.0, "quench.k-max", "must be positive")?;
    require(k_points >= 1, "quench.k-points", "must be at least 1")?;
    require(r_max >= 0.0, "quench.r-max", "must be non-negative")?;
    require(r_points >= 1, "quench.r-points", "must be at least 1")?;
    Ok(QuenchInputs {
        d,
        g,
        gamma,
        c,
        t0: a.t0,
        g0: a.g0,
        tmin,
        tmax,
        nodes,
        observable: a.observable.unwrap_or(Observable::Z),
        k_max,
        k_points,
        r_max,
        r_points,
        initial_warning: warn,
    })
}

fn linspace(a: f64, b: f64, n: usize) -> Vec<f64> {
    if n == 1 {
        return vec![b];
    }
    (0..n).map(|j| a + (b - a) * j as f64 / (n - 1) as f64).collect()
}

fn quench_run(i: &QuenchInputs) -> Result<Outcome, CliError> {
    let mut p = QuenchProtocol::new(i.d, i.g, i.gamma, i.c).map_err(solver)?;
    p.t0 = i.t0;
    p.g0 = i.g0;
    let grid = dq::log_grid(i.tmin, i.tmax, i.nodes);
    let traj = dq::solve_z(&p, &grid).map_err(solver)?;
    let nodes = || traj.t_grid.iter().zip(&traj.z).map(|(&t, &z)| (t, z));
    let tab = match i.observable {
        Observable::Z => {
            let mut tab = Table::new(&["t", "Z", "tZ", "residual", "regime"]);
            for (j, (t, bz)) in nodes().enumerate() {
                tab.push(vec![t.into(), bz.into(), (t * bz).into(), traj.residual[j].into(), traj.regime[j].as_str().into()]);
            }
            tab
        }
        Observable::Qk => {
            let ks = linspace(0.0, i.k_max, i.k_points);
            let mut tab = Table::new(&["t", "k", "Q"]);
            for (t, bz) in nodes() {
                for (k, q) in ks.iter().zip(dq::structure_factor(&ks, t, bz, &p)) {
                    tab.push(vec![t.into(), (*k).into(), q.into()]);
                }
            }
            tab
        }
        Observable::COfR => {
            let rs = linspace(0.0, i.r_max, i.r_points);
            let pts: Vec<(f64, f64, f64)> = nodes().flat_map(|(t, bz)| rs.iter().map(move |&r| (t, bz, r))).collect();
            let vals = pts
                .par_iter()
                .map(|&(t, bz, r)| dq::realspace_correlator(r, t, bz, &p).map_err(solver))
                .collect::<Result<Vec<_>, _>>()?;
            let mut tab = Table::new(&["t", "R", "C", "panels"]);
            for (&(t, _, r), h) in pts.iter().zip(vals) {
                tab.push(vec![t.into(), r.into(), h.value.into(), h.panels.into()]);
            }
            tab
        }
        Observable::L2 => {
            let mut tab = Table::new(&["t", "L2"]);
            for (t, bz) in nodes() {
                tab.push(vec![t.into(), dq::length_scale(t, bz, &p).into()]);
            }
            tab
        }
        Observable::Chi => {
            let mut tab = Table::new(&["t", "chi"]);
            for (t, bz) in nodes() {
                tab.push(vec![t.into(), dq::susceptibility(t, bz, &p).into()]);
            }
            tab
        }
        Observable::Xi0 => {
            let mut tab = Table::new(&["t", "xi0"]);
            for (t, bz) in nodes() {
                tab.push(vec![t.into(), dq::off_coherence_zero_mode(t, bz, &p).into()]);
            }
            tab
        }
    };
    let mut warnings = traj.warnings.clone();
    if let Some(w) = &i.initial_warning {
        warnings.insert(0, w.clone());
    }
    let mut regimes = serde_json::Map::new();
    for r in &traj.regime {
        let e = regimes.entry(r.as_str()).or_insert(json!(0));
        *e = json!(e.as_u64().unwrap_or(0) + 1);
    }
    let max_res = traj.residual.iter().fold(0.0f64, |m, r| m.max(r.abs()));
    Ok(Outcome {
        tables: vec![(None, tab)],
        tolerances: json!({ "constraint_residual": dq::RESIDUAL_TOL, "pole_offset": dq::POLE_OFFSET }),
        diagnostics: json!({
            "C": p.c,
            "regimes": regimes,
            "node_regimes": traj.regime.iter().map(|r| r.as_str()).collect::<Vec<_>>(),
            "residuals": traj.residual.iter().map(|&r| fmt_num(r)).collect::<Vec<_>>(),
            "max_residual": max_res,
            "pole_averaged": traj.pole_averaged,
            "warnings": warnings,
        }),
    })
}

// ---------------------------------------------------------------------------
// ode

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, ValueEnum)]
#[serde(rename_all = "lowercase")]
enum OnOff {
    On,
    Off,
}

#[derive(Args, Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields, rename_all = "kebab-case")]
struct OdeArgs {
    /// Lattice dimension (1, 2 or 3).
    #[arg(long)]
    d: Option<usize>,
    /// Sites per axis.
    #[arg(long)]
    n: Option<usize>,
    #[arg(long)]
    g: Option<f64>,
    #[arg(long = "T")]
    #[serde(rename = "T")]
    t: Option<f64>,
    /// Damping rate per unit of 𝔷+ω.
    #[arg(long)]
    gamma: Option<f64>,
    #[arg(long)]
    tmax: Option<f64>,
    #[arg(long, value_enum)]
    bath: Option<OnOff>,
    /// Hold 𝔷 at this value instead of enforcing the constraint.
    #[arg(long = "freeze-z", allow_hyphen_values = true)]
    freeze_z: Option<f64>,
    /// Initial Π on every mode (initial Q = 1, Ξ = 0).
    #[arg(long = "C")]
    #[serde(rename = "C")]
    c: Option<f64>,
    /// Times at which per-mode snapshots are written.
    #[arg(long, value_delimiter = ',')]
    snapshots: Option<Vec<f64>>,
    #[arg(long)]
    rtol: Option<f64>,
}

#[derive(Debug, Serialize)]
struct OdeInputs {
    d: usize,
    n: usize,
    g: f64,
    temperature: f64,
    gamma: f64,
    tmax: f64,
    bath: OnOff,
    freeze_z: Option<f64>,
    c: f64,
    snapshots: Vec<f64>,
    rtol: f64,
    atol: f64,
    dt_max: f64,
}

fn ode_resolve(mut a: OdeArgs, f: Option<&OdeArgs>) -> Result<OdeInputs, CliError> {
    if let Some(f) = f {
        merge_from!(a, f; d, n, g, t, gamma, tmax, bath, freeze_z, c, snapshots, rtol);
    }
    let i = OdeInputs {
        d: a.d.unwrap_or(2),
        n: a.n.unwrap_or(16),
        g: a.g.unwrap_or(1.0),
        temperature: a.t.unwrap_or(1.0),
        gamma: a.gamma.unwrap_or(0.5),
        tmax: a.tmax.unwrap_or(10.0),
        bath: a.bath.unwrap_or(OnOff::On),
        freeze_z: a.freeze_z,
        c: a.c.unwrap_or(1.0),
        snapshots: a.snapshots.unwrap_or_default(),
        rtol: a.rtol.unwrap_or(1e-10),
        atol: 1e-13,
        dt_max: 1.0,
    };
    require((1..=3).contains(&i.d), "ode.d", "must be 1, 2 or 3")?;
    require(i.n >= 2, "ode.n", "must be at least 2")?;
    require(i.g > 0.0, "ode.g", "must be positive")?;
    require(i.temperature >= 0.0, "ode.T", "must be non-negative")?;
    require(i.gamma >= 0.0, "ode.gamma", "must be non-negative")?;
    require(i.tmax > 0.0, "ode.tmax", "must be positive")?;
    require(i.c >= 0.25, "ode.C", "must be at least 1/4")?;
    require(i.rtol > 0.0, "ode.rtol", "must be positive")?;
    require(i.snapshots.iter().all(|&t| t > 0.0 && t <= i.tmax), "ode.snapshots", "must lie in (0, tmax]")?;
    Ok(i)
}

fn ode_run(i: &OdeInputs) -> Result<Outcome, CliError> {
    let grid = ModeGrid::new(i.d, i.n).map_err(solver)?;
    let p = ModelParams { d: i.d as f64, g: i.g, temperature: i.temperature, gamma0: 2.0 * i.gamma, ..ModelParams::default() };
    let o = OdeOptions {
        bath_on: i.bath == OnOff::On,
        freeze_z: i.freeze_z,
        rtol: i.rtol,
        atol: i.atol,
        dt_max: i.dt_max,
        ..OdeOptions::default()
    };
    let init = OdeState::uniform(&grid, 1.0, i.c, 0.0);
    let run = dynamics::integrate(&grid, init, &p, &o, i.tmax, &i.snapshots).map_err(solver)?;
    let mut tab = Table::new(&["t", "z", "Z", "min_heisenberg", "residual"]);
    for r in &run.records {
        tab.push(vec![r.t.into(), r.z.into(), r.big_z.into(), r.min_heisenberg.into(), r.residual.into()]);
    }
    let mut modes = Table::new(&["t", "mode", "omega", "weight", "Q", "Pi", "Xi"]);
    for s in &run.snapshots {
        for (m, c) in s.triples.iter().enumerate() {
            modes.push(vec![s.t.into(), m.into(), grid.omega[m].into(), grid.weights[m].into(), c.q.into(), c.pi.into(), c.xi.into()]);
        }
    }
    let (min_h, flagged) = run.records.iter().fold((f64::INFINITY, false), |(m, f), r| (m.min(r.min_heisenberg), f || r.min_heisenberg < 0.25 - 1e-9));
    let max_res = run.records.iter().fold(0.0f64, |m, r| m.max(r.residual.abs()));
    let mut tables = vec![(None, tab)];
    if !i.snapshots.is_empty() {
        tables.push((Some("modes"), modes));
    }
    Ok(Outcome {
        tables,
        tolerances: json!({ "rtol": i.rtol, "atol": i.atol, "constraint": o.constraint_tol, "heisenberg_slack": 1e-9 }),
        diagnostics: json!({
            "distinct_modes": grid.len(),
            "steps": run.steps,
            "rejected_steps": run.rejected,
            "min_heisenberg": min_h,
            "heisenberg_flag": flagged,
            "max_constraint_residual": max_res,
            "warnings": run.warnings,
        }),
    })
}

// ---------------------------------------------------------------------------

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields, rename_all = "kebab-case")]
struct FileConfig {
    out: Option<PathBuf>,
    format: Option<Format>,
    equilibrium: Option<EqArgs>,
    phase_diagram: Option<PhaseArgs>,
    semiclassical: Option<ScArgs>,
    quench: Option<QuenchArgs>,
    ode: Option<OdeArgs>,
}

fn load_config(path: &Path) -> Result<FileConfig, CliError> {
    let text = std::fs::read_to_string(path).map_err(|e| CliError::Io(format!("{}: {e}", path.display())))?;
    toml::from_str(&text).map_err(|e| CliError::Usage(format!("config {}: {e}", path.display())))
}

fn set_threads() -> Result<(), CliError> {
    if let Ok(v) = std::env::var("QSM_THREADS") {
        let n: usize = v.trim().parse().map_err(|_| usage("QSM_THREADS", format!("not a positive integer: {v:?}")))?;
        require(n >= 1, "QSM_THREADS", "must be at least 1")?;
        rayon::ThreadPoolBuilder::new().num_threads(n).build_global().map_err(|e| CliError::Io(e.to_string()))?;
    }
    Ok(())
}

fn drive<I: Serialize>(command: &str, inputs: &I, out: &Path, format: Format, run: impl FnOnce(&I) -> Result<Outcome, CliError>) -> Result<(), CliError> {
    let mpath = manifest_path(out);
    let io = |e: std::io::Error| CliError::Io(e.to_string());
    match run(inputs) {
        Ok(o) => {
            let mut outputs = Vec::new();
            for (suffix, t) in &o.tables {
                let path = suffix.map_or_else(|| out.to_path_buf(), |s| sibling(out, s));
                t.write(&path, format).map_err(io)?;
                outputs.push(path.display().to_string());
            }
            let m = Manifest { command, version: VERSION, status: "ok", inputs, tolerances: o.tolerances, outputs, diagnostics: o.diagnostics };
            write_json(&mpath, &m).map_err(io)
        }
        Err(e) => {
            let msg = match &e {
                CliError::Usage(s) | CliError::Io(s) | CliError::Solver(s) => s.clone(),
            };
            let m = Manifest {
                command,
                version: VERSION,
                status: "error",
                inputs,
                tolerances: json!({}),
                outputs: Vec::new(),
                diagnostics: json!({ "error": msg }),
            };
            write_json(&mpath, &m).map_err(io)?;
            Err(e)
        }
    }
}

fn selftest() -> ExitCode {
    let rows = identity_suite();
    let w = rows.iter().map(|r| r.name.chars().count()).max().unwrap_or(0);
    println!("{:<w$}  {:>24}  {:>24}  {:>9}  {:>7}  result", "identity", "value", "reference", "rel err", "tol");
    let mut ok = true;
    for r in &rows {
        ok &= r.pass;
        println!(
            "{:<w$}  {:>24}  {:>24}  {:>9.2e}  {:>7.0e}  {}",
            r.name,
            fmt_num(r.value),
            fmt_num(r.reference),
            r.rel_error,
            r.tol,
            if r.pass { "PASS" } else { "FAIL" }
        );
    }
    println!("{} of {} identities pass", rows.iter().filter(|r| r.pass).count(), rows.len());
    if ok {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}

fn real_main() -> Result<ExitCode, CliError> {
    let cli = Cli::parse();
    set_threads()?;
    if let Command::SpecfunSelftest = cli.command {
        return Ok(selftest());
    }
    let file = cli.config.as_deref().map(load_config).transpose()?.unwrap_or_default();
    let format = cli.format.or(file.format).unwrap_or(Format::Csv);
    let ext = match format {
        Format::Csv => "csv",
        Format::Json => "json",
    };
    let out_for = |name: &str| cli.out.clone().or_else(|| file.out.clone()).unwrap_or_else(|| PathBuf::from(format!("{name}.{ext}")));
    match cli.command {
        Command::Equilibrium(a) => {
            let i = eq_resolve(a, file.equilibrium.as_ref())?;
            drive("equilibrium", &i, &out_for("equilibrium"), format, eq_run)?;
        }
        Command::PhaseDiagram(a) => {
            let i = phase_resolve(a, file.phase_diagram.as_ref())?;
            drive("phase-diagram", &i, &out_for("phase_diagram"), format, phase_run)?;
        }
        Command::Semiclassical(a) => {
            let i = sc_resolve(a, file.semiclassical.as_ref())?;
            drive("semiclassical", &i, &out_for("semiclassical"), format, sc_run)?;
        }
        Command::Quench(a) => {
            let i = quench_resolve(a, file.quench.as_ref())?;
            drive("quench", &i, &out_for("quench"), format, quench_run)?;
        }
        Command::Ode(a) => {
            let i = ode_resolve(a, file.ode.as_ref())?;
            drive("ode", &i, &out_for("ode"), format, ode_run)?;
        }
        Command::SpecfunSelftest => unreachable!(),
    }
    Ok(ExitCode::SUCCESS)
}

fn main() -> ExitCode {
    match real_main() {
        Ok(c) => c,
        Err(CliError::Usage(m)) => {
            eprintln!("error: {m}");
            ExitCode::from(2)
        }
        Err(CliError::Io(m)) => {
            eprintln!("{}", json!({ "status": "error", "kind": "io", "message": m }));
            ExitCode::from(1)
        }
        Err(CliError::Solver(m)) => {
            eprintln!("{}", json!({ "status": "error", "kind": "solver", "message": m }));
            ExitCode::from(1)
        }
    }
}
