//! Numerics for the dissipative quantum spherical model on a hypercubic lattice.
//!
//! Layers, bottom-up: `specfun` (special functions), `quad` (quadrature),
//! `lattice` (dispersion and Brillouin-zone integrals), then the physics
//! modules `equilibrium`, `semiclassical`, `deepquench` and `dynamics`.

pub mod specfun;
pub mod quad;
pub mod fit;
pub mod roots;
pub mod lattice;
pub mod equilibrium;
pub mod semiclassical;
pub mod deepquench;
pub mod dynamics;

pub use specfun::{EvalResult, SeriesControl, SpecError};

use thiserror::Error as ThisError;

/// Errors raised by the lattice and physics layers.
#[derive(Debug, ThisError, Clone, PartialEq)]
pub enum Error {
    #[error(transparent)]
    Special(#[from] SpecError),
    #[error("domain error: {0}")]
    Domain(String),
    #[error("unsupported: {0}")]
    Unsupported(String),
    #[error("no convergence: {0}")]
    NoConvergence(String),
    #[error("divergent integral: {0}")]
    Divergent(String),
}

pub type Result<T> = std::result::Result<T, Error>;

/// Equal-time mode correlators: Q = ⟨q q⟩, Π = ⟨p p⟩, Ξ = ½⟨qp + pq⟩.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct Correlators {
    pub q: f64,
    pub pi: f64,
    pub xi: f64,
}

impl Correlators {
    /// QΠ − Ξ², conserved by the bath-free evolution and ≥ 1/4.
    pub fn uncertainty(&self) -> f64 {
        self.q * self.pi - self.xi * self.xi
    }
}

/// Shared model parameters.
///
/// `gamma0` is the bath coupling entering the mode damping rate
/// `γ_k = γ₀[((1+λ)/2)²Λ₋² + ((1−λ)/2)²Λ₊²]Λ₊²Λ₋²/S²`.
/// At λ = 1 this is `γ₀Λ² = (γ₀/2)(𝔷+ω)`; the modules working with the
/// rate per unit of `𝔷+ω` take `gamma = gamma0/2` directly.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ModelParams {
    pub d: f64,
    pub g: f64,
    pub temperature: f64,
    pub lambda: f64,
    pub spin: f64,
    pub gamma0: f64,
}

impl ModelParams {
    /// Damping rate per unit of 𝔷+ω at λ = 1, γ₀/2.
    pub fn gamma(&self) -> f64 {
        0.5 * self.gamma0
    }
}

impl Default for ModelParams {
    fn default() -> Self {
        Self { d: 3.0, g: 1.0, temperature: 1.0, lambda: 1.0, spin: 0.5, gamma0: 1.0 }
    }
}
