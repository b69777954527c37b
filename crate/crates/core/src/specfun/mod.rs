//! Scalar special functions: Gamma family, Bessel, generalized hypergeometric
//! pFq, the confluent Humbert Φ₃, Lambert W and a few cancellation-safe
//! combinations used by the deep-quench constraint.

mod bessel;
pub mod dd;
mod gamma;
mod humbert;
mod hyper;
mod identities;
mod lambert;
pub mod selftest;

pub use bessel::{bessel_i, bessel_i_scaled, bessel_j, exp_i0_scaled, exp_i1_scaled};
pub use gamma::{gamma, gamma_upper, gamma_upper_scaled, log_gamma, log_gamma_sign, rgamma};
pub use humbert::{humbert_phi3_conv, humbert_phi3_series};
pub use hyper::{hyp_pfq, hyp_pfq_reg};
pub use identities::{heat_kernel_gamma_derivative, eps_limit_1f2, one_minus_0f1_half_over_x};
pub use lambert::lambert_w;

use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SpecError {
    #[error("domain error: {0}")]
    Domain(String),
    #[error("no convergence after {terms} terms (last estimate {estimate:e})")]
    NoConvergence { terms: usize, estimate: f64 },
    #[error("catastrophic cancellation: result {value:e} vs largest partial {max_partial:e}")]
    Cancellation { value: f64, max_partial: f64 },
    #[error("unsupported: {0}")]
    Unsupported(String),
}

/// Convergence control for series evaluations.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SeriesControl {
    pub rel_tol: f64,
    pub abs_tol: f64,
    pub max_terms: usize,
}

impl Default for SeriesControl {
    fn default() -> Self {
        Self { rel_tol: 1e-12, abs_tol: 1e-300, max_terms: 10_000 }
    }
}

impl SeriesControl {
    pub fn with_rel_tol(rel_tol: f64) -> Self {
        Self { rel_tol, ..Self::default() }
    }

    fn validate(&self) -> Result<(), SpecError> {
        if !(self.rel_tol > 0.0) || self.max_terms == 0 {
            return Err(SpecError::Domain("SeriesControl needs rel_tol > 0 and max_terms >= 1".into()));
        }
        Ok(())
    }
}

/// Result of a series evaluation. The represented number is
/// `value * exp(log_scale)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EvalResult {
    pub value: f64,
    pub terms_used: usize,
    pub converged: bool,
    pub log_scale: f64,
}

impl EvalResult {
    pub fn exact(value: f64) -> Self {
        Self { value, terms_used: 0, converged: true, log_scale: 0.0 }
    }

    /// Collapse to a plain f64 (may overflow to ±inf or underflow to 0).
    pub fn to_f64(&self) -> f64 {
        if self.log_scale == 0.0 { self.value } else { self.value * self.log_scale.exp() }
    }

    /// ln|value| including the scale.
    pub fn ln_abs(&self) -> f64 {
        self.value.abs().ln() + self.log_scale
    }

    pub fn scaled(mut self, factor: f64) -> Self {
        self.value *= factor;
        self
    }
}

/// Kahan–Babuška–Neumaier accumulator.
#[derive(Debug, Clone, Copy, Default)]
pub(crate) struct Kahan {
    sum: f64,
    c: f64,
}

impl Kahan {
    pub fn add(&mut self, x: f64) {
        let t = self.sum + x;
        if self.sum.abs() >= x.abs() {
            self.c += (self.sum - t) + x;
        } else {
            self.c += (x - t) + self.sum;
        }
        self.sum = t;
    }

    pub fn value(&self) -> f64 {
        self.sum + self.c
    }

    pub fn scale(&mut self, f: f64) {
        self.sum *= f;
        self.c *= f;
    }
}

pub(crate) fn is_nonpos_int(x: f64) -> bool {
    x <= 0.0 && x == x.round()
}
