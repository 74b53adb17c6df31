//! Numerical laboratory for the worst-decay-cone counterexample to local
//! smoothing estimates for averages over non-degenerate curves.
//!
//! The crate is organised bottom-up:
//!
//! * [`curvekit`]: curves with analytic derivatives, non-degeneracy and
//!   model-class checks.
//! * [`conechart`]: Newton solvers for `θ(ξ)`, the cone generator `Γ(τ)`,
//!   the phase `φ` and the pairing `u_n`.
//! * [`oscillator`]: oscillatory quadrature for `μ̂_t`, the reduced
//!   multiplier `m_t` and its asymptotic reference.
//! * [`synthkit`]: periodic grids, spectral fields and the counterexample
//!   family `f = Σ_ν f_ν`.
//! * [`avgop`]: the averaging operator as a Fourier multiplier, a direct
//!   quadrature oracle, and `L^p` norms in space and space-time.
//! * [`sweeplab`]: exponent table, λ-sweeps, slope fits and the per-piece,
//!   orthogonality and concentration diagnostics.
//!
//! Fourier convention: `f̂(ξ) = ∫ f(x) e^{-i⟨x,ξ⟩} dx`, so that
//! `μ̂_t(ξ) = ∫ e^{-it⟨γ(s),ξ⟩} χ(s) ds`.

// `!(x > 0.0)` is used on purpose: it also rejects NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::needless_range_loop)]

pub mod avgop;
pub mod conechart;
pub mod curvekit;
mod error;
pub mod fft;
pub mod oscillator;
pub mod quadrature;
pub mod sweeplab;
pub mod synthkit;

pub use error::{Error, Result};

pub use avgop::{Averager, TimeWindow, WindowKind};
pub use conechart::ConeChart;
pub use curvekit::{ComponentFn, CurveKind, CurveSpec, ModelClassReport};
pub use oscillator::{alpha_n, CutoffSpec, MultiplierSample};
pub use sweeplab::{
    critical_exponent, evaluate_checks, fit_slope, sharpness_sweep, CheckResult, Quantity, SlopeFit, SweepConfig, SweepReport,
    Thresholds,
};
pub use synthkit::{CounterexampleSpec, GridPolicy, GridSpec, SpatialField, SpectralField};

pub use num_complex::Complex64;
