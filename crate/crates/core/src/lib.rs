//! Core algorithms for a numerical laboratory studying quasi-periodic
//! Schrödinger operators `H = -Δ + εV` on `R^d`, where the potential
//! `V(x) = Σ_{0<|n|≤Q} V_n e^{i⟨nω,x⟩}` is a finite trigonometric sum over
//! integer combinations of `l > d` basic frequencies `ω_1,…,ω_l ∈ R^d`.
//!
//! The crate provides, bottom to top:
//!
//! * [`potential`] — frequency arithmetic on the lattice `Z^l`, Hermitian
//!   Fourier data for `V`, and a finite-window Diophantine diagnostic;
//! * [`operator`] — the truncated operator `H_M(k)` restricted to the span of
//!   `e_{k+nω}`, `|n| ≤ M`, dense Hermitian diagonalization, and extraction of
//!   the isolated plane-wave-dominated eigenpair with its generalized
//!   eigenfunction coefficients;
//! * [`geometry`] — scans of the non-resonant set of quasi-momenta, radial
//!   solves for the isoenergetic surface `λ(κν) = λ*`, and angular
//!   derivatives of the surface radius;
//! * [`extension`] — mollified cutoffs and the blended dispersion
//!   `λ_ext(k) = |k|² + (λ(k) − |k|²)·η(k)` with gradient/Hessian access;
//! * [`transforms`] — analysis/synthesis transforms built from generalized
//!   eigenfunctions, energy-bounded projections, a Parseval check, and the
//!   comparison against the free projection;
//! * [`dynamics`] — wave packets assembled from the eigenpairs, evolution by
//!   eigen-expansion, position second moments, Abel/Cesàro averaging, and
//!   ballistic-transport verdicts;
//! * [`splitstep`] — an independent Strang split-step FFT propagator used to
//!   cross-validate the eigen-expansion evolution;
//! * [`stationary`] — stationary points of `⟨k,z⟩ − λ(k)`, oscillatory
//!   integrals, and leading-order asymptotics.
//!
//! All public types are immutable after construction and all operations are
//! deterministic for a fixed seed and configuration.

pub mod dynamics;
pub mod eigh;
pub mod error;
pub mod extension;
pub mod fft;
pub mod geometry;
pub mod grid;
pub mod mollify;
pub mod operator;
pub mod potential;
pub mod splitstep;
pub mod stationary;
pub mod transforms;

pub use error::{Error, Rejection, Result};
pub use potential::{FrequencyVector, LatticeIndex, PotentialSpec};

/// Complex scalar used throughout.
pub type Complex = num_complex::Complex64;
