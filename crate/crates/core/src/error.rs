//! Error and rejection types shared across the crate.
//!
//! Two failure families are distinguished deliberately:
//!
//! * [`Error`] — misuse or a tripped numerical guard (bad dimensions, grid
//!   resolution too coarse, eigensolver failure, …). These abort an
//!   experiment.
//! * [`Rejection`] — the *expected* outcome of probing a resonant
//!   quasi-momentum: the truncated operator has no isolated
//!   plane-wave-dominated eigenvalue there. Scans and surface solves record
//!   rejections per sample and continue.

use thiserror::Error;

/// Why a quasi-momentum was rejected by eigenpair extraction.
///
/// Both reasons mark `k` as resonant: either the candidate eigenvalue is not
/// separated from the rest of the spectrum, or its eigenvector is not
/// dominated by the `n = 0` plane-wave component.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Rejection {
    /// Spectral gap below the requested floor.
    GapTooSmall,
    /// `|v_0|²/Σ|v_n|² ≤ 1/2` for the best candidate eigenvector.
    DominanceFailure,
}

impl std::fmt::Display for Rejection {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Rejection::GapTooSmall => write!(f, "spectral gap below floor"),
            Rejection::DominanceFailure => write!(f, "plane-wave dominance failure"),
        }
    }
}

/// Crate-wide error type.
#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("invalid frequency data: {0}")]
    InvalidFrequencies(String),

    #[error("Hermitian symmetry violated for coefficient at n = {0:?}")]
    HermitianViolation(Vec<i64>),

    #[error("coefficient support violation: {0}")]
    SupportViolation(String),

    #[error("truncation radius M = {m} below coupling radius Q = {q}")]
    TruncationBelowCoupling { m: u32, q: u32 },

    #[error("matrix dimension {dim} exceeds configured cap {cap}")]
    DimensionCap { dim: usize, cap: usize },

    #[error("dense eigensolver failed: {0}")]
    EigensolveFailure(String),

    #[error("eigenpair extraction rejected quasi-momentum: {0}")]
    Rejected(Rejection),

    #[error("direction rejected: eigenpair extraction failed along the ray ({0})")]
    DirectionRejected(Rejection),

    #[error("root solve diverged: {0}")]
    NewtonDivergence(String),

    #[error("energy target {lambda} at or below floor {floor}")]
    EnergyBelowFloor { lambda: f64, floor: f64 },

    #[error("empty sample grid: {0}")]
    EmptyGrid(String),

    #[error("annulus inner radius {r_min} must exceed {need} to keep the lattice plane-wave ordering sane")]
    AnnulusTooSmall { r_min: f64, need: f64 },

    #[error("empty projection region")]
    EmptyRegion,

    #[error("spatial grid under-resolves momentum content: {0}")]
    NyquistViolation(String),

    #[error("mollification width {delta} below grid resolution (need ≥ {need})")]
    DeltaBelowResolution { delta: f64, need: f64 },

    #[error("point outside working grid: {0}")]
    OutsideGrid(String),

    #[error("time-step guard tripped: {0}")]
    StepGuard(String),

    #[error("quadrature resolution guard tripped: {0}")]
    ResolutionGuard(String),

    #[error("moment record too short: need samples up to t ≥ {need}, have {have}")]
    RecordTooShort { need: f64, have: f64 },

    #[error("neighbor direction rejected; centered angular derivative unavailable")]
    NeighborRejected,

    #[error("stationary point search outside region of validity: {0}")]
    OutsideRegion(String),

    #[error("singular Hessian at stationary point (min |eigenvalue| = {0:.3e})")]
    SingularHessian(f64),

    #[error("serialization error: {0}")]
    Serialization(String),
}

/// Crate-wide result alias.
pub type Result<T> = std::result::Result<T, Error>;
