//! The truncated operator `H_M(k)` and its isolated eigenpair.
//!
//! `H_M(k)` is the restriction of `-Δ + εV` to the span of the exponentials
//! `e_{k+nω}` with `|n| ≤ M`: a dense Hermitian matrix with diagonal
//! `|k+nω|²` and off-diagonal coupling `ε·V_{n−n'}` for `0 < |n−n'| ≤ Q`.
//! For non-resonant quasi-momenta `k` exactly one eigenvalue stays isolated
//! and plane-wave dominated; its eigenvector supplies the generalized
//! eigenfunction `U(k,x) = Σ_n v_n e^{i⟨k+nω,x⟩}`.
//!
//! Eigenvectors are renormalized to `v_0 = 1` — the plane-wave component
//! carries unit amplitude — which pins the overall phase globally and makes
//! the corrector coefficients directly comparable across truncation radii
//! and across neighboring quasi-momenta (essential when differentiating
//! coefficient tables in `k`). Plane-wave dominance is always measured on the
//! unit-norm vector *before* this renormalization.

use crate::eigh::{self, Eigh};
use crate::error::{Error, Rejection, Result};
use crate::potential::{frequency_of, FrequencyVector, LatticeIndex, PotentialSpec};
use crate::Complex;
use serde::{Deserialize, Serialize};
use std::sync::Arc;

/// Default cap on the dense matrix dimension.
pub const DIM_CAP_DEFAULT: usize = 4096;

/// Default coefficient of the spectral-gap floor `c_g·|k|⁻¹`.
pub const GAP_FLOOR_COEFF_DEFAULT: f64 = 0.1;

/// Spectral-gap floor used by eigenpair extraction: `c_g / |k|` with the
/// default coefficient. A polynomial floor keeps the accepted set of
/// quasi-momenta non-trivial at reachable scales.
pub fn default_gap_floor(k_norm: f64) -> f64 {
    GAP_FLOOR_COEFF_DEFAULT / k_norm.max(1e-9)
}

/// The lattice box `offset + [-M, M]^l`, enumerated lexicographically.
///
/// Shared by the operator and its eigenpairs; the offset form exists because
/// replacing `k → k + n₀ω` while relabeling `n → n − n₀` maps the standard
/// box onto an offset box with an identical spectrum (gauge covariance).
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LatticeWindow {
    l: usize,
    m: i64,
    offset: Vec<i64>,
    indices: Vec<LatticeIndex>,
}

impl LatticeWindow {
    /// Box `[-M, M]^l` centered at the origin.
    pub fn centered(l: usize, m: u32) -> Arc<Self> {
        Self::with_offset(l, m, &LatticeIndex(vec![0; l]))
    }

    /// Box `offset + [-M, M]^l`.
    pub fn with_offset(l: usize, m: u32, offset: &LatticeIndex) -> Arc<Self> {
        assert_eq!(offset.0.len(), l, "offset length must equal l");
        let m = m as i64;
        let side = (2 * m + 1) as usize;
        let count = side.pow(l as u32);
        let mut indices = Vec::with_capacity(count);
        let mut n: Vec<i64> = offset.0.iter().map(|&c| c - m).collect();
        for _ in 0..count {
            indices.push(LatticeIndex(n.clone()));
            for pos in (0..l).rev() {
                if n[pos] < offset.0[pos] + m {
                    n[pos] += 1;
                    for (c, &o) in n.iter_mut().zip(&offset.0).skip(pos + 1) {
                        *c = o - m;
                    }
                    break;
                }
            }
        }
        Arc::new(Self {
            l,
            m,
            offset: offset.0.clone(),
            indices,
        })
    }

    /// Number of lattice sites `(2M+1)^l`.
    pub fn len(&self) -> usize {
        self.indices.len()
    }

    /// True when the window is empty (never for valid construction).
    pub fn is_empty(&self) -> bool {
        self.indices.is_empty()
    }

    /// Lattice truncation radius `M`.
    pub fn radius(&self) -> u32 {
        self.m as u32
    }

    /// Site at flat position `i`.
    pub fn site(&self, i: usize) -> &LatticeIndex {
        &self.indices[i]
    }

    /// All sites in lexicographic order.
    pub fn sites(&self) -> &[LatticeIndex] {
        &self.indices
    }

    /// Flat position of a lattice index, when inside the box.
    pub fn position(&self, n: &LatticeIndex) -> Option<usize> {
        if n.0.len() != self.l {
            return None;
        }
        let side = 2 * self.m + 1;
        let mut idx: usize = 0;
        for (&c, &o) in n.0.iter().zip(&self.offset) {
            let rel = c - o + self.m;
            if rel < 0 || rel > 2 * self.m {
                return None;
            }
            idx = idx * side as usize + rel as usize;
        }
        Some(idx)
    }

    /// Flat position of the origin `n = 0`, when inside the box.
    pub fn zero_position(&self) -> Option<usize> {
        self.position(&LatticeIndex(vec![0; self.l]))
    }
}

/// Dense Hermitian restriction of the operator to a lattice box.
#[derive(Debug, Clone)]
pub struct TruncatedOperator {
    k: Vec<f64>,
    q: u32,
    window: Arc<LatticeWindow>,
    freq: FrequencyVector,
    /// Row-major Hermitian matrix.
    matrix: Vec<Complex>,
}

impl TruncatedOperator {
    /// Quasi-momentum.
    pub fn k(&self) -> &[f64] {
        &self.k
    }

    /// Matrix dimension `(2M+1)^l`.
    pub fn dim(&self) -> usize {
        self.window.len()
    }

    /// Truncation radius `M`.
    pub fn m(&self) -> u32 {
        self.window.radius()
    }

    /// Coupling range `Q` of the potential the operator was built from.
    pub fn q(&self) -> u32 {
        self.q
    }

    /// The lattice box.
    pub fn window(&self) -> &Arc<LatticeWindow> {
        &self.window
    }

    /// Entry `H[i, j]` in the lexicographic lattice ordering.
    pub fn entry(&self, i: usize, j: usize) -> Complex {
        self.matrix[i * self.dim() + j]
    }

    /// Row-major dense storage.
    pub fn matrix(&self) -> &[Complex] {
        &self.matrix
    }

    /// `|k + nω|²` for the site at flat position `i`.
    pub fn diagonal(&self, i: usize) -> f64 {
        self.matrix[i * self.dim() + i].re
    }
}

/// Builds `H_M(k)` on the standard box `[-M, M]^l`.
///
/// Requires `M ≥ Q` so that at least the central site sees its full coupling
/// stencil. The matrix is Hermitian by construction and banded in the sup
/// norm: entries vanish whenever `|n − n'| > Q`.
pub fn build_operator(
    k: &[f64],
    m: u32,
    spec: &PotentialSpec,
    coupling: f64,
) -> Result<TruncatedOperator> {
    let window = LatticeWindow::centered(spec.freq().count(), m);
    build_operator_on(k, window, spec, coupling)
}

/// Builds the operator on an explicit (possibly offset) lattice box.
pub fn build_operator_on(
    k: &[f64],
    window: Arc<LatticeWindow>,
    spec: &PotentialSpec,
    coupling: f64,
) -> Result<TruncatedOperator> {
    let freq = spec.freq().clone();
    if k.len() != freq.dim() {
        return Err(Error::DimensionMismatch(format!(
            "quasi-momentum has {} components, expected d = {}",
            k.len(),
            freq.dim()
        )));
    }
    let m = window.radius();
    if m < spec.q() {
        return Err(Error::TruncationBelowCoupling { m, q: spec.q() });
    }
    let dim = window.len();
    let mut matrix = vec![Complex::new(0.0, 0.0); dim * dim];

    for i in 0..dim {
        let f = frequency_of(window.site(i), &freq)?;
        let diag: f64 = k.iter().zip(&f).map(|(a, b)| (a + b) * (a + b)).sum();
        matrix[i * dim + i] = Complex::new(diag, 0.0);
    }
    if coupling != 0.0 {
        for i in 0..dim {
            let ni = window.site(i);
            for (dn, v) in spec.coeffs() {
                if let Some(j) = window.position(&ni.sub(dn)) {
                    matrix[i * dim + j] = coupling * v;
                }
            }
        }
    }
    Ok(TruncatedOperator {
        k: k.to_vec(),
        q: spec.q(),
        window,
        freq,
        matrix,
    })
}

/// All eigenvalues of the truncated operator, ascending, under the default
/// dimension cap.
pub fn spectrum(op: &TruncatedOperator) -> Result<Vec<f64>> {
    spectrum_with_cap(op, DIM_CAP_DEFAULT)
}

/// All eigenvalues with an explicit dimension cap.
pub fn spectrum_with_cap(op: &TruncatedOperator, cap: usize) -> Result<Vec<f64>> {
    let dim = op.dim();
    if dim > cap {
        return Err(Error::DimensionCap { dim, cap });
    }
    eigh::eigvalsh(&op.matrix, dim)
}

/// The isolated plane-wave-dominated eigenpair of a truncated operator.
#[derive(Debug, Clone)]
pub struct GeneralizedEigenpair {
    k: Vec<f64>,
    m: u32,
    lambda: f64,
    gap: f64,
    dominance: f64,
    residual: f64,
    window: Arc<LatticeWindow>,
    freq: FrequencyVector,
    /// Coefficients aligned with the window sites, normalized to `v_0 = 1`.
    coeffs: Vec<Complex>,
}

impl GeneralizedEigenpair {
    /// Quasi-momentum.
    pub fn k(&self) -> &[f64] {
        &self.k
    }

    /// Truncation radius used for the extraction.
    pub fn m(&self) -> u32 {
        self.m
    }

    /// The isolated eigenvalue `λ(k)`.
    pub fn lambda(&self) -> f64 {
        self.lambda
    }

    /// Distance from `λ(k)` to the nearest other eigenvalue.
    pub fn gap(&self) -> f64 {
        self.gap
    }

    /// `|v_0|²/Σ|v_n|²` measured on the unit-norm eigenvector.
    pub fn dominance(&self) -> f64 {
        self.dominance
    }

    /// Relative eigen-residual `‖Hv − λv‖₂/‖v‖₂` of the extracted pair.
    pub fn residual(&self) -> f64 {
        self.residual
    }

    /// The lattice box of the extraction.
    pub fn window(&self) -> &Arc<LatticeWindow> {
        &self.window
    }

    /// Coefficient `v_n` (zero outside the box). `v_0 = 1` exactly.
    pub fn coeff(&self, n: &LatticeIndex) -> Complex {
        match self.window.position(n) {
            Some(i) => self.coeffs[i],
            None => Complex::new(0.0, 0.0),
        }
    }

    /// Coefficients aligned with `window().sites()`.
    pub fn coeffs(&self) -> &[Complex] {
        &self.coeffs
    }

    /// `Σ_n |v_n|²` in the `v_0 = 1` normalization (always ≥ 1).
    pub fn norm_sq(&self) -> f64 {
        self.coeffs.iter().map(|v| v.norm_sqr()).sum()
    }

    /// Momentum `k + nω` of the site at flat position `i`.
    pub fn shifted_momentum(&self, i: usize) -> Vec<f64> {
        let f = frequency_of(self.window.site(i), &self.freq)
            .expect("window sites always match the frequency count");
        self.k.iter().zip(&f).map(|(a, b)| a + b).collect()
    }

    /// Gradient `∇λ(k)` from the first-order perturbation identity
    /// `∇λ = Σ_n 2(k+nω)|v_n|² / Σ_n |v_n|²`, exact for the truncated
    /// matrix at fixed box.
    pub fn grad_lambda(&self) -> Vec<f64> {
        let d = self.k.len();
        let mut acc = vec![0.0; d];
        let mut wsum = 0.0;
        for (i, v) in self.coeffs.iter().enumerate() {
            let w = v.norm_sqr();
            if w == 0.0 {
                continue;
            }
            wsum += w;
            let p = self.shifted_momentum(i);
            for (a, b) in acc.iter_mut().zip(&p) {
                *a += 2.0 * b * w;
            }
        }
        for a in &mut acc {
            *a /= wsum;
        }
        acc
    }

    /// Evaluates the generalized eigenfunction
    /// `U(k,x) = Σ_n v_n e^{i⟨k+nω,x⟩}` at a spatial point.
    pub fn eigenfunction_value(&self, x: &[f64]) -> Complex {
        let mut acc = Complex::new(0.0, 0.0);
        for (i, v) in self.coeffs.iter().enumerate() {
            if v.norm_sqr() == 0.0 {
                continue;
            }
            let p = self.shifted_momentum(i);
            let phase: f64 = p.iter().zip(x).map(|(a, b)| a * b).sum();
            acc += v * Complex::from_polar(1.0, phase);
        }
        acc
    }

    /// `Σ_{n≠0} |v_n|` — an upper bound for the sup norm of the corrector
    /// `u(k,x) = e^{-i⟨k,x⟩}U(k,x) − 1`.
    pub fn u_sup_bound(&self) -> f64 {
        let zero = self.window.zero_position();
        self.coeffs
            .iter()
            .enumerate()
            .filter(|(i, _)| Some(*i) != zero)
            .map(|(_, v)| v.norm())
            .sum()
    }

    /// Serializes to the interchange JSON document.
    pub fn to_json(&self) -> String {
        let coeffs = self
            .window
            .sites()
            .iter()
            .zip(&self.coeffs)
            .filter(|(_, v)| v.norm_sqr() > 0.0)
            .map(|(n, v)| PairCoeffDoc {
                n: n.0.clone(),
                re: v.re,
                im: v.im,
            })
            .collect();
        let doc = EigenpairDoc {
            k: self.k.clone(),
            m: self.m,
            lambda: self.lambda,
            gap: self.gap,
            dominance: self.dominance,
            coeffs,
        };
        serde_json::to_string_pretty(&doc).expect("eigenpair serialization cannot fail")
    }
}

#[derive(Serialize, Deserialize)]
struct PairCoeffDoc {
    n: Vec<i64>,
    re: f64,
    im: f64,
}

#[derive(Serialize, Deserialize)]
struct EigenpairDoc {
    k: Vec<f64>,
    #[serde(rename = "M")]
    m: u32,
    lambda: f64,
    gap: f64,
    dominance: f64,
    coeffs: Vec<PairCoeffDoc>,
}

/// Summary of an extraction attempt, recorded for accepted and rejected
/// quasi-momenta alike (scans persist gap and dominance either way).
#[derive(Debug, Clone, Copy)]
pub struct ExtractionReport {
    /// Candidate eigenvalue (the one whose eigenvector maximizes `|v_0|²`).
    pub lambda: f64,
    /// Distance to the nearest other eigenvalue.
    pub gap: f64,
    /// `|v_0|²` of the unit-norm candidate eigenvector.
    pub dominance: f64,
    /// `None` when accepted.
    pub rejection: Option<Rejection>,
}

/// Extracts the isolated eigenpair, or explains why `k` is resonant.
///
/// Selection rule: the eigenvalue whose eigenvector maximizes `|v_0|²` —
/// robust when two eigenvalues cross near `|k|²`. Acceptance requires
/// plane-wave dominance `> 1/2` *and* spectral gap `≥ gap_floor`.
pub fn extract_pair(
    op: &TruncatedOperator,
    gap_floor: f64,
) -> Result<GeneralizedEigenpair> {
    match extract_pair_report(op, gap_floor)? {
        (Some(pair), _) => Ok(pair),
        (None, report) => Err(Error::Rejected(
            report.rejection.expect("rejected extraction carries a reason"),
        )),
    }
}

/// Extraction with the full report; `Ok((None, report))` signals rejection.
pub fn extract_pair_report(
    op: &TruncatedOperator,
    gap_floor: f64,
) -> Result<(Option<GeneralizedEigenpair>, ExtractionReport)> {
    let dim = op.dim();
    if dim > DIM_CAP_DEFAULT {
        return Err(Error::DimensionCap {
            dim,
            cap: DIM_CAP_DEFAULT,
        });
    }
    let zero = op.window.zero_position().ok_or_else(|| {
        Error::OutsideGrid("lattice box does not contain n = 0".into())
    })?;
    let eig: Eigh = eigh::eigh(&op.matrix, dim)?;

    let mut best = 0usize;
    let mut best_w = -1.0;
    for j in 0..dim {
        let w = eig.vector(j)[zero].norm_sqr();
        if w > best_w {
            best_w = w;
            best = j;
        }
    }
    let lambda = eig.values[best];
    let gap = eig
        .values
        .iter()
        .enumerate()
        .filter(|(j, _)| *j != best)
        .map(|(_, &mu)| (mu - lambda).abs())
        .fold(f64::INFINITY, f64::min);
    let dominance = best_w; // unit-norm eigenvector: Σ|v|² = 1.

    let rejection = if !(dominance > 0.5) {
        Some(Rejection::DominanceFailure)
    } else if gap < gap_floor {
        Some(Rejection::GapTooSmall)
    } else {
        None
    };
    let report = ExtractionReport {
        lambda,
        gap,
        dominance,
        rejection,
    };
    if rejection.is_some() {
        return Ok((None, report));
    }

    let unit = eig.vector(best);
    // Residual on the unit vector before renormalization.
    let mut res_sq = 0.0;
    for i in 0..dim {
        let mut acc = Complex::new(0.0, 0.0);
        for j in 0..dim {
            acc += op.matrix[i * dim + j] * unit[j];
        }
        acc -= unit[i] * lambda;
        res_sq += acc.norm_sqr();
    }
    let residual = res_sq.sqrt();

    let v0 = unit[zero];
    let coeffs: Vec<Complex> = unit.iter().map(|v| v / v0).collect();
    let pair = GeneralizedEigenpair {
        k: op.k.clone(),
        m: op.m(),
        lambda,
        gap,
        dominance,
        residual,
        window: op.window.clone(),
        freq: op.freq.clone(),
        coeffs,
    };
    Ok((Some(pair), report))
}

/// One rung of the truncation ladder.
#[derive(Debug, Clone, Copy)]
pub struct LadderStep {
    /// Truncation radius of this rung.
    pub m: u32,
    /// Extracted eigenvalue at this radius.
    pub lambda: f64,
    /// `|λ_M − λ_{M_prev}|` from the previous rung (`None` on the first).
    pub drift: Option<f64>,
}

/// Extracts the eigenpair over an ascending ladder of truncation radii and
/// reports the eigenvalue drift between successive rungs.
///
/// Convergence at reachable scales is declared when the final drift falls
/// below `10⁻¹⁰·|k|²`; the drift sequence itself is the evidence that the
/// finite ladder stands in for the untracked infinite refinement.
pub fn ladder_converge(
    k: &[f64],
    spec: &PotentialSpec,
    coupling: f64,
    levels: &[u32],
    gap_floor: f64,
) -> Result<Vec<LadderStep>> {
    if levels.is_empty() {
        return Err(Error::EmptyGrid("empty truncation ladder".into()));
    }
    if levels.windows(2).any(|w| w[1] <= w[0]) {
        return Err(Error::EmptyGrid(
            "truncation ladder must be strictly ascending".into(),
        ));
    }
    let mut out = Vec::with_capacity(levels.len());
    let mut prev: Option<f64> = None;
    for &m in levels {
        let op = build_operator(k, m, spec, coupling)?;
        let pair = extract_pair(&op, gap_floor)?;
        let lambda = pair.lambda();
        out.push(LadderStep {
            m,
            lambda,
            drift: prev.map(|p| (lambda - p).abs()),
        });
        prev = Some(lambda);
    }
    Ok(out)
}

/// True when the final ladder drift is below `10⁻¹⁰·|k|²`.
pub fn ladder_converged(steps: &[LadderStep], k_norm_sq: f64) -> bool {
    steps
        .last()
        .and_then(|s| s.drift)
        .map(|d| d < 1e-10 * k_norm_sq)
        .unwrap_or(false)
}

/// Independent second-order perturbation estimate
/// `λ ≈ |k|² + ε² Σ_{0<|n|≤Q} |V_n|² / (|k|² − |k+nω|²)`.
///
/// Used as an oracle for the eigensolver path: the difference from the
/// extracted eigenvalue is `O(ε³)` at non-resonant `k`. Fails when a
/// first-order denominator is numerically zero (resonant `k`).
pub fn second_order_estimate(k: &[f64], spec: &PotentialSpec, coupling: f64) -> Result<f64> {
    let k_sq: f64 = k.iter().map(|c| c * c).sum();
    let mut acc = k_sq;
    for (n, v) in spec.coeffs() {
        let f = frequency_of(n, spec.freq())?;
        let shifted_sq: f64 = k.iter().zip(&f).map(|(a, b)| (a + b) * (a + b)).sum();
        let denom = k_sq - shifted_sq;
        if denom.abs() < 1e-12 * (1.0 + k_sq) {
            return Err(Error::NewtonDivergence(format!(
                "vanishing first-order denominator at n = {:?}",
                n.0
            )));
        }
        acc += coupling * coupling * v.norm_sqr() / denom;
    }
    Ok(acc)
}

/// Smallest first-order detuning `min_{V_n ≠ 0} ||k+nω|² − |k|²|` over the
/// lattice modes directly coupled by the potential.
///
/// This is the quantity that controls the leading corrector coefficients; a
/// small value flags `k` as lying in a first-order resonance band even when
/// level repulsion keeps the spectral gap above its floor. Asymptotic-law
/// measurements filter their maxima by `resonance_margin(k) ≥ ρ·|k|` to stay
/// on the set where the decay laws hold.
pub fn resonance_margin(k: &[f64], spec: &PotentialSpec) -> Result<f64> {
    let k_sq: f64 = k.iter().map(|c| c * c).sum();
    let mut best = f64::INFINITY;
    for (n, _) in spec.coeffs() {
        let f = frequency_of(n, spec.freq())?;
        let shifted_sq: f64 = k.iter().zip(&f).map(|(a, b)| (a + b) * (a + b)).sum();
        best = best.min((shifted_sq - k_sq).abs());
    }
    Ok(best)
}

/// Default coefficient for the resonance-margin filter `ρ·|k|`.
pub const RESONANCE_MARGIN_COEFF_DEFAULT: f64 = 0.1;
