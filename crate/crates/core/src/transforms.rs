//! Analysis and synthesis transforms over energy-bounded cell regions.
//!
//! On the accepted (non-resonant) part of a quasi-momentum lattice, each cell
//! `k` carries a generalized eigenpair whose eigenfunction is the
//! plane-wave-dominated combination `U(k,x) = Σ_n ṽ_n e^{i⟨k+nω,x⟩}` with
//! ℓ²-normalized coefficients `ṽ = v/‖v‖`.  The analysis transform maps a
//! closed-form momentum profile `F̂` to cell coefficients
//!
//! `(T F)(k) = Σ_n conj(ṽ_n) F̂(k + nω)`,
//!
//! the synthesis transform maps cell coefficients back to a spatial field
//!
//! `(S f)(x) = (2π)^{-d/2} Σ_cells w f(k) U(k,x)`,
//!
//! and the composition `E = S∘T` is the (approximate) spectral projection
//! onto the region.  At coupling zero everything collapses to discrete
//! Fourier analysis/synthesis, which the tests pin to roundoff.
//!
//! Quadrature is midpoint on the uniform cell lattice: the per-cell weight is
//! the cell volume `(Δk)^d`.  Region lattices are commensurate with the
//! synthesis box (`Δk = 2π/L`), so every cell sits exactly on a discrete
//! Fourier mode of the box.

use rayon::prelude::*;

use crate::dynamics::{assemble_field, assemble_field_free, FieldState};
use crate::error::{Error, Result};
use crate::fft::FftEngine;
use crate::grid::KGrid;
use crate::operator::{build_operator, extract_pair, GeneralizedEigenpair, LatticeWindow};
use crate::potential::PotentialSpec;
use crate::Complex;
use std::sync::Arc;

/// Coefficient magnitude below which a lattice site is skipped when a
/// transform has to run one FFT pass per site (field-input analysis and
/// packet synthesis). Sites this small contribute below every stated
/// tolerance; the cut keeps the per-site FFT count bounded.
pub const SITE_SUPPORT_THRESHOLD: f64 = 1e-9;

/// One accepted cell of a projection region.
#[derive(Debug, Clone)]
pub struct RegionCell {
    /// Flat index into the parent lattice.
    pub flat: usize,
    /// Quasi-momentum of the cell.
    pub k: Vec<f64>,
    /// Eigenpair extracted at `k` (coefficients in the `v₀ = 1` gauge).
    pub pair: GeneralizedEigenpair,
    /// `1/‖v‖`: rescales pair coefficients to the unit-ℓ²-norm convention.
    pub inv_norm: f64,
}

impl RegionCell {
    /// Eigenvalue at this cell.
    pub fn lambda(&self) -> f64 {
        self.pair.lambda()
    }

    /// Unit-norm coefficient of lattice site `i` (window order).
    pub fn normalized_coeff(&self, i: usize) -> Complex {
        self.pair.coeffs()[i] * self.inv_norm
    }
}

/// Energy-bounded set of accepted cells with their eigenpairs and midpoint
/// quadrature weights.
#[derive(Debug, Clone)]
pub struct ProjectionRegion {
    grid: KGrid,
    lambda_cap: f64,
    cells: Vec<RegionCell>,
    by_flat: Vec<Option<usize>>,
    window: Arc<LatticeWindow>,
}

impl ProjectionRegion {
    /// Builds the region over every lattice cell: extracts an eigenpair per
    /// cell (spectral-gap floor `gap_floor_coeff/|k|`), keeps accepted cells
    /// with `λ < lambda_cap`.
    pub fn build(
        grid: &KGrid,
        spec: &PotentialSpec,
        coupling: f64,
        m: u32,
        lambda_cap: f64,
        gap_floor_coeff: f64,
    ) -> Result<Self> {
        Self::build_filtered(grid, spec, coupling, m, lambda_cap, gap_floor_coeff, |_| {
            true
        })
    }

    /// Same as [`ProjectionRegion::build`] but only visits lattice cells whose
    /// quasi-momentum passes `keep` — the eigensolve is skipped entirely for
    /// the rest. Use this to restrict a region to the support of a packet.
    pub fn build_filtered(
        grid: &KGrid,
        spec: &PotentialSpec,
        coupling: f64,
        m: u32,
        lambda_cap: f64,
        gap_floor_coeff: f64,
        keep: impl Fn(&[f64]) -> bool + Sync,
    ) -> Result<Self> {
        if grid.dim() != spec.freq().dim() {
            return Err(Error::DimensionMismatch(format!(
                "region lattice dimension {} does not match potential dimension {}",
                grid.dim(),
                spec.freq().dim()
            )));
        }
        let extracted: Vec<Option<GeneralizedEigenpair>> = (0..grid.len())
            .into_par_iter()
            .map(|flat| -> Result<Option<GeneralizedEigenpair>> {
                let k = grid.point(flat);
                if !keep(&k) {
                    return Ok(None);
                }
                let norm = k.iter().map(|c| c * c).sum::<f64>().sqrt();
                let floor = if gap_floor_coeff == 0.0 {
                    0.0
                } else {
                    gap_floor_coeff / norm.max(1e-9)
                };
                let op = build_operator(&k, m, spec, coupling)?;
                match extract_pair(&op, floor) {
                    Ok(pair) => {
                        if pair.lambda() < lambda_cap {
                            Ok(Some(pair))
                        } else {
                            Ok(None)
                        }
                    }
                    Err(Error::Rejected(_)) => Ok(None),
                    Err(e) => Err(e),
                }
            })
            .collect::<Result<Vec<_>>>()?;

        let mut cells = Vec::new();
        let mut by_flat = vec![None; grid.len()];
        for (flat, entry) in extracted.into_iter().enumerate() {
            if let Some(pair) = entry {
                let inv_norm = 1.0 / pair.norm_sq().sqrt();
                by_flat[flat] = Some(cells.len());
                cells.push(RegionCell {
                    flat,
                    k: grid.point(flat),
                    pair,
                    inv_norm,
                });
            }
        }
        if cells.is_empty() {
            return Err(Error::EmptyRegion);
        }
        let window = cells[0].pair.window().clone();
        Ok(Self {
            grid: grid.clone(),
            lambda_cap,
            cells,
            by_flat,
            window,
        })
    }

    /// Sub-region of cells passing `pred` (same lattice, same pairs — no new
    /// eigensolves).
    pub fn filter(&self, pred: impl Fn(&RegionCell) -> bool) -> Result<Self> {
        let mut cells = Vec::new();
        let mut by_flat = vec![None; self.grid.len()];
        for cell in &self.cells {
            if pred(cell) {
                by_flat[cell.flat] = Some(cells.len());
                cells.push(cell.clone());
            }
        }
        if cells.is_empty() {
            return Err(Error::EmptyRegion);
        }
        Ok(Self {
            grid: self.grid.clone(),
            lambda_cap: self.lambda_cap,
            cells,
            by_flat,
            window: self.window.clone(),
        })
    }

    /// Underlying cell lattice.
    pub fn grid(&self) -> &KGrid {
        &self.grid
    }

    /// Spatial dimension.
    pub fn dim(&self) -> usize {
        self.grid.dim()
    }

    /// Accepted cells in flat lattice order.
    pub fn cells(&self) -> &[RegionCell] {
        &self.cells
    }

    /// Number of accepted cells.
    pub fn len(&self) -> usize {
        self.cells.len()
    }

    /// Regions are non-empty by construction.
    pub fn is_empty(&self) -> bool {
        false
    }

    /// Midpoint quadrature weight per cell: the cell volume `(Δk)^d`.
    pub fn weight(&self) -> f64 {
        self.grid.spacing().powi(self.grid.dim() as i32)
    }

    /// Energy cap λ_cap used at construction.
    pub fn lambda_cap(&self) -> f64 {
        self.lambda_cap
    }

    /// Shared coefficient window (all cells use the same centered box).
    pub fn window(&self) -> &Arc<LatticeWindow> {
        &self.window
    }

    /// Region cell living at lattice flat index `flat`, if any.
    pub fn cell_at_flat(&self, flat: usize) -> Option<&RegionCell> {
        self.by_flat
            .get(flat)
            .copied()
            .flatten()
            .map(|i| &self.cells[i])
    }

    /// Acceptance mask over the full lattice (for cutoff construction).
    pub fn mask(&self) -> Vec<bool> {
        let mut mask = vec![false; self.grid.len()];
        for cell in &self.cells {
            mask[cell.flat] = true;
        }
        mask
    }

    /// Largest eigenfunction deviation bound `Σ_{n≠0}|v_n|` over the region
    /// (coefficients in the `v₀ = 1` gauge, an upper bound for the unit-norm
    /// convention).
    pub fn max_u_sup_bound(&self) -> f64 {
        self.cells
            .iter()
            .map(|c| c.pair.u_sup_bound())
            .fold(0.0, f64::max)
    }

    /// Largest group-velocity magnitude `|∇λ|` over the region.
    pub fn max_grad_norm(&self) -> f64 {
        self.cells
            .iter()
            .map(|c| {
                c.pair
                    .grad_lambda()
                    .iter()
                    .map(|g| g * g)
                    .sum::<f64>()
                    .sqrt()
            })
            .fold(0.0, f64::max)
    }

    /// Lattice sites carrying a unit-norm coefficient above `threshold` in at
    /// least one cell, as window positions. Site 0 of the result is always
    /// the window's zero site.
    pub fn support_sites(&self, threshold: f64) -> Vec<usize> {
        let zero = self
            .window
            .zero_position()
            .expect("centered windows contain the origin");
        let mut out = vec![zero];
        for i in 0..self.window.len() {
            if i == zero {
                continue;
            }
            let max_mag = self
                .cells
                .iter()
                .map(|c| c.normalized_coeff(i).norm())
                .fold(0.0, f64::max);
            if max_mag > threshold {
                out.push(i);
            }
        }
        out
    }
}

/// Cell-indexed complex coefficients over a region (values aligned with
/// `region.cells()` order), normed with the region's quadrature weight.
#[derive(Debug, Clone)]
pub struct CoefficientField {
    weight: f64,
    values: Vec<Complex>,
}

impl CoefficientField {
    /// Wraps per-cell values for `region`.
    pub fn from_values(region: &ProjectionRegion, values: Vec<Complex>) -> Result<Self> {
        if values.len() != region.len() {
            return Err(Error::DimensionMismatch(format!(
                "coefficient field has {} values, region has {} cells",
                values.len(),
                region.len()
            )));
        }
        Ok(Self {
            weight: region.weight(),
            values,
        })
    }

    /// Per-cell values in region order.
    pub fn values(&self) -> &[Complex] {
        &self.values
    }

    /// Quadrature weight used by the norm.
    pub fn weight(&self) -> f64 {
        self.weight
    }

    /// Weighted squared ℓ²-norm `Σ w |f|²`.
    pub fn norm_sq(&self) -> f64 {
        self.weight * self.values.iter().map(|v| v.norm_sqr()).sum::<f64>()
    }

    /// Weighted ℓ²-norm.
    pub fn norm(&self) -> f64 {
        self.norm_sq().sqrt()
    }

    /// Weighted inner product `Σ w conj(f) g`.
    pub fn inner(&self, other: &CoefficientField) -> Complex {
        self.weight
            * self
                .values
                .iter()
                .zip(&other.values)
                .map(|(a, b)| a.conj() * b)
                .sum::<Complex>()
    }
}

/// Closed-form momentum-space profile: exactly evaluable at arbitrary `k`,
/// with an exact squared L²-norm. Keeping analysis inputs closed-form makes
/// `F̂(k + nω)` exact and eliminates one quadrature layer.
pub trait MomentumProfile: Sync {
    /// Spatial dimension.
    fn dim(&self) -> usize;
    /// `F̂(k)`.
    fn eval(&self, k: &[f64]) -> Complex;
    /// `∫ |F̂|² dk` in closed form.
    fn norm_sq(&self) -> f64;
}

/// Gaussian momentum profile `F̂(k) = A·exp(−|k − c|²/(2σ²))`.
///
/// Its spatial side is again Gaussian: `F(x) = A σ^d e^{−σ²|x|²/2} e^{i⟨c,x⟩}`
/// — a width-`1/σ` envelope modulated at momentum `c`.
#[derive(Debug, Clone)]
pub struct GaussianProfile {
    /// Momentum center `c`.
    pub center: Vec<f64>,
    /// Momentum width σ.
    pub sigma: f64,
    /// Complex amplitude `A`.
    pub amplitude: Complex,
}

impl GaussianProfile {
    /// Profile with amplitude chosen so `‖F‖ = 1`.
    pub fn normalized(center: Vec<f64>, sigma: f64) -> Self {
        let d = center.len() as i32;
        let unit_norm_sq = std::f64::consts::PI.powi(d).sqrt() * sigma.powi(d);
        Self {
            center,
            sigma,
            amplitude: Complex::new(1.0 / unit_norm_sq.sqrt(), 0.0),
        }
    }

    /// Spatial-side values `F(x)` in closed form.
    pub fn eval_real(&self, x: &[f64]) -> Complex {
        let d = self.center.len() as i32;
        let r2: f64 = x.iter().map(|c| c * c).sum();
        let phase: f64 = self.center.iter().zip(x).map(|(c, xi)| c * xi).sum();
        self.amplitude
            * self.sigma.powi(d)
            * (-0.5 * self.sigma * self.sigma * r2).exp()
            * Complex::from_polar(1.0, phase)
    }
}

impl MomentumProfile for GaussianProfile {
    fn dim(&self) -> usize {
        self.center.len()
    }

    fn eval(&self, k: &[f64]) -> Complex {
        let r2: f64 = k
            .iter()
            .zip(&self.center)
            .map(|(a, c)| (a - c) * (a - c))
            .sum();
        self.amplitude * (-r2 / (2.0 * self.sigma * self.sigma)).exp()
    }

    fn norm_sq(&self) -> f64 {
        let d = self.center.len() as i32;
        self.amplitude.norm_sqr() * std::f64::consts::PI.powi(d).sqrt() * self.sigma.powi(d)
    }
}

/// Analysis transform: `(T F)(k) = Σ_n conj(ṽ_n) F̂(k + nω)` per region cell.
pub fn forward_transform(
    profile: &dyn MomentumProfile,
    region: &ProjectionRegion,
) -> Result<CoefficientField> {
    if profile.dim() != region.dim() {
        return Err(Error::DimensionMismatch(format!(
            "profile dimension {} does not match region dimension {}",
            profile.dim(),
            region.dim()
        )));
    }
    let values: Vec<Complex> = region
        .cells()
        .par_iter()
        .map(|cell| {
            let mut acc = Complex::new(0.0, 0.0);
            for i in 0..cell.pair.coeffs().len() {
                let v = cell.normalized_coeff(i);
                if v.norm_sqr() == 0.0 {
                    continue;
                }
                let shifted = cell.pair.shifted_momentum(i);
                acc += v.conj() * profile.eval(&shifted);
            }
            acc
        })
        .collect();
    CoefficientField::from_values(region, values)
}

/// Analysis transform of a sampled spatial field.
///
/// `F̂(k + nω)` is read off one forward FFT of the field modulated by
/// `e^{-i⟨nω,x⟩}`, one pass per lattice site in the region's coefficient
/// support. The field's box must be commensurate with the region lattice
/// (`L = 2π/Δk · integer`).
pub fn forward_transform_field(
    state: &FieldState,
    region: &ProjectionRegion,
) -> Result<CoefficientField> {
    let d = region.dim();
    if state.dim() != d {
        return Err(Error::DimensionMismatch(format!(
            "field dimension {} does not match region dimension {}",
            state.dim(),
            d
        )));
    }
    let n = state.points_per_axis();
    let shape = vec![n; d];
    let h = state.step();
    let volume_weight = h.powi(d as i32) * (2.0 * std::f64::consts::PI).powf(-(d as f64) / 2.0);
    let sites = region.support_sites(SITE_SUPPORT_THRESHOLD);

    // Mode index per cell on the box's discrete Fourier lattice.
    let spacing = region.grid().spacing();
    let modes: Vec<Vec<i64>> = region
        .cells()
        .iter()
        .map(|cell| mode_indices(&cell.k, spacing, state.side_length()))
        .collect::<Result<Vec<_>>>()?;

    let mut engine = FftEngine::new();
    let mut values = vec![Complex::new(0.0, 0.0); region.len()];
    let mut buffer = vec![Complex::new(0.0, 0.0); state.values().len()];
    let anchor = &region.cells()[0];
    for &site in &sites {
        // Lattice shift nω of this site, read off the anchor cell's
        // shifted momentum (identical across cells by construction).
        let shift: Vec<f64> = anchor
            .pair
            .shifted_momentum(site)
            .iter()
            .zip(&anchor.k)
            .map(|(s, k)| s - k)
            .collect();
        // buffer = ψ(x)·e^{-i⟨nω,x⟩} on the centered grid.
        for (flat, value) in state.values().iter().enumerate() {
            let x = state.position(flat);
            let phase: f64 = shift.iter().zip(&x).map(|(s, xi)| s * xi).sum();
            buffer[flat] = value * Complex::from_polar(1.0, -phase);
        }
        engine.forward_nd(&mut buffer, &shape)?;
        for (ci, cell) in region.cells().iter().enumerate() {
            let v = cell.normalized_coeff(site);
            if v.norm_sqr() == 0.0 {
                continue;
            }
            let mut flat = 0usize;
            let mut parity = 0i64;
            for a in 0..d {
                let m = modes[ci][a];
                parity += m;
                let wrapped = m.rem_euclid(n as i64) as usize;
                flat = flat * n + wrapped;
            }
            // e^{-ik·x} on the centered grid differs from the plain DFT
            // kernel by (−1)^{Σ m} per axis-summed mode index.
            let sign = if parity % 2 == 0 { 1.0 } else { -1.0 };
            values[ci] += v.conj() * buffer[flat] * volume_weight * sign;
        }
    }
    CoefficientField::from_values(region, values)
}

/// Synthesis transform `S`: cell coefficients to a spatial field on the
/// periodic box of side `L = 2π/Δk` with `n_points` per axis.
pub fn synthesize(
    field: &CoefficientField,
    region: &ProjectionRegion,
    n_points: usize,
) -> Result<FieldState> {
    check_field(field, region)?;
    let amps = weighted_amplitudes(field, region);
    assemble_field(region, &amps, n_points, 0.0)
}

/// Free synthesis: same quadrature, but plane waves `e^{i⟨k,x⟩}` instead of
/// the eigenfunctions (the comparison operator `F* χ F`).
pub fn synthesize_free(
    field: &CoefficientField,
    region: &ProjectionRegion,
    n_points: usize,
) -> Result<FieldState> {
    check_field(field, region)?;
    let amps = weighted_amplitudes(field, region);
    assemble_field_free(region, &amps, n_points, 0.0)
}

fn check_field(field: &CoefficientField, region: &ProjectionRegion) -> Result<()> {
    if field.values().len() != region.len() {
        return Err(Error::DimensionMismatch(format!(
            "coefficient field has {} values, region has {} cells",
            field.values().len(),
            region.len()
        )));
    }
    Ok(())
}

fn weighted_amplitudes(field: &CoefficientField, region: &ProjectionRegion) -> Vec<Complex> {
    let d = region.dim() as f64;
    let scale = region.weight() * (2.0 * std::f64::consts::PI).powf(-d / 2.0);
    field.values().iter().map(|v| v * scale).collect()
}

/// Discrete-mode indices of a lattice point on the box's Fourier lattice.
pub(crate) fn mode_indices(k: &[f64], spacing: f64, side_length: f64) -> Result<Vec<i64>> {
    let dual = 2.0 * std::f64::consts::PI / side_length;
    let per_cell = spacing / dual;
    let ratio = per_cell.round();
    if (per_cell - ratio).abs() > 1e-9 || ratio < 1.0 {
        return Err(Error::NyquistViolation(format!(
            "cell lattice spacing {spacing} is not a multiple of the box mode spacing {dual}"
        )));
    }
    k.iter()
        .map(|&c| {
            let m = c / dual;
            let rounded = m.round();
            if (m - rounded).abs() > 1e-6 {
                return Err(Error::NyquistViolation(format!(
                    "quasi-momentum component {c} does not sit on the box mode lattice (spacing {dual})"
                )));
            }
            Ok(rounded as i64)
        })
        .collect()
}

/// Projection `E F = S(T F)` of a closed-form profile.
pub fn apply_projection(
    profile: &dyn MomentumProfile,
    region: &ProjectionRegion,
    n_points: usize,
) -> Result<FieldState> {
    let field = forward_transform(profile, region)?;
    synthesize(&field, region, n_points)
}

/// Both sides of the Parseval identity `‖E F‖² = Σ w |(T F)(k)|²`.
#[derive(Debug, Clone, Copy)]
pub struct ParsevalReport {
    /// Spatial-side norm `‖E F‖²` by box quadrature.
    pub lhs: f64,
    /// Coefficient-side norm `Σ w |T F|²`.
    pub rhs: f64,
    /// `|lhs − rhs| / max(lhs, rhs)` (0 when both vanish).
    pub relerr: f64,
}

/// Computes both sides of the Parseval identity independently: the left by
/// synthesizing and integrating over the box, the right by the weighted
/// coefficient sum.
pub fn parseval_check(
    profile: &dyn MomentumProfile,
    region: &ProjectionRegion,
    n_points: usize,
) -> Result<ParsevalReport> {
    let field = forward_transform(profile, region)?;
    let rhs = field.norm_sq();
    let state = synthesize(&field, region, n_points)?;
    let lhs = state.norm_sq();
    let scale = lhs.max(rhs);
    let relerr = if scale > 0.0 {
        (lhs - rhs).abs() / scale
    } else {
        0.0
    };
    Ok(ParsevalReport { lhs, rhs, relerr })
}

/// Relative discrepancy `‖E F − F*χF F‖ / ‖F‖` between the region projection
/// and the free band-pass over the same cells.
pub fn compare_free_projection(
    profile: &dyn MomentumProfile,
    region: &ProjectionRegion,
    n_points: usize,
) -> Result<f64> {
    let projected = apply_projection(profile, region, n_points)?;
    let sampled: Vec<Complex> = region
        .cells()
        .iter()
        .map(|cell| profile.eval(&cell.k))
        .collect();
    let free_field = CoefficientField::from_values(region, sampled)?;
    let free = synthesize_free(&free_field, region, n_points)?;
    let diff = projected.diff_norm(&free)?;
    Ok(diff / profile.norm_sq().sqrt())
}
