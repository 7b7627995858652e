//! Smooth cutoffs over accepted cell sets and the smoothly extended
//! dispersion relation.
//!
//! Eigenvalues λ(k) exist only on the accepted (non-resonant) cells. To
//! differentiate the dispersion or feed it to phase analysis, the deviation
//! `λ(k) − |k|²` is blended to zero by a mollified cutoff η:
//!
//! `λ_ext(k) = |k|² + (λ(k) − |k|²)·η(k)`
//!
//! with η ≡ 1 on the accepted region and η ≡ 0 outside its δ-neighborhood —
//! so λ_ext reproduces λ on accepted cells exactly and falls back to the
//! exact free dispersion far away.

use crate::error::{Error, Result};
use crate::grid::KGrid;
use crate::mollify::bump_kernel;
use crate::operator::{build_operator, default_gap_floor, extract_pair_report, GAP_FLOOR_COEFF_DEFAULT};
use crate::potential::PotentialSpec;
use rayon::prelude::*;
use std::collections::VecDeque;

/// Dispersion relation interface: value, gradient, Hessian at a point.
pub trait Dispersion: Sync {
    /// Spatial dimension.
    fn dim(&self) -> usize;
    /// λ(k).
    fn lambda(&self, k: &[f64]) -> Result<f64>;
    /// ∇λ(k).
    fn grad(&self, k: &[f64]) -> Result<Vec<f64>>;
    /// Hess λ(k), row-major d×d.
    fn hess(&self, k: &[f64]) -> Result<Vec<f64>>;
}

/// The free dispersion `λ(k) = |k|²` — exact derivatives.
#[derive(Debug, Clone, Copy)]
pub struct FreeDispersion(pub usize);

impl Dispersion for FreeDispersion {
    fn dim(&self) -> usize {
        self.0
    }

    fn lambda(&self, k: &[f64]) -> Result<f64> {
        Ok(k.iter().map(|c| c * c).sum())
    }

    fn grad(&self, k: &[f64]) -> Result<Vec<f64>> {
        Ok(k.iter().map(|c| 2.0 * c).collect())
    }

    fn hess(&self, _k: &[f64]) -> Result<Vec<f64>> {
        let d = self.0;
        let mut h = vec![0.0; d * d];
        for a in 0..d {
            h[a * d + a] = 2.0;
        }
        Ok(h)
    }
}

/// Dispersion evaluated by a fresh eigenpair extraction per call.
///
/// The gradient uses the first-order perturbation identity (exact for the
/// truncated matrix); the Hessian uses centered differences of that
/// gradient. Expensive — meant for spot checks and small phase solves, not
/// for per-cell sweeps.
#[derive(Debug, Clone)]
pub struct EigenDispersion {
    spec: PotentialSpec,
    coupling: f64,
    m: u32,
    fd_step: f64,
}

impl EigenDispersion {
    pub fn new(spec: PotentialSpec, coupling: f64, m: u32) -> Self {
        Self {
            spec,
            coupling,
            m,
            fd_step: 1e-3,
        }
    }

    fn pair(&self, k: &[f64]) -> Result<crate::operator::GeneralizedEigenpair> {
        let norm = k.iter().map(|c| c * c).sum::<f64>().sqrt();
        let op = build_operator(k, self.m, &self.spec, self.coupling)?;
        crate::operator::extract_pair(&op, default_gap_floor(norm))
    }
}

impl Dispersion for EigenDispersion {
    fn dim(&self) -> usize {
        self.spec.freq().dim()
    }

    fn lambda(&self, k: &[f64]) -> Result<f64> {
        Ok(self.pair(k)?.lambda())
    }

    fn grad(&self, k: &[f64]) -> Result<Vec<f64>> {
        Ok(self.pair(k)?.grad_lambda())
    }

    fn hess(&self, k: &[f64]) -> Result<Vec<f64>> {
        let d = self.dim();
        let h = self.fd_step;
        let mut out = vec![0.0; d * d];
        for a in 0..d {
            let mut kp = k.to_vec();
            let mut km = k.to_vec();
            kp[a] += h;
            km[a] -= h;
            let gp = self.grad(&kp)?;
            let gm = self.grad(&km)?;
            for b in 0..d {
                out[a * d + b] += (gp[b] - gm[b]) / (2.0 * h);
            }
        }
        // Symmetrize (finite differences commute only approximately).
        for a in 0..d {
            for b in (a + 1)..d {
                let s = 0.5 * (out[a * d + b] + out[b * d + a]);
                out[a * d + b] = s;
                out[b * d + a] = s;
            }
        }
        Ok(out)
    }
}

// --- smooth cutoff --------------------------------------------------------

/// A mollified indicator over a cell set: identically 1 on the set,
/// identically 0 outside its δ-neighborhood, smooth in between, with
/// recorded finite-difference derivative bounds.
#[derive(Debug, Clone)]
pub struct SmoothCutoff {
    grid: KGrid,
    delta: f64,
    values: Vec<f64>,
    c1: f64,
    c2: f64,
}

impl SmoothCutoff {
    /// The cell lattice the cutoff lives on.
    pub fn grid(&self) -> &KGrid {
        &self.grid
    }

    /// Mollification width δ in momentum units.
    pub fn delta(&self) -> f64 {
        self.delta
    }

    /// η at the cell with flat index `flat`.
    pub fn value(&self, flat: usize) -> f64 {
        self.values[flat]
    }

    /// The full cell table.
    pub fn values(&self) -> &[f64] {
        &self.values
    }

    /// η at an arbitrary point by multilinear interpolation.
    pub fn eval(&self, k: &[f64]) -> Result<f64> {
        self.grid.interpolate(&self.values, k)
    }

    /// Recorded derivative-bound constants `(C₁, C₂)`:
    /// `max|Dη| ≤ C₁/δ` and `max|D²η| ≤ C₂/δ²` over the grid
    /// (finite-difference maxima scaled by the corresponding δ power).
    pub fn derivative_bounds(&self) -> (f64, f64) {
        (self.c1, self.c2)
    }
}

fn kernel_radius_cells(delta: f64, spacing: f64) -> Result<usize> {
    if !(delta.is_finite() && delta >= 2.0 * spacing) {
        return Err(Error::DeltaBelowResolution {
            delta,
            need: 2.0 * spacing,
        });
    }
    Ok(((delta / (2.0 * spacing)).floor() as usize).max(1))
}

/// Morphological dilation of a cell mask by a kernel's support set
/// (out-of-grid cells stay outside).
fn dilate(grid: &KGrid, mask: &[bool], kernel: &[(Vec<i64>, f64)]) -> Vec<bool> {
    let mut out = vec![false; mask.len()];
    for flat in 0..mask.len() {
        if !mask[flat] {
            continue;
        }
        let offs = grid.offsets(flat);
        for (j, _) in kernel {
            let shifted: Vec<i64> = offs.iter().zip(j).map(|(a, b)| a + b).collect();
            if let Some(f) = grid.flat_of(&shifted) {
                out[f] = true;
            }
        }
    }
    out
}

/// Morphological erosion: cells whose whole kernel-support neighborhood
/// lies inside the mask. Out-of-grid translates count as satisfied so that
/// regions touching the grid edge keep their edge plateau; the output is
/// still a subset of the mask.
fn erode(grid: &KGrid, mask: &[bool], kernel: &[(Vec<i64>, f64)]) -> Vec<bool> {
    let mut out = vec![false; mask.len()];
    'cell: for flat in 0..mask.len() {
        if !mask[flat] {
            continue;
        }
        let offs = grid.offsets(flat);
        for (j, _) in kernel {
            let shifted: Vec<i64> = offs.iter().zip(j).map(|(a, b)| a + b).collect();
            if let Some(f) = grid.flat_of(&shifted) {
                if !mask[f] {
                    continue 'cell;
                }
            }
        }
        out[flat] = true;
    }
    out
}

/// Convolution with the kernel renormalized to the in-grid weight at each
/// cell, so plateaus stay exactly 1 even where the kernel is clipped by the
/// grid edge.
fn convolve(grid: &KGrid, mask: &[bool], kernel: &[(Vec<i64>, f64)]) -> Vec<f64> {
    (0..mask.len())
        .map(|flat| {
            let offs = grid.offsets(flat);
            let mut acc = 0.0;
            let mut wsum = 0.0;
            for (j, w) in kernel {
                let shifted: Vec<i64> = offs.iter().zip(j).map(|(a, b)| a + b).collect();
                if let Some(f) = grid.flat_of(&shifted) {
                    wsum += w;
                    if mask[f] {
                        acc += w;
                    }
                }
            }
            if wsum > 0.0 {
                acc / wsum
            } else {
                0.0
            }
        })
        .collect()
}

fn finish_cutoff(grid: KGrid, delta: f64, values: Vec<f64>) -> SmoothCutoff {
    let h = grid.spacing();
    let d = grid.dim();
    let mut max_d1: f64 = 0.0;
    let mut max_d2: f64 = 0.0;
    for flat in 0..values.len() {
        let offs = grid.offsets(flat);
        for a in 0..d {
            let mut op = offs.clone();
            let mut om = offs.clone();
            op[a] += 1;
            om[a] -= 1;
            if let (Some(fp), Some(fm)) = (grid.flat_of(&op), grid.flat_of(&om)) {
                let d1 = (values[fp] - values[fm]).abs() / (2.0 * h);
                max_d1 = max_d1.max(d1);
                let d2 = (values[fp] - 2.0 * values[flat] + values[fm]).abs() / (h * h);
                max_d2 = max_d2.max(d2);
            }
            for b in (a + 1)..d {
                let mut pp = offs.clone();
                let mut pm = offs.clone();
                let mut mp = offs.clone();
                let mut mm = offs.clone();
                pp[a] += 1;
                pp[b] += 1;
                pm[a] += 1;
                pm[b] -= 1;
                mp[a] -= 1;
                mp[b] += 1;
                mm[a] -= 1;
                mm[b] -= 1;
                if let (Some(a1), Some(a2), Some(a3), Some(a4)) = (
                    grid.flat_of(&pp),
                    grid.flat_of(&pm),
                    grid.flat_of(&mp),
                    grid.flat_of(&mm),
                ) {
                    let d2 = (values[a1] - values[a2] - values[a3] + values[a4]).abs()
                        / (4.0 * h * h);
                    max_d2 = max_d2.max(d2);
                }
            }
        }
    }
    SmoothCutoff {
        grid,
        delta,
        values,
        c1: max_d1 * delta,
        c2: max_d2 * delta * delta,
    }
}

/// Builds the outer cutoff: η ≡ 1 on the region, supported inside the
/// region's δ-neighborhood.
///
/// Construction: dilate the region indicator by the support of a discrete
/// bump of radius δ/2, then convolve with that same bump. The dilation
/// guarantees the plateau (every kernel translate of a region cell lands in
/// the dilated set); the second δ/2 of travel bounds the support.
pub fn build_cutoff(grid: &KGrid, region: &[bool], delta: f64) -> Result<SmoothCutoff> {
    if region.len() != grid.len() {
        return Err(Error::DimensionMismatch(format!(
            "region mask has {} cells, grid {}",
            region.len(),
            grid.len()
        )));
    }
    let r = kernel_radius_cells(delta, grid.spacing())?;
    let kernel = bump_kernel(grid.dim(), r);
    let dilated = dilate(grid, region, &kernel);
    let values = convolve(grid, &dilated, &kernel);
    Ok(finish_cutoff(grid.clone(), delta, values))
}

/// Builds the inner cutoff: supported strictly *inside* the region,
/// identically 1 at depth ≥ δ. Used to taper wave-packet weights so they
/// vanish before the accept/reject boundary.
pub fn build_inner_cutoff(grid: &KGrid, region: &[bool], delta: f64) -> Result<SmoothCutoff> {
    if region.len() != grid.len() {
        return Err(Error::DimensionMismatch(format!(
            "region mask has {} cells, grid {}",
            region.len(),
            grid.len()
        )));
    }
    let r = kernel_radius_cells(delta, grid.spacing())?;
    let kernel = bump_kernel(grid.dim(), r);
    let eroded = erode(grid, region, &kernel);
    let values = convolve(grid, &eroded, &kernel);
    Ok(finish_cutoff(grid.clone(), delta, values))
}

// --- dispersion tables ----------------------------------------------------

/// Per-cell eigensolve results over a rectangular grid.
#[derive(Debug, Clone)]
pub struct DispersionTable {
    pub grid: KGrid,
    /// Accept flag per cell (dominance > 1/2 and gap ≥ floor).
    pub accepted: Vec<bool>,
    /// Extracted eigenvalue per cell (NaN where rejected).
    pub lambda: Vec<f64>,
    /// Spectral gap per cell.
    pub gap: Vec<f64>,
    /// Plane-wave dominance per cell.
    pub dominance: Vec<f64>,
}

impl DispersionTable {
    /// Number of accepted cells.
    pub fn accepted_count(&self) -> usize {
        self.accepted.iter().filter(|&&a| a).count()
    }
}

/// Runs the eigenpair extraction on every cell of a grid. The per-cell gap
/// floor is `gap_floor_coeff / |k|`.
pub fn tabulate_dispersion(
    grid: &KGrid,
    spec: &PotentialSpec,
    coupling: f64,
    m: u32,
    gap_floor_coeff: f64,
) -> Result<DispersionTable> {
    let n = grid.len();
    let rows: Vec<Result<(bool, f64, f64, f64)>> = (0..n)
        .into_par_iter()
        .map(|flat| {
            let k = grid.point(flat);
            let norm = k.iter().map(|c| c * c).sum::<f64>().sqrt();
            let floor = gap_floor_coeff / norm.max(1e-9);
            let op = build_operator(&k, m, spec, coupling)?;
            let (pair, report) = extract_pair_report(&op, floor)?;
            Ok((
                pair.is_some(),
                if pair.is_some() { report.lambda } else { f64::NAN },
                report.gap,
                report.dominance,
            ))
        })
        .collect();
    let mut accepted = Vec::with_capacity(n);
    let mut lambda = Vec::with_capacity(n);
    let mut gap = Vec::with_capacity(n);
    let mut dominance = Vec::with_capacity(n);
    for row in rows {
        let (a, l, g, dom) = row?;
        accepted.push(a);
        lambda.push(l);
        gap.push(g);
        dominance.push(dom);
    }
    Ok(DispersionTable {
        grid: grid.clone(),
        accepted,
        lambda,
        gap,
        dominance,
    })
}

/// Default gap-floor coefficient re-exported for table builders.
pub const TABLE_GAP_FLOOR_COEFF: f64 = GAP_FLOOR_COEFF_DEFAULT;

// --- extended dispersion --------------------------------------------------

/// The smoothly extended dispersion `λ_ext(k) = |k|² + dev(k)·η(k)` with
/// precomputed finite-difference derivative tables of the blended part.
#[derive(Debug, Clone)]
pub struct ExtendedDispersion {
    grid: KGrid,
    eta: SmoothCutoff,
    accepted: Vec<bool>,
    /// Blended deviation `P = dev·η` per cell.
    blend: Vec<f64>,
    /// Centered-difference gradient tables of `P`, one per axis.
    grad_tables: Vec<Vec<f64>>,
    /// Second-difference tables of `P`, row-major upper triangle (a ≤ b).
    hess_tables: Vec<Vec<f64>>,
}

fn pair_index(d: usize, a: usize, b: usize) -> usize {
    // Upper-triangle (a ≤ b) flattening.
    let (a, b) = if a <= b { (a, b) } else { (b, a) };
    a * d - a * (a + 1) / 2 + b
}

impl ExtendedDispersion {
    /// The underlying cell lattice.
    pub fn grid(&self) -> &KGrid {
        &self.grid
    }

    /// The cutoff blended against.
    pub fn eta(&self) -> &SmoothCutoff {
        &self.eta
    }

    /// Accept flag of a cell.
    pub fn is_accepted(&self, flat: usize) -> bool {
        self.accepted[flat]
    }

    /// λ_ext at the cell center with flat index `flat`.
    pub fn cell_lambda(&self, flat: usize) -> f64 {
        let k = self.grid.point(flat);
        let k_sq: f64 = k.iter().map(|c| c * c).sum();
        k_sq + self.blend[flat]
    }

    /// Blended deviation table `dev·η`.
    pub fn blend(&self) -> &[f64] {
        &self.blend
    }
}

impl Dispersion for ExtendedDispersion {
    fn dim(&self) -> usize {
        self.grid.dim()
    }

    fn lambda(&self, k: &[f64]) -> Result<f64> {
        let k_sq: f64 = k.iter().map(|c| c * c).sum();
        Ok(k_sq + self.grid.interpolate(&self.blend, k)?)
    }

    fn grad(&self, k: &[f64]) -> Result<Vec<f64>> {
        let d = self.dim();
        let mut out = Vec::with_capacity(d);
        for a in 0..d {
            out.push(2.0 * k[a] + self.grid.interpolate(&self.grad_tables[a], k)?);
        }
        Ok(out)
    }

    fn hess(&self, k: &[f64]) -> Result<Vec<f64>> {
        let d = self.dim();
        let mut out = vec![0.0; d * d];
        for a in 0..d {
            for b in a..d {
                let t = &self.hess_tables[pair_index(d, a, b)];
                let mut v = self.grid.interpolate(t, k)?;
                if a == b {
                    v += 2.0;
                }
                out[a * d + b] = v;
                out[b * d + a] = v;
            }
        }
        Ok(out)
    }
}

/// Blends a dispersion table into the smooth extension.
///
/// The deviation `λ(k) − |k|²` is taken from accepted cells; rejected cells
/// inside the cutoff's support ring borrow the deviation of the nearest
/// accepted cell (breadth-first over the cell graph) so the blend never
/// multiplies η against garbage; outside the support the blend is exactly
/// zero and λ_ext reduces to `|k|²`.
pub fn extend_dispersion(table: &DispersionTable, delta: f64) -> Result<ExtendedDispersion> {
    let grid = &table.grid;
    let n = grid.len();
    if table.accepted.len() != n || table.lambda.len() != n {
        return Err(Error::DimensionMismatch(
            "dispersion table does not match its grid".into(),
        ));
    }
    if table.accepted_count() == 0 {
        return Err(Error::EmptyRegion);
    }
    let eta = build_cutoff(grid, &table.accepted, delta)?;

    // Deviation with nearest-accepted fill (multi-source BFS, deterministic
    // seed order = flat order, neighbor order = lexicographic offsets).
    let mut dev = vec![0.0; n];
    let mut known = vec![false; n];
    let mut queue = VecDeque::new();
    for flat in 0..n {
        if table.accepted[flat] {
            let k = grid.point(flat);
            let k_sq: f64 = k.iter().map(|c| c * c).sum();
            dev[flat] = table.lambda[flat] - k_sq;
            known[flat] = true;
            queue.push_back(flat);
        }
    }
    let d = grid.dim();
    let neighbor_offsets: Vec<Vec<i64>> = {
        let mut offs = Vec::new();
        let total = 3usize.pow(d as u32);
        for code in 0..total {
            let mut c = code;
            let mut j = vec![0i64; d];
            for a in (0..d).rev() {
                j[a] = (c % 3) as i64 - 1;
                c /= 3;
            }
            if j.iter().any(|&x| x != 0) {
                offs.push(j);
            }
        }
        offs.sort();
        offs
    };
    while let Some(flat) = queue.pop_front() {
        let offs = grid.offsets(flat);
        for j in &neighbor_offsets {
            let shifted: Vec<i64> = offs.iter().zip(j).map(|(a, b)| a + b).collect();
            if let Some(f) = grid.flat_of(&shifted) {
                if !known[f] {
                    known[f] = true;
                    dev[f] = dev[flat];
                    queue.push_back(f);
                }
            }
        }
    }

    let blend: Vec<f64> = (0..n).map(|f| dev[f] * eta.value(f)).collect();

    // Finite-difference derivative tables of the blend (zero at grid edges;
    // the blend itself vanishes there whenever the region sits inside).
    let h = grid.spacing();
    let mut grad_tables = vec![vec![0.0; n]; d];
    let tri = d * (d + 1) / 2;
    let mut hess_tables = vec![vec![0.0; n]; tri];
    for flat in 0..n {
        let offs = grid.offsets(flat);
        for a in 0..d {
            let mut op = offs.clone();
            let mut om = offs.clone();
            op[a] += 1;
            om[a] -= 1;
            if let (Some(fp), Some(fm)) = (grid.flat_of(&op), grid.flat_of(&om)) {
                grad_tables[a][flat] = (blend[fp] - blend[fm]) / (2.0 * h);
                hess_tables[pair_index(d, a, a)][flat] =
                    (blend[fp] - 2.0 * blend[flat] + blend[fm]) / (h * h);
            }
            for b in (a + 1)..d {
                let mut pp = offs.clone();
                let mut pm = offs.clone();
                let mut mp = offs.clone();
                let mut mm = offs.clone();
                pp[a] += 1;
                pp[b] += 1;
                pm[a] += 1;
                pm[b] -= 1;
                mp[a] -= 1;
                mp[b] += 1;
                mm[a] -= 1;
                mm[b] -= 1;
                if let (Some(a1), Some(a2), Some(a3), Some(a4)) = (
                    grid.flat_of(&pp),
                    grid.flat_of(&pm),
                    grid.flat_of(&mp),
                    grid.flat_of(&mm),
                ) {
                    hess_tables[pair_index(d, a, b)][flat] =
                        (blend[a1] - blend[a2] - blend[a3] + blend[a4]) / (4.0 * h * h);
                }
            }
        }
    }

    Ok(ExtendedDispersion {
        grid: grid.clone(),
        eta,
        accepted: table.accepted.clone(),
        blend,
        grad_tables,
        hess_tables,
    })
}
