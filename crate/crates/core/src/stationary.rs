//! Stationary-phase analysis of the evolved-packet phase
//! `φ(k) = ⟨k, z⟩ - λ(k)`.
//!
//! For the free dispersion the stationary point of `φ` is exactly `k₀ = z/2`;
//! at desk couplings it is an `O(ε²)` perturbation of that, found here by a
//! damped quasi-Newton iteration (the free Hessian `2I` preconditions the
//! update, so the free case converges in one step). Around the stationary
//! point the module evaluates the localized oscillatory integral
//!
//! `I(t) = (2π)^{-d/2} ∫ e^{i t φ(k)} g₃(k) (1 - η̂(|k - k₀|)) dk`
//!
//! by step-controlled trapezoid quadrature, and the leading stationary-phase
//! term
//!
//! `(2π)^{-d/2} (2π/t)^{d/2} |det Hess φ(k₀)|^{-1/2}
//!  e^{i(tφ(k₀) + πσ/4)} g₃(k₀)`,
//!
//! with `σ` the Hessian signature. Their ratio should close like `1/t`,
//! which the tests measure against the exactly solvable free case.

use rayon::prelude::*;

use crate::eigh::eigvalsh;
use crate::error::{Error, Result};
use crate::extension::Dispersion;
use crate::mollify::radial_cutoff;
use crate::Complex;

use std::f64::consts::PI;

/// Radius below which the exclusion cutoff η̂ vanishes (integrand weight 1).
pub const LOCALIZER_INNER: f64 = 1.0;
/// Radius beyond which η̂ ≡ 1 (integrand weight 0; the quadrature domain).
pub const LOCALIZER_OUTER: f64 = 2.0;

/// Maximum phase rotation per quadrature step, `step·t·max|∇φ|`.
const STEP_PHASE_LIMIT: f64 = 0.45;
/// Coarsest quadrature step (resolves the localizer even when `t` is small).
const STEP_CAP: f64 = 0.1;
/// Largest per-axis point count the quadrature will attempt.
const POINTS_CAP: usize = 40_000;
/// Successive refinements must agree to this relative tolerance.
const REFINE_TOL: f64 = 1e-6;
/// Number of step-halvings attempted before giving up.
const MAX_REFINES: usize = 8;

/// A stationary point `k₀` of `φ(k) = ⟨k,z⟩ - λ(k)` with its Hessian and a
/// smooth exclusion cutoff η̂ vanishing near `k₀`; the oscillatory integrand
/// carries the complementary weight `1 - η̂`, supported on `|k - k₀| ≤ 2`.
#[derive(Debug, Clone)]
pub struct PhasePoint {
    z: Vec<f64>,
    k0: Vec<f64>,
    hessian: Vec<f64>,
    residual: f64,
}

impl PhasePoint {
    /// Velocity parameter `z = x/t`.
    pub fn z(&self) -> &[f64] {
        &self.z
    }

    /// The stationary point (`∇λ(k₀) = z`).
    pub fn k0(&self) -> &[f64] {
        &self.k0
    }

    /// `Hess λ(k₀)`, row-major d×d. The phase Hessian is its negative.
    pub fn hessian(&self) -> &[f64] {
        &self.hessian
    }

    /// Final Newton residual `|z - ∇λ(k₀)|`.
    pub fn residual(&self) -> f64 {
        self.residual
    }

    /// Exclusion cutoff `η̂`: 0 on `|k - k₀| ≤ 1`, 1 beyond `|k - k₀| ≥ 2`.
    /// The oscillatory integrand is weighted by `1 - η̂`.
    pub fn localizer(&self, k: &[f64]) -> f64 {
        let r = k
            .iter()
            .zip(&self.k0)
            .map(|(a, b)| (a - b) * (a - b))
            .sum::<f64>()
            .sqrt();
        1.0 - radial_cutoff(r, LOCALIZER_INNER, LOCALIZER_OUTER)
    }

    /// Phase value `φ(k₀) = ⟨k₀,z⟩ - λ(k₀)`.
    pub fn phase_value(&self, disp: &dyn Dispersion) -> Result<f64> {
        let dot: f64 = self.k0.iter().zip(&self.z).map(|(a, b)| a * b).sum();
        Ok(dot - disp.lambda(&self.k0)?)
    }
}

/// Finds the stationary point of `φ(k) = ⟨k,z⟩ - λ(k)` for energies above
/// `lambda_star`.
///
/// Preconditions: `|z|² > 4·lambda_star`… stated as `|z/2|² > lambda_star`,
/// i.e. the free stationary point `z/2` must lie above the energy floor —
/// otherwise the dispersion data is not trusted there and the call fails
/// with [`Error::OutsideRegion`]. The damped iteration
/// `k ← k + (z - ∇λ(k))/2` is exact for the free dispersion and contracts
/// at rate `O(ε)` near it; failure to reach `|z - ∇λ(k)| < 1e-9` within 100
/// iterations (or wandering more than 2 from `z/2`) is
/// [`Error::NewtonDivergence`].
pub fn stationary_point(
    z: &[f64],
    disp: &dyn Dispersion,
    lambda_star: f64,
) -> Result<PhasePoint> {
    let d = disp.dim();
    if z.len() != d {
        return Err(Error::DimensionMismatch(format!(
            "z has {} components, dispersion dimension is {}",
            z.len(),
            d
        )));
    }
    let free_point: Vec<f64> = z.iter().map(|c| 0.5 * c).collect();
    let free_energy: f64 = free_point.iter().map(|c| c * c).sum();
    if free_energy <= lambda_star {
        return Err(Error::OutsideRegion(format!(
            "free stationary energy |z/2|² = {free_energy:.6} does not exceed the floor {lambda_star:.6}"
        )));
    }
    let tol = 1e-9;
    let mut k = free_point.clone();
    let mut residual = f64::INFINITY;
    for _ in 0..100 {
        let grad = disp.grad(&k)?;
        let r: Vec<f64> = z.iter().zip(&grad).map(|(a, b)| a - b).collect();
        residual = r.iter().map(|c| c * c).sum::<f64>().sqrt();
        if residual < tol {
            let hessian = disp.hess(&k)?;
            return Ok(PhasePoint {
                z: z.to_vec(),
                k0: k,
                hessian,
                residual,
            });
        }
        for a in 0..d {
            k[a] += 0.5 * r[a];
        }
        let wander: f64 = k
            .iter()
            .zip(&free_point)
            .map(|(a, b)| (a - b) * (a - b))
            .sum::<f64>()
            .sqrt();
        if wander > 2.0 {
            return Err(Error::NewtonDivergence(format!(
                "iterate wandered {wander:.3} from the free stationary point z/2"
            )));
        }
    }
    Err(Error::NewtonDivergence(format!(
        "stationary-point iteration stalled at residual {residual:.3e} (tolerance {tol:.1e})"
    )))
}

/// A converged oscillatory-integral value with its quadrature diagnostics.
#[derive(Debug, Clone, Copy)]
pub struct OscillatoryIntegral {
    /// The integral value.
    pub value: Complex,
    /// Final quadrature step.
    pub step: f64,
    /// Difference between the last two refinements.
    pub estimated_error: f64,
}

/// Evaluates `(2π)^{-d/2} ∫ e^{itφ(k)} g₃(k) (1 - η̂(k)) dk` over
/// `|k - k₀| < 2`, the support of the complementary cutoff weight.
///
/// The base step keeps the phase rotation per step below 1/2
/// (`step·t·max|∇φ| < 0.45` with `max|∇φ|` sampled over the domain) and is
/// halved until two successive values agree to `1e-6` relative. Fails with
/// [`Error::ResolutionGuard`] when that demands more than
/// [`POINTS_CAP`] points per axis or more than 8 halvings.
pub fn oscillatory_integral(
    point: &PhasePoint,
    disp: &dyn Dispersion,
    g3: &(dyn Fn(&[f64]) -> Complex + Sync),
    t: f64,
) -> Result<OscillatoryIntegral> {
    let d = disp.dim();
    if !(t >= 0.0) {
        return Err(Error::ResolutionGuard(format!(
            "oscillatory integral needs t ≥ 0, got {t}"
        )));
    }

    // Bound |∇φ| = |z - ∇λ| on the domain from a coarse sample.
    let probe = 9usize;
    let mut grad_max = 0.0f64;
    let mut idx = vec![0usize; d];
    loop {
        let k: Vec<f64> = (0..d)
            .map(|a| point.k0[a] - LOCALIZER_OUTER
                + 2.0 * LOCALIZER_OUTER * idx[a] as f64 / (probe - 1) as f64)
            .collect();
        let grad = disp.grad(&k)?;
        let g: f64 = point
            .z
            .iter()
            .zip(&grad)
            .map(|(a, b)| (a - b) * (a - b))
            .sum::<f64>()
            .sqrt();
        grad_max = grad_max.max(g);
        let mut a = d;
        loop {
            if a == 0 {
                break;
            }
            a -= 1;
            idx[a] += 1;
            if idx[a] < probe {
                break;
            }
            idx[a] = 0;
        }
        if idx.iter().all(|&v| v == 0) {
            break;
        }
    }

    let mut step = STEP_CAP.min(STEP_PHASE_LIMIT / (t * grad_max + 1e-12));
    let mut previous: Option<Complex> = None;
    for _ in 0..=MAX_REFINES {
        let per_axis = (2.0 * LOCALIZER_OUTER / step).ceil() as usize + 1;
        if per_axis > POINTS_CAP {
            return Err(Error::ResolutionGuard(format!(
                "oscillatory quadrature needs {per_axis} points per axis (cap {POINTS_CAP}); \
                 t = {t} is too large for the requested tolerance"
            )));
        }
        let value = quadrature_pass(point, disp, g3, t, per_axis)?;
        if let Some(prev) = previous {
            let delta = (value - prev).norm();
            if delta <= REFINE_TOL * value.norm().max(1e-300) {
                return Ok(OscillatoryIntegral {
                    value,
                    step: 2.0 * LOCALIZER_OUTER / (per_axis - 1) as f64,
                    estimated_error: delta,
                });
            }
        }
        previous = Some(value);
        step *= 0.5;
    }
    Err(Error::ResolutionGuard(format!(
        "oscillatory quadrature did not converge to {REFINE_TOL:.0e} within {MAX_REFINES} refinements"
    )))
}

/// One uniform trapezoid pass over `[k₀-2, k₀+2]^d` with `per_axis` points.
fn quadrature_pass(
    point: &PhasePoint,
    disp: &dyn Dispersion,
    g3: &(dyn Fn(&[f64]) -> Complex + Sync),
    t: f64,
    per_axis: usize,
) -> Result<Complex> {
    let d = disp.dim();
    let h = 2.0 * LOCALIZER_OUTER / (per_axis - 1) as f64;
    let axis: Vec<f64> = (0..per_axis)
        .map(|j| -LOCALIZER_OUTER + j as f64 * h)
        .collect();
    let rows = per_axis.pow((d - 1) as u32);
    let row_sums: Vec<Result<Complex>> = (0..rows)
        .into_par_iter()
        .map(|row| {
            let mut offs = vec![0f64; d];
            let mut rem = row;
            for a in (1..d).rev() {
                offs[a] = axis[rem % per_axis];
                rem /= per_axis;
            }
            let mut acc = Complex::new(0.0, 0.0);
            let mut k = vec![0f64; d];
            for &x0 in &axis {
                offs[0] = x0;
                let r2: f64 = offs.iter().map(|c| c * c).sum();
                let r = r2.sqrt();
                if r >= LOCALIZER_OUTER {
                    continue;
                }
                // Complementary weight 1 - η̂: 1 near the stationary point.
                let weight = radial_cutoff(r, LOCALIZER_INNER, LOCALIZER_OUTER);
                if weight == 0.0 {
                    continue;
                }
                for a in 0..d {
                    k[a] = point.k0[a] + offs[a];
                }
                let g = g3(&k) * weight;
                if g.norm_sqr() == 0.0 {
                    continue;
                }
                let dot: f64 = k.iter().zip(&point.z).map(|(a, b)| a * b).sum();
                let phase = t * (dot - disp.lambda(&k)?);
                acc += g * Complex::from_polar(1.0, phase);
            }
            Ok(acc)
        })
        .collect();
    let mut total = Complex::new(0.0, 0.0);
    for rs in row_sums {
        total += rs?;
    }
    Ok(total * h.powi(d as i32) * (2.0 * PI).powf(-(d as f64) / 2.0))
}

/// Eigenvalues of a symmetric d×d matrix (row-major reals).
pub fn symmetric_eigenvalues(matrix: &[f64], d: usize) -> Result<Vec<f64>> {
    if matrix.len() != d * d {
        return Err(Error::DimensionMismatch(format!(
            "{}-entry matrix for dimension {d}",
            matrix.len()
        )));
    }
    match d {
        1 => Ok(vec![matrix[0]]),
        2 => {
            let (a, b, c) = (matrix[0], matrix[1], matrix[3]);
            let mid = 0.5 * (a + c);
            let disc = (0.25 * (a - c) * (a - c) + b * b).sqrt();
            Ok(vec![mid - disc, mid + disc])
        }
        _ => {
            let wrapped: Vec<Complex> = matrix.iter().map(|&v| Complex::new(v, 0.0)).collect();
            eigvalsh(&wrapped, d)
        }
    }
}

/// Leading stationary-phase term
/// `(2π)^{-d/2} (2π/t)^{d/2} |det Hφ|^{-1/2} e^{i(tφ(k₀)+πσ/4)} g₃(k₀)`
/// with `Hφ = -Hess λ(k₀)` and `σ` its signature.
///
/// Fails with [`Error::SingularHessian`] when the smallest Hessian
/// eigenvalue magnitude drops below `1e-9`.
pub fn asymptotic_leading(
    point: &PhasePoint,
    disp: &dyn Dispersion,
    g3: &dyn Fn(&[f64]) -> Complex,
    t: f64,
) -> Result<Complex> {
    let d = disp.dim();
    if !(t > 0.0) {
        return Err(Error::ResolutionGuard(format!(
            "the leading term needs t > 0, got {t}"
        )));
    }
    let phase_hessian: Vec<f64> = point.hessian().iter().map(|v| -v).collect();
    let eigs = symmetric_eigenvalues(&phase_hessian, d)?;
    let min_abs = eigs.iter().map(|e| e.abs()).fold(f64::INFINITY, f64::min);
    if min_abs < 1e-9 {
        return Err(Error::SingularHessian(min_abs));
    }
    let det: f64 = eigs.iter().product();
    let signature: i32 = eigs.iter().map(|&e| if e > 0.0 { 1 } else { -1 }).sum();
    let phi0 = point.phase_value(disp)?;
    let amplitude = (2.0 * PI).powf(-(d as f64) / 2.0)
        * (2.0 * PI / t).powf(d as f64 / 2.0)
        * det.abs().powf(-0.5);
    Ok(amplitude
        * Complex::from_polar(1.0, t * phi0 + PI * signature as f64 / 4.0)
        * g3(&point.k0))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::extension::FreeDispersion;

    #[test]
    fn free_stationary_point_is_half_z() {
        let disp = FreeDispersion(2);
        let point = stationary_point(&[24.0, 0.0], &disp, 50.0).unwrap();
        assert!((point.k0()[0] - 12.0).abs() < 1e-12);
        assert!(point.k0()[1].abs() < 1e-12);
        assert!(point.residual() < 1e-9);
        assert_eq!(point.hessian(), &[2.0, 0.0, 0.0, 2.0]);
    }

    #[test]
    fn energy_floor_is_enforced() {
        let disp = FreeDispersion(2);
        assert!(matches!(
            stationary_point(&[4.0, 0.0], &disp, 50.0),
            Err(Error::OutsideRegion(_))
        ));
    }

    #[test]
    fn exclusion_cutoff_vanishes_near_k0_and_saturates_outside() {
        let disp = FreeDispersion(2);
        let point = stationary_point(&[24.0, 0.0], &disp, 50.0).unwrap();
        assert_eq!(point.localizer(&[12.5, 0.0]), 0.0);
        assert_eq!(point.localizer(&[14.5, 0.0]), 1.0);
        let mid = point.localizer(&[13.5, 0.0]);
        assert!(mid > 0.0 && mid < 1.0);
    }

    #[test]
    fn symmetric_eigenvalues_match_closed_forms() {
        let eigs = symmetric_eigenvalues(&[2.0, 1.0, 1.0, 2.0], 2).unwrap();
        assert!((eigs[0] - 1.0).abs() < 1e-12 && (eigs[1] - 3.0).abs() < 1e-12);
        let eigs3 = symmetric_eigenvalues(
            &[2.0, 0.0, 0.0, 0.0, 3.0, 0.0, 0.0, 0.0, -1.0],
            3,
        )
        .unwrap();
        let mut sorted = eigs3.clone();
        sorted.sort_by(f64::total_cmp);
        assert!((sorted[0] + 1.0).abs() < 1e-10);
        assert!((sorted[2] - 3.0).abs() < 1e-10);
    }

    #[test]
    fn singular_hessian_is_reported() {
        let disp = FreeDispersion(2);
        let mut point = stationary_point(&[24.0, 0.0], &disp, 50.0).unwrap();
        point.hessian = vec![0.0, 0.0, 0.0, 2.0];
        assert!(matches!(
            asymptotic_leading(&point, &disp, &|_| Complex::new(1.0, 0.0), 10.0),
            Err(Error::SingularHessian(_))
        ));
    }
}
