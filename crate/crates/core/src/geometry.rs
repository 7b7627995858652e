//! Quasi-momentum geometry: scanning annuli for non-resonant cells,
//! solving for the isoenergetic radius κ(λ,ν) along rays, and sampling
//! whole isoenergetic surfaces (slightly distorted spheres).

use crate::error::{Error, Result};
use crate::grid::KGrid;
use crate::operator::{build_operator, extract_pair, extract_pair_report};
use crate::potential::PotentialSpec;
use rayon::prelude::*;
use std::fmt::Write as _;

/// Default energy floor below which isoenergetic solves are refused.
pub const LAMBDA_FLOOR_DEFAULT: f64 = 50.0;

/// One scanned quasi-momentum cell.
#[derive(Debug, Clone)]
pub struct ScanCell {
    pub k: Vec<f64>,
    pub accepted: bool,
    pub gap: f64,
    pub dominance: f64,
}

/// Result of an annulus scan for non-resonant quasi-momenta.
#[derive(Debug, Clone)]
pub struct NonResonantScan {
    /// Inner and outer radius of the scanned annulus.
    pub annulus: (f64, f64),
    /// Cell spacing of the scan grid.
    pub step: f64,
    /// Every cell with `R_min ≤ |k| ≤ R_max`, in deterministic grid order.
    pub cells: Vec<ScanCell>,
    /// Accepted count / total count.
    pub fraction: f64,
    /// Binomial standard error of the fraction.
    pub stderr: f64,
}

impl NonResonantScan {
    /// CSV serialization: `kx,…,accepted,gap,dominance` with accepted as
    /// 1/0. Deterministic formatting (fixed-precision scientific).
    pub fn to_csv(&self) -> String {
        let d = self.cells.first().map(|c| c.k.len()).unwrap_or(2);
        let mut out = String::new();
        for a in 0..d {
            let name = match a {
                0 => "kx",
                1 => "ky",
                _ => "kz",
            };
            let _ = write!(out, "{name},");
        }
        out.push_str("accepted,gap,dominance\n");
        for c in &self.cells {
            for v in &c.k {
                let _ = write!(out, "{v:.12e},");
            }
            let _ = writeln!(
                out,
                "{},{:.12e},{:.12e}",
                u8::from(c.accepted),
                c.gap,
                c.dominance
            );
        }
        out
    }
}

/// Scans the annulus `R_min ≤ |k| ≤ R_max` on a square cell grid with the
/// given spacing, extracting the eigenpair on every cell.
///
/// The per-cell spectral-gap floor is `gap_floor_coeff / |k|`. The annulus
/// must satisfy `R_min > 2(QM+1)·max|ω|` so the plane-wave ordering of the
/// diagonal stays sane across the lattice box.
pub fn scan_nonresonant(
    annulus: (f64, f64),
    step: f64,
    m: u32,
    spec: &PotentialSpec,
    coupling: f64,
    gap_floor_coeff: f64,
) -> Result<NonResonantScan> {
    let (r_min, r_max) = annulus;
    if !(step > 0.0) || !step.is_finite() {
        return Err(Error::EmptyGrid(format!("non-positive scan step {step}")));
    }
    if !(r_max > r_min) || r_min < 0.0 {
        return Err(Error::EmptyGrid(format!(
            "degenerate annulus ({r_min}, {r_max})"
        )));
    }
    let need = 2.0 * ((spec.q() * m) as f64 + 1.0) * spec.freq().max_norm();
    if r_min <= need {
        return Err(Error::AnnulusTooSmall { r_min, need });
    }
    let d = spec.freq().dim();
    let half = (r_max / step).ceil() as i64;
    let grid = KGrid::square(vec![0.0; d], step, half)?;

    let flats: Vec<usize> = (0..grid.len())
        .filter(|&f| {
            let k = grid.point(f);
            let r = k.iter().map(|c| c * c).sum::<f64>().sqrt();
            (r_min..=r_max).contains(&r)
        })
        .collect();
    if flats.is_empty() {
        return Err(Error::EmptyGrid(format!(
            "no cells with {r_min} ≤ |k| ≤ {r_max} at step {step}"
        )));
    }

    let cells: Vec<Result<ScanCell>> = flats
        .par_iter()
        .map(|&f| {
            let k = grid.point(f);
            let norm = k.iter().map(|c| c * c).sum::<f64>().sqrt();
            let floor = gap_floor_coeff / norm.max(1e-9);
            let op = build_operator(&k, m, spec, coupling)?;
            let (pair, report) = extract_pair_report(&op, floor)?;
            Ok(ScanCell {
                k,
                accepted: pair.is_some(),
                gap: report.gap,
                dominance: report.dominance,
            })
        })
        .collect();
    let cells = cells.into_iter().collect::<Result<Vec<_>>>()?;

    let total = cells.len() as f64;
    let acc = cells.iter().filter(|c| c.accepted).count() as f64;
    let fraction = acc / total;
    let stderr = (fraction * (1.0 - fraction) / total).sqrt();
    Ok(NonResonantScan {
        annulus,
        step,
        cells,
        fraction,
        stderr,
    })
}

/// Solves `λ(κ·ν) = λ_target` for the isoenergetic radius κ by safeguarded
/// Newton iteration from `κ₀ = √λ_target`, bracketed in
/// `[√λ_target − 1, √λ_target + 1]`.
///
/// The iteration drives the residual below `10⁻¹²·λ_target` (well past the
/// `10⁻⁹·λ_target` acceptance bound, so κ itself carries full precision).
/// Eigenpair rejection anywhere along the ray reports the direction as
/// resonant.
pub fn kappa(
    lambda_target: f64,
    nu: &[f64],
    m: u32,
    spec: &PotentialSpec,
    coupling: f64,
    gap_floor_coeff: f64,
    lambda_floor: f64,
) -> Result<f64> {
    if lambda_target <= lambda_floor {
        return Err(Error::EnergyBelowFloor {
            lambda: lambda_target,
            floor: lambda_floor,
        });
    }
    let norm = nu.iter().map(|c| c * c).sum::<f64>().sqrt();
    if !(norm > 0.0) {
        return Err(Error::DimensionMismatch("zero direction vector".into()));
    }
    let nu: Vec<f64> = nu.iter().map(|c| c / norm).collect();

    let root = lambda_target.sqrt();
    let mut lo = root - 1.0;
    let mut hi = root + 1.0;
    let mut kap = root;
    let tol = 1e-12 * lambda_target;

    for _ in 0..60 {
        let k: Vec<f64> = nu.iter().map(|c| c * kap).collect();
        let op = build_operator(&k, m, spec, coupling)?;
        let floor = gap_floor_coeff / kap.max(1e-9);
        let pair = match extract_pair(&op, floor) {
            Ok(p) => p,
            Err(Error::Rejected(r)) => return Err(Error::DirectionRejected(r)),
            Err(e) => return Err(e),
        };
        let f = pair.lambda() - lambda_target;
        if f.abs() < tol {
            return Ok(kap);
        }
        //

        // λ is increasing in κ along the ray at these energies, so the sign
        // of the residual updates the bracket.
        if f > 0.0 {
            hi = hi.min(kap);
        } else {
            lo = lo.max(kap);
        }
        let grad = pair.grad_lambda();
        let slope: f64 = grad.iter().zip(&nu).map(|(g, n)| g * n).sum();
        let mut next = if slope > 0.0 { kap - f / slope } else { kap };
        if !(next > lo && next < hi) {
            next = 0.5 * (lo + hi);
        }
        if hi - lo < 1e-15 * root {
            return Err(Error::NewtonDivergence(format!(
                "bracket collapsed without meeting the residual target at λ = {lambda_target}"
            )));
        }
        kap = next;
    }
    Err(Error::NewtonDivergence(format!(
        "no convergence within the iteration budget at λ = {lambda_target}"
    )))
}

/// One sampled direction of an isoenergetic surface.
#[derive(Debug, Clone)]
pub struct DirectionSample {
    /// Unit direction vector ν.
    pub direction: Vec<f64>,
    /// Parameterizing angles: `[φ]` in d=2, `[φ, θ]` in d=3.
    pub angles: Vec<f64>,
    pub accepted: bool,
    /// Isoenergetic radius (NaN where rejected).
    pub kappa: f64,
    /// `κ − √λ_target` (NaN where rejected).
    pub deviation: f64,
}

/// A sampled isoenergetic surface (distorted sphere) at one energy.
#[derive(Debug, Clone)]
pub struct IsoenergeticSurface {
    pub lambda_target: f64,
    pub samples: Vec<DirectionSample>,
    /// Accepted-direction fraction (unbiased surface-measure estimate
    /// thanks to uniform direction sampling).
    pub good_fraction: f64,
    /// Max |κ − √λ| over accepted directions (0 when none).
    pub max_deviation: f64,
    /// Angular spacing of the direction sampling, radians.
    pub angular_resolution: f64,
}

impl IsoenergeticSurface {
    /// CSV serialization: `phi[,theta],accepted,kappa,deviation` with
    /// accepted as 1/0 and NaN for rejected-direction values.
    pub fn to_csv(&self) -> String {
        let two_angles = self
            .samples
            .first()
            .map(|s| s.angles.len() == 2)
            .unwrap_or(false);
        let mut out = String::new();
        out.push_str(if two_angles {
            "phi,theta,accepted,kappa,deviation\n"
        } else {
            "phi,accepted,kappa,deviation\n"
        });
        for s in &self.samples {
            for a in &s.angles {
                let _ = write!(out, "{a:.12e},");
            }
            let _ = writeln!(
                out,
                "{},{:.12e},{:.12e}",
                u8::from(s.accepted),
                s.kappa,
                s.deviation
            );
        }
        out
    }
}

/// Uniformly distributed unit directions: equi-angular circle in d=2,
/// golden-angle (Fibonacci) sphere in d=3.
pub fn sample_directions(d: usize, n: usize) -> Result<Vec<(Vec<f64>, Vec<f64>)>> {
    if n < 8 {
        return Err(Error::EmptyGrid(format!(
            "need at least 8 directions, got {n}"
        )));
    }
    match d {
        2 => Ok((0..n)
            .map(|i| {
                let phi = 2.0 * std::f64::consts::PI * i as f64 / n as f64;
                (vec![phi.cos(), phi.sin()], vec![phi])
            })
            .collect()),
        3 => {
            let golden = std::f64::consts::PI * (3.0 - 5.0_f64.sqrt());
            Ok((0..n)
                .map(|i| {
                    let z = 1.0 - 2.0 * (i as f64 + 0.5) / n as f64;
                    let r = (1.0 - z * z).sqrt();
                    let phi = (golden * i as f64).rem_euclid(2.0 * std::f64::consts::PI);
                    let theta = z.acos();
                    (vec![r * phi.cos(), r * phi.sin(), z], vec![phi, theta])
                })
                .collect())
        }
        _ => Err(Error::DimensionMismatch(format!(
            "direction sampling implemented for d ∈ {{2, 3}}, got {d}"
        ))),
    }
}

/// Samples a whole isoenergetic surface: solves for κ along every
/// direction, recording rejections instead of failing.
pub fn surface(
    lambda_target: f64,
    n_directions: usize,
    m: u32,
    spec: &PotentialSpec,
    coupling: f64,
    gap_floor_coeff: f64,
    lambda_floor: f64,
) -> Result<IsoenergeticSurface> {
    if lambda_target <= lambda_floor {
        return Err(Error::EnergyBelowFloor {
            lambda: lambda_target,
            floor: lambda_floor,
        });
    }
    let d = spec.freq().dim();
    let dirs = sample_directions(d, n_directions)?;
    let root = lambda_target.sqrt();

    let samples: Vec<Result<DirectionSample>> = dirs
        .par_iter()
        .map(|(nu, angles)| {
            match kappa(
                lambda_target,
                nu,
                m,
                spec,
                coupling,
                gap_floor_coeff,
                lambda_floor,
            ) {
                Ok(kap) => Ok(DirectionSample {
                    direction: nu.clone(),
                    angles: angles.clone(),
                    accepted: true,
                    kappa: kap,
                    deviation: kap - root,
                }),
                Err(Error::DirectionRejected(_)) | Err(Error::NewtonDivergence(_)) => {
                    Ok(DirectionSample {
                        direction: nu.clone(),
                        angles: angles.clone(),
                        accepted: false,
                        kappa: f64::NAN,
                        deviation: f64::NAN,
                    })
                }
                Err(e) => Err(e),
            }
        })
        .collect();
    let samples = samples.into_iter().collect::<Result<Vec<_>>>()?;

    let acc = samples.iter().filter(|s| s.accepted).count();
    let good_fraction = acc as f64 / samples.len() as f64;
    let max_deviation = samples
        .iter()
        .filter(|s| s.accepted)
        .map(|s| s.deviation.abs())
        .fold(0.0, f64::max);
    let angular_resolution = match d {
        2 => 2.0 * std::f64::consts::PI / n_directions as f64,
        // Average nearest-neighbor spacing of n points on the 2-sphere.
        _ => (4.0 * std::f64::consts::PI / n_directions as f64).sqrt(),
    };
    Ok(IsoenergeticSurface {
        lambda_target,
        samples,
        good_fraction,
        max_deviation,
        angular_resolution,
    })
}

/// Centered finite-difference `∂κ/∂φ` at one direction of a planar (d=2)
/// surface, using the two adjacent directions (cyclic).
pub fn angular_derivative(surface: &IsoenergeticSurface, index: usize) -> Result<f64> {
    let n = surface.samples.len();
    if n == 0 || index >= n {
        return Err(Error::OutsideGrid(format!(
            "direction index {index} out of {n}"
        )));
    }
    if surface.samples[index].angles.len() != 1 {
        return Err(Error::DimensionMismatch(
            "angular derivative is defined for planar (d=2) surfaces".into(),
        ));
    }
    let prev = &surface.samples[(index + n - 1) % n];
    let next = &surface.samples[(index + 1) % n];
    if !prev.accepted || !next.accepted {
        return Err(Error::NeighborRejected);
    }
    let dphi = surface.angular_resolution;
    Ok((next.kappa - prev.kappa) / (2.0 * dphi))
}
