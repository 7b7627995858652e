//! Subcommand runners. Each `prepare_*` function finishes every check that
//! can fail for configuration reasons — schema validation, potential
//! construction, dimension agreement, eager guard preconditions — and returns
//! a [`Job`] closure that only then touches the output directory. Failures
//! inside the job are numerical-guard failures (exit 3); the manifest is
//! still written by the caller.

use crate::config::{
    ConfigError, ConfigResult, DiophantineConfig, ProjectConfig, ScanConfig, StationaryConfig,
    SurfaceConfig, TransportConfig,
};
use crate::plot::{line_chart, scatter_chart, Series};
use qplab_core::dynamics::{moment_table, prepare_packet, sample_record, transport_record, WavePacketSpec};
use qplab_core::extension::{Dispersion, EigenDispersion, FreeDispersion};
use qplab_core::geometry::{scan_nonresonant, surface};
use qplab_core::grid::KGrid;
use qplab_core::potential::diophantine_margin;
use qplab_core::stationary::{asymptotic_leading, oscillatory_integral, stationary_point};
use qplab_core::transforms::{
    compare_free_projection, parseval_check, GaussianProfile, ProjectionRegion,
};
use qplab_core::Complex;
use serde_json::{json, Value};
use std::fmt;
use std::fmt::Write as _;
use std::path::Path;

/// Execution-stage failure: a numerical guard of the core library, or an I/O
/// failure while persisting artifacts. Either way the run stops with exit 3
/// and the manifest records the message.
#[derive(Debug)]
pub enum RunError {
    Core(qplab_core::Error),
    Io(String),
}

impl fmt::Display for RunError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            RunError::Core(e) => write!(f, "{e}"),
            RunError::Io(msg) => f.write_str(msg),
        }
    }
}

impl From<qplab_core::Error> for RunError {
    fn from(e: qplab_core::Error) -> Self {
        RunError::Core(e)
    }
}

/// Result of a successful run: the summary document plus the artifact names
/// written into the output directory.
pub struct Outcome {
    pub summary: Value,
    pub artifacts: Vec<String>,
}

/// A fully validated experiment, ready to execute into an output directory.
pub struct Job {
    pub execute: Box<dyn FnOnce(&Path) -> Result<Outcome, RunError>>,
}

impl Job {
    fn new(f: impl FnOnce(&Path) -> Result<Outcome, RunError> + 'static) -> Self {
        Job { execute: Box::new(f) }
    }
}

fn write_artifact(
    out: &Path,
    name: &str,
    text: &str,
    artifacts: &mut Vec<String>,
) -> Result<(), RunError> {
    std::fs::write(out.join(name), text)
        .map_err(|e| RunError::Io(format!("cannot write {name}: {e}")))?;
    artifacts.push(name.to_string());
    Ok(())
}

/// Plots are best-effort: a failure is reported on stderr but never fails the
/// run — the CSV record is the authoritative artifact.
fn note_plot(result: Result<(), String>, name: &str, artifacts: &mut Vec<String>) {
    match result {
        Ok(()) => artifacts.push(name.to_string()),
        Err(e) => eprintln!("qplab: warning: could not render {name}: {e}"),
    }
}

fn ball_filter(center: Vec<f64>, radius: f64) -> impl Fn(&[f64]) -> bool + Sync {
    move |k: &[f64]| {
        let d2: f64 = k
            .iter()
            .zip(&center)
            .map(|(a, b)| (a - b) * (a - b))
            .sum();
        d2.sqrt() <= radius
    }
}

// ---------------------------------------------------------------------------
// scan
// ---------------------------------------------------------------------------

pub fn prepare_scan(cfg: ScanConfig, seed: Option<u64>) -> ConfigResult<Job> {
    cfg.validate()?;
    let spec = cfg.potential.build(seed)?;
    // Eager annulus precondition (mirrors the scanner's own guard): the inner
    // radius must clear the largest reachable frequency shift.
    let need = 2.0 * ((spec.q() * cfg.truncation) as f64 + 1.0) * spec.freq().max_norm();
    if cfg.annulus[0] <= need {
        return Err(ConfigError(format!(
            "annulus inner radius {} must exceed 2(QM+1)·max|ω| = {need:.3}",
            cfg.annulus[0]
        )));
    }
    let coeff = cfg.floor_coeff();
    Ok(Job::new(move |out| {
        let scan = scan_nonresonant(
            (cfg.annulus[0], cfg.annulus[1]),
            cfg.step,
            cfg.truncation,
            &spec,
            cfg.coupling,
            coeff,
        )?;
        let mut artifacts = Vec::new();
        write_artifact(out, "scan.csv", &scan.to_csv(), &mut artifacts)?;

        let accepted: Vec<(f64, f64)> = scan
            .cells
            .iter()
            .filter(|c| c.accepted)
            .map(|c| (c.k[0], c.k[1]))
            .collect();
        let rejected: Vec<(f64, f64)> = scan
            .cells
            .iter()
            .filter(|c| !c.accepted)
            .map(|c| (c.k[0], c.k[1]))
            .collect();
        note_plot(
            scatter_chart(
                &out.join("scan.png"),
                "Non-resonant scan",
                "kx",
                "ky",
                &accepted,
                &rejected,
            ),
            "scan.png",
            &mut artifacts,
        );

        let summary = json!({
            "annulus": [scan.annulus.0, scan.annulus.1],
            "step": scan.step,
            "cells": scan.cells.len(),
            "accepted": accepted.len(),
            "fraction": scan.fraction,
            "stderr": scan.stderr,
            "gap_floor_coeff": coeff,
        });
        Ok(Outcome { summary, artifacts })
    }))
}

// ---------------------------------------------------------------------------
// surface
// ---------------------------------------------------------------------------

pub fn prepare_surface(cfg: SurfaceConfig, seed: Option<u64>) -> ConfigResult<Job> {
    cfg.validate()?;
    let spec = cfg.potential.build(seed)?;
    let coeff = cfg.floor_coeff();
    Ok(Job::new(move |out| {
        let surf = surface(
            cfg.lambda_target,
            cfg.directions,
            cfg.truncation,
            &spec,
            cfg.coupling,
            coeff,
            cfg.lambda_floor,
        )?;
        let mut artifacts = Vec::new();
        write_artifact(out, "surface.csv", &surf.to_csv(), &mut artifacts)?;

        let dev_points: Vec<(f64, f64)> = surf
            .samples
            .iter()
            .filter(|s| s.accepted)
            .map(|s| (s.angles[0], s.deviation))
            .collect();
        note_plot(
            scatter_chart(
                &out.join("surface.png"),
                "Isoenergetic surface deviation",
                "phi",
                "kappa - sqrt(lambda)",
                &dev_points,
                &[],
            ),
            "surface.png",
            &mut artifacts,
        );

        let accepted = surf.samples.iter().filter(|s| s.accepted).count();
        let summary = json!({
            "lambda_target": surf.lambda_target,
            "directions": surf.samples.len(),
            "accepted": accepted,
            "good_fraction": surf.good_fraction,
            "max_deviation": surf.max_deviation,
            "angular_resolution": surf.angular_resolution,
            "gap_floor_coeff": coeff,
        });
        Ok(Outcome { summary, artifacts })
    }))
}

// ---------------------------------------------------------------------------
// project
// ---------------------------------------------------------------------------

pub fn prepare_project(cfg: ProjectConfig, seed: Option<u64>) -> ConfigResult<Job> {
    cfg.validate()?;
    let spec = cfg.potential.build(seed)?;
    if spec.freq().dim() != cfg.center.len() {
        return Err(ConfigError(format!(
            "center has {} components but the potential lives in dimension {}",
            cfg.center.len(),
            spec.freq().dim()
        )));
    }
    let coeff = cfg.floor_coeff();
    Ok(Job::new(move |out| {
        let grid = KGrid::snapped(&cfg.center, cfg.spacing, cfg.half_extent)?;
        let center = grid.center().to_vec();
        let region = match cfg.ball_radius {
            Some(r) => ProjectionRegion::build_filtered(
                &grid,
                &spec,
                cfg.coupling,
                cfg.truncation,
                cfg.lambda_cap,
                coeff,
                ball_filter(center.clone(), r),
            )?,
            None => ProjectionRegion::build(
                &grid,
                &spec,
                cfg.coupling,
                cfg.truncation,
                cfg.lambda_cap,
                coeff,
            )?,
        };
        let profile_center = cfg.profile_center.clone().unwrap_or_else(|| center.clone());
        let profile = GaussianProfile::normalized(profile_center, cfg.profile_sigma);
        let parseval = parseval_check(&profile, &region, cfg.n_points)?;
        let free_cmp = compare_free_projection(&profile, &region, cfg.n_points)?;

        let d = region.dim();
        let mut csv = String::new();
        for a in 0..d {
            let _ = write!(csv, "{},", ["kx", "ky", "kz"][a.min(2)]);
        }
        csv.push_str("lambda,free_deviation,u_sup_bound\n");
        for cell in region.cells() {
            for c in &cell.k {
                let _ = write!(csv, "{:.12e},", c);
            }
            let k2: f64 = cell.k.iter().map(|c| c * c).sum();
            let _ = writeln!(
                csv,
                "{:.12e},{:.12e},{:.12e}",
                cell.lambda(),
                cell.lambda() - k2,
                cell.pair.u_sup_bound()
            );
        }
        let mut artifacts = Vec::new();
        write_artifact(out, "region.csv", &csv, &mut artifacts)?;

        let accepted: Vec<(f64, f64)> = region
            .cells()
            .iter()
            .map(|c| (c.k[0], c.k[1]))
            .collect();
        let rejected: Vec<(f64, f64)> = (0..grid.len())
            .filter(|&f| region.cell_at_flat(f).is_none())
            .map(|f| {
                let k = grid.point(f);
                (k[0], k[1])
            })
            .collect();
        note_plot(
            scatter_chart(
                &out.join("project.png"),
                "Projection region acceptance",
                "kx",
                "ky",
                &accepted,
                &rejected,
            ),
            "project.png",
            &mut artifacts,
        );

        let summary = json!({
            "cells": region.len(),
            "window_cells": grid.len(),
            "lambda_cap": region.lambda_cap(),
            "gap_floor_coeff": coeff,
            "parseval": {
                "lhs": parseval.lhs,
                "rhs": parseval.rhs,
                "relerr": parseval.relerr,
            },
            "free_comparison": free_cmp,
            "max_u_sup_bound": region.max_u_sup_bound(),
        });
        Ok(Outcome { summary, artifacts })
    }))
}

// ---------------------------------------------------------------------------
// transport
// ---------------------------------------------------------------------------

pub fn prepare_transport(cfg: TransportConfig, seed: Option<u64>) -> ConfigResult<Job> {
    cfg.validate()?;
    let spec = cfg.potential.build(seed)?;
    if spec.freq().dim() != cfg.center.len() {
        return Err(ConfigError(format!(
            "center has {} components but the potential lives in dimension {}",
            cfg.center.len(),
            spec.freq().dim()
        )));
    }
    let coeff = cfg.floor_coeff();
    Ok(Job::new(move |out| {
        let grid = KGrid::snapped(&cfg.center, cfg.spacing, cfg.half_extent)?;
        let center = grid.center().to_vec();
        let region = ProjectionRegion::build_filtered(
            &grid,
            &spec,
            cfg.coupling,
            cfg.truncation,
            cfg.lambda_cap,
            coeff,
            ball_filter(center, cfg.ball_radius),
        )?;
        let packet_spec = WavePacketSpec {
            profile: GaussianProfile::normalized(cfg.center.clone(), cfg.sigma),
            delta: cfg.delta,
        };
        let packet = prepare_packet(&packet_spec, &region)?;
        let table = moment_table(&region, packet.values())?;
        let record = sample_record(&table, cfg.tail_factor * cfg.t_max, cfg.dt)?;
        let tr = transport_record(&record, cfg.t_min, cfg.t_max)?;

        let mut artifacts = Vec::new();
        write_artifact(out, "transport.csv", &tr.to_csv(), &mut artifacts)?;
        write_artifact(out, "raw.csv", &tr.raw_csv(), &mut artifacts)?;

        let log_pairs = |ys: &[f64]| -> Vec<(f64, f64)> {
            tr.t_grid
                .iter()
                .zip(ys)
                .filter(|(t, v)| **t > 0.0 && **v > 0.0)
                .map(|(t, v)| (t.log10(), v.log10()))
                .collect()
        };
        note_plot(
            line_chart(
                &out.join("transport.png"),
                "Averaged second moment vs window",
                "log10 T",
                "log10 <<X^2>>_T",
                &[
                    Series { label: "Abel".into(), points: log_pairs(&tr.abel) },
                    Series { label: "Cesaro".into(), points: log_pairs(&tr.cesaro) },
                ],
            ),
            "transport.png",
            &mut artifacts,
        );

        let summary: Value = serde_json::from_str(&tr.summary_json())
            .map_err(|e| RunError::Io(format!("summary serialization: {e}")))?;
        Ok(Outcome { summary, artifacts })
    }))
}

// ---------------------------------------------------------------------------
// stationary
// ---------------------------------------------------------------------------

pub fn prepare_stationary(cfg: StationaryConfig, seed: Option<u64>) -> ConfigResult<Job> {
    cfg.validate()?;
    let disp: Box<dyn Dispersion> = if cfg.coupling == 0.0 {
        Box::new(FreeDispersion(cfg.z.len()))
    } else {
        let spec = cfg
            .potential
            .as_ref()
            .expect("validated: potential present when coupled")
            .build(seed)?;
        if spec.freq().dim() != cfg.z.len() {
            return Err(ConfigError(format!(
                "z has {} components but the potential lives in dimension {}",
                cfg.z.len(),
                spec.freq().dim()
            )));
        }
        Box::new(EigenDispersion::new(spec, cfg.coupling, cfg.truncation))
    };
    Ok(Job::new(move |out| {
        let point = stationary_point(&cfg.z, disp.as_ref(), cfg.lambda_star)?;
        let amp_center = cfg
            .amplitude_center
            .clone()
            .unwrap_or_else(|| point.k0().to_vec());
        let two_s2 = 2.0 * cfg.amplitude_sigma * cfg.amplitude_sigma;
        let amplitude = move |k: &[f64]| {
            let d2: f64 = k
                .iter()
                .zip(&amp_center)
                .map(|(a, b)| (a - b) * (a - b))
                .sum();
            Complex::new((-d2 / two_s2).exp(), 0.0)
        };

        let z_norm = cfg.z.iter().map(|c| c * c).sum::<f64>().sqrt();
        let mut csv =
            String::from("t,z_norm,numeric_re,numeric_im,leading_re,leading_im,relerr\n");
        let mut rel_points = Vec::new();
        let mut last_relerr = f64::NAN;
        for &t in &cfg.times {
            let numeric = oscillatory_integral(&point, disp.as_ref(), &amplitude, t)?.value;
            let leading = asymptotic_leading(&point, disp.as_ref(), &amplitude, t)?;
            let relerr = if numeric.norm() > 0.0 {
                (numeric - leading).norm() / numeric.norm()
            } else {
                f64::INFINITY
            };
            let _ = writeln!(
                csv,
                "{:.12e},{:.12e},{:.12e},{:.12e},{:.12e},{:.12e},{:.12e}",
                t, z_norm, numeric.re, numeric.im, leading.re, leading.im, relerr
            );
            if t > 0.0 && relerr.is_finite() && relerr > 0.0 {
                rel_points.push((t.log10(), relerr.log10()));
            }
            last_relerr = relerr;
        }
        let mut artifacts = Vec::new();
        write_artifact(out, "stationary.csv", &csv, &mut artifacts)?;
        note_plot(
            line_chart(
                &out.join("stationary.png"),
                "Leading-term relative error",
                "log10 t",
                "log10 relerr",
                &[Series { label: "relerr".into(), points: rel_points }],
            ),
            "stationary.png",
            &mut artifacts,
        );

        let half_z_dev = point
            .k0()
            .iter()
            .zip(&cfg.z)
            .map(|(k, z)| (k - z / 2.0) * (k - z / 2.0))
            .sum::<f64>()
            .sqrt();
        let phase_value = point.phase_value(disp.as_ref())?;
        let summary = json!({
            "z": cfg.z,
            "z_norm": z_norm,
            "k0": point.k0(),
            "k0_minus_half_z": half_z_dev,
            "phase_value": phase_value,
            "newton_residual": point.residual(),
            "hessian": point.hessian(),
            "times": cfg.times,
            "relerr_final": last_relerr,
        });
        Ok(Outcome { summary, artifacts })
    }))
}

// ---------------------------------------------------------------------------
// diophantine
// ---------------------------------------------------------------------------

pub fn prepare_diophantine(cfg: DiophantineConfig, seed: Option<u64>) -> ConfigResult<Job> {
    cfg.validate()?;
    let spec = cfg.potential.build(seed)?;
    Ok(Job::new(move |out| {
        let freq = spec.freq();
        let mut csv = String::from("n_max,margin,worst_n\n");
        let mut points = Vec::new();
        let mut last = None;
        for n in 1..=cfg.n_max {
            let m = diophantine_margin(freq, n, cfg.tau)?;
            let worst: Vec<String> = m.worst_n.0.iter().map(|v| v.to_string()).collect();
            let _ = writeln!(csv, "{},{:.12e},{}", n, m.margin, worst.join(";"));
            if m.margin > 0.0 {
                points.push((n as f64, m.margin.log10()));
            }
            last = Some(m);
        }
        let mut artifacts = Vec::new();
        write_artifact(out, "diophantine.csv", &csv, &mut artifacts)?;
        note_plot(
            line_chart(
                &out.join("diophantine.png"),
                "Small-divisor margin vs window size",
                "N",
                "log10 min |n.w| |n|^tau",
                &[Series { label: "margin".into(), points }],
            ),
            "diophantine.png",
            &mut artifacts,
        );

        let last = last.expect("n_max >= 1 validated");
        let summary = json!({
            "n_max": cfg.n_max,
            "tau": cfg.tau,
            "margin": last.margin,
            "worst_n": last.worst_n.0,
            "nonresonant_window": last.margin > 0.0,
        });
        Ok(Outcome { summary, artifacts })
    }))
}
