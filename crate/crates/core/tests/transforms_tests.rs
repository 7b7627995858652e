//! Integration tests for the projection/synthesis pipeline on a desk-scale
//! momentum window around k = (12, 0).
//!
//! The free-field (coupling 0) cases have closed-form answers and pin the
//! machinery to roundoff; the coupled cases check the operator identities
//! (Parseval, adjointness, idempotence, contraction) at tolerances with at
//! least two orders of headroom over values observed on this grid.

use num_complex::Complex64;
use qplab_core::dynamics::FieldState;
use qplab_core::error::Error;
use qplab_core::grid::KGrid;
use qplab_core::potential::{sample_frequencies, LatticeIndex, PotentialSpec};
use qplab_core::transforms::{
    apply_projection, compare_free_projection, forward_transform, forward_transform_field,
    parseval_check, synthesize, synthesize_free, GaussianProfile, MomentumProfile,
    ProjectionRegion,
};
use std::sync::LazyLock;

const COUPLING: f64 = 0.05;
const LAMBDA_CAP: f64 = 250.0;
const GAP_COEFF: f64 = 0.1;
const BALL_RADIUS: f64 = 1.8;
const N_POINTS: usize = 256;

fn desk_spec() -> PotentialSpec {
    let freq = sample_frequencies(7, 2, 3).unwrap();
    PotentialSpec::random_normalized(7, freq, 1, 3).unwrap()
}

fn ball_filter(center: [f64; 2], radius: f64) -> impl Fn(&[f64]) -> bool + Sync {
    move |k: &[f64]| {
        let dx = k[0] - center[0];
        let dy = k[1] - center[1];
        (dx * dx + dy * dy).sqrt() <= radius
    }
}

static SPEC: LazyLock<PotentialSpec> = LazyLock::new(desk_spec);

static GRID: LazyLock<KGrid> =
    LazyLock::new(|| KGrid::snapped(&[12.0, 0.0], 0.2, 10).unwrap());

static PROFILE: LazyLock<GaussianProfile> =
    LazyLock::new(|| GaussianProfile::normalized(vec![12.0, 0.0], 0.5));

static EPS_REGION: LazyLock<ProjectionRegion> = LazyLock::new(|| {
    ProjectionRegion::build_filtered(
        &GRID,
        &SPEC,
        COUPLING,
        2,
        LAMBDA_CAP,
        GAP_COEFF,
        ball_filter([12.0, 0.0], BALL_RADIUS),
    )
    .unwrap()
});

static FREE_REGION: LazyLock<ProjectionRegion> = LazyLock::new(|| {
    ProjectionRegion::build_filtered(
        &GRID,
        &SPEC,
        0.0,
        2,
        LAMBDA_CAP,
        0.0,
        ball_filter([12.0, 0.0], BALL_RADIUS),
    )
    .unwrap()
});

#[test]
fn profile_normalization_is_exact() {
    assert!((PROFILE.norm_sq() - 1.0).abs() < 1e-12);
}

#[test]
fn free_region_accepts_every_ball_cell_under_cap() {
    // With zero coupling nothing can be rejected, so the region must contain
    // exactly the grid nodes inside the ball with |k|^2 under the cap.
    let filter = ball_filter([12.0, 0.0], BALL_RADIUS);
    let mut expected = 0usize;
    for flat in 0..GRID.len() {
        let k = GRID.point(flat);
        let lambda_free: f64 = k.iter().map(|c| c * c).sum();
        if filter(&k) && lambda_free <= LAMBDA_CAP {
            expected += 1;
        }
    }
    assert_eq!(FREE_REGION.len(), expected);
    for cell in FREE_REGION.cells() {
        let k2: f64 = cell.k.iter().map(|c| c * c).sum();
        assert!(
            (cell.lambda() - k2).abs() <= 1e-9 * k2,
            "free eigenvalue must equal |k|^2, got {} vs {}",
            cell.lambda(),
            k2
        );
    }
}

#[test]
fn free_forward_transform_samples_the_profile() {
    let f = forward_transform(&*PROFILE, &FREE_REGION).unwrap();
    for (cell, value) in FREE_REGION.cells().iter().zip(f.values()) {
        let want = PROFILE.eval(&cell.k);
        assert!(
            (value - want).norm() <= 1e-12 * (1.0 + want.norm()),
            "free coefficients must sample F̂ pointwise"
        );
    }
}

#[test]
fn free_parseval_is_roundoff_exact() {
    let report = parseval_check(&*PROFILE, &FREE_REGION, N_POINTS).unwrap();
    assert!(
        report.relerr < 1e-9,
        "free Parseval relerr {:.3e} exceeds 1e-9",
        report.relerr
    );
}

#[test]
fn free_projection_matches_band_multiplier() {
    let cmp = compare_free_projection(&*PROFILE, &FREE_REGION, N_POINTS).unwrap();
    assert!(
        cmp < 1e-12,
        "free projection must match the sharp band multiplier, got {:.3e}",
        cmp
    );
}

#[test]
fn free_synthesis_paths_agree() {
    let f = forward_transform(&*PROFILE, &FREE_REGION).unwrap();
    let synth = synthesize(&f, &FREE_REGION, N_POINTS).unwrap();
    let free = synthesize_free(&f, &FREE_REGION, N_POINTS).unwrap();
    assert!(synth.diff_norm(&free).unwrap() < 1e-9);

    let proj = apply_projection(&*PROFILE, &FREE_REGION, N_POINTS).unwrap();
    assert!(proj.diff_norm(&synth).unwrap() < 1e-12);
}

#[test]
fn analysis_is_a_contraction() {
    for region in [&*FREE_REGION, &*EPS_REGION] {
        let f = forward_transform(&*PROFILE, region).unwrap();
        let ratio = f.norm_sq() / PROFILE.norm_sq();
        assert!(
            ratio <= 1.0 + 1e-12,
            "coefficient energy must not exceed profile energy, got ratio {ratio}"
        );
    }
}

#[test]
fn ball_truncation_deficit_sits_in_the_gaussian_tail_band() {
    // Energy dropped by restricting to the radius-1.8 ball around the packet
    // center: the |F̂|² tail beyond R is exp(−R²/σ²) ≈ 2.4e-6 of the mass,
    // and cell granularity at the rim cannot move it outside [1e-7, 1e-4].
    let f = forward_transform(&*PROFILE, &FREE_REGION).unwrap();
    let deficit = 1.0 - f.norm_sq() / PROFILE.norm_sq();
    assert!(
        (1e-7..1e-4).contains(&deficit),
        "truncation deficit {:.3e} outside expected band",
        deficit
    );
}

#[test]
fn coupled_parseval_holds() {
    let report = parseval_check(&*PROFILE, &EPS_REGION, N_POINTS).unwrap();
    assert!(
        report.relerr < 1e-6,
        "coupled Parseval relerr {:.3e} exceeds 1e-6",
        report.relerr
    );
}

#[test]
fn synthesis_is_adjoint_to_analysis() {
    // ⟨S f, F⟩ over the box must equal ⟨f, T F⟩ = ⟨f, f⟩ over coefficients.
    let f = forward_transform(&*PROFILE, &EPS_REGION).unwrap();
    let synth = synthesize(&f, &EPS_REGION, N_POINTS).unwrap();
    let h = synth.step();
    let hd = h * h;
    let mut box_inner = Complex64::new(0.0, 0.0);
    for flat in 0..synth.values().len() {
        let x = synth.position(flat);
        let fv = PROFILE.eval_real(&x);
        box_inner += synth.values()[flat].conj() * fv * hd;
    }
    let coeff_inner = f.inner(&f);
    let diff = (box_inner - coeff_inner).norm();
    assert!(
        diff <= 1e-9 * f.norm_sq().max(1e-30),
        "adjointness defect {:.3e} too large",
        diff
    );
}

#[test]
fn analysis_of_synthesis_is_idempotent() {
    let f = forward_transform(&*PROFILE, &EPS_REGION).unwrap();
    let synth = synthesize(&f, &EPS_REGION, N_POINTS).unwrap();
    let f2 = forward_transform_field(&synth, &EPS_REGION).unwrap();
    let num: f64 = f2
        .values()
        .iter()
        .zip(f.values())
        .map(|(a, b)| (a - b).norm_sqr())
        .sum::<f64>()
        .sqrt();
    let den: f64 = f.values().iter().map(|v| v.norm_sqr()).sum::<f64>().sqrt();
    assert!(
        num / den <= 1e-5,
        "idempotence defect {:.3e} too large",
        num / den
    );
}

#[test]
fn coupled_projection_error_stays_under_perturbative_bound() {
    let cmp = compare_free_projection(&*PROFILE, &EPS_REGION, N_POINTS).unwrap();
    let bound = EPS_REGION.max_u_sup_bound();
    assert!(
        cmp < bound,
        "projection deviation {:.3e} must stay below the sup-norm bound {:.3e}",
        cmp,
        bound
    );
    assert!(cmp < 1e-3, "projection deviation {:.3e} unexpectedly large", cmp);
}

#[test]
fn profile_disjoint_from_region_produces_zero_coefficients() {
    // Center (30, 0) is 18 momentum units from the region ball; the Gaussian
    // factor underflows when squared, so the coefficient energy is exactly 0.
    let far = GaussianProfile::normalized(vec![30.0, 0.0], 0.5);
    let f = forward_transform(&far, &EPS_REGION).unwrap();
    assert_eq!(f.norm_sq(), 0.0);
}

#[test]
fn stored_coefficient_vectors_are_unit_norm_with_real_positive_gauge() {
    let window = EPS_REGION.window();
    let zero = window
        .position(&LatticeIndex(vec![0, 0, 0]))
        .expect("window must contain the zero site");
    for cell in EPS_REGION.cells().iter().step_by(37) {
        let total: f64 = (0..window.len())
            .map(|i| cell.normalized_coeff(i).norm_sqr())
            .sum();
        assert!((total - 1.0).abs() < 1e-10, "coefficients must be unit norm");
        let v0 = cell.normalized_coeff(zero);
        assert!(v0.re > 0.0, "dominant coefficient must be gauged real positive");
        assert!(v0.im.abs() < 1e-10 * v0.re);
    }
}

#[test]
fn incommensurate_box_is_rejected() {
    // The synthesis box side must be 2π/Δk; a mismatched field cannot be
    // analyzed against the region grid.
    let bad = FieldState::zero(2, 30.0, 64, 0.0).unwrap();
    match forward_transform_field(&bad, &EPS_REGION) {
        Err(Error::NyquistViolation(_)) => {}
        other => panic!("expected NyquistViolation, got {:?}", other.map(|_| ())),
    }
}
