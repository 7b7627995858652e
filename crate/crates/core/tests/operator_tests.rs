//! Oracle tests for the truncated operator: matrix structure, eigenpair
//! extraction, perturbation-theory cross-checks, and symmetry invariants.

use num_complex::Complex64;
use proptest::prelude::*;
use qplab_core::operator::{
    build_operator, build_operator_on, default_gap_floor, extract_pair, extract_pair_report,
    ladder_converge, ladder_converged, resonance_margin, second_order_estimate, spectrum,
    spectrum_with_cap, LatticeWindow,
};
use qplab_core::potential::{
    frequency_of, sample_frequencies, FrequencyVector, LatticeIndex, PotentialSpec,
};
use qplab_core::{Error, Rejection};

const EPS: f64 = 0.05;

fn desk_freq() -> FrequencyVector {
    sample_frequencies(7, 2, 3).unwrap()
}

fn desk_potential() -> PotentialSpec {
    PotentialSpec::random_normalized(7, desk_freq(), 1, 3).unwrap()
}

fn shifted_norm_sq(k: &[f64], n: &LatticeIndex, freq: &FrequencyVector) -> f64 {
    let f = frequency_of(n, freq).unwrap();
    k.iter().zip(&f).map(|(a, b)| (a + b) * (a + b)).sum()
}

// --- matrix structure ----------------------------------------------------

#[test]
fn matrix_is_hermitian_with_correct_diagonal() {
    let spec = desk_potential();
    let k = [3.7, -1.2];
    let op = build_operator(&k, 2, &spec, EPS).unwrap();
    let dim = op.dim();
    assert_eq!(dim, 125);
    for i in 0..dim {
        let want = shifted_norm_sq(&k, op.window().site(i), spec.freq());
        assert!((op.diagonal(i) - want).abs() < 1e-13);
        for j in 0..dim {
            let hij = op.entry(i, j);
            let hji = op.entry(j, i);
            assert_eq!(hij, hji.conj(), "Hermitian violation at ({i},{j})");
        }
    }
}

#[test]
fn off_diagonal_entries_follow_the_coupling_stencil() {
    let spec = desk_potential();
    let op = build_operator(&[2.0, 1.0], 2, &spec, EPS).unwrap();
    let w = op.window();
    for i in 0..op.dim() {
        for j in 0..op.dim() {
            if i == j {
                continue;
            }
            let dn = w.site(i).sub(w.site(j));
            let want = EPS * spec.coeff(&dn);
            let got = op.entry(i, j);
            assert!(
                (got - want).norm() < 1e-15,
                "entry ({i},{j}) dn={:?}",
                dn.0
            );
            if dn.sup_norm() > 1 {
                assert_eq!(got, Complex64::new(0.0, 0.0));
            }
        }
    }
}

#[test]
fn truncation_radius_must_cover_coupling_range() {
    let spec = desk_potential();
    assert!(matches!(
        build_operator(&[1.0, 0.0], 0, &spec, EPS),
        Err(Error::TruncationBelowCoupling { m: 0, q: 1 })
    ));
    assert!(build_operator(&[1.0, 0.0], 1, &spec, EPS).is_ok());
}

#[test]
fn dimension_cap_is_enforced() {
    let spec = desk_potential();
    let op = build_operator(&[1.0, 0.0], 2, &spec, EPS).unwrap();
    assert!(matches!(
        spectrum_with_cap(&op, 100),
        Err(Error::DimensionCap { dim: 125, cap: 100 })
    ));
    assert!(spectrum(&op).is_ok());
}

// --- zero coupling: everything is exact ---------------------------------

#[test]
fn zero_coupling_spectrum_is_the_sorted_diagonal() {
    let spec = desk_potential();
    let k = [5.0, 2.0];
    let op = build_operator(&k, 2, &spec, 0.0).unwrap();
    let mut diag: Vec<f64> = (0..op.dim()).map(|i| op.diagonal(i)).collect();
    diag.sort_by(f64::total_cmp);
    let eigs = spectrum(&op).unwrap();
    for (a, b) in eigs.iter().zip(&diag) {
        assert!((a - b).abs() < 1e-10 * (1.0 + b.abs()));
    }
}

#[test]
fn zero_coupling_extraction_is_a_pure_plane_wave() {
    let spec = desk_potential();
    let k = [5.0, 2.0];
    let op = build_operator(&k, 2, &spec, 0.0).unwrap();
    // Floor 0: any positive spectral gap is accepted.
    let pair = extract_pair(&op, 0.0).unwrap();
    assert!((pair.lambda() - 29.0).abs() < 1e-10);
    assert!((pair.dominance() - 1.0).abs() < 1e-12);
    let zero = LatticeIndex(vec![0, 0, 0]);
    assert_eq!(pair.coeff(&zero), Complex64::new(1.0, 0.0));
    assert!(pair.u_sup_bound() < 1e-12);
    let g = pair.grad_lambda();
    assert!((g[0] - 10.0).abs() < 1e-12);
    assert!((g[1] - 4.0).abs() < 1e-12);
}

// --- perturbation-theory oracles at the desk point ----------------------

#[test]
fn first_order_coefficients_match_perturbation_theory() {
    let spec = desk_potential();
    let k = [12.0, 0.0];
    let op = build_operator(&k, 2, &spec, EPS).unwrap();
    let pair = extract_pair(&op, default_gap_floor(12.0)).unwrap();
    let k_sq = 144.0;
    for (n, v) in spec.coeffs() {
        let denom = shifted_norm_sq(&k, n, spec.freq()) - k_sq;
        let pt1 = -(EPS * v) / denom;
        let got = pair.coeff(n);
        let rel = (got - pt1).norm() / pt1.norm();
        assert!(rel < 1e-4, "n={:?}: rel={rel:.2e}", n.0);
    }
}

#[test]
fn eigenvalue_matches_second_order_estimate_and_frozen_value() {
    let spec = desk_potential();
    let k = [12.0, 0.0];
    let op = build_operator(&k, 2, &spec, EPS).unwrap();
    let pair = extract_pair(&op, default_gap_floor(12.0)).unwrap();
    let pt2 = second_order_estimate(&k, &spec, EPS).unwrap();
    assert!((pair.lambda() - pt2).abs() < 1e-10);

    // Frozen desk values (regression pins).
    let dev = pair.lambda() - 144.0;
    assert!((dev - 1.713218e-6).abs() < 1e-11, "dev={dev:e}");
    assert!((pair.gap() - 0.2159).abs() < 5e-4);
    assert!((pair.dominance() - 0.999969).abs() < 1e-5);
    assert!((pair.u_sup_bound() - 1.2351e-2).abs() < 1e-5);
    assert!(pair.residual() < 1e-11);
}

#[test]
fn resonance_margin_matches_direct_minimum() {
    let spec = desk_potential();
    let k = [12.0, 0.0];
    let got = resonance_margin(&k, &spec).unwrap();
    let k_sq = 144.0;
    let want = spec
        .coeffs()
        .map(|(n, _)| (shifted_norm_sq(&k, n, spec.freq()) - k_sq).abs())
        .fold(f64::INFINITY, f64::min);
    assert!((got - want).abs() < 1e-12);
    assert!((got - 2.4002).abs() < 1e-3, "frozen margin, got {got}");
}

#[test]
fn second_order_estimate_fails_on_exact_resonance() {
    let spec = desk_potential();
    // Construct k with |k + n₃ω|² = |k|² exactly: k = -f/2 + s·f⊥.
    let f = frequency_of(&LatticeIndex(vec![0, 0, 1]), spec.freq()).unwrap();
    let s = 3.0;
    let k = [-f[0] / 2.0 + s * (-f[1]), -f[1] / 2.0 + s * f[0]];
    assert!(second_order_estimate(&k, &spec, EPS).is_err());
    let m = resonance_margin(&k, &spec).unwrap();
    assert!(m < 1e-12);
}

#[test]
fn gradient_matches_centered_finite_differences() {
    let spec = desk_potential();
    let k = [12.0, 0.0];
    let floor = default_gap_floor(12.0);
    let op = build_operator(&k, 2, &spec, EPS).unwrap();
    let pair = extract_pair(&op, floor).unwrap();
    let g = pair.grad_lambda();
    let h = 1e-4;
    for j in 0..2 {
        let mut kp = k;
        let mut km = k;
        kp[j] += h;
        km[j] -= h;
        let lp = extract_pair(&build_operator(&kp, 2, &spec, EPS).unwrap(), floor)
            .unwrap()
            .lambda();
        let lm = extract_pair(&build_operator(&km, 2, &spec, EPS).unwrap(), floor)
            .unwrap()
            .lambda();
        let fd = (lp - lm) / (2.0 * h);
        assert!(
            (g[j] - fd).abs() < 1e-5 * (1.0 + g[j].abs()),
            "component {j}: analytic {} vs fd {fd}",
            g[j]
        );
    }
}

#[test]
fn eigenfunction_value_matches_direct_sum() {
    let spec = desk_potential();
    let k = [12.0, 0.0];
    let op = build_operator(&k, 2, &spec, EPS).unwrap();
    let pair = extract_pair(&op, default_gap_floor(12.0)).unwrap();
    for x in [[0.0, 0.0], [1.7, -0.4]] {
        let mut acc = Complex64::new(0.0, 0.0);
        for (i, site) in pair.window().sites().iter().enumerate() {
            let f = frequency_of(site, spec.freq()).unwrap();
            let phase = (k[0] + f[0]) * x[0] + (k[1] + f[1]) * x[1];
            acc += pair.coeffs()[i] * Complex64::from_polar(1.0, phase);
        }
        let got = pair.eigenfunction_value(&x);
        assert!((got - acc).norm() < 1e-12);
    }
}

// --- extraction accept/reject logic -------------------------------------

#[test]
fn infinite_gap_floor_rejects_with_report() {
    let spec = desk_potential();
    let op = build_operator(&[12.0, 0.0], 2, &spec, EPS).unwrap();
    let (pair, report) = extract_pair_report(&op, f64::INFINITY).unwrap();
    assert!(pair.is_none());
    assert!(matches!(report.rejection, Some(Rejection::GapTooSmall)));
    assert!(report.gap.is_finite() && report.gap > 0.0);
    assert!(report.dominance > 0.99);
    assert!(matches!(
        extract_pair(&op, f64::INFINITY),
        Err(Error::Rejected(Rejection::GapTooSmall))
    ));
}

#[test]
fn strong_coupling_breaks_plane_wave_dominance() {
    let spec = desk_potential();
    let op = build_operator(&[1.0, 0.0], 2, &spec, 50.0).unwrap();
    let (pair, report) = extract_pair_report(&op, 0.0).unwrap();
    assert!(pair.is_none());
    assert!(matches!(report.rejection, Some(Rejection::DominanceFailure)));
    assert!(report.dominance <= 0.5);
}

#[test]
fn report_and_pair_agree_when_accepted() {
    let spec = desk_potential();
    let op = build_operator(&[12.0, 0.0], 2, &spec, EPS).unwrap();
    let floor = default_gap_floor(12.0);
    let (pair, report) = extract_pair_report(&op, floor).unwrap();
    let pair = pair.unwrap();
    assert!(report.rejection.is_none());
    assert_eq!(pair.lambda(), report.lambda);
    assert_eq!(pair.gap(), report.gap);
    assert_eq!(pair.dominance(), report.dominance);
}

// --- symmetries ----------------------------------------------------------

#[test]
fn offset_box_realizes_momentum_shift() {
    // Relabeling n → n₀ + m maps H at k on the offset box onto H at
    // k + n₀ω on the centered box; the spectra must coincide.
    let spec = desk_potential();
    let n0 = LatticeIndex(vec![1, -1, 0]);
    let k = [4.3, -0.7];
    let f = frequency_of(&n0, spec.freq()).unwrap();
    let k_shift = [k[0] + f[0], k[1] + f[1]];

    let offset_window = LatticeWindow::with_offset(3, 2, &n0);
    let op_a = build_operator_on(&k, offset_window, &spec, EPS).unwrap();
    let op_b = build_operator(&k_shift, 2, &spec, EPS).unwrap();
    let ea = spectrum(&op_a).unwrap();
    let eb = spectrum(&op_b).unwrap();
    for (a, b) in ea.iter().zip(&eb) {
        assert!((a - b).abs() < 1e-9, "{a} vs {b}");
    }
}

#[test]
fn coupling_sign_flip_preserves_the_spectrum() {
    // Every coupled mode changes the coordinate sum by ±1, so conjugation
    // by the diagonal phase (−1)^{Σn_j} flips the coupling sign: the
    // spectra at ±ε coincide exactly.
    let spec = desk_potential();
    for k in [[3.0, 1.0], [12.0, 0.0]] {
        let ep = spectrum(&build_operator(&k, 2, &spec, EPS).unwrap()).unwrap();
        let em = spectrum(&build_operator(&k, 2, &spec, -EPS).unwrap()).unwrap();
        let ksq = k[0] * k[0] + k[1] * k[1];
        for (a, b) in ep.iter().zip(&em) {
            assert!((a - b).abs() < 1e-11 * (1.0 + ksq), "{a} vs {b}");
        }
    }
}

// --- truncation ladder ---------------------------------------------------

#[test]
fn ladder_drift_vanishes_at_the_desk_point() {
    let spec = desk_potential();
    let k = [12.0, 0.0];
    let steps = ladder_converge(&k, &spec, EPS, &[2, 3, 4], default_gap_floor(12.0)).unwrap();
    assert_eq!(steps.len(), 3);
    assert!(steps[0].drift.is_none());
    for s in &steps[1..] {
        assert!(s.drift.unwrap() < 1e-10, "M={} drift {:?}", s.m, s.drift);
    }
    assert!(ladder_converged(&steps, 144.0));
}

#[test]
fn ladder_requires_ascending_levels() {
    let spec = desk_potential();
    let k = [12.0, 0.0];
    assert!(ladder_converge(&k, &spec, EPS, &[], 0.0).is_err());
    assert!(ladder_converge(&k, &spec, EPS, &[3, 2], 0.0).is_err());
    assert!(ladder_converge(&k, &spec, EPS, &[2, 2], 0.0).is_err());
}

// --- serialization -------------------------------------------------------

#[test]
fn eigenpair_json_has_the_pinned_shape() {
    let spec = desk_potential();
    let op = build_operator(&[12.0, 0.0], 2, &spec, EPS).unwrap();
    let pair = extract_pair(&op, default_gap_floor(12.0)).unwrap();
    let doc: serde_json::Value = serde_json::from_str(&pair.to_json()).unwrap();
    assert_eq!(doc["k"].as_array().unwrap().len(), 2);
    assert_eq!(doc["M"], 2);
    assert!(doc["lambda"].as_f64().unwrap() > 0.0);
    assert!(doc["gap"].as_f64().is_some());
    assert!(doc["dominance"].as_f64().is_some());
    let coeffs = doc["coeffs"].as_array().unwrap();
    assert!(!coeffs.is_empty());
    assert!(coeffs[0]["n"].as_array().unwrap().len() == 3);
    assert!(coeffs[0]["re"].as_f64().is_some());
    assert!(coeffs[0]["im"].as_f64().is_some());
}

// --- randomized structural invariants ------------------------------------

proptest! {
    #![proptest_config(ProptestConfig::with_cases(8))]
    #[test]
    fn spectrum_is_covariant_under_lattice_shifts(
        kx in -3.0f64..3.0,
        ky in -3.0f64..3.0,
        n0 in proptest::collection::vec(-1i64..=1, 3),
    ) {
        let spec = desk_potential();
        let n0 = LatticeIndex(n0);
        let f = frequency_of(&n0, spec.freq()).unwrap();
        let k = [kx, ky];
        let k_shift = [kx + f[0], ky + f[1]];
        let op_a = build_operator_on(&k, LatticeWindow::with_offset(3, 1, &n0), &spec, EPS).unwrap();
        let op_b = build_operator(&k_shift, 1, &spec, EPS).unwrap();
        let ea = spectrum(&op_a).unwrap();
        let eb = spectrum(&op_b).unwrap();
        for (a, b) in ea.iter().zip(&eb) {
            prop_assert!((a - b).abs() < 1e-9);
        }
    }
}
