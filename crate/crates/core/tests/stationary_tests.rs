//! Integration tests for the stationary-phase machinery: stationary-point
//! solves, the windowed oscillatory integral, and its leading-order
//! asymptotics.
//!
//! Gaussian amplitudes admit exact Fresnel closed forms against which the
//! quadrature is pinned to near machine precision; the relative error of the
//! leading term against the numeric integral follows the α/t law, which is
//! checked as a ratio.

use num_complex::Complex64;
use qplab_core::error::Error;
use qplab_core::extension::{Dispersion, EigenDispersion, FreeDispersion};
use qplab_core::potential::{sample_frequencies, PotentialSpec};
use qplab_core::stationary::{asymptotic_leading, oscillatory_integral, stationary_point};
use qplab_core::Result;

fn desk_spec() -> PotentialSpec {
    let freq = sample_frequencies(7, 2, 3).unwrap();
    PotentialSpec::random_normalized(7, freq, 1, 3).unwrap()
}

/// Plain (unnormalized) Gaussian bump centered at `c`.
fn bump(c: [f64; 2], sigma: f64) -> impl Fn(&[f64]) -> Complex64 + Sync {
    move |k: &[f64]| {
        let r2 = (k[0] - c[0]).powi(2) + (k[1] - c[1]).powi(2);
        Complex64::new((-r2 / (2.0 * sigma * sigma)).exp(), 0.0)
    }
}

#[test]
fn free_stationary_point_is_half_z() {
    let disp = FreeDispersion(2);
    let point = stationary_point(&[24.0, 0.0], &disp, 100.0).unwrap();
    assert!((point.k0()[0] - 12.0).abs() < 1e-12);
    assert!(point.k0()[1].abs() < 1e-12);
    // φ(k₀) = ⟨k₀,z⟩ − |k₀|² = |z|²/4.
    assert!((point.phase_value(&disp).unwrap() - 144.0).abs() < 1e-9);
    let h = point.hessian();
    assert!((h[0] - 2.0).abs() < 1e-9 && (h[3] - 2.0).abs() < 1e-9);
    assert!(h[1].abs() < 1e-9 && h[2].abs() < 1e-9);
}

#[test]
fn narrow_gaussian_matches_the_fresnel_closed_form() {
    // For g₃ = exp(−|k−k₀|²/(2σ²)) and the free phase, the windowed integral
    // equals e^{itφ₀}/(2(α+it)) with α = 1/(2σ²) up to the exp(−1/(2σ²))
    // window truncation — invisible at σ = 0.15.
    let disp = FreeDispersion(2);
    let sigma = 0.15;
    let alpha = 1.0 / (2.0 * sigma * sigma);
    let t = 5.0;
    let point = stationary_point(&[24.0, 0.0], &disp, 100.0).unwrap();
    let g3 = bump([12.0, 0.0], sigma);
    let numeric = oscillatory_integral(&point, &disp, &g3, t).unwrap().value;
    let phi0 = point.phase_value(&disp).unwrap();
    let exact = Complex64::from_polar(1.0, t * phi0) / (2.0 * Complex64::new(alpha, t));
    let rel = (numeric - exact).norm() / exact.norm();
    assert!(rel < 1e-6, "Fresnel mismatch {:.3e}", rel);
}

#[test]
fn leading_term_error_follows_the_alpha_over_t_law() {
    // For a Gaussian amplitude the exact relative error of the leading
    // asymptotic term is α/t; at σ = 2, t = 50 that is 2.5e-3.
    let disp = FreeDispersion(2);
    let sigma = 2.0;
    let alpha = 1.0 / (2.0 * sigma * sigma);
    let t = 50.0;
    let point = stationary_point(&[24.0, 0.0], &disp, 100.0).unwrap();
    let g3 = bump([12.0, 0.0], sigma);
    let numeric = oscillatory_integral(&point, &disp, &g3, t).unwrap().value;
    let leading = asymptotic_leading(&point, &disp, &g3, t).unwrap();
    let relerr = (numeric - leading).norm() / numeric.norm();
    let predicted = alpha / t;
    assert!(
        (relerr / predicted - 1.0).abs() < 0.05,
        "leading-term relerr {:.4e} vs predicted {:.4e}",
        relerr,
        predicted
    );
}

#[test]
fn vanishing_amplitude_at_k0_kills_the_leading_term() {
    // g₃(k) = (k_x − k₀ₓ)²·Gaussian vanishes at the stationary point: the
    // leading term is exactly zero while the integral itself follows the
    // closed form e^{itφ₀}/(4β²), β = α + it — one power of t faster decay.
    let disp = FreeDispersion(2);
    let sigma = 0.15;
    let alpha = 1.0 / (2.0 * sigma * sigma);
    let t = 50.0;
    let point = stationary_point(&[24.0, 0.0], &disp, 100.0).unwrap();
    let inner = bump([12.0, 0.0], sigma);
    let g3 = move |k: &[f64]| inner(k) * (k[0] - 12.0) * (k[0] - 12.0);
    let numeric = oscillatory_integral(&point, &disp, &g3, t).unwrap().value;
    let phi0 = point.phase_value(&disp).unwrap();
    let beta = Complex64::new(alpha, t);
    let exact = Complex64::from_polar(1.0, t * phi0) / (4.0 * beta * beta);
    let rel = (numeric - exact).norm() / exact.norm();
    assert!(rel < 1e-9, "quadratic-amplitude closed form mismatch {:.3e}", rel);

    let leading = asymptotic_leading(&point, &disp, &g3, t).unwrap();
    assert_eq!(leading.norm(), 0.0);
}

#[test]
fn even_amplitude_gives_reflection_symmetry() {
    // The free phase satisfies φ(−k, −z) = φ(k, z), so for a globally even
    // real amplitude the integral is invariant under z → −z.
    let disp = FreeDispersion(2);
    let sigma = 0.5;
    let a = bump([12.0, 0.0], sigma);
    let b = bump([-12.0, 0.0], sigma);
    let g3 = move |k: &[f64]| a(k) + b(k);
    let t = 5.0;
    let plus = stationary_point(&[24.0, 0.0], &disp, 100.0).unwrap();
    let minus = stationary_point(&[-24.0, 0.0], &disp, 100.0).unwrap();
    let i_plus = oscillatory_integral(&plus, &disp, &g3, t).unwrap().value;
    let i_minus = oscillatory_integral(&minus, &disp, &g3, t).unwrap().value;
    let rel = (i_plus - i_minus).norm() / i_plus.norm();
    assert!(rel < 1e-12, "reflection symmetry broken at {:.3e}", rel);
}

#[test]
fn coupled_stationary_points_approach_half_z_with_energy() {
    // Under the weak potential the stationary point stays within a whisker
    // of z/2, and the deviation shrinks as the energy grows.
    let eig = EigenDispersion::new(desk_spec(), 0.05, 2);
    let p24 = stationary_point(&[24.0, 0.0], &eig, 100.0).unwrap();
    let p48 = stationary_point(&[48.0, 0.0], &eig, 400.0).unwrap();
    let d24 = ((p24.k0()[0] - 12.0).powi(2) + p24.k0()[1].powi(2)).sqrt();
    let d48 = ((p48.k0()[0] - 24.0).powi(2) + p48.k0()[1].powi(2)).sqrt();
    assert!(d24 > 1e-12 && d24 < 1e-5, "deviation at |z| = 24: {:.3e}", d24);
    assert!(d48 > 1e-13 && d48 < 1e-6, "deviation at |z| = 48: {:.3e}", d48);
    assert!(
        d48 < d24,
        "deviation should shrink with energy: {:.3e} vs {:.3e}",
        d48,
        d24
    );
    assert!(p24.residual() < 1e-9 && p48.residual() < 1e-9);
}

#[test]
fn velocity_outside_the_validity_region_is_rejected() {
    // |z/2|² must exceed the energy floor λ*.
    match stationary_point(&[10.0, 0.0], &FreeDispersion(2), 100.0) {
        Err(Error::OutsideRegion(_)) => {}
        other => panic!("expected OutsideRegion, got {:?}", other.map(|_| ())),
    }
}

#[test]
fn flat_dispersion_reports_a_singular_hessian() {
    struct Flat;
    impl Dispersion for Flat {
        fn dim(&self) -> usize {
            2
        }
        fn lambda(&self, k: &[f64]) -> Result<f64> {
            Ok(k.iter().map(|c| c * c).sum())
        }
        fn grad(&self, k: &[f64]) -> Result<Vec<f64>> {
            Ok(k.iter().map(|c| 2.0 * c).collect())
        }
        fn hess(&self, _k: &[f64]) -> Result<Vec<f64>> {
            Ok(vec![0.0; 4])
        }
    }
    let point = stationary_point(&[24.0, 0.0], &Flat, 100.0).unwrap();
    let g3 = bump([12.0, 0.0], 0.5);
    match asymptotic_leading(&point, &Flat, &g3, 5.0) {
        Err(Error::SingularHessian(_)) => {}
        other => panic!("expected SingularHessian, got {:?}", other.map(|_| ())),
    }
}
