//! Oracle tests for smooth cutoffs and the extended dispersion.

use qplab_core::extension::{
    build_cutoff, build_inner_cutoff, extend_dispersion, tabulate_dispersion, Dispersion,
    DispersionTable, EigenDispersion, FreeDispersion,
};
use qplab_core::grid::KGrid;
use qplab_core::operator::{build_operator, extract_pair, GAP_FLOOR_COEFF_DEFAULT};
use qplab_core::potential::{sample_frequencies, PotentialSpec};
use qplab_core::Error;

const EPS: f64 = 0.05;

fn desk_potential() -> PotentialSpec {
    PotentialSpec::random_normalized(7, sample_frequencies(7, 2, 3).unwrap(), 1, 3).unwrap()
}

// --- cutoffs --------------------------------------------------------------

#[test]
fn full_and_empty_regions_give_constant_cutoffs() {
    let grid = KGrid::square(vec![0.0, 0.0], 0.1, 6).unwrap();
    let all = vec![true; grid.len()];
    let none = vec![false; grid.len()];
    let eta1 = build_cutoff(&grid, &all, 0.4).unwrap();
    let eta0 = build_cutoff(&grid, &none, 0.4).unwrap();
    for f in 0..grid.len() {
        assert!((eta1.value(f) - 1.0).abs() < 1e-12);
        assert_eq!(eta0.value(f), 0.0);
    }
}

#[test]
fn halfspace_cutoff_has_plateau_band_and_support() {
    let grid = KGrid::new(vec![0.0, 0.0], 0.1, vec![20, 10]).unwrap();
    let delta = 0.4;
    let region: Vec<bool> = (0..grid.len()).map(|f| grid.point(f)[0] <= 1e-12).collect();
    let eta = build_cutoff(&grid, &region, delta).unwrap();
    for f in 0..grid.len() {
        let x = grid.point(f)[0];
        let v = eta.value(f);
        assert!((0.0..=1.0 + 1e-12).contains(&v));
        if x <= 1e-12 {
            assert!((v - 1.0).abs() < 1e-12, "x={x}: plateau broken, η={v}");
        }
        if x > delta + 1e-9 {
            assert_eq!(v, 0.0, "x={x}: support exceeds δ, η={v}");
        }
    }
    // Monotone decay across the band along +x at fixed y.
    for row in -10i64..=10 {
        let mut prev = f64::INFINITY;
        for col in -20i64..=20 {
            let v = eta.value(grid.flat_of(&[col, row]).unwrap());
            assert!(v <= prev + 1e-13);
            prev = v;
        }
    }
}

#[test]
fn recorded_derivative_bounds_match_direct_differences() {
    let grid = KGrid::new(vec![0.0, 0.0], 0.1, vec![20, 10]).unwrap();
    let delta = 0.4;
    let region: Vec<bool> = (0..grid.len()).map(|f| grid.point(f)[0] <= 1e-12).collect();
    let eta = build_cutoff(&grid, &region, delta).unwrap();
    let (c1, c2) = eta.derivative_bounds();
    assert!(c1 > 0.1 && c1 < 5.0, "c1 = {c1}");
    assert!(c2 > 0.1 && c2 < 50.0, "c2 = {c2}");
    let h = grid.spacing();
    let mut max_d1: f64 = 0.0;
    for row in -9i64..=9 {
        for col in -19i64..=19 {
            let vp = eta.value(grid.flat_of(&[col + 1, row]).unwrap());
            let vm = eta.value(grid.flat_of(&[col - 1, row]).unwrap());
            max_d1 = max_d1.max((vp - vm).abs() / (2.0 * h));
        }
    }
    assert!(max_d1 <= c1 / delta + 1e-12, "C₁ bound violated");
    assert!(max_d1 > 0.5 * c1 / delta, "C₁ not tight");
}

#[test]
fn inner_cutoff_is_supported_strictly_inside() {
    let grid = KGrid::new(vec![0.0, 0.0], 0.1, vec![20, 10]).unwrap();
    let delta = 0.4;
    let region: Vec<bool> = (0..grid.len()).map(|f| grid.point(f)[0] <= 1e-12).collect();
    let eta = build_inner_cutoff(&grid, &region, delta).unwrap();
    for f in 0..grid.len() {
        let x = grid.point(f)[0];
        let v = eta.value(f);
        if x > 1e-12 {
            assert_eq!(v, 0.0, "x={x}: inner cutoff leaked outside the region");
        }
        if x <= -(delta + grid.spacing()) - 1e-12 {
            assert!((v - 1.0).abs() < 1e-12, "x={x}: deep plateau broken, η={v}");
        }
    }
}

#[test]
fn delta_below_resolution_is_rejected() {
    let grid = KGrid::square(vec![0.0, 0.0], 0.1, 6).unwrap();
    let region = vec![true; grid.len()];
    assert!(matches!(
        build_cutoff(&grid, &region, 0.15),
        Err(Error::DeltaBelowResolution { .. })
    ));
    assert!(build_cutoff(&grid, &region, 0.2).is_ok());
}

// --- free dispersion ------------------------------------------------------

#[test]
fn free_dispersion_is_exact() {
    let f = FreeDispersion(2);
    let k = [3.0, -4.0];
    assert_eq!(f.lambda(&k).unwrap(), 25.0);
    assert_eq!(f.grad(&k).unwrap(), vec![6.0, -8.0]);
    assert_eq!(f.hess(&k).unwrap(), vec![2.0, 0.0, 0.0, 2.0]);
}

#[test]
fn free_coupling_table_blends_to_the_exact_paraboloid() {
    let spec = desk_potential();
    let grid = KGrid::square(vec![5.0, 0.0], 0.25, 6).unwrap();
    let table = tabulate_dispersion(&grid, &spec, 0.0, 1, 0.0).unwrap();
    assert_eq!(table.accepted_count(), grid.len());
    let ext = extend_dispersion(&table, 0.75).unwrap();
    for k in [[5.0, 0.0], [4.3, 0.6], [5.87, -0.41]] {
        let ksq = k[0] * k[0] + k[1] * k[1];
        assert!((ext.lambda(&k).unwrap() - ksq).abs() < 1e-9);
        let g = ext.grad(&k).unwrap();
        assert!((g[0] - 2.0 * k[0]).abs() < 1e-8);
        assert!((g[1] - 2.0 * k[1]).abs() < 1e-8);
        let h = ext.hess(&k).unwrap();
        for (i, want) in [2.0, 0.0, 0.0, 2.0].iter().enumerate() {
            assert!((h[i] - want).abs() < 1e-7);
        }
    }
}

// --- synthetic blend geometry --------------------------------------------

fn synthetic_table() -> DispersionTable {
    // Accepted disk |k - (5,0)| ≤ 1 with a smooth artificial deviation.
    let grid = KGrid::square(vec![5.0, 0.0], 0.25, 14).unwrap();
    let mut accepted = Vec::new();
    let mut lambda = Vec::new();
    for f in 0..grid.len() {
        let k = grid.point(f);
        let ksq = k[0] * k[0] + k[1] * k[1];
        let dist_sq = (k[0] - 5.0).powi(2) + k[1] * k[1];
        let dev = 0.01 * (-dist_sq).exp();
        accepted.push(dist_sq <= 1.0);
        lambda.push(if dist_sq <= 1.0 { ksq + dev } else { f64::NAN });
    }
    DispersionTable {
        gap: vec![1.0; grid.len()],
        dominance: vec![1.0; grid.len()],
        grid,
        accepted,
        lambda,
    }
}

#[test]
fn blend_reproduces_accepted_cells_and_free_far_field() {
    let table = synthetic_table();
    let ext = extend_dispersion(&table, 0.75).unwrap();
    let grid = ext.grid().clone();
    for f in 0..grid.len() {
        let k = grid.point(f);
        let ksq = k[0] * k[0] + k[1] * k[1];
        let dist = ((k[0] - 5.0).powi(2) + k[1] * k[1]).sqrt();
        if table.accepted[f] {
            // Exact reproduction on accepted cells.
            let rel = (ext.cell_lambda(f) - table.lambda[f]).abs() / table.lambda[f];
            assert!(rel < 1e-14, "cell {f}: rel {rel:e}");
        }
        if dist > 1.0 + 0.75 + 2.0 * grid.spacing() {
            // Exactly free beyond the δ-neighborhood.
            assert_eq!(ext.cell_lambda(f), ksq);
            assert_eq!(ext.eta().value(f), 0.0);
        }
    }
    // Continuity: adjacent-cell jumps bounded by the gradient scale.
    let bound = (2.0 * 8.6 + 1.0) * grid.spacing();
    for f in 0..grid.len() {
        let offs = grid.offsets(f);
        for a in 0..2 {
            let mut o = offs.clone();
            o[a] += 1;
            if let Some(fnext) = grid.flat_of(&o) {
                let jump = (ext.cell_lambda(fnext) - ext.cell_lambda(f)).abs();
                assert!(jump < bound, "cell {f} axis {a}: jump {jump}");
            }
        }
    }
}

#[test]
fn empty_region_cannot_be_extended() {
    let mut table = synthetic_table();
    table.accepted = vec![false; table.grid.len()];
    assert!(matches!(
        extend_dispersion(&table, 0.75),
        Err(Error::EmptyRegion)
    ));
}

#[test]
fn evaluation_outside_the_grid_errors() {
    let table = synthetic_table();
    let ext = extend_dispersion(&table, 0.75).unwrap();
    assert!(matches!(
        ext.lambda(&[30.0, 0.0]),
        Err(Error::OutsideGrid(_))
    ));
    assert!(ext.grad(&[30.0, 0.0]).is_err());
}

// --- desk-potential dispersion table -------------------------------------

#[test]
fn desk_blend_matches_eigenvalues_and_analytic_gradient() {
    let spec = desk_potential();
    let grid = KGrid::new(vec![12.0, 0.0], 0.25, vec![6, 5]).unwrap();
    let table = tabulate_dispersion(&grid, &spec, EPS, 2, GAP_FLOOR_COEFF_DEFAULT).unwrap();
    assert!(table.accepted_count() > grid.len() / 2);
    let ext = extend_dispersion(&table, 0.75).unwrap();

    // Accepted-cell reproduction.
    for f in 0..grid.len() {
        if table.accepted[f] {
            let rel = (ext.cell_lambda(f) - table.lambda[f]).abs() / table.lambda[f];
            assert!(rel < 1e-14);
        }
    }

    // Analytic (perturbation-identity) gradient vs the blended table's
    // finite differences at the center cell.
    let k = [12.0, 0.0];
    let op = build_operator(&k, 2, &spec, EPS).unwrap();
    let pair = extract_pair(&op, GAP_FLOOR_COEFF_DEFAULT / 12.0).unwrap();
    let g_analytic = pair.grad_lambda();
    let g_table = ext.grad(&k).unwrap();
    let step = grid.spacing();
    for a in 0..2 {
        assert!(
            (g_analytic[a] - g_table[a]).abs() < 10.0 * step * step,
            "axis {a}: {} vs {}",
            g_analytic[a],
            g_table[a]
        );
    }

    // Hessian: symmetric, close to the free 2·Identity.
    let h = ext.hess(&k).unwrap();
    assert_eq!(h[1], h[2]);
    assert!((h[0] - 2.0).abs() < 1e-3);
    assert!((h[3] - 2.0).abs() < 1e-3);
    assert!(h[1].abs() < 1e-3);
}

#[test]
fn halving_the_coupling_shrinks_the_gradient_deviation() {
    let spec = desk_potential();
    let grid = KGrid::square(vec![12.0, 0.0], 0.25, 4).unwrap();
    let dev_of = |coupling: f64| -> f64 {
        let table = tabulate_dispersion(&grid, &spec, coupling, 2, GAP_FLOOR_COEFF_DEFAULT).unwrap();
        let ext = extend_dispersion(&table, 0.6).unwrap();
        let g = ext.grad(&[12.0, 0.0]).unwrap();
        ((g[0] - 24.0).powi(2) + g[1].powi(2)).sqrt()
    };
    let full = dev_of(EPS);
    let half = dev_of(EPS / 2.0);
    assert!(full > 1e-9, "deviation too small to measure: {full:e}");
    assert!(
        full / half >= 3.0,
        "coupling halving reduced the gradient deviation only {:.2}×",
        full / half
    );
}

// --- eigensolve-backed dispersion ----------------------------------------

#[test]
fn eigen_dispersion_agrees_with_direct_extraction() {
    let spec = desk_potential();
    let disp = EigenDispersion::new(spec.clone(), EPS, 2);
    let k = [12.0, 0.0];
    let op = build_operator(&k, 2, &spec, EPS).unwrap();
    let pair = extract_pair(&op, GAP_FLOOR_COEFF_DEFAULT / 12.0).unwrap();
    assert_eq!(disp.lambda(&k).unwrap(), pair.lambda());
    let g = disp.grad(&k).unwrap();
    let gp = pair.grad_lambda();
    assert_eq!(g, gp);
    let h = disp.hess(&k).unwrap();
    assert_eq!(h[1], h[2], "symmetrized");
    assert!((h[0] - 2.0).abs() < 1e-2);
    assert!((h[3] - 2.0).abs() < 1e-2);
}
