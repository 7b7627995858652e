//! Infinitely smooth cutoff building blocks: the classic `e^{-1/s}` ramp,
//! radial plateau cutoffs, and normalized discrete bump kernels used to
//! mollify cell-set indicators by convolution.

/// `e^{-1/s}` continued by 0 for `s ≤ 0` — all derivatives vanish at 0.
fn flat_exp(s: f64) -> f64 {
    if s > 0.0 {
        (-1.0 / s).exp()
    } else {
        0.0
    }
}

/// Monotone C^∞ ramp: 0 for `s ≤ 0`, 1 for `s ≥ 1`,
/// `f(s)/(f(s) + f(1-s))` in between (symmetric about `s = 1/2`).
pub fn smooth_ramp(s: f64) -> f64 {
    if s <= 0.0 {
        0.0
    } else if s >= 1.0 {
        1.0
    } else {
        let a = flat_exp(s);
        let b = flat_exp(1.0 - s);
        a / (a + b)
    }
}

/// Radial plateau cutoff: 1 for `r ≤ r_inner`, 0 for `r ≥ r_outer`, smooth
/// and monotone across the band.
pub fn radial_cutoff(r: f64, r_inner: f64, r_outer: f64) -> f64 {
    debug_assert!(r_outer > r_inner, "cutoff band must have positive width");
    smooth_ramp((r_outer - r) / (r_outer - r_inner))
}

/// Unnormalized C^∞ bump profile on the unit ball: `e^{-1/(1-r²)}` for
/// `|r| < 1`, 0 outside.
pub fn bump_profile(r: f64) -> f64 {
    let s = 1.0 - r * r;
    if s > 0.0 {
        (-1.0 / s).exp()
    } else {
        0.0
    }
}

/// Discrete bump kernel on the `d`-dimensional cell lattice: offsets with
/// `|j|₂ ≤ radius_cells` weighted by `bump_profile(|j|/(radius+1/2))`,
/// normalized to total weight 1. The support is *exactly* the Euclidean
/// ball of `radius_cells` cells, so convolving twice moves mass at most
/// `2·radius_cells` cells — the width bookkeeping the cutoff builders rely
/// on. `radius_cells = 0` degenerates to the identity kernel.
pub fn bump_kernel(d: usize, radius_cells: usize) -> Vec<(Vec<i64>, f64)> {
    let r = radius_cells as i64;
    let side = (2 * r + 1) as usize;
    let total = side.pow(d as u32);
    let scale = radius_cells as f64 + 0.5;
    let mut out = Vec::new();
    let mut sum = 0.0;
    for code in 0..total {
        let mut c = code;
        let mut j = vec![0i64; d];
        for a in 0..d {
            j[a] = (c % side) as i64 - r;
            c /= side;
        }
        let norm_sq: i64 = j.iter().map(|&x| x * x).sum();
        if norm_sq > r * r {
            continue;
        }
        let w = if radius_cells == 0 {
            1.0
        } else {
            bump_profile((norm_sq as f64).sqrt() / scale)
        };
        if w > 0.0 {
            sum += w;
            out.push((j, w));
        }
    }
    for (_, w) in &mut out {
        *w /= sum;
    }
    // Deterministic order: lexicographic in the offset.
    out.sort_by(|a, b| a.0.cmp(&b.0));
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn ramp_endpoints_and_midpoint() {
        assert_eq!(smooth_ramp(-0.3), 0.0);
        assert_eq!(smooth_ramp(0.0), 0.0);
        assert_eq!(smooth_ramp(1.0), 1.0);
        assert_eq!(smooth_ramp(2.0), 1.0);
        assert!((smooth_ramp(0.5) - 0.5).abs() < 1e-15);
    }

    #[test]
    fn ramp_is_monotone_and_flat_at_the_ends() {
        let mut prev = -1.0;
        for i in 0..=1000 {
            let s = i as f64 / 1000.0;
            let v = smooth_ramp(s);
            assert!(v >= prev);
            prev = v;
        }
        // All-order flatness shows up as tiny one-sided differences.
        let h = 1e-3;
        assert!(smooth_ramp(h) < 1e-100);
        assert!(1.0 - smooth_ramp(1.0 - h) < 1e-100);
    }

    #[test]
    fn radial_cutoff_plateaus() {
        assert_eq!(radial_cutoff(0.0, 1.0, 2.0), 1.0);
        assert_eq!(radial_cutoff(1.0, 1.0, 2.0), 1.0);
        assert_eq!(radial_cutoff(2.0, 1.0, 2.0), 0.0);
        assert_eq!(radial_cutoff(5.0, 1.0, 2.0), 0.0);
        let mid = radial_cutoff(1.5, 1.0, 2.0);
        assert!((mid - 0.5).abs() < 1e-15);
    }

    #[test]
    fn kernel_is_normalized_symmetric_and_compact() {
        for d in [1usize, 2, 3] {
            for r in [0usize, 1, 2, 3] {
                let k = bump_kernel(d, r);
                let sum: f64 = k.iter().map(|(_, w)| w).sum();
                assert!((sum - 1.0).abs() < 1e-12, "d={d} r={r}");
                for (j, w) in &k {
                    let neg: Vec<i64> = j.iter().map(|&x| -x).collect();
                    let wn = k
                        .iter()
                        .find(|(jj, _)| *jj == neg)
                        .map(|(_, w)| *w)
                        .unwrap();
                    assert!((w - wn).abs() < 1e-15);
                    let norm_sq: i64 = j.iter().map(|&x| x * x).sum();
                    assert!(norm_sq <= (r * r) as i64, "support exceeds radius");
                }
            }
        }
        assert_eq!(bump_kernel(2, 0).len(), 1);
        assert_eq!(bump_kernel(2, 0)[0].1, 1.0);
    }
}
