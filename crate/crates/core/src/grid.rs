//! Rectangular quasi-momentum cell lattices.
//!
//! A `KGrid` is the uniform lattice `center + spacing·j` for integer offsets
//! `j ∈ [-half₀, half₀] × … × [-half_{d-1}, half_{d-1}]`, enumerated
//! lexicographically (first axis slowest). Everything downstream — scans,
//! cutoff tables, dispersion tables, packet synthesis — addresses cells by
//! the flat lexicographic index, so iteration order (and therefore every
//! serialized artifact) is deterministic by construction.

use crate::error::{Error, Result};

/// Uniform rectangular lattice of quasi-momentum cells.
#[derive(Debug, Clone, PartialEq)]
pub struct KGrid {
    center: Vec<f64>,
    spacing: f64,
    half: Vec<i64>,
}

impl KGrid {
    /// Lattice `center + spacing·j`, `j ∈ Π [-half_a, half_a]`.
    pub fn new(center: Vec<f64>, spacing: f64, half: Vec<i64>) -> Result<Self> {
        if center.is_empty() || center.len() != half.len() {
            return Err(Error::DimensionMismatch(format!(
                "grid center has {} components, half-extents {}",
                center.len(),
                half.len()
            )));
        }
        if !(spacing > 0.0) || !spacing.is_finite() {
            return Err(Error::EmptyGrid(format!("non-positive spacing {spacing}")));
        }
        if half.iter().any(|&h| h < 0) {
            return Err(Error::EmptyGrid("negative half-extent".into()));
        }
        Ok(Self {
            center,
            spacing,
            half,
        })
    }

    /// Square lattice with the same half-extent on every axis.
    pub fn square(center: Vec<f64>, spacing: f64, half: i64) -> Result<Self> {
        let d = center.len();
        Self::new(center, spacing, vec![half; d])
    }

    /// Square lattice whose center is snapped to the nearest integer multiple
    /// of `spacing` per axis, so every cell sits exactly on the lattice
    /// `spacing·Z^d`. Spatial boxes of side `L = 2π/spacing` then carry each
    /// cell on a discrete Fourier mode, which packet synthesis relies on.
    pub fn snapped(center_hint: &[f64], spacing: f64, half: i64) -> Result<Self> {
        if !(spacing > 0.0) || !spacing.is_finite() {
            return Err(Error::EmptyGrid(format!("non-positive spacing {spacing}")));
        }
        let center = center_hint
            .iter()
            .map(|&c| (c / spacing).round() * spacing)
            .collect();
        Self::square(center, spacing, half)
    }

    /// Spatial dimension.
    pub fn dim(&self) -> usize {
        self.center.len()
    }

    /// Cell spacing Δk.
    pub fn spacing(&self) -> f64 {
        self.spacing
    }

    /// Grid center (the `j = 0` point).
    pub fn center(&self) -> &[f64] {
        &self.center
    }

    /// Per-axis half-extents.
    pub fn half_extents(&self) -> &[i64] {
        &self.half
    }

    /// Number of cells along axis `a`.
    pub fn side(&self, a: usize) -> usize {
        (2 * self.half[a] + 1) as usize
    }

    /// Total number of cells.
    pub fn len(&self) -> usize {
        (0..self.dim()).map(|a| self.side(a)).product()
    }

    /// True only for degenerate construction (never: sides are ≥ 1).
    pub fn is_empty(&self) -> bool {
        false
    }

    /// Integer offsets of the cell at flat index `flat`.
    pub fn offsets(&self, flat: usize) -> Vec<i64> {
        let d = self.dim();
        let mut rem = flat;
        let mut out = vec![0i64; d];
        for a in (0..d).rev() {
            let side = self.side(a);
            out[a] = (rem % side) as i64 - self.half[a];
            rem /= side;
        }
        out
    }

    /// Flat index of integer offsets, when inside the box.
    pub fn flat_of(&self, offs: &[i64]) -> Option<usize> {
        if offs.len() != self.dim() {
            return None;
        }
        let mut idx = 0usize;
        for (a, &j) in offs.iter().enumerate() {
            if j < -self.half[a] || j > self.half[a] {
                return None;
            }
            idx = idx * self.side(a) + (j + self.half[a]) as usize;
        }
        Some(idx)
    }

    /// Quasi-momentum of the cell at flat index `flat`.
    pub fn point(&self, flat: usize) -> Vec<f64> {
        self.offsets(flat)
            .iter()
            .zip(&self.center)
            .map(|(&j, &c)| c + self.spacing * j as f64)
            .collect()
    }

    /// Quasi-momentum of integer offsets (not necessarily inside the box).
    pub fn point_of_offsets(&self, offs: &[i64]) -> Vec<f64> {
        offs.iter()
            .zip(&self.center)
            .map(|(&j, &c)| c + self.spacing * j as f64)
            .collect()
    }

    /// Locates an arbitrary `k`: the base cell offsets `j` with
    /// `k = center + spacing·(j + frac)` and `frac ∈ [0,1)^d`, such that the
    /// interpolation corners `j` and `j + 1` both lie inside the box.
    pub fn locate(&self, k: &[f64]) -> Result<(Vec<i64>, Vec<f64>)> {
        if k.len() != self.dim() {
            return Err(Error::DimensionMismatch(format!(
                "point has {} components, grid {}",
                k.len(),
                self.dim()
            )));
        }
        let mut base = vec![0i64; self.dim()];
        let mut frac = vec![0.0; self.dim()];
        for a in 0..self.dim() {
            let t = (k[a] - self.center[a]) / self.spacing;
            let mut b = t.floor();
            let mut f = t - b;
            // Snap the upper boundary onto the last interior cell.
            if b as i64 == self.half[a] && f < 1e-12 {
                b -= 1.0;
                f = 1.0;
            }
            let bi = b as i64;
            if bi < -self.half[a] || bi + 1 > self.half[a] {
                return Err(Error::OutsideGrid(format!(
                    "k[{a}] = {} outside grid axis [{}, {}]",
                    k[a],
                    self.center[a] - self.spacing * self.half[a] as f64,
                    self.center[a] + self.spacing * self.half[a] as f64
                )));
            }
            base[a] = bi;
            frac[a] = f;
        }
        Ok((base, frac))
    }

    /// Multilinear interpolation of a cell-indexed table at `k`.
    pub fn interpolate(&self, table: &[f64], k: &[f64]) -> Result<f64> {
        if table.len() != self.len() {
            return Err(Error::DimensionMismatch(format!(
                "table has {} entries, grid {}",
                table.len(),
                self.len()
            )));
        }
        let (base, frac) = self.locate(k)?;
        let d = self.dim();
        let corners = 1usize << d;
        let mut acc = 0.0;
        for c in 0..corners {
            let mut w = 1.0;
            let mut offs = base.clone();
            for a in 0..d {
                if c >> a & 1 == 1 {
                    offs[a] += 1;
                    w *= frac[a];
                } else {
                    w *= 1.0 - frac[a];
                }
            }
            let flat = self
                .flat_of(&offs)
                .expect("locate guarantees interior corners");
            acc += w * table[flat];
        }
        Ok(acc)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn lexicographic_enumeration_roundtrips() {
        let g = KGrid::new(vec![1.0, -2.0], 0.5, vec![2, 1]).unwrap();
        assert_eq!(g.len(), 15);
        assert_eq!(g.offsets(0), vec![-2, -1]);
        assert_eq!(g.offsets(14), vec![2, 1]);
        for flat in 0..g.len() {
            let offs = g.offsets(flat);
            assert_eq!(g.flat_of(&offs), Some(flat));
            let p = g.point(flat);
            for a in 0..2 {
                let want = g.center()[a] + 0.5 * offs[a] as f64;
                assert!((p[a] - want).abs() < 1e-15);
            }
        }
        assert_eq!(g.flat_of(&[3, 0]), None);
        assert_eq!(g.flat_of(&[0, 2]), None);
    }

    #[test]
    fn interpolation_reproduces_affine_functions() {
        let g = KGrid::square(vec![0.0, 0.0], 0.25, 6).unwrap();
        let table: Vec<f64> = (0..g.len())
            .map(|f| {
                let p = g.point(f);
                3.0 + 2.0 * p[0] - 0.7 * p[1]
            })
            .collect();
        for k in [[0.13, -0.41], [1.49, 1.49], [-1.5, 0.0]] {
            let got = g.interpolate(&table, &k).unwrap();
            let want = 3.0 + 2.0 * k[0] - 0.7 * k[1];
            assert!((got - want).abs() < 1e-13, "k={k:?}");
        }
        assert!(g.interpolate(&table, &[1.6, 0.0]).is_err());
    }
}
