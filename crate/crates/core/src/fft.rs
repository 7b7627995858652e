//! Thin d-dimensional FFT helpers over row-major complex arrays.
//!
//! Wraps `rustfft` plans with a small per-length cache and applies the
//! one-dimensional transform along every axis in turn.  Both directions are
//! unnormalized: `forward` computes `X_m = Σ_j x_j e^{-2πi⟨m,j⟩/N}` and
//! `inverse` computes `Σ_m X_m e^{+2πi⟨m,j⟩/N}`, so `inverse(forward(x))`
//! equals `x` scaled by the total number of points.  Callers own the
//! normalization convention; quadrature weights usually absorb it here.

use std::collections::HashMap;
use std::sync::Arc;

use num_complex::Complex64;
use rustfft::{Fft, FftPlanner};

use crate::{Error, Result};

/// Plan cache for repeated transforms of the same shape.
pub struct FftEngine {
    planner: FftPlanner<f64>,
    forward: HashMap<usize, Arc<dyn Fft<f64>>>,
    inverse: HashMap<usize, Arc<dyn Fft<f64>>>,
}

impl Default for FftEngine {
    fn default() -> Self {
        Self::new()
    }
}

impl FftEngine {
    pub fn new() -> Self {
        Self {
            planner: FftPlanner::new(),
            forward: HashMap::new(),
            inverse: HashMap::new(),
        }
    }

    fn plan(&mut self, len: usize, inverse: bool) -> Arc<dyn Fft<f64>> {
        let (cache, planner) = if inverse {
            (&mut self.inverse, &mut self.planner)
        } else {
            (&mut self.forward, &mut self.planner)
        };
        cache
            .entry(len)
            .or_insert_with(|| {
                if inverse {
                    planner.plan_fft_inverse(len)
                } else {
                    planner.plan_fft_forward(len)
                }
            })
            .clone()
    }

    /// Unnormalized forward DFT along every axis of a row-major array.
    pub fn forward_nd(&mut self, data: &mut [Complex64], shape: &[usize]) -> Result<()> {
        self.transform_nd(data, shape, false)
    }

    /// Unnormalized inverse DFT along every axis of a row-major array.
    pub fn inverse_nd(&mut self, data: &mut [Complex64], shape: &[usize]) -> Result<()> {
        self.transform_nd(data, shape, true)
    }

    fn transform_nd(
        &mut self,
        data: &mut [Complex64],
        shape: &[usize],
        inverse: bool,
    ) -> Result<()> {
        let total: usize = shape.iter().product();
        if shape.is_empty() || total == 0 || data.len() != total {
            return Err(Error::DimensionMismatch(format!(
                "FFT buffer has {} entries, shape {:?} wants {}",
                data.len(),
                shape,
                total
            )));
        }
        // Row-major with axis 0 slowest: stride of axis a is the product of
        // the lengths of all later axes.
        for axis in 0..shape.len() {
            let len = shape[axis];
            if len == 1 {
                continue;
            }
            let plan = self.plan(len, inverse);
            let stride: usize = shape[axis + 1..].iter().product();
            let lines = total / len;
            if stride == 1 {
                // Contiguous lines: process in place, batched per line.
                for line in 0..lines {
                    let start = line * len;
                    plan.process(&mut data[start..start + len]);
                }
            } else {
                let mut scratch = vec![Complex64::default(); len];
                for line in 0..lines {
                    // Decompose the line index into (block before axis, offset
                    // within the trailing stride block).
                    let outer = line / stride;
                    let inner = line % stride;
                    let base = outer * len * stride + inner;
                    for j in 0..len {
                        scratch[j] = data[base + j * stride];
                    }
                    plan.process(&mut scratch);
                    for j in 0..len {
                        data[base + j * stride] = scratch[j];
                    }
                }
            }
        }
        Ok(())
    }
}
