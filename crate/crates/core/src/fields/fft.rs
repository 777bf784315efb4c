//! Three-dimensional complex FFT on the periodic grid.
//!
//! Thin wrapper over rustfft that applies the 1-d transform along each of
//! the three axes. Forward transforms are unnormalized; the inverse divides
//! by n³ so that `inverse(forward(x)) == x` up to rounding.

use super::grid::PeriodicGrid;
use num_complex::Complex64;
use rustfft::{Fft, FftPlanner};
use std::sync::Arc;

pub struct Spectral3d {
    grid: PeriodicGrid,
    fwd: Arc<dyn Fft<f64>>,
    inv: Arc<dyn Fft<f64>>,
}

impl Spectral3d {
    pub fn new(grid: PeriodicGrid) -> Self {
        let mut planner = FftPlanner::new();
        let fwd = planner.plan_fft_forward(grid.n());
        let inv = planner.plan_fft_inverse(grid.n());
        Self { grid, fwd, inv }
    }

    pub fn grid(&self) -> PeriodicGrid {
        self.grid
    }

    fn transform(&self, data: &mut [Complex64], plan: &Arc<dyn Fft<f64>>) {
        let n = self.grid.n();
        debug_assert_eq!(data.len(), self.grid.len());
        let mut scratch = vec![Complex64::default(); plan.get_inplace_scratch_len()];

        // axis 2: lines are contiguous, rustfft handles the whole buffer
        plan.process_with_scratch(data, &mut scratch);

        // axes 1 and 0: gather strided lines into a buffer
        let mut line = vec![Complex64::default(); n];
        for i in 0..n {
            let slab = i * n * n;
            for k in 0..n {
                for j in 0..n {
                    line[j] = data[slab + j * n + k];
                }
                plan.process_with_scratch(&mut line, &mut scratch);
                for j in 0..n {
                    data[slab + j * n + k] = line[j];
                }
            }
        }
        for j in 0..n {
            for k in 0..n {
                let base = j * n + k;
                for i in 0..n {
                    line[i] = data[base + i * n * n];
                }
                plan.process_with_scratch(&mut line, &mut scratch);
                for i in 0..n {
                    data[base + i * n * n] = line[i];
                }
            }
        }
    }

    /// Physical values (stored in the real parts) to spectral coefficients.
    pub fn forward(&self, data: &mut [Complex64]) {
        self.transform(data, &self.fwd);
    }

    /// Spectral coefficients to physical values, normalized by 1/n³.
    pub fn inverse(&self, data: &mut [Complex64]) {
        self.transform(data, &self.inv);
        let scale = 1.0 / self.grid.len() as f64;
        for v in data.iter_mut() {
            *v *= scale;
        }
    }

    pub fn forward_real(&self, values: &[f64]) -> Vec<Complex64> {
        let mut buf: Vec<Complex64> = values.iter().map(|&v| Complex64::new(v, 0.0)).collect();
        self.forward(&mut buf);
        buf
    }

    pub fn inverse_to_real(&self, mut coeffs: Vec<Complex64>) -> Vec<f64> {
        self.inverse(&mut coeffs);
        coeffs.into_iter().map(|c| c.re).collect()
    }
}
