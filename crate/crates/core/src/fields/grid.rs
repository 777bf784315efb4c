//! Uniform periodic grid on the cube [0, 2π)³.

use crate::error::{CoreError, Result};
use serde::{Deserialize, Serialize};

pub const TWO_PI: f64 = 2.0 * std::f64::consts::PI;

/// Discretization of the 2π-periodic cube with `n` points per dimension.
///
/// `n` must be a power of two and at least 8, so that the spectral
/// transforms are exact for band-limited data and the two-thirds
/// dealiasing rule leaves a usable band.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct PeriodicGrid {
    n: usize,
}

impl PeriodicGrid {
    pub fn new(n: usize) -> Result<Self> {
        if n < 8 || !n.is_power_of_two() {
            return Err(CoreError::Config(format!(
                "grid size must be a power of two >= 8, got {n}"
            )));
        }
        Ok(Self { n })
    }

    #[inline]
    pub fn n(&self) -> usize {
        self.n
    }

    /// Total number of grid points, n³.
    #[inline]
    pub fn len(&self) -> usize {
        self.n * self.n * self.n
    }

    #[inline]
    pub fn is_empty(&self) -> bool {
        false
    }

    /// Grid spacing 2π/n. Exact in binary floating point since n is a
    /// power of two.
    #[inline]
    pub fn spacing(&self) -> f64 {
        TWO_PI / self.n as f64
    }

    /// Volume of one cell, (2π/n)³ = (2π)³/n³.
    #[inline]
    pub fn cell_volume(&self) -> f64 {
        TWO_PI.powi(3) / self.len() as f64
    }

    /// Total measure of the torus, (2π)³.
    #[inline]
    pub fn total_measure(&self) -> f64 {
        TWO_PI.powi(3)
    }

    /// Flat index of the point (i, j, k); the last coordinate varies fastest.
    #[inline]
    pub fn index(&self, i: usize, j: usize, k: usize) -> usize {
        (i * self.n + j) * self.n + k
    }

    /// Physical coordinate of grid index m along one axis.
    #[inline]
    pub fn coord(&self, m: usize) -> f64 {
        m as f64 * self.spacing()
    }

    /// Physical coordinates of the flat index.
    #[inline]
    pub fn point(&self, flat: usize) -> [f64; 3] {
        let k = flat % self.n;
        let j = (flat / self.n) % self.n;
        let i = flat / (self.n * self.n);
        [self.coord(i), self.coord(j), self.coord(k)]
    }

    /// Signed integer wavenumber for spectral index m along one axis:
    /// 0, 1, ..., n/2, -n/2+1, ..., -1.
    #[inline]
    pub fn wavenumber(&self, m: usize) -> i64 {
        if m <= self.n / 2 {
            m as i64
        } else {
            m as i64 - self.n as i64
        }
    }

    /// Largest wavenumber kept by the two-thirds dealiasing rule.
    #[inline]
    pub fn dealias_cutoff(&self) -> i64 {
        (self.n / 3) as i64
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rejects_bad_sizes() {
        assert!(PeriodicGrid::new(4).is_err());
        assert!(PeriodicGrid::new(12).is_err());
        assert!(PeriodicGrid::new(0).is_err());
        assert!(PeriodicGrid::new(8).is_ok());
        assert!(PeriodicGrid::new(64).is_ok());
    }

    #[test]
    fn total_measure_is_exact() {
        for n in [8usize, 16, 32] {
            let g = PeriodicGrid::new(n).unwrap();
            // count * cell_volume reproduces (2π)³ bit-exactly because the
            // cell volume is (2π)³ divided by a power of two
            let total = g.len() as f64 * g.cell_volume();
            assert_eq!(total, TWO_PI.powi(3));
            // a plain sequential sum agrees to rounding
            let mut acc = 0.0;
            for _ in 0..g.len() {
                acc += g.cell_volume();
            }
            assert!((acc - g.total_measure()).abs() / g.total_measure() < 1e-12);
        }
    }

    #[test]
    fn wavenumber_layout() {
        let g = PeriodicGrid::new(8).unwrap();
        let ks: Vec<i64> = (0..8).map(|m| g.wavenumber(m)).collect();
        assert_eq!(ks, vec![0, 1, 2, 3, 4, -3, -2, -1]);
    }

    #[test]
    fn indexing_roundtrip() {
        let g = PeriodicGrid::new(8).unwrap();
        let flat = g.index(2, 5, 7);
        assert_eq!(g.point(flat), [g.coord(2), g.coord(5), g.coord(7)]);
    }
}
