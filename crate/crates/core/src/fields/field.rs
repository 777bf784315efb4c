//! Scalar, vector and tensor fields with paired physical/spectral
//! representations.
//!
//! Fields are immutable snapshots once constructed; the spectral
//! representation is computed on first use and cached, so any number of
//! concurrent readers is safe.

use super::fft::Spectral3d;
use super::grid::PeriodicGrid;
use crate::error::{CoreError, Result};
use num_complex::Complex64;
use std::collections::HashMap;
use std::sync::{Arc, Mutex, OnceLock};

/// Shared FFT plans, one per grid size.
pub fn engine_for(grid: PeriodicGrid) -> Arc<Spectral3d> {
    static REGISTRY: OnceLock<Mutex<HashMap<usize, Arc<Spectral3d>>>> = OnceLock::new();
    let registry = REGISTRY.get_or_init(|| Mutex::new(HashMap::new()));
    let mut map = registry.lock().unwrap();
    map.entry(grid.n())
        .or_insert_with(|| Arc::new(Spectral3d::new(grid)))
        .clone()
}

/// A single sparse spectral mode: signed wavenumbers plus the normalized
/// coefficient (already divided by n³).
#[derive(Debug, Clone, Copy)]
pub struct SparseMode {
    pub k: [i64; 3],
    pub coeff: Complex64,
}

/// Real scalar field on the periodic grid.
#[derive(Debug)]
pub struct ScalarField {
    grid: PeriodicGrid,
    values: Vec<f64>,
    spectral: OnceLock<Vec<Complex64>>,
    sparse: OnceLock<Vec<SparseMode>>,
}

impl Clone for ScalarField {
    fn clone(&self) -> Self {
        let spectral = OnceLock::new();
        if let Some(s) = self.spectral.get() {
            let _ = spectral.set(s.clone());
        }
        Self {
            grid: self.grid,
            values: self.values.clone(),
            spectral,
            sparse: OnceLock::new(),
        }
    }
}

impl ScalarField {
    pub fn from_values(grid: PeriodicGrid, values: Vec<f64>) -> Result<Self> {
        if values.len() != grid.len() {
            return Err(CoreError::InvalidInput(format!(
                "expected {} values for grid n={}, got {}",
                grid.len(),
                grid.n(),
                values.len()
            )));
        }
        Ok(Self {
            grid,
            values,
            spectral: OnceLock::new(),
            sparse: OnceLock::new(),
        })
    }

    pub fn from_fn(grid: PeriodicGrid, f: impl Fn([f64; 3]) -> f64) -> Self {
        let values = (0..grid.len()).map(|flat| f(grid.point(flat))).collect();
        Self {
            grid,
            values,
            spectral: OnceLock::new(),
            sparse: OnceLock::new(),
        }
    }

    pub fn zeros(grid: PeriodicGrid) -> Self {
        Self::constant(grid, 0.0)
    }

    pub fn constant(grid: PeriodicGrid, c: f64) -> Self {
        Self {
            grid,
            values: vec![c; grid.len()],
            spectral: OnceLock::new(),
            sparse: OnceLock::new(),
        }
    }

    /// Build from spectral coefficients (unnormalized forward-FFT
    /// convention). The physical representation is materialized immediately
    /// and the coefficients are kept as the cached spectral form.
    pub fn from_spectral(grid: PeriodicGrid, coeffs: Vec<Complex64>) -> Result<Self> {
        if coeffs.len() != grid.len() {
            return Err(CoreError::InvalidInput(format!(
                "expected {} coefficients, got {}",
                grid.len(),
                coeffs.len()
            )));
        }
        let engine = engine_for(grid);
        let values = engine.inverse_to_real(coeffs.clone());
        let spectral = OnceLock::new();
        let _ = spectral.set(coeffs);
        Ok(Self {
            grid,
            values,
            spectral,
            sparse: OnceLock::new(),
        })
    }

    #[inline]
    pub fn grid(&self) -> PeriodicGrid {
        self.grid
    }

    #[inline]
    pub fn values(&self) -> &[f64] {
        &self.values
    }

    /// Cached spectral coefficients (unnormalized forward FFT).
    pub fn spectral(&self) -> &[Complex64] {
        self.spectral
            .get_or_init(|| engine_for(self.grid).forward_real(&self.values))
    }

    /// Modes whose relative magnitude exceeds 1e-14, with normalized
    /// coefficients. Used by the exact point-evaluation mode; dropping the
    /// rounding-level modes changes nothing above 1e-12 relative.
    pub fn sparse_modes(&self) -> &[SparseMode] {
        self.sparse.get_or_init(|| {
            let coeffs = self.spectral();
            let n = self.grid.n();
            let norm = 1.0 / self.grid.len() as f64;
            let max = coeffs.iter().map(|c| c.norm()).fold(0.0, f64::max);
            let cutoff = max * 1e-14;
            let mut modes = Vec::new();
            for i in 0..n {
                for j in 0..n {
                    for k in 0..n {
                        let c = coeffs[self.grid.index(i, j, k)];
                        if c.norm() > cutoff {
                            modes.push(SparseMode {
                                k: [
                                    self.grid.wavenumber(i),
                                    self.grid.wavenumber(j),
                                    self.grid.wavenumber(k),
                                ],
                                coeff: c * norm,
                            });
                        }
                    }
                }
            }
            modes
        })
    }

    pub fn is_finite(&self) -> bool {
        self.values.iter().all(|v| v.is_finite())
    }

    pub fn ensure_finite(&self, context: &str) -> Result<()> {
        if self.is_finite() {
            Ok(())
        } else {
            Err(CoreError::NonFinite {
                context: context.to_string(),
            })
        }
    }

    pub fn max_abs(&self) -> f64 {
        self.values.iter().map(|v| v.abs()).fold(0.0, f64::max)
    }

    /// Mean value over the torus.
    pub fn mean(&self) -> f64 {
        self.values.iter().sum::<f64>() / self.values.len() as f64
    }

    /// Grid quadrature of the field: Σ f · cell_volume.
    pub fn integral(&self) -> f64 {
        self.values.iter().sum::<f64>() * self.grid.cell_volume()
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> ScalarField {
        ScalarField {
            grid: self.grid,
            values: self.values.iter().map(|&v| f(v)).collect(),
            spectral: OnceLock::new(),
            sparse: OnceLock::new(),
        }
    }

    pub fn zip_map(&self, other: &ScalarField, f: impl Fn(f64, f64) -> f64) -> Result<ScalarField> {
        if self.grid != other.grid {
            return Err(CoreError::InvalidInput("grid mismatch".into()));
        }
        Ok(ScalarField {
            grid: self.grid,
            values: self
                .values
                .iter()
                .zip(&other.values)
                .map(|(&a, &b)| f(a, b))
                .collect(),
            spectral: OnceLock::new(),
            sparse: OnceLock::new(),
        })
    }
}

/// Three-component vector field. The `solenoidal` flag marks fields that
/// were produced by a divergence-free construction (Leray projection,
/// solver steps); it is advisory and checked explicitly in tests.
#[derive(Debug, Clone)]
pub struct VectorField {
    components: [ScalarField; 3],
    solenoidal: bool,
}

impl VectorField {
    pub fn new(components: [ScalarField; 3]) -> Result<Self> {
        let grid = components[0].grid();
        if components.iter().any(|c| c.grid() != grid) {
            return Err(CoreError::InvalidInput(
                "vector components on different grids".into(),
            ));
        }
        Ok(Self {
            components,
            solenoidal: false,
        })
    }

    pub fn from_fn(grid: PeriodicGrid, f: impl Fn([f64; 3]) -> [f64; 3]) -> Self {
        let mut vals: [Vec<f64>; 3] = [
            Vec::with_capacity(grid.len()),
            Vec::with_capacity(grid.len()),
            Vec::with_capacity(grid.len()),
        ];
        for flat in 0..grid.len() {
            let v = f(grid.point(flat));
            for d in 0..3 {
                vals[d].push(v[d]);
            }
        }
        let [a, b, c] = vals;
        Self {
            components: [
                ScalarField::from_values(grid, a).expect("sized by construction"),
                ScalarField::from_values(grid, b).expect("sized by construction"),
                ScalarField::from_values(grid, c).expect("sized by construction"),
            ],
            solenoidal: false,
        }
    }

    pub fn zeros(grid: PeriodicGrid) -> Self {
        let mut v = Self {
            components: [
                ScalarField::zeros(grid),
                ScalarField::zeros(grid),
                ScalarField::zeros(grid),
            ],
            solenoidal: true,
        };
        v.solenoidal = true;
        v
    }

    #[inline]
    pub fn grid(&self) -> PeriodicGrid {
        self.components[0].grid()
    }

    #[inline]
    pub fn component(&self, i: usize) -> &ScalarField {
        &self.components[i]
    }

    #[inline]
    pub fn components(&self) -> &[ScalarField; 3] {
        &self.components
    }

    pub fn into_components(self) -> [ScalarField; 3] {
        self.components
    }

    pub fn is_finite(&self) -> bool {
        self.components.iter().all(|c| c.is_finite())
    }

    pub fn ensure_finite(&self, context: &str) -> Result<()> {
        if self.is_finite() {
            Ok(())
        } else {
            Err(CoreError::NonFinite {
                context: context.to_string(),
            })
        }
    }

    /// Pointwise Euclidean magnitude.
    pub fn magnitude(&self) -> ScalarField {
        let grid = self.grid();
        let values = (0..grid.len())
            .map(|i| {
                let a = self.components[0].values()[i];
                let b = self.components[1].values()[i];
                let c = self.components[2].values()[i];
                (a * a + b * b + c * c).sqrt()
            })
            .collect();
        ScalarField::from_values(grid, values).expect("sized by construction")
    }

    pub fn max_abs(&self) -> f64 {
        self.magnitude().max_abs()
    }

    #[inline]
    pub fn is_marked_solenoidal(&self) -> bool {
        self.solenoidal
    }

    pub(crate) fn mark_solenoidal(mut self) -> Self {
        self.solenoidal = true;
        self
    }

    pub fn scale(&self, c: f64) -> VectorField {
        VectorField {
            components: [
                self.components[0].map(|v| c * v),
                self.components[1].map(|v| c * v),
                self.components[2].map(|v| c * v),
            ],
            solenoidal: self.solenoidal,
        }
    }

    pub fn add(&self, other: &VectorField) -> Result<VectorField> {
        Ok(VectorField {
            components: [
                self.components[0].zip_map(&other.components[0], |a, b| a + b)?,
                self.components[1].zip_map(&other.components[1], |a, b| a + b)?,
                self.components[2].zip_map(&other.components[2], |a, b| a + b)?,
            ],
            solenoidal: self.solenoidal && other.solenoidal,
        })
    }
}

/// 3×3 tensor field; entry (i, j) is the j-th derivative of the i-th
/// component when produced by `grad_tensor`.
#[derive(Debug, Clone)]
pub struct TensorField {
    components: [[ScalarField; 3]; 3],
}

impl TensorField {
    pub fn new(components: [[ScalarField; 3]; 3]) -> Self {
        Self { components }
    }

    #[inline]
    pub fn grid(&self) -> PeriodicGrid {
        self.components[0][0].grid()
    }

    #[inline]
    pub fn component(&self, i: usize, j: usize) -> &ScalarField {
        &self.components[i][j]
    }

    /// Pointwise Frobenius norm of the 3×3 matrix.
    pub fn frobenius(&self) -> ScalarField {
        let grid = self.grid();
        let values = (0..grid.len())
            .map(|p| {
                let mut s = 0.0;
                for i in 0..3 {
                    for j in 0..3 {
                        let v = self.components[i][j].values()[p];
                        s += v * v;
                    }
                }
                s.sqrt()
            })
            .collect();
        ScalarField::from_values(grid, values).expect("sized by construction")
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn spectral_roundtrip_on_random_field() {
        let grid = PeriodicGrid::new(16).unwrap();
        let f = ScalarField::from_fn(grid, |[x, y, z]| {
            (x.sin() + (2.0 * y).cos()) * (0.5 + 0.1 * z.sin())
        });
        let engine = engine_for(grid);
        let back = engine.inverse_to_real(f.spectral().to_vec());
        let scale = f.max_abs();
        for (a, b) in f.values().iter().zip(&back) {
            assert!((a - b).abs() <= 1e-12 * scale);
        }
    }

    #[test]
    fn sparse_modes_of_single_mode_field() {
        let grid = PeriodicGrid::new(8).unwrap();
        let f = ScalarField::from_fn(grid, |[x, _, _]| x.sin());
        let modes = f.sparse_modes();
        assert_eq!(modes.len(), 2);
        for m in modes {
            assert_eq!(m.k[1], 0);
            assert_eq!(m.k[2], 0);
            assert_eq!(m.k[0].abs(), 1);
            assert!((m.coeff.norm() - 0.5).abs() < 1e-12);
        }
    }

    #[test]
    fn magnitude_is_pointwise_euclidean() {
        let grid = PeriodicGrid::new(8).unwrap();
        let v = VectorField::from_fn(grid, |_| [3.0, 4.0, 0.0]);
        let m = v.magnitude();
        assert!(m.values().iter().all(|&x| (x - 5.0).abs() < 1e-15));
    }
}
