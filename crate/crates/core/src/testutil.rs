//! Seeded random smooth fields for tests and the random-solenoidal
//! scenario.

use crate::fields::{leray_project, remove_mean, PeriodicGrid, ScalarField, VectorField};
use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Random band-limited scalar field: white noise filtered to modes with
/// |k_i| <= kmax and smoothed by a Gaussian spectral decay. Deterministic
/// in the seed.
pub fn random_scalar(grid: PeriodicGrid, seed: u64, kmax: i64, amplitude: f64) -> ScalarField {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let noise: Vec<f64> = (0..grid.len()).map(|_| rng.gen_range(-1.0..1.0)).collect();
    let field = ScalarField::from_values(grid, noise).expect("sized by construction");
    let n = grid.n();
    let mut coeffs = field.spectral().to_vec();
    for i in 0..n {
        for j in 0..n {
            for k in 0..n {
                let ks = [grid.wavenumber(i), grid.wavenumber(j), grid.wavenumber(k)];
                let idx = grid.index(i, j, k);
                if ks.iter().any(|&q| q.abs() > kmax) {
                    coeffs[idx] = Complex64::default();
                } else {
                    let k2 = ks.iter().map(|&q| (q * q) as f64).sum::<f64>();
                    coeffs[idx] *= (-k2 / (kmax as f64)).exp();
                }
            }
        }
    }
    let raw = ScalarField::from_spectral(grid, coeffs).expect("sized by construction");
    let peak = raw.max_abs();
    if peak == 0.0 {
        raw
    } else {
        raw.map(|v| v * amplitude / peak)
    }
}

pub fn random_vector(grid: PeriodicGrid, seed: u64, kmax: i64, amplitude: f64) -> VectorField {
    VectorField::new([
        random_scalar(grid, seed.wrapping_mul(3).wrapping_add(1), kmax, amplitude),
        random_scalar(grid, seed.wrapping_mul(3).wrapping_add(2), kmax, amplitude),
        random_scalar(grid, seed.wrapping_mul(3).wrapping_add(3), kmax, amplitude),
    ])
    .expect("same grid")
}

/// Mean-free solenoidal random field: Leray projection of band-limited
/// noise.
pub fn random_solenoidal(grid: PeriodicGrid, seed: u64, kmax: i64, amplitude: f64) -> VectorField {
    let v = random_vector(grid, seed, kmax, amplitude);
    let p = leray_project(&v).expect("finite by construction");
    remove_mean(&p)
}
