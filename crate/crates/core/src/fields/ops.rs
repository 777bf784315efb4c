//! Spectral differential operators, Leray projection and the heat
//! semigroup.
//!
//! All derivatives are exact multiplications by ik in spectral space. The
//! Nyquist mode is zeroed during differentiation to keep derivatives of
//! real fields real.

use super::field::{engine_for, ScalarField, VectorField, TensorField};
use super::grid::PeriodicGrid;
use crate::error::{CoreError, Result};
use num_complex::Complex64;

/// Signed wavenumbers along one axis, with the Nyquist entry replaced by 0.
fn deriv_wavenumbers(grid: PeriodicGrid) -> Vec<f64> {
    let n = grid.n();
    (0..n)
        .map(|m| {
            if m == n / 2 {
                0.0
            } else {
                grid.wavenumber(m) as f64
            }
        })
        .collect()
}

/// Multiply spectral coefficients by i·k_axis in place.
pub(crate) fn apply_ik(grid: PeriodicGrid, coeffs: &mut [Complex64], axis: usize) {
    let n = grid.n();
    let ks = deriv_wavenumbers(grid);
    for i in 0..n {
        for j in 0..n {
            for k in 0..n {
                let kv = match axis {
                    0 => ks[i],
                    1 => ks[j],
                    _ => ks[k],
                };
                let idx = grid.index(i, j, k);
                coeffs[idx] *= Complex64::new(0.0, kv);
            }
        }
    }
}

fn derivative(f: &ScalarField, axis: usize) -> ScalarField {
    let grid = f.grid();
    let mut coeffs = f.spectral().to_vec();
    apply_ik(grid, &mut coeffs, axis);
    ScalarField::from_spectral(grid, coeffs).expect("sized by construction")
}

/// Spectral gradient of a scalar field.
pub fn gradient(f: &ScalarField) -> Result<VectorField> {
    f.ensure_finite("gradient input")?;
    VectorField::new([derivative(f, 0), derivative(f, 1), derivative(f, 2)])
}

/// Spectral divergence Σ_j ∂v_j/∂x_j.
pub fn divergence(v: &VectorField) -> Result<ScalarField> {
    v.ensure_finite("divergence input")?;
    let grid = v.grid();
    let mut total = vec![Complex64::default(); grid.len()];
    for axis in 0..3 {
        let mut coeffs = v.component(axis).spectral().to_vec();
        apply_ik(grid, &mut coeffs, axis);
        for (t, c) in total.iter_mut().zip(coeffs) {
            *t += c;
        }
    }
    ScalarField::from_spectral(grid, total)
}

/// Spectral curl, component i = ε_ijk ∂_j v_k.
pub fn curl(v: &VectorField) -> Result<VectorField> {
    v.ensure_finite("curl input")?;
    let c = |i: usize, j: usize| {
        let mut coeffs = v.component(i).spectral().to_vec();
        apply_ik(v.grid(), &mut coeffs, j);
        coeffs
    };
    // (∂2 v3 - ∂3 v2, ∂3 v1 - ∂1 v3, ∂1 v2 - ∂2 v1)
    let combine = |a: Vec<Complex64>, b: Vec<Complex64>| {
        let coeffs: Vec<Complex64> = a.into_iter().zip(b).map(|(x, y)| x - y).collect();
        ScalarField::from_spectral(v.grid(), coeffs).expect("sized by construction")
    };
    VectorField::new([
        combine(c(2, 1), c(1, 2)),
        combine(c(0, 2), c(2, 0)),
        combine(c(1, 0), c(0, 1)),
    ])
}

/// Full velocity-gradient tensor; entry (i, j) = ∂v_i/∂x_j.
pub fn grad_tensor(v: &VectorField) -> Result<TensorField> {
    v.ensure_finite("grad_tensor input")?;
    let row = |i: usize| {
        [
            derivative(v.component(i), 0),
            derivative(v.component(i), 1),
            derivative(v.component(i), 2),
        ]
    };
    Ok(TensorField::new([row(0), row(1), row(2)]))
}

/// Leray projection onto divergence-free fields:
/// v̂(k) − k (k·v̂(k)) / |k|² for k ≠ 0; the k = 0 mode passes through.
pub fn leray_project(v: &VectorField) -> Result<VectorField> {
    v.ensure_finite("leray input")?;
    let grid = v.grid();
    let n = grid.n();
    let mut comps: [Vec<Complex64>; 3] = [
        v.component(0).spectral().to_vec(),
        v.component(1).spectral().to_vec(),
        v.component(2).spectral().to_vec(),
    ];
    for i in 0..n {
        let ki = grid.wavenumber(i) as f64;
        for j in 0..n {
            let kj = grid.wavenumber(j) as f64;
            for k in 0..n {
                let kk = grid.wavenumber(k) as f64;
                let k2 = ki * ki + kj * kj + kk * kk;
                if k2 == 0.0 {
                    continue;
                }
                let idx = grid.index(i, j, k);
                let dot = ki * comps[0][idx] + kj * comps[1][idx] + kk * comps[2][idx];
                let factor = dot / k2;
                comps[0][idx] -= ki * factor;
                comps[1][idx] -= kj * factor;
                comps[2][idx] -= kk * factor;
            }
        }
    }
    let [a, b, c] = comps;
    let out = VectorField::new([
        ScalarField::from_spectral(grid, a)?,
        ScalarField::from_spectral(grid, b)?,
        ScalarField::from_spectral(grid, c)?,
    ])?;
    Ok(out.mark_solenoidal())
}

fn heat_coeffs(grid: PeriodicGrid, coeffs: &mut [Complex64], t: f64) {
    let n = grid.n();
    for i in 0..n {
        let ki = grid.wavenumber(i) as f64;
        for j in 0..n {
            let kj = grid.wavenumber(j) as f64;
            for k in 0..n {
                let kk = grid.wavenumber(k) as f64;
                let k2 = ki * ki + kj * kj + kk * kk;
                coeffs[grid.index(i, j, k)] *= (-k2 * t).exp();
            }
        }
    }
}

/// Heat semigroup e^{tΔ} applied to a scalar field.
pub fn heat_semigroup_scalar(f: &ScalarField, t: f64) -> Result<ScalarField> {
    if t < 0.0 {
        return Err(CoreError::InvalidInput(format!(
            "heat semigroup requires t >= 0, got {t}"
        )));
    }
    f.ensure_finite("heat input")?;
    let mut coeffs = f.spectral().to_vec();
    heat_coeffs(f.grid(), &mut coeffs, t);
    ScalarField::from_spectral(f.grid(), coeffs)
}

/// Heat semigroup e^{tΔ} applied componentwise to a vector field.
pub fn heat_semigroup(v: &VectorField, t: f64) -> Result<VectorField> {
    if t < 0.0 {
        return Err(CoreError::InvalidInput(format!(
            "heat semigroup requires t >= 0, got {t}"
        )));
    }
    v.ensure_finite("heat input")?;
    let solenoidal = v.is_marked_solenoidal();
    let out = VectorField::new([
        heat_semigroup_scalar(v.component(0), t)?,
        heat_semigroup_scalar(v.component(1), t)?,
        heat_semigroup_scalar(v.component(2), t)?,
    ])?;
    Ok(if solenoidal {
        out.mark_solenoidal()
    } else {
        out
    })
}

/// Remove the k = 0 mode from every component.
pub fn remove_mean(v: &VectorField) -> VectorField {
    let solenoidal = v.is_marked_solenoidal();
    let centered = |i: usize| {
        let mean = v.component(i).mean();
        v.component(i).map(move |x| x - mean)
    };
    let out = VectorField::new([centered(0), centered(1), centered(2)]).expect("same grid");
    if solenoidal {
        out.mark_solenoidal()
    } else {
        out
    }
}

/// Spectral n-th derivative magnitude: the pointwise Frobenius aggregation
/// over all ordered n-th partials of all components,
/// |∇ⁿu|(x)² = Σ_i Σ_{|α|=n} multiplicity(α) (∂^α u_i)²(x).
pub fn deriv_n_magnitude(v: &VectorField, order: usize) -> Result<ScalarField> {
    if order > 4 {
        return Err(CoreError::InvalidInput(format!(
            "derivative order must be <= 4, got {order}"
        )));
    }
    let grid = v.grid();
    if order == 0 {
        return Ok(v.magnitude());
    }
    // distinct multisets (a, b, c) with a+b+c = order, and the number of
    // ordered tuples mapping to each
    let mut sum_sq = vec![0.0; grid.len()];
    for a in 0..=order {
        for b in 0..=(order - a) {
            let c = order - a - b;
            let mult = multinomial(order, a, b, c);
            for comp in 0..3 {
                let mut coeffs = v.component(comp).spectral().to_vec();
                for _ in 0..a {
                    apply_ik(grid, &mut coeffs, 0);
                }
                for _ in 0..b {
                    apply_ik(grid, &mut coeffs, 1);
                }
                for _ in 0..c {
                    apply_ik(grid, &mut coeffs, 2);
                }
                let phys = engine_for(grid).inverse_to_real(coeffs);
                for (s, p) in sum_sq.iter_mut().zip(phys) {
                    *s += mult * p * p;
                }
            }
        }
    }
    ScalarField::from_values(grid, sum_sq.into_iter().map(f64::sqrt).collect())
}

fn multinomial(n: usize, a: usize, b: usize, c: usize) -> f64 {
    fn fact(k: usize) -> f64 {
        (1..=k).map(|x| x as f64).product()
    }
    fact(n) / (fact(a) * fact(b) * fact(c))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn grid() -> PeriodicGrid {
        PeriodicGrid::new(16).unwrap()
    }

    #[test]
    fn gradient_of_single_mode() {
        let f = ScalarField::from_fn(grid(), |[x, _, _]| x.sin());
        let g = gradient(&f).unwrap();
        for flat in 0..grid().len() {
            let [x, _, _] = grid().point(flat);
            assert!((g.component(0).values()[flat] - x.cos()).abs() < 1e-12);
            assert!(g.component(1).values()[flat].abs() < 1e-12);
            assert!(g.component(2).values()[flat].abs() < 1e-12);
        }
    }

    #[test]
    fn gradient_of_constant_is_zero() {
        let f = ScalarField::constant(grid(), 3.25);
        let g = gradient(&f).unwrap();
        for d in 0..3 {
            assert!(g.component(d).max_abs() < 1e-12);
        }
    }

    #[test]
    fn gradient_is_linear_over_modes() {
        let f = ScalarField::from_fn(grid(), |[x, y, _]| x.sin() + y.cos());
        let g = gradient(&f).unwrap();
        for flat in 0..grid().len() {
            let [x, y, _] = grid().point(flat);
            assert!((g.component(0).values()[flat] - x.cos()).abs() < 1e-12);
            assert!((g.component(1).values()[flat] + y.sin()).abs() < 1e-12);
            assert!(g.component(2).values()[flat].abs() < 1e-12);
        }
    }

    #[test]
    fn gradient_rejects_non_finite() {
        let mut vals = vec![0.0; grid().len()];
        vals[3] = f64::NAN;
        let f = ScalarField::from_values(grid(), vals).unwrap();
        assert!(gradient(&f).is_err());
    }

    #[test]
    fn curl_of_shear_mode() {
        // curl(sin(x2) e1) = -cos(x2) e3
        let v = VectorField::from_fn(grid(), |[_, y, _]| [y.sin(), 0.0, 0.0]);
        let w = curl(&v).unwrap();
        for flat in 0..grid().len() {
            let [_, y, _] = grid().point(flat);
            assert!(w.component(0).values()[flat].abs() < 1e-12);
            assert!(w.component(1).values()[flat].abs() < 1e-12);
            assert!((w.component(2).values()[flat] + y.cos()).abs() < 1e-12);
        }
    }

    #[test]
    fn curl_of_gradient_vanishes() {
        let f = ScalarField::from_fn(grid(), |[x, y, z]| (x + 2.0 * y).sin() * z.cos());
        let g = gradient(&f).unwrap();
        let w = curl(&g).unwrap();
        let scale = g.max_abs();
        assert!(w.max_abs() <= 1e-12 * scale);
    }

    #[test]
    fn divergence_of_curl_vanishes() {
        let v = VectorField::from_fn(grid(), |[x, y, z]| {
            [y.sin() * z.cos(), (2.0 * x).cos(), (x + y).sin()]
        });
        let d = divergence(&curl(&v).unwrap()).unwrap();
        assert!(d.max_abs() <= 1e-12 * v.max_abs().max(1.0));
    }

    #[test]
    fn leray_kills_gradients() {
        let f = ScalarField::from_fn(grid(), |[x, _, _]| x.sin());
        let g = gradient(&f).unwrap();
        let p = leray_project(&g).unwrap();
        assert!(p.max_abs() <= 1e-12);
        assert!(p.is_marked_solenoidal());
    }

    #[test]
    fn leray_fixes_solenoidal_fields() {
        let v = VectorField::from_fn(grid(), |[_, y, _]| [y.sin(), 0.0, 0.0]);
        let p = leray_project(&v).unwrap();
        for flat in 0..grid().len() {
            let diff = (p.component(0).values()[flat] - v.component(0).values()[flat]).abs();
            assert!(diff <= 1e-12);
        }
    }

    #[test]
    fn leray_splits_mixed_field() {
        // cos(x1) e1 is a gradient mode, sin(x2) e1 is solenoidal
        let v = VectorField::from_fn(grid(), |[x, y, _]| [x.cos() + y.sin(), 0.0, 0.0]);
        let p = leray_project(&v).unwrap();
        for flat in 0..grid().len() {
            let [_, y, _] = grid().point(flat);
            assert!((p.component(0).values()[flat] - y.sin()).abs() < 1e-12);
            assert!(p.component(1).values()[flat].abs() < 1e-12);
            assert!(p.component(2).values()[flat].abs() < 1e-12);
        }
    }

    #[test]
    fn heat_decays_single_mode() {
        let v = VectorField::from_fn(grid(), |[_, y, _]| [y.sin(), 0.0, 0.0]);
        let h = heat_semigroup(&v, 1.0).unwrap();
        let expected = (-1.0f64).exp();
        for flat in 0..grid().len() {
            let [_, y, _] = grid().point(flat);
            assert!((h.component(0).values()[flat] - expected * y.sin()).abs() < 1e-12);
        }
    }

    #[test]
    fn heat_at_zero_is_identity() {
        let v = VectorField::from_fn(grid(), |[x, y, z]| [x.sin(), y.cos(), (x + z).sin()]);
        let h = heat_semigroup(&v, 0.0).unwrap();
        for d in 0..3 {
            for (a, b) in h.component(d).values().iter().zip(v.component(d).values()) {
                assert!((a - b).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn heat_preserves_constants() {
        let v = VectorField::from_fn(grid(), |_| [2.5, -1.0, 0.25]);
        let h = heat_semigroup(&v, 5.0).unwrap();
        for (d, c) in [2.5, -1.0, 0.25].into_iter().enumerate() {
            for val in h.component(d).values() {
                assert!((val - c).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn heat_rejects_negative_time() {
        let v = VectorField::zeros(grid());
        assert!(heat_semigroup(&v, -0.1).is_err());
    }

    #[test]
    fn grad_tensor_matches_component_derivatives() {
        let v = VectorField::from_fn(grid(), |[x, y, z]| [x.sin() * y.cos(), z.sin(), 0.0]);
        let t = grad_tensor(&v).unwrap();
        // entry (0,1) = ∂u1/∂x2 = -sin(x1) sin(x2)
        for flat in 0..grid().len() {
            let [x, y, _] = grid().point(flat);
            assert!((t.component(0, 1).values()[flat] + x.sin() * y.sin()).abs() < 1e-10);
        }
    }

    #[test]
    fn deriv_magnitude_order_one_matches_frobenius() {
        let v = VectorField::from_fn(grid(), |[x, y, _]| [y.sin(), x.cos(), 0.0]);
        let m = deriv_n_magnitude(&v, 1).unwrap();
        let frob = grad_tensor(&v).unwrap().frobenius();
        for (a, b) in m.values().iter().zip(frob.values()) {
            assert!((a - b).abs() < 1e-10);
        }
        assert!(deriv_n_magnitude(&v, 5).is_err());
    }
}
