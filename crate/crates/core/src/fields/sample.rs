//! Point evaluation of fields at off-grid positions.
//!
//! The default mode is trilinear interpolation from the 8 surrounding grid
//! points with periodic wrap. A spectral mode evaluates the trigonometric
//! interpolant exactly; it is slow for dense spectra and exists for oracle
//! testing.

use super::field::{ScalarField, TensorField, VectorField};
use super::grid::{PeriodicGrid, TWO_PI};
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum InterpMode {
    Trilinear,
    Spectral,
}

/// Wrap a coordinate into the fundamental domain [0, 2π).
#[inline]
pub fn wrap(x: f64) -> f64 {
    let r = x.rem_euclid(TWO_PI);
    // rem_euclid can return 2π when x is a tiny negative number
    if r >= TWO_PI {
        r - TWO_PI
    } else {
        r
    }
}

#[inline]
pub fn wrap_point(x: [f64; 3]) -> [f64; 3] {
    [wrap(x[0]), wrap(x[1]), wrap(x[2])]
}

/// Precomputed corner indices and fractional offsets for trilinear
/// interpolation, shared across all field components sampled at the same
/// point. Application nests lerps a + t (b - a), so constant fields and
/// grid nodes reproduce exactly.
#[derive(Debug, Clone, Copy)]
pub struct TrilinearStencil {
    pub idx: [usize; 8],
    pub frac: [f64; 3],
}

#[inline]
fn lerp(a: f64, b: f64, t: f64) -> f64 {
    a + t * (b - a)
}

impl TrilinearStencil {
    pub fn new(grid: PeriodicGrid, x: [f64; 3]) -> Self {
        let n = grid.n();
        let inv_h = n as f64 / TWO_PI;
        let mut base = [0usize; 3];
        let mut frac = [0.0f64; 3];
        for d in 0..3 {
            let s = wrap(x[d]) * inv_h;
            let i = s.floor() as usize;
            // wrap(x) < 2π can still floor to n due to rounding
            let i = if i >= n { n - 1 } else { i };
            base[d] = i;
            frac[d] = (s - i as f64).clamp(0.0, 1.0);
        }
        let next = |i: usize| if i + 1 == n { 0 } else { i + 1 };
        let (i0, j0, k0) = (base[0], base[1], base[2]);
        let (i1, j1, k1) = (next(i0), next(j0), next(k0));
        Self {
            idx: [
                grid.index(i0, j0, k0),
                grid.index(i0, j0, k1),
                grid.index(i0, j1, k0),
                grid.index(i0, j1, k1),
                grid.index(i1, j0, k0),
                grid.index(i1, j0, k1),
                grid.index(i1, j1, k0),
                grid.index(i1, j1, k1),
            ],
            frac,
        }
    }

    #[inline]
    pub fn apply(&self, values: &[f64]) -> f64 {
        let [fx, fy, fz] = self.frac;
        let c00 = lerp(values[self.idx[0]], values[self.idx[1]], fz);
        let c01 = lerp(values[self.idx[2]], values[self.idx[3]], fz);
        let c10 = lerp(values[self.idx[4]], values[self.idx[5]], fz);
        let c11 = lerp(values[self.idx[6]], values[self.idx[7]], fz);
        let c0 = lerp(c00, c01, fy);
        let c1 = lerp(c10, c11, fy);
        lerp(c0, c1, fx)
    }
}

/// Exact evaluation of the trigonometric interpolant at a point.
fn spectral_eval(f: &ScalarField, x: [f64; 3]) -> f64 {
    let mut acc = 0.0;
    for mode in f.sparse_modes() {
        let phase = mode.k[0] as f64 * x[0] + mode.k[1] as f64 * x[1] + mode.k[2] as f64 * x[2];
        // real part of coeff * e^{i phase}
        acc += mode.coeff.re * phase.cos() - mode.coeff.im * phase.sin();
    }
    acc
}

pub fn sample_scalar(f: &ScalarField, x: [f64; 3], mode: InterpMode) -> f64 {
    match mode {
        InterpMode::Trilinear => TrilinearStencil::new(f.grid(), x).apply(f.values()),
        InterpMode::Spectral => spectral_eval(f, wrap_point(x)),
    }
}

pub fn sample_vector(v: &VectorField, x: [f64; 3], mode: InterpMode) -> [f64; 3] {
    match mode {
        InterpMode::Trilinear => {
            let st = TrilinearStencil::new(v.grid(), x);
            [
                st.apply(v.component(0).values()),
                st.apply(v.component(1).values()),
                st.apply(v.component(2).values()),
            ]
        }
        InterpMode::Spectral => {
            let xw = wrap_point(x);
            [
                spectral_eval(v.component(0), xw),
                spectral_eval(v.component(1), xw),
                spectral_eval(v.component(2), xw),
            ]
        }
    }
}

pub fn sample_tensor(t: &TensorField, x: [f64; 3], mode: InterpMode) -> [[f64; 3]; 3] {
    let mut out = [[0.0; 3]; 3];
    match mode {
        InterpMode::Trilinear => {
            let st = TrilinearStencil::new(t.grid(), x);
            for i in 0..3 {
                for j in 0..3 {
                    out[i][j] = st.apply(t.component(i, j).values());
                }
            }
        }
        InterpMode::Spectral => {
            let xw = wrap_point(x);
            for i in 0..3 {
                for j in 0..3 {
                    out[i][j] = spectral_eval(t.component(i, j), xw);
                }
            }
        }
    }
    out
}
