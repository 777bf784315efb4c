//! Functionals of a single field: L_p norms, the Φ_q-Orlicz norm, the
//! non-increasing rearrangement, and the explicit Orlicz upper bound
//! built from the rearrangement argument.
//!
//! All space integrals are midpoint-rule grid quadrature, i.e. sums of
//! value · cell_volume, which is spectrally accurate for smooth periodic
//! integrands.

use crate::error::{CoreError, Result};
use crate::fields::{ScalarField, VectorField};

pub const E_MINUS_ONE: f64 = std::f64::consts::E - 1.0;

/// Parameters of the Φ_q-Orlicz norm computation.
#[derive(Debug, Clone, Copy)]
pub struct OrliczSpec {
    pub q: f64,
    /// Relative bracket width at which the bisection stops.
    pub tol: f64,
    /// Geometric factor used when the initial bracket must be widened.
    pub bracket_expansion: f64,
}

impl OrliczSpec {
    pub fn new(q: f64) -> Result<Self> {
        if !(q > 1.0 && q.is_finite()) {
            return Err(CoreError::InvalidInput(format!(
                "Orlicz exponent must satisfy 1 < q < inf, got {q}"
            )));
        }
        Ok(Self {
            q,
            tol: 1e-10,
            bracket_expansion: 2.0,
        })
    }
}

/// Young function Φ_q(λ) = ((e^λ − 1)/(e − 1))^q, computed in log space
/// so that large arguments saturate to +inf instead of producing NaN.
pub fn phi_q(lambda: f64, q: f64) -> Result<f64> {
    if lambda < 0.0 || !lambda.is_finite() {
        return Err(CoreError::InvalidInput(format!(
            "phi_q requires finite lambda >= 0, got {lambda}"
        )));
    }
    if lambda == 0.0 {
        return Ok(0.0);
    }
    // ln(e^λ − 1), stable for both small and large λ
    let ln_em1 = if lambda > 30.0 {
        lambda + (-(-lambda).exp()).ln_1p()
    } else {
        lambda.exp_m1().ln()
    };
    Ok((q * (ln_em1 - E_MINUS_ONE.ln())).exp())
}

/// Inverse Young function Φ_q^{-1}(y) = log(1 + (e − 1) y^{1/q}).
pub fn phi_q_inv(y: f64, q: f64) -> Result<f64> {
    if y < 0.0 || !y.is_finite() {
        return Err(CoreError::InvalidInput(format!(
            "phi_q_inv requires finite y >= 0, got {y}"
        )));
    }
    Ok((E_MINUS_ONE * y.powf(1.0 / q)).ln_1p())
}

/// L_p norm of a scalar field; p = inf returns the max modulus.
pub fn lp_norm(f: &ScalarField, p: f64) -> Result<f64> {
    if p < 1.0 || p.is_nan() {
        return Err(CoreError::InvalidInput(format!(
            "L_p norm requires p >= 1, got {p}"
        )));
    }
    f.ensure_finite("lp_norm input")?;
    if p.is_infinite() {
        return Ok(f.max_abs());
    }
    let cell = f.grid().cell_volume();
    let sum: f64 = f.values().iter().map(|v| v.abs().powf(p)).sum();
    Ok((sum * cell).powf(1.0 / p))
}

/// L_p norm of a vector field via the pointwise Euclidean magnitude.
pub fn lp_norm_vector(v: &VectorField, p: f64) -> Result<f64> {
    lp_norm(&v.magnitude(), p)
}

fn orlicz_integral(values: &[f64], cell: f64, lambda: f64, q: f64) -> f64 {
    let mut acc = 0.0;
    for &v in values {
        acc += phi_q(v.abs() / lambda, q).expect("nonnegative argument") * cell;
        if acc.is_infinite() {
            return acc;
        }
    }
    acc
}

/// Φ_q-Orlicz norm inf{λ > 0 : ∫ Φ_q(|f|/λ) dx ≤ 1} by bisection on the
/// monotone map λ ↦ ∫ Φ_q(|f|/λ) dx. The zero field returns 0 by the
/// limit convention.
pub fn orlicz_norm(f: &ScalarField, spec: &OrliczSpec) -> Result<f64> {
    f.ensure_finite("orlicz_norm input")?;
    let sup = f.max_abs();
    if sup == 0.0 {
        return Ok(0.0);
    }
    let cell = f.grid().cell_volume();
    let values = f.values();
    let q = spec.q;

    let mut lo = sup / 50.0;
    let mut hi = sup * 50.0;
    let mut guard = 0;
    while orlicz_integral(values, cell, lo, q) < 1.0 {
        lo /= spec.bracket_expansion;
        guard += 1;
        if guard > 200 {
            // integral < 1 for arbitrarily small λ cannot happen for a
            // nonzero field, so this is a numerical failure
            return Err(CoreError::InvalidInput(
                "orlicz bisection could not bracket from below".into(),
            ));
        }
    }
    guard = 0;
    while orlicz_integral(values, cell, hi, q) > 1.0 {
        hi *= spec.bracket_expansion;
        guard += 1;
        if guard > 200 {
            return Err(CoreError::InvalidInput(
                "orlicz bisection could not bracket from above".into(),
            ));
        }
    }
    while (hi - lo) > spec.tol * hi {
        let mid = 0.5 * (lo + hi);
        if orlicz_integral(values, cell, mid, q) > 1.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(0.5 * (lo + hi))
}

pub fn orlicz_norm_vector(v: &VectorField, spec: &OrliczSpec) -> Result<f64> {
    orlicz_norm(&v.magnitude(), spec)
}

/// Non-increasing rearrangement of |f| as a step function on [0, (2π)³]:
/// sorted values paired with cumulative measure.
#[derive(Debug, Clone)]
pub struct RearrangementTable {
    /// (value, cumulative measure at the right end of the step)
    entries: Vec<(f64, f64)>,
    cell: f64,
}

impl RearrangementTable {
    pub fn entries(&self) -> &[(f64, f64)] {
        &self.entries
    }

    pub fn total_measure(&self) -> f64 {
        self.entries.len() as f64 * self.cell
    }

    /// Value of f* at measure coordinate t.
    pub fn value_at(&self, t: f64) -> f64 {
        if t < 0.0 {
            return self.entries.first().map_or(0.0, |e| e.0);
        }
        let idx = (t / self.cell) as usize;
        self.entries.get(idx).map_or(0.0, |e| e.0)
    }

    /// ∫ F(f*(t)) dt over [0, ∞): each step contributes F(value) · cell.
    pub fn integral_of(&self, f: impl Fn(f64) -> f64) -> f64 {
        self.entries.iter().map(|&(v, _)| f(v) * self.cell).sum()
    }

    /// L_p norm computed from the table.
    pub fn lp_norm(&self, p: f64) -> Result<f64> {
        if p < 1.0 || p.is_nan() {
            return Err(CoreError::InvalidInput(format!(
                "L_p norm requires p >= 1, got {p}"
            )));
        }
        if p.is_infinite() {
            return Ok(self.entries.first().map_or(0.0, |e| e.0));
        }
        Ok(self.integral_of(|v| v.powf(p)).powf(1.0 / p))
    }
}

/// Build the rearrangement table: sort |f| descending and pair with
/// cumulative cell volumes.
pub fn rearrangement(f: &ScalarField) -> Result<RearrangementTable> {
    f.ensure_finite("rearrangement input")?;
    let cell = f.grid().cell_volume();
    let mut vals: Vec<f64> = f.values().iter().map(|v| v.abs()).collect();
    vals.sort_by(|a, b| b.partial_cmp(a).expect("finite values"));
    let entries = vals
        .into_iter()
        .enumerate()
        .map(|(i, v)| (v, (i + 1) as f64 * cell))
        .collect();
    Ok(RearrangementTable { entries, cell })
}

/// Explicit Orlicz upper bound from the rearrangement argument:
/// with s = ‖f‖_∞, a = ‖f‖_q / s, b = Φ_q^{-1}(a^{-q}), the bound is
/// 6 (a + 1/(1+b)) s. Always an upper bound for `orlicz_norm`.
pub fn lemma_upper_bound(f: &ScalarField, spec: &OrliczSpec) -> Result<f64> {
    f.ensure_finite("lemma_upper_bound input")?;
    let sup = f.max_abs();
    if sup == 0.0 {
        return Err(CoreError::InvalidInput(
            "upper bound undefined for the zero field".into(),
        ));
    }
    let a = lp_norm(f, spec.q)? / sup;
    let b = phi_q_inv(a.powf(-spec.q), spec.q)?;
    let n = a + 1.0 / (1.0 + b);
    Ok(6.0 * n * sup)
}

/// Indicator field of (approximately) the requested measure: the smallest
/// number of cells whose total volume is closest to `target`. Returns the
/// field and its exact discrete measure.
pub fn indicator_of_measure(
    grid: crate::fields::PeriodicGrid,
    target: f64,
) -> Result<(ScalarField, f64)> {
    let cell = grid.cell_volume();
    let count = (target / cell).round().max(1.0) as usize;
    if count > grid.len() {
        return Err(CoreError::InvalidInput(format!(
            "requested measure {target} exceeds the torus volume"
        )));
    }
    let mut values = vec![0.0; grid.len()];
    for v in values.iter_mut().take(count) {
        *v = 1.0;
    }
    Ok((ScalarField::from_values(grid, values)?, count as f64 * cell))
}

/// Closed-form Orlicz norm of an indicator of measure m:
/// 1 / log(1 + (e−1) m^{-1/q}).
pub fn indicator_orlicz_norm(m: f64, q: f64) -> f64 {
    1.0 / (E_MINUS_ONE * m.powf(-1.0 / q)).ln_1p()
}
