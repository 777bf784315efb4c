//! The randomly perturbed back-to-coordinates map.
//!
//! A path started at (x, t1) marches the reversed time variable forward,
//! i.e. physical time downward to t0, with drift -u and additive noise of
//! variance 2 per unit time:
//!
//!   X ← X − u(X, τ)·δ + √2 √δ ξ,   τ ← τ − δ.
//!
//! Along the way the walker can accumulate ∫|∇u(X(s), s)| ds (Frobenius
//! norm, left endpoint in the forward variable) and the transport matrix
//! product that carries the magnetization or vorticity vector.

use super::rng::ParticleStream;
use crate::error::{CoreError, Result};
use crate::fields::{wrap_point, InterpMode, TWO_PI};
use crate::solver::VelocityHistory;

/// Absolute tick grid for shared-noise studies. Tick j covers the physical
/// time interval [t_ref − (j+1) h_base, t_ref − j h_base]; two walks with
/// the same grid and seed see the same underlying Brownian path no matter
/// how their steps partition it.
#[derive(Debug, Clone, Copy)]
pub struct TickGrid {
    pub t_ref: f64,
    pub h_base: f64,
}

impl TickGrid {
    fn tick_of(&self, t: f64) -> Result<u64> {
        let raw = (self.t_ref - t) / self.h_base;
        let rounded = raw.round();
        if (raw - rounded).abs() > 1e-6 {
            return Err(CoreError::InvalidInput(format!(
                "time {t} is not aligned to the shared noise grid (t_ref = {}, h_base = {})",
                self.t_ref, self.h_base
            )));
        }
        if rounded < -0.5 {
            return Err(CoreError::InvalidInput(format!(
                "time {t} lies above the noise grid reference {}",
                self.t_ref
            )));
        }
        Ok(rounded as u64)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Transport {
    None,
    Magnetization,
    Vorticity,
}

pub(crate) struct WalkSpec<'a> {
    pub history: &'a VelocityHistory,
    pub x: [f64; 3],
    pub t1: f64,
    pub t0: f64,
    pub h: f64,
    pub mode: InterpMode,
    pub transport: Transport,
    /// sample ∇u along the path (implied by transport != None)
    pub need_grad: bool,
    pub ticks: Option<TickGrid>,
    /// restrict the |∇u| accumulator to these time intervals
    pub accum_set: Option<&'a [(f64, f64)]>,
}

pub(crate) struct PathOutcome {
    pub endpoint: [f64; 3],
    pub accum: f64,
    pub matrix: [[f64; 3]; 3],
}

fn overlap(lo: f64, hi: f64, set: Option<&[(f64, f64)]>) -> f64 {
    match set {
        None => hi - lo,
        Some(intervals) => intervals
            .iter()
            .map(|&(a, b)| (hi.min(b) - lo.max(a)).max(0.0))
            .sum(),
    }
}

#[inline]
fn frobenius(g: &[[f64; 3]; 3]) -> f64 {
    let mut s = 0.0;
    for row in g {
        for v in row {
            s += v * v;
        }
    }
    s.sqrt()
}

#[inline]
fn mat_mul(a: &[[f64; 3]; 3], b: &[[f64; 3]; 3]) -> [[f64; 3]; 3] {
    let mut out = [[0.0; 3]; 3];
    for i in 0..3 {
        for j in 0..3 {
            out[i][j] = a[i][0] * b[0][j] + a[i][1] * b[1][j] + a[i][2] * b[2][j];
        }
    }
    out
}

const IDENTITY: [[f64; 3]; 3] = [[1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 1.0]];

pub(crate) fn walk(spec: &WalkSpec, stream: ParticleStream) -> Result<PathOutcome> {
    let span = spec.t1 - spec.t0;
    let mut x = wrap_point(spec.x);
    let mut accum = 0.0f64;
    let mut matrix = IDENTITY;
    if span <= 0.0 {
        return Ok(PathOutcome {
            endpoint: x,
            accum,
            matrix,
        });
    }
    let need_grad = spec.need_grad || spec.transport != Transport::None;
    let steps = (span / spec.h).ceil() as usize;
    // drift at the starting point
    let mut u = if need_grad {
        spec.history
            .sample_velocity_and_grad(x, spec.t1, spec.mode)?
            .0
    } else {
        spec.history.sample_velocity(x, spec.t1, spec.mode)?
    };
    let sqrt2 = std::f64::consts::SQRT_2;
    for k in 0..steps {
        let tau_hi = spec.t1 - k as f64 * spec.h;
        let tau_lo = (spec.t1 - (k + 1) as f64 * spec.h).max(spec.t0);
        let delta = tau_hi - tau_lo;
        // Brownian increment over [tau_lo, tau_hi]
        let mut noise = [0.0f64; 3];
        match spec.ticks {
            None => {
                let z = stream.gaussian3(k as u64);
                let s = delta.sqrt();
                for d in 0..3 {
                    noise[d] = s * z[d];
                }
            }
            Some(grid) => {
                let j_hi = grid.tick_of(tau_hi)?;
                let j_lo = grid.tick_of(tau_lo)?;
                let s = grid.h_base.sqrt();
                for j in j_hi..j_lo {
                    let z = stream.gaussian3(j);
                    for d in 0..3 {
                        noise[d] += s * z[d];
                    }
                }
            }
        }
        for d in 0..3 {
            x[d] -= u[d] * delta;
            x[d] += sqrt2 * noise[d];
        }
        x = wrap_point(x);
        if need_grad {
            let (u_new, g) = spec
                .history
                .sample_velocity_and_grad(x, tau_lo, spec.mode)?;
            u = u_new;
            let w = overlap(tau_lo, tau_hi, spec.accum_set);
            if w > 0.0 {
                accum += w * frobenius(&g);
            }
            match spec.transport {
                Transport::None => {}
                Transport::Magnetization => {
                    // factor I − δ Gᵀ
                    let mut f = IDENTITY;
                    for i in 0..3 {
                        for j in 0..3 {
                            f[i][j] -= delta * g[j][i];
                        }
                    }
                    matrix = mat_mul(&matrix, &f);
                }
                Transport::Vorticity => {
                    // factor I + δ G
                    let mut f = IDENTITY;
                    for i in 0..3 {
                        for j in 0..3 {
                            f[i][j] += delta * g[i][j];
                        }
                    }
                    matrix = mat_mul(&matrix, &f);
                }
            }
        } else {
            u = spec.history.sample_velocity(x, tau_lo, spec.mode)?;
        }
    }
    Ok(PathOutcome {
        endpoint: x,
        accum,
        matrix,
    })
}

/// Shortest displacement between two points on the torus.
pub fn torus_distance(a: [f64; 3], b: [f64; 3]) -> f64 {
    let mut s = 0.0;
    for d in 0..3 {
        let mut diff = (a[d] - b[d]).rem_euclid(TWO_PI);
        if diff > TWO_PI / 2.0 {
            diff = TWO_PI - diff;
        }
        s += diff * diff;
    }
    s.sqrt()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn tick_alignment_is_enforced() {
        let grid = TickGrid {
            t_ref: 1.0,
            h_base: 0.01,
        };
        assert_eq!(grid.tick_of(1.0).unwrap(), 0);
        assert_eq!(grid.tick_of(0.9).unwrap(), 10);
        assert!(grid.tick_of(0.905).is_err());
        assert!(grid.tick_of(1.02).is_err());
    }

    #[test]
    fn torus_distance_wraps() {
        let a = [0.05, 0.0, 0.0];
        let b = [TWO_PI - 0.05, 0.0, 0.0];
        assert!((torus_distance(a, b) - 0.1).abs() < 1e-12);
    }
}
