//! Pseudo-spectral Navier-Stokes time stepper on the torus, the recorded
//! velocity history it produces, and passive spectral solves for the
//! vorticity and magnetization equations.
//!
//! The time scheme is an integrating-factor Runge-Kutta 2: the heat factor
//! e^{tΔ} is applied exactly in spectral space and the projected nonlinear
//! term is advanced with Heun's method. The quadratic nonlinearity is
//! dealiased with the two-thirds truncation rule.

use crate::error::{CoreError, Result};
use crate::fields::field::engine_for;
use crate::fields::{
    grad_tensor, leray_project, InterpMode, PeriodicGrid, ScalarField, Spectral3d, TensorField,
    TrilinearStencil, VectorField,
};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use std::sync::Arc;

#[derive(Debug, Clone, Copy, Serialize, Deserialize, PartialEq)]
pub struct SolverConfig {
    pub n: usize,
    pub dt: f64,
    pub viscosity: f64,
    pub dealias: bool,
    pub snapshot_interval: f64,
    pub end_time: f64,
}

impl Default for SolverConfig {
    fn default() -> Self {
        Self {
            n: 32,
            dt: 1e-3,
            viscosity: 1.0,
            dealias: true,
            snapshot_interval: 1e-2,
            end_time: 1.0,
        }
    }
}

impl SolverConfig {
    pub fn validate(&self) -> Result<PeriodicGrid> {
        let grid = PeriodicGrid::new(self.n)?;
        if !(self.dt > 0.0 && self.dt.is_finite()) {
            return Err(CoreError::Config(format!("dt must be positive, got {}", self.dt)));
        }
        if !(self.viscosity > 0.0 && self.viscosity.is_finite()) {
            return Err(CoreError::Config(format!(
                "viscosity must be positive, got {}",
                self.viscosity
            )));
        }
        let guard = 0.25 * grid.spacing() * grid.spacing() / self.viscosity;
        if self.dt > guard {
            return Err(CoreError::Config(format!(
                "dt = {} exceeds the stability guard 0.25 (2π/n)²/ν = {guard:.3e}",
                self.dt
            )));
        }
        if self.end_time <= 0.0 {
            return Err(CoreError::Config("end_time must be positive".into()));
        }
        if self.snapshot_interval <= 0.0 {
            return Err(CoreError::Config("snapshot_interval must be positive".into()));
        }
        if !near_integer(self.snapshot_interval / self.dt) {
            return Err(CoreError::Config(format!(
                "snapshot_interval ({}) must be an integer multiple of dt ({})",
                self.snapshot_interval, self.dt
            )));
        }
        Ok(grid)
    }
}

fn near_integer(x: f64) -> bool {
    (x - x.round()).abs() <= 1e-9 * x.abs().max(1.0)
}

/// One recorded instant: solenoidal velocity plus its gradient tensor,
/// both kept in physical space for fast particle sampling.
#[derive(Debug, Clone)]
pub struct HistorySnapshot {
    pub time: f64,
    pub velocity: VectorField,
    pub grad: TensorField,
}

/// Time-ordered velocity snapshots with a linear-in-time interpolation
/// contract between them. Immutable once built; safe to share across
/// threads.
#[derive(Debug, Clone)]
pub struct VelocityHistory {
    snapshots: Vec<HistorySnapshot>,
}

impl VelocityHistory {
    pub fn new(snapshots: Vec<HistorySnapshot>) -> Result<Self> {
        if snapshots.len() < 2 {
            return Err(CoreError::InvalidInput(
                "a history needs at least two snapshots".into(),
            ));
        }
        for w in snapshots.windows(2) {
            if !(w[1].time > w[0].time) {
                return Err(CoreError::InvalidInput(
                    "snapshot times must be strictly increasing".into(),
                ));
            }
        }
        Ok(Self { snapshots })
    }

    pub fn snapshots(&self) -> &[HistorySnapshot] {
        &self.snapshots
    }

    pub fn grid(&self) -> PeriodicGrid {
        self.snapshots[0].velocity.grid()
    }

    pub fn start_time(&self) -> f64 {
        self.snapshots[0].time
    }

    pub fn end_time(&self) -> f64 {
        self.snapshots[self.snapshots.len() - 1].time
    }

    /// Smallest spacing between consecutive snapshots.
    pub fn min_interval(&self) -> f64 {
        self.snapshots
            .windows(2)
            .map(|w| w[1].time - w[0].time)
            .fold(f64::INFINITY, f64::min)
    }

    pub fn contains(&self, t: f64) -> bool {
        let eps = 1e-9 * (self.end_time() - self.start_time()).max(1.0);
        t >= self.start_time() - eps && t <= self.end_time() + eps
    }

    fn ensure_contains(&self, t: f64) -> Result<()> {
        if self.contains(t) {
            Ok(())
        } else {
            Err(CoreError::OutsideHistory {
                t,
                start: self.start_time(),
                end: self.end_time(),
            })
        }
    }

    /// Bracketing snapshot index and blend weight for time t.
    pub fn bracket(&self, t: f64) -> Result<(usize, f64)> {
        self.ensure_contains(t)?;
        let idx = self
            .snapshots
            .partition_point(|s| s.time <= t)
            .saturating_sub(1)
            .min(self.snapshots.len() - 2);
        let a = &self.snapshots[idx];
        let b = &self.snapshots[idx + 1];
        let theta = ((t - a.time) / (b.time - a.time)).clamp(0.0, 1.0);
        Ok((idx, theta))
    }

    /// Velocity at an off-grid point: trilinear in space, linear in time.
    pub fn sample_velocity(&self, x: [f64; 3], t: f64, mode: InterpMode) -> Result<[f64; 3]> {
        let (idx, theta) = self.bracket(t)?;
        let a = &self.snapshots[idx];
        let b = &self.snapshots[idx + 1];
        match mode {
            InterpMode::Trilinear => {
                let st = TrilinearStencil::new(self.grid(), x);
                let mut out = [0.0; 3];
                for d in 0..3 {
                    let va = st.apply(a.velocity.component(d).values());
                    let vb = st.apply(b.velocity.component(d).values());
                    out[d] = (1.0 - theta) * va + theta * vb;
                }
                Ok(out)
            }
            InterpMode::Spectral => {
                let va = crate::fields::sample_vector(&a.velocity, x, mode);
                let vb = crate::fields::sample_vector(&b.velocity, x, mode);
                Ok([
                    (1.0 - theta) * va[0] + theta * vb[0],
                    (1.0 - theta) * va[1] + theta * vb[1],
                    (1.0 - theta) * va[2] + theta * vb[2],
                ])
            }
        }
    }

    /// Velocity and gradient tensor sampled with one shared stencil.
    pub fn sample_velocity_and_grad(
        &self,
        x: [f64; 3],
        t: f64,
        mode: InterpMode,
    ) -> Result<([f64; 3], [[f64; 3]; 3])> {
        let (idx, theta) = self.bracket(t)?;
        let a = &self.snapshots[idx];
        let b = &self.snapshots[idx + 1];
        match mode {
            InterpMode::Trilinear => {
                let st = TrilinearStencil::new(self.grid(), x);
                let mut u = [0.0; 3];
                let mut g = [[0.0; 3]; 3];
                for i in 0..3 {
                    let va = st.apply(a.velocity.component(i).values());
                    let vb = st.apply(b.velocity.component(i).values());
                    u[i] = (1.0 - theta) * va + theta * vb;
                    for j in 0..3 {
                        let ga = st.apply(a.grad.component(i, j).values());
                        let gb = st.apply(b.grad.component(i, j).values());
                        g[i][j] = (1.0 - theta) * ga + theta * gb;
                    }
                }
                Ok((u, g))
            }
            InterpMode::Spectral => {
                let ua = crate::fields::sample_vector(&a.velocity, x, mode);
                let ub = crate::fields::sample_vector(&b.velocity, x, mode);
                let ga = crate::fields::sample_tensor(&a.grad, x, mode);
                let gb = crate::fields::sample_tensor(&b.grad, x, mode);
                let mut u = [0.0; 3];
                let mut g = [[0.0; 3]; 3];
                for i in 0..3 {
                    u[i] = (1.0 - theta) * ua[i] + theta * ub[i];
                    for j in 0..3 {
                        g[i][j] = (1.0 - theta) * ga[i][j] + theta * gb[i][j];
                    }
                }
                Ok((u, g))
            }
        }
    }

    /// Linearly blended velocity field at time t.
    pub fn velocity_at(&self, t: f64) -> Result<VectorField> {
        let (idx, theta) = self.bracket(t)?;
        let a = &self.snapshots[idx].velocity;
        let b = &self.snapshots[idx + 1].velocity;
        let blend = |i: usize| {
            a.component(i)
                .zip_map(b.component(i), |x, y| (1.0 - theta) * x + theta * y)
                .expect("same grid")
        };
        Ok(VectorField::new([blend(0), blend(1), blend(2)])?.mark_solenoidal())
    }

    /// Linearly blended velocity-gradient tensor at time t, as raw arrays
    /// indexed (i, j).
    fn grad_arrays_at(&self, t: f64) -> Result<[[Vec<f64>; 3]; 3]> {
        let (idx, theta) = self.bracket(t)?;
        let a = &self.snapshots[idx].grad;
        let b = &self.snapshots[idx + 1].grad;
        let blend = |i: usize, j: usize| -> Vec<f64> {
            a.component(i, j)
                .values()
                .iter()
                .zip(b.component(i, j).values())
                .map(|(x, y)| (1.0 - theta) * x + theta * y)
                .collect()
        };
        Ok([
            [blend(0, 0), blend(0, 1), blend(0, 2)],
            [blend(1, 0), blend(1, 1), blend(1, 2)],
            [blend(2, 0), blend(2, 1), blend(2, 2)],
        ])
    }
}

/// Spectral state of one vector field: three coefficient arrays.
type SpectralState = [Vec<Complex64>; 3];

/// Shared spectral machinery for one (grid, dt, viscosity) combination.
struct Stepper {
    grid: PeriodicGrid,
    engine: Arc<Spectral3d>,
    /// exp(-ν |k|² dt) per flat index
    heat: Vec<f64>,
    /// two-thirds dealias keep-mask (all true when dealiasing is off)
    keep: Vec<bool>,
    /// wavenumbers per axis with the Nyquist entry zeroed
    kx: Vec<f64>,
}

impl Stepper {
    fn new(grid: PeriodicGrid, dt: f64, viscosity: f64, dealias: bool) -> Self {
        let engine = engine_for(grid);
        let n = grid.n();
        let cutoff = grid.dealias_cutoff();
        let mut heat = vec![0.0; grid.len()];
        let mut keep = vec![true; grid.len()];
        for i in 0..n {
            let ki = grid.wavenumber(i);
            for j in 0..n {
                let kj = grid.wavenumber(j);
                for k in 0..n {
                    let kk = grid.wavenumber(k);
                    let idx = grid.index(i, j, k);
                    let k2 = (ki * ki + kj * kj + kk * kk) as f64;
                    heat[idx] = (-viscosity * k2 * dt).exp();
                    if dealias && (ki.abs() > cutoff || kj.abs() > cutoff || kk.abs() > cutoff) {
                        keep[idx] = false;
                    }
                }
            }
        }
        let kx = (0..n)
            .map(|m| {
                if m == n / 2 {
                    0.0
                } else {
                    grid.wavenumber(m) as f64
                }
            })
            .collect();
        Self {
            grid,
            engine,
            heat,
            keep,
            kx,
        }
    }

    fn truncate(&self, coeffs: &mut [Complex64]) {
        for (c, &keep) in coeffs.iter_mut().zip(&self.keep) {
            if !keep {
                *c = Complex64::default();
            }
        }
    }

    fn to_physical(&self, coeffs: &[Complex64]) -> Vec<f64> {
        self.engine.inverse_to_real(coeffs.to_vec())
    }

    /// -L div(u ⊗ u), dealiased: the projected nonlinear term of the
    /// momentum equation, from the spectral state.
    fn nonlinear(&self, state: &SpectralState) -> SpectralState {
        let grid = self.grid;
        let n = grid.n();
        let phys: Vec<Vec<f64>> = state.iter().map(|c| self.to_physical(c)).collect();

        // spectral coefficients of the six unique products u_i u_j
        let mut products: Vec<Vec<Complex64>> = Vec::with_capacity(6);
        let pairs = [(0, 0), (0, 1), (0, 2), (1, 1), (1, 2), (2, 2)];
        for &(i, j) in &pairs {
            let prod: Vec<f64> = phys[i]
                .iter()
                .zip(&phys[j])
                .map(|(a, b)| a * b)
                .collect();
            products.push(self.engine.forward_real(&prod));
        }
        let pidx = |i: usize, j: usize| -> usize {
            let (a, b) = if i <= j { (i, j) } else { (j, i) };
            pairs.iter().position(|&p| p == (a, b)).expect("all pairs present")
        };

        // divergence: d_i = i Σ_j k_j (u_i u_j)^, then project and negate
        let mut div: SpectralState = [
            vec![Complex64::default(); grid.len()],
            vec![Complex64::default(); grid.len()],
            vec![Complex64::default(); grid.len()],
        ];
        for i in 0..n {
            let ki = self.kx[i];
            for j in 0..n {
                let kj = self.kx[j];
                for k in 0..n {
                    let kk = self.kx[k];
                    let idx = grid.index(i, j, k);
                    if !self.keep[idx] {
                        continue;
                    }
                    let kvec = [ki, kj, kk];
                    let k2 = ki * ki + kj * kj + kk * kk;
                    let mut d = [Complex64::default(); 3];
                    for comp in 0..3 {
                        let mut acc = Complex64::default();
                        for axis in 0..3 {
                            acc += kvec[axis] * products[pidx(comp, axis)][idx];
                        }
                        // i k · (...) and the overall minus sign
                        d[comp] = Complex64::new(0.0, -1.0) * acc;
                    }
                    // Leray projection of the three components at this mode
                    if k2 > 0.0 {
                        let dot = kvec[0] * d[0] + kvec[1] * d[1] + kvec[2] * d[2];
                        let factor = dot / k2;
                        for comp in 0..3 {
                            d[comp] -= kvec[comp] * factor;
                        }
                    }
                    for comp in 0..3 {
                        div[comp][idx] = d[comp];
                    }
                }
            }
        }
        div
    }

    /// One integrating-factor RK2 step of the momentum equation.
    fn step_momentum(&self, state: &SpectralState, dt: f64) -> SpectralState {
        let n1 = self.nonlinear(state);
        let mut predictor: SpectralState = state.clone();
        for comp in 0..3 {
            for idx in 0..self.grid.len() {
                predictor[comp][idx] =
                    self.heat[idx] * (state[comp][idx] + dt * n1[comp][idx]);
            }
        }
        let n2 = self.nonlinear(&predictor);
        let mut out = state.clone();
        for comp in 0..3 {
            for idx in 0..self.grid.len() {
                out[comp][idx] = self.heat[idx] * (state[comp][idx] + 0.5 * dt * n1[comp][idx])
                    + 0.5 * dt * n2[comp][idx];
            }
        }
        out
    }

    fn is_finite(&self, state: &SpectralState) -> bool {
        state
            .iter()
            .all(|c| c.iter().all(|z| z.re.is_finite() && z.im.is_finite()))
    }

    fn snapshot(&self, state: &SpectralState, time: f64) -> HistorySnapshot {
        let grid = self.grid;
        let vel_comp = |c: &Vec<Complex64>| -> ScalarField {
            ScalarField::from_values(grid, self.to_physical(c)).expect("sized by construction")
        };
        let velocity = VectorField::new([
            vel_comp(&state[0]),
            vel_comp(&state[1]),
            vel_comp(&state[2]),
        ])
        .expect("same grid")
        .mark_solenoidal();

        let deriv = |c: &Vec<Complex64>, axis: usize| -> ScalarField {
            let n = grid.n();
            let mut d = c.clone();
            for i in 0..n {
                for j in 0..n {
                    for k in 0..n {
                        let kv = match axis {
                            0 => self.kx[i],
                            1 => self.kx[j],
                            _ => self.kx[k],
                        };
                        d[grid.index(i, j, k)] *= Complex64::new(0.0, kv);
                    }
                }
            }
            ScalarField::from_values(grid, self.to_physical(&d)).expect("sized by construction")
        };
        let grad = TensorField::new([
            [deriv(&state[0], 0), deriv(&state[0], 1), deriv(&state[0], 2)],
            [deriv(&state[1], 0), deriv(&state[1], 1), deriv(&state[1], 2)],
            [deriv(&state[2], 0), deriv(&state[2], 1), deriv(&state[2], 2)],
        ]);
        HistorySnapshot {
            time,
            velocity,
            grad,
        }
    }
}

fn spectral_state(v: &VectorField) -> SpectralState {
    [
        v.component(0).spectral().to_vec(),
        v.component(1).spectral().to_vec(),
        v.component(2).spectral().to_vec(),
    ]
}

fn check_initial_data(u0: &VectorField) -> Result<()> {
    u0.ensure_finite("initial data")?;
    let scale = u0.max_abs().max(1e-300);
    let div = crate::fields::divergence(u0)?;
    if div.max_abs() > 1e-8 * scale {
        return Err(CoreError::InvalidInput(format!(
            "initial data is not solenoidal: |div|_inf = {:.3e}",
            div.max_abs()
        )));
    }
    for d in 0..3 {
        if u0.component(d).mean().abs() > 1e-10 * scale {
            return Err(CoreError::InvalidInput(
                "initial data must be mean-free".into(),
            ));
        }
    }
    Ok(())
}

/// Projected nonlinear term -L div(u ⊗ u) of the momentum equation.
pub fn nonlinear_term(u: &VectorField) -> Result<VectorField> {
    check_initial_data(u)?;
    let grid = u.grid();
    let stepper = Stepper::new(grid, 1.0, 1.0, true);
    let out = stepper.nonlinear(&spectral_state(u));
    let [a, b, c] = out;
    Ok(VectorField::new([
        ScalarField::from_spectral(grid, a)?,
        ScalarField::from_spectral(grid, b)?,
        ScalarField::from_spectral(grid, c)?,
    ])?
    .mark_solenoidal())
}

/// Advance a velocity field by one time step of length dt.
pub fn step(u: &VectorField, dt: f64, viscosity: f64) -> Result<VectorField> {
    check_initial_data(u)?;
    let grid = u.grid();
    let stepper = Stepper::new(grid, dt, viscosity, true);
    let mut state = spectral_state(u);
    for c in state.iter_mut() {
        stepper.truncate(c);
    }
    let out = stepper.step_momentum(&state, dt);
    let [a, b, c] = out;
    Ok(VectorField::new([
        ScalarField::from_spectral(grid, a)?,
        ScalarField::from_spectral(grid, b)?,
        ScalarField::from_spectral(grid, c)?,
    ])?
    .mark_solenoidal())
}

#[derive(Debug)]
pub struct RunOutput {
    pub history: VelocityHistory,
    /// Set when NaN/Inf appeared mid-run: the last valid time. The history
    /// holds the snapshots recorded up to that point.
    pub blowup: Option<f64>,
}

/// Integrate the Navier-Stokes equation from u0 and record snapshots.
pub fn run(config: &SolverConfig, u0: &VectorField) -> Result<RunOutput> {
    let grid = config.validate()?;
    if u0.grid() != grid {
        return Err(CoreError::Config(format!(
            "initial data grid n={} does not match config n={}",
            u0.grid().n(),
            config.n
        )));
    }
    check_initial_data(u0)?;

    let stepper = Stepper::new(grid, config.dt, config.viscosity, config.dealias);
    let mut state = spectral_state(u0);
    for c in state.iter_mut() {
        stepper.truncate(c);
    }

    let steps_per_snap = (config.snapshot_interval / config.dt).round() as usize;
    let total_steps = (config.end_time / config.dt).round() as usize;
    let final_time = total_steps as f64 * config.dt;
    if !near_integer(config.end_time / config.dt) {
        return Err(CoreError::Config(format!(
            "end_time ({}) must be an integer multiple of dt ({})",
            config.end_time, config.dt
        )));
    }

    let mut snapshots = vec![stepper.snapshot(&state, 0.0)];
    let mut blowup = None;
    for step_idx in 1..=total_steps {
        state = stepper.step_momentum(&state, config.dt);
        let t = step_idx as f64 * config.dt;
        if !stepper.is_finite(&state) {
            blowup = Some((step_idx - 1) as f64 * config.dt);
            break;
        }
        if step_idx % steps_per_snap == 0 || step_idx == total_steps {
            snapshots.push(stepper.snapshot(&state, t));
        }
    }
    let _ = final_time;
    if snapshots.len() < 2 {
        // blow-up on the very first step: keep the initial snapshot twice
        // offset by dt so downstream consumers still get a valid history
        let again = snapshots[0].clone();
        snapshots.push(HistorySnapshot {
            time: config.dt,
            ..again
        });
    }
    Ok(RunOutput {
        history: VelocityHistory::new(snapshots)?,
        blowup,
    })
}

/// Which passively transported variable to solve for.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum PassiveKind {
    /// ∂w/∂t = Δw − u·∇w + w·∇u
    Vorticity,
    /// ∂m/∂t = Δm − u·∇m − (∇u)ᵀ m
    Magnetization,
}

#[derive(Debug, Clone, Copy)]
pub struct PassiveConfig {
    pub dt: f64,
    pub viscosity: f64,
}

#[derive(Debug)]
pub struct PassiveTrajectory {
    /// (time, field) at every history snapshot time.
    pub states: Vec<(f64, VectorField)>,
}

impl PassiveTrajectory {
    pub fn at(&self, t: f64) -> Result<&VectorField> {
        self.states
            .iter()
            .find(|(time, _)| (time - t).abs() <= 1e-9 * t.abs().max(1.0))
            .map(|(_, f)| f)
            .ok_or_else(|| CoreError::InvalidInput(format!("no passive state recorded at t = {t}")))
    }
}

fn solve_passive(
    history: &VelocityHistory,
    init: &VectorField,
    cfg: &PassiveConfig,
    kind: PassiveKind,
) -> Result<PassiveTrajectory> {
    init.ensure_finite("passive initial data")?;
    let grid = history.grid();
    if init.grid() != grid {
        return Err(CoreError::InvalidInput(
            "initial data grid does not match history".into(),
        ));
    }
    let stepper = Stepper::new(grid, cfg.dt, cfg.viscosity, true);
    let engine = &stepper.engine;
    let t0 = history.start_time();
    let n = grid.n();

    // nonlinear term of the passive equation at a given time:
    // -div(u w) plus the stretching term, dealiased
    let nonlinear = |w_state: &SpectralState, t: f64| -> Result<SpectralState> {
        let u_field = history.velocity_at(t)?;
        let g = history.grad_arrays_at(t)?;
        let u: Vec<&[f64]> = (0..3).map(|d| u_field.component(d).values()).collect();
        let w_phys: Vec<Vec<f64>> = w_state.iter().map(|c| stepper.to_physical(c)).collect();

        // stretching term in physical space
        let mut stretch: Vec<Vec<f64>> = vec![vec![0.0; grid.len()]; 3];
        for i in 0..3 {
            for j in 0..3 {
                let coeff: &[f64] = match kind {
                    PassiveKind::Vorticity => &g[i][j],
                    PassiveKind::Magnetization => &g[j][i],
                };
                let sign = match kind {
                    PassiveKind::Vorticity => 1.0,
                    PassiveKind::Magnetization => -1.0,
                };
                let s = &mut stretch[i];
                for idx in 0..grid.len() {
                    s[idx] += sign * coeff[idx] * w_phys[j][idx];
                }
            }
        }

        let mut out: SpectralState = [
            engine.forward_real(&stretch[0]),
            engine.forward_real(&stretch[1]),
            engine.forward_real(&stretch[2]),
        ];
        // advective part: -Σ_j i k_j (u_j w_i)^
        for i_comp in 0..3 {
            for axis in 0..3 {
                let prod: Vec<f64> = u[axis]
                    .iter()
                    .zip(&w_phys[i_comp])
                    .map(|(a, b)| a * b)
                    .collect();
                let prod_hat = engine.forward_real(&prod);
                let outc = &mut out[i_comp];
                for i in 0..n {
                    for j in 0..n {
                        for k in 0..n {
                            let kv = match axis {
                                0 => stepper.kx[i],
                                1 => stepper.kx[j],
                                _ => stepper.kx[k],
                            };
                            let idx = grid.index(i, j, k);
                            outc[idx] -= Complex64::new(0.0, kv) * prod_hat[idx];
                        }
                    }
                }
            }
        }
        for c in out.iter_mut() {
            stepper.truncate(c);
        }
        Ok(out)
    };

    let span = history.end_time() - t0;
    let total_steps = (span / cfg.dt).round() as usize;
    if !near_integer(span / cfg.dt) {
        return Err(CoreError::Config(format!(
            "history span {span} must be an integer multiple of the passive dt {}",
            cfg.dt
        )));
    }

    let snap_times: Vec<f64> = history.snapshots().iter().map(|s| s.time).collect();
    let mut state = spectral_state(init);
    for c in state.iter_mut() {
        stepper.truncate(c);
    }

    let to_field = |state: &SpectralState| -> Result<VectorField> {
        VectorField::new([
            ScalarField::from_values(grid, stepper.to_physical(&state[0]))?,
            ScalarField::from_values(grid, stepper.to_physical(&state[1]))?,
            ScalarField::from_values(grid, stepper.to_physical(&state[2]))?,
        ])
    };

    let mut states = vec![(t0, to_field(&state)?)];
    let mut next_record = 1usize;
    for step_idx in 1..=total_steps {
        let t_prev = t0 + (step_idx - 1) as f64 * cfg.dt;
        let t_next = t0 + step_idx as f64 * cfg.dt;
        let n1 = nonlinear(&state, t_prev)?;
        let mut predictor = state.clone();
        for comp in 0..3 {
            for idx in 0..grid.len() {
                predictor[comp][idx] =
                    stepper.heat[idx] * (state[comp][idx] + cfg.dt * n1[comp][idx]);
            }
        }
        let n2 = nonlinear(&predictor, t_next)?;
        for comp in 0..3 {
            for idx in 0..grid.len() {
                state[comp][idx] = stepper.heat[idx]
                    * (state[comp][idx] + 0.5 * cfg.dt * n1[comp][idx])
                    + 0.5 * cfg.dt * n2[comp][idx];
            }
        }
        if !stepper.is_finite(&state) {
            return Err(CoreError::BlowUp { time: t_prev });
        }
        while next_record < snap_times.len()
            && t_next >= snap_times[next_record] - 1e-9 * cfg.dt.max(1.0)
        {
            states.push((snap_times[next_record], to_field(&state)?));
            next_record += 1;
        }
    }
    Ok(PassiveTrajectory { states })
}

/// Solve the vorticity equation passively along a recorded history.
pub fn solve_vorticity(
    history: &VelocityHistory,
    w0: &VectorField,
    cfg: &PassiveConfig,
) -> Result<PassiveTrajectory> {
    solve_passive(history, w0, cfg, PassiveKind::Vorticity)
}

/// Solve the magnetization equation passively along a recorded history.
pub fn solve_magnetization(
    history: &VelocityHistory,
    m0: &VectorField,
    cfg: &PassiveConfig,
) -> Result<PassiveTrajectory> {
    solve_passive(history, m0, cfg, PassiveKind::Magnetization)
}

/// Rebuild the gradient tensor of a loaded velocity snapshot spectrally.
pub fn snapshot_from_velocity(time: f64, velocity: VectorField) -> Result<HistorySnapshot> {
    let grad = grad_tensor(&velocity)?;
    let velocity = {
        let scale = velocity.max_abs().max(1e-300);
        let div = crate::fields::divergence(&velocity)?;
        if div.max_abs() <= 1e-8 * scale {
            velocity.mark_solenoidal()
        } else {
            velocity
        }
    };
    Ok(HistorySnapshot {
        time,
        velocity,
        grad,
    })
}

/// Leray-projected initial magnetization consistency: the projection of a
/// passive magnetization state against the history's own velocity.
pub fn leray_projection_error(history: &VelocityHistory, m: &VectorField, t: f64) -> Result<f64> {
    let u = history.velocity_at(t)?;
    let pm = leray_project(m)?;
    let mut num = 0.0f64;
    let mut den = 0.0f64;
    for d in 0..3 {
        for (a, b) in pm.component(d).values().iter().zip(u.component(d).values()) {
            num = num.max((a - b).abs());
            den = den.max(b.abs());
        }
    }
    Ok(num / den.max(1e-300))
}
