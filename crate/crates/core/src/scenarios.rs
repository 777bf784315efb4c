//! Built-in initial-data scenarios: the exactly solvable shear flow, the
//! Taylor-Green vortex, and seeded random solenoidal data.

use crate::error::{CoreError, Result};
use crate::fields::{PeriodicGrid, VectorField};
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Scenario {
    Shear,
    TaylorGreen,
    RandomSolenoidal,
}

impl std::str::FromStr for Scenario {
    type Err = CoreError;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "shear" => Ok(Self::Shear),
            "taylor-green" => Ok(Self::TaylorGreen),
            "random-solenoidal" => Ok(Self::RandomSolenoidal),
            other => Err(CoreError::Config(format!("unknown scenario '{other}'"))),
        }
    }
}

/// u = sin(x₂) e₁: the nonlinear term vanishes identically and the exact
/// solution is e^{-νt} sin(x₂) e₁.
pub fn shear_flow(grid: PeriodicGrid) -> VectorField {
    VectorField::from_fn(grid, |[_, y, _]| [y.sin(), 0.0, 0.0]).mark_solenoidal()
}

pub fn taylor_green_value([x, y, z]: [f64; 3]) -> [f64; 3] {
    [
        x.sin() * y.cos() * z.cos(),
        -(x.cos()) * y.sin() * z.cos(),
        0.0,
    ]
}

/// The classical Taylor-Green vortex: fully three-dimensional nonlinear
/// dynamics from a three-mode initial condition.
pub fn taylor_green(grid: PeriodicGrid) -> VectorField {
    VectorField::from_fn(grid, taylor_green_value).mark_solenoidal()
}

/// Mean-free solenoidal band-limited noise, deterministic in the seed.
pub fn random_solenoidal(grid: PeriodicGrid, seed: u64) -> VectorField {
    crate::testutil::random_solenoidal(grid, seed, (grid.n() / 4) as i64, 1.0)
}

pub fn initial_data(scenario: Scenario, grid: PeriodicGrid, seed: u64) -> VectorField {
    match scenario {
        Scenario::Shear => shear_flow(grid),
        Scenario::TaylorGreen => taylor_green(grid),
        Scenario::RandomSolenoidal => random_solenoidal(grid, seed),
    }
}
