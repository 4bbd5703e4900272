//! Recovery of the coefficients of anticipative stochastic differentials from
//! their stochastic Fourier coefficients.
//!
//! Grids are uniform on `[0, L]` with dyadic step counts. Functions live on the
//! nodes; the increment `B(t_{j+1}) - B(t_j)` belongs to cell `j`.

pub mod cons;
pub mod error;
pub mod grid;
pub mod integrals;
pub mod processes;
pub mod reconstruct;
pub mod runner;
pub mod scenario;
pub mod sfc;

pub use cons::{BasisFamily, BasisSpec, Projector, TrigOrdering};
pub use error::{Error, Result};
pub use grid::{sample_brownian, BrownianPath, Convention, Grid, GridFunction, C64};
pub use processes::{ChaosForm, DetFunction, PathFunctional, RandomFunctionSpec};
pub use reconstruct::{LilEstimator, LilParams, Pipeline};
pub use scenario::{parse_config, ConfigError, ScenarioConfig};
pub use sfc::{IndexMask, IntegralFlavor, SfcEngine, SfcVector, StochasticDifferential};
