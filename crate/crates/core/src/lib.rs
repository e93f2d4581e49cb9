//! Incentive-compatible droop coordination between a main AC grid and the
//! adjacent systems that support it through LCC-HVDC links.
//!
//! The main system posts a virtual price per unit of droop; each adjacent
//! system best-responds with its droop coefficient. The fixed point of this
//! exchange is the Nash equilibrium of the coordination game and coincides
//! with the social-welfare optimum.

#![allow(clippy::neg_cmp_op_on_partial_ord)] // `!(x > 0.0)` deliberately rejects NaN

pub mod config;
pub mod error;
pub mod fixtures;
pub mod game;
pub mod mechanism;
pub mod model;
pub mod platform;
pub mod report;
pub mod solver;
pub mod welfare;

pub use config::{load_config, load_system, Config};
pub use error::{Error, ErrorKind, Result};
pub use model::{apply_fault, FaultScenario, FaultSet, SystemModel};
pub use solver::{analytic_equilibrium, seek_equilibrium, EquilibriumResult, EquilibriumStatus, SolverConfig};
