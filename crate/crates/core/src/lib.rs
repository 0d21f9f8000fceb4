//! Finite-volume simulator for a four-species haptotaxis-chemotaxis model of
//! stem-cell differentiation: mesenchymal cells `c1`, chondrocytes `c2`,
//! culture medium `chi` and extracellular matrix `tau`.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod config;
pub mod diagnostics;
pub mod error;
pub mod grid;
pub mod model;
pub mod oracle;
pub mod output;
pub mod scenario;
pub mod stepper;
pub mod sweep;
pub mod weakform;

pub use config::{parse_config, RunConfig};
pub use error::{Error, Result};
pub use grid::{Field, Grid};
pub use model::{DoseMode, Model, ModelParams, RateFunction, SupplySchedule};
pub use scenario::Scenario;
pub use stepper::{run, SimState, StepControl};
