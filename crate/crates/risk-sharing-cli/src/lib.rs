//! Scenario files, state-space construction, result bundles and the
//! command-line front end for the `risk-sharing` solvers.

pub mod builtin;
pub mod bundle;
pub mod cli;
pub mod commands;
pub mod error;
pub mod expr;
pub mod histogram;
pub mod ledger;
pub mod market;
pub mod scenario;
pub mod states;

pub use bundle::{ResultBundle, SCHEMA_VERSION};
pub use cli::run_cli;
pub use commands::{realize, run, HistRequest, Realized, Steps};
pub use error::{IoError, Result};
pub use scenario::{Overrides, Scenario};
pub use states::{build_state_space, States};
