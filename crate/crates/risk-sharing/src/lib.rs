//! Risk sharing among CARA agents with heterogeneous beliefs.
//!
//! Agents are pairs `(δ_i, P_i)` of risk tolerance and endowment-adjusted
//! subjective beliefs on a finite state space. The crate computes the
//! Arrow-Debreu benchmark, one agent's best probability response, Nash
//! equilibria of the belief-reporting game, their diagnostics, and the limits
//! as risk tolerance grows.

pub mod agents;
pub mod arrow_debreu;
pub mod best_response;
pub mod diagnostics;
pub mod error;
pub mod limits;
pub mod measures;
pub mod nash;
pub mod solve1d;

pub use agents::{cara_utility, certainty_equivalent, endowment_to_beliefs, Agent, Market};
pub use arrow_debreu::{solve_arrow_debreu, utility_gain_vs_ad, ArrowDebreuEquilibrium};
pub use best_response::{response_value, solve_best_response, solve_inner_d, BestResponse};
pub use diagnostics::{compute_diagnostics, NashDiagnostics, Residual, ResidualKind};
pub use error::{Error, Result};
pub use limits::{both_limit_check, limit_report, limiting_arrow_debreu, limiting_gains, limiting_nash, LimitReport};
pub use measures::{
    expect, geometric_mean_measure, normalize_log_density, relative_entropy, variance, Measure, RandomVariable,
    StateSpace,
};
pub use nash::{
    inner_solve, nash_distance, phi_map, solve_nash, solve_nash_with, InnerSolution, NashConfig, NashEquilibrium,
    SimplexPoint,
};
