//! Finite-horizon risk-sensitive value iteration on the original and folded grids.

mod feasibility;
mod grid;
mod quadrature;
mod risk_neutral;
mod value_iteration;

pub use feasibility::{check_feasibility, closed_form_never_transmit, FeasibilityReport};
pub use grid::{Grid, GridSpec, Space, TRUNCATION_TOLERANCE};
pub use quadrature::{Expectation, GaussHermite, QuadratureRule, QuadratureSpec, MAX_HERMITE_NODES};
pub use risk_neutral::{risk_neutral_value_iterate, RiskNeutralSolution};
pub use value_iteration::{
    log_idle_integral, log_q_idle, log_q_transmit, value_iterate, value_iterate_with, ActionSet,
    LogValueTable, PolicyTable, QTable, Solution, SolveDiagnostics, SolveOptions, ValueTable,
};
