//! Risk-sensitive transmission scheduling for remote state estimation.
//!
//! A sensor watches a scalar AR(1) process and decides at every stage
//! whether to spend energy sending its measurement over a Gilbert-Elliott
//! channel. The scheduler minimizes `E[exp(gamma * total cost)]`, where the
//! stage cost is the transmission price plus the squared estimation error.
//!
//! - [`model`]: closed-loop dynamics and stage costs.
//! - [`densities`]: transition kernels of the original and folded chains.
//! - [`solver`]: log-domain value iteration, feasibility and closed forms.
//! - [`policy`]: threshold extraction and runtime decisions.
//! - [`oracle`]: exact evaluation and policy enumeration on quantized chains.
//! - [`sim`]: seeded Monte Carlo estimation of the risk-sensitive objective.

pub mod densities;
pub mod error;
pub mod model;
pub mod numeric;
pub mod oracle;
pub mod policy;
pub mod sim;
pub mod solver;

pub use error::{Error, Result};
pub use model::{Action, Channel, ModelParams};
