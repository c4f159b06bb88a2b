//! Brute-force certification on a quantized chain.

mod chain;
mod exact;

pub use chain::{quantize, quantize_with_bound, NoiseQuantization, QuantizedChain, DEFAULT_BOUND_SIGMAS};
pub use exact::{
    backward_induction, brute_force_optimal, brute_force_optimal_from, enumerate_optimal, exact_policy_cost,
    BruteForceReport, ChainPolicy, ChainSolution, EnumerationResult, TerminalRule, AGREEMENT_TOLERANCE,
    DEFAULT_ENUMERATION_BUDGET, MAX_EXACT_HORIZON,
};
