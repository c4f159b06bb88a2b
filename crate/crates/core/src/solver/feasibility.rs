//! Integrability of the value iterates and the never-transmit closed form.
//!
//! With `u = 0` forever the iterates are exactly `K_t exp(beta_t delta^2)`,
//! using `E[exp(b (a d + w)^2)] = (1 - 2 sigma2 b)^{-1/2} exp(a^2 b d^2 / (1 - 2 sigma2 b))`
//! for `w ~ N(0, sigma2)`. This envelope also bounds the growth of every
//! other iterate, so it decides whether the Gaussian integrals converge.

use crate::error::{Error, Result};
use crate::model::ModelParams;

/// Outcome of the `beta` recursion.
#[derive(Debug, Clone, PartialEq)]
pub struct FeasibilityReport {
    /// `beta[t]` for `t = 0..`, up to `horizon + 1` when feasible, otherwise
    /// up to and including the first violating stage.
    pub beta: Vec<f64>,
    /// `ln K_t`, aligned with `beta`.
    pub log_k: Vec<f64>,
    pub feasible: bool,
    pub first_violation_stage: Option<usize>,
}

impl FeasibilityReport {
    pub fn ensure_feasible(&self) -> Result<()> {
        match self.first_violation_stage {
            Some(stage) => Err(Error::Infeasible {
                stage,
                beta: self.beta[stage],
            }),
            None => Ok(()),
        }
    }
}

/// Runs `beta_{t+1} = gamma + a^2 beta_t / (1 - 2 sigma2 beta_t)` from `beta_0 = 0`.
///
/// Feasible iff `2 sigma2 beta_t < 1` for every `t <= horizon`, which is what
/// the `horizon + 1` Bellman applications need.
pub fn check_feasibility(params: &ModelParams) -> FeasibilityReport {
    let two_s2 = 2.0 * params.sigma2;
    let mut beta = vec![0.0];
    let mut log_k = vec![0.0];
    for t in 0..=params.horizon {
        let b = beta[t];
        let slack = 1.0 - two_s2 * b;
        if !(slack > 0.0) {
            return FeasibilityReport {
                beta,
                log_k,
                feasible: false,
                first_violation_stage: Some(t),
            };
        }
        beta.push(params.gamma + params.a * params.a * b / slack);
        log_k.push(log_k[t] - 0.5 * slack.ln());
    }
    FeasibilityReport {
        beta,
        log_k,
        feasible: true,
        first_violation_stage: None,
    }
}

/// `ln V_t(delta)` for the policy that never transmits (any channel state).
pub fn closed_form_never_transmit(params: &ModelParams, delta: f64, t: usize) -> Result<f64> {
    let report = check_feasibility(&params.with_horizon(t.max(1) - 1));
    if t > 0 {
        report.ensure_feasible()?;
    }
    Ok(report.log_k[t] + report.beta[t] * delta * delta)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn params() -> ModelParams {
        ModelParams::new(0.9, 1.0, 1.0, 0.05, 5, 0.3, 0.2).unwrap()
    }

    #[test]
    fn beta_recursion() {
        let r = check_feasibility(&params());
        assert!(r.feasible);
        assert_eq!(r.beta[0], 0.0);
        assert_abs_diff_eq!(r.beta[1], 0.05, epsilon = 1e-15);
        assert_abs_diff_eq!(r.beta[2], 0.095, epsilon = 1e-15);
        assert_eq!(r.beta.len(), 7);
        for g in [0.01, 0.3] {
            assert_eq!(check_feasibility(&params().with_gamma(g)).beta[1], g);
        }
    }

    #[test]
    fn infeasible_at_stage_one() {
        for gamma in [0.5, 0.6, 2.0] {
            let r = check_feasibility(&params().with_gamma(gamma));
            assert!(!r.feasible);
            assert_eq!(r.first_violation_stage, Some(1));
            assert!(matches!(r.ensure_feasible(), Err(Error::Infeasible { stage: 1, .. })));
        }
        // T = 0 needs only beta_0
        assert!(check_feasibility(&params().with_gamma(0.6).with_horizon(0)).feasible);
    }

    #[test]
    fn closed_form_values() {
        let p = params();
        for d in [-2.0, 0.0, 1.5] {
            assert_eq!(closed_form_never_transmit(&p, d, 0).unwrap(), 0.0);
            assert_abs_diff_eq!(closed_form_never_transmit(&p, d, 1).unwrap(), 0.05 * d * d, epsilon = 1e-15);
        }
        assert_abs_diff_eq!(
            closed_form_never_transmit(&p, 1.0, 2).unwrap(),
            0.14768025782891314,
            epsilon = 1e-14
        );
        assert!(closed_form_never_transmit(&p.with_gamma(0.6), 0.0, 2).is_err());
    }

    /// Two-stage Gaussian integral evaluated by brute-force quadrature.
    #[test]
    fn closed_form_matches_numerical_integration() {
        let p = params();
        let (gamma, a) = (p.gamma, p.a);
        let delta: f64 = 1.0;
        // V_2(d) = exp(g d^2) E[exp(g (a d + w)^2)]
        let h = 1e-3;
        let mut acc = 0.0;
        let mut w = -30.0;
        while w <= 30.0 {
            let y: f64 = a * delta + w;
            acc += h * (-w * w / 2.0).exp() / (2.0 * std::f64::consts::PI).sqrt() * (gamma * y * y).exp();
            w += h;
        }
        let numeric = gamma * delta * delta + acc.ln();
        assert_abs_diff_eq!(closed_form_never_transmit(&p, delta, 2).unwrap(), numeric, epsilon = 1e-9);
    }
}
