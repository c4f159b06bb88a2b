//! Finite-state discretization of the error/channel chain.

use crate::densities::ChannelMatrix;
use crate::error::{invalid, Result};
use crate::model::{step_error, Action, Channel, ModelParams};

/// Default half-width of the quantized error range, in noise standard deviations.
pub const DEFAULT_BOUND_SIGMAS: f64 = 3.0;

/// Symmetric noise support matching the moments of `N(0, sigma2)`.
#[derive(Debug, Clone, PartialEq)]
pub struct NoiseQuantization {
    /// `(value, probability)` pairs.
    pub points: Vec<(f64, f64)>,
    /// Human-readable description of the scheme, emitted with oracle reports.
    pub scheme: String,
}

impl NoiseQuantization {
    /// Gauss-Hermite (probabilists') nodes and weights scaled by `sigma`.
    ///
    /// An `n`-point rule matches every moment of the normal law up to degree
    /// `2n - 1`: two points give mean and variance, three add the kurtosis.
    pub fn moment_matched(sigma: f64, n: usize) -> Result<Self> {
        let unit: Vec<(f64, f64)> = match n {
            2 => vec![(-1.0, 0.5), (1.0, 0.5)],
            3 => {
                let r = 3f64.sqrt();
                vec![(-r, 1.0 / 6.0), (0.0, 2.0 / 3.0), (r, 1.0 / 6.0)]
            }
            5 => {
                let inner = (5.0 - 10f64.sqrt()).sqrt();
                let outer = (5.0 + 10f64.sqrt()).sqrt();
                // w(x) = n! / (n^2 He_{n-1}(x)^2), He_4(x) = x^4 - 6x^2 + 3
                let w = |x: f64| {
                    let he4 = x.powi(4) - 6.0 * x * x + 3.0;
                    120.0 / (25.0 * he4 * he4)
                };
                vec![
                    (-outer, w(outer)),
                    (-inner, w(inner)),
                    (0.0, w(0.0)),
                    (inner, w(inner)),
                    (outer, w(outer)),
                ]
            }
            _ => return Err(invalid("noise_points", format!("must be 2, 3 or 5, got {n}"))),
        };
        Ok(Self {
            points: unit.into_iter().map(|(z, p)| (sigma * z, p)).collect(),
            scheme: format!(
                "{n}-point Gauss-Hermite, exact moments through degree {}",
                2 * n - 1
            ),
        })
    }
}

/// Finite MDP on `delta_states x {0, 1}`.
///
/// Every transition `a * delta + w` (or `w` after a delivery) is snapped to
/// the nearest state, ties going to the smaller magnitude, so the chain is
/// closed.
#[derive(Debug, Clone)]
pub struct QuantizedChain {
    pub params: ModelParams,
    pub delta_states: Vec<f64>,
    pub noise: NoiseQuantization,
    pub matrix: ChannelMatrix,
    drift_next: Vec<Vec<usize>>,
    reset_next: Vec<usize>,
}

impl QuantizedChain {
    pub fn n_states(&self) -> usize {
        self.delta_states.len()
    }

    pub fn horizon(&self) -> usize {
        self.params.horizon
    }

    /// Index of `delta = 0`.
    pub fn zero_index(&self) -> usize {
        self.delta_states.len() / 2
    }

    /// Nearest state; ties go to the smaller `|delta|`.
    pub fn snap(&self, x: f64) -> usize {
        snap(&self.delta_states, x)
    }

    /// Next state index after noise point `k`.
    #[inline]
    pub fn next_index(&self, i: usize, k: usize, u: Action, c: Channel) -> usize {
        if u.is_transmit() && c.is_good() {
            self.reset_next[k]
        } else {
            self.drift_next[i][k]
        }
    }
}

fn snap(states: &[f64], x: f64) -> usize {
    let mut best = 0;
    for (j, &s) in states.iter().enumerate().skip(1) {
        let dj = (x - s).abs();
        let db = (x - states[best]).abs();
        if dj < db || (dj == db && s.abs() < states[best].abs()) {
            best = j;
        }
    }
    best
}

/// Builds the chain with the default bound `3 sigma`.
pub fn quantize(params: &ModelParams, n_delta: usize, noise_points: usize) -> Result<QuantizedChain> {
    quantize_with_bound(params, n_delta, noise_points, DEFAULT_BOUND_SIGMAS * params.sigma())
}

/// Builds the chain with error states uniform on `[-bound, bound]`.
pub fn quantize_with_bound(
    params: &ModelParams,
    n_delta: usize,
    noise_points: usize,
    bound: f64,
) -> Result<QuantizedChain> {
    params.validate()?;
    if n_delta < 3 || n_delta % 2 == 0 {
        return Err(invalid("n_delta", format!("must be odd and >= 3, got {n_delta}")));
    }
    if !(bound.is_finite() && bound > 0.0) {
        return Err(invalid("bound", format!("must be finite and > 0, got {bound}")));
    }
    let noise = NoiseQuantization::moment_matched(params.sigma(), noise_points)?;
    let half = (n_delta - 1) / 2;
    let h = bound / half as f64;
    let delta_states: Vec<f64> = (0..n_delta)
        .map(|i| {
            let k = i.abs_diff(half);
            let mag = if k == half { bound } else { k as f64 * h };
            if i < half {
                -mag
            } else {
                mag
            }
        })
        .collect();

    let drift_next = delta_states
        .iter()
        .map(|&d| {
            noise
                .points
                .iter()
                .map(|&(w, _)| snap(&delta_states, step_error(d, w, Action::Idle, Channel::Bad, params)))
                .collect()
        })
        .collect();
    let reset_next = noise
        .points
        .iter()
        .map(|&(w, _)| snap(&delta_states, step_error(0.0, w, Action::Transmit, Channel::Good, params)))
        .collect();

    Ok(QuantizedChain {
        params: *params,
        delta_states,
        matrix: ChannelMatrix::from_params(params),
        noise,
        drift_next,
        reset_next,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn params() -> ModelParams {
        ModelParams::new(0.9, 1.0, 1.0, 0.05, 1, 0.3, 0.2).unwrap()
    }

    #[test]
    fn noise_moments_match_the_normal_law() {
        // E[Z^{2k}] = (2k - 1)!!
        let double_factorial = [1.0, 1.0, 3.0, 15.0, 105.0, 945.0];
        for n in [2usize, 3, 5] {
            let q = NoiseQuantization::moment_matched(1.0, n).unwrap();
            let total: f64 = q.points.iter().map(|p| p.1).sum();
            assert_abs_diff_eq!(total, 1.0, epsilon = 1e-15);
            for degree in 1..2 * n {
                let m: f64 = q.points.iter().map(|(z, p)| p * z.powi(degree as i32)).sum();
                let expected = if degree % 2 == 1 { 0.0 } else { double_factorial[degree / 2] };
                assert_abs_diff_eq!(m, expected, epsilon = 1e-12);
            }
        }
        let two = NoiseQuantization::moment_matched(2.0, 2).unwrap();
        assert_eq!(two.points, vec![(-2.0, 0.5), (2.0, 0.5)]);
        assert!(NoiseQuantization::moment_matched(1.0, 4).is_err());
    }

    #[test]
    fn three_state_chain() {
        let chain = quantize_with_bound(&params(), 3, 2, 1.5).unwrap();
        assert_eq!(chain.delta_states, vec![-1.5, 0.0, 1.5]);
        assert_eq!(chain.zero_index(), 1);
        assert!(quantize(&params(), 4, 3).is_err());
        assert!(quantize(&params(), 1, 3).is_err());
        assert!(quantize(&params(), 9, 4).is_err());
    }

    #[test]
    fn snapping_rule() {
        let chain = quantize_with_bound(&params(), 5, 3, 2.0).unwrap();
        // states -2, -1, 0, 1, 2
        assert_eq!(chain.snap(0.5), 2);
        assert_eq!(chain.snap(-0.5), 2);
        assert_eq!(chain.snap(1.5), 3);
        assert_eq!(chain.snap(-1.5), 1);
        assert_eq!(chain.snap(1.51), 4);
        assert_eq!(chain.snap(40.0), 4);
        assert_eq!(chain.snap(-40.0), 0);
    }

    #[test]
    fn transitions_are_closed_and_symmetric() {
        let chain = quantize(&params(), 9, 5).unwrap();
        let n = chain.n_states();
        let m = chain.noise.points.len();
        for i in 0..n {
            for k in 0..m {
                for c in Channel::ALL {
                    for u in Action::ALL {
                        let j = chain.next_index(i, k, u, c);
                        assert!(j < n);
                        // mirrored state and mirrored noise land on the mirrored state
                        let jm = chain.next_index(n - 1 - i, m - 1 - k, u, c);
                        assert_eq!(jm, n - 1 - j);
                    }
                }
            }
        }
    }
}
