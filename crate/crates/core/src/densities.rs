//! Transition kernels of the error/channel chain and of its folded version.
//!
//! The Gaussian factor is the unnormalized `psi(v) = exp(-v^2 / 2 sigma^2)`
//! multiplied by `1 / sqrt(2 pi sigma^2)` when [`Normalization::Density`]
//! is selected. The scheduling policy is the same under both choices.

use std::f64::consts::PI;

use crate::error::{Error, Result};
use crate::model::{delivered, Action, Channel, ModelParams};

/// Whether the Gaussian kernel carries its `1/sqrt(2 pi sigma^2)` factor.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Normalization {
    /// True probability densities.
    #[default]
    Density,
    /// Bare `psi` kernels as written in the Bellman recursion.
    Unnormalized,
}

impl Normalization {
    /// Multiplier applied to `psi`.
    pub fn factor(self, sigma2: f64) -> f64 {
        match self {
            Normalization::Density => 1.0 / (2.0 * PI * sigma2).sqrt(),
            Normalization::Unnormalized => 1.0,
        }
    }

    /// `ln` of [`Normalization::factor`].
    pub fn log_factor(self, sigma2: f64) -> f64 {
        match self {
            Normalization::Density => -0.5 * (2.0 * PI * sigma2).ln(),
            Normalization::Unnormalized => 0.0,
        }
    }
}

/// Gilbert-Elliott transition matrix, `p[c][c_next]`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ChannelMatrix {
    pub p: [[f64; 2]; 2],
}

impl ChannelMatrix {
    pub fn from_params(params: &ModelParams) -> Self {
        Self {
            p: [
                [1.0 - params.p01, params.p01],
                [params.p10, 1.0 - params.p10],
            ],
        }
    }

    #[inline]
    pub fn prob(&self, c: Channel, c_next: Channel) -> f64 {
        self.p[c.index()][c_next.index()]
    }
}

/// Unnormalized Gaussian kernel `exp(-v^2 / (2 sigma^2))`.
#[inline]
pub fn psi(v: f64, sigma2: f64) -> f64 {
    (-v * v / (2.0 * sigma2)).exp()
}

/// `psi(v - s) + psi(v + s)`.
#[inline]
pub fn varphi(v: f64, s: f64, sigma2: f64) -> f64 {
    psi(v - s, sigma2) + psi(v + s, sigma2)
}

/// Mean of the next error given the current state and action.
#[inline]
pub fn kernel_mean(delta: f64, c: Channel, u: Action, params: &ModelParams) -> f64 {
    if delivered(u, c) {
        0.0
    } else {
        params.a * delta
    }
}

/// Density of moving from `(delta, c)` to `(delta_next, c_next)` under `u`,
/// weighted by the channel transition probability.
pub fn trans_density(
    delta_next: f64,
    c_next: Channel,
    delta: f64,
    c: Channel,
    u: Action,
    params: &ModelParams,
    norm: Normalization,
) -> f64 {
    let p = ChannelMatrix::from_params(params).prob(c, c_next);
    let mean = kernel_mean(delta, c, u, params);
    p * norm.factor(params.sigma2) * psi(delta_next - mean, params.sigma2)
}

/// Kernel of the folded chain on `[0, inf) x {0, 1}`.
pub fn folded_density(
    delta_next: f64,
    c_next: Channel,
    delta: f64,
    c: Channel,
    u: Action,
    params: &ModelParams,
    norm: Normalization,
) -> Result<f64> {
    if !(delta_next >= 0.0) {
        return Err(Error::NegativeFoldedState(delta_next));
    }
    if !(delta >= 0.0) {
        return Err(Error::NegativeFoldedState(delta));
    }
    Ok(trans_density(delta_next, c_next, delta, c, u, params, norm)
        + trans_density(-delta_next, c_next, delta, c, u, params, norm))
}
