//! Closed-loop dynamics of the remote-estimation system.
//!
//! A scalar AR(1) source `x(t+1) = a x(t) + w(t)` is observed by a sensor
//! that decides at every stage whether to send `x(t)` over a two-state
//! Gilbert-Elliott channel. The remote estimator copies the state when a
//! packet gets through and otherwise propagates its previous estimate.
//!
//! Everything here is a pure function of its arguments.

use std::fmt;

use crate::error::{invalid, Error, Result};

/// Channel state. `Bad` drops every packet, `Good` delivers every packet.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Channel {
    Bad = 0,
    Good = 1,
}

impl Channel {
    pub const ALL: [Channel; 2] = [Channel::Bad, Channel::Good];

    #[inline]
    pub fn index(self) -> usize {
        self as usize
    }

    pub fn from_index(i: usize) -> Option<Self> {
        match i {
            0 => Some(Channel::Bad),
            1 => Some(Channel::Good),
            _ => None,
        }
    }

    #[inline]
    pub fn is_good(self) -> bool {
        self == Channel::Good
    }
}

impl fmt::Display for Channel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.index())
    }
}

/// Scheduling decision of the sensor.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Action {
    Idle = 0,
    Transmit = 1,
}

impl Action {
    pub const ALL: [Action; 2] = [Action::Idle, Action::Transmit];

    #[inline]
    pub fn index(self) -> usize {
        self as usize
    }

    #[inline]
    pub fn is_transmit(self) -> bool {
        self == Action::Transmit
    }
}

impl fmt::Display for Action {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.index())
    }
}

/// `u * c`: whether the packet actually reaches the estimator.
#[inline]
pub fn delivered(u: Action, c: Channel) -> bool {
    u.is_transmit() && c.is_good()
}

/// Scalar parameters of one problem instance.
///
/// `horizon` is the last decision stage: a rollout makes decisions at
/// `t = 0..=horizon` and therefore pays `horizon + 1` stage costs.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ModelParams {
    /// Source gain.
    pub a: f64,
    /// Variance of the process noise `w(t)`.
    pub sigma2: f64,
    /// Price of one transmission attempt.
    pub lambda: f64,
    /// Risk-sensitivity parameter.
    pub gamma: f64,
    pub horizon: usize,
    /// Probability of moving from the bad to the good channel state.
    pub p01: f64,
    /// Probability of moving from the good to the bad channel state.
    pub p10: f64,
}

impl ModelParams {
    pub fn new(
        a: f64,
        sigma2: f64,
        lambda: f64,
        gamma: f64,
        horizon: usize,
        p01: f64,
        p10: f64,
    ) -> Result<Self> {
        let params = Self {
            a,
            sigma2,
            lambda,
            gamma,
            horizon,
            p01,
            p10,
        };
        params.validate()?;
        Ok(params)
    }

    pub fn validate(&self) -> Result<()> {
        if !self.a.is_finite() {
            return Err(invalid("a", "must be finite"));
        }
        positive("sigma2", self.sigma2)?;
        positive("lambda", self.lambda)?;
        positive("gamma", self.gamma)?;
        probability("p01", self.p01)?;
        probability("p10", self.p10)?;
        Ok(())
    }

    pub fn sigma(&self) -> f64 {
        self.sigma2.sqrt()
    }

    pub fn with_gamma(self, gamma: f64) -> Self {
        Self { gamma, ..self }
    }

    pub fn with_lambda(self, lambda: f64) -> Self {
        Self { lambda, ..self }
    }

    pub fn with_horizon(self, horizon: usize) -> Self {
        Self { horizon, ..self }
    }

    /// Long-run probability of the good state, `p01 / (p01 + p10)`.
    ///
    /// A frozen chain (`p01 = p10 = 0`) has no unique stationary law; it
    /// reports the good state.
    pub fn stationary_good(&self) -> f64 {
        let total = self.p01 + self.p10;
        if total == 0.0 {
            1.0
        } else {
            self.p01 / total
        }
    }
}

fn positive(name: &'static str, v: f64) -> Result<()> {
    if v.is_finite() && v > 0.0 {
        Ok(())
    } else {
        Err(invalid(name, format!("must be finite and > 0, got {v}")))
    }
}

fn probability(name: &'static str, v: f64) -> Result<()> {
    if (0.0..=1.0).contains(&v) {
        Ok(())
    } else {
        Err(invalid(name, format!("must lie in [0, 1], got {v}")))
    }
}

/// Physical state of the closed loop at the start of a stage.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SystemState {
    pub x: f64,
    pub x_hat_prev: f64,
    pub c: Channel,
}

impl SystemState {
    pub fn mdp_state(&self, params: &ModelParams) -> MdpState {
        MdpState {
            delta: self.x - params.a * self.x_hat_prev,
            c: self.c,
        }
    }
}

/// Sufficient statistic `(delta, c)` with `delta = x(t) - a x_hat(t-1)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MdpState {
    pub delta: f64,
    pub c: Channel,
}

pub fn step_source(x: f64, w: f64, params: &ModelParams) -> f64 {
    params.a * x + w
}

/// Advances the channel with a uniform draw in `[0, 1)`.
pub fn step_channel(c: Channel, draw: f64, params: &ModelParams) -> Result<Channel> {
    if !(0.0..1.0).contains(&draw) {
        return Err(Error::DrawOutOfRange(draw));
    }
    Ok(match c {
        Channel::Bad if draw < params.p01 => Channel::Good,
        Channel::Bad => Channel::Bad,
        Channel::Good if draw < params.p10 => Channel::Bad,
        Channel::Good => Channel::Good,
    })
}

pub fn update_estimate(x_hat_prev: f64, x: f64, u: Action, c: Channel, params: &ModelParams) -> f64 {
    if delivered(u, c) {
        x
    } else {
        params.a * x_hat_prev
    }
}

/// Error recursion: resets to the fresh noise after a delivery, drifts otherwise.
pub fn step_error(delta: f64, w: f64, u: Action, c: Channel, params: &ModelParams) -> f64 {
    if delivered(u, c) {
        w
    } else {
        params.a * delta + w
    }
}

/// Stage cost in MDP coordinates, `lambda u + (1 - u c) delta^2`.
pub fn stage_cost(delta: f64, c: Channel, u: Action, params: &ModelParams) -> f64 {
    let energy = if u.is_transmit() { params.lambda } else { 0.0 };
    if delivered(u, c) {
        energy
    } else {
        energy + delta * delta
    }
}

/// Stage cost in physical coordinates, `lambda u + (x - x_hat)^2`.
pub fn stage_cost_raw(x: f64, x_hat: f64, u: Action, params: &ModelParams) -> f64 {
    let energy = if u.is_transmit() { params.lambda } else { 0.0 };
    let err = x - x_hat;
    energy + err * err
}
