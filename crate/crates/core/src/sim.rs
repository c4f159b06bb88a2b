//! Seeded Monte Carlo rollouts of the closed loop.
//!
//! Every rollout draws from its own ChaCha8 stream: the seed picks the key
//! and the rollout index picks the stream, so rollout `k` of a batch is the
//! same no matter how the batch is split across threads.

use std::io::Write;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;

use crate::error::Result;
use crate::model::{stage_cost_raw, step_channel, step_source, update_estimate, Action, Channel, ModelParams};
use crate::numeric::LogSumExp;
use crate::policy::SchedulingPolicy;

/// Rollouts per parallel work item; also the fixed merge granularity.
const CHUNK: usize = 4096;

/// Share of the top samples checked by the tail diagnostic.
pub const TAIL_QUANTILE: f64 = 1e-3;

/// Tail share above which an estimate is flagged as unreliable.
pub const TAIL_SHARE_LIMIT: f64 = 0.5;

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct RolloutOptions {
    /// Channel state at `t = 0`; drawn from the stationary law when `None`.
    pub initial_channel: Option<Channel>,
    /// Test hook: every Gaussian draw (including `x(0)`) is zero.
    pub zero_noise: bool,
}

/// One closed-loop trajectory, `t = 0..=T`.
#[derive(Debug, Clone, PartialEq)]
pub struct SimTrace {
    pub seed: u64,
    pub stream: u64,
    pub x: Vec<f64>,
    pub x_hat: Vec<f64>,
    pub delta: Vec<f64>,
    pub c: Vec<Channel>,
    pub u: Vec<Action>,
    pub cost: Vec<f64>,
}

impl SimTrace {
    pub fn len(&self) -> usize {
        self.x.len()
    }

    pub fn is_empty(&self) -> bool {
        self.x.is_empty()
    }

    pub fn total_cost(&self) -> f64 {
        self.cost.iter().sum()
    }

    /// Columns `t,x,x_hat,delta,c,u,cost`, preceded by `# ` comment lines.
    pub fn write_csv<W: Write>(&self, mut out: W, comments: &[String]) -> std::io::Result<()> {
        for line in comments {
            writeln!(out, "# {line}")?;
        }
        writeln!(out, "# seed={} stream={}", self.seed, self.stream)?;
        writeln!(out, "t,x,x_hat,delta,c,u,cost")?;
        for t in 0..self.len() {
            writeln!(
                out,
                "{t},{},{},{},{},{},{}",
                self.x[t],
                self.x_hat[t],
                self.delta[t],
                self.c[t].index(),
                self.u[t].index(),
                self.cost[t]
            )?;
        }
        Ok(())
    }
}

fn rng_for(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

/// Stream 0 of `seed`.
pub fn rollout<P: SchedulingPolicy + ?Sized>(
    params: &ModelParams,
    policy: &P,
    seed: u64,
    options: RolloutOptions,
) -> Result<SimTrace> {
    rollout_stream(params, policy, seed, 0, options)
}

/// Simulates `t = 0..=T` starting from `delta(0) = 0` with `x(0) ~ N(0, 1)`.
pub fn rollout_stream<P: SchedulingPolicy + ?Sized>(
    params: &ModelParams,
    policy: &P,
    seed: u64,
    stream: u64,
    options: RolloutOptions,
) -> Result<SimTrace> {
    params.validate()?;
    let mut rng = rng_for(seed, stream);
    let n = params.horizon + 1;
    let normal = |rng: &mut ChaCha8Rng| -> f64 {
        let z: f64 = rng.sample(StandardNormal);
        if options.zero_noise {
            0.0
        } else {
            z
        }
    };

    // x_hat(-1) is chosen so that a * x_hat(-1) == x(0) exactly
    let z0 = normal(&mut rng);
    let (mut x, mut x_hat_prev) = if params.a == 0.0 {
        (0.0, 0.0)
    } else {
        let x_hat_prev = z0 / params.a;
        (params.a * x_hat_prev, x_hat_prev)
    };
    let mut c = match options.initial_channel {
        Some(c) => c,
        None => {
            if rng.random::<f64>() < params.stationary_good() {
                Channel::Good
            } else {
                Channel::Bad
            }
        }
    };

    let mut trace = SimTrace {
        seed,
        stream,
        x: Vec::with_capacity(n),
        x_hat: Vec::with_capacity(n),
        delta: Vec::with_capacity(n),
        c: Vec::with_capacity(n),
        u: Vec::with_capacity(n),
        cost: Vec::with_capacity(n),
    };
    for t in 0..n {
        let delta = x - params.a * x_hat_prev;
        let u = policy.decide(t, delta, c);
        let x_hat = update_estimate(x_hat_prev, x, u, c, params);
        trace.x.push(x);
        trace.x_hat.push(x_hat);
        trace.delta.push(delta);
        trace.c.push(c);
        trace.u.push(u);
        trace.cost.push(stage_cost_raw(x, x_hat, u, params));
        if t + 1 < n {
            let w = params.sigma() * normal(&mut rng);
            x = step_source(x, w, params);
            c = step_channel(c, rng.random::<f64>(), params)?;
            x_hat_prev = x_hat;
        }
    }
    Ok(trace)
}

/// Total cost of one rollout without building a trace.
fn rollout_total<P: SchedulingPolicy + ?Sized>(
    params: &ModelParams,
    policy: &P,
    seed: u64,
    stream: u64,
    options: RolloutOptions,
) -> Result<f64> {
    Ok(rollout_stream(params, policy, seed, stream, options)?.total_cost())
}

/// Streaming mean and variance (Welford), mergeable in a fixed order.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct Welford {
    pub n: u64,
    pub mean: f64,
    m2: f64,
}

impl Welford {
    pub fn push(&mut self, x: f64) {
        self.n += 1;
        let d = x - self.mean;
        self.mean += d / self.n as f64;
        self.m2 += d * (x - self.mean);
    }

    pub fn merge(&mut self, other: &Welford) {
        if other.n == 0 {
            return;
        }
        if self.n == 0 {
            *self = *other;
            return;
        }
        let n = self.n + other.n;
        let d = other.mean - self.mean;
        self.mean += d * other.n as f64 / n as f64;
        self.m2 += other.m2 + d * d * (self.n as f64 * other.n as f64) / n as f64;
        self.n = n;
    }

    /// Unbiased sample variance; zero for fewer than two samples.
    pub fn variance(&self) -> f64 {
        if self.n < 2 {
            0.0
        } else {
            self.m2 / (self.n - 1) as f64
        }
    }
}

/// Estimate of `ln E[exp(gamma * total cost)]`.
#[derive(Debug, Clone, PartialEq)]
pub struct RiskEstimate {
    pub log_mean: f64,
    /// Delta-method standard error of `log_mean`.
    pub se_log: f64,
    pub n: usize,
    /// Fraction of the sample mean carried by the top `TAIL_QUANTILE` samples.
    pub tail_share: f64,
    pub heavy_tail: bool,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MeanVariance {
    pub mean: f64,
    pub variance: f64,
    pub n: usize,
}

/// Both estimates from one batch of rollouts.
#[derive(Debug, Clone, PartialEq)]
pub struct BatchEstimate {
    pub risk: RiskEstimate,
    pub additive: MeanVariance,
}

#[derive(Default)]
struct Chunk {
    first: LogSumExp,
    second: LogSumExp,
    welford: Welford,
    scaled: Vec<f64>,
}

/// Runs rollouts `0..n_rollouts` of `seed` and aggregates them.
pub fn estimate<P: SchedulingPolicy + ?Sized>(
    params: &ModelParams,
    policy: &P,
    n_rollouts: usize,
    seed: u64,
    options: RolloutOptions,
) -> Result<BatchEstimate> {
    params.validate()?;
    if n_rollouts == 0 {
        return Err(crate::error::invalid("n_rollouts", "must be positive"));
    }
    let gamma = params.gamma;
    let n_chunks = n_rollouts.div_ceil(CHUNK);
    let chunks: Vec<Chunk> = (0..n_chunks)
        .into_par_iter()
        .map(|k| -> Result<Chunk> {
            let mut chunk = Chunk::default();
            let end = ((k + 1) * CHUNK).min(n_rollouts);
            for stream in k * CHUNK..end {
                let total = rollout_total(params, policy, seed, stream as u64, options)?;
                let s = gamma * total;
                chunk.first.push(s);
                chunk.second.push(2.0 * s);
                chunk.welford.push(total);
                chunk.scaled.push(s);
            }
            Ok(chunk)
        })
        .collect::<Result<_>>()?;

    let mut first = LogSumExp::default();
    let mut second = LogSumExp::default();
    let mut welford = Welford::default();
    let mut scaled = Vec::with_capacity(n_rollouts);
    for chunk in &chunks {
        first.merge(&chunk.first);
        second.merge(&chunk.second);
        welford.merge(&chunk.welford);
        scaled.extend_from_slice(&chunk.scaled);
    }

    let n = n_rollouts as f64;
    let log_n = n.ln();
    let log_mean = first.value() - log_n;
    // E[Y^2] / E[Y]^2 - 1, with Y = exp(gamma C)
    let ratio = (second.value() + log_n - 2.0 * first.value()).exp();
    let rel_var = if n_rollouts > 1 {
        ((ratio - 1.0) * n / (n - 1.0)).max(0.0)
    } else {
        0.0
    };
    let se_log = (rel_var / n).sqrt();

    let top = ((n * TAIL_QUANTILE).ceil() as usize).max(1);
    let split = n_rollouts - top;
    scaled.select_nth_unstable_by(split, |a, b| a.total_cmp(b));
    let mut tail = LogSumExp::default();
    for &s in &scaled[split..] {
        tail.push(s);
    }
    let tail_share = (tail.value() - first.value()).exp();

    Ok(BatchEstimate {
        risk: RiskEstimate {
            log_mean,
            se_log,
            n: n_rollouts,
            tail_share,
            heavy_tail: tail_share > TAIL_SHARE_LIMIT,
        },
        additive: MeanVariance {
            mean: welford.mean,
            variance: welford.variance(),
            n: n_rollouts,
        },
    })
}

/// Log-domain estimate of the risk-sensitive objective.
pub fn estimate_risk_objective<P: SchedulingPolicy + ?Sized>(
    params: &ModelParams,
    policy: &P,
    n_rollouts: usize,
    seed: u64,
    options: RolloutOptions,
) -> Result<RiskEstimate> {
    Ok(estimate(params, policy, n_rollouts, seed, options)?.risk)
}

/// Sample mean and variance of the additive total cost.
pub fn estimate_mean_variance<P: SchedulingPolicy + ?Sized>(
    params: &ModelParams,
    policy: &P,
    n_rollouts: usize,
    seed: u64,
    options: RolloutOptions,
) -> Result<MeanVariance> {
    Ok(estimate(params, policy, n_rollouts, seed, options)?.additive)
}
