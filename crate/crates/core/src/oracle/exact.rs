//! Exact risk-sensitive evaluation and certification on a quantized chain.
//!
//! Three independent routes to the same number:
//! - [`exact_policy_cost`]: forward propagation of the measure
//!   `E[exp(gamma * cost so far); state]` under a fixed policy;
//! - [`backward_induction`]: the multiplicative Bellman recursion;
//! - [`enumerate_optimal`]: exhaustive search over deterministic Markov
//!   policies, each scored by forward propagation.

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::model::{stage_cost, Action, Channel};

use super::chain::QuantizedChain;

/// Longest horizon accepted by the exact evaluators.
pub const MAX_EXACT_HORIZON: usize = 64;

/// Policies beyond this many decision-point assignments are refused.
pub const DEFAULT_ENUMERATION_BUDGET: u128 = 1 << 22;

/// Deterministic Markov policy on the chain, `rows[t][c][i]` by wall-clock stage.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ChainPolicy {
    pub rows: Vec<[Vec<Action>; 2]>,
}

impl ChainPolicy {
    pub fn uniform(chain: &QuantizedChain, u: Action) -> Self {
        let n = chain.n_states();
        Self {
            rows: vec![[vec![u; n], vec![u; n]]; chain.horizon() + 1],
        }
    }

    pub fn get(&self, t: usize, i: usize, c: Channel) -> Action {
        self.rows[t][c.index()][i]
    }
}

fn check_horizon(chain: &QuantizedChain) -> Result<()> {
    if chain.horizon() > MAX_EXACT_HORIZON {
        return Err(Error::HorizonTooLarge {
            horizon: chain.horizon(),
            limit: MAX_EXACT_HORIZON,
        });
    }
    Ok(())
}

#[inline]
fn cost_factor(chain: &QuantizedChain, i: usize, c: Channel, u: Action) -> f64 {
    (chain.params.gamma * stage_cost(chain.delta_states[i], c, u, &chain.params)).exp()
}

/// `E[exp(gamma * sum_{t=0}^{T} cost)]` of `policy` from `(delta0, c0)`.
///
/// `delta0` is snapped onto the chain. `policy(t, i, c)` receives the state
/// index; see [`QuantizedChain::delta_states`] for its value.
pub fn exact_policy_cost<P>(chain: &QuantizedChain, policy: P, delta0: f64, c0: Channel) -> Result<f64>
where
    P: Fn(usize, usize, Channel) -> Action,
{
    check_horizon(chain)?;
    let n = chain.n_states();
    let mut mu = [vec![0.0; n], vec![0.0; n]];
    mu[c0.index()][chain.snap(delta0)] = 1.0;
    let horizon = chain.horizon();
    let mut total = 0.0;
    for t in 0..=horizon {
        let mut next = [vec![0.0; n], vec![0.0; n]];
        for c in Channel::ALL {
            for i in 0..n {
                let mass = mu[c.index()][i];
                if mass == 0.0 {
                    continue;
                }
                let u = policy(t, i, c);
                let weighted = mass * cost_factor(chain, i, c, u);
                if t == horizon {
                    total += weighted;
                    continue;
                }
                for (k, &(_, pk)) in chain.noise.points.iter().enumerate() {
                    let j = chain.next_index(i, k, u, c);
                    for cn in Channel::ALL {
                        next[cn.index()][j] += weighted * pk * chain.matrix.prob(c, cn);
                    }
                }
            }
        }
        mu = next;
    }
    Ok(total)
}

/// Optimal values and policy from the multiplicative Bellman recursion.
#[derive(Debug, Clone)]
pub struct ChainSolution {
    /// `values[t][c][i]`: optimal `E[exp(gamma * cost from t on)]`, `t = 0..=T+1`.
    pub values: Vec<[Vec<f64>; 2]>,
    pub policy: ChainPolicy,
    /// `|Q(.;1) - Q(.;0)| / Q(.;0)` per decision, for tie detection.
    pub relative_gap: Vec<[Vec<f64>; 2]>,
}

impl ChainSolution {
    pub fn value(&self, i: usize, c: Channel) -> f64 {
        self.values[0][c.index()][i]
    }
}

pub fn backward_induction(chain: &QuantizedChain) -> Result<ChainSolution> {
    check_horizon(chain)?;
    let n = chain.n_states();
    let horizon = chain.horizon();
    let mut values = vec![[vec![0.0; n], vec![0.0; n]]; horizon + 2];
    values[horizon + 1] = [vec![1.0; n], vec![1.0; n]];
    let mut rows = vec![[vec![Action::Idle; n], vec![Action::Idle; n]]; horizon + 1];
    let mut gaps = vec![[vec![0.0; n], vec![0.0; n]]; horizon + 1];
    for t in (0..=horizon).rev() {
        for c in Channel::ALL {
            for i in 0..n {
                let q = Action::ALL.map(|u| {
                    let mut cont = 0.0;
                    for (k, &(_, pk)) in chain.noise.points.iter().enumerate() {
                        let j = chain.next_index(i, k, u, c);
                        for cn in Channel::ALL {
                            cont += pk * chain.matrix.prob(c, cn) * values[t + 1][cn.index()][j];
                        }
                    }
                    cost_factor(chain, i, c, u) * cont
                });
                let transmit = q[1] < q[0];
                values[t][c.index()][i] = if transmit { q[1] } else { q[0] };
                rows[t][c.index()][i] = if transmit { Action::Transmit } else { Action::Idle };
                gaps[t][c.index()][i] = (q[1] - q[0]).abs() / q[0];
            }
        }
    }
    Ok(ChainSolution {
        values,
        policy: ChainPolicy { rows },
        relative_gap: gaps,
    })
}

/// How the last decision stage is searched.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TerminalRule {
    /// Enumerate the last stage like every other stage.
    Enumerate,
    /// The last decision only scales the terminal cost factor of each state,
    /// with non-negative weights, so its best rule is the pointwise minimum.
    Pointwise,
}

#[derive(Debug, Clone)]
pub struct EnumerationResult {
    pub start: (usize, Channel),
    /// Minimum of `E[exp(gamma * total cost)]` over all enumerated policies.
    pub value: f64,
    /// A minimizer; decisions outside the reachable set are idle.
    pub policy: ChainPolicy,
    pub decision_points: usize,
    pub evaluated: u128,
}

/// One reachable `(t, i, c)` with its outgoing mass for each action.
struct Point {
    c: Channel,
    i: usize,
    factor: [f64; 2],
    // (index of the successor within the next stage's point list, probability)
    edges: [Vec<(usize, f64)>; 2],
}

fn reachable_points(chain: &QuantizedChain, start: (usize, Channel)) -> Vec<Vec<Point>> {
    let n = chain.n_states();
    let horizon = chain.horizon();
    let mut stages: Vec<Vec<(usize, Channel)>> = vec![vec![start]];
    for t in 0..horizon {
        let mut seen = [vec![false; n], vec![false; n]];
        for &(i, c) in &stages[t] {
            for u in Action::ALL {
                for (k, &(_, pk)) in chain.noise.points.iter().enumerate() {
                    if pk == 0.0 {
                        continue;
                    }
                    let j = chain.next_index(i, k, u, c);
                    for cn in Channel::ALL {
                        if chain.matrix.prob(c, cn) > 0.0 {
                            seen[cn.index()][j] = true;
                        }
                    }
                }
            }
        }
        let mut next = Vec::new();
        for c in Channel::ALL {
            for (j, &hit) in seen[c.index()].iter().enumerate() {
                if hit {
                    next.push((j, c));
                }
            }
        }
        stages.push(next);
    }

    let mut out = Vec::with_capacity(horizon + 1);
    for t in 0..=horizon {
        let lookup = |j: usize, cn: Channel| -> usize {
            stages[t + 1]
                .iter()
                .position(|&s| s == (j, cn))
                .expect("successor is reachable")
        };
        let points = stages[t]
            .iter()
            .map(|&(i, c)| {
                let edges = Action::ALL.map(|u| {
                    if t == horizon {
                        return Vec::new();
                    }
                    let mut acc: Vec<(usize, f64)> = Vec::new();
                    for (k, &(_, pk)) in chain.noise.points.iter().enumerate() {
                        let j = chain.next_index(i, k, u, c);
                        for cn in Channel::ALL {
                            let p = pk * chain.matrix.prob(c, cn);
                            if p > 0.0 {
                                let target = lookup(j, cn);
                                match acc.iter_mut().find(|e| e.0 == target) {
                                    Some(e) => e.1 += p,
                                    None => acc.push((target, p)),
                                }
                            }
                        }
                    }
                    acc
                });
                Point {
                    c,
                    i,
                    factor: Action::ALL.map(|u| cost_factor(chain, i, c, u)),
                    edges,
                }
            })
            .collect();
        out.push(points);
    }
    out
}

/// Exhaustive search over deterministic Markov policies from one start state.
///
/// Only decisions at states reachable from the start (under any actions)
/// influence the objective, so those are the enumerated bits. Fails with
/// [`Error::BudgetExceeded`] when `2^bits` exceeds `budget`.
pub fn enumerate_optimal(
    chain: &QuantizedChain,
    start: (usize, Channel),
    budget: u128,
    terminal: TerminalRule,
) -> Result<EnumerationResult> {
    check_horizon(chain)?;
    let points = reachable_points(chain, start);
    let horizon = chain.horizon();
    let searched_stages = match terminal {
        TerminalRule::Enumerate => horizon + 1,
        TerminalRule::Pointwise => horizon,
    };
    let offsets: Vec<usize> = points
        .iter()
        .scan(0, |acc, p| {
            let o = *acc;
            *acc += p.len();
            Some(o)
        })
        .collect();
    let bits: usize = points[..searched_stages].iter().map(Vec::len).sum();
    if bits >= 127 || (1u128 << bits) > budget {
        return Err(Error::BudgetExceeded {
            required: if bits >= 127 { u128::MAX } else { 1u128 << bits },
            budget,
        });
    }
    let count = 1u128 << bits;

    let evaluate = |mask: u64| -> f64 {
        let mut mu = vec![1.0];
        let mut total = 0.0;
        for (t, stage) in points.iter().enumerate() {
            let mut next = vec![0.0; points.get(t + 1).map_or(0, Vec::len)];
            for (q, (p, &mass)) in stage.iter().zip(&mu).enumerate() {
                if mass == 0.0 {
                    continue;
                }
                let bit = offsets[t] + q;
                let weighted = if t < searched_stages {
                    let u = ((mask >> bit) & 1) as usize;
                    let w = mass * p.factor[u];
                    for &(j, pr) in &p.edges[u] {
                        next[j] += w * pr;
                    }
                    w
                } else {
                    mass * p.factor[0].min(p.factor[1])
                };
                if t == horizon {
                    total += weighted;
                }
            }
            mu = next;
        }
        total
    };

    let (value, mask) = (0..count as u64)
        .into_par_iter()
        .map(|mask| (evaluate(mask), mask))
        .reduce(
            || (f64::INFINITY, u64::MAX),
            |a, b| if b.0 < a.0 || (b.0 == a.0 && b.1 < a.1) { b } else { a },
        );

    let mut policy = ChainPolicy::uniform(chain, Action::Idle);
    for (t, stage) in points.iter().enumerate() {
        for (q, p) in stage.iter().enumerate() {
            let u = if t < searched_stages {
                (mask >> (offsets[t] + q)) & 1 == 1
            } else {
                p.factor[1] < p.factor[0]
            };
            if u {
                policy.rows[t][p.c.index()][p.i] = Action::Transmit;
            }
        }
    }

    Ok(EnumerationResult {
        start,
        value,
        policy,
        decision_points: bits,
        evaluated: count,
    })
}

/// Backward induction cross-checked by enumeration from every requested start.
#[derive(Debug, Clone)]
pub struct BruteForceReport {
    pub induction: ChainSolution,
    pub enumerations: Vec<EnumerationResult>,
    /// `exact_policy_cost` of the induction policy from each enumerated start.
    pub certified_costs: Vec<f64>,
    /// Largest relative disagreement among the three routes.
    pub max_relative_gap: f64,
}

/// Tolerance for the three-way agreement.
pub const AGREEMENT_TOLERANCE: f64 = 1e-12;

/// Certifies the optimal policy on `delta = 0` starts in both channel states.
pub fn brute_force_optimal(chain: &QuantizedChain, budget: u128) -> Result<BruteForceReport> {
    let starts = Channel::ALL.map(|c| (chain.zero_index(), c));
    brute_force_optimal_from(chain, &starts, budget, TerminalRule::Pointwise)
}

pub fn brute_force_optimal_from(
    chain: &QuantizedChain,
    starts: &[(usize, Channel)],
    budget: u128,
    terminal: TerminalRule,
) -> Result<BruteForceReport> {
    let induction = backward_induction(chain)?;
    let mut enumerations = Vec::with_capacity(starts.len());
    let mut certified_costs = Vec::with_capacity(starts.len());
    let mut max_relative_gap: f64 = 0.0;
    for &(i, c) in starts {
        let e = enumerate_optimal(chain, (i, c), budget, terminal)?;
        let induced = induction.value(i, c);
        let certified = exact_policy_cost(
            chain,
            |t, j, cc| induction.policy.get(t, j, cc),
            chain.delta_states[i],
            c,
        )?;
        for v in [e.value, certified] {
            max_relative_gap = max_relative_gap.max((v - induced).abs() / induced);
        }
        max_relative_gap = max_relative_gap.max((e.value - certified).abs() / certified);
        enumerations.push(e);
        certified_costs.push(certified);
    }
    Ok(BruteForceReport {
        induction,
        enumerations,
        certified_costs,
        max_relative_gap,
    })
}
