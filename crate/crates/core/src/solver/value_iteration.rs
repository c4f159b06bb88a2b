//! Log-domain value iteration for the multiplicative Bellman recursion.
//!
//! `W_t = ln V_t` with `W_0 = 0`. One application reads
//!
//! ```text
//! Q(d, c; 0) = gamma d^2      + ln sum_{c+} p[c][c+] E[exp W_t(a d + w, c+)]
//! Q(d, 0; 1) = gamma lambda   + Q(d, 0; 0)
//! Q(d, 1; 1) = gamma lambda   + ln sum_{c+} p[1][c+] E[exp W_t(w, c+)]
//! W_{t+1}    = min(Q(.; 0), Q(.; 1))
//! ```
//!
//! A horizon of `T` means `T + 1` stage costs, so the solver produces
//! `W_0..=W_{T+1}` and one decision rule per application.

use rayon::prelude::*;

use crate::densities::{ChannelMatrix, Normalization};
use crate::error::{Error, Result};
use crate::model::{Action, Channel, ModelParams};
use crate::numeric::log_add_exp;

use super::feasibility::{check_feasibility, FeasibilityReport};
use super::grid::{Grid, GridSpec, Space};
use super::quadrature::{Expectation, QuadratureSpec};

/// Per-stage tables indexed `[t][c][node]`.
#[derive(Debug, Clone, PartialEq)]
pub struct ValueTable {
    stages: Vec<[Vec<f64>; 2]>,
}

/// `W[t][c][i] = ln V_t` at grid node `i`, `t = 0..=horizon + 1`.
pub type LogValueTable = ValueTable;

impl ValueTable {
    pub fn from_stages(stages: Vec<[Vec<f64>; 2]>) -> Self {
        Self { stages }
    }

    /// Number of stored iterates.
    pub fn len(&self) -> usize {
        self.stages.len()
    }

    pub fn is_empty(&self) -> bool {
        self.stages.is_empty()
    }

    pub fn stage(&self, t: usize) -> &[Vec<f64>; 2] {
        &self.stages[t]
    }

    pub fn get(&self, t: usize, c: Channel, i: usize) -> f64 {
        self.stages[t][c.index()][i]
    }

    pub fn last(&self) -> &[Vec<f64>; 2] {
        self.stages.last().expect("value table always holds W_0")
    }

    /// Index of the last iterate.
    pub fn last_index(&self) -> usize {
        self.stages.len() - 1
    }

    pub fn stages(&self) -> &[[Vec<f64>; 2]] {
        &self.stages
    }
}

/// Minimizing actions.
///
/// Row `k` (for `k = 0..=horizon`) is the argmin of the application that
/// reads `W_k` and produces `W_{k+1}`, i.e. the rule used when `k` stages
/// remain after the current one. Wall-clock stage `t` uses row `horizon - t`.
#[derive(Debug, Clone, PartialEq)]
pub struct PolicyTable {
    rows: Vec<[Vec<Action>; 2]>,
}

impl PolicyTable {
    pub fn from_rows(rows: Vec<[Vec<Action>; 2]>) -> Self {
        Self { rows }
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    /// Last decision stage, `len() - 1`.
    pub fn horizon(&self) -> usize {
        self.rows.len() - 1
    }

    pub fn row(&self, k: usize) -> &[Vec<Action>; 2] {
        &self.rows[k]
    }

    pub fn get(&self, k: usize, c: Channel, i: usize) -> Action {
        self.rows[k][c.index()][i]
    }

    /// Row used at wall-clock stage `t`.
    pub fn at_stage(&self, t: usize) -> &[Vec<Action>; 2] {
        &self.rows[self.horizon() - t]
    }

    pub fn rows(&self) -> &[[Vec<Action>; 2]] {
        &self.rows
    }
}

/// Q-values of each application, aligned with [`PolicyTable`] rows.
#[derive(Debug, Clone, PartialEq)]
pub struct QTable {
    pub idle: Vec<[Vec<f64>; 2]>,
    pub transmit: Vec<[Vec<f64>; 2]>,
}

impl QTable {
    /// `|Q(.;1) - Q(.;0)|`, used to exempt ties from policy comparisons.
    pub fn gap(&self, k: usize, c: Channel, i: usize) -> f64 {
        (self.transmit[k][c.index()][i] - self.idle[k][c.index()][i]).abs()
    }
}

/// Which actions the minimization may use.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum ActionSet {
    #[default]
    Both,
    /// Forces `u = 0`; reproduces the never-transmit closed form.
    IdleOnly,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct SolveOptions {
    pub normalization: Normalization,
    pub actions: ActionSet,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SolveDiagnostics {
    pub feasibility: FeasibilityReport,
    /// Envelope mass outside the grid, see [`GridSpec::truncation_mass`].
    pub truncation_mass: f64,
}

#[derive(Debug, Clone)]
pub struct Solution {
    pub params: ModelParams,
    pub grid: Grid,
    pub quad: QuadratureSpec,
    pub options: SolveOptions,
    pub values: LogValueTable,
    pub policy: PolicyTable,
    pub q: QTable,
    pub diagnostics: SolveDiagnostics,
}

impl Solution {
    /// `W_{T+1}` at `(delta = 0, c)`: log of the optimal objective from a fresh start.
    pub fn log_value_at_zero(&self, c: Channel) -> f64 {
        self.values.get(self.values.last_index(), c, self.grid.zero_index())
    }
}

/// Continuation integrals of one iterate, shared by both Q-functions.
pub(crate) struct Continuation<'a> {
    expectation: &'a Expectation<'a>,
    stage: &'a [Vec<f64>; 2],
    matrix: ChannelMatrix,
    log_offset: f64,
}

impl<'a> Continuation<'a> {
    pub(crate) fn new(
        expectation: &'a Expectation<'a>,
        stage: &'a [Vec<f64>; 2],
        params: &ModelParams,
        normalization: Normalization,
    ) -> Self {
        // the quadrature returns expectations under the normalized kernel
        let log_offset =
            normalization.log_factor(params.sigma2) - Normalization::Density.log_factor(params.sigma2);
        Self {
            expectation,
            stage,
            matrix: ChannelMatrix::from_params(params),
            log_offset,
        }
    }

    /// `ln int kernel(y; center) exp(W_t(y, c_next)) dy`.
    pub(crate) fn log_integral(&self, center: f64, c_next: Channel) -> f64 {
        self.expectation.log_expect_exp(center, &self.stage[c_next.index()]) + self.log_offset
    }

    /// `ln sum_{c+} p[c][c+] int kernel(y; center) exp(W_t(y, c+)) dy`.
    pub(crate) fn log_mixture(&self, center: f64, c: Channel) -> f64 {
        Channel::ALL.iter().fold(f64::NEG_INFINITY, |acc, &cn| {
            let p = self.matrix.prob(c, cn);
            if p > 0.0 {
                log_add_exp(acc, p.ln() + self.log_integral(center, cn))
            } else {
                acc
            }
        })
    }
}

/// Idle Q-value in log domain.
pub fn log_q_idle(
    delta: f64,
    c: Channel,
    continuation: &[Vec<f64>; 2],
    params: &ModelParams,
    grid: &Grid,
    quad: &QuadratureSpec,
) -> Result<f64> {
    let e = Expectation::new(grid, quad, params.sigma2)?;
    let cont = Continuation::new(&e, continuation, params, Normalization::Density);
    Ok(params.gamma * delta * delta + cont.log_mixture(params.a * delta, c))
}

/// Transmit Q-value in log domain. Constant in `delta` when `c` is good.
pub fn log_q_transmit(
    delta: f64,
    c: Channel,
    continuation: &[Vec<f64>; 2],
    params: &ModelParams,
    grid: &Grid,
    quad: &QuadratureSpec,
) -> Result<f64> {
    match c {
        Channel::Bad => Ok(params.gamma * params.lambda + log_q_idle(delta, c, continuation, params, grid, quad)?),
        Channel::Good => {
            let e = Expectation::new(grid, quad, params.sigma2)?;
            let cont = Continuation::new(&e, continuation, params, Normalization::Density);
            Ok(params.gamma * params.lambda + cont.log_mixture(0.0, c))
        }
    }
}

/// `ln int kernel(y; a delta) exp(W(y, c_next)) dy` under the normalized
/// kernel; on the folded grid this is the `varphi(y, a delta)` integral.
pub fn log_idle_integral(
    delta: f64,
    c_next: Channel,
    continuation: &[Vec<f64>; 2],
    params: &ModelParams,
    grid: &Grid,
    quad: &QuadratureSpec,
) -> Result<f64> {
    let e = Expectation::new(grid, quad, params.sigma2)?;
    let cont = Continuation::new(&e, continuation, params, Normalization::Density);
    Ok(cont.log_integral(params.a * delta, c_next))
}

/// Solves with normalized kernels and both actions available.
pub fn value_iterate(
    params: &ModelParams,
    grid_spec: &GridSpec,
    quad: &QuadratureSpec,
    space: Space,
) -> Result<Solution> {
    value_iterate_with(params, grid_spec, quad, space, SolveOptions::default())
}

pub fn value_iterate_with(
    params: &ModelParams,
    grid_spec: &GridSpec,
    quad: &QuadratureSpec,
    space: Space,
    options: SolveOptions,
) -> Result<Solution> {
    params.validate()?;
    let feasibility = check_feasibility(params);
    feasibility.ensure_feasible()?;

    let grid = Grid::new(*grid_spec, space);
    let expectation = Expectation::new(&grid, quad, params.sigma2)?;
    let n = grid.len();

    let mut stages = vec![[vec![0.0; n], vec![0.0; n]]];
    let mut rows = Vec::with_capacity(params.horizon + 1);
    let mut q_idle = Vec::with_capacity(params.horizon + 1);
    let mut q_transmit = Vec::with_capacity(params.horizon + 1);
    let gl = params.gamma * params.lambda;

    for k in 0..=params.horizon {
        let cont = Continuation::new(&expectation, &stages[k], params, options.normalization);
        let reset = gl + cont.log_mixture(0.0, Channel::Good);

        let per_node: Vec<[f64; 2]> = grid
            .nodes()
            .par_iter()
            .map(|&d| {
                let quad_cost = params.gamma * d * d;
                let center = params.a * d;
                [
                    quad_cost + cont.log_mixture(center, Channel::Bad),
                    quad_cost + cont.log_mixture(center, Channel::Good),
                ]
            })
            .collect();

        let mut next = [vec![0.0; n], vec![0.0; n]];
        let mut row = [vec![Action::Idle; n], vec![Action::Idle; n]];
        let mut qi = [vec![0.0; n], vec![0.0; n]];
        let mut qt = [vec![0.0; n], vec![0.0; n]];
        for c in Channel::ALL {
            let ci = c.index();
            for i in 0..n {
                let idle = per_node[i][ci];
                let transmit = match c {
                    Channel::Bad => gl + idle,
                    Channel::Good => reset,
                };
                qi[ci][i] = idle;
                qt[ci][i] = transmit;
                // ties go to idling
                let take_transmit = options.actions == ActionSet::Both && transmit < idle;
                let w = if take_transmit { transmit } else { idle };
                if !w.is_finite() {
                    return Err(Error::Overflow { stage: k + 1 });
                }
                next[ci][i] = w;
                if take_transmit {
                    row[ci][i] = Action::Transmit;
                }
            }
        }
        stages.push(next);
        rows.push(row);
        q_idle.push(qi);
        q_transmit.push(qt);
    }

    Ok(Solution {
        params: *params,
        grid,
        quad: *quad,
        options,
        values: ValueTable::from_stages(stages),
        policy: PolicyTable::from_rows(rows),
        q: QTable {
            idle: q_idle,
            transmit: q_transmit,
        },
        diagnostics: SolveDiagnostics {
            truncation_mass: grid_spec.truncation_mass(params),
            feasibility,
        },
    })
}
