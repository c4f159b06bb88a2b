//! Additive (risk-neutral) Bellman recursion on the same grid and kernels.
//!
//! `V_{t+1}(d, c) = min_u [ cost(d, c, u) + E V_t(next) ]` with `V_0 = 0`.
//! The exponential objective divided by `gamma` approaches these values as
//! `gamma -> 0`, with a first-order correction of half the cost variance.

use crate::densities::ChannelMatrix;
use crate::error::{Error, Result};
use crate::model::{Action, Channel, ModelParams};

use super::grid::{Grid, GridSpec, Space};
use super::quadrature::{Expectation, QuadratureSpec};
use super::value_iteration::{PolicyTable, ValueTable};

#[derive(Debug, Clone)]
pub struct RiskNeutralSolution {
    pub grid: Grid,
    /// Additive values `V^RN_t`, `t = 0..=horizon + 1`.
    pub values: ValueTable,
    pub policy: PolicyTable,
}

pub fn risk_neutral_value_iterate(
    params: &ModelParams,
    grid_spec: &GridSpec,
    quad: &QuadratureSpec,
    space: Space,
) -> Result<RiskNeutralSolution> {
    params.validate()?;
    let grid = Grid::new(*grid_spec, space);
    let expectation = Expectation::new(&grid, quad, params.sigma2)?;
    let matrix = ChannelMatrix::from_params(params);
    let n = grid.len();

    let mixture = |stage: &[Vec<f64>; 2], center: f64, c: Channel| -> f64 {
        Channel::ALL
            .iter()
            .map(|&cn| {
                let p = matrix.prob(c, cn);
                if p > 0.0 {
                    p * expectation.expect(center, &stage[cn.index()])
                } else {
                    0.0
                }
            })
            .sum()
    };

    let mut stages = vec![[vec![0.0; n], vec![0.0; n]]];
    let mut rows = Vec::with_capacity(params.horizon + 1);
    for k in 0..=params.horizon {
        let prev = &stages[k];
        let reset = params.lambda + mixture(prev, 0.0, Channel::Good);
        let mut next = [vec![0.0; n], vec![0.0; n]];
        let mut row = [vec![Action::Idle; n], vec![Action::Idle; n]];
        for c in Channel::ALL {
            let ci = c.index();
            for (i, &d) in grid.nodes().iter().enumerate() {
                let idle = d * d + mixture(prev, params.a * d, c);
                let transmit = match c {
                    Channel::Bad => params.lambda + idle,
                    Channel::Good => reset,
                };
                let (v, u) = if transmit < idle {
                    (transmit, Action::Transmit)
                } else {
                    (idle, Action::Idle)
                };
                if !v.is_finite() {
                    return Err(Error::Overflow { stage: k + 1 });
                }
                next[ci][i] = v;
                row[ci][i] = u;
            }
        }
        stages.push(next);
        rows.push(row);
    }

    Ok(RiskNeutralSolution {
        grid,
        values: ValueTable::from_stages(stages),
        policy: PolicyTable::from_rows(rows),
    })
}
