//! Uniform discretization of the error axis and off-grid lookup.

use crate::error::{invalid, Result};
use crate::model::ModelParams;

use super::feasibility::check_feasibility;

/// Two-sided tail probability targeted by [`GridSpec::auto`].
pub const TRUNCATION_TOLERANCE: f64 = 1e-10;

/// Which state space a table lives on.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Space {
    /// Signed errors on `[-delta_max, delta_max]`.
    Original,
    /// Error magnitudes on `[0, delta_max]`.
    Folded,
}

/// Truncation bound and node count of the symmetric grid.
///
/// `n_points` counts the nodes of the original (signed) grid and must be
/// odd so that zero is a node. The folded grid reuses its non-negative half.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GridSpec {
    pub delta_max: f64,
    pub n_points: usize,
}

impl GridSpec {
    pub fn new(delta_max: f64, n_points: usize) -> Result<Self> {
        if !(delta_max.is_finite() && delta_max > 0.0) {
            return Err(invalid("delta_max", format!("must be finite and > 0, got {delta_max}")));
        }
        if n_points < 3 || n_points % 2 == 0 {
            return Err(invalid("n_points", format!("must be odd and >= 3, got {n_points}")));
        }
        Ok(Self { delta_max, n_points })
    }

    /// Picks `delta_max` from the never-transmit envelope at the last
    /// continuation iterate.
    ///
    /// The value grows at most like `exp(beta_T delta^2)`, so against the
    /// Gaussian kernel the integrand behaves like a centered normal with
    /// variance `sigma2 / (1 - 2 sigma2 beta_T)`. The bound leaves less than
    /// [`TRUNCATION_TOLERANCE`] of that mass outside the grid and also covers
    /// the one-step threshold `sqrt(lambda)` plus a noise tail.
    pub fn auto(params: &ModelParams, n_points: usize) -> Result<Self> {
        let report = check_feasibility(params);
        report.ensure_feasible()?;
        let beta_last = report.beta[params.horizon];
        let s_eff = effective_std(params, beta_last);
        let z = two_sided_quantile(TRUNCATION_TOLERANCE);
        let delta_max = (z * s_eff).max(params.lambda.sqrt() + z * params.sigma());
        Self::new(delta_max, n_points)
    }

    /// Half-width in nodes, `(n_points - 1) / 2`.
    pub fn half(&self) -> usize {
        (self.n_points - 1) / 2
    }

    pub fn spacing(&self) -> f64 {
        self.delta_max / self.half() as f64
    }

    /// Mass of the envelope-tilted Gaussian lying beyond `delta_max`.
    pub fn truncation_mass(&self, params: &ModelParams) -> f64 {
        let report = check_feasibility(params);
        match report.beta.get(params.horizon) {
            Some(&beta) if report.feasible => {
                let s = effective_std(params, beta);
                libm::erfc(self.delta_max / (std::f64::consts::SQRT_2 * s))
            }
            _ => f64::INFINITY,
        }
    }
}

fn effective_std(params: &ModelParams, beta: f64) -> f64 {
    (params.sigma2 / (1.0 - 2.0 * params.sigma2 * beta)).sqrt()
}

/// `z` with `P(|Z| > z) = tail` for a standard normal `Z`.
fn two_sided_quantile(tail: f64) -> f64 {
    let (mut lo, mut hi) = (0.0f64, 40.0f64);
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if libm::erfc(mid / std::f64::consts::SQRT_2) > tail {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    0.5 * (lo + hi)
}

/// Materialized node set for one state space.
#[derive(Debug, Clone, PartialEq)]
pub struct Grid {
    pub spec: GridSpec,
    pub space: Space,
    nodes: Vec<f64>,
}

impl Grid {
    pub fn new(spec: GridSpec, space: Space) -> Self {
        let m = spec.half();
        let h = spec.spacing();
        let magnitude = |k: usize| if k == m { spec.delta_max } else { k as f64 * h };
        let nodes = match space {
            Space::Folded => (0..=m).map(magnitude).collect(),
            Space::Original => (0..spec.n_points)
                .map(|i| if i < m { -magnitude(m - i) } else { magnitude(i - m) })
                .collect(),
        };
        Self { spec, space, nodes }
    }

    pub fn nodes(&self) -> &[f64] {
        &self.nodes
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn node(&self, i: usize) -> f64 {
        self.nodes[i]
    }

    /// Index of the node at zero.
    pub fn zero_index(&self) -> usize {
        match self.space {
            Space::Folded => 0,
            Space::Original => self.spec.half(),
        }
    }

    /// Index of the node `k` steps from zero on the side given by `negative`.
    pub fn index_of_step(&self, k: usize, negative: bool) -> usize {
        match self.space {
            Space::Folded => k,
            Space::Original if negative => self.spec.half() - k,
            Space::Original => self.spec.half() + k,
        }
    }

    /// Index of the node mirrored through zero (identity on the folded grid).
    pub fn mirror(&self, i: usize) -> usize {
        match self.space {
            Space::Folded => i,
            Space::Original => self.len() - 1 - i,
        }
    }

    /// Number of steps from zero of node `i`.
    pub fn step_of(&self, i: usize) -> usize {
        match self.space {
            Space::Folded => i,
            Space::Original => i.abs_diff(self.spec.half()),
        }
    }

    /// Evaluates a table stored on this grid at an arbitrary error.
    ///
    /// Interpolation is piecewise linear in `delta^2`, so even functions
    /// that are asymptotically quadratic are reproduced exactly by the
    /// extrapolation beyond `delta_max` (from the last two nodes on the
    /// relevant side). The folded grid is read at `|y|`.
    pub fn interpolate(&self, values: &[f64], y: f64) -> f64 {
        debug_assert_eq!(values.len(), self.len());
        let m = self.spec.half();
        let r = y.abs();
        let k = ((r / self.spec.spacing()).floor() as usize).min(m - 1);
        let negative = y < 0.0;
        let i0 = self.index_of_step(k, negative);
        let i1 = self.index_of_step(k + 1, negative);
        let x0 = self.nodes[i0];
        let x1 = self.nodes[i1];
        let u0 = x0 * x0;
        let u1 = x1 * x1;
        let t = (r * r - u0) / (u1 - u0);
        values[i0] + t * (values[i1] - values[i0])
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    #[test]
    fn spec_validation() {
        assert!(GridSpec::new(5.0, 4).is_err());
        assert!(GridSpec::new(5.0, 1).is_err());
        assert!(GridSpec::new(-1.0, 5).is_err());
        assert!(GridSpec::new(5.0, 3).is_ok());
    }

    #[test]
    fn node_layout() {
        let spec = GridSpec::new(2.0, 9).unwrap();
        let original = Grid::new(spec, Space::Original);
        let folded = Grid::new(spec, Space::Folded);
        assert_eq!(original.nodes(), &[-2.0, -1.5, -1.0, -0.5, 0.0, 0.5, 1.0, 1.5, 2.0]);
        assert_eq!(folded.nodes(), &[0.0, 0.5, 1.0, 1.5, 2.0]);
        assert_eq!(original.zero_index(), 4);
        for i in 0..original.len() {
            assert_eq!(original.node(original.mirror(i)), -original.node(i));
        }
        // spacing 0.01 lands exactly on 1.00
        let fine = Grid::new(GridSpec::new(10.0, 2001).unwrap(), Space::Folded);
        assert_eq!(fine.node(100), 1.0);
    }

    #[test]
    fn quadratic_reproduced_everywhere() {
        let spec = GridSpec::new(3.0, 13).unwrap();
        for space in [Space::Original, Space::Folded] {
            let grid = Grid::new(spec, space);
            let values: Vec<f64> = grid.nodes().iter().map(|d| 0.7 + 0.3 * d * d).collect();
            for y in [-7.3, -3.0, -1.1, -0.2, 0.0, 0.05, 1.7, 2.99, 3.0, 9.0] {
                assert_abs_diff_eq!(grid.interpolate(&values, y), 0.7 + 0.3 * y * y, epsilon = 1e-12);
            }
        }
    }

    #[test]
    fn nodes_are_reproduced() {
        let grid = Grid::new(GridSpec::new(3.0, 13).unwrap(), Space::Original);
        let values: Vec<f64> = grid.nodes().iter().map(|d| d.sin() + 2.0).collect();
        for (i, &d) in grid.nodes().iter().enumerate() {
            assert_abs_diff_eq!(grid.interpolate(&values, d), values[i], epsilon = 1e-14);
        }
    }

    #[test]
    fn quantile() {
        assert_abs_diff_eq!(two_sided_quantile(0.05), 1.959963984540054, epsilon = 1e-9);
        let z = two_sided_quantile(1e-10);
        assert_abs_diff_eq!(libm::erfc(z / std::f64::consts::SQRT_2), 1e-10, epsilon = 1e-16);
    }

    #[test]
    fn auto_bound_meets_tolerance() {
        let params = ModelParams::new(0.9, 1.0, 1.0, 0.05, 5, 0.3, 0.2).unwrap();
        let spec = GridSpec::auto(&params, 801).unwrap();
        assert!(spec.truncation_mass(&params) <= TRUNCATION_TOLERANCE * 1.0001);
        assert!(spec.delta_max > 1.0 + 6.0);
        let infeasible = params.with_gamma(0.6);
        assert!(GridSpec::auto(&infeasible, 801).is_err());
    }
}
