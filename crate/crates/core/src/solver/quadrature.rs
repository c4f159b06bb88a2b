//! Gaussian expectations of tabulated value functions.

use std::f64::consts::PI;

use crate::densities::{psi, varphi};
use crate::error::{invalid, Result};
use crate::numeric::LogSumExp;

use super::grid::{Grid, Space};

/// Largest `2 sigma2 beta` used to tilt the Hermite rule.
const MAX_TILT: f64 = 0.999;

/// Largest Gauss-Hermite rule; the recurrence overflows past about 190 nodes.
pub const MAX_HERMITE_NODES: usize = 150;

/// Integration rule for the Bellman expectations.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum QuadratureRule {
    /// Gauss-Hermite rule centered at the kernel mean; the table is
    /// evaluated off-grid by [`Grid::interpolate`].
    GaussHermite,
    /// Trapezoid rule on the grid nodes themselves. Mass outside the grid
    /// is dropped, so this is only a cross-check for interior nodes.
    Trapezoid,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct QuadratureSpec {
    pub rule: QuadratureRule,
    /// Node count of the Gauss-Hermite rule.
    pub n_nodes: usize,
}

impl Default for QuadratureSpec {
    fn default() -> Self {
        Self {
            rule: QuadratureRule::GaussHermite,
            n_nodes: 64,
        }
    }
}

impl QuadratureSpec {
    pub fn gauss_hermite(n_nodes: usize) -> Result<Self> {
        if !(8..=MAX_HERMITE_NODES).contains(&n_nodes) {
            return Err(invalid(
                "quad_nodes",
                format!("Gauss-Hermite needs 8..={MAX_HERMITE_NODES} nodes, got {n_nodes}"),
            ));
        }
        Ok(Self {
            rule: QuadratureRule::GaussHermite,
            n_nodes,
        })
    }

    pub fn trapezoid() -> Self {
        Self {
            rule: QuadratureRule::Trapezoid,
            n_nodes: 0,
        }
    }
}

/// Gauss-Hermite nodes and weights for `int exp(-x^2) f(x) dx`.
#[derive(Debug, Clone, PartialEq)]
pub struct GaussHermite {
    pub nodes: Vec<f64>,
    pub weights: Vec<f64>,
}

impl GaussHermite {
    /// Newton iteration on the orthonormal Hermite recurrence, seeded with
    /// the usual asymptotic guesses. Nodes come out exactly antisymmetric.
    pub fn new(n: usize) -> Result<Self> {
        if n == 0 || n > MAX_HERMITE_NODES {
            return Err(invalid("quad_nodes", format!("must lie in 1..={MAX_HERMITE_NODES}, got {n}")));
        }
        // pi^(-1/4)
        let pim4 = PI.powf(-0.25);
        let mut nodes = vec![0.0; n];
        let mut weights = vec![0.0; n];
        let half = (n + 1) / 2;
        let nf = n as f64;
        let mut z = 0.0;
        for i in 0..half {
            z = match i {
                0 => (2.0 * nf + 1.0).sqrt() - 1.85575 * (2.0 * nf + 1.0).powf(-1.0 / 6.0),
                1 => z - 1.14 * nf.powf(0.426) / z,
                2 => 1.86 * z - 0.86 * nodes[0],
                3 => 1.91 * z - 0.91 * nodes[1],
                _ => 2.0 * z - nodes[i - 2],
            };
            let mut pp = 0.0;
            for _ in 0..200 {
                let mut p1 = pim4;
                let mut p2 = 0.0;
                for j in 1..=n {
                    let p3 = p2;
                    p2 = p1;
                    let jf = j as f64;
                    p1 = z * (2.0 / jf).sqrt() * p2 - ((jf - 1.0) / jf).sqrt() * p3;
                }
                pp = (2.0 * nf).sqrt() * p2;
                let step = p1 / pp;
                z -= step;
                if step.abs() <= 1e-15 * z.abs().max(1.0) {
                    break;
                }
            }
            if n % 2 == 1 && i == half - 1 {
                z = 0.0;
            }
            nodes[i] = z;
            nodes[n - 1 - i] = -z;
            weights[i] = 2.0 / (pp * pp);
            weights[n - 1 - i] = weights[i];
        }
        Ok(Self { nodes, weights })
    }

    /// Standard-normal form: `E[f(Z)] ~ sum p_k f(z_k)`.
    pub fn standard_normal(&self) -> (Vec<f64>, Vec<f64>) {
        let z = self.nodes.iter().map(|x| std::f64::consts::SQRT_2 * x).collect();
        let p = self.weights.iter().map(|w| w / PI.sqrt()).collect();
        (z, p)
    }
}

/// Expectations `E[f(Y)]`, `Y ~ N(center, sigma2)`, of a table on a grid.
///
/// On the folded grid the table is read at `|Y|`, which is the same as
/// integrating the folded kernel `varphi(y, center)` over `[0, inf)`.
#[derive(Debug, Clone)]
pub struct Expectation<'g> {
    grid: &'g Grid,
    sigma2: f64,
    kind: Kind,
}

#[derive(Debug, Clone)]
enum Kind {
    Hermite {
        offsets: Vec<f64>,
        weights: Vec<f64>,
        log_weights: Vec<f64>,
    },
    Trapezoid {
        log_weights: Vec<f64>,
        weights: Vec<f64>,
    },
}

impl<'g> Expectation<'g> {
    pub fn new(grid: &'g Grid, quad: &QuadratureSpec, sigma2: f64) -> Result<Self> {
        let kind = match quad.rule {
            QuadratureRule::GaussHermite => {
                let spec = QuadratureSpec::gauss_hermite(quad.n_nodes)?;
                let (z, p) = GaussHermite::new(spec.n_nodes)?.standard_normal();
                let sigma = sigma2.sqrt();
                Kind::Hermite {
                    offsets: z.iter().map(|z| sigma * z).collect(),
                    log_weights: p.iter().map(|p| p.ln()).collect(),
                    weights: p,
                }
            }
            QuadratureRule::Trapezoid => {
                let h = grid.spec.spacing();
                let last = grid.len() - 1;
                let weights: Vec<f64> = (0..grid.len())
                    .map(|i| if i == 0 || i == last { 0.5 * h } else { h })
                    .collect();
                Kind::Trapezoid {
                    log_weights: weights.iter().map(|w| w.ln()).collect(),
                    weights,
                }
            }
        };
        Ok(Self { grid, sigma2, kind })
    }

    /// Gaussian density (normalized) of the kernel at grid node `i`.
    fn kernel_at(&self, i: usize, center: f64) -> f64 {
        let y = self.grid.node(i);
        let norm = 1.0 / (2.0 * PI * self.sigma2).sqrt();
        match self.grid.space {
            Space::Original => norm * psi(y - center, self.sigma2),
            Space::Folded => norm * varphi(y, center, self.sigma2),
        }
    }

    /// Slope of the table in `delta^2` between the two outermost nodes, the
    /// same slope the extrapolation uses. Clamped so the tilted law exists.
    fn tail_curvature(&self, log_values: &[f64]) -> f64 {
        let n = self.grid.len();
        let (i1, i0) = (n - 1, n - 2);
        let (x1, x0) = (self.grid.node(i1), self.grid.node(i0));
        let beta = (log_values[i1] - log_values[i0]) / (x1 * x1 - x0 * x0);
        if beta.is_finite() && beta > 0.0 {
            beta.min(MAX_TILT / (2.0 * self.sigma2))
        } else {
            0.0
        }
    }

    /// `ln E[exp(W(Y))]`.
    ///
    /// The Gauss-Hermite path integrates `exp(W(y) - beta y^2)` under the
    /// Gaussian tilted by the tail curvature `beta` of the table, so tables
    /// that are quadratic in `delta` are integrated exactly even when the
    /// tilt moves the mass far from `center`.
    pub fn log_expect_exp(&self, center: f64, log_values: &[f64]) -> f64 {
        let mut acc = LogSumExp::default();
        match &self.kind {
            Kind::Hermite {
                offsets,
                log_weights,
                ..
            } => {
                // N(center, s2) exp(beta y^2) is proportional to N(center / k, s2 / k),
                // k = 1 - 2 s2 beta; the rule runs under that law on the residual.
                let beta = self.tail_curvature(log_values);
                let k = 1.0 - 2.0 * self.sigma2 * beta;
                let mean = center / k;
                let scale = k.sqrt().recip();
                for (dz, lw) in offsets.iter().zip(log_weights) {
                    let y = mean + scale * dz;
                    acc.push(lw + self.grid.interpolate(log_values, y) - beta * y * y);
                }
                return acc.value() + beta * center * center / k - 0.5 * k.ln();
            }
            Kind::Trapezoid { log_weights, .. } => {
                for (i, lw) in log_weights.iter().enumerate() {
                    let k = self.kernel_at(i, center);
                    if k > 0.0 {
                        acc.push(lw + k.ln() + log_values[i]);
                    }
                }
            }
        }
        acc.value()
    }

    /// `E[V(Y)]` in the linear domain.
    pub fn expect(&self, center: f64, values: &[f64]) -> f64 {
        match &self.kind {
            Kind::Hermite { offsets, weights, .. } => offsets
                .iter()
                .zip(weights)
                .map(|(dz, w)| w * self.grid.interpolate(values, center + dz))
                .sum(),
            Kind::Trapezoid { weights, .. } => weights
                .iter()
                .enumerate()
                .map(|(i, w)| w * self.kernel_at(i, center) * values[i])
                .sum(),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::solver::grid::GridSpec;
    use approx::{assert_abs_diff_eq, assert_relative_eq};

    #[test]
    fn hermite_moments() {
        for n in [8, 20, 64, 100, 150] {
            let gh = GaussHermite::new(n).unwrap();
            let sum: f64 = gh.weights.iter().sum();
            assert_relative_eq!(sum, PI.sqrt(), max_relative = 1e-13);
            // exact for polynomials up to degree 2n - 1: int x^{2k} e^{-x^2} = Gamma(k + 1/2)
            let mut expected = PI.sqrt();
            for k in 1..n.min(13) {
                expected *= k as f64 - 0.5;
                let m: f64 = gh.nodes.iter().zip(&gh.weights).map(|(x, w)| w * x.powi(2 * k as i32)).sum();
                assert_relative_eq!(m, expected, max_relative = 1e-11);
            }
            for i in 0..n {
                assert_eq!(gh.nodes[i], -gh.nodes[n - 1 - i]);
            }
        }
    }

    #[test]
    fn hermite_rejects_small_rules() {
        assert!(QuadratureSpec::gauss_hermite(7).is_err());
        assert!(QuadratureSpec::gauss_hermite(8).is_ok());
        assert!(QuadratureSpec::gauss_hermite(150).is_ok());
        assert!(QuadratureSpec::gauss_hermite(151).is_err());
        assert!(GaussHermite::new(151).is_err());
    }

    #[test]
    fn exp_quadratic_expectation() {
        // E[exp(b Y^2)], Y ~ N(m, s2) = (1 - 2 s2 b)^{-1/2} exp(b m^2 / (1 - 2 s2 b))
        let grid = Grid::new(GridSpec::new(6.0, 61).unwrap(), Space::Original);
        let (b, s2) = (0.2, 1.0);
        let table: Vec<f64> = grid.nodes().iter().map(|d| b * d * d).collect();
        let e = Expectation::new(&grid, &QuadratureSpec::default(), s2).unwrap();
        for m in [0.0, 1.3, -4.0] {
            let slack: f64 = 1.0 - 2.0 * s2 * b;
            let exact = -0.5 * slack.ln() + b * m * m / slack;
            assert_abs_diff_eq!(e.log_expect_exp(m, &table), exact, epsilon = 1e-10);
        }
        let folded = Grid::new(grid.spec, Space::Folded);
        let table: Vec<f64> = folded.nodes().iter().map(|d| b * d * d).collect();
        let e = Expectation::new(&folded, &QuadratureSpec::default(), s2).unwrap();
        let slack: f64 = 1.0 - 2.0 * s2 * b;
        assert_abs_diff_eq!(e.log_expect_exp(1.3, &table), -0.5 * slack.ln() + b * 1.69 / slack, epsilon = 1e-10);
    }

    #[test]
    fn trapezoid_interior_expectation() {
        let grid = Grid::new(GridSpec::new(12.0, 2401).unwrap(), Space::Original);
        let ones = vec![1.0; grid.len()];
        let e = Expectation::new(&grid, &QuadratureSpec::trapezoid(), 1.0).unwrap();
        assert_abs_diff_eq!(e.expect(0.5, &ones), 1.0, epsilon = 1e-12);
        let folded = Grid::new(grid.spec, Space::Folded);
        let ones = vec![1.0; folded.len()];
        let e = Expectation::new(&folded, &QuadratureSpec::trapezoid(), 1.0).unwrap();
        assert_abs_diff_eq!(e.expect(0.5, &ones), 1.0, epsilon = 1e-12);
        assert_abs_diff_eq!(e.log_expect_exp(0.5, &vec![0.0; folded.len()]), 0.0, epsilon = 1e-12);
    }
}
