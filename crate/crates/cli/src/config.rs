//! Flat `key = value` configuration files.

use std::collections::BTreeMap;
use std::fmt;
use std::path::Path;

use risk_sched::solver::{GridSpec, QuadratureSpec};
use risk_sched::{Channel, ModelParams};

use crate::CliError;

pub const DEFAULT_N_POINTS: usize = 401;
pub const DEFAULT_QUAD_NODES: usize = 64;
pub const DEFAULT_N_ROLLOUTS: usize = 100_000;

const KEYS: [&str; 14] = [
    "a",
    "sigma2",
    "lambda",
    "gamma",
    "T",
    "p01",
    "p10",
    "delta_max",
    "n_points",
    "quad_rule",
    "quad_nodes",
    "seed",
    "n_rollouts",
    "c0",
];

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum DeltaMax {
    Auto,
    Fixed(f64),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum QuadRule {
    GaussHermite,
    Trapezoid,
}

impl fmt::Display for QuadRule {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            QuadRule::GaussHermite => "gauss-hermite",
            QuadRule::Trapezoid => "trapezoid",
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Config {
    pub params: ModelParams,
    pub delta_max: DeltaMax,
    pub n_points: usize,
    pub quad_rule: QuadRule,
    pub quad_nodes: usize,
    pub seed: u64,
    pub n_rollouts: usize,
    /// `None` draws the initial channel from the stationary law.
    pub c0: Option<Channel>,
}

fn config_err(msg: impl Into<String>) -> CliError {
    CliError::Config(msg.into())
}

fn parse_num<T: std::str::FromStr>(key: &str, raw: &str) -> Result<T, CliError> {
    raw.parse()
        .map_err(|_| config_err(format!("`{key}`: cannot parse `{raw}`")))
}

impl Config {
    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| config_err(format!("cannot read {}: {e}", path.display())))?;
        Self::parse(&text)
    }

    pub fn parse(text: &str) -> Result<Self, CliError> {
        let mut raw: BTreeMap<&str, &str> = BTreeMap::new();
        for (lineno, line) in text.lines().enumerate() {
            let line = line.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| config_err(format!("line {}: expected `key = value`", lineno + 1)))?;
            let (key, value) = (key.trim(), value.trim());
            if !KEYS.contains(&key) {
                return Err(config_err(format!("line {}: unknown key `{key}`", lineno + 1)));
            }
            if raw.insert(key, value).is_some() {
                return Err(config_err(format!("line {}: duplicate key `{key}`", lineno + 1)));
            }
        }
        let required = |key: &str| -> Result<&str, CliError> {
            raw.get(key).copied().ok_or_else(|| config_err(format!("missing key `{key}`")))
        };

        let params = ModelParams::new(
            parse_num("a", required("a")?)?,
            parse_num("sigma2", required("sigma2")?)?,
            parse_num("lambda", required("lambda")?)?,
            parse_num("gamma", required("gamma")?)?,
            parse_num("T", required("T")?)?,
            parse_num("p01", required("p01")?)?,
            parse_num("p10", required("p10")?)?,
        )
        .map_err(|e| config_err(e.to_string()))?;

        let delta_max = match raw.get("delta_max").copied() {
            None | Some("auto") => DeltaMax::Auto,
            Some(v) => DeltaMax::Fixed(parse_num("delta_max", v)?),
        };
        let quad_rule = match raw.get("quad_rule").copied() {
            None | Some("gauss-hermite") => QuadRule::GaussHermite,
            Some("trapezoid") => QuadRule::Trapezoid,
            Some(v) => return Err(config_err(format!("`quad_rule`: expected gauss-hermite or trapezoid, got `{v}`"))),
        };
        let c0 = match raw.get("c0").copied() {
            None | Some("stationary") => None,
            Some("0") => Some(Channel::Bad),
            Some("1") => Some(Channel::Good),
            Some(v) => return Err(config_err(format!("`c0`: expected 0, 1 or stationary, got `{v}`"))),
        };
        let opt = |key: &str| raw.get(key).copied();
        let config = Self {
            params,
            delta_max,
            n_points: opt("n_points").map(|v| parse_num("n_points", v)).transpose()?.unwrap_or(DEFAULT_N_POINTS),
            quad_rule,
            quad_nodes: opt("quad_nodes")
                .map(|v| parse_num("quad_nodes", v))
                .transpose()?
                .unwrap_or(DEFAULT_QUAD_NODES),
            seed: opt("seed").map(|v| parse_num("seed", v)).transpose()?.unwrap_or(0),
            n_rollouts: opt("n_rollouts")
                .map(|v| parse_num("n_rollouts", v))
                .transpose()?
                .unwrap_or(DEFAULT_N_ROLLOUTS),
            c0,
        };
        // the auto bound needs a feasible model, which is checked per command
        let probe = match config.delta_max {
            DeltaMax::Auto => 1.0,
            DeltaMax::Fixed(d) => d,
        };
        GridSpec::new(probe, config.n_points).map_err(|e| config_err(e.to_string()))?;
        config.quad_spec()?;
        if config.n_rollouts == 0 {
            return Err(config_err("`n_rollouts` must be positive"));
        }
        Ok(config)
    }

    pub fn grid_spec(&self) -> Result<GridSpec, CliError> {
        let spec = match self.delta_max {
            DeltaMax::Auto => GridSpec::auto(&self.params, self.n_points),
            DeltaMax::Fixed(d) => GridSpec::new(d, self.n_points),
        };
        spec.map_err(CliError::from)
    }

    pub fn quad_spec(&self) -> Result<QuadratureSpec, CliError> {
        match self.quad_rule {
            QuadRule::GaussHermite => QuadratureSpec::gauss_hermite(self.quad_nodes).map_err(|e| config_err(e.to_string())),
            QuadRule::Trapezoid => Ok(QuadratureSpec::trapezoid()),
        }
    }

    /// Resolved `key=value` lines for output headers.
    pub fn provenance(&self) -> Vec<String> {
        let p = &self.params;
        let delta_max = match (self.delta_max, self.grid_spec()) {
            (DeltaMax::Auto, Ok(spec)) => format!("auto ({})", spec.delta_max),
            (DeltaMax::Fixed(d), _) => d.to_string(),
            (DeltaMax::Auto, Err(_)) => "auto".into(),
        };
        vec![
            format!("a={}", p.a),
            format!("sigma2={}", p.sigma2),
            format!("lambda={}", p.lambda),
            format!("gamma={}", p.gamma),
            format!("T={}", p.horizon),
            format!("p01={}", p.p01),
            format!("p10={}", p.p10),
            format!("delta_max={delta_max}"),
            format!("n_points={}", self.n_points),
            format!("quad_rule={}", self.quad_rule),
            format!("quad_nodes={}", self.quad_nodes),
            format!("seed={}", self.seed),
            format!("n_rollouts={}", self.n_rollouts),
            format!("c0={}", self.c0.map_or("stationary".to_string(), |c| c.index().to_string())),
        ]
    }
}
