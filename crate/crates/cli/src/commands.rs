//! Subcommand implementations. Every table is CSV behind a provenance header.

use std::fs::File;
use std::io::{self, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use risk_sched::oracle::{brute_force_optimal, exact_policy_cost, quantize, AGREEMENT_TOLERANCE};
use risk_sched::policy::{decide, extract_thresholds, AlwaysTransmit, NeverTransmit, SchedulingPolicy, ThresholdSchedule};
use risk_sched::sim::{estimate, RolloutOptions};
use risk_sched::solver::{
    check_feasibility, risk_neutral_value_iterate, value_iterate, FeasibilityReport, Solution, Space,
};
use risk_sched::{Action, Channel, ModelParams};

use crate::config::Config;
use crate::{Axis, CliError, SpaceArg};

const TIE_TOLERANCE: f64 = 1e-12;

fn header(out: &mut dyn Write, command: &str, config: &Config, extra: &[String]) -> io::Result<()> {
    writeln!(out, "# risk-sched {}", env!("CARGO_PKG_VERSION"))?;
    writeln!(out, "# command={command}")?;
    for line in config.provenance().iter().chain(extra) {
        writeln!(out, "# {line}")?;
    }
    Ok(())
}

fn open_out(path: Option<&Path>) -> Result<Box<dyn Write>, CliError> {
    Ok(match path {
        Some(p) => Box::new(BufWriter::new(File::create(p)?)),
        None => Box::new(BufWriter::new(io::stdout().lock())),
    })
}

fn print_beta_trace(report: &FeasibilityReport, sigma2: f64) {
    eprintln!("beta recursion (feasible iff 2*sigma2*beta_t < 1 for t <= T):");
    for (t, b) in report.beta.iter().enumerate() {
        eprintln!("  t={t} beta={b} 2*sigma2*beta={}", 2.0 * sigma2 * b);
    }
}

/// Feasibility gate shared by every command that solves.
fn require_feasible(params: &ModelParams) -> Result<FeasibilityReport, CliError> {
    let report = check_feasibility(params);
    if let Some(stage) = report.first_violation_stage {
        print_beta_trace(&report, params.sigma2);
        return Err(CliError::Infeasible(format!("infeasible at stage {stage}")));
    }
    Ok(report)
}

fn solve_config(config: &Config, params: &ModelParams, space: Space) -> Result<Solution, CliError> {
    require_feasible(params)?;
    let spec = match config.delta_max {
        crate::config::DeltaMax::Auto => risk_sched::solver::GridSpec::auto(params, config.n_points)?,
        crate::config::DeltaMax::Fixed(d) => risk_sched::solver::GridSpec::new(d, config.n_points)?,
    };
    Ok(value_iterate(params, &spec, &config.quad_spec()?, space)?)
}

fn action_bit(u: Action) -> u8 {
    u.index() as u8
}

pub fn solve(config: &Config, dir: &Path, space: SpaceArg, plot_data: bool) -> Result<(), CliError> {
    let space = match space {
        SpaceArg::Folded => Space::Folded,
        SpaceArg::Original => Space::Original,
    };
    let sol = solve_config(config, &config.params, space)?;
    let schedule = extract_thresholds(&sol.policy, &sol.grid)?;
    std::fs::create_dir_all(dir)?;
    let extra = vec![
        format!("space={}", if space == Space::Folded { "folded" } else { "original" }),
        format!("truncation_mass={:e}", sol.diagnostics.truncation_mass),
    ];
    let create = |name: &str| -> Result<BufWriter<File>, CliError> {
        let mut f = BufWriter::new(File::create(dir.join(name))?);
        header(&mut f, "solve", config, &extra)?;
        Ok(f)
    };
    let nodes = sol.grid.nodes();
    let node_columns: String = (0..nodes.len()).map(|i| format!(",n{i}")).collect();

    let mut f = create("grid.csv")?;
    writeln!(f, "node,delta")?;
    for (i, d) in nodes.iter().enumerate() {
        writeln!(f, "{i},{d}")?;
    }
    f.flush()?;

    let mut f = create("values.csv")?;
    writeln!(f, "iterate,channel{node_columns}")?;
    for (k, stage) in sol.values.stages().iter().enumerate() {
        for c in Channel::ALL {
            let row: String = stage[c.index()].iter().map(|w| format!(",{w}")).collect();
            writeln!(f, "{k},{}{row}", c.index())?;
        }
    }
    f.flush()?;

    let mut f = create("policy.csv")?;
    writeln!(f, "stage,channel{node_columns}")?;
    for t in 0..=config.params.horizon {
        let row = sol.policy.at_stage(t);
        for c in Channel::ALL {
            let cells: String = row[c.index()].iter().map(|&u| format!(",{}", action_bit(u))).collect();
            writeln!(f, "{t},{}{cells}", c.index())?;
        }
    }
    f.flush()?;

    let mut f = BufWriter::new(File::create(dir.join("thresholds.csv"))?);
    let mut comments = vec![
        format!("risk-sched {}", env!("CARGO_PKG_VERSION")),
        "command=solve".to_string(),
    ];
    comments.extend(config.provenance());
    comments.extend(extra.iter().cloned());
    schedule.write_csv(&mut f, &comments)?;
    f.flush()?;

    let mut f = create("feasibility.csv")?;
    writeln!(f, "stage,beta,slack,log_k")?;
    let report = &sol.diagnostics.feasibility;
    for (t, (b, lk)) in report.beta.iter().zip(&report.log_k).enumerate() {
        writeln!(f, "{t},{b},{},{lk}", 1.0 - 2.0 * config.params.sigma2 * b)?;
    }
    f.flush()?;

    if plot_data {
        let mut f = create("values_long.csv")?;
        writeln!(f, "iterate,channel,delta,log_value")?;
        for (k, stage) in sol.values.stages().iter().enumerate() {
            for c in Channel::ALL {
                for (d, w) in nodes.iter().zip(&stage[c.index()]) {
                    writeln!(f, "{k},{},{d},{w}", c.index())?;
                }
            }
        }
        f.flush()?;
        let mut f = create("policy_long.csv")?;
        writeln!(f, "stage,channel,delta,action")?;
        for t in 0..=config.params.horizon {
            let row = sol.policy.at_stage(t);
            for c in Channel::ALL {
                for (d, &u) in nodes.iter().zip(&row[c.index()]) {
                    writeln!(f, "{t},{},{d},{}", c.index(), action_bit(u))?;
                }
            }
        }
        f.flush()?;
    }

    println!(
        "solved T={} on {} {} grid nodes (delta_max={}), truncation mass {:e}; tables in {}",
        config.params.horizon,
        nodes.len(),
        if space == Space::Folded { "folded" } else { "original" },
        sol.grid.spec.delta_max,
        sol.diagnostics.truncation_mass,
        dir.display()
    );
    Ok(())
}

#[derive(Debug, Clone, PartialEq)]
pub enum PolicySource {
    Solved,
    ThresholdFile(PathBuf),
    Idle,
    Always,
}

impl PolicySource {
    pub fn parse(name: &str, thresholds: Option<PathBuf>) -> Result<Self, CliError> {
        match (name, thresholds) {
            ("solved", _) => Ok(Self::Solved),
            ("builtin:idle", _) => Ok(Self::Idle),
            ("builtin:always", _) => Ok(Self::Always),
            ("threshold-file", Some(path)) => Ok(Self::ThresholdFile(path)),
            ("threshold-file", None) => Err(CliError::Config("--policy threshold-file needs --thresholds PATH".into())),
            (other, _) => Err(CliError::Config(format!(
                "unknown policy `{other}` (solved | threshold-file | builtin:idle | builtin:always)"
            ))),
        }
    }

    fn label(&self) -> String {
        match self {
            Self::Solved => "solved".into(),
            Self::ThresholdFile(p) => format!("threshold-file:{}", p.display()),
            Self::Idle => "builtin:idle".into(),
            Self::Always => "builtin:always".into(),
        }
    }
}

fn load_schedule(path: &Path, horizon: usize) -> Result<ThresholdSchedule, CliError> {
    let file = File::open(path).map_err(|e| CliError::Config(format!("cannot read {}: {e}", path.display())))?;
    let schedule = ThresholdSchedule::read_csv(BufReader::new(file))
        .map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
    if schedule.horizon() != horizon {
        return Err(CliError::Config(format!(
            "{} covers stages 0..={}, config has T={horizon}",
            path.display(),
            schedule.horizon()
        )));
    }
    Ok(schedule)
}

pub fn simulate(
    config: &Config,
    source: &PolicySource,
    out: Option<&Path>,
    trace_out: Option<&Path>,
    plot_data: bool,
) -> Result<(), CliError> {
    let params = &config.params;
    let policy: Box<dyn SchedulingPolicy> = match source {
        PolicySource::Solved => {
            let sol = solve_config(config, params, Space::Folded)?;
            Box::new(extract_thresholds(&sol.policy, &sol.grid)?)
        }
        PolicySource::ThresholdFile(path) => Box::new(load_schedule(path, params.horizon)?),
        PolicySource::Idle => Box::new(NeverTransmit),
        PolicySource::Always => Box::new(AlwaysTransmit),
    };
    let options = RolloutOptions {
        initial_channel: config.c0,
        zero_noise: false,
    };
    let batch = estimate(params, policy.as_ref(), config.n_rollouts, config.seed, options)?;
    if batch.risk.heavy_tail {
        eprintln!(
            "warning: heavy tail, the top 0.1% of rollouts carry {:.1}% of the estimated mean",
            100.0 * batch.risk.tail_share
        );
    }

    let label = source.label();
    let mut w = open_out(out)?;
    header(&mut w, "simulate", config, &[format!("policy={label}")])?;
    let metrics = [
        ("n_rollouts", batch.risk.n.to_string()),
        ("log_objective", batch.risk.log_mean.to_string()),
        ("se_log", batch.risk.se_log.to_string()),
        ("mean_cost", batch.additive.mean.to_string()),
        ("var_cost", batch.additive.variance.to_string()),
        ("tail_share", batch.risk.tail_share.to_string()),
        ("heavy_tail", batch.risk.heavy_tail.to_string()),
    ];
    if plot_data {
        writeln!(w, "policy,metric,value")?;
        for (k, v) in &metrics {
            writeln!(w, "{label},{k},{v}")?;
        }
    } else {
        let names: Vec<&str> = metrics.iter().map(|m| m.0).collect();
        let values: Vec<&str> = metrics.iter().map(|m| m.1.as_str()).collect();
        writeln!(w, "policy,{}", names.join(","))?;
        writeln!(w, "{label},{}", values.join(","))?;
    }
    w.flush()?;

    if let Some(path) = trace_out {
        let trace = risk_sched::sim::rollout_stream(params, policy.as_ref(), config.seed, 0, options)?;
        let mut f = BufWriter::new(File::create(path)?);
        let mut comments = vec![format!("risk-sched {}", env!("CARGO_PKG_VERSION")), "command=simulate".into()];
        comments.extend(config.provenance());
        comments.push(format!("policy={label}"));
        trace.write_csv(&mut f, &comments)?;
        f.flush()?;
    }
    Ok(())
}

pub fn oracle(
    config: &Config,
    n_delta: usize,
    noise_points: usize,
    budget: u128,
    out: Option<&Path>,
) -> Result<(), CliError> {
    let params = &config.params;
    let chain = quantize(params, n_delta, noise_points)?;
    let report = brute_force_optimal(&chain, budget)?;
    let sol = &report.induction;
    let n = chain.n_states();

    let mut rows: Vec<(String, f64, String, bool)> = Vec::new();
    rows.push((
        "enumeration_induction_cost_agreement".into(),
        report.max_relative_gap,
        format!("{AGREEMENT_TOLERANCE:e}"),
        report.max_relative_gap <= AGREEMENT_TOLERANCE,
    ));
    let bad_transmits = sol
        .policy
        .rows
        .iter()
        .map(|r| r[Channel::Bad.index()].iter().filter(|u| u.is_transmit()).count())
        .sum::<usize>();
    rows.push(("bad_channel_transmits".into(), bad_transmits as f64, "0".into(), bad_transmits == 0));

    let mut asymmetric = 0usize;
    let mut non_threshold = 0usize;
    for (t, row) in sol.policy.rows.iter().enumerate() {
        for c in Channel::ALL {
            let col = &row[c.index()];
            let gaps = &sol.relative_gap[t][c.index()];
            for i in 0..n {
                if gaps[i] > TIE_TOLERANCE && col[i] != col[n - 1 - i] {
                    asymmetric += 1;
                }
            }
            let mut seen = false;
            for i in chain.zero_index()..n {
                if col[i].is_transmit() {
                    seen = true;
                } else if seen && gaps[i] > TIE_TOLERANCE {
                    non_threshold += 1;
                }
            }
        }
    }
    rows.push(("chain_policy_asymmetries".into(), asymmetric as f64, "0".into(), asymmetric == 0));
    rows.push(("chain_policy_threshold_violations".into(), non_threshold as f64, "0".into(), non_threshold == 0));

    let mut extra = vec![
        format!("n_delta={n_delta}"),
        format!("noise_points={noise_points}"),
        format!("noise_scheme={}", chain.noise.scheme),
        format!(
            "noise_support={}",
            chain
                .noise
                .points
                .iter()
                .map(|(w, p)| format!("{w}:{p}"))
                .collect::<Vec<_>>()
                .join(" ")
        ),
        format!("budget={budget}"),
    ];
    for e in &report.enumerations {
        extra.push(format!(
            "chain_optimum start=(delta=0,c={}) value={} decision_bits={}",
            e.start.1.index(),
            e.value,
            e.decision_points
        ));
    }

    // the solver's thresholds, evaluated exactly on the chain, cannot beat the chain optimum
    if check_feasibility(params).feasible {
        let solved = solve_config(config, params, Space::Folded)?;
        let schedule = extract_thresholds(&solved.policy, &solved.grid)?;
        for (e, c) in report.enumerations.iter().zip(Channel::ALL) {
            let v = exact_policy_cost(
                &chain,
                |t, i, cc| decide(&schedule, chain.delta_states[i], cc, t),
                0.0,
                c,
            )?;
            let excess = (v - e.value) / e.value;
            rows.push((
                format!("solver_policy_excess_c{}", c.index()),
                excess,
                format!(">= -{AGREEMENT_TOLERANCE:e}"),
                excess >= -AGREEMENT_TOLERANCE,
            ));
        }
    } else {
        extra.push("solver comparison skipped: parameters infeasible for the continuous model".into());
    }

    let mut w = open_out(out)?;
    header(&mut w, "oracle", config, &extra)?;
    writeln!(w, "check,value,tolerance,pass")?;
    for (name, value, tol, pass) in &rows {
        writeln!(w, "{name},{value},{tol},{pass}")?;
    }
    w.flush()?;
    let failed: Vec<&str> = rows.iter().filter(|r| !r.3).map(|r| r.0.as_str()).collect();
    if failed.is_empty() {
        Ok(())
    } else {
        Err(CliError::Runtime(format!("oracle checks failed: {}", failed.join(", "))))
    }
}

pub fn sweep(config: &Config, axis: Axis, values: &[f64], out: Option<&Path>) -> Result<(), CliError> {
    if values.is_empty() {
        return Err(CliError::Config("--values needs at least one number".into()));
    }
    let axis_name = match axis {
        Axis::Gamma => "gamma",
        Axis::Lambda => "lambda",
    };
    let mut lines = Vec::new();
    for &v in values {
        let params = match axis {
            Axis::Gamma => config.params.with_gamma(v),
            Axis::Lambda => config.params.with_lambda(v),
        };
        params.validate().map_err(|e| CliError::Config(e.to_string()))?;
        let sol = solve_config(config, &params, Space::Folded)?;
        let schedule = extract_thresholds(&sol.policy, &sol.grid)?;
        let neutral = risk_neutral_value_iterate(&params, &sol.grid.spec, &sol.quad, Space::Folded)?;
        let zero = sol.grid.zero_index();
        let last = sol.values.last_index();
        for t in 0..=params.horizon {
            for c in Channel::ALL {
                let w = sol.values.get(last - t, c, zero);
                let scaled = if params.gamma > 0.0 { w / params.gamma } else { f64::NAN };
                lines.push(format!(
                    "{axis_name},{v},{t},{},{},{w},{scaled},{}",
                    c.index(),
                    schedule.threshold(t, c),
                    neutral.values.get(last - t, c, zero)
                ));
            }
        }
    }
    let mut w = open_out(out)?;
    header(&mut w, "sweep", config, &[format!("axis={axis_name}")])?;
    writeln!(w, "axis,value,stage,channel,threshold,log_value_zero,scaled_value_zero,risk_neutral_zero")?;
    for line in lines {
        writeln!(w, "{line}")?;
    }
    w.flush()?;
    Ok(())
}

pub fn check(config: &Config) -> Result<(), CliError> {
    let params = &config.params;
    let report = check_feasibility(params);
    let mut w = open_out(None)?;
    header(&mut w, "check", config, &[format!("feasible={}", report.feasible)])?;
    writeln!(w, "stage,beta,slack,log_k")?;
    for (t, (b, lk)) in report.beta.iter().zip(&report.log_k).enumerate() {
        writeln!(w, "{t},{b},{},{lk}", 1.0 - 2.0 * params.sigma2 * b)?;
    }
    w.flush()?;
    drop(w);
    if let Some(stage) = report.first_violation_stage {
        print_beta_trace(&report, params.sigma2);
        return Err(CliError::Infeasible(format!("infeasible at stage {stage}")));
    }
    Ok(())
}
