//! Command-line front end: solve, simulate, oracle, sweep, check.

mod commands;
mod config;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("config error: {0}")]
    Config(String),
    #[error("{0}")]
    Infeasible(String),
    #[error("{0}")]
    Budget(String),
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
    #[error("{0}")]
    Runtime(String),
}

impl CliError {
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Config(_) | CliError::Io(_) | CliError::Runtime(_) => 1,
            CliError::Infeasible(_) => 2,
            CliError::Budget(_) => 3,
        }
    }
}

impl From<risk_sched::Error> for CliError {
    fn from(e: risk_sched::Error) -> Self {
        use risk_sched::Error as E;
        match e {
            E::Infeasible { stage, .. } => CliError::Infeasible(format!("infeasible at stage {stage}")),
            E::BudgetExceeded { .. } | E::HorizonTooLarge { .. } => CliError::Budget(e.to_string()),
            E::InvalidParameter { .. } => CliError::Config(e.to_string()),
            other => CliError::Runtime(other.to_string()),
        }
    }
}

#[derive(Debug, Parser)]
#[command(
    name = "risk-sched",
    version,
    about = "Risk-sensitive transmission scheduling over a Gilbert-Elliott channel",
    after_help = "Exit codes: 0 ok, 1 usage or config error, 2 infeasible parameters, 3 enumeration budget exceeded.\n\
Every CSV starts with `# key=value` lines carrying the resolved config and seed."
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Args)]
struct Common {
    /// Flat `key = value` config file.
    #[arg(short, long)]
    config: PathBuf,
    /// Emit long-format (tidy) tables for plotting.
    #[arg(long)]
    plot_data: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum SpaceArg {
    Folded,
    Original,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Axis {
    Gamma,
    Lambda,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Solve the Bellman recursion and write tables to a directory.
    #[command(after_help = "Files written to --out:\n  \
values.csv       iterate,channel,<one column per grid node>   (log value W; iterate k = k stages of cost)\n  \
policy.csv       stage,channel,<one column per grid node>     (0 idle, 1 transmit; wall-clock stage)\n  \
thresholds.csv   stage,channel,threshold                      (transmit iff |delta| >= threshold; inf = never)\n  \
feasibility.csv  stage,beta,slack,log_k\n  \
grid.csv         node,delta\n\
With --plot-data: values_long.csv iterate,channel,delta,log_value and policy_long.csv stage,channel,delta,action.")]
    Solve {
        #[command(flatten)]
        common: Common,
        /// Output directory, created if missing.
        #[arg(short, long, default_value = "out")]
        out: PathBuf,
        #[arg(long, value_enum, default_value = "folded")]
        space: SpaceArg,
    },
    /// Monte Carlo estimate of the objective for one policy.
    #[command(after_help = "Columns: policy,n_rollouts,log_objective,se_log,mean_cost,var_cost,tail_share,heavy_tail\n\
With --plot-data: policy,metric,value.\n\
--trace-out writes rollout 0 as t,x,x_hat,delta,c,u,cost.")]
    Simulate {
        #[command(flatten)]
        common: Common,
        /// solved | threshold-file | builtin:idle | builtin:always
        #[arg(long, default_value = "solved")]
        policy: String,
        /// Threshold CSV for `--policy threshold-file`.
        #[arg(long)]
        thresholds: Option<PathBuf>,
        /// Metrics file; stdout when omitted.
        #[arg(short, long)]
        out: Option<PathBuf>,
        #[arg(long)]
        trace_out: Option<PathBuf>,
    },
    /// Certify the optimal policy on a quantized chain by enumeration.
    #[command(after_help = "Columns: check,value,tolerance,pass\n\
Checks: enumeration vs backward induction vs exact policy cost, idle bad channel,\n\
evenness and threshold structure of the chain policy, solver policy evaluated on the chain.")]
    Oracle {
        #[command(flatten)]
        common: Common,
        #[arg(long, default_value_t = 9)]
        n_delta: usize,
        /// 2, 3 or 5.
        #[arg(long, default_value_t = 3)]
        noise_points: usize,
        /// Largest number of policies to enumerate per start state.
        #[arg(long, default_value_t = risk_sched::oracle::DEFAULT_ENUMERATION_BUDGET as u64)]
        budget: u64,
        #[arg(short, long)]
        out: Option<PathBuf>,
    },
    /// Solve at several values of gamma or lambda.
    #[command(after_help = "Columns: axis,value,stage,channel,threshold,log_value_zero,scaled_value_zero,risk_neutral_zero\n\
log_value_zero is the log value-to-go from (delta = 0, channel) at that stage; scaled_value_zero = log_value_zero / gamma.")]
    Sweep {
        #[command(flatten)]
        common: Common,
        #[arg(long, value_enum)]
        axis: Axis,
        /// Comma-separated values.
        #[arg(long, value_delimiter = ',', num_args = 0..)]
        values: Vec<f64>,
        #[arg(short, long)]
        out: Option<PathBuf>,
    },
    /// Feasibility check only.
    #[command(after_help = "Columns: stage,beta,slack,log_k (slack = 1 - 2 sigma2 beta).")]
    Check {
        #[command(flatten)]
        common: Common,
    },
}

fn run(cli: Cli) -> Result<(), CliError> {
    match cli.command {
        Command::Solve { common, out, space } => {
            let config = config::Config::load(&common.config)?;
            commands::solve(&config, &out, space, common.plot_data)
        }
        Command::Simulate {
            common,
            policy,
            thresholds,
            out,
            trace_out,
        } => {
            let config = config::Config::load(&common.config)?;
            let source = commands::PolicySource::parse(&policy, thresholds)?;
            commands::simulate(&config, &source, out.as_deref(), trace_out.as_deref(), common.plot_data)
        }
        Command::Oracle {
            common,
            n_delta,
            noise_points,
            budget,
            out,
        } => {
            let config = config::Config::load(&common.config)?;
            commands::oracle(&config, n_delta, noise_points, budget as u128, out.as_deref())
        }
        Command::Sweep {
            common,
            axis,
            values,
            out,
        } => {
            let config = config::Config::load(&common.config)?;
            commands::sweep(&config, axis, &values, out.as_deref())
        }
        Command::Check { common } => {
            let config = config::Config::load(&common.config)?;
            commands::check(&config)
        }
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
