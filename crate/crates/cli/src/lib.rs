//! Command-line driver: configs in, CSV/JSON artifacts out.
//!
//! Exit codes: 0 ok, 1 usage or config error, 2 controllability failure, 3 numerical failure.

use std::ffi::OsString;
use std::io;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};

pub mod commands;
pub mod config;
pub mod output;

pub use commands::Outcome;
pub use config::{load_config, parse_config, Experiment, ExperimentConfig, Y0Spec};

pub const EXIT_OK: i32 = 0;
pub const EXIT_USAGE: i32 = 1;
pub const EXIT_UNCONTROLLABLE: i32 = 2;
pub const EXIT_NUMERICAL: i32 = 3;

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error("config error: {0}")]
    Config(String),
    #[error("{}: {source}", path.display())]
    Io { path: PathBuf, source: io::Error },
    #[error("{source}{}", if note.is_empty() { String::new() } else { format!(" ({note})") })]
    Numerical { source: nullctl_core::Error, note: String },
}

impl CliError {
    pub fn io(path: &Path, source: io::Error) -> Self {
        CliError::Io { path: path.to_path_buf(), source }
    }

    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) | CliError::Config(_) | CliError::Io { .. } => EXIT_USAGE,
            CliError::Numerical { source, .. } if source.is_controllability_failure() => EXIT_UNCONTROLLABLE,
            CliError::Numerical { .. } => EXIT_NUMERICAL,
        }
    }
}

impl From<nullctl_core::Error> for CliError {
    fn from(source: nullctl_core::Error) -> Self {
        CliError::Numerical { source, note: String::new() }
    }
}

#[derive(Debug, Parser)]
#[command(name = "nullctl", version, about = "Null-control experiments for coupled parabolic systems")]
pub struct Cli {
    /// Experiment config (JSON).
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Output directory; overrides `output_dir` from the config.
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    /// Seed for randomized trials; overrides `seed` from the config.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Certify the Kalman rank condition over the model spectrum.
    KalmanCheck {
        /// Write the rank drops with their confirmed ranks to this CSV.
        #[arg(long)]
        emit_bad_set: Option<PathBuf>,
    },
    /// Free decay of random data above a cutoff against the dissipation bound.
    DissipationCheck {
        #[arg(long)]
        gamma: Option<f64>,
        #[arg(long)]
        trials: Option<usize>,
        /// Sample times in [0, 1]; default 20 log-spaced times from 1e-4.
        #[arg(long, value_delimiter = ',')]
        times: Option<Vec<f64>>,
    },
    /// Minimal-norm control of the modes below a cutoff.
    Synthesize {
        #[arg(long)]
        gamma: Option<f64>,
        #[arg(long)]
        tau: Option<f64>,
        /// Highest eigenvalue simulated when checking the terminal state; default the cutoff.
        #[arg(long)]
        gamma_sim: Option<f64>,
        /// CSV with columns mode,equation,value (1-based).
        #[arg(long)]
        y0: Option<PathBuf>,
    },
    /// Smallest Gramian eigenvalue across cutoffs.
    ObservabilitySweep {
        #[arg(long, value_delimiter = ',')]
        gammas: Option<Vec<f64>>,
        #[arg(long)]
        tau: Option<f64>,
    },
    /// Dyadic low-frequency control and free decay over [0, T].
    LrRun {
        #[command(flatten)]
        lr: LrArgs,
        #[arg(long = "T")]
        horizon: Option<f64>,
    },
    /// `lr-run` over several horizons with a fit of log(cost) against 1/T.
    CostSweep {
        #[command(flatten)]
        lr: LrArgs,
        #[arg(long = "T-list", value_delimiter = ',')]
        horizons: Option<Vec<f64>>,
    },
    /// Run the experiment block of the config.
    Run,
}

#[derive(Debug, Args)]
pub struct LrArgs {
    /// Initial frequency scale; default the first eigenvalue.
    #[arg(long = "M")]
    pub m: Option<f64>,
    /// Double M until each window contracts.
    #[arg(long)]
    pub adapt: bool,
    /// Highest simulated eigenvalue; default the largest in the model.
    #[arg(long)]
    pub gamma_sim: Option<f64>,
    #[arg(long)]
    pub y0: Option<PathBuf>,
}

fn required<T>(flag: &str, v: Option<T>) -> Result<T, CliError> {
    v.ok_or_else(|| CliError::Usage(format!("{flag} is required (or set it in the config's experiment block)")))
}

/// Runs one experiment against a loaded config.
pub fn run_experiment(cfg: &ExperimentConfig, exp: &Experiment, out: &Path, seed: u64) -> Result<Outcome, CliError> {
    let top = cfg.model.max_gamma();
    match exp {
        Experiment::KalmanCheck { emit_bad_set } => {
            let emit = emit_bad_set.as_ref().map(|p| out.join(p));
            commands::kalman_check(cfg, emit.as_deref(), out)
        }
        Experiment::DissipationCheck { gamma, trials, times } => {
            let times = times.clone().unwrap_or_else(commands::default_times);
            commands::dissipation(cfg, *gamma, trials.unwrap_or(1000), &times, seed, out)
        }
        Experiment::Synthesize { gamma, tau, gamma_sim, y0 } => {
            commands::synthesize(cfg, *gamma, *tau, gamma_sim.unwrap_or(*gamma), y0.as_ref(), out)
        }
        Experiment::ObservabilitySweep { gammas, tau } => {
            commands::observability_sweep(cfg, gammas, tau.unwrap_or(0.5), out)
        }
        Experiment::LrRun { horizon, m, adapt, gamma_sim, y0 } => {
            commands::lr_run(cfg, *horizon, *m, *adapt, gamma_sim.unwrap_or(top), y0.as_ref(), out)
        }
        Experiment::CostSweep { horizons, m, adapt, gamma_sim, y0 } => {
            commands::cost_sweep_cmd(cfg, horizons, *m, *adapt, gamma_sim.unwrap_or(top), y0.as_ref(), out)
        }
    }
}

/// Merges subcommand flags over the config's experiment block of the same kind.
fn experiment_for(command: Command, cfg: &ExperimentConfig) -> Result<Experiment, CliError> {
    let base = cfg.experiment.clone();
    let file = |p: Option<PathBuf>| p.map(Y0Spec::File);
    // flag paths are relative to the working directory, config paths to the config
    let cwd_file = |p: Option<PathBuf>| -> Option<Y0Spec> {
        file(p.map(|p| if p.is_absolute() { p } else { std::env::current_dir().unwrap_or_default().join(p) }))
    };
    Ok(match command {
        Command::Run => base.ok_or_else(|| CliError::Usage("the config has no experiment block".into()))?,
        Command::KalmanCheck { emit_bad_set } => {
            let from = match base {
                Some(Experiment::KalmanCheck { emit_bad_set }) => emit_bad_set,
                _ => None,
            };
            Experiment::KalmanCheck {
                emit_bad_set: emit_bad_set.map(|p| std::env::current_dir().unwrap_or_default().join(p)).or(from),
            }
        }
        Command::DissipationCheck { gamma, trials, times } => {
            let (g, k, ts) = match base {
                Some(Experiment::DissipationCheck { gamma, trials, times }) => (Some(gamma), trials, times),
                _ => (None, None, None),
            };
            Experiment::DissipationCheck {
                gamma: required("--gamma", gamma.or(g))?,
                trials: trials.or(k),
                times: times.or(ts),
            }
        }
        Command::Synthesize { gamma, tau, gamma_sim, y0 } => {
            let (g, t, gs, y) = match base {
                Some(Experiment::Synthesize { gamma, tau, gamma_sim, y0 }) => (Some(gamma), Some(tau), gamma_sim, y0),
                _ => (None, None, None, None),
            };
            Experiment::Synthesize {
                gamma: required("--gamma", gamma.or(g))?,
                tau: required("--tau", tau.or(t))?,
                gamma_sim: gamma_sim.or(gs),
                y0: cwd_file(y0).or(y),
            }
        }
        Command::ObservabilitySweep { gammas, tau } => {
            let (g, t) = match base {
                Some(Experiment::ObservabilitySweep { gammas, tau }) => (Some(gammas), tau),
                _ => (None, None),
            };
            Experiment::ObservabilitySweep { gammas: required("--gammas", gammas.or(g))?, tau: tau.or(t) }
        }
        Command::LrRun { lr, horizon } => {
            let (h, m, a, gs, y) = match base {
                Some(Experiment::LrRun { horizon, m, adapt, gamma_sim, y0 }) => (Some(horizon), m, adapt, gamma_sim, y0),
                _ => (None, None, false, None, None),
            };
            Experiment::LrRun {
                horizon: required("--T", horizon.or(h))?,
                m: lr.m.or(m),
                adapt: lr.adapt || a,
                gamma_sim: lr.gamma_sim.or(gs),
                y0: cwd_file(lr.y0).or(y),
            }
        }
        Command::CostSweep { lr, horizons } => {
            let (h, m, a, gs, y) = match base {
                Some(Experiment::CostSweep { horizons, m, adapt, gamma_sim, y0 }) => {
                    (Some(horizons), m, adapt, gamma_sim, y0)
                }
                _ => (None, None, false, None, None),
            };
            Experiment::CostSweep {
                horizons: required("--T-list", horizons.or(h))?,
                m: lr.m.or(m),
                adapt: lr.adapt || a,
                gamma_sim: lr.gamma_sim.or(gs),
                y0: cwd_file(lr.y0).or(y),
            }
        }
    })
}

fn execute(cli: Cli) -> Result<Outcome, CliError> {
    let path = cli.config.ok_or_else(|| CliError::Usage("--config <file> is required".into()))?;
    let cfg = load_config(&path)?;
    let out = cli.out.or_else(|| cfg.output_dir.clone()).unwrap_or_else(|| PathBuf::from("out"));
    let seed = cli.seed.unwrap_or(cfg.seed);
    let exp = experiment_for(cli.command, &cfg)?;
    run_experiment(&cfg, &exp, &out, seed)
}

/// Parses `args` (including the program name), runs, reports on stdout/stderr and
/// returns the exit code.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
        }
    };
    match execute(cli) {
        Ok(outcome) => {
            println!("{}", outcome.message);
            for f in &outcome.files {
                println!("wrote {}", f.display());
            }
            outcome.exit
        }
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}
