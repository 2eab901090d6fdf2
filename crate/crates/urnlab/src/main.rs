//! Command-line front end. Each subcommand maps to one experiment; options
//! come from an optional config file with CLI flags taking precedence.
//! Exit codes: 0 all assertions passed, 1 an assertion failed, 2 usage or
//! config error.

use clap::{Args, Parser, Subcommand};
use std::fs;
use std::io::Write as _;
use std::path::PathBuf;
use std::process::ExitCode;
use std::time::Instant;
use urnlab::config::{parse_config, ExperimentConfig, ExperimentKind};
use urnlab::coupling::RhsMode;
use urnlab::error::{Error, Result};
use urnlab::experiments;
use urnlab::schedule::Rational;

#[derive(Parser)]
#[command(
    name = "urnlab",
    version,
    about = "Simulation and statistical checks for random-walk Polya urns"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Common {
    /// Flat key = value config file
    #[arg(long)]
    config: Option<PathBuf>,
    /// Base seed; overrides the config file
    #[arg(long)]
    seed: Option<u64>,
    /// CSV output path; stdout when absent
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Subcommand)]
enum Command {
    /// Grow one urn and report per-coordinate color moments
    Grow {
        #[command(flatten)]
        common: Common,
        /// Displacement model, e.g. "cauchy(scale=1);d=1"
        #[arg(long)]
        model: Option<String>,
        /// Number of balls
        #[arg(long)]
        n: Option<u64>,
        /// Save the grown urn to this checkpoint file
        #[arg(long)]
        checkpoint: Option<PathBuf>,
        /// Lift the ball-count guard
        #[arg(long)]
        allow_large_n: bool,
    },
    /// KS distance of rescaled colors to the limit law across n
    TheoremCheck {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        model: Option<String>,
        /// Comma-separated strictly increasing n values
        #[arg(long)]
        ns: Option<String>,
        #[arg(long)]
        replicas: Option<u64>,
        #[arg(long)]
        allow_large_n: bool,
    },
    /// Box-law discrepancy, modif probability, and tail masses per n
    CouplingCheck {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        model: Option<String>,
        /// First schedule index
        #[arg(long)]
        n_from: Option<u64>,
        /// Last schedule index
        #[arg(long)]
        n_to: Option<u64>,
        /// Box width
        #[arg(long)]
        h: Option<f64>,
        /// Tail radius exponent
        #[arg(long)]
        gamma: Option<f64>,
        /// exact-cdf or monte-carlo
        #[arg(long)]
        mode: Option<String>,
        #[arg(long)]
        replicas: Option<u64>,
        #[arg(long)]
        mc_samples: Option<u64>,
        #[arg(long)]
        allow_large_n: bool,
    },
    /// Two-sample KS between urn last-ball draws and record-rep draws
    RecordIdentity {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        model: Option<String>,
        #[arg(long)]
        n: Option<u64>,
        #[arg(long)]
        replicas: Option<u64>,
    },
    /// Total variation between the n- and m-ball empirical measures
    TvIdentity {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        model: Option<String>,
        #[arg(long)]
        n: Option<u64>,
        #[arg(long)]
        m: Option<u64>,
    },
    /// Deterministic table of subdivision times and step probabilities
    ScheduleTable {
        #[command(flatten)]
        common: Common,
        /// Largest schedule index
        #[arg(long)]
        n: Option<u64>,
        /// Growth constant, integer or p/q
        #[arg(long)]
        schedule_c: Option<String>,
        /// Growth exponent, integer or p/q
        #[arg(long)]
        schedule_kappa: Option<String>,
    },
    /// KS of rescaled auxiliary-walk sums to the limit law per n
    AuxWalkCheck {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        model: Option<String>,
        /// Comma-separated strictly increasing n values
        #[arg(long)]
        ns: Option<String>,
        /// Draws per n
        #[arg(long)]
        samples: Option<u64>,
    },
}

fn load_config(common: &Common, kind: ExperimentKind) -> Result<ExperimentConfig> {
    let mut cfg = match &common.config {
        Some(path) => {
            let text = fs::read_to_string(path)?;
            let cfg = parse_config(&text)?;
            if cfg.experiment != kind {
                return Err(Error::Config(format!(
                    "config file declares experiment {}, but the {} subcommand was invoked",
                    cfg.experiment, kind
                )));
            }
            cfg
        }
        None => ExperimentConfig::new(kind),
    };
    if let Some(s) = common.seed {
        cfg.seed = s;
    }
    if common.out.is_some() {
        cfg.out = common.out.clone();
    }
    Ok(cfg)
}

fn parse_ns(text: &str) -> Result<Vec<u64>> {
    let ns: Vec<u64> = text
        .split(',')
        .map(|s| {
            s.trim()
                .parse::<u64>()
                .map_err(|_| Error::Config(format!("bad ns entry {s:?}")))
        })
        .collect::<Result<_>>()?;
    if ns.is_empty() || ns.contains(&0) || ns.windows(2).any(|w| w[0] >= w[1]) {
        return Err(Error::Config("ns must be strictly increasing positives".into()));
    }
    Ok(ns)
}

fn build_config(cmd: &Command) -> Result<ExperimentConfig> {
    Ok(match cmd {
        Command::Grow {
            common,
            model,
            n,
            checkpoint,
            allow_large_n,
        } => {
            let mut cfg = load_config(common, ExperimentKind::Grow)?;
            if model.is_some() {
                cfg.model = model.clone();
            }
            if n.is_some() {
                cfg.n = *n;
            }
            if checkpoint.is_some() {
                cfg.checkpoint = checkpoint.clone();
            }
            cfg.allow_large_n |= allow_large_n;
            cfg
        }
        Command::TheoremCheck {
            common,
            model,
            ns,
            replicas,
            allow_large_n,
        } => {
            let mut cfg = load_config(common, ExperimentKind::TheoremCheck)?;
            if model.is_some() {
                cfg.model = model.clone();
            }
            if let Some(text) = ns {
                cfg.ns = Some(parse_ns(text)?);
            }
            if replicas.is_some() {
                cfg.replicas = *replicas;
            }
            cfg.allow_large_n |= allow_large_n;
            cfg
        }
        Command::CouplingCheck {
            common,
            model,
            n_from,
            n_to,
            h,
            gamma,
            mode,
            replicas,
            mc_samples,
            allow_large_n,
        } => {
            let mut cfg = load_config(common, ExperimentKind::CouplingCheck)?;
            if model.is_some() {
                cfg.model = model.clone();
            }
            if n_from.is_some() {
                cfg.n_from = *n_from;
            }
            if n_to.is_some() {
                cfg.n_to = *n_to;
            }
            if h.is_some() {
                cfg.h = *h;
            }
            if gamma.is_some() {
                cfg.gamma = *gamma;
            }
            if let Some(text) = mode {
                cfg.mode = Some(RhsMode::parse(text)?);
            }
            if replicas.is_some() {
                cfg.replicas = *replicas;
            }
            if mc_samples.is_some() {
                cfg.mc_samples = *mc_samples;
            }
            cfg.allow_large_n |= allow_large_n;
            cfg
        }
        Command::RecordIdentity {
            common,
            model,
            n,
            replicas,
        } => {
            let mut cfg = load_config(common, ExperimentKind::RecordIdentity)?;
            if model.is_some() {
                cfg.model = model.clone();
            }
            if n.is_some() {
                cfg.n = *n;
            }
            if replicas.is_some() {
                cfg.replicas = *replicas;
            }
            cfg
        }
        Command::TvIdentity { common, model, n, m } => {
            let mut cfg = load_config(common, ExperimentKind::TvIdentity)?;
            if model.is_some() {
                cfg.model = model.clone();
            }
            if n.is_some() {
                cfg.n = *n;
            }
            if m.is_some() {
                cfg.m = *m;
            }
            cfg
        }
        Command::ScheduleTable {
            common,
            n,
            schedule_c,
            schedule_kappa,
        } => {
            let mut cfg = load_config(common, ExperimentKind::ScheduleTable)?;
            if n.is_some() {
                cfg.n = *n;
            }
            if let Some(text) = schedule_c {
                cfg.schedule_c = Rational::parse(text)?;
            }
            if let Some(text) = schedule_kappa {
                cfg.schedule_kappa = Rational::parse(text)?;
            }
            cfg
        }
        Command::AuxWalkCheck {
            common,
            model,
            ns,
            samples,
        } => {
            let mut cfg = load_config(common, ExperimentKind::AuxWalkCheck)?;
            if model.is_some() {
                cfg.model = model.clone();
            }
            if let Some(text) = ns {
                cfg.ns = Some(parse_ns(text)?);
            }
            if samples.is_some() {
                cfg.samples = *samples;
            }
            cfg
        }
    })
}

/// CSV goes to the out path or stdout; summary and timing go to stderr so
/// reruns stay byte-identical on the data channel.
fn execute(cfg: &ExperimentConfig) -> Result<bool> {
    let start = Instant::now();
    let outcome = experiments::run(cfg)?;
    match &cfg.out {
        Some(path) => fs::write(path, &outcome.csv)?,
        None => {
            let mut stdout = std::io::stdout().lock();
            stdout.write_all(outcome.csv.as_bytes())?;
            stdout.flush()?;
        }
    }
    for line in &outcome.summary {
        eprintln!("{line}");
    }
    eprintln!("elapsed: {:.3} s", start.elapsed().as_secs_f64());
    Ok(outcome.passed)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match build_config(&cli.command).and_then(|cfg| execute(&cfg)) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => {
            eprintln!("verdict: assertion failed");
            ExitCode::from(1)
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
    }
}
