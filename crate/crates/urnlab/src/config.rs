//! Flat key=value experiment configuration. Strict: unknown keys,
//! duplicates, and malformed values are errors with line numbers, never
//! warnings.

use crate::coupling::RhsMode;
use crate::error::{Error, Result};
use crate::schedule::{Rational, DEFAULT_C, DEFAULT_KAPPA};
use std::fmt;
use std::path::PathBuf;

/// Ball counts above this need allow-large-n (memory guard).
pub const LARGE_N_GUARD: u64 = 10_000_000;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ExperimentKind {
    Grow,
    TheoremCheck,
    CouplingCheck,
    RecordIdentity,
    TvIdentity,
    ScheduleTable,
    AuxWalkCheck,
}

impl ExperimentKind {
    pub fn parse(s: &str) -> Result<ExperimentKind> {
        Ok(match s {
            "grow" => ExperimentKind::Grow,
            "theorem-check" => ExperimentKind::TheoremCheck,
            "coupling-check" => ExperimentKind::CouplingCheck,
            "record-identity" => ExperimentKind::RecordIdentity,
            "tv-identity" => ExperimentKind::TvIdentity,
            "schedule-table" => ExperimentKind::ScheduleTable,
            "aux-walk-check" => ExperimentKind::AuxWalkCheck,
            _ => return Err(Error::Config(format!("unknown experiment {s:?}"))),
        })
    }
}

impl fmt::Display for ExperimentKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ExperimentKind::Grow => "grow",
            ExperimentKind::TheoremCheck => "theorem-check",
            ExperimentKind::CouplingCheck => "coupling-check",
            ExperimentKind::RecordIdentity => "record-identity",
            ExperimentKind::TvIdentity => "tv-identity",
            ExperimentKind::ScheduleTable => "schedule-table",
            ExperimentKind::AuxWalkCheck => "aux-walk-check",
        })
    }
}

/// Parsed configuration; experiment-specific defaults are filled by the
/// runners, so most fields stay optional here.
#[derive(Debug, Clone)]
pub struct ExperimentConfig {
    pub experiment: ExperimentKind,
    pub model: Option<String>,
    pub seed: u64,
    pub n: Option<u64>,
    pub m: Option<u64>,
    pub ns: Option<Vec<u64>>,
    pub n_from: Option<u64>,
    pub n_to: Option<u64>,
    pub replicas: Option<u64>,
    pub samples: Option<u64>,
    pub mc_samples: Option<u64>,
    pub h: Option<f64>,
    pub gamma: Option<f64>,
    pub mode: Option<RhsMode>,
    pub out: Option<PathBuf>,
    pub checkpoint: Option<PathBuf>,
    pub allow_large_n: bool,
    pub schedule_c: Rational,
    pub schedule_kappa: Rational,
}

impl ExperimentConfig {
    pub fn new(experiment: ExperimentKind) -> ExperimentConfig {
        ExperimentConfig {
            experiment,
            model: None,
            seed: 0,
            n: None,
            m: None,
            ns: None,
            n_from: None,
            n_to: None,
            replicas: None,
            samples: None,
            mc_samples: None,
            h: None,
            gamma: None,
            mode: None,
            out: None,
            checkpoint: None,
            allow_large_n: false,
            schedule_c: DEFAULT_C,
            schedule_kappa: DEFAULT_KAPPA,
        }
    }

    /// Errors when a requested urn size exceeds the guard without the
    /// allow-large-n override.
    pub fn check_size(&self, balls: u64) -> Result<()> {
        if balls > LARGE_N_GUARD && !self.allow_large_n {
            return Err(Error::Config(format!(
                "{balls} balls exceeds the {LARGE_N_GUARD} guard; set allow-large-n=true to proceed"
            )));
        }
        Ok(())
    }
}

fn positive_u64(key: &str, value: &str, line: usize) -> Result<u64> {
    let v: u64 = value
        .parse()
        .map_err(|_| Error::Config(format!("line {line}: {key} expects an integer, got {value:?}")))?;
    if v == 0 {
        return Err(Error::Config(format!("line {line}: {key} must be positive")));
    }
    Ok(v)
}

fn positive_f64(key: &str, value: &str, line: usize) -> Result<f64> {
    let v: f64 = value
        .parse()
        .map_err(|_| Error::Config(format!("line {line}: {key} expects a number, got {value:?}")))?;
    if !v.is_finite() || v <= 0.0 {
        return Err(Error::Config(format!("line {line}: {key} must be positive")));
    }
    Ok(v)
}

/// Strict parse of the flat key=value format. Blank lines and lines
/// starting with '#' are skipped.
pub fn parse_config(text: &str) -> Result<ExperimentConfig> {
    let mut experiment: Option<ExperimentKind> = None;
    let mut cfg = ExperimentConfig::new(ExperimentKind::Grow);
    let mut seen: Vec<String> = Vec::new();

    for (i, raw) in text.lines().enumerate() {
        let line = i + 1;
        let trimmed = raw.trim();
        if trimmed.is_empty() || trimmed.starts_with('#') {
            continue;
        }
        let (key, value) = trimmed.split_once('=').ok_or_else(|| {
            Error::Config(format!("line {line}: expected key = value, got {trimmed:?}"))
        })?;
        let key = key.trim();
        let value = value.trim();
        if value.is_empty() {
            return Err(Error::Config(format!("line {line}: {key} has no value")));
        }
        if seen.iter().any(|k| k == key) {
            return Err(Error::Config(format!("line {line}: duplicate key {key}")));
        }
        seen.push(key.to_string());
        match key {
            "experiment" => experiment = Some(ExperimentKind::parse(value)?),
            "model" => cfg.model = Some(value.to_string()),
            "seed" => {
                cfg.seed = value.parse().map_err(|_| {
                    Error::Config(format!("line {line}: seed expects an integer"))
                })?
            }
            "n" => cfg.n = Some(positive_u64(key, value, line)?),
            "m" => cfg.m = Some(positive_u64(key, value, line)?),
            "ns" => {
                let ns: Vec<u64> = value
                    .split(',')
                    .map(|s| positive_u64(key, s.trim(), line))
                    .collect::<Result<_>>()?;
                if ns.is_empty() || ns.windows(2).any(|w| w[0] >= w[1]) {
                    return Err(Error::Config(format!(
                        "line {line}: ns must be strictly increasing"
                    )));
                }
                cfg.ns = Some(ns);
            }
            "n-from" => cfg.n_from = Some(positive_u64(key, value, line)?),
            "n-to" => cfg.n_to = Some(positive_u64(key, value, line)?),
            "replicas" => cfg.replicas = Some(positive_u64(key, value, line)?),
            "samples" => cfg.samples = Some(positive_u64(key, value, line)?),
            "mc-samples" => cfg.mc_samples = Some(positive_u64(key, value, line)?),
            "h" => cfg.h = Some(positive_f64(key, value, line)?),
            "gamma" => {
                let v: f64 = value.parse().map_err(|_| {
                    Error::Config(format!("line {line}: gamma expects a number"))
                })?;
                if v < 0.0 || !v.is_finite() {
                    return Err(Error::Config(format!(
                        "line {line}: gamma must be nonnegative"
                    )));
                }
                cfg.gamma = Some(v);
            }
            "mode" => cfg.mode = Some(RhsMode::parse(value)?),
            "out" => cfg.out = Some(PathBuf::from(value)),
            "checkpoint" => cfg.checkpoint = Some(PathBuf::from(value)),
            "allow-large-n" => {
                cfg.allow_large_n = match value {
                    "true" => true,
                    "false" => false,
                    _ => {
                        return Err(Error::Config(format!(
                            "line {line}: allow-large-n expects true or false"
                        )))
                    }
                }
            }
            "schedule-c" => cfg.schedule_c = Rational::parse(value)?,
            "schedule-kappa" => cfg.schedule_kappa = Rational::parse(value)?,
            _ => {
                return Err(Error::Config(format!("line {line}: unknown key {key:?}")));
            }
        }
    }

    let experiment = experiment
        .ok_or_else(|| Error::Config("missing required key: experiment".into()))?;
    cfg.experiment = experiment;
    Ok(cfg)
}
