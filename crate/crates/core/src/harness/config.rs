//! Experiment configuration: defaults per experiment, `key = value` files with
//! `#` comments, and command-line overrides (override > file > defaults).

use std::fmt;
use std::path::PathBuf;
use std::str::FromStr;

use sha2::{Digest, Sha256};

use crate::divergence::AlphaParam;
use crate::error::{Error, Result};
use crate::exploration::ExplorationSchedule;
use crate::stochastic::FlagPolicy;
use crate::transforms::{
    validate_convergence, validate_monotonicity, RatePolicy, TransformConfig, ValidationReport,
    Verdict,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Experiment {
    Toy,
    Blr,
    OracleSuite,
}

impl FromStr for Experiment {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "toy" => Ok(Self::Toy),
            "blr" => Ok(Self::Blr),
            "oracle" | "oracle_suite" => Ok(Self::OracleSuite),
            _ => Err(Error::Config(format!(
                "unknown experiment '{s}' (toy, blr, oracle)"
            ))),
        }
    }
}

impl fmt::Display for Experiment {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Self::Toy => "toy",
            Self::Blr => "blr",
            Self::OracleSuite => "oracle",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Method {
    PowerDescent,
    MirrorDescent,
    Ais,
}

impl FromStr for Method {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "power" => Ok(Self::PowerDescent),
            "mirror" => Ok(Self::MirrorDescent),
            "ais" => Ok(Self::Ais),
            _ => Err(Error::Config(format!(
                "unknown method '{s}' (power, mirror, ais)"
            ))),
        }
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Self::PowerDescent => "power",
            Self::MirrorDescent => "mirror",
            Self::Ais => "ais",
        })
    }
}

/// A method with its divergence order, written `power:0.5`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MethodSpec {
    pub method: Method,
    pub alpha: f64,
}

impl MethodSpec {
    /// File-name friendly label such as `power_a0.5`.
    pub fn label(&self) -> String {
        format!("{}_a{}", self.method, self.alpha)
    }

    fn parse(s: &str, default_alpha: f64) -> Result<Self> {
        let (name, alpha) = match s.split_once(':') {
            Some((n, a)) => (n.trim(), parse_f64("methods", a.trim())?),
            None => (s.trim(), default_alpha),
        };
        Ok(Self {
            method: name.parse()?,
            alpha,
        })
    }
}

impl fmt::Display for MethodSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}:{}", self.method, self.alpha)
    }
}

/// Full description of a run.
#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub experiment: Experiment,
    pub methods: Vec<MethodSpec>,
    /// Order given to methods listed without one.
    pub alpha: f64,
    pub eta0: f64,
    pub kappa: f64,
    pub rate_policy: RatePolicy,
    pub outer_steps: usize,
    pub particles: usize,
    pub samples: usize,
    /// `J_t = J_0 + growth * t` (and the same for `M_t`).
    pub growth: usize,
    pub inner_steps: usize,
    pub bandwidth_scale: f64,
    pub dims: Vec<usize>,
    pub separation: f64,
    pub scale: f64,
    pub initial_variance: f64,
    pub replicates: usize,
    pub master_seed: u64,
    pub dataset_path: Option<PathBuf>,
    /// Minibatch size; 0 uses the full likelihood.
    pub minibatch: usize,
    pub test_fraction: f64,
    /// Rows kept from the dataset; 0 keeps all.
    pub subsample: usize,
    pub subsample_seed: u64,
    pub prior_shape: f64,
    pub prior_rate: f64,
    /// Samples per bound evaluation; unset uses `M_t`, 0 disables.
    pub eval_samples: Option<usize>,
    pub flag_policy: FlagPolicy,
    /// Gradient bound for the exponential convergence check; unset means unknown.
    pub b_inf: Option<f64>,
    /// Report convergence-tier violations as warnings.
    pub warn_only: bool,
    pub record_timing: bool,
    pub oracle_instances: usize,
    pub output_dir: PathBuf,
}

const KEYS: &[&str] = &[
    "experiment",
    "alpha",
    "methods",
    "eta0",
    "kappa",
    "rate_policy",
    "outer_steps",
    "particles",
    "samples",
    "growth",
    "inner_steps",
    "bandwidth_scale",
    "dims",
    "separation",
    "scale",
    "initial_variance",
    "replicates",
    "master_seed",
    "dataset_path",
    "minibatch",
    "test_fraction",
    "subsample",
    "subsample_seed",
    "prior_shape",
    "prior_rate",
    "eval_samples",
    "flag_policy",
    "b_inf",
    "warn_only",
    "record_timing",
    "oracle_instances",
    "output_dir",
];

fn parse_f64(key: &str, v: &str) -> Result<f64> {
    v.parse::<f64>()
        .map_err(|_| Error::Config(format!("{key}: expected a number, got '{v}'")))
}

fn parse_usize(key: &str, v: &str) -> Result<usize> {
    v.parse::<usize>()
        .map_err(|_| Error::Config(format!("{key}: expected a nonnegative integer, got '{v}'")))
}

fn parse_bool(key: &str, v: &str) -> Result<bool> {
    match v {
        "true" | "yes" | "1" => Ok(true),
        "false" | "no" | "0" => Ok(false),
        _ => Err(Error::Config(format!(
            "{key}: expected true or false, got '{v}'"
        ))),
    }
}

fn parse_rate_policy(v: &str) -> Result<RatePolicy> {
    match v {
        "constant" => Ok(RatePolicy::Constant),
        "inverse_sqrt_n" => Ok(RatePolicy::InverseSqrtN),
        "inverse_sqrt_horizon" => Ok(RatePolicy::InverseSqrtHorizon),
        _ => Err(Error::Config(format!(
            "rate_policy: expected constant, inverse_sqrt_n or inverse_sqrt_horizon, got '{v}'"
        ))),
    }
}

fn rate_policy_name(p: RatePolicy) -> &'static str {
    match p {
        RatePolicy::Constant => "constant",
        RatePolicy::InverseSqrtN => "inverse_sqrt_n",
        RatePolicy::InverseSqrtHorizon => "inverse_sqrt_horizon",
    }
}

/// Splits `key = value` lines, dropping blank lines and `#` comments.
pub fn parse_pairs(text: &str) -> Result<Vec<(String, String)>> {
    let mut out = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let (k, v) = line.split_once('=').ok_or_else(|| Error::Parse {
            line: i + 1,
            msg: format!("expected 'key = value', got '{line}'"),
        })?;
        out.push((k.trim().to_string(), v.trim().to_string()));
    }
    Ok(out)
}

/// Parses a `key=value` command-line override.
pub fn parse_override(s: &str) -> Result<(String, String)> {
    let (k, v) = s
        .split_once('=')
        .ok_or_else(|| Error::Config(format!("override must be key=value, got '{s}'")))?;
    Ok((k.trim().to_string(), v.trim().to_string()))
}

impl ExperimentConfig {
    /// Defaults for each experiment.
    pub fn defaults(experiment: Experiment) -> Self {
        let base = Self {
            experiment,
            methods: Vec::new(),
            alpha: 0.5,
            eta0: 0.5,
            kappa: 0.0,
            rate_policy: RatePolicy::InverseSqrtN,
            outer_steps: 20,
            particles: 100,
            samples: 100,
            growth: 0,
            inner_steps: 10,
            bandwidth_scale: 1.0,
            dims: vec![8],
            separation: 2.0,
            scale: 2.0,
            initial_variance: 5.0,
            replicates: 10,
            master_seed: 0,
            dataset_path: None,
            minibatch: 0,
            test_fraction: 0.2,
            subsample: 5000,
            subsample_seed: 0,
            prior_shape: 1.0,
            prior_rate: 0.01,
            eval_samples: None,
            flag_policy: FlagPolicy::Abort,
            b_inf: None,
            warn_only: false,
            record_timing: false,
            oracle_instances: 50,
            output_dir: PathBuf::from("out"),
        };
        match experiment {
            Experiment::Toy => Self {
                methods: vec![
                    MethodSpec {
                        method: Method::PowerDescent,
                        alpha: 0.5,
                    },
                    MethodSpec {
                        method: Method::MirrorDescent,
                        alpha: 0.5,
                    },
                    MethodSpec {
                        method: Method::MirrorDescent,
                        alpha: 1.0,
                    },
                ],
                ..base
            },
            Experiment::Blr => Self {
                methods: vec![
                    MethodSpec {
                        method: Method::PowerDescent,
                        alpha: 0.5,
                    },
                    MethodSpec {
                        method: Method::Ais,
                        alpha: 0.5,
                    },
                ],
                eta0: 0.05,
                rate_policy: RatePolicy::Constant,
                outer_steps: 500,
                particles: 20,
                samples: 20,
                growth: 1,
                inner_steps: 1,
                minibatch: 100,
                replicates: 5,
                eval_samples: Some(0),
                ..base
            },
            Experiment::OracleSuite => Self {
                methods: vec![MethodSpec {
                    method: Method::PowerDescent,
                    alpha: 0.5,
                }],
                ..base
            },
        }
    }

    /// Sets one key.
    pub fn apply(&mut self, key: &str, value: &str) -> Result<()> {
        match key {
            "experiment" => {
                let e: Experiment = value.parse()?;
                if e != self.experiment {
                    return Err(Error::Config(format!(
                        "config is for experiment '{e}' but '{}' was requested",
                        self.experiment
                    )));
                }
            }
            "methods" | "method" => {
                self.methods = value
                    .split(',')
                    .filter(|s| !s.trim().is_empty())
                    .map(|s| MethodSpec::parse(s, self.alpha))
                    .collect::<Result<_>>()?;
            }
            "alpha" => {
                let a = parse_f64(key, value)?;
                AlphaParam::new(a)?;
                self.alpha = a;
            }
            "eta0" => self.eta0 = parse_f64(key, value)?,
            "kappa" => self.kappa = parse_f64(key, value)?,
            "rate_policy" => self.rate_policy = parse_rate_policy(value)?,
            "outer_steps" => self.outer_steps = parse_usize(key, value)?,
            "particles" => self.particles = parse_usize(key, value)?,
            "samples" => self.samples = parse_usize(key, value)?,
            "growth" => self.growth = parse_usize(key, value)?,
            "inner_steps" => self.inner_steps = parse_usize(key, value)?,
            "bandwidth_scale" => self.bandwidth_scale = parse_f64(key, value)?,
            "dims" => {
                self.dims = value
                    .split(',')
                    .filter(|s| !s.trim().is_empty())
                    .map(|s| parse_usize(key, s.trim()))
                    .collect::<Result<_>>()?
            }
            "separation" => self.separation = parse_f64(key, value)?,
            "scale" => self.scale = parse_f64(key, value)?,
            "initial_variance" => self.initial_variance = parse_f64(key, value)?,
            "replicates" => self.replicates = parse_usize(key, value)?,
            "master_seed" | "seed" => {
                self.master_seed = value.parse().map_err(|_| {
                    Error::Config(format!("{key}: expected a 64-bit integer, got '{value}'"))
                })?
            }
            "dataset_path" => self.dataset_path = (!value.is_empty()).then(|| PathBuf::from(value)),
            "minibatch" => self.minibatch = parse_usize(key, value)?,
            "test_fraction" => self.test_fraction = parse_f64(key, value)?,
            "subsample" => self.subsample = parse_usize(key, value)?,
            "subsample_seed" => {
                self.subsample_seed = value.parse().map_err(|_| {
                    Error::Config(format!("{key}: expected a 64-bit integer, got '{value}'"))
                })?
            }
            "prior_shape" => self.prior_shape = parse_f64(key, value)?,
            "prior_rate" => self.prior_rate = parse_f64(key, value)?,
            "eval_samples" => {
                self.eval_samples = if value == "auto" {
                    None
                } else {
                    Some(parse_usize(key, value)?)
                }
            }
            "flag_policy" => {
                self.flag_policy = match value {
                    "abort" => FlagPolicy::Abort,
                    "skip" => FlagPolicy::SkipStep,
                    _ => {
                        return Err(Error::Config(format!(
                            "flag_policy: expected abort or skip, got '{value}'"
                        )))
                    }
                }
            }
            "b_inf" => {
                self.b_inf = if value.is_empty() {
                    None
                } else {
                    Some(parse_f64(key, value)?)
                }
            }
            "warn_only" => self.warn_only = parse_bool(key, value)?,
            "record_timing" => self.record_timing = parse_bool(key, value)?,
            "oracle_instances" => self.oracle_instances = parse_usize(key, value)?,
            "output_dir" => self.output_dir = PathBuf::from(value),
            _ => {
                return Err(Error::Config(format!(
                    "unknown key '{key}'; known keys: {}",
                    KEYS.join(", ")
                )))
            }
        }
        Ok(())
    }

    /// Defaults, then the file's pairs, then the overrides.
    pub fn from_sources(
        experiment: Experiment,
        file_text: Option<&str>,
        overrides: &[(String, String)],
    ) -> Result<Self> {
        let mut config = Self::defaults(experiment);
        if let Some(text) = file_text {
            for (k, v) in parse_pairs(text)? {
                config.apply(&k, &v)?;
            }
        }
        for (k, v) in overrides {
            config.apply(k, v)?;
        }
        Ok(config)
    }

    /// Structural checks independent of admissibility.
    pub fn validate(&self) -> Result<()> {
        if self.replicates < 1 {
            return Err(Error::Config("replicates must be >= 1".into()));
        }
        if self.methods.is_empty() {
            return Err(Error::Config("at least one method is required".into()));
        }
        match self.experiment {
            Experiment::Toy => {
                if self.dims.is_empty() || self.dims.contains(&0) {
                    return Err(Error::Config("toy experiment needs dims >= 1".into()));
                }
                if !(self.scale > 0.0) || !(self.initial_variance > 0.0) {
                    return Err(Error::Config(
                        "scale and initial_variance must be positive".into(),
                    ));
                }
            }
            Experiment::Blr => {
                if self.dataset_path.is_none() {
                    return Err(Error::Config("blr experiment needs dataset_path".into()));
                }
                if !(self.test_fraction > 0.0 && self.test_fraction < 1.0) {
                    return Err(Error::Config("test_fraction must be in (0, 1)".into()));
                }
                if !(self.prior_shape > 0.0) || !(self.prior_rate > 0.0) {
                    return Err(Error::Config(
                        "prior_shape and prior_rate must be positive".into(),
                    ));
                }
            }
            Experiment::OracleSuite => {
                if self.oracle_instances < 1 {
                    return Err(Error::Config("oracle_instances must be >= 1".into()));
                }
                return Ok(());
            }
        }
        self.schedule()?;
        for m in &self.methods {
            AlphaParam::new(m.alpha)?;
            if m.method != Method::Ais {
                self.transform(m)?;
            }
        }
        Ok(())
    }

    pub fn schedule(&self) -> Result<ExplorationSchedule> {
        let counts = |start: usize| -> Vec<usize> {
            (0..=self.outer_steps)
                .map(|t| start + self.growth * t)
                .collect()
        };
        ExplorationSchedule::new(
            self.outer_steps,
            counts(self.particles),
            counts(self.samples),
            self.inner_steps,
            self.bandwidth_scale,
        )
    }

    /// Transform for a descent method.
    pub fn transform(&self, spec: &MethodSpec) -> Result<TransformConfig> {
        let cfg = match spec.method {
            Method::PowerDescent => TransformConfig::power(spec.alpha, self.eta0, self.kappa)?,
            Method::MirrorDescent => {
                TransformConfig::exponential(spec.alpha, self.eta0, self.kappa)?
            }
            Method::Ais => {
                return Err(Error::Config("importance sampling has no transform".into()))
            }
        };
        Ok(cfg.with_rate_policy(self.rate_policy))
    }

    /// Admissibility report per descent method. Exponential transforms with
    /// `alpha != 1` and no `b_inf` are reported as conditional; their condition
    /// is checked against the largest observed gradient after the run.
    pub fn admissibility(&self) -> Result<Vec<(MethodSpec, ValidationReport)>> {
        let mut out = Vec::new();
        for m in &self.methods {
            if m.method == Method::Ais {
                continue;
            }
            let cfg = self.transform(m)?;
            let mono = validate_monotonicity(&cfg);
            let report = if mono.is_violation() {
                mono
            } else if m.method == Method::MirrorDescent
                && !cfg.alpha.is_one()
                && self.b_inf.is_none()
            {
                ValidationReport {
                    verdict: Verdict::Conditional,
                    reason: "exponential with alpha != 1 and no b_inf: checked against the observed gradient range".into(),
                }
            } else {
                validate_convergence(&cfg, self.b_inf.unwrap_or(f64::INFINITY))
            };
            out.push((*m, report));
        }
        Ok(out)
    }

    /// Structural validation plus admissibility; violations are errors unless
    /// `warn_only` is set. Returns the warnings to report.
    pub fn check(&self) -> Result<Vec<String>> {
        self.validate()?;
        let mut warnings = Vec::new();
        for (m, report) in self.admissibility()? {
            match report.verdict {
                Verdict::Ok => {}
                Verdict::Conditional => warnings.push(format!("{m}: {report}")),
                Verdict::Violation if self.warn_only => warnings.push(format!("{m}: {report}")),
                Verdict::Violation => return Err(Error::Config(format!("{m}: {report}"))),
            }
        }
        Ok(warnings)
    }

    /// Every key in a fixed order; the input of [`Self::hash`].
    pub fn canonical(&self) -> String {
        let opt = |v: Option<String>| v.unwrap_or_default();
        let lines = [
            ("experiment", self.experiment.to_string()),
            ("alpha", self.alpha.to_string()),
            (
                "methods",
                self.methods
                    .iter()
                    .map(|m| m.to_string())
                    .collect::<Vec<_>>()
                    .join(","),
            ),
            ("eta0", self.eta0.to_string()),
            ("kappa", self.kappa.to_string()),
            (
                "rate_policy",
                rate_policy_name(self.rate_policy).to_string(),
            ),
            ("outer_steps", self.outer_steps.to_string()),
            ("particles", self.particles.to_string()),
            ("samples", self.samples.to_string()),
            ("growth", self.growth.to_string()),
            ("inner_steps", self.inner_steps.to_string()),
            ("bandwidth_scale", self.bandwidth_scale.to_string()),
            (
                "dims",
                self.dims
                    .iter()
                    .map(|d| d.to_string())
                    .collect::<Vec<_>>()
                    .join(","),
            ),
            ("separation", self.separation.to_string()),
            ("scale", self.scale.to_string()),
            ("initial_variance", self.initial_variance.to_string()),
            ("replicates", self.replicates.to_string()),
            ("master_seed", self.master_seed.to_string()),
            (
                "dataset_path",
                opt(self.dataset_path.as_ref().map(|p| p.display().to_string())),
            ),
            ("minibatch", self.minibatch.to_string()),
            ("test_fraction", self.test_fraction.to_string()),
            ("subsample", self.subsample.to_string()),
            ("subsample_seed", self.subsample_seed.to_string()),
            ("prior_shape", self.prior_shape.to_string()),
            ("prior_rate", self.prior_rate.to_string()),
            (
                "eval_samples",
                self.eval_samples
                    .map_or("auto".to_string(), |v| v.to_string()),
            ),
            (
                "flag_policy",
                match self.flag_policy {
                    FlagPolicy::Abort => "abort",
                    FlagPolicy::SkipStep => "skip",
                }
                .to_string(),
            ),
            ("b_inf", opt(self.b_inf.map(|v| v.to_string()))),
            ("warn_only", self.warn_only.to_string()),
            ("record_timing", self.record_timing.to_string()),
            ("oracle_instances", self.oracle_instances.to_string()),
            ("output_dir", self.output_dir.display().to_string()),
        ];
        lines.iter().map(|(k, v)| format!("{k} = {v}\n")).collect()
    }

    /// SHA-256 of the canonical rendering, hex encoded. The output directory
    /// is excluded so moving results does not change the hash.
    pub fn hash(&self) -> String {
        let text: String = self
            .canonical()
            .lines()
            .filter(|l| !l.starts_with("output_dir"))
            .map(|l| format!("{l}\n"))
            .collect();
        Sha256::digest(text.as_bytes())
            .iter()
            .map(|b| format!("{b:02x}"))
            .collect()
    }
}
