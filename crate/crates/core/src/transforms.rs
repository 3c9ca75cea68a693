//! Transform functions `Gamma` applied to the gradient in the descent update,
//! their admissibility checks, and learning-rate schedules.
//!
//! Two families are supported:
//!
//! * `Exponential`: `Gamma(v) = exp(-eta v)` (entropic mirror descent),
//! * `Power`: `Gamma(v) = [(alpha - 1) v + 1]^(eta / (1 - alpha))`, defined for
//!   `alpha != 1` on the half-line `(alpha - 1) v + 1 > 0`.
//!
//! Admissibility is validated at two levels. [`validate_monotonicity`] encodes
//! the rows under which each step is guaranteed not to increase the objective;
//! [`validate_convergence`] encodes the stricter rows that also give a rate.

use std::fmt;

use crate::divergence::AlphaParam;
use crate::error::{Error, Result};
use crate::simplex;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum TransformFamily {
    Exponential,
    Power,
}

impl fmt::Display for TransformFamily {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            TransformFamily::Exponential => f.write_str("exponential"),
            TransformFamily::Power => f.write_str("power"),
        }
    }
}

/// Step-size schedule `eta_n`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum RatePolicy {
    /// `eta_n = eta_0`
    Constant,
    /// `eta_n = eta_0 / sqrt(n)`
    InverseSqrtN,
    /// `eta_n = eta_0 / sqrt(N)` for a horizon of `N` steps
    InverseSqrtHorizon,
}

impl fmt::Display for RatePolicy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            RatePolicy::Constant => f.write_str("constant"),
            RatePolicy::InverseSqrtN => f.write_str("inv-sqrt-n"),
            RatePolicy::InverseSqrtHorizon => f.write_str("inv-sqrt-horizon"),
        }
    }
}

/// Everything that parameterises one descent scheme.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TransformConfig {
    pub alpha: AlphaParam,
    pub family: TransformFamily,
    pub eta0: f64,
    pub kappa: f64,
    pub rate_policy: RatePolicy,
}

impl TransformConfig {
    pub fn new(
        alpha: AlphaParam,
        family: TransformFamily,
        eta0: f64,
        kappa: f64,
        rate_policy: RatePolicy,
    ) -> Result<Self> {
        if !(eta0 > 0.0) || !eta0.is_finite() {
            return Err(Error::Argument(format!(
                "eta0 must be positive, got {eta0}"
            )));
        }
        if !kappa.is_finite() {
            return Err(Error::Argument(format!(
                "kappa must be finite, got {kappa}"
            )));
        }
        if family == TransformFamily::Power && alpha.is_one() {
            return Err(Error::Argument(
                "the power transform is undefined for alpha = 1".into(),
            ));
        }
        Ok(Self {
            alpha,
            family,
            eta0,
            kappa,
            rate_policy,
        })
    }

    /// Power descent with a constant step.
    pub fn power(alpha: f64, eta: f64, kappa: f64) -> Result<Self> {
        Self::new(
            AlphaParam::new(alpha)?,
            TransformFamily::Power,
            eta,
            kappa,
            RatePolicy::Constant,
        )
    }

    /// Entropic mirror descent with a constant step.
    pub fn exponential(alpha: f64, eta: f64, kappa: f64) -> Result<Self> {
        Self::new(
            AlphaParam::new(alpha)?,
            TransformFamily::Exponential,
            eta,
            kappa,
            RatePolicy::Constant,
        )
    }

    pub fn with_rate_policy(mut self, policy: RatePolicy) -> Self {
        self.rate_policy = policy;
        self
    }

    fn power_exponent(&self, eta: f64) -> f64 {
        eta / (1.0 - self.alpha.value())
    }

    /// `(alpha - 1) v + 1`, the base of the power transform.
    pub fn power_base(&self, v: f64) -> f64 {
        (self.alpha.value() - 1.0) * v + 1.0
    }
}

/// `Gamma(v)` at step size `eta`.
pub fn gamma_eval(v: f64, config: &TransformConfig, eta: f64) -> Result<f64> {
    log_gamma(v, config, eta).map(f64::exp)
}

/// `log Gamma(v)`; the update is carried out with this to avoid overflow.
pub fn log_gamma(v: f64, config: &TransformConfig, eta: f64) -> Result<f64> {
    match config.family {
        TransformFamily::Exponential => Ok(-eta * v),
        TransformFamily::Power => {
            let base = config.power_base(v);
            let exponent = config.power_exponent(eta);
            if base > 0.0 {
                return Ok(exponent * base.ln());
            }
            // rounding can leave a base that is zero in exact arithmetic slightly
            // negative; with a positive exponent the boundary value is Gamma = 0
            let tol = 4.0 * f64::EPSILON * (1.0 + ((config.alpha.value() - 1.0) * v).abs());
            if base >= -tol && exponent > 0.0 {
                return Ok(f64::NEG_INFINITY);
            }
            Err(Error::Domain(format!(
                "power transform needs (alpha - 1) v + 1 > 0, got {base} at v = {v}"
            )))
        }
    }
}

/// `Gamma'(v)`.
pub fn gamma_prime(v: f64, config: &TransformConfig, eta: f64) -> Result<f64> {
    let g = gamma_eval(v, config, eta)?;
    Ok(g * log_gamma_prime(v, config, eta)?)
}

/// `(log Gamma)'(v)`.
pub fn log_gamma_prime(v: f64, config: &TransformConfig, eta: f64) -> Result<f64> {
    match config.family {
        TransformFamily::Exponential => Ok(-eta),
        TransformFamily::Power => {
            let base = config.power_base(v);
            if !(base > 0.0) {
                return Err(Error::Domain(format!("power base {base} at v = {v}")));
            }
            Ok(-eta / base)
        }
    }
}

/// `Gamma''(v)`.
pub fn gamma_second(v: f64, config: &TransformConfig, eta: f64) -> Result<f64> {
    let g = gamma_eval(v, config, eta)?;
    match config.family {
        TransformFamily::Exponential => Ok(eta * eta * g),
        TransformFamily::Power => {
            // Gamma = s^e with s = (alpha - 1) v + 1, e = eta / (1 - alpha)
            let am1 = config.alpha.value() - 1.0;
            let s = config.power_base(v);
            let e = config.power_exponent(eta);
            Ok(e * (e - 1.0) * am1 * am1 * g / (s * s))
        }
    }
}

/// Left-hand side of the monotonicity condition,
/// `[(alpha - 1)(v - kappa) + 1] (log Gamma)'(v) + 1`, which must be nonnegative.
pub fn monotonicity_lhs(v: f64, config: &TransformConfig, eta: f64) -> Result<f64> {
    let scale = (config.alpha.value() - 1.0) * (v - config.kappa) + 1.0;
    Ok(scale * log_gamma_prime(v, config, eta)? + 1.0)
}

/// Multiplicative update `lambda'_j ∝ lambda_j Gamma(b_j + kappa)`.
///
/// Zero-weight atoms stay at zero and are not evaluated. A power-domain
/// violation is reported with the offending atom index.
pub fn apply_update(
    weights: &[f64],
    gradient: &[f64],
    config: &TransformConfig,
    eta: f64,
) -> Result<Vec<f64>> {
    if weights.len() != gradient.len() {
        return Err(Error::DimensionMismatch {
            expected: weights.len(),
            got: gradient.len(),
        });
    }
    simplex::check(weights)?;
    let mut log_w = Vec::with_capacity(weights.len());
    for (j, (&l, &b)) in weights.iter().zip(gradient).enumerate() {
        if l == 0.0 {
            log_w.push(f64::NEG_INFINITY);
            continue;
        }
        let v = b + config.kappa;
        if !v.is_finite() {
            return Err(Error::TransformDomain { atom: j, value: v });
        }
        let lg =
            log_gamma(v, config, eta).map_err(|_| Error::TransformDomain { atom: j, value: v })?;
        log_w.push(l.ln() + lg);
    }
    simplex::normalize_log(&log_w)
}

/// Verdict of an admissibility check.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Verdict {
    Ok,
    /// Depends on the gradient range; must be checked against observed gradients.
    Conditional,
    Violation,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ValidationReport {
    pub verdict: Verdict,
    pub reason: String,
}

impl ValidationReport {
    fn ok(reason: impl Into<String>) -> Self {
        Self {
            verdict: Verdict::Ok,
            reason: reason.into(),
        }
    }

    fn conditional(reason: impl Into<String>) -> Self {
        Self {
            verdict: Verdict::Conditional,
            reason: reason.into(),
        }
    }

    fn violation(reason: impl Into<String>) -> Self {
        Self {
            verdict: Verdict::Violation,
            reason: reason.into(),
        }
    }

    pub fn is_ok(&self) -> bool {
        self.verdict == Verdict::Ok
    }

    pub fn is_violation(&self) -> bool {
        self.verdict == Verdict::Violation
    }
}

impl fmt::Display for ValidationReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let v = match self.verdict {
            Verdict::Ok => "ok",
            Verdict::Conditional => "conditional",
            Verdict::Violation => "violation",
        };
        write!(f, "{v}: {}", self.reason)
    }
}

/// Monotonicity-tier admissibility. `eta0` is checked, which bounds every
/// step of the supported schedules.
pub fn validate_monotonicity(config: &TransformConfig) -> ValidationReport {
    let eta = config.eta0;
    let alpha = config.alpha;
    let eta_ok = eta > 0.0 && eta <= 1.0;
    match config.family {
        TransformFamily::Exponential if alpha.is_one() => {
            if eta_ok {
                ValidationReport::ok("exponential, alpha = 1, eta in (0, 1]")
            } else {
                ValidationReport::violation(format!(
                    "exponential with alpha = 1 needs eta in (0, 1], got {eta}"
                ))
            }
        }
        TransformFamily::Exponential => ValidationReport::conditional(
            "exponential with alpha != 1: the condition depends on the gradient range",
        ),
        TransformFamily::Power => {
            if alpha.is_one() {
                return ValidationReport::violation("power transform undefined for alpha = 1");
            }
            if !eta_ok {
                return ValidationReport::violation(format!(
                    "power transform needs eta in (0, 1], got {eta}"
                ));
            }
            let signed = (alpha.value() - 1.0) * config.kappa;
            if signed >= 0.0 {
                ValidationReport::ok("power, eta in (0, 1], (alpha - 1) kappa >= 0")
            } else {
                ValidationReport::violation(format!(
                    "power transform needs (alpha - 1) kappa >= 0, got {signed}"
                ))
            }
        }
    }
}

/// Convergence-tier admissibility given a bound `b_inf` on `|b|`
/// (`f64::INFINITY` when unknown).
pub fn validate_convergence(config: &TransformConfig, b_inf: f64) -> ValidationReport {
    let eta = config.eta0;
    let alpha = config.alpha;
    match config.family {
        TransformFamily::Exponential if alpha.is_one() => {
            if eta > 0.0 && eta < 1.0 {
                ValidationReport::ok("exponential, alpha = 1, eta in (0, 1)")
            } else {
                ValidationReport::violation(format!(
                    "exponential with alpha = 1 needs eta in (0, 1), got {eta}"
                ))
            }
        }
        TransformFamily::Exponential => {
            if !(b_inf >= 0.0) || !b_inf.is_finite() {
                return ValidationReport::violation(
                    "exponential with alpha != 1 needs a finite gradient bound b_inf",
                );
            }
            let limit = 1.0 / ((alpha.value() - 1.0).abs() * b_inf + 1.0);
            if eta > 0.0 && eta < limit {
                ValidationReport::ok(format!("exponential, eta < {limit}"))
            } else {
                ValidationReport::violation(format!(
                    "exponential with alpha != 1 needs eta < 1/(|alpha - 1| b_inf + 1) = {limit}, got {eta}"
                ))
            }
        }
        TransformFamily::Power => {
            if alpha.is_one() {
                return ValidationReport::violation("power transform undefined for alpha = 1");
            }
            if !(eta > 0.0 && eta <= 1.0) {
                return ValidationReport::violation(format!(
                    "power transform needs eta in (0, 1], got {eta}"
                ));
            }
            let kappa = config.kappa;
            if alpha.value() > 1.0 {
                if kappa > 0.0 {
                    ValidationReport::ok("power, alpha > 1, kappa > 0")
                } else {
                    ValidationReport::violation(format!(
                        "power with alpha > 1 needs kappa > 0, got {kappa}"
                    ))
                }
            } else if kappa <= 0.0 {
                ValidationReport::ok("power, alpha < 1, kappa <= 0")
            } else {
                ValidationReport::violation(format!(
                    "power with alpha < 1 needs kappa <= 0, got {kappa}"
                ))
            }
        }
    }
}

/// Step size `eta_n` for step `n` (1-based) of a run of `horizon` steps.
pub fn learning_rate(config: &TransformConfig, n: usize, horizon: usize) -> Result<f64> {
    if n < 1 {
        return Err(Error::Argument("step index starts at 1".into()));
    }
    match config.rate_policy {
        RatePolicy::Constant => Ok(config.eta0),
        RatePolicy::InverseSqrtN => Ok(config.eta0 / (n as f64).sqrt()),
        RatePolicy::InverseSqrtHorizon => {
            if horizon < 1 || n > horizon {
                return Err(Error::Argument(format!(
                    "step {n} outside horizon {horizon}"
                )));
            }
            Ok(config.eta0 / (horizon as f64).sqrt())
        }
    }
}
