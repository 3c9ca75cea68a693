//! Monte Carlo gradient estimates and the mixture-weight descent loop at fixed atoms.
//!
//! With `Y_1..Y_M ~ mu_lambda k` and `r_jm = k(theta_j, Y_m) / mu_lambda k(Y_m)`,
//! the per-atom gradient is estimated by
//!
//! ```text
//! alpha = 1:   b_j = (1/M) sum_m r_jm log(mu k(Y_m) / p(Y_m))
//! alpha != 1:  b_j = [(1/M) sum_m r_jm (mu k(Y_m) / p(Y_m))^(alpha - 1) - 1] / (alpha - 1)
//! ```
//!
//! The second line is `(1/M) sum_m r_jm f_alpha'(mu k / p)` with the Monte Carlo
//! estimate `(1/M) sum_m r_jm` of the kernel mass replaced by its exact value 1.
//! Both are unbiased; this one keeps `(alpha - 1) b_j + 1` positive so the power
//! transform is always defined, and it turns the `alpha = 0, eta = 1` power step
//! into the Population Monte Carlo weight update exactly.

use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;

use crate::divergence::{elbo_renyi_bound, AlphaParam};
use crate::error::{Error, Result};
use crate::exact::DiscreteProblem;
use crate::mixture::{sample_mixture, GaussianKernel, ParticleMixture};
use crate::rng::{child_seed, seeded, Stream};
use crate::simplex;
use crate::targets::TargetModel;
use crate::transforms::{apply_update, learning_rate, TransformConfig, TransformFamily};

/// Per-atom gradient estimate. Non-finite entries are flagged and carry no value.
#[derive(Debug, Clone, PartialEq)]
pub struct GradientEstimate {
    values: Vec<f64>,
    undefined: Vec<bool>,
    sample_count: usize,
    /// `log((alpha - 1) b_j + 1)` kept from the log-domain computation.
    log_base: Option<Vec<f64>>,
}

impl GradientEstimate {
    /// From raw values; non-finite entries become flagged.
    pub fn from_values(values: Vec<f64>, sample_count: usize) -> Result<Self> {
        if sample_count == 0 {
            return Err(Error::Argument("sample count must be >= 1".into()));
        }
        let undefined: Vec<bool> = values.iter().map(|v| !v.is_finite()).collect();
        let values = values
            .into_iter()
            .map(|v| if v.is_finite() { v } else { f64::NAN })
            .collect();
        Ok(Self {
            values,
            undefined,
            sample_count,
            log_base: None,
        })
    }

    /// `log((alpha - 1) b_j + 1)` when it was computed directly (alpha != 1).
    pub fn log_base(&self) -> Option<&[f64]> {
        self.log_base.as_deref()
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn sample_count(&self) -> usize {
        self.sample_count
    }

    pub fn get(&self, j: usize) -> Option<f64> {
        if self.undefined[j] {
            None
        } else {
            Some(self.values[j])
        }
    }

    pub fn flagged(&self) -> Vec<usize> {
        self.undefined
            .iter()
            .enumerate()
            .filter(|(_, u)| **u)
            .map(|(j, _)| j)
            .collect()
    }

    pub fn is_complete(&self) -> bool {
        !self.undefined.iter().any(|u| *u)
    }

    /// Values when no entry is flagged.
    pub fn values(&self) -> Result<&[f64]> {
        if self.is_complete() {
            Ok(&self.values)
        } else {
            Err(Error::NonFiniteGradient {
                step: 0,
                atoms: self.flagged(),
            })
        }
    }

    pub fn max_abs(&self) -> f64 {
        self.values
            .iter()
            .zip(&self.undefined)
            .filter(|(_, u)| !**u)
            .map(|(v, _)| v.abs())
            .fold(0.0, f64::max)
    }

    /// ELBO (alpha = 1) or Renyi bound for `mu_lambda k` from this estimate.
    pub fn bound(&self, weights: &[f64], alpha: AlphaParam) -> Result<f64> {
        let values = self.values()?;
        match &self.log_base {
            Some(log_base) if !alpha.is_one() => {
                simplex::check(weights)?;
                if weights.len() != log_base.len() {
                    return Err(Error::DimensionMismatch {
                        expected: log_base.len(),
                        got: weights.len(),
                    });
                }
                let terms: Vec<f64> = weights
                    .iter()
                    .zip(log_base)
                    .map(|(l, s)| l.ln() + s)
                    .collect();
                let log_arg = simplex::log_sum_exp(&terms);
                if log_arg == f64::NEG_INFINITY || log_arg.is_nan() {
                    return Err(Error::BoundUndefined(0.0));
                }
                Ok(log_arg / (1.0 - alpha.value()))
            }
            _ => elbo_renyi_bound(weights, values, alpha),
        }
    }
}

/// Gradient estimate from samples drawn from `mix` pushed through `kernel`.
pub fn estimate_gradient(
    mix: &ParticleMixture,
    kernel: &GaussianKernel,
    target: &dyn TargetModel,
    alpha: AlphaParam,
    samples: &[Vec<f64>],
) -> Result<GradientEstimate> {
    if samples.is_empty() {
        return Err(Error::Argument("need at least one sample".into()));
    }
    if target.dim() != mix.dim() {
        return Err(Error::DimensionMismatch {
            expected: mix.dim(),
            got: target.dim(),
        });
    }
    let log_kernel = mix.log_kernel_matrix(kernel, samples)?;
    let log_mix = mix.log_mixture_from_kernel(&log_kernel);
    let log_u: Vec<f64> = samples
        .iter()
        .zip(&log_mix)
        .map(|(y, lm)| lm - target.log_density(y))
        .collect();
    Ok(estimate_from_log_parts(
        &log_kernel,
        &log_mix,
        &log_u,
        alpha,
    ))
}

/// Core of [`estimate_gradient`] on precomputed `log k(theta_j, Y_m)`,
/// `log mu k(Y_m)` and `log u_m = log mu k(Y_m) - log p(Y_m)`.
pub(crate) fn estimate_from_log_parts(
    log_kernel: &[Vec<f64>],
    log_mix: &[f64],
    log_u: &[f64],
    alpha: AlphaParam,
) -> GradientEstimate {
    let m = log_mix.len();
    let log_m = (m as f64).ln();
    let mut log_base = Vec::with_capacity(log_kernel.len());
    let values: Vec<f64> = log_kernel
        .iter()
        .map(|row| {
            if alpha.is_one() {
                let mut acc = 0.0;
                for ((lk, lm), lu) in row.iter().zip(log_mix).zip(log_u) {
                    if lu.is_nan() || *lu == f64::INFINITY {
                        return f64::INFINITY;
                    }
                    acc += (lk - lm).exp() * lu;
                }
                acc / m as f64
            } else {
                let d = alpha.value() - 1.0;
                let terms: Vec<f64> = row
                    .iter()
                    .zip(log_mix)
                    .zip(log_u)
                    .map(|((lk, lm), lu)| lk - lm + d * lu)
                    .collect();
                if terms.iter().any(|t| t.is_nan()) {
                    log_base.push(f64::NAN);
                    return f64::NAN;
                }
                let log_mean = simplex::log_sum_exp(&terms) - log_m;
                log_base.push(log_mean);
                (log_mean.exp() - 1.0) / d
            }
        })
        .collect();
    let mut estimate = GradientEstimate::from_values(values, m).expect("m >= 1");
    if !alpha.is_one() {
        estimate.log_base = Some(log_base);
    }
    estimate
}

/// Grid indices of a discrete problem drawn i.i.d. with probabilities `mu k(y_i)`
/// (normalised to sum to one).
pub fn sample_grid(
    problem: &DiscreteProblem,
    weights: &[f64],
    count: usize,
    rng: &mut crate::rng::SeedRng,
) -> Result<Vec<usize>> {
    problem.check_weights(weights)?;
    let probs = simplex::normalize_log(&problem.log_mixture(weights))?;
    let dist = WeightedIndex::new(&probs).map_err(|e| Error::DegenerateWeights(e.to_string()))?;
    Ok((0..count).map(|_| dist.sample(rng)).collect())
}

/// [`estimate_gradient`] on a discrete problem, for grid samples drawn from `mu k`.
pub fn estimate_gradient_discrete(
    problem: &DiscreteProblem,
    weights: &[f64],
    alpha: AlphaParam,
    indices: &[usize],
) -> Result<GradientEstimate> {
    problem.check_weights(weights)?;
    if indices.is_empty() {
        return Err(Error::Argument("need at least one sample".into()));
    }
    if let Some(i) = indices.iter().find(|i| **i >= problem.grid_count()) {
        return Err(Error::Argument(format!("grid index {i} out of range")));
    }
    let full_mix = problem.log_mixture(weights);
    let log_kernel: Vec<Vec<f64>> = problem
        .log_kernel()
        .iter()
        .map(|row| indices.iter().map(|&i| row[i]).collect())
        .collect();
    let log_mix: Vec<f64> = indices.iter().map(|&i| full_mix[i]).collect();
    let log_u: Vec<f64> = indices
        .iter()
        .map(|&i| full_mix[i] - problem.log_target()[i])
        .collect();
    Ok(estimate_from_log_parts(
        &log_kernel,
        &log_mix,
        &log_u,
        alpha,
    ))
}

/// Weight update from an estimate; refuses flagged estimates.
pub fn update_weights(
    weights: &[f64],
    estimate: &GradientEstimate,
    config: &TransformConfig,
    eta: f64,
) -> Result<Vec<f64>> {
    let b = estimate.values()?;
    match estimate.log_base() {
        // with kappa = 0 the power step is lambda_j S_j^(eta / (1 - alpha)) with
        // S_j = (alpha - 1) b_j + 1, which stays exact when S_j underflows
        Some(log_base) if config.family == TransformFamily::Power && config.kappa == 0.0 => {
            if weights.len() != log_base.len() {
                return Err(Error::DimensionMismatch {
                    expected: weights.len(),
                    got: log_base.len(),
                });
            }
            simplex::check(weights)?;
            let exponent = eta / (1.0 - config.alpha.value());
            let log_w: Vec<f64> = weights
                .iter()
                .zip(log_base)
                .map(|(l, s)| {
                    if *l == 0.0 {
                        f64::NEG_INFINITY
                    } else {
                        l.ln() + exponent * s
                    }
                })
                .collect();
            simplex::normalize_log(&log_w)
        }
        _ => apply_update(weights, b, config, eta),
    }
}

/// What to do when an estimate has non-finite entries.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum FlagPolicy {
    /// Stop the run and report the step.
    #[default]
    Abort,
    /// Keep the weights of that step unchanged and continue.
    SkipStep,
}

/// Record of one inner step.
#[derive(Debug, Clone, PartialEq)]
pub struct InnerStep {
    /// 1-based step index.
    pub step: usize,
    pub seed: u64,
    pub eta: f64,
    /// Weights the gradient was estimated at.
    pub weights_before: Vec<f64>,
    pub weights_after: Vec<f64>,
    /// ELBO / Renyi bound at `weights_before`; `None` when undefined.
    pub bound: Option<f64>,
    pub mean_gradient: f64,
    pub max_abs_gradient: f64,
    pub skipped: bool,
}

/// Result of an exploitation run.
#[derive(Debug, Clone, PartialEq)]
pub struct InnerRun {
    pub initial: Vec<f64>,
    pub steps: Vec<InnerStep>,
}

impl InnerRun {
    pub fn final_weights(&self) -> &[f64] {
        self.steps
            .last()
            .map_or(&self.initial, |s| &s.weights_after)
    }

    /// Largest `|b|` seen, the running estimate of the gradient bound.
    pub fn max_abs_gradient(&self) -> f64 {
        self.steps
            .iter()
            .map(|s| s.max_abs_gradient)
            .fold(0.0, f64::max)
    }

    /// `sum_n w_n lambda^(n)` with `w_n = eta_n / sum eta` over the iterates the
    /// gradients were taken at.
    pub fn averaged(&self) -> Result<Vec<f64>> {
        let iterates: Vec<Vec<f64>> = self
            .steps
            .iter()
            .map(|s| s.weights_before.clone())
            .collect();
        let etas: Vec<f64> = self.steps.iter().map(|s| s.eta).collect();
        averaged_iterate(&iterates, &etas)
    }
}

/// Options for [`run_inner`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct InnerOptions {
    pub steps: usize,
    pub samples: usize,
    pub flag_policy: FlagPolicy,
}

/// Fixed-atom descent: each step draws `samples` fresh points from the current
/// `mu_lambda k`, estimates the gradient and applies the transform update.
/// Step `n` uses the stream `child_seed(seed, Inner, n)`.
pub fn run_inner(
    mix: &ParticleMixture,
    kernel: &GaussianKernel,
    target: &dyn TargetModel,
    config: &TransformConfig,
    options: InnerOptions,
    seed: u64,
) -> Result<InnerRun> {
    if options.samples == 0 {
        return Err(Error::Argument("sample count must be >= 1".into()));
    }
    let mut run = InnerRun {
        initial: mix.weights().to_vec(),
        steps: Vec::with_capacity(options.steps),
    };
    let mut current = mix.clone();
    for n in 1..=options.steps {
        let step_seed = child_seed(seed, Stream::Inner, n as u64);
        let mut rng = seeded(step_seed);
        let eta = learning_rate(config, n, options.steps)?;
        let batch = target.minibatch(&mut rng);
        let step_target: &dyn TargetModel = batch.as_deref().unwrap_or(target);
        let samples = sample_mixture(&current, kernel, options.samples, &mut rng)?;
        let estimate = estimate_gradient(&current, kernel, step_target, config.alpha, &samples)?;
        let before = current.weights().to_vec();
        let (after, skipped) = if estimate.is_complete() {
            (update_weights(&before, &estimate, config, eta)?, false)
        } else {
            match options.flag_policy {
                FlagPolicy::Abort => {
                    return Err(Error::NonFiniteGradient {
                        step: n,
                        atoms: estimate.flagged(),
                    })
                }
                FlagPolicy::SkipStep => (before.clone(), true),
            }
        };
        let mean_gradient = match estimate.values() {
            Ok(b) => before.iter().zip(b).map(|(l, v)| l * v).sum(),
            Err(_) => f64::NAN,
        };
        run.steps.push(InnerStep {
            step: n,
            seed: step_seed,
            eta,
            bound: estimate.bound(&before, config.alpha).ok(),
            mean_gradient,
            max_abs_gradient: estimate.max_abs(),
            weights_before: before,
            weights_after: after.clone(),
            skipped,
        });
        current = current.with_weights(after)?;
    }
    Ok(run)
}

/// Sample-based summaries of `q = mu_lambda k` against the target.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MixtureEvaluation {
    /// ELBO (alpha = 1) or Renyi bound; `None` when undefined.
    pub bound: Option<f64>,
    /// `log (1/S) sum_s p(Y_s) / q(Y_s)`, the importance-sampling estimate of
    /// `log int p`.
    pub log_evidence: f64,
}

/// Evaluates `mix` with `count` fresh samples from `mu_lambda k`.
pub fn evaluate_mixture(
    mix: &ParticleMixture,
    kernel: &GaussianKernel,
    target: &dyn TargetModel,
    alpha: AlphaParam,
    count: usize,
    rng: &mut crate::rng::SeedRng,
) -> Result<MixtureEvaluation> {
    if target.dim() != mix.dim() {
        return Err(Error::DimensionMismatch {
            expected: mix.dim(),
            got: target.dim(),
        });
    }
    let samples = sample_mixture(mix, kernel, count, rng)?;
    let log_kernel = mix.log_kernel_matrix(kernel, &samples)?;
    let log_mix = mix.log_mixture_from_kernel(&log_kernel);
    let log_u: Vec<f64> = samples
        .iter()
        .zip(&log_mix)
        .map(|(y, lm)| lm - target.log_density(y))
        .collect();
    let estimate = estimate_from_log_parts(&log_kernel, &log_mix, &log_u, alpha);
    let neg: Vec<f64> = log_u.iter().map(|v| -v).collect();
    Ok(MixtureEvaluation {
        bound: estimate.bound(mix.weights(), alpha).ok(),
        log_evidence: simplex::log_sum_exp(&neg) - (count as f64).ln(),
    })
}

/// `sum_n w_n lambda^(n)` with `w_n = eta_n / sum_k eta_k`.
pub fn averaged_iterate(iterates: &[Vec<f64>], etas: &[f64]) -> Result<Vec<f64>> {
    if iterates.is_empty() {
        return Err(Error::Argument("no iterates to average".into()));
    }
    if iterates.len() != etas.len() {
        return Err(Error::DimensionMismatch {
            expected: iterates.len(),
            got: etas.len(),
        });
    }
    let total: f64 = etas.iter().sum();
    let j = iterates[0].len();
    let mut out = vec![0.0; j];
    for (w, eta) in iterates.iter().zip(etas) {
        if w.len() != j {
            return Err(Error::DimensionMismatch {
                expected: j,
                got: w.len(),
            });
        }
        for (o, v) in out.iter_mut().zip(w) {
            *o += eta / total * v;
        }
    }
    Ok(out)
}
