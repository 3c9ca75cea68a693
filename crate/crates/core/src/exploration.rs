//! Alternating exploitation (weight descent at fixed atoms) and exploration
//! (multinomial resampling plus Gaussian perturbation of the atoms).
//!
//! Phase `t = 0..=T` runs on `J_t` atoms with uniform initial weights and the
//! bandwidth `h_t = h_0 J_t^(-1/(4+d))`, used both for the mixture kernel and for
//! the perturbation that produces the `J_{t+1}` atoms of the next phase. The
//! returned mixture is the one optimised in phase `T`.
//!
//! Seeds: the initial draw uses `child_seed(seed, Initial, 0)`; phase `t` uses
//! `s_t = child_seed(seed, Outer, t)`, from which the inner loop, the bound
//! evaluations (`Evaluation, 0/1`), the exploration move (`Exploration, 0`) and
//! importance-weighting minibatches (`Minibatch, 0`) are derived.

use rand::Rng;
use rand_distr::StandardNormal;

use crate::divergence::AlphaParam;
use crate::error::{Error, Result};
use crate::mixture::{log_mixture_density, GaussianKernel, ParticleMixture};
use crate::rng::{child_seed, seeded, SeedRng, Stream};
use crate::stochastic::{evaluate_mixture, run_inner, FlagPolicy, InnerOptions, InnerRun};
use crate::targets::{InitialSampler, TargetModel};
use crate::transforms::TransformConfig;

/// Particle and sample counts per phase.
#[derive(Debug, Clone, PartialEq)]
pub struct ExplorationSchedule {
    pub outer_steps: usize,
    pub particles: Vec<usize>,
    pub samples: Vec<usize>,
    pub inner_steps: usize,
    pub bandwidth_scale: f64,
}

impl ExplorationSchedule {
    pub fn new(
        outer_steps: usize,
        particles: Vec<usize>,
        samples: Vec<usize>,
        inner_steps: usize,
        bandwidth_scale: f64,
    ) -> Result<Self> {
        let s = Self {
            outer_steps,
            particles,
            samples,
            inner_steps,
            bandwidth_scale,
        };
        s.validate()?;
        Ok(s)
    }

    /// `J_t = J`, `M_t = M` for every phase.
    pub fn constant(
        outer_steps: usize,
        particles: usize,
        samples: usize,
        inner_steps: usize,
    ) -> Result<Self> {
        Self::new(
            outer_steps,
            vec![particles; outer_steps + 1],
            vec![samples; outer_steps + 1],
            inner_steps,
            1.0,
        )
    }

    /// `J_t = M_t = J_0 + t`.
    pub fn growing(outer_steps: usize, initial: usize, inner_steps: usize) -> Result<Self> {
        let counts: Vec<usize> = (0..=outer_steps).map(|t| initial + t).collect();
        Self::new(outer_steps, counts.clone(), counts, inner_steps, 1.0)
    }

    pub fn with_bandwidth_scale(mut self, h0: f64) -> Result<Self> {
        self.bandwidth_scale = h0;
        self.validate()?;
        Ok(self)
    }

    pub fn validate(&self) -> Result<()> {
        if self.outer_steps < 1 {
            return Err(Error::Config("outer steps T must be >= 1".into()));
        }
        let len = self.outer_steps + 1;
        if self.particles.len() != len || self.samples.len() != len {
            return Err(Error::Config(format!(
                "particle and sample schedules need {len} entries, got {} and {}",
                self.particles.len(),
                self.samples.len()
            )));
        }
        if self.particles.iter().chain(&self.samples).any(|c| *c == 0) {
            return Err(Error::Config(
                "particle and sample counts must be >= 1".into(),
            ));
        }
        if !(self.bandwidth_scale > 0.0) || !self.bandwidth_scale.is_finite() {
            return Err(Error::Config(format!(
                "bandwidth scale must be positive, got {}",
                self.bandwidth_scale
            )));
        }
        Ok(())
    }
}

/// `h0 * J^(-1/(4+d))`.
pub fn bandwidth(particles: usize, dim: usize, h0: f64) -> Result<f64> {
    if particles == 0 || dim == 0 {
        return Err(Error::Argument(format!(
            "bandwidth needs J >= 1 and d >= 1, got J={particles}, d={dim}"
        )));
    }
    if !(h0 > 0.0) || !h0.is_finite() {
        return Err(Error::Argument(format!("h0 must be positive, got {h0}")));
    }
    Ok(h0 * (particles as f64).powf(-1.0 / (4.0 + dim as f64)))
}

/// `count` atoms drawn i.i.d. with probabilities given by the mixture weights.
pub fn resample(mix: &ParticleMixture, count: usize, rng: &mut SeedRng) -> Vec<Vec<f64>> {
    mix.sample_indices(count, rng)
        .into_iter()
        .map(|j| mix.atoms()[j].clone())
        .collect()
}

/// Adds an independent `h * N(0, I)` offset to each atom.
pub fn perturb(atoms: Vec<Vec<f64>>, h: f64, rng: &mut SeedRng) -> Result<Vec<Vec<f64>>> {
    if !(h > 0.0) || !h.is_finite() {
        return Err(Error::Argument(format!(
            "bandwidth must be positive, got {h}"
        )));
    }
    Ok(atoms
        .into_iter()
        .map(|a| {
            a.into_iter()
                .map(|v| {
                    let z: f64 = rng.sample(StandardNormal);
                    v + h * z
                })
                .collect()
        })
        .collect())
}

/// How a phase turns its atoms into weights.
#[derive(Clone, Copy)]
pub enum Weighting<'a> {
    /// Inner descent from uniform weights.
    Descent {
        config: &'a TransformConfig,
        flag_policy: FlagPolicy,
    },
    /// Weights `p / q_t` with `q_0` the initial sampler and `q_t` the previous
    /// phase's mixture.
    ImportanceSampling,
}

/// Options shared by descent and importance-sampling runs.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OuterOptions {
    /// Divergence order used for the recorded bounds.
    pub alpha: AlphaParam,
    /// Samples for each bound evaluation; `None` uses `M_t`. Zero disables it.
    pub eval_samples: Option<usize>,
}

/// Record of one phase.
#[derive(Debug, Clone, PartialEq)]
pub struct OuterRecord {
    pub t: usize,
    pub seed: u64,
    pub particles: usize,
    pub samples: usize,
    pub bandwidth: f64,
    /// Bound at uniform weights on this phase's atoms.
    pub bound_before: Option<f64>,
    /// Bound at the optimised weights.
    pub bound_after: Option<f64>,
    pub log_evidence_after: Option<f64>,
    /// Inner trace for descent phases.
    pub inner: Option<InnerRun>,
    pub max_abs_gradient: f64,
}

/// Result of an outer run. On failure `records` holds the completed phases.
#[derive(Debug)]
pub struct OuterRun {
    pub mixture: Option<ParticleMixture>,
    pub kernel: Option<GaussianKernel>,
    pub records: Vec<OuterRecord>,
    pub failure: Option<Error>,
}

impl OuterRun {
    /// Final mixture, or the failure.
    pub fn into_result(self) -> Result<(ParticleMixture, Vec<OuterRecord>)> {
        match (self.failure, self.mixture) {
            (None, Some(m)) => Ok((m, self.records)),
            (Some(e), _) => Err(e),
            (None, None) => Err(Error::Argument("run produced no mixture".into())),
        }
    }
}

/// Descent driver without a phase observer.
pub fn run_outer(
    target: &dyn TargetModel,
    schedule: &ExplorationSchedule,
    config: &TransformConfig,
    flag_policy: FlagPolicy,
    initial: &dyn InitialSampler,
    options: OuterOptions,
    seed: u64,
) -> OuterRun {
    run_phases(
        target,
        schedule,
        Weighting::Descent {
            config,
            flag_policy,
        },
        initial,
        options,
        seed,
        &mut |_, _, _| Ok(()),
    )
}

/// Shared outer loop. `observer(t, mixture, kernel)` sees each optimised phase.
pub fn run_phases(
    target: &dyn TargetModel,
    schedule: &ExplorationSchedule,
    weighting: Weighting<'_>,
    initial: &dyn InitialSampler,
    options: OuterOptions,
    seed: u64,
    observer: &mut dyn FnMut(usize, &ParticleMixture, &GaussianKernel) -> Result<()>,
) -> OuterRun {
    let mut run = OuterRun {
        mixture: None,
        kernel: None,
        records: Vec::with_capacity(schedule.outer_steps + 1),
        failure: None,
    };
    if let Err(e) = drive(
        target, schedule, weighting, initial, options, seed, observer, &mut run,
    ) {
        run.failure = Some(e);
    }
    run
}

#[allow(clippy::too_many_arguments)]
fn drive(
    target: &dyn TargetModel,
    schedule: &ExplorationSchedule,
    weighting: Weighting<'_>,
    initial: &dyn InitialSampler,
    options: OuterOptions,
    seed: u64,
    observer: &mut dyn FnMut(usize, &ParticleMixture, &GaussianKernel) -> Result<()>,
    run: &mut OuterRun,
) -> Result<()> {
    schedule.validate()?;
    let dim = target.dim();
    if initial.dim() != dim {
        return Err(Error::DimensionMismatch {
            expected: dim,
            got: initial.dim(),
        });
    }
    if let Weighting::Descent { config, .. } = weighting {
        if config.alpha != options.alpha {
            return Err(Error::Config(
                "bound order differs from the transform's alpha".into(),
            ));
        }
    }
    let mut atoms = initial.sample(
        schedule.particles[0],
        &mut seeded(child_seed(seed, Stream::Initial, 0)),
    );
    let mut previous: Option<(ParticleMixture, GaussianKernel)> = None;
    for t in 0..=schedule.outer_steps {
        let phase_seed = child_seed(seed, Stream::Outer, t as u64);
        let particles = schedule.particles[t];
        let samples = schedule.samples[t];
        let kernel = GaussianKernel::new(bandwidth(particles, dim, schedule.bandwidth_scale)?)?;
        let uniform = ParticleMixture::uniform(atoms)?;
        let eval_count = options.eval_samples.unwrap_or(samples);
        let evaluate = |mix: &ParticleMixture, index: u64| -> Result<Option<_>> {
            if eval_count == 0 {
                return Ok(None);
            }
            let mut rng = seeded(child_seed(phase_seed, Stream::Evaluation, index));
            evaluate_mixture(mix, &kernel, target, options.alpha, eval_count, &mut rng).map(Some)
        };
        let before = evaluate(&uniform, 0)?;
        let (mixture, inner) = match weighting {
            Weighting::Descent {
                config,
                flag_policy,
            } => {
                let inner = run_inner(
                    &uniform,
                    &kernel,
                    target,
                    config,
                    InnerOptions {
                        steps: schedule.inner_steps,
                        samples,
                        flag_policy,
                    },
                    phase_seed,
                )?;
                let mix = uniform.with_weights(inner.final_weights().to_vec())?;
                (mix, Some(inner))
            }
            Weighting::ImportanceSampling => {
                let log_q: Vec<f64> = match &previous {
                    None => uniform
                        .atoms()
                        .iter()
                        .map(|a| initial.log_density(a))
                        .collect(),
                    Some((mix, k)) => uniform
                        .atoms()
                        .iter()
                        .map(|a| log_mixture_density(mix, k, a))
                        .collect::<Result<_>>()?,
                };
                let mut rng = seeded(child_seed(phase_seed, Stream::Minibatch, 0));
                let batch = target.minibatch(&mut rng);
                let weighting_target: &dyn TargetModel = batch.as_deref().unwrap_or(target);
                let w = crate::baselines::ais_weights(uniform.atoms(), &log_q, weighting_target)?;
                (uniform.with_weights(w)?, None)
            }
        };
        let after = evaluate(&mixture, 1)?;
        observer(t, &mixture, &kernel)?;
        run.records.push(OuterRecord {
            t,
            seed: phase_seed,
            particles,
            samples,
            bandwidth: kernel.bandwidth(),
            bound_before: before.and_then(|e| e.bound),
            bound_after: after.and_then(|e| e.bound),
            log_evidence_after: after.map(|e| e.log_evidence),
            max_abs_gradient: inner.as_ref().map_or(0.0, InnerRun::max_abs_gradient),
            inner,
        });
        if t == schedule.outer_steps {
            run.mixture = Some(mixture);
            run.kernel = Some(kernel);
            break;
        }
        let mut rng = seeded(child_seed(phase_seed, Stream::Exploration, 0));
        let next = resample(&mixture, schedule.particles[t + 1], &mut rng);
        atoms = perturb(next, kernel.bandwidth(), &mut rng)?;
        previous = Some((mixture, kernel));
    }
    Ok(())
}
