//! Adaptive importance sampling: the exploration loop with weights
//! `lambda_j ∝ p(theta_j) / q_t(theta_j)` in place of the descent step.

use crate::error::{Error, Result};
use crate::exploration::{run_phases, ExplorationSchedule, OuterOptions, OuterRun, Weighting};
use crate::mixture::{GaussianKernel, ParticleMixture};
use crate::simplex;
use crate::targets::{InitialSampler, TargetModel};

/// Normalised `exp(log p(theta_j) - log q(theta_j))`.
pub fn ais_weights(
    atoms: &[Vec<f64>],
    proposal_log_density: &[f64],
    target: &dyn TargetModel,
) -> Result<Vec<f64>> {
    if atoms.len() != proposal_log_density.len() {
        return Err(Error::DimensionMismatch {
            expected: atoms.len(),
            got: proposal_log_density.len(),
        });
    }
    if let Some(j) = proposal_log_density.iter().position(|q| !q.is_finite()) {
        return Err(Error::Domain(format!(
            "proposal log density at atom {j} is {}",
            proposal_log_density[j]
        )));
    }
    let log_ratio: Vec<f64> = atoms
        .iter()
        .zip(proposal_log_density)
        .map(|(a, q)| target.log_density(a) - q)
        .collect();
    simplex::normalize_log(&log_ratio)
}

/// Importance-sampling counterpart of [`crate::exploration::run_outer`].
pub fn run_ais(
    target: &dyn TargetModel,
    schedule: &ExplorationSchedule,
    initial: &dyn InitialSampler,
    options: OuterOptions,
    seed: u64,
) -> OuterRun {
    run_ais_observed(target, schedule, initial, options, seed, &mut |_, _, _| {
        Ok(())
    })
}

/// [`run_ais`] with a per-phase observer.
pub fn run_ais_observed(
    target: &dyn TargetModel,
    schedule: &ExplorationSchedule,
    initial: &dyn InitialSampler,
    options: OuterOptions,
    seed: u64,
    observer: &mut dyn FnMut(usize, &ParticleMixture, &GaussianKernel) -> Result<()>,
) -> OuterRun {
    run_phases(
        target,
        schedule,
        Weighting::ImportanceSampling,
        initial,
        options,
        seed,
        observer,
    )
}
