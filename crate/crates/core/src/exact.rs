//! Exact descent on finite problems: a finite atom set, a finite grid of
//! observation points and the counting measure on that grid. Every quantity is
//! a finite sum, so these routines serve as the ground truth for the
//! stochastic code.

use rand::Rng;

use crate::divergence::{f_alpha_prime_log, psi_exact, AlphaParam};
use crate::error::{Error, Result};
use crate::simplex;
use crate::transforms::{apply_update, learning_rate, validate_monotonicity, TransformConfig};

/// Strictly positive kernel matrix `k(theta_j, y_i)` (J x I) and target masses
/// `p(y_i)`, both stored as logarithms.
#[derive(Debug, Clone, PartialEq)]
pub struct DiscreteProblem {
    log_kernel: Vec<Vec<f64>>,
    log_target: Vec<f64>,
}

impl DiscreteProblem {
    /// From positive entries.
    pub fn new(kernel_matrix: Vec<Vec<f64>>, target_masses: Vec<f64>) -> Result<Self> {
        let all_positive = kernel_matrix
            .iter()
            .flatten()
            .chain(&target_masses)
            .all(|v| *v > 0.0 && v.is_finite());
        if !all_positive {
            return Err(Error::Argument(
                "kernel entries and target masses must be finite and > 0".into(),
            ));
        }
        let log_kernel = kernel_matrix
            .iter()
            .map(|row| row.iter().map(|v| v.ln()).collect())
            .collect();
        let log_target = target_masses.iter().map(|v| v.ln()).collect();
        Self::from_log(log_kernel, log_target)
    }

    /// From log entries; every entry must be finite.
    pub fn from_log(log_kernel: Vec<Vec<f64>>, log_target: Vec<f64>) -> Result<Self> {
        if log_kernel.is_empty() || log_target.is_empty() {
            return Err(Error::Argument(
                "need at least one atom and one grid point".into(),
            ));
        }
        let grid = log_target.len();
        if let Some(row) = log_kernel.iter().find(|r| r.len() != grid) {
            return Err(Error::DimensionMismatch {
                expected: grid,
                got: row.len(),
            });
        }
        if !log_kernel
            .iter()
            .flatten()
            .chain(&log_target)
            .all(|v| v.is_finite())
        {
            return Err(Error::Argument("log entries must be finite".into()));
        }
        let problem = Self {
            log_kernel,
            log_target,
        };
        if !problem.target_mass().is_finite() {
            return Err(Error::Argument("total target mass must be finite".into()));
        }
        Ok(problem)
    }

    /// Random instance: `J` in `atoms`, `I` in `grid`, kernel entries
    /// log-uniform on `[e^-3, e^3]` then each row normalised to unit mass,
    /// target masses log-uniform on `[e^-1, e^1]` rescaled to a total mass
    /// log-uniform on `[e^-1, e^1]`.
    pub fn random<R: Rng + ?Sized>(
        rng: &mut R,
        atoms: std::ops::RangeInclusive<usize>,
        grid: std::ops::RangeInclusive<usize>,
    ) -> Self {
        let j = rng.random_range(atoms);
        let i = rng.random_range(grid);
        let log_kernel: Vec<Vec<f64>> = (0..j)
            .map(|_| {
                let row: Vec<f64> = (0..i).map(|_| rng.random_range(-3.0..3.0)).collect();
                let norm = simplex::log_sum_exp(&row);
                row.into_iter().map(|v| v - norm).collect()
            })
            .collect();
        let raw: Vec<f64> = (0..i).map(|_| rng.random_range(-1.0..1.0)).collect();
        let log_total = rng.random_range(-1.0..1.0) - simplex::log_sum_exp(&raw);
        let log_target = raw.into_iter().map(|v| v + log_total).collect();
        Self::from_log(log_kernel, log_target).expect("generated entries are finite")
    }

    /// Standard test instance with `J in 2..=8`, `I in 5..=50`.
    pub fn random_default<R: Rng + ?Sized>(rng: &mut R) -> Self {
        Self::random(rng, 2..=8, 5..=50)
    }

    pub fn atom_count(&self) -> usize {
        self.log_kernel.len()
    }

    pub fn grid_count(&self) -> usize {
        self.log_target.len()
    }

    pub fn log_kernel(&self) -> &[Vec<f64>] {
        &self.log_kernel
    }

    pub fn log_target(&self) -> &[f64] {
        &self.log_target
    }

    pub fn kernel_matrix(&self) -> Vec<Vec<f64>> {
        self.log_kernel
            .iter()
            .map(|r| r.iter().map(|v| v.exp()).collect())
            .collect()
    }

    pub fn target_masses(&self) -> Vec<f64> {
        self.log_target.iter().map(|v| v.exp()).collect()
    }

    /// `sum_i p(y_i)`.
    pub fn target_mass(&self) -> f64 {
        self.log_target.iter().map(|v| v.exp()).sum()
    }

    pub fn check_weights(&self, weights: &[f64]) -> Result<()> {
        if weights.len() != self.atom_count() {
            return Err(Error::DimensionMismatch {
                expected: self.atom_count(),
                got: weights.len(),
            });
        }
        simplex::check(weights)
    }

    /// `log mu_lambda k(y_i)` for every grid point.
    pub fn log_mixture(&self, weights: &[f64]) -> Vec<f64> {
        let log_w: Vec<f64> = weights.iter().map(|w| w.ln()).collect();
        let mut buf = vec![0.0; self.atom_count()];
        (0..self.grid_count())
            .map(|i| {
                for (j, slot) in buf.iter_mut().enumerate() {
                    *slot = log_w[j] + self.log_kernel[j][i];
                }
                simplex::log_sum_exp(&buf)
            })
            .collect()
    }
}

/// `b_j = sum_i k(theta_j, y_i) f_alpha'(mu k(y_i) / p(y_i))`.
pub fn exact_gradient(
    problem: &DiscreteProblem,
    weights: &[f64],
    alpha: AlphaParam,
) -> Result<Vec<f64>> {
    problem.check_weights(weights)?;
    let log_mix = problem.log_mixture(weights);
    let fprime: Vec<f64> = log_mix
        .iter()
        .zip(problem.log_target())
        .map(|(lm, lp)| f_alpha_prime_log(lm - lp, alpha))
        .collect();
    let b: Vec<f64> = problem
        .log_kernel()
        .iter()
        .map(|row| row.iter().zip(&fprime).map(|(lk, fp)| lk.exp() * fp).sum())
        .collect();
    let bad: Vec<usize> = b
        .iter()
        .enumerate()
        .filter(|(_, v)| !v.is_finite())
        .map(|(j, _)| j)
        .collect();
    if bad.is_empty() {
        Ok(b)
    } else {
        Err(Error::NonFiniteGradient {
            step: 0,
            atoms: bad,
        })
    }
}

/// One exact step `lambda'_j ∝ lambda_j Gamma(b_j + kappa)`.
pub fn exact_one_step(
    problem: &DiscreteProblem,
    weights: &[f64],
    config: &TransformConfig,
    eta: f64,
) -> Result<Vec<f64>> {
    let b = exact_gradient(problem, weights, config.alpha)?;
    apply_update(weights, &b, config, eta)
}

/// Iterates of an exact run; `weights`, `psi` have `steps + 1` entries,
/// `gradients` and `etas` one per step taken.
#[derive(Debug, Clone, PartialEq)]
pub struct ExactTrace {
    pub weights: Vec<Vec<f64>>,
    pub psi: Vec<f64>,
    pub gradients: Vec<Vec<f64>>,
    pub etas: Vec<f64>,
}

impl ExactTrace {
    pub fn final_weights(&self) -> &[f64] {
        self.weights.last().expect("trace holds the initial state")
    }
}

/// `steps` exact iterations from `initial`. Rejects configurations that
/// violate the monotonicity conditions; see [`run_exact_unchecked`].
pub fn run_exact(
    problem: &DiscreteProblem,
    initial: &[f64],
    config: &TransformConfig,
    steps: usize,
) -> Result<ExactTrace> {
    let report = validate_monotonicity(config);
    if report.is_violation() {
        return Err(Error::Config(report.to_string()));
    }
    run_exact_unchecked(problem, initial, config, steps)
}

/// [`run_exact`] without the admissibility check.
pub fn run_exact_unchecked(
    problem: &DiscreteProblem,
    initial: &[f64],
    config: &TransformConfig,
    steps: usize,
) -> Result<ExactTrace> {
    let mut trace = ExactTrace {
        weights: vec![initial.to_vec()],
        psi: vec![psi_exact(problem, initial, config.alpha)?],
        gradients: Vec::with_capacity(steps),
        etas: Vec::with_capacity(steps),
    };
    let mut current = initial.to_vec();
    for n in 1..=steps {
        let eta = learning_rate(config, n, steps)?;
        let b = exact_gradient(problem, &current, config.alpha).map_err(|e| match e {
            Error::NonFiniteGradient { atoms, .. } => Error::NonFiniteGradient { step: n, atoms },
            other => other,
        })?;
        current = apply_update(&current, &b, config, eta)?;
        trace.psi.push(psi_exact(problem, &current, config.alpha)?);
        trace.weights.push(current.clone());
        trace.gradients.push(b);
        trace.etas.push(eta);
    }
    Ok(trace)
}
