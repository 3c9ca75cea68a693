//! (alpha, Gamma)-descent: alpha-divergence minimisation over mixture weights of
//! Dirac measures pushed through a Markov kernel, with exact (discrete) and
//! Monte Carlo gradient paths, an exploration loop that moves the atoms, and an
//! adaptive importance sampling baseline.

pub mod baselines;
pub mod diagnostics;
pub mod divergence;
pub mod error;
pub mod exact;
pub mod exploration;
pub mod harness;
pub mod mixture;
pub mod rng;
pub mod simplex;
pub mod stochastic;
pub mod targets;
pub mod transforms;

pub use baselines::{ais_weights, run_ais};
pub use diagnostics::{
    first_variation_check, gradient_variance, monotonicity_constants, tv_distance,
};
pub use divergence::{elbo_renyi_bound, f_alpha, f_alpha_prime, psi_exact, AlphaParam};
pub use error::{Error, Result};
pub use exact::{exact_gradient, exact_one_step, run_exact, DiscreteProblem, ExactTrace};
pub use exploration::{
    bandwidth, perturb, resample, run_outer, ExplorationSchedule, OuterOptions, OuterRecord,
    OuterRun,
};
pub use mixture::{
    kernel_log_density, log_mixture_density, sample_mixture, GaussianKernel, ParticleMixture,
};
pub use stochastic::{
    averaged_iterate, estimate_gradient, run_inner, update_weights, FlagPolicy, GradientEstimate,
    InnerOptions, InnerRun,
};
pub use targets::{InitialSampler, TargetModel};
pub use transforms::{
    apply_update, gamma_eval, learning_rate, validate_convergence, validate_monotonicity,
    RatePolicy, TransformConfig, TransformFamily, ValidationReport, Verdict,
};
