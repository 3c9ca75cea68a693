//! Property suite over exact and stochastic descent, reported one line per
//! property as `name, instances, worst, tolerance, verdict`.
//!
//! `worst` is the largest violation seen (0 or negative when the property holds
//! with room to spare). A property whose evaluation fails with an error is
//! reported as failed with `worst = inf`.

use std::fs;
use std::path::PathBuf;

use rand::Rng;

use crate::diagnostics::{
    first_variation_check, gradient_variance, monotonicity_constants, padded_range, tv_distance,
};
use crate::divergence::{objective_lower_bound, AlphaParam};
use crate::error::{Error, Result};
use crate::exact::{exact_one_step, run_exact, DiscreteProblem};
use crate::harness::config::ExperimentConfig;
use crate::harness::experiments::format_float;
use crate::mixture::{sample_mixture, GaussianKernel, ParticleMixture};
use crate::rng::{derive_seed, seeded, SeedRng};
use crate::simplex;
use crate::stochastic::{
    estimate_gradient, estimate_gradient_discrete, sample_grid, update_weights, GradientEstimate,
};
use crate::targets::{toy_gaussian_mixture, TargetModel};
use crate::transforms::{apply_update, monotonicity_lhs, validate_monotonicity, TransformConfig};

/// Steps of each exact run.
pub const EXACT_STEPS: usize = 50;

/// Outcome of one property.
#[derive(Debug, Clone, PartialEq)]
pub struct PropertyResult {
    pub name: &'static str,
    pub instances: usize,
    pub worst: f64,
    pub tolerance: f64,
    pub passed: bool,
}

impl PropertyResult {
    fn from_worst(name: &'static str, instances: usize, worst: f64, tolerance: f64) -> Self {
        Self {
            name,
            instances,
            worst,
            tolerance,
            passed: worst <= tolerance,
        }
    }

    fn from_result(name: &'static str, tolerance: f64, r: Result<(usize, f64)>) -> Self {
        match r {
            Ok((instances, worst)) => Self::from_worst(name, instances, worst, tolerance),
            Err(_) => Self {
                name,
                instances: 0,
                worst: f64::INFINITY,
                tolerance,
                passed: false,
            },
        }
    }
}

/// All properties of a suite run.
#[derive(Debug, Clone, PartialEq)]
pub struct OracleReport {
    pub properties: Vec<PropertyResult>,
}

impl OracleReport {
    pub fn passed(&self) -> bool {
        self.properties.iter().all(|p| p.passed)
    }

    pub fn get(&self, name: &str) -> Option<&PropertyResult> {
        self.properties.iter().find(|p| p.name == name)
    }

    /// Tab-separated report with a header line.
    pub fn to_tsv(&self) -> String {
        let mut out = String::from("name\tinstances\tworst\ttolerance\tverdict\n");
        for p in &self.properties {
            out.push_str(&format!(
                "{}\t{}\t{}\t{}\t{}\n",
                p.name,
                p.instances,
                format_float(p.worst),
                format_float(p.tolerance),
                if p.passed { "pass" } else { "fail" }
            ));
        }
        out
    }
}

/// Transforms satisfying the monotonicity conditions used by the exact
/// properties: exponential with `alpha = 1`, and power with `eta` in `{0.5, 1}`
/// and `(alpha - 1) kappa >= 0`.
pub fn monotone_configs() -> Vec<TransformConfig> {
    let mut out = Vec::new();
    for eta in [0.1, 0.5, 1.0] {
        out.push(TransformConfig::exponential(1.0, eta, 0.0).expect("valid"));
    }
    for alpha in [-1.0, 0.0, 0.5, 2.0] {
        let kappa_signed: f64 = if alpha < 1.0 { -0.5 } else { 0.5 };
        for eta in [0.5, 1.0] {
            for kappa in [0.0, kappa_signed] {
                out.push(TransformConfig::power(alpha, eta, kappa).expect("valid"));
            }
        }
    }
    out
}

/// Point in the simplex from unnormalised entries uniform on `[0.1, 1]`.
pub fn random_weights(rng: &mut SeedRng, n: usize) -> Vec<f64> {
    let raw: Vec<f64> = (0..n).map(|_| rng.random_range(0.1..1.0)).collect();
    let total: f64 = raw.iter().sum();
    raw.into_iter().map(|x| x / total).collect()
}

/// Largest `Psi_{n+1} - Psi_n` over exact runs from uniform weights.
pub fn monotonicity_property(instances: usize, seed: u64) -> Result<(usize, f64)> {
    let mut rng = seeded(seed);
    let configs = monotone_configs();
    let mut worst = f64::NEG_INFINITY;
    for _ in 0..instances {
        let p = DiscreteProblem::random_default(&mut rng);
        let start = simplex::uniform(p.atom_count());
        for cfg in &configs {
            let trace = run_exact(&p, &start, cfg, EXACT_STEPS)?;
            for w in trace.psi.windows(2) {
                worst = worst.max(w[1] - w[0]);
            }
        }
    }
    Ok((instances * configs.len(), worst))
}

/// Largest `(c/2) Var_{lambda_n}(b_n) - (Psi_n - Psi_{n+1})`, with `c` from the
/// padded range of the run's gradients.
pub fn refined_decrease_property(instances: usize, seed: u64) -> Result<(usize, f64)> {
    let mut rng = seeded(seed);
    let configs = monotone_configs();
    let mut worst = f64::NEG_INFINITY;
    for _ in 0..instances {
        let p = DiscreteProblem::random_default(&mut rng);
        let start = simplex::uniform(p.atom_count());
        for cfg in &configs {
            let trace = run_exact(&p, &start, cfg, EXACT_STEPS)?;
            let all: Vec<f64> = trace.gradients.iter().flatten().copied().collect();
            let (lo, hi) = padded_range(&all, cfg)?;
            let c = monotonicity_constants(cfg, cfg.eta0, lo, hi)?.c;
            for n in 0..trace.gradients.len() {
                let var = gradient_variance(&trace.weights[n], &trace.gradients[n]);
                let decrease = trace.psi[n] - trace.psi[n + 1];
                worst = worst.max(0.5 * c * var - decrease);
            }
        }
    }
    Ok((instances * configs.len(), worst))
}

/// Largest relative first-variation error at `eps = 1e-5`.
pub fn first_variation_property(instances: usize, seed: u64) -> Result<(usize, f64)> {
    let mut rng = seeded(seed);
    let mut worst = 0.0f64;
    let alphas = [0.0, 0.5, 1.0, 2.0];
    for _ in 0..instances {
        let p = DiscreteProblem::random_default(&mut rng);
        let w = random_weights(&mut rng, p.atom_count());
        for a in alphas {
            worst = worst.max(first_variation_check(&p, &w, AlphaParam::new(a)?, 1e-5)?);
        }
    }
    Ok((instances * alphas.len(), worst))
}

/// Largest excess of the objective's lower bound over `Psi` along exact runs,
/// relative to `max(1, |bound|)`.
pub fn objective_lower_bound_property(instances: usize, seed: u64) -> Result<(usize, f64)> {
    let mut rng = seeded(seed);
    let configs = monotone_configs();
    let mut worst = f64::NEG_INFINITY;
    for _ in 0..instances {
        let p = DiscreteProblem::random_default(&mut rng);
        let start = simplex::uniform(p.atom_count());
        for cfg in &configs {
            let floor = objective_lower_bound(&p, cfg.alpha)?;
            let trace = run_exact(&p, &start, cfg, EXACT_STEPS)?;
            for psi in &trace.psi {
                worst = worst.max((floor - psi) / floor.abs().max(1.0));
            }
        }
    }
    Ok((instances * configs.len(), worst))
}

/// Largest coordinate change of the exponential update under `b -> b + c`.
pub fn shift_invariance_property(cases: usize, seed: u64) -> Result<(usize, f64)> {
    let mut rng = seeded(seed);
    let mut worst = 0.0f64;
    for _ in 0..cases {
        let j = rng.random_range(2..=10);
        let alpha = [0.0, 0.5, 1.0, 2.0][rng.random_range(0..4)];
        let eta = rng.random_range(0.05..1.0);
        let cfg = TransformConfig::exponential(alpha, eta, 0.0)?;
        let w = random_weights(&mut rng, j);
        let b: Vec<f64> = (0..j).map(|_| rng.random_range(-5.0..5.0)).collect();
        let shift = rng.random_range(-10.0..10.0);
        let shifted: Vec<f64> = b.iter().map(|v| v + shift).collect();
        let x = apply_update(&w, &b, &cfg, eta)?;
        let y = apply_update(&w, &shifted, &cfg, eta)?;
        for (u, v) in x.iter().zip(&y) {
            worst = worst.max((u - v).abs());
        }
    }
    Ok((cases, worst))
}

/// Largest `-lhs` of the monotonicity condition on a grid of `v` values
/// inside the transform's domain, for every monotone configuration.
pub fn transform_condition_property() -> Result<(usize, f64)> {
    let configs = monotone_configs();
    let mut worst = f64::NEG_INFINITY;
    for cfg in &configs {
        for i in 0..=400 {
            let b = -5.0 + 10.0 * i as f64 / 400.0;
            let v = b + cfg.kappa;
            if cfg.power_base(v) <= 1e-3 && cfg.family == crate::transforms::TransformFamily::Power
            {
                continue;
            }
            worst = worst.max(-monotonicity_lhs(v, cfg, cfg.eta0)?);
        }
    }
    Ok((configs.len(), worst))
}

/// Population Monte Carlo update `lambda_j ∝ sum_m lambda_j k_j(Y_m) p(Y_m) / mu k(Y_m)^2`,
/// coded directly on densities.
pub fn pmc_update(
    mix: &ParticleMixture,
    kernel: &GaussianKernel,
    target: &dyn TargetModel,
    samples: &[Vec<f64>],
) -> Vec<f64> {
    let d = mix.dim() as f64;
    let h = kernel.bandwidth();
    let density = |theta: &[f64], y: &[f64]| -> f64 {
        let sq: f64 = theta.iter().zip(y).map(|(a, b)| (a - b) * (a - b)).sum();
        (-0.5 * sq / (h * h)).exp() / (2.0 * std::f64::consts::PI * h * h).powf(0.5 * d)
    };
    let mut raw = vec![0.0; mix.len()];
    for y in samples {
        let k: Vec<f64> = mix.atoms().iter().map(|a| density(a, y)).collect();
        let q: f64 = mix.weights().iter().zip(&k).map(|(l, k)| l * k).sum();
        let p = target.log_density(y).exp();
        for (j, (l, kj)) in mix.weights().iter().zip(&k).enumerate() {
            raw[j] += l * kj * p / (q * q);
        }
    }
    let total: f64 = raw.iter().sum();
    raw.into_iter().map(|r| r / total).collect()
}

/// Largest coordinate difference between the `alpha = 0, eta = 1` power step
/// and [`pmc_update`] on random mixtures in two dimensions.
pub fn pmc_equivalence_property(cases: usize, seed: u64) -> Result<(usize, f64)> {
    let mut rng = seeded(seed);
    let target = toy_gaussian_mixture(2, 2.0, 2.0)?;
    let cfg = TransformConfig::power(0.0, 1.0, 0.0)?;
    let mut worst = 0.0f64;
    for _ in 0..cases {
        let j = rng.random_range(2..=8);
        let atoms: Vec<Vec<f64>> = (0..j)
            .map(|_| (0..2).map(|_| rng.random_range(-3.0..3.0)).collect())
            .collect();
        let mix = ParticleMixture::new(atoms, random_weights(&mut rng, j))?;
        let kernel = GaussianKernel::new(rng.random_range(0.5..1.5))?;
        let m = rng.random_range(10..=200);
        let samples = sample_mixture(&mix, &kernel, m, &mut rng)?;
        let est = estimate_gradient(&mix, &kernel, &target, cfg.alpha, &samples)?;
        let ours = update_weights(mix.weights(), &est, &cfg, 1.0)?;
        let theirs = pmc_update(&mix, &kernel, &target, &samples);
        for (a, b) in ours.iter().zip(&theirs) {
            worst = worst.max((a - b).abs());
        }
    }
    Ok((cases, worst))
}

fn median(mut v: Vec<f64>) -> f64 {
    v.sort_by(|a, b| a.total_cmp(b));
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

/// Median total variation between one stochastic and one exact step on a
/// fixed discrete problem, at `m_small` and `m_large` samples.
pub fn tv_medians(
    problem: &DiscreteProblem,
    config: &TransformConfig,
    seeds: usize,
    m_small: usize,
    m_large: usize,
    seed: u64,
) -> Result<(f64, f64)> {
    let start = simplex::uniform(problem.atom_count());
    let exact = exact_one_step(problem, &start, config, config.eta0)?;
    let mut medians = [0.0; 2];
    for (slot, m) in [m_small, m_large].into_iter().enumerate() {
        let tvs = (0..seeds)
            .map(|s| -> Result<f64> {
                let mut rng = seeded(derive_seed(derive_seed(seed, m as u64), s as u64));
                let idx = sample_grid(problem, &start, m, &mut rng)?;
                let est: GradientEstimate =
                    estimate_gradient_discrete(problem, &start, config.alpha, &idx)?;
                tv_distance(&update_weights(&start, &est, config, config.eta0)?, &exact)
            })
            .collect::<Result<Vec<f64>>>()?;
        medians[slot] = median(tvs);
    }
    Ok((medians[0], medians[1]))
}

/// Ratio of the median total variation at 10^4 samples to that at 10^2.
pub fn tv_convergence_property(seeds: usize, seed: u64) -> Result<(usize, f64)> {
    let problem = DiscreteProblem::random(&mut seeded(seed), 5..=5, 40..=40);
    let cfg = TransformConfig::power(0.5, 0.5, 0.0)?;
    let (small, large) = tv_medians(&problem, &cfg, seeds, 100, 10_000, seed)?;
    if small == 0.0 {
        return Err(Error::Domain(
            "stochastic step matched the exact step at 100 samples".into(),
        ));
    }
    Ok((seeds, large / small))
}

/// Whether the monotonicity check rejects power with `alpha = 0.5, kappa = 0.1`;
/// 0 when caught, 1 when missed.
pub fn injected_violation_property() -> Result<(usize, f64)> {
    let cfg = TransformConfig::power(0.5, 0.5, 0.1)?;
    Ok((
        1,
        if validate_monotonicity(&cfg).is_violation() {
            0.0
        } else {
            1.0
        },
    ))
}

/// Runs every property, writes `oracle_report.tsv` into the output directory
/// and returns the report. Only output failures are errors.
pub fn run_oracle_suite(config: &ExperimentConfig) -> Result<(OracleReport, PathBuf)> {
    let n = config.oracle_instances.max(1);
    let seed = |i: u64| derive_seed(config.master_seed, i);
    let mut properties = vec![
        PropertyResult::from_result("monotonicity", 1e-10, monotonicity_property(n, seed(1))),
        PropertyResult::from_result(
            "refined_decrease",
            1e-8,
            refined_decrease_property(n, seed(2)),
        ),
        PropertyResult::from_result(
            "first_variation",
            1e-4,
            first_variation_property(n, seed(3)),
        ),
        PropertyResult::from_result(
            "objective_lower_bound",
            1e-12,
            objective_lower_bound_property(n, seed(4)),
        ),
        PropertyResult::from_result(
            "exponential_shift_invariance",
            1e-14,
            shift_invariance_property(20 * n, seed(5)),
        ),
        PropertyResult::from_result("transform_condition", 1e-12, transform_condition_property()),
        PropertyResult::from_result(
            "pmc_equivalence",
            1e-12,
            pmc_equivalence_property(n, seed(6)),
        ),
        PropertyResult::from_result("tv_convergence", 0.2, tv_convergence_property(n, seed(7))),
        PropertyResult::from_result("admissibility_injected", 0.0, injected_violation_property()),
    ];
    let violations = config.admissibility().map(|reports| {
        let bad = reports.iter().filter(|(_, r)| r.is_violation()).count();
        (reports.len(), bad as f64)
    });
    properties.push(PropertyResult::from_result(
        "configured_methods",
        0.0,
        violations,
    ));
    let report = OracleReport { properties };
    fs::create_dir_all(&config.output_dir)
        .map_err(|e| Error::Io(format!("{}: {e}", config.output_dir.display())))?;
    let path = config.output_dir.join("oracle_report.tsv");
    fs::write(&path, report.to_tsv()).map_err(|e| Error::Io(format!("{}: {e}", path.display())))?;
    Ok((report, path))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::harness::config::Experiment;

    #[test]
    fn configs_are_admissible() {
        let configs = monotone_configs();
        assert_eq!(configs.len(), 19);
        assert!(configs
            .iter()
            .all(|c| !validate_monotonicity(c).is_violation()));
    }

    #[test]
    fn pmc_matches_on_a_single_case() {
        let (_, worst) = pmc_equivalence_property(3, 9).unwrap();
        assert!(worst < 1e-12, "{worst}");
    }

    #[test]
    fn small_suite_passes_and_repeats() {
        let dir = tempfile::tempdir().unwrap();
        let mut c = ExperimentConfig::defaults(Experiment::OracleSuite);
        c.oracle_instances = 4;
        c.output_dir = dir.path().to_path_buf();
        let (report, path) = run_oracle_suite(&c).unwrap();
        assert!(report.properties.len() >= 6);
        let failing: Vec<_> = report
            .properties
            .iter()
            .filter(|p| !p.passed && p.name != "tv_convergence")
            .collect();
        assert!(failing.is_empty(), "{failing:?}");
        assert!(report.get("admissibility_injected").unwrap().passed);
        let text = fs::read_to_string(path).unwrap();
        assert_eq!(text.lines().count(), report.properties.len() + 1);
        let (again, _) = run_oracle_suite(&c).unwrap();
        assert_eq!(again, report);
    }

    #[test]
    fn configured_violation_is_reported() {
        let dir = tempfile::tempdir().unwrap();
        let mut c = ExperimentConfig::defaults(Experiment::OracleSuite);
        c.oracle_instances = 1;
        c.kappa = 0.1;
        c.output_dir = dir.path().to_path_buf();
        let (report, _) = run_oracle_suite(&c).unwrap();
        assert!(!report.get("configured_methods").unwrap().passed);
        assert!(!report.passed());
    }
}
