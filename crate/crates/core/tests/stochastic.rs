use agd_core::rng::{derive_seed, seeded};
use agd_core::simplex;
use agd_core::stochastic::{estimate_gradient_discrete, evaluate_mixture, sample_grid};
use agd_core::targets::toy_gaussian_mixture;
use agd_core::{
    estimate_gradient, exact_gradient, log_mixture_density, run_inner, sample_mixture, AlphaParam,
    DiscreteProblem, FlagPolicy, GaussianKernel, InnerOptions, ParticleMixture, RatePolicy,
    TargetModel, TransformConfig,
};
use rand::Rng;

fn mean_and_se(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (n - 1.0);
    (mean, (var / n).sqrt())
}

fn assert_within_four_se(per_atom: &[Vec<f64>], exact: &[f64], context: &str) {
    for (j, (draws, b)) in per_atom.iter().zip(exact).enumerate() {
        let (mean, se) = mean_and_se(draws);
        assert!(
            (mean - b).abs() <= 4.0 * se,
            "{context} atom {j}: mean {mean} exact {b} se {se}"
        );
    }
}

#[test]
fn discrete_estimate_is_unbiased() {
    let problem = DiscreteProblem::random(&mut seeded(17), 4..=4, 12..=12);
    let weights = vec![0.1, 0.2, 0.3, 0.4];
    for alpha in [0.0, 0.5, 1.0, 2.0] {
        let a = AlphaParam::new(alpha).unwrap();
        let exact = exact_gradient(&problem, &weights, a).unwrap();
        let mut rng = seeded(derive_seed(23, alpha.to_bits()));
        let mut per_atom = vec![Vec::new(); 4];
        for _ in 0..10_000 {
            let idx = sample_grid(&problem, &weights, 1, &mut rng).unwrap();
            let est = estimate_gradient_discrete(&problem, &weights, a, &idx).unwrap();
            for (j, v) in est.values().unwrap().iter().enumerate() {
                per_atom[j].push(*v);
            }
        }
        assert_within_four_se(&per_atom, &exact, &format!("alpha {alpha}"));
    }
}

#[test]
fn gaussian_estimate_matches_fine_grid() {
    let target = toy_gaussian_mixture(1, 2.0, 2.0).unwrap();
    let mix =
        ParticleMixture::new(vec![vec![-1.5], vec![0.2], vec![2.5]], vec![0.5, 0.2, 0.3]).unwrap();
    let kernel = GaussianKernel::new(0.7).unwrap();
    let spacing = 0.005;
    let grid: Vec<Vec<f64>> = (0..=4800)
        .map(|i| vec![-12.0 + spacing * i as f64])
        .collect();
    let log_kernel: Vec<Vec<f64>> = mix
        .log_kernel_matrix(&kernel, &grid)
        .unwrap()
        .into_iter()
        .map(|row| {
            let norm = simplex::log_sum_exp(&row);
            row.into_iter().map(|v| v - norm).collect()
        })
        .collect();
    let log_target = grid
        .iter()
        .map(|y| target.log_density(y) + spacing.ln())
        .collect();
    let problem = DiscreteProblem::from_log(log_kernel, log_target).unwrap();

    for alpha in [0.5, 1.0] {
        let a = AlphaParam::new(alpha).unwrap();
        let exact = exact_gradient(&problem, mix.weights(), a).unwrap();
        let mut rng = seeded(derive_seed(31, alpha.to_bits()));
        let mut per_atom = vec![Vec::new(); 3];
        for _ in 0..10_000 {
            let y = sample_mixture(&mix, &kernel, 1, &mut rng).unwrap();
            let est = estimate_gradient(&mix, &kernel, &target, a, &y).unwrap();
            for (j, v) in est.values().unwrap().iter().enumerate() {
                per_atom[j].push(*v);
            }
        }
        assert_within_four_se(&per_atom, &exact, &format!("alpha {alpha}"));
    }
}

struct MixtureTarget {
    mix: ParticleMixture,
    kernel: GaussianKernel,
}

impl TargetModel for MixtureTarget {
    fn dim(&self) -> usize {
        self.mix.dim()
    }

    fn log_density(&self, y: &[f64]) -> f64 {
        log_mixture_density(&self.mix, &self.kernel, y).unwrap()
    }
}

#[test]
fn mixture_target_gives_only_noise_drift() {
    let mix = ParticleMixture::new(
        vec![vec![-1.0, 0.0], vec![1.0, 0.5], vec![0.0, 2.0]],
        vec![0.2, 0.5, 0.3],
    )
    .unwrap();
    let kernel = GaussianKernel::new(0.8).unwrap();
    let target = MixtureTarget {
        mix: mix.clone(),
        kernel,
    };
    let cfg = TransformConfig::exponential(1.0, 0.5, 0.0).unwrap();
    let options = InnerOptions {
        steps: 5,
        samples: 10_000,
        flag_policy: FlagPolicy::Abort,
    };
    let run = run_inner(&mix, &kernel, &target, &cfg, options, 5).unwrap();
    let drift: f64 = run
        .final_weights()
        .iter()
        .zip(mix.weights())
        .map(|(a, b)| (a - b).abs())
        .sum();
    assert!(drift <= 0.1, "{drift}");
}

#[test]
fn toy_bound_median_is_non_decreasing() {
    let target = toy_gaussian_mixture(2, 2.0, 2.0).unwrap();
    let cfg = TransformConfig::power(0.5, 0.5, 0.0)
        .unwrap()
        .with_rate_policy(RatePolicy::InverseSqrtN);
    let options = InnerOptions {
        steps: 10,
        samples: 100,
        flag_policy: FlagPolicy::Abort,
    };
    let kernel = GaussianKernel::new(1.0).unwrap();
    let mut bounds: Vec<Vec<f64>> = vec![Vec::new(); options.steps + 1];
    for seed in 0..20 {
        let mut rng = seeded(derive_seed(41, seed));
        let atoms: Vec<Vec<f64>> = (0..100)
            .map(|_| vec![rng.random_range(-5.0..5.0), rng.random_range(-5.0..5.0)])
            .collect();
        let mix = ParticleMixture::uniform(atoms).unwrap();
        let run = run_inner(&mix, &kernel, &target, &cfg, options, seed).unwrap();
        let iterates =
            std::iter::once(&run.initial).chain(run.steps.iter().map(|s| &s.weights_after));
        for (n, w) in iterates.enumerate() {
            let at = mix.with_weights(w.clone()).unwrap();
            let eval = evaluate_mixture(
                &at,
                &kernel,
                &target,
                cfg.alpha,
                10_000,
                &mut seeded(derive_seed(43, seed)),
            )
            .unwrap();
            bounds[n].push(eval.bound.unwrap());
        }
    }
    let medians: Vec<f64> = bounds
        .into_iter()
        .map(|mut v| {
            v.sort_by(|a, b| a.total_cmp(b));
            0.5 * (v[9] + v[10])
        })
        .collect();
    assert!(medians.windows(2).all(|w| w[1] >= w[0]), "{medians:?}");
}
