//! Numerical checks: total variation on shared atoms, gradient variance, the
//! constants of the refined monotonicity bound and finite-difference checks of
//! the first variation.

use crate::divergence::{psi_exact, AlphaParam};
use crate::error::{Error, Result};
use crate::exact::{exact_gradient, DiscreteProblem};
use crate::simplex;
use crate::transforms::{
    gamma_eval, gamma_prime, gamma_second, log_gamma_prime, monotonicity_lhs, TransformConfig,
    TransformFamily,
};

/// Grid size used by [`monotonicity_constants`].
pub const CONSTANT_GRID: usize = 10_000;

/// `1/2 sum_j |a_j - b_j|`.
pub fn tv_distance(a: &[f64], b: &[f64]) -> Result<f64> {
    if a.len() != b.len() {
        return Err(Error::DimensionMismatch {
            expected: a.len(),
            got: b.len(),
        });
    }
    Ok(0.5 * a.iter().zip(b).map(|(x, y)| (x - y).abs()).sum::<f64>())
}

/// `sum_j lambda_j (b_j - mean)^2` with `mean = sum_j lambda_j b_j`.
pub fn gradient_variance(weights: &[f64], gradient: &[f64]) -> f64 {
    let mean: f64 = weights.iter().zip(gradient).map(|(l, b)| l * b).sum();
    weights
        .iter()
        .zip(gradient)
        .map(|(l, b)| l * (b - mean) * (b - mean))
        .sum()
}

/// Constants of the transform on a range of `v = b + kappa`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MonotonicityConstants {
    /// `inf {[(alpha-1)(v-kappa)+1] (log Gamma)'(v) + 1} * inf (-Gamma'(v))`.
    pub c: f64,
    /// `max |Gamma''(v)|`.
    pub l: f64,
    /// `1 / inf (-log Gamma)'(v)`.
    pub l_alpha_1: f64,
    /// `1 / inf Gamma(v)`.
    pub l_alpha_2: f64,
}

/// Evaluates the constants on a uniform grid over `[b_lo + kappa, b_hi + kappa]`.
pub fn monotonicity_constants(
    config: &TransformConfig,
    eta: f64,
    b_lo: f64,
    b_hi: f64,
) -> Result<MonotonicityConstants> {
    if !(b_lo <= b_hi) || !b_lo.is_finite() || !b_hi.is_finite() {
        return Err(Error::Argument(format!(
            "invalid gradient range [{b_lo}, {b_hi}]"
        )));
    }
    let (lo, hi) = (b_lo + config.kappa, b_hi + config.kappa);
    let points = if lo == hi { 1 } else { CONSTANT_GRID };
    let mut inf_lhs = f64::INFINITY;
    let mut inf_neg_prime = f64::INFINITY;
    let mut inf_neg_log_prime = f64::INFINITY;
    let mut inf_gamma = f64::INFINITY;
    let mut sup_second = 0.0f64;
    for i in 0..points {
        let v = if points == 1 {
            lo
        } else {
            lo + (hi - lo) * i as f64 / (points - 1) as f64
        };
        inf_lhs = inf_lhs.min(monotonicity_lhs(v, config, eta)?);
        inf_neg_prime = inf_neg_prime.min(-gamma_prime(v, config, eta)?);
        inf_neg_log_prime = inf_neg_log_prime.min(-log_gamma_prime(v, config, eta)?);
        inf_gamma = inf_gamma.min(gamma_eval(v, config, eta)?);
        sup_second = sup_second.max(gamma_second(v, config, eta)?.abs());
    }
    Ok(MonotonicityConstants {
        c: inf_lhs * inf_neg_prime,
        l: sup_second,
        l_alpha_1: 1.0 / inf_neg_log_prime,
        l_alpha_2: 1.0 / inf_gamma,
    })
}

/// Range of `values` widened by 10% of its width on each side (10% of the
/// magnitude for a single point), kept strictly inside the power domain.
pub fn padded_range(values: &[f64], config: &TransformConfig) -> Result<(f64, f64)> {
    if values.is_empty() || values.iter().any(|v| !v.is_finite()) {
        return Err(Error::Argument("need finite gradient values".into()));
    }
    let lo = values.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let pad = if hi > lo {
        0.1 * (hi - lo)
    } else {
        0.1 * lo.abs().max(1e-12)
    };
    let (mut plo, mut phi) = (lo - pad, hi + pad);
    if config.family == TransformFamily::Power {
        // domain in b: (alpha - 1)(b + kappa) + 1 > 0
        let am1 = config.alpha.value() - 1.0;
        let edge = -1.0 / am1 - config.kappa;
        if am1 < 0.0 && phi >= edge {
            phi = 0.5 * (hi + edge);
        }
        if am1 > 0.0 && plo <= edge {
            plo = 0.5 * (lo + edge);
        }
    }
    Ok((plo, phi))
}

/// Largest relative error, over atoms, between the one-sided difference
/// `[Psi((1 - eps) lambda + eps e_j) - Psi(lambda)] / eps` and the directional
/// derivative `b_j - sum_i lambda_i b_i`. Errors are relative to `max(|d_j|, 1)`.
pub fn first_variation_check(
    problem: &DiscreteProblem,
    weights: &[f64],
    alpha: AlphaParam,
    epsilon: f64,
) -> Result<f64> {
    if !(epsilon > 0.0 && epsilon <= 1.0) {
        return Err(Error::Argument(format!(
            "epsilon must be in (0, 1], got {epsilon}"
        )));
    }
    simplex::check(weights)?;
    let b = exact_gradient(problem, weights, alpha)?;
    let mean: f64 = weights.iter().zip(&b).map(|(l, v)| l * v).sum();
    let base = psi_exact(problem, weights, alpha)?;
    let mut worst = 0.0f64;
    for j in 0..weights.len() {
        let moved: Vec<f64> = weights
            .iter()
            .enumerate()
            .map(|(i, l)| (1.0 - epsilon) * l + if i == j { epsilon } else { 0.0 })
            .collect();
        let fd = (psi_exact(problem, &moved, alpha)? - base) / epsilon;
        let d = b[j] - mean;
        worst = worst.max((fd - d).abs() / d.abs().max(1.0));
    }
    Ok(worst)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::seeded;
    use approx::assert_relative_eq;
    use proptest::prelude::*;
    use rand::Rng;

    #[test]
    fn tv_examples() {
        assert_eq!(tv_distance(&[0.2, 0.8], &[0.2, 0.8]).unwrap(), 0.0);
        assert_eq!(tv_distance(&[1.0, 0.0], &[0.0, 1.0]).unwrap(), 1.0);
        assert_relative_eq!(tv_distance(&[0.5, 0.5], &[0.75, 0.25]).unwrap(), 0.25);
        assert!(tv_distance(&[1.0], &[0.5, 0.5]).is_err());
    }

    fn simplex_vec(n: usize) -> impl Strategy<Value = Vec<f64>> {
        prop::collection::vec(0.0f64..1.0, n).prop_map(|v| {
            let s: f64 = v.iter().sum::<f64>() + 1e-9;
            v.iter().map(|x| (x + 1e-9 / v.len() as f64) / s).collect()
        })
    }

    proptest! {
        #[test]
        fn tv_is_a_metric(a in simplex_vec(6), b in simplex_vec(6), c in simplex_vec(6)) {
            let ab = tv_distance(&a, &b).unwrap();
            let bc = tv_distance(&b, &c).unwrap();
            let ac = tv_distance(&a, &c).unwrap();
            prop_assert!(ac <= ab + bc + 1e-15);
            prop_assert!((ab - tv_distance(&b, &a).unwrap()).abs() < 1e-15);
            prop_assert!((0.0..=1.0 + 1e-12).contains(&ab));
        }

        #[test]
        fn variance_is_shift_invariant(w in simplex_vec(5), b in prop::collection::vec(-10.0f64..10.0, 5), s in -100.0f64..100.0) {
            let v = gradient_variance(&w, &b);
            let shifted: Vec<f64> = b.iter().map(|x| x + s).collect();
            prop_assert!(v >= 0.0);
            prop_assert!((v - gradient_variance(&w, &shifted)).abs() < 1e-9 * (1.0 + v));
        }
    }

    #[test]
    fn variance_examples() {
        assert_eq!(gradient_variance(&[0.3, 0.7], &[2.0, 2.0]), 0.0);
        assert_relative_eq!(gradient_variance(&[0.5, 0.5], &[0.0, 2.0]), 1.0);
    }

    #[test]
    fn exponential_constants_match_closed_form() {
        for (eta, bound, kappa) in [(0.5, 1.0, 0.0), (0.3, 2.0, 0.4), (0.9, 0.5, -1.0)] {
            let cfg = TransformConfig::exponential(1.0, eta, kappa).unwrap();
            let k = monotonicity_constants(&cfg, eta, -bound, bound).unwrap();
            let c = (1.0 - eta) * eta * (-eta * bound - eta * kappa).exp();
            let l = eta * eta * (eta * bound - eta * kappa).exp();
            assert_relative_eq!(k.c, c, max_relative = 0.01);
            assert_relative_eq!(k.l, l, max_relative = 0.01);
            assert_relative_eq!(k.l_alpha_1, 1.0 / eta, max_relative = 0.01);
            assert_relative_eq!(
                k.l_alpha_2,
                (eta * bound + eta * kappa).exp(),
                max_relative = 0.01
            );
        }
    }

    #[test]
    fn point_range_gives_point_values() {
        let cfg = TransformConfig::power(0.5, 0.7, -0.2).unwrap();
        let v = 0.3;
        let k = monotonicity_constants(&cfg, 0.7, v - cfg.kappa, v - cfg.kappa).unwrap();
        let expected =
            monotonicity_lhs(v, &cfg, 0.7).unwrap() * -gamma_prime(v, &cfg, 0.7).unwrap();
        assert_relative_eq!(k.c, expected, max_relative = 1e-12);
        assert_relative_eq!(
            k.l_alpha_2,
            1.0 / gamma_eval(v, &cfg, 0.7).unwrap(),
            max_relative = 1e-12
        );
    }

    #[test]
    fn domain_and_range_errors() {
        let cfg = TransformConfig::power(0.5, 0.5, 0.0).unwrap();
        assert!(monotonicity_constants(&cfg, 0.5, 0.0, 3.0).is_err());
        assert!(monotonicity_constants(&cfg, 0.5, 1.0, 0.0).is_err());
    }

    #[test]
    fn c_is_positive_for_admissible_configs() {
        let mut configs = vec![
            TransformConfig::exponential(1.0, 0.5, 0.0).unwrap(),
            TransformConfig::exponential(1.0, 0.9, 1.0).unwrap(),
            TransformConfig::exponential(0.5, 0.3, 0.0).unwrap(),
        ];
        for a in [-1.0, 0.0, 0.5] {
            configs.push(TransformConfig::power(a, 0.5, 0.0).unwrap());
            configs.push(TransformConfig::power(a, 0.9, -0.5).unwrap());
        }
        configs.push(TransformConfig::power(2.0, 0.5, 0.5).unwrap());
        for cfg in configs {
            let (lo, hi) = padded_range(&[-0.4, 0.4], &cfg).unwrap();
            let k = monotonicity_constants(&cfg, cfg.eta0, lo, hi).unwrap();
            assert!(k.c > 0.0, "{cfg:?} gave c = {}", k.c);
        }
    }

    #[test]
    fn padded_range_stays_in_domain() {
        let cfg = TransformConfig::power(0.5, 1.0, 0.0).unwrap();
        let (lo, hi) = padded_range(&[-3.0, 1.99], &cfg).unwrap();
        assert!(lo < -3.0 && hi > 1.99 && hi < 2.0);
        let cfg = TransformConfig::power(2.0, 1.0, 0.5).unwrap();
        let (lo, _) = padded_range(&[-1.49, 4.0], &cfg).unwrap();
        assert!(lo < -1.49 && lo > -1.5);
    }

    #[test]
    fn first_variation_at_fixed_point() {
        let row = vec![0.2, 0.3, 0.5];
        let p =
            DiscreteProblem::new(vec![row.clone(), row.clone(), row], vec![0.1, 0.4, 0.3]).unwrap();
        for a in [0.0, 0.5, 1.0, 2.0] {
            let alpha = AlphaParam::new(a).unwrap();
            let w = vec![0.2, 0.5, 0.3];
            let b = exact_gradient(&p, &w, alpha).unwrap();
            assert!(b.iter().all(|x| (x - b[0]).abs() < 1e-12));
            assert!(first_variation_check(&p, &w, alpha, 1e-6).unwrap() < 1e-6);
        }
    }

    fn richardson_error(p: &DiscreteProblem, w: &[f64], alpha: AlphaParam) -> f64 {
        let b = exact_gradient(p, w, alpha).unwrap();
        let mean: f64 = w.iter().zip(&b).map(|(l, v)| l * v).sum();
        let base = psi_exact(p, w, alpha).unwrap();
        let fd = |j: usize, eps: f64| {
            let moved: Vec<f64> = w
                .iter()
                .enumerate()
                .map(|(i, l)| (1.0 - eps) * l + if i == j { eps } else { 0.0 })
                .collect();
            (psi_exact(p, &moved, alpha).unwrap() - base) / eps
        };
        (0..w.len())
            .map(|j| {
                let extrapolated = 2.0 * fd(j, 5e-4) - fd(j, 1e-3);
                let d = b[j] - mean;
                (extrapolated - d).abs() / d.abs().max(1.0)
            })
            .fold(0.0, f64::max)
    }

    #[test]
    fn first_variation_on_random_instances() {
        let mut rng = seeded(31);
        for _ in 0..20 {
            let p = DiscreteProblem::random_default(&mut rng);
            let raw: Vec<f64> = (0..p.atom_count())
                .map(|_| rng.random_range(0.1..1.0))
                .collect();
            let s: f64 = raw.iter().sum();
            let w: Vec<f64> = raw.iter().map(|x| x / s).collect();
            for a in [0.0, 0.5, 1.0, 2.0] {
                let alpha = AlphaParam::new(a).unwrap();
                assert!(richardson_error(&p, &w, alpha) < 1e-4);
                let e3 = first_variation_check(&p, &w, alpha, 1e-3).unwrap();
                let e5 = first_variation_check(&p, &w, alpha, 1e-5).unwrap();
                assert!(e5 <= 1e-4, "alpha {a}: {e5}");
                assert!(e5 < e3);
            }
        }
    }
}
