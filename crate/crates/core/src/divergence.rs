//! The alpha-divergence generator `f_alpha`, its derivative, the exact objective
//! on discrete problems, and the ELBO / Renyi-bound diagnostics.
//!
//! `f_alpha(u) = [u^alpha - 1 - alpha (u - 1)] / (alpha (alpha - 1))` for alpha
//! outside {0, 1}, extended by continuity:
//!
//! | alpha | f(u)                | f'(u)                         |
//! |-------|---------------------|-------------------------------|
//! | 0     | u - 1 - log u       | 1 - 1/u                       |
//! | 1     | 1 - u + u log u     | log u                         |
//! | other | (see above)         | (u^(alpha-1) - 1)/(alpha - 1) |
//!
//! Every routine here has a `*_log` twin that takes `log u`, which is how the
//! descent code calls it: ratios of densities are only ever formed in log space.

use crate::error::{Error, Result};
use crate::exact::DiscreteProblem;
use crate::simplex;

/// Width of the band around 0 and 1 that dispatches to the limit formulas.
pub const LIMIT_BAND: f64 = 1e-12;

/// Divergence order alpha.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AlphaParam(f64);

impl AlphaParam {
    pub fn new(alpha: f64) -> Result<Self> {
        if !alpha.is_finite() {
            return Err(Error::Argument(format!(
                "alpha must be finite, got {alpha}"
            )));
        }
        Ok(Self(alpha))
    }

    pub fn value(self) -> f64 {
        self.0
    }

    /// Reverse-KL limit (alpha within the dispatch band of 0).
    pub fn is_zero(self) -> bool {
        self.0.abs() < LIMIT_BAND
    }

    /// Forward-KL limit (alpha within the dispatch band of 1).
    pub fn is_one(self) -> bool {
        (self.0 - 1.0).abs() < LIMIT_BAND
    }
}

impl TryFrom<f64> for AlphaParam {
    type Error = Error;
    fn try_from(alpha: f64) -> Result<Self> {
        Self::new(alpha)
    }
}

fn check_positive(u: f64) -> Result<()> {
    if u > 0.0 && u.is_finite() {
        Ok(())
    } else {
        Err(Error::Domain(format!("f_alpha needs u > 0, got {u}")))
    }
}

/// `f_alpha(u)`.
pub fn f_alpha(u: f64, alpha: AlphaParam) -> Result<f64> {
    check_positive(u)?;
    Ok(f_alpha_log(u.ln(), alpha))
}

/// `f_alpha(exp(log_u))`. Non-finite results signal overflow.
pub fn f_alpha_log(log_u: f64, alpha: AlphaParam) -> f64 {
    let a = alpha.value();
    let u = log_u.exp();
    if alpha.is_zero() {
        // u - 1 - log u
        return log_u.exp_m1() - log_u;
    }
    if alpha.is_one() {
        return 1.0 - u + u * log_u;
    }
    let numerator = if (a - 1.0).abs() < 0.5 {
        let d = a - 1.0;
        u * (d * log_u).exp_m1() - d * log_u.exp_m1()
    } else {
        (a * log_u).exp_m1() - a * log_u.exp_m1()
    };
    numerator / (a * (a - 1.0))
}

/// `f_alpha'(u)`.
pub fn f_alpha_prime(u: f64, alpha: AlphaParam) -> Result<f64> {
    check_positive(u)?;
    Ok(f_alpha_prime_log(u.ln(), alpha))
}

/// `f_alpha'(exp(log_u))`. `log_u = +inf` (zero target density) is finite for
/// alpha < 1 and infinite otherwise.
pub fn f_alpha_prime_log(log_u: f64, alpha: AlphaParam) -> f64 {
    if alpha.is_one() {
        return log_u;
    }
    let d = alpha.value() - 1.0;
    (d * log_u).exp_m1() / d
}

/// `f_alpha''(u)`, used for curvature estimates in tests and diagnostics.
pub fn f_alpha_second(u: f64, alpha: AlphaParam) -> Result<f64> {
    check_positive(u)?;
    Ok(u.powf(alpha.value() - 2.0))
}

/// `u f_alpha(1/u)`, the perspective appearing in the global lower bound on the objective.
pub fn f_tilde(u: f64, alpha: AlphaParam) -> Result<f64> {
    check_positive(u)?;
    Ok(u * f_alpha_log(-u.ln(), alpha))
}

/// Lower bound on the exact objective for any mixing measure: `f_tilde(total target mass)`.
pub fn objective_lower_bound(problem: &DiscreteProblem, alpha: AlphaParam) -> Result<f64> {
    f_tilde(problem.target_mass(), alpha)
}

/// Exact objective `sum_i f_alpha(mu k_i / p_i) p_i` on a discrete problem
/// (counting measure on the grid).
pub fn psi_exact(problem: &DiscreteProblem, weights: &[f64], alpha: AlphaParam) -> Result<f64> {
    problem.check_weights(weights)?;
    let log_mix = problem.log_mixture(weights);
    let mut total = 0.0;
    for (lm, lp) in log_mix.iter().zip(problem.log_target()) {
        let term = f_alpha_log(lm - lp, alpha) * lp.exp();
        total += term;
    }
    if total.is_finite() {
        Ok(total)
    } else {
        Err(Error::Domain("objective overflowed".into()))
    }
}

/// ELBO (alpha = 1) or Renyi bound (alpha != 1) from weights and per-atom gradients:
/// `L_1 = -sum lambda_j b_j`, `L_alpha = log((alpha - 1) sum lambda_j b_j + 1) / (1 - alpha)`.
pub fn elbo_renyi_bound(weights: &[f64], gradient: &[f64], alpha: AlphaParam) -> Result<f64> {
    if weights.len() != gradient.len() {
        return Err(Error::DimensionMismatch {
            expected: weights.len(),
            got: gradient.len(),
        });
    }
    simplex::check(weights)?;
    let mean_b: f64 = weights.iter().zip(gradient).map(|(l, b)| l * b).sum();
    if alpha.is_one() {
        return Ok(-mean_b);
    }
    let a = alpha.value();
    let arg = (a - 1.0) * mean_b + 1.0;
    if !(arg > 0.0) || !arg.is_finite() {
        return Err(Error::BoundUndefined(arg));
    }
    Ok(arg.ln() / (1.0 - a))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    fn a(x: f64) -> AlphaParam {
        AlphaParam::new(x).unwrap()
    }

    #[test]
    fn f_alpha_examples() {
        assert_eq!(f_alpha(1.0, a(0.5)).unwrap(), 0.0);
        assert_relative_eq!(f_alpha(2.0, a(2.0)).unwrap(), 0.5, epsilon = 1e-15);
        assert_relative_eq!(
            f_alpha(2.0, a(0.0)).unwrap(),
            1.0 - 2f64.ln(),
            epsilon = 1e-15
        );
        // (u - 1)^2 / 2 is the alpha = 2 closed form
        for u in [0.1, 0.7, 3.0, 11.0] {
            assert_relative_eq!(
                f_alpha(u, a(2.0)).unwrap(),
                (u - 1.0) * (u - 1.0) / 2.0,
                max_relative = 1e-12
            );
        }
    }

    #[test]
    fn f_alpha_is_continuous_at_the_limits() {
        let u = 3.0;
        let near0 = f_alpha(u, a(1e-8)).unwrap();
        let near1 = f_alpha(u, a(1.0 + 1e-8)).unwrap();
        let below1 = f_alpha(u, a(1.0 - 1e-8)).unwrap();
        assert!((near0 - f_alpha(u, a(0.0)).unwrap()).abs() < 1e-6);
        assert!((near1 - f_alpha(u, a(1.0)).unwrap()).abs() < 1e-6);
        assert!((below1 - f_alpha(u, a(1.0)).unwrap()).abs() < 1e-6);
        // the general formula at 0.5
        let direct = (u.sqrt() - 1.0 - 0.5 * (u - 1.0)) / (0.5 * -0.5);
        assert_relative_eq!(f_alpha(u, a(0.5)).unwrap(), direct, max_relative = 1e-14);
    }

    #[test]
    fn f_alpha_prime_examples() {
        assert_eq!(f_alpha_prime(1.0, a(1.0)).unwrap(), 0.0);
        assert_relative_eq!(f_alpha_prime(2.0, a(0.0)).unwrap(), 0.5, epsilon = 1e-15);
        assert_relative_eq!(f_alpha_prime(4.0, a(0.5)).unwrap(), 1.0, epsilon = 1e-15);
    }

    #[test]
    fn rejects_non_positive_u() {
        assert!(matches!(f_alpha(0.0, a(0.5)), Err(Error::Domain(_))));
        assert!(matches!(f_alpha(-1.0, a(1.0)), Err(Error::Domain(_))));
        assert!(matches!(f_alpha_prime(0.0, a(2.0)), Err(Error::Domain(_))));
        assert!(AlphaParam::new(f64::NAN).is_err());
    }

    #[test]
    fn zero_target_density_is_finite_only_below_one() {
        assert_eq!(f_alpha_prime_log(f64::INFINITY, a(0.5)), 2.0);
        assert!(f_alpha_prime_log(f64::INFINITY, a(1.0)).is_infinite());
        assert!(f_alpha_prime_log(f64::INFINITY, a(2.0)).is_infinite());
    }

    #[test]
    fn bound_examples() {
        let w = [0.2, 0.3, 0.5];
        assert_relative_eq!(
            elbo_renyi_bound(&w, &[1.7, 1.7, 1.7], a(1.0)).unwrap(),
            -1.7,
            epsilon = 1e-15
        );
        assert_eq!(
            elbo_renyi_bound(&w, &[1.0, -1.0, 0.2], a(0.5)).unwrap(),
            0.0
        );
        // (alpha - 1) mu(b) + 1 = -1 for alpha = 2, mu(b) = -2
        assert!(matches!(
            elbo_renyi_bound(&w, &[-2.0, -2.0, -2.0], a(2.0)),
            Err(Error::BoundUndefined(_))
        ));
        assert!(elbo_renyi_bound(&w, &[1.0], a(0.5)).is_err());
    }

    #[test]
    fn bound_round_trip() {
        let w = [0.25, 0.25, 0.5];
        let b = [0.3, -0.4, 0.9];
        for alpha in [-1.0, 0.0, 0.5, 2.0, 3.5] {
            let l = elbo_renyi_bound(&w, &b, a(alpha)).unwrap();
            let mb: f64 = w.iter().zip(&b).map(|(x, y)| x * y).sum();
            assert_relative_eq!(
                ((1.0 - alpha) * l).exp(),
                (alpha - 1.0) * mb + 1.0,
                max_relative = 1e-14
            );
        }
    }

    proptest! {
        #[test]
        fn f_alpha_nonnegative(u in 1e-3f64..1e3, alpha in -3.0f64..4.0) {
            let v = f_alpha(u, a(alpha)).unwrap();
            prop_assert!(v >= -1e-12 * (1.0 + u));
        }

        #[test]
        fn f_alpha_convex(u in 0.01f64..50.0, v in 0.01f64..50.0, t in 0.0f64..1.0, alpha in -2.0f64..3.0) {
            let al = a(alpha);
            let mid = f_alpha(t * u + (1.0 - t) * v, al).unwrap();
            let chord = t * f_alpha(u, al).unwrap() + (1.0 - t) * f_alpha(v, al).unwrap();
            prop_assert!(mid <= chord + 1e-12 * (1.0 + chord.abs()));
        }

        #[test]
        fn continuity_in_alpha(u in 0.1f64..10.0) {
            prop_assert!((f_alpha(u, a(1e-8)).unwrap() - f_alpha(u, a(0.0)).unwrap()).abs() <= 1e-4);
            prop_assert!((f_alpha(u, a(1.0 - 1e-8)).unwrap() - f_alpha(u, a(1.0)).unwrap()).abs() <= 1e-4);
            prop_assert!((f_alpha(u, a(1.0 + 1e-8)).unwrap() - f_alpha(u, a(1.0)).unwrap()).abs() <= 1e-4);
        }
    }

    #[test]
    fn derivative_matches_central_difference() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(7);
        for _ in 0..1000 {
            let u: f64 = (rng.random::<f64>() * 6.0 - 3.0).exp();
            let alpha = a(rng.random::<f64>() * 5.0 - 2.0);
            let h = 1e-6 * u;
            let fd = (f_alpha(u + h, alpha).unwrap() - f_alpha(u - h, alpha).unwrap()) / (2.0 * h);
            let exact = f_alpha_prime(u, alpha).unwrap();
            let scale = exact
                .abs()
                .max(f_alpha(u, alpha).unwrap().abs() / u)
                .max(1e-3);
            assert!(
                (fd - exact).abs() <= 1e-6 * scale,
                "u={u} alpha={alpha:?} fd={fd} exact={exact}"
            );
        }
    }
}
