//! Weighted Dirac mixtures `mu_lambda = sum_j lambda_j delta_{theta_j}` pushed
//! through an isotropic Gaussian kernel.
//!
//! Sampling draws, per sample, one `U(0, 1)` variate for the atom (inverse CDF on
//! the cumulative weights, ties to the lower index) followed by `d` standard
//! normals from `rand_distr::StandardNormal` (ziggurat). With the ChaCha
//! generators used throughout the crate the stream is platform independent.

use std::f64::consts::PI;

use rand::Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};
use crate::simplex;

/// Isotropic Gaussian kernel `k_h(y - theta)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GaussianKernel {
    bandwidth: f64,
}

impl GaussianKernel {
    pub fn new(bandwidth: f64) -> Result<Self> {
        if !(bandwidth > 0.0) || !bandwidth.is_finite() {
            return Err(Error::Argument(format!(
                "bandwidth must be positive, got {bandwidth}"
            )));
        }
        Ok(Self { bandwidth })
    }

    pub fn bandwidth(&self) -> f64 {
        self.bandwidth
    }

    /// `-(d/2) log(2 pi h^2)`
    pub fn log_normalizer(&self, dim: usize) -> f64 {
        -0.5 * dim as f64 * (2.0 * PI * self.bandwidth * self.bandwidth).ln()
    }

    /// Log density without the dimension check.
    pub(crate) fn log_density_unchecked(&self, theta: &[f64], y: &[f64]) -> f64 {
        let sq: f64 = theta.iter().zip(y).map(|(a, b)| (a - b) * (a - b)).sum();
        -sq / (2.0 * self.bandwidth * self.bandwidth) + self.log_normalizer(y.len())
    }
}

/// `log k_h(y - theta) = -|y - theta|^2 / (2 h^2) - (d/2) log(2 pi h^2)`.
pub fn kernel_log_density(theta: &[f64], y: &[f64], kernel: &GaussianKernel) -> Result<f64> {
    if theta.len() != y.len() {
        return Err(Error::DimensionMismatch {
            expected: theta.len(),
            got: y.len(),
        });
    }
    Ok(kernel.log_density_unchecked(theta, y))
}

/// Atoms in `R^d` with simplex weights.
#[derive(Debug, Clone, PartialEq)]
pub struct ParticleMixture {
    atoms: Vec<Vec<f64>>,
    weights: Vec<f64>,
    dim: usize,
}

impl ParticleMixture {
    pub fn new(atoms: Vec<Vec<f64>>, weights: Vec<f64>) -> Result<Self> {
        if atoms.is_empty() {
            return Err(Error::Argument("a mixture needs at least one atom".into()));
        }
        if atoms.len() != weights.len() {
            return Err(Error::DimensionMismatch {
                expected: atoms.len(),
                got: weights.len(),
            });
        }
        let dim = atoms[0].len();
        if dim == 0 {
            return Err(Error::Argument("atoms must have dimension >= 1".into()));
        }
        if let Some(bad) = atoms.iter().find(|a| a.len() != dim) {
            return Err(Error::DimensionMismatch {
                expected: dim,
                got: bad.len(),
            });
        }
        simplex::check(&weights)?;
        Ok(Self {
            atoms,
            weights,
            dim,
        })
    }

    /// Uniform weights over the given atoms.
    pub fn uniform(atoms: Vec<Vec<f64>>) -> Result<Self> {
        let n = atoms.len().max(1);
        Self::new(atoms, simplex::uniform(n))
    }

    pub fn atoms(&self) -> &[Vec<f64>] {
        &self.atoms
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.atoms.len()
    }

    pub fn is_empty(&self) -> bool {
        self.atoms.is_empty()
    }

    /// Same atoms, new weights.
    pub fn with_weights(&self, weights: Vec<f64>) -> Result<Self> {
        Self::new(self.atoms.clone(), weights)
    }

    pub fn into_parts(self) -> (Vec<Vec<f64>>, Vec<f64>) {
        (self.atoms, self.weights)
    }

    /// Weighted mean of the atoms.
    pub fn mean(&self) -> Vec<f64> {
        let mut m = vec![0.0; self.dim];
        for (a, w) in self.atoms.iter().zip(&self.weights) {
            for (mi, ai) in m.iter_mut().zip(a) {
                *mi += w * ai;
            }
        }
        m
    }

    /// Index of the atom selected by the uniform draw `u`.
    fn select(&self, u: f64, cumulative: &[f64]) -> usize {
        let idx = cumulative.partition_point(|c| *c <= u);
        if idx < self.len() {
            idx
        } else {
            // rounding left the last cumulative value below u
            self.weights.iter().rposition(|w| *w > 0.0).unwrap_or(0)
        }
    }

    fn cumulative(&self) -> Vec<f64> {
        self.weights
            .iter()
            .scan(0.0, |acc, w| {
                *acc += w;
                Some(*acc)
            })
            .collect()
    }

    /// Draws `count` atom indices i.i.d. from the weights.
    pub fn sample_indices<R: Rng + ?Sized>(&self, count: usize, rng: &mut R) -> Vec<usize> {
        let cum = self.cumulative();
        (0..count)
            .map(|_| self.select(rng.random::<f64>(), &cum))
            .collect()
    }

    /// Log mixture density at every point, returning also the `J x M` matrix of
    /// kernel log densities `log k(theta_j, y_m)`.
    pub fn log_kernel_matrix(
        &self,
        kernel: &GaussianKernel,
        points: &[Vec<f64>],
    ) -> Result<Vec<Vec<f64>>> {
        for p in points {
            if p.len() != self.dim {
                return Err(Error::DimensionMismatch {
                    expected: self.dim,
                    got: p.len(),
                });
            }
        }
        Ok(self
            .atoms
            .iter()
            .map(|a| {
                points
                    .iter()
                    .map(|y| kernel.log_density_unchecked(a, y))
                    .collect()
            })
            .collect())
    }

    /// `log mu k(y_m)` for every column of a kernel matrix from [`Self::log_kernel_matrix`].
    pub fn log_mixture_from_kernel(&self, log_kernel: &[Vec<f64>]) -> Vec<f64> {
        let m = log_kernel.first().map_or(0, Vec::len);
        let log_w: Vec<f64> = self.weights.iter().map(|w| w.ln()).collect();
        let mut buf = vec![0.0; self.len()];
        (0..m)
            .map(|col| {
                for (j, slot) in buf.iter_mut().enumerate() {
                    *slot = log_w[j] + log_kernel[j][col];
                }
                simplex::log_sum_exp(&buf)
            })
            .collect()
    }
}

/// `log mu_lambda k(y) = logsumexp_j (log lambda_j + log k(theta_j, y))`; zero
/// weights drop out.
pub fn log_mixture_density(
    mix: &ParticleMixture,
    kernel: &GaussianKernel,
    y: &[f64],
) -> Result<f64> {
    if y.len() != mix.dim {
        return Err(Error::DimensionMismatch {
            expected: mix.dim,
            got: y.len(),
        });
    }
    let terms: Vec<f64> = mix
        .atoms
        .iter()
        .zip(&mix.weights)
        .map(|(a, w)| w.ln() + kernel.log_density_unchecked(a, y))
        .collect();
    let v = simplex::log_sum_exp(&terms);
    if v == f64::NEG_INFINITY {
        return Err(Error::DegenerateWeights(
            "all mixture weights are zero".into(),
        ));
    }
    Ok(v)
}

/// Draws `count` i.i.d. points from `mu_lambda k_h`: atom by inverse CDF, then
/// an isotropic `N(0, h^2 I)` offset.
pub fn sample_mixture<R: Rng + ?Sized>(
    mix: &ParticleMixture,
    kernel: &GaussianKernel,
    count: usize,
    rng: &mut R,
) -> Result<Vec<Vec<f64>>> {
    if count == 0 {
        return Err(Error::Argument("sample count must be >= 1".into()));
    }
    let cum = mix.cumulative();
    let h = kernel.bandwidth();
    let mut out = Vec::with_capacity(count);
    for _ in 0..count {
        let j = mix.select(rng.random::<f64>(), &cum);
        let y: Vec<f64> = mix.atoms[j]
            .iter()
            .map(|t| {
                let z: f64 = rng.sample(StandardNormal);
                t + h * z
            })
            .collect();
        out.push(y);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::seeded;
    use approx::assert_relative_eq;

    fn k(h: f64) -> GaussianKernel {
        GaussianKernel::new(h).unwrap()
    }

    #[test]
    fn kernel_examples() {
        let half_log_2pi = 0.5 * (2.0 * PI).ln();
        assert_relative_eq!(
            kernel_log_density(&[0.3], &[0.3], &k(1.0)).unwrap(),
            -half_log_2pi
        );
        assert_relative_eq!(
            kernel_log_density(&[0.0], &[2.0], &k(1.0)).unwrap(),
            -2.0 - half_log_2pi,
            epsilon = 1e-15
        );
        assert_relative_eq!(
            kernel_log_density(&[0.0, 0.0], &[0.0, 0.0], &k(2.0)).unwrap(),
            -(8.0 * PI).ln(),
            epsilon = 1e-14
        );
        assert!(kernel_log_density(&[0.0], &[0.0, 1.0], &k(1.0)).is_err());
        assert!(GaussianKernel::new(0.0).is_err());
    }

    #[test]
    fn mixture_constructor_invariants() {
        assert!(ParticleMixture::new(vec![], vec![]).is_err());
        assert!(ParticleMixture::new(vec![vec![0.0]], vec![0.9]).is_err());
        assert!(ParticleMixture::new(vec![vec![0.0], vec![1.0, 2.0]], vec![0.5, 0.5]).is_err());
        assert!(ParticleMixture::new(vec![vec![0.0], vec![1.0]], vec![0.5, 0.5]).is_ok());
    }

    #[test]
    fn single_and_duplicate_atoms_collapse() {
        let y = [0.4, -1.2];
        let kern = k(0.7);
        let one = ParticleMixture::uniform(vec![vec![1.0, 0.5]]).unwrap();
        let twin =
            ParticleMixture::new(vec![vec![1.0, 0.5], vec![1.0, 0.5]], vec![0.3, 0.7]).unwrap();
        let direct = kernel_log_density(&[1.0, 0.5], &y, &kern).unwrap();
        assert_relative_eq!(
            log_mixture_density(&one, &kern, &y).unwrap(),
            direct,
            epsilon = 1e-15
        );
        assert_relative_eq!(
            log_mixture_density(&twin, &kern, &y).unwrap(),
            direct,
            epsilon = 1e-14
        );
    }

    #[test]
    fn matches_direct_sum() {
        let mix = ParticleMixture::new(
            vec![vec![0.1, -0.3], vec![1.2, 0.8], vec![-2.0, 0.4]],
            vec![0.2, 0.5, 0.3],
        )
        .unwrap();
        let kern = k(0.9);
        for y in [[0.0, 0.0], [1.0, 1.0], [-3.0, 2.0]] {
            let direct: f64 = mix
                .atoms()
                .iter()
                .zip(mix.weights())
                .map(|(a, w)| w * kernel_log_density(a, &y, &kern).unwrap().exp())
                .sum();
            assert_relative_eq!(
                log_mixture_density(&mix, &kern, &y).unwrap(),
                direct.ln(),
                max_relative = 1e-12
            );
        }
    }

    #[test]
    fn zero_weight_atoms_are_skipped() {
        let mix = ParticleMixture::new(vec![vec![0.0], vec![50.0]], vec![1.0, 0.0]).unwrap();
        let v = log_mixture_density(&mix, &k(1.0), &[0.0]).unwrap();
        assert_relative_eq!(v, -0.5 * (2.0 * PI).ln(), epsilon = 1e-15);
        let mut rng = seeded(3);
        let idx = mix.sample_indices(1000, &mut rng);
        assert!(idx.iter().all(|&j| j == 0));
    }

    #[test]
    fn density_integrates_to_one() {
        let mix = ParticleMixture::new(vec![vec![-1.0], vec![0.5], vec![2.0]], vec![0.3, 0.3, 0.4])
            .unwrap();
        let kern = k(0.6);
        let (lo, hi, n) = (-10.0, 12.0, 20_001);
        let step = (hi - lo) / (n - 1) as f64;
        let vals: Vec<f64> = (0..n)
            .map(|i| {
                log_mixture_density(&mix, &kern, &[lo + i as f64 * step])
                    .unwrap()
                    .exp()
            })
            .collect();
        let trap = step * (vals.iter().sum::<f64>() - 0.5 * (vals[0] + vals[n - 1]));
        assert!((trap - 1.0).abs() < 1e-3);
    }

    #[test]
    fn sampling_is_deterministic_and_rejects_zero_count() {
        let mix = ParticleMixture::uniform(vec![vec![0.0, 1.0], vec![3.0, -1.0]]).unwrap();
        let a = sample_mixture(&mix, &k(0.5), 50, &mut seeded(9)).unwrap();
        let b = sample_mixture(&mix, &k(0.5), 50, &mut seeded(9)).unwrap();
        assert_eq!(a, b);
        assert!(sample_mixture(&mix, &k(0.5), 0, &mut seeded(9)).is_err());
    }

    #[test]
    fn degenerate_weights_give_atom_mean() {
        let mix = ParticleMixture::new(
            vec![vec![1.5, -2.0], vec![9.0, 9.0], vec![-5.0, 0.0]],
            vec![1.0, 0.0, 0.0],
        )
        .unwrap();
        let h = 0.8;
        let m = 100_000;
        let s = sample_mixture(&mix, &k(h), m, &mut seeded(21)).unwrap();
        for d in 0..2 {
            let mean = s.iter().map(|y| y[d]).sum::<f64>() / m as f64;
            let se = h / (m as f64).sqrt();
            assert!((mean - mix.atoms()[0][d]).abs() < 4.0 * se);
        }
    }

    #[test]
    fn atom_frequencies_match_weights() {
        let w = vec![0.1, 0.25, 0.05, 0.6];
        let mix = ParticleMixture::new(vec![vec![0.0]; 4], w.clone()).unwrap();
        let m = 100_000;
        let idx = mix.sample_indices(m, &mut seeded(5));
        for (j, wj) in w.iter().enumerate() {
            let freq = idx.iter().filter(|&&i| i == j).count() as f64 / m as f64;
            let tol = 4.0 * (wj * (1.0 - wj) / m as f64).sqrt();
            assert!((freq - wj).abs() < tol, "atom {j}: {freq} vs {wj}");
        }
    }
}
