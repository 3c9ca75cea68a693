//! Fixtures shared by the benchmarks.

use agd_core::rng::seeded;
use agd_core::targets::{toy_gaussian_mixture, IsotropicGaussian, ToyGaussianMixture};
use agd_core::{DiscreteProblem, GaussianKernel, InitialSampler, ParticleMixture};

/// Uniform mixture of `atoms` points drawn from `N(0, 5 I_d)`, its kernel and the toy target.
pub fn toy_fixture(
    atoms: usize,
    dim: usize,
    seed: u64,
) -> (ParticleMixture, GaussianKernel, ToyGaussianMixture) {
    let points = IsotropicGaussian { dim, variance: 5.0 }.sample(atoms, &mut seeded(seed));
    let mix = ParticleMixture::uniform(points).expect("nonempty atoms");
    let kernel = GaussianKernel::new(agd_core::bandwidth(atoms, dim, 1.0).expect("valid sizes"))
        .expect("positive");
    (
        mix,
        kernel,
        toy_gaussian_mixture(dim, 2.0, 2.0).expect("valid toy"),
    )
}

/// Random discrete problem with exactly `atoms` atoms and `grid` grid points.
pub fn discrete_fixture(atoms: usize, grid: usize, seed: u64) -> DiscreteProblem {
    DiscreteProblem::random(&mut seeded(seed), atoms..=atoms, grid..=grid)
}
