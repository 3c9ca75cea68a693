//! Unnormalised targets `p(y) = p(y, D)` and initial samplers.

use std::f64::consts::PI;

use rand::seq::index;
use rand::Rng;
use rand_distr::{Distribution, Gamma, StandardNormal};

use crate::error::{Error, Result};
use crate::rng::SeedRng;
use crate::simplex::log_sum_exp;

/// An unnormalised log density on `R^d`. Returns `-inf` only outside the support.
pub trait TargetModel: Send + Sync {
    fn dim(&self) -> usize;

    fn log_density(&self, y: &[f64]) -> f64;

    /// View used for a single descent step. Targets that subsample data return
    /// a fresh minibatch view; exact targets return `None` and are used as is.
    fn minibatch(&self, _rng: &mut SeedRng) -> Option<Box<dyn TargetModel + '_>> {
        None
    }

    /// `log int p(y) dy` when known in closed form.
    fn log_normalizer(&self) -> Option<f64> {
        None
    }
}

/// Draws the initial atoms and evaluates their density (the proposal at step 0).
pub trait InitialSampler: Send + Sync {
    fn dim(&self) -> usize;
    fn sample(&self, count: usize, rng: &mut SeedRng) -> Vec<Vec<f64>>;
    fn log_density(&self, y: &[f64]) -> f64;
}

fn normal_log_pdf(x: f64, mean: f64, var: f64) -> f64 {
    -0.5 * ((2.0 * PI * var).ln() + (x - mean) * (x - mean) / var)
}

/// `log sigma(z) = -log(1 + exp(-z))`, stable for large `|z|`.
pub fn log_sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        -(-z).exp().ln_1p()
    } else {
        z - z.exp().ln_1p()
    }
}

pub fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

/// `Z [0.5 N(y; -s u_d, I_d) + 0.5 N(y; s u_d, I_d)]` with `u_d` the all-ones vector.
#[derive(Debug, Clone, PartialEq)]
pub struct ToyGaussianMixture {
    dim: usize,
    separation: f64,
    scale: f64,
}

/// Two-component Gaussian mixture target (defaults `s = 2`, `Z = 2`).
pub fn toy_gaussian_mixture(dim: usize, separation: f64, scale: f64) -> Result<ToyGaussianMixture> {
    if dim == 0 {
        return Err(Error::Argument("dimension must be >= 1".into()));
    }
    if !(scale > 0.0) || !separation.is_finite() {
        return Err(Error::Argument(format!(
            "need Z > 0 and finite s, got Z = {scale}, s = {separation}"
        )));
    }
    Ok(ToyGaussianMixture {
        dim,
        separation,
        scale,
    })
}

impl ToyGaussianMixture {
    pub const DEFAULT_SEPARATION: f64 = 2.0;
    pub const DEFAULT_SCALE: f64 = 2.0;
}

impl TargetModel for ToyGaussianMixture {
    fn dim(&self) -> usize {
        self.dim
    }

    fn log_density(&self, y: &[f64]) -> f64 {
        let s = self.separation;
        let (mut minus, mut plus) = (0.0, 0.0);
        for yi in y {
            minus += (yi + s) * (yi + s);
            plus += (yi - s) * (yi - s);
        }
        let norm = -0.5 * self.dim as f64 * (2.0 * PI).ln();
        let half = 0.5f64.ln();
        self.scale.ln() + norm + log_sum_exp(&[half - 0.5 * minus, half - 0.5 * plus])
    }

    fn log_normalizer(&self) -> Option<f64> {
        Some(self.scale.ln())
    }
}

/// Gaussian prior `N(0, prior_var I)` with one Gaussian observation per
/// coordinate, `obs ~ N(theta, lik_var I)`; the joint is the unnormalised
/// posterior and its normaliser is the marginal likelihood.
#[derive(Debug, Clone, PartialEq)]
pub struct ConjugateGaussian {
    prior_var: f64,
    lik_var: f64,
    observation: Vec<f64>,
}

pub fn conjugate_gaussian_target(
    prior_var: f64,
    lik_var: f64,
    observation: Vec<f64>,
) -> Result<ConjugateGaussian> {
    if !(prior_var > 0.0) || !(lik_var > 0.0) {
        return Err(Error::Argument("variances must be positive".into()));
    }
    if observation.is_empty() {
        return Err(Error::Argument("dimension must be >= 1".into()));
    }
    Ok(ConjugateGaussian {
        prior_var,
        lik_var,
        observation,
    })
}

impl ConjugateGaussian {
    pub fn posterior_mean(&self) -> Vec<f64> {
        let shrink = self.prior_var / (self.prior_var + self.lik_var);
        self.observation.iter().map(|o| shrink * o).collect()
    }

    pub fn posterior_var(&self) -> f64 {
        self.prior_var * self.lik_var / (self.prior_var + self.lik_var)
    }
}

impl TargetModel for ConjugateGaussian {
    fn dim(&self) -> usize {
        self.observation.len()
    }

    fn log_density(&self, y: &[f64]) -> f64 {
        y.iter()
            .zip(&self.observation)
            .map(|(t, o)| {
                normal_log_pdf(*t, 0.0, self.prior_var) + normal_log_pdf(*o, *t, self.lik_var)
            })
            .sum()
    }

    fn log_normalizer(&self) -> Option<f64> {
        let v = self.prior_var + self.lik_var;
        Some(
            self.observation
                .iter()
                .map(|o| normal_log_pdf(*o, 0.0, v))
                .sum(),
        )
    }
}

/// Binary classification data: feature rows `x_i` and labels `c_i` in {-1, +1}.
#[derive(Debug, Clone, PartialEq)]
pub struct BlrData {
    features: Vec<Vec<f64>>,
    labels: Vec<f64>,
}

impl BlrData {
    pub fn new(features: Vec<Vec<f64>>, labels: Vec<f64>) -> Result<Self> {
        if features.len() != labels.len() {
            return Err(Error::DimensionMismatch {
                expected: features.len(),
                got: labels.len(),
            });
        }
        if features.is_empty() {
            return Err(Error::Argument("dataset is empty".into()));
        }
        let l = features[0].len();
        if let Some(row) = features.iter().find(|r| r.len() != l) {
            return Err(Error::DimensionMismatch {
                expected: l,
                got: row.len(),
            });
        }
        if features.iter().flatten().any(|v| !v.is_finite()) {
            return Err(Error::Argument("feature values must be finite".into()));
        }
        if let Some(c) = labels.iter().find(|c| **c != 1.0 && **c != -1.0) {
            return Err(Error::Argument(format!("labels must be -1 or +1, got {c}")));
        }
        Ok(Self { features, labels })
    }

    pub fn features(&self) -> &[Vec<f64>] {
        &self.features
    }

    pub fn labels(&self) -> &[f64] {
        &self.labels
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn feature_count(&self) -> usize {
        self.features[0].len()
    }

    /// Rows at the given indices.
    pub fn subset(&self, rows: &[usize]) -> Self {
        Self {
            features: rows.iter().map(|&i| self.features[i].clone()).collect(),
            labels: rows.iter().map(|&i| self.labels[i]).collect(),
        }
    }
}

/// Gamma hyperparameters of the precision prior (shape `a`, rate `b`).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BlrPrior {
    pub shape: f64,
    pub rate: f64,
}

impl Default for BlrPrior {
    fn default() -> Self {
        Self {
            shape: 1.0,
            rate: 0.01,
        }
    }
}

impl BlrPrior {
    /// `log Gamma(beta; a, b) + sum_l log N(w_l; 0, 1/beta)`; `-inf` for `beta <= 0`.
    pub fn log_density(&self, weights: &[f64], beta: f64) -> f64 {
        if !(beta > 0.0) {
            return f64::NEG_INFINITY;
        }
        let (a, b) = (self.shape, self.rate);
        let log_gamma = a * b.ln() - libm::lgamma(a) + (a - 1.0) * beta.ln() - b * beta;
        let sq: f64 = weights.iter().map(|w| w * w).sum();
        let l = weights.len() as f64;
        log_gamma + 0.5 * l * (beta.ln() - (2.0 * PI).ln()) - 0.5 * beta * sq
    }
}

/// Log joint of the logistic regression model at `y = (w, beta)`, with the
/// likelihood over `batch` scaled by `I / |batch|`. `batch = None` uses every row.
pub fn blr_log_joint(
    y: &[f64],
    data: &BlrData,
    batch: Option<&[usize]>,
    prior: &BlrPrior,
) -> Result<f64> {
    let l = data.feature_count();
    if y.len() != l + 1 {
        return Err(Error::DimensionMismatch {
            expected: l + 1,
            got: y.len(),
        });
    }
    if let Some(b) = batch {
        if b.is_empty() {
            return Err(Error::Argument("minibatch must be non-empty".into()));
        }
        if let Some(i) = b.iter().find(|i| **i >= data.len()) {
            return Err(Error::Argument(format!("row {i} out of range")));
        }
    }
    Ok(log_joint_unchecked(y, data, batch, prior))
}

fn log_joint_unchecked(
    y: &[f64],
    data: &BlrData,
    batch: Option<&[usize]>,
    prior: &BlrPrior,
) -> f64 {
    let l = data.feature_count();
    let (w, beta) = (&y[..l], y[l]);
    let log_prior = prior.log_density(w, beta);
    if log_prior == f64::NEG_INFINITY {
        return log_prior;
    }
    let row_ll = |i: usize| log_sigmoid(data.labels[i] * dot(w, &data.features[i]));
    let likelihood = match batch {
        None => (0..data.len()).map(row_ll).sum::<f64>(),
        Some(b) => {
            let scale = data.len() as f64 / b.len() as f64;
            scale * b.iter().map(|&i| row_ll(i)).sum::<f64>()
        }
    };
    log_prior + likelihood
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Bayesian logistic regression posterior `p(w, beta, D)` on `R^(L+1)`.
#[derive(Debug, Clone)]
pub struct BlrTarget<'a> {
    data: &'a BlrData,
    prior: BlrPrior,
    batch_size: Option<usize>,
}

impl<'a> BlrTarget<'a> {
    /// `batch_size = None` evaluates the full likelihood every time.
    pub fn new(data: &'a BlrData, prior: BlrPrior, batch_size: Option<usize>) -> Result<Self> {
        if batch_size == Some(0) {
            return Err(Error::Argument("minibatch size must be >= 1".into()));
        }
        Ok(Self {
            data,
            prior,
            batch_size,
        })
    }

    pub fn data(&self) -> &BlrData {
        self.data
    }
}

struct BatchView<'b> {
    data: &'b BlrData,
    prior: BlrPrior,
    batch: Vec<usize>,
}

impl TargetModel for BatchView<'_> {
    fn dim(&self) -> usize {
        self.data.feature_count() + 1
    }

    fn log_density(&self, y: &[f64]) -> f64 {
        log_joint_unchecked(y, self.data, Some(&self.batch), &self.prior)
    }
}

impl TargetModel for BlrTarget<'_> {
    fn dim(&self) -> usize {
        self.data.feature_count() + 1
    }

    fn log_density(&self, y: &[f64]) -> f64 {
        log_joint_unchecked(y, self.data, None, &self.prior)
    }

    fn minibatch(&self, rng: &mut SeedRng) -> Option<Box<dyn TargetModel + '_>> {
        let size = self.batch_size?;
        if size >= self.data.len() {
            return None;
        }
        let batch = index::sample(rng, self.data.len(), size).into_vec();
        Some(Box::new(BatchView {
            data: self.data,
            prior: self.prior,
            batch,
        }))
    }
}

/// Predictive probability `mean_s sigma(w_s^T x)` over posterior samples `(w, beta)`.
pub fn blr_predict(samples: &[Vec<f64>], x: &[f64]) -> Result<f64> {
    if samples.is_empty() {
        return Err(Error::Argument("need at least one posterior sample".into()));
    }
    let l = x.len();
    if let Some(s) = samples.iter().find(|s| s.len() < l) {
        return Err(Error::DimensionMismatch {
            expected: l,
            got: s.len(),
        });
    }
    let total: f64 = samples.iter().map(|s| sigmoid(dot(&s[..l], x))).sum();
    Ok(total / samples.len() as f64)
}

/// Predictive probability `sum_j lambda_j sigma(w_j^T x)` of label +1 under a
/// weighted particle set.
pub fn blr_predict_weighted(atoms: &[Vec<f64>], weights: &[f64], x: &[f64]) -> Result<f64> {
    if atoms.len() != weights.len() {
        return Err(Error::DimensionMismatch {
            expected: atoms.len(),
            got: weights.len(),
        });
    }
    let l = x.len();
    if let Some(a) = atoms.iter().find(|a| a.len() < l) {
        return Err(Error::DimensionMismatch {
            expected: l,
            got: a.len(),
        });
    }
    Ok(atoms
        .iter()
        .zip(weights)
        .filter(|(_, w)| **w > 0.0)
        .map(|(a, w)| w * sigmoid(dot(&a[..l], x)))
        .sum())
}

/// `N(0, variance I_d)`.
#[derive(Debug, Clone, PartialEq)]
pub struct IsotropicGaussian {
    pub dim: usize,
    pub variance: f64,
}

impl InitialSampler for IsotropicGaussian {
    fn dim(&self) -> usize {
        self.dim
    }

    fn sample(&self, count: usize, rng: &mut SeedRng) -> Vec<Vec<f64>> {
        let sd = self.variance.sqrt();
        (0..count)
            .map(|_| {
                (0..self.dim)
                    .map(|_| sd * rng.sample::<f64, _>(StandardNormal))
                    .collect()
            })
            .collect()
    }

    fn log_density(&self, y: &[f64]) -> f64 {
        y.iter()
            .map(|v| normal_log_pdf(*v, 0.0, self.variance))
            .sum()
    }
}

/// Draws `(w, beta)` from the model prior.
#[derive(Debug, Clone, PartialEq)]
pub struct BlrPriorSampler {
    pub features: usize,
    pub prior: BlrPrior,
}

impl InitialSampler for BlrPriorSampler {
    fn dim(&self) -> usize {
        self.features + 1
    }

    fn sample(&self, count: usize, rng: &mut SeedRng) -> Vec<Vec<f64>> {
        let gamma =
            Gamma::new(self.prior.shape, 1.0 / self.prior.rate).expect("positive hyperparameters");
        (0..count)
            .map(|_| {
                let beta: f64 = gamma.sample(rng);
                let sd = beta.sqrt().recip();
                let mut y: Vec<f64> = (0..self.features)
                    .map(|_| sd * rng.sample::<f64, _>(StandardNormal))
                    .collect();
                y.push(beta);
                y
            })
            .collect()
    }

    fn log_density(&self, y: &[f64]) -> f64 {
        let l = self.features;
        self.prior.log_density(&y[..l], y[l])
    }
}
