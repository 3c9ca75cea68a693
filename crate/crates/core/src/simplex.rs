//! Helpers for weight vectors on the probability simplex.

use crate::error::{Error, Result};

/// Allowed deviation of the weight sum from one.
pub const SIMPLEX_TOL: f64 = 1e-12;

/// Checks nonnegativity, finiteness and unit sum.
pub fn check(weights: &[f64]) -> Result<()> {
    if weights.is_empty() {
        return Err(Error::Simplex("empty weight vector".into()));
    }
    if let Some((j, w)) = weights
        .iter()
        .enumerate()
        .find(|(_, w)| !(**w >= 0.0) || !w.is_finite())
    {
        return Err(Error::Simplex(format!("weight {j} is {w}")));
    }
    let sum: f64 = weights.iter().sum();
    if (sum - 1.0).abs() > SIMPLEX_TOL {
        return Err(Error::Simplex(format!("weights sum to {sum}")));
    }
    Ok(())
}

pub fn uniform(n: usize) -> Vec<f64> {
    vec![1.0 / n as f64; n]
}

/// `log(sum exp(x))`, ignoring `-inf` entries. Returns `-inf` when every entry is `-inf`.
pub fn log_sum_exp(values: &[f64]) -> f64 {
    let max = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if max == f64::NEG_INFINITY {
        return f64::NEG_INFINITY;
    }
    if max == f64::INFINITY {
        return f64::INFINITY;
    }
    let s: f64 = values.iter().map(|v| (v - max).exp()).sum();
    max + s.ln()
}

/// Normalises unnormalised log-weights into a simplex vector (softmax with
/// max subtraction). Fails when no entry is finite.
pub fn normalize_log(log_weights: &[f64]) -> Result<Vec<f64>> {
    let max = log_weights
        .iter()
        .copied()
        .fold(f64::NEG_INFINITY, f64::max);
    if !max.is_finite() {
        return Err(Error::DegenerateWeights(format!(
            "no finite log-weight (max = {max})"
        )));
    }
    let mut out: Vec<f64> = log_weights.iter().map(|v| (v - max).exp()).collect();
    let total: f64 = out.iter().sum();
    for w in &mut out {
        *w /= total;
    }
    Ok(out)
}
