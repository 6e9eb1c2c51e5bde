//! Sufficient consensus-gain bound b1 > gamma1 * b2.
//!
//! In the diagonalizing coordinates J1 becomes b1 diag(mu, 0) + b2 alpha beta^T.
//! A diagonal Lyapunov weight diag(eps_1, .., eps_{n-1}, 1) makes the
//! symmetric part positive definite exactly when
//!
//! ```text
//! b1 > (b2 / 4) * sum_i (a_n x_i - eps_i y_i b_n)^2 / (a_n b_n mu_i eps_i)
//! ```
//!
//! with (y_i, x_i) = (alpha_i, beta_i) when alpha_i beta_i != 0 and zero
//! otherwise. Any positive weights give a valid certificate; the minimizing
//! weight eps_i = |a_n x_i / (b_n y_i)| collapses each term to
//! max(-alpha_i beta_i, 0) / mu_i, which is the clipped-sum form of the same
//! threshold.

use serde::Serialize;

use crate::error::{Error, Result};
use crate::stability::diagonalize::DiagonalizationResult;

/// Choice of the diagonal Lyapunov weights.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum EpsilonRule {
    /// eps_i = |alpha_n beta_i / (beta_n alpha_i)|, the per-term minimizer.
    Minimizing,
    /// eps_i = sqrt(alpha_n beta_i / (beta_n alpha_i)) when alpha_i beta_i > 0,
    /// eps_i = 1 otherwise.
    SquareRoot,
}

#[derive(Debug, Clone, Serialize)]
pub struct GainBound {
    /// Threshold ratio from the minimizing weights.
    pub gamma1: f64,
    /// b2 * gamma1: the certificate holds when b1 exceeds this.
    pub bound62: f64,
    /// sum_i max(-alpha_i beta_i, 0) / mu_i, computed directly.
    pub gamma1_clipped: f64,
    /// sum_i min(alpha_i beta_i, 0) / mu_i, the signed clipped sum.
    pub gamma1_signed: f64,
    /// Ratio obtained with the square-root weights, for comparison.
    pub gamma1_square_root: f64,
    pub alpha_beta_last: f64,
}

impl GainBound {
    pub fn certifies(&self, b1: f64) -> bool {
        b1 > self.bound62
    }
}

fn check(diag: &DiagonalizationResult) -> Result<f64> {
    if let Some(m) = diag.mu.iter().find(|&&m| !(m > 0.0)) {
        return Err(Error::BoundUndefined(format!(
            "J2 has a non-positive nonzero eigenvalue {m:e}; the load exceeds its maximum"
        )));
    }
    let ab = diag.alpha_beta_last();
    if !(ab > 0.0) {
        return Err(Error::HypothesisViolated(format!(
            "alpha_n beta_n = {ab:e} must be positive (needs voltage feedback, sum k_i g_i > 0)"
        )));
    }
    Ok(ab)
}

/// Threshold ratio (the bound divided by b2) for the given weight rule.
pub fn threshold_ratio(diag: &DiagonalizationResult, rule: EpsilonRule) -> Result<f64> {
    let ab_last = check(diag)?;
    let n = diag.alpha.len();
    let (a_n, b_n) = (diag.alpha[n - 1], diag.beta[n - 1]);
    let mut sum = 0.0;
    for i in 0..n - 1 {
        let (a_i, b_i) = (diag.alpha[i], diag.beta[i]);
        let coupled = a_i * b_i != 0.0;
        let (eta, xi) = if coupled { (a_i, b_i) } else { (0.0, 0.0) };
        let eps = match rule {
            EpsilonRule::Minimizing if coupled => (a_n * b_i / (b_n * a_i)).abs(),
            EpsilonRule::SquareRoot if a_i * b_i > 0.0 => {
                let arg = a_n * b_i / (b_n * a_i);
                if !(arg > 0.0) {
                    return Err(Error::Inconsistency(format!(
                        "weight argument {arg:e} is not positive at index {i}"
                    )));
                }
                arg.sqrt()
            }
            _ => 1.0,
        };
        let d = a_n * xi - eps * eta * b_n;
        sum += d * d / (ab_last * diag.mu[i] * eps);
    }
    Ok(sum / 4.0)
}

/// Both forms of the gain threshold at voltage gain `b2`.
pub fn gain_bound(diag: &DiagonalizationResult, b2: f64) -> Result<GainBound> {
    let alpha_beta_last = check(diag)?;
    let gamma1 = threshold_ratio(diag, EpsilonRule::Minimizing)?;
    let gamma1_square_root = threshold_ratio(diag, EpsilonRule::SquareRoot)?;
    let n = diag.alpha.len();
    let gamma1_signed: f64 = (0..n - 1)
        .map(|i| (diag.alpha[i] * diag.beta[i]).min(0.0) / diag.mu[i])
        .sum();
    Ok(GainBound {
        gamma1,
        bound62: b2 * gamma1,
        gamma1_clipped: -gamma1_signed,
        gamma1_signed,
        gamma1_square_root,
        alpha_beta_last,
    })
}
