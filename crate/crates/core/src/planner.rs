//! Sample-ratio planning from finite-population Bernstein concentration.
//!
//! For a cluster of `n` binary oracle labels with sample variance `σ̂²`, the
//! without-replacement tail bound is
//!
//! ```text
//! Pr[|μ̂ − μ| ≥ ε] ≤ 2·exp(−k·ε² / (2σ̂² + 2Rε/3) · (n−k)/(n−1))
//! ```
//!
//! Inverting it for a target failure base `l` (total failure probability
//! `2·lⁿ`) gives the minimum sample ratio that certifies a vote: for uniform
//! voting
//!
//! ```text
//! ξ ≥ 1/2 − sqrt(1/4 + ln l · (2σ̂²/ε² + 2/(3ε)))
//! ```
//!
//! and for similarity voting, whose weights satisfy `max_i w_i ≤ v/k`,
//!
//! ```text
//! ξ ≥ 1/2 − sqrt(1/4 + v·ln l · (6σ̂² + 2ε) / (3ε²))
//! ```
//!
//! When a vote does land, the per-tuple error is at most
//! `max(lb + ε, 1 − (ub − ε))`, the [`error_ceiling`].
//!
//! A negative radicand means no sub-full sample ratio satisfies the bound;
//! that is reported as [`XiBound::Infeasible`] rather than silently clamped,
//! so callers can relax `ε`, raise `l`, or fall back to the linear scan.

use serde::{Deserialize, Serialize};

use crate::math::{exp, ln, sqrt};
use crate::vote::Thresholds;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum PlannerError {
    #[error("epsilon must be in (0, 1), got {0}")]
    InvalidEpsilon(f64),
    #[error("failure base l must be in (0, 1], got {0}")]
    InvalidFailureBase(f64),
    #[error("sample variance must be in [0, 0.25], got {0}")]
    InvalidVariance(f64),
    #[error("weight-skew constant v must be >= 1, got {0}")]
    InvalidSkew(f64),
    #[error("need 1 <= k <= n, got k={k} n={n}")]
    InvalidSampleCount { k: u64, n: u64 },
}

/// Inputs to the closed-form sample-ratio planners.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PlannerParams {
    /// Error tolerance ε in (0, 1).
    pub epsilon: f64,
    /// Failure base l in (0, 1]; the guarantee fails with probability 2·lⁿ.
    #[serde(default = "default_failure_base")]
    pub failure_base: f64,
    /// Sample variance estimate; 0.25 is the conservative binary maximum.
    #[serde(default = "default_variance")]
    pub sigma_hat_sq: f64,
    /// Weight-skew constant v with max_i w_i <= v/k (similarity voting only).
    #[serde(default = "default_skew")]
    pub weight_skew: f64,
    /// Almost-sure bound R on the variables; 1 for binary labels.
    #[serde(default = "default_r_bound")]
    pub r_bound: f64,
}

fn default_failure_base() -> f64 {
    0.9996
}
fn default_variance() -> f64 {
    0.25
}
fn default_skew() -> f64 {
    2.0
}
fn default_r_bound() -> f64 {
    1.0
}

impl Default for PlannerParams {
    fn default() -> Self {
        PlannerParams {
            epsilon: 0.1,
            failure_base: default_failure_base(),
            sigma_hat_sq: default_variance(),
            weight_skew: default_skew(),
            r_bound: default_r_bound(),
        }
    }
}

impl PlannerParams {
    pub fn validate(&self) -> Result<(), PlannerError> {
        if !(self.epsilon > 0.0 && self.epsilon < 1.0) {
            return Err(PlannerError::InvalidEpsilon(self.epsilon));
        }
        if !(self.failure_base > 0.0 && self.failure_base <= 1.0) {
            return Err(PlannerError::InvalidFailureBase(self.failure_base));
        }
        if !(0.0..=0.25).contains(&self.sigma_hat_sq) {
            return Err(PlannerError::InvalidVariance(self.sigma_hat_sq));
        }
        if self.weight_skew < 1.0 {
            return Err(PlannerError::InvalidSkew(self.weight_skew));
        }
        Ok(())
    }
}

/// A planned sample ratio, or the signal that the requested guarantee cannot
/// be met by any sub-full sample.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum XiBound {
    Feasible(f64),
    Infeasible,
}

impl XiBound {
    pub fn feasible(self) -> Option<f64> {
        match self {
            XiBound::Feasible(x) => Some(x),
            XiBound::Infeasible => None,
        }
    }
}

fn xi_from_radicand(radicand: f64) -> XiBound {
    if radicand < 0.0 {
        return XiBound::Infeasible;
    }
    let xi = 0.5 - sqrt(radicand);
    XiBound::Feasible(xi.clamp(0.0, 1.0))
}

/// Minimum sample ratio certifying a uniform vote at tolerance ε.
///
/// `ξ = 1/2 − sqrt(1/4 + ln l·(2σ̂²/ε² + 2/(3ε)))`; `l = 1` collapses to 0.
pub fn xi_univote(p: &PlannerParams) -> Result<XiBound, PlannerError> {
    p.validate()?;
    let eps = p.epsilon;
    let term = 2.0 * p.sigma_hat_sq / (eps * eps) + 2.0 / (3.0 * eps);
    Ok(xi_from_radicand(0.25 + ln(p.failure_base) * term))
}

/// Minimum sample ratio certifying a similarity-weighted vote at tolerance ε.
///
/// `ξ = 1/2 − sqrt(1/4 + v·ln l·(6σ̂² + 2ε)/(3ε²))`. The weighting inflates
/// the variance term, so this is never below [`xi_univote`] for `v ≥ 1`.
pub fn xi_simvote(p: &PlannerParams) -> Result<XiBound, PlannerError> {
    p.validate()?;
    let eps = p.epsilon;
    let term = p.weight_skew * (6.0 * p.sigma_hat_sq + 2.0 * eps) / (3.0 * eps * eps);
    Ok(xi_from_radicand(0.25 + ln(p.failure_base) * term))
}

/// Finite-population Bernstein tail bound for the plain sample mean:
/// `min(1, 2·exp(−kε²/(2σ̂² + 2Rε/3)·(n−k)/(n−1)))`.
pub fn bernstein_tail(
    k: u64,
    n: u64,
    epsilon: f64,
    sigma_hat_sq: f64,
    r_bound: f64,
) -> Result<f64, PlannerError> {
    if k == 0 || k > n {
        return Err(PlannerError::InvalidSampleCount { k, n });
    }
    if k == n || n == 1 {
        return Ok(1.0);
    }
    let kf = k as f64;
    let nf = n as f64;
    let exponent = kf * epsilon * epsilon / (2.0 * sigma_hat_sq + 2.0 * r_bound * epsilon / 3.0)
        * (nf - kf)
        / (nf - 1.0);
    Ok((2.0 * exp(-exponent)).min(1.0))
}

/// Bernstein tail bound for a weighted sample mean with `max_i w_i <= v/k`:
/// `min(1, 2·exp(−3kε²/((6σ̂² + 2ε)·v)·(n−k)/(n−1)))`.
pub fn weighted_bernstein_tail(
    k: u64,
    n: u64,
    epsilon: f64,
    sigma_hat_sq: f64,
    weight_skew: f64,
) -> Result<f64, PlannerError> {
    if k == 0 || k > n {
        return Err(PlannerError::InvalidSampleCount { k, n });
    }
    if weight_skew < 1.0 {
        return Err(PlannerError::InvalidSkew(weight_skew));
    }
    if k == n || n == 1 {
        return Ok(1.0);
    }
    let kf = k as f64;
    let nf = n as f64;
    let exponent = 3.0 * kf * epsilon * epsilon
        / ((6.0 * sigma_hat_sq + 2.0 * epsilon) * weight_skew)
        * (nf - kf)
        / (nf - 1.0);
    Ok((2.0 * exp(-exponent)).min(1.0))
}

/// Worst-case per-tuple error of a landed vote: `max(lb + ε, 1 − (ub − ε))`.
pub fn error_ceiling(th: Thresholds, epsilon: f64) -> f64 {
    (th.lb + epsilon).max(1.0 - (th.ub - epsilon))
}

/// Failure probability of the vote guarantee for a cluster of `n` tuples:
/// `2·lⁿ`.
pub fn failure_probability(failure_base: f64, n: u64) -> f64 {
    (2.0 * exp(n as f64 * ln(failure_base))).min(1.0)
}
