//! Finite-sample deviation bounds for the target prior estimator.
//!
//! All bounds hold with probability at least `1 − 3δ` and require
//! `δ ≤ exp(−(√2+1)²/2)`, the regime in which `1 + √(2 log 1/δ) ≤ 2√(log 1/δ)`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::estimator::check_pi;
use crate::kernel::{squared_norm_diff, EmbeddingStats, KernelConfig};

/// Default confidence parameter.
pub const DEFAULT_DELTA: f64 = 0.05;

/// Largest admissible δ, `exp(−(√2+1)²/2) ≈ 0.0542467`.
pub fn delta_max() -> f64 {
    let r = std::f64::consts::SQRT_2 + 1.0;
    (-(r * r) / 2.0).exp()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BoundKind {
    /// Data-dependent bound using `‖Φ(P̂) − Φ(P̂⁺)‖`.
    Empirical,
    /// Population bound using `‖Φ(P₋) − Φ(P₊)‖`.
    Population,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BoundReport {
    pub delta: f64,
    pub coverage: f64,
    #[serde(rename = "N")]
    pub n_min: usize,
    #[serde(rename = "M")]
    pub sup_bound: f64,
    pub bound_value: f64,
    pub kind: BoundKind,
}

pub fn check_delta(delta: f64) -> Result<()> {
    let max = delta_max();
    if !(delta > 0.0 && delta <= max) {
        return Err(Error::InvalidDelta { delta, max });
    }
    Ok(())
}

fn check_sizes(n: usize, sup_bound: f64) -> Result<()> {
    if n == 0 {
        return Err(Error::invalid("sample size must be at least 1"));
    }
    if !(sup_bound.is_finite() && sup_bound > 0.0) {
        return Err(Error::invalid(format!(
            "M must be positive, got {sup_bound}"
        )));
    }
    Ok(())
}

/// `√((M/N) log(1/δ))`, the common factor of every radius.
fn scale(sup_bound: f64, n: usize, delta: f64) -> f64 {
    (sup_bound / n as f64 * (1.0 / delta).ln()).sqrt()
}

/// Radius `2√((M/n) log(1/δ))` bounding `‖Φ(P̂) − Φ(P)‖` for a sample of size `n`.
pub fn concentration_radius(n: usize, delta: f64, sup_bound: f64) -> Result<f64> {
    check_delta(delta)?;
    check_sizes(n, sup_bound)?;
    Ok(2.0 * scale(sup_bound, n, delta))
}

/// Empirical bound from an explicit denominator norm `‖Φ(P̂) − Φ(P̂⁺)‖`.
pub fn empirical_bound_from_norm(
    denominator_norm: f64,
    n_min: usize,
    sup_bound: f64,
    delta: f64,
) -> Result<BoundReport> {
    check_delta(delta)?;
    check_sizes(n_min, sup_bound)?;
    if !(denominator_norm.is_finite() && denominator_norm > 0.0) {
        return Err(Error::DegenerateEmbedding {
            squared_distance: denominator_norm * denominator_norm,
        });
    }
    Ok(BoundReport {
        delta,
        coverage: 1.0 - 3.0 * delta,
        n_min,
        sup_bound,
        bound_value: 4.0 * scale(sup_bound, n_min, delta) / denominator_norm,
        kind: BoundKind::Empirical,
    })
}

/// Data-dependent bound on `|π̂′ − π′|`, computable from the embedding stats.
pub fn empirical_bound(
    stats: &EmbeddingStats,
    cfg: &KernelConfig,
    delta: f64,
) -> Result<BoundReport> {
    check_delta(delta)?;
    let d = squared_norm_diff(stats)?;
    if d <= 0.0 {
        return Err(Error::DegenerateEmbedding {
            squared_distance: d,
        });
    }
    empirical_bound_from_norm(d.sqrt(), stats.min_size(), cfg.sup_bound(), delta)
}

/// Smallest `N` with `N ≥ 16 M log(1/δ) / ((1−α)²(1−π)² mmd²)`.
pub fn population_min_n(
    pi: f64,
    alpha: f64,
    delta: f64,
    sup_bound: f64,
    mmd_pm: f64,
) -> Result<usize> {
    check_pi(pi)?;
    check_delta(delta)?;
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(Error::invalid(format!(
            "alpha must lie in (0, 1), got {alpha}"
        )));
    }
    check_mmd(mmd_pm)?;
    check_sizes(1, sup_bound)?;
    let denom = (1.0 - alpha).powi(2) * (1.0 - pi).powi(2) * mmd_pm * mmd_pm;
    let required = 16.0 * sup_bound * (1.0 / delta).ln() / denom;
    Ok(required.ceil() as usize)
}

fn check_mmd(mmd_pm: f64) -> Result<()> {
    if !(mmd_pm.is_finite() && mmd_pm > 0.0) {
        return Err(Error::invalid(format!(
            "population distance must be positive, got {mmd_pm}"
        )));
    }
    Ok(())
}

/// `4√((M/N) log(1/δ)) / (α(1−π) mmd)` without the sample-size check.
/// Accepts `α = 1`, where it coincides with the empirical bound for a
/// plug-in distance.
pub fn population_bound_value(
    pi: f64,
    alpha: f64,
    delta: f64,
    sup_bound: f64,
    n_min: usize,
    mmd_pm: f64,
) -> Result<f64> {
    check_pi(pi)?;
    check_delta(delta)?;
    check_sizes(n_min, sup_bound)?;
    check_mmd(mmd_pm)?;
    if !(alpha > 0.0 && alpha <= 1.0) {
        return Err(Error::invalid(format!(
            "alpha must lie in (0, 1], got {alpha}"
        )));
    }
    Ok(4.0 * scale(sup_bound, n_min, delta) / (alpha * (1.0 - pi) * mmd_pm))
}

/// Population bound, valid once `N` meets the minimal sample size.
pub fn population_bound(
    pi: f64,
    alpha: f64,
    delta: f64,
    sup_bound: f64,
    n_min: usize,
    mmd_pm: f64,
) -> Result<BoundReport> {
    let required = population_min_n(pi, alpha, delta, sup_bound, mmd_pm)?;
    if n_min < required {
        return Err(Error::InsufficientSample { n: n_min, required });
    }
    Ok(BoundReport {
        delta,
        coverage: 1.0 - 3.0 * delta,
        n_min,
        sup_bound,
        bound_value: population_bound_value(pi, alpha, delta, sup_bound, n_min, mmd_pm)?,
        kind: BoundKind::Population,
    })
}

/// Plug-in estimate of `‖Φ(P₋) − Φ(P₊)‖` as `‖Φ(P̂) − Φ(P̂⁺)‖ / (1−π)`.
///
/// No finite-sample guarantee; meant for reporting only.
pub fn estimate_mmd_pm(stats: &EmbeddingStats, pi: f64) -> Result<f64> {
    check_pi(pi)?;
    let d = squared_norm_diff(stats)?;
    if d <= 0.0 {
        return Err(Error::DegenerateEmbedding {
            squared_distance: d,
        });
    }
    Ok(d.sqrt() / (1.0 - pi))
}
