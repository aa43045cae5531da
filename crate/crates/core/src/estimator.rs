//! Closed-form target prior estimator.
//!
//! With `Δ = Φ(P̂) − πΦ(P̂⁺) − (1−π)Φ(P̂′)` and `u = Φ(P̂) − Φ(P̂⁺)`, the empirical
//! objective is the quadratic `L̂(γ) = γ²‖u‖² − 2γ<u, Δ> + ‖Δ‖²`, so its minimizer
//! is the projection coefficient `<u, Δ> / ‖u‖²`.

use serde::{Deserialize, Serialize};

use crate::baseline_km::{km2_prior, KmConfig};
use crate::error::{Error, Result};
use crate::kernel::{embedding_stats, squared_norm_diff, EmbeddingStats, KernelConfig, Sample};

/// Smallest admissible `‖Φ(P̂) − Φ(P̂⁺)‖²`.
pub const DENOMINATOR_EPS: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PiSource {
    Known,
    Km2Plugin,
}

/// How the source prior is obtained.
#[derive(Debug, Clone, PartialEq)]
pub enum PiSpec {
    Known(f64),
    Plugin(KmConfig),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PriorEstimate {
    /// Unclipped minimizer of the empirical objective.
    pub raw: f64,
    pub clipped: f64,
    /// `‖Φ(P̂) − Φ(P̂⁺)‖`.
    pub denominator: f64,
    pub pi_used: f64,
    pub pi_source: PiSource,
}

/// Coefficients of `L̂(γ) = d·γ² − 2c·γ + e`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Quadratic {
    pub d: f64,
    pub c: f64,
    pub e: f64,
}

pub(crate) fn check_pi(pi: f64) -> Result<()> {
    if !(0.0..1.0).contains(&pi) {
        return Err(Error::invalid(format!(
            "source prior must lie in [0, 1), got {pi}"
        )));
    }
    Ok(())
}

/// Expands the objective's coefficients in terms of the six kernel means.
pub fn objective_terms(stats: &EmbeddingStats, pi: f64) -> Result<Quadratic> {
    check_pi(pi)?;
    let s = stats;
    let q = 1.0 - pi;
    let d = s.s_uu - 2.0 * s.s_up + s.s_pp;
    let c = s.s_uu - pi * s.s_up - q * s.s_ut - s.s_up + pi * s.s_pp + q * s.s_pt;
    let e = s.s_uu + pi * pi * s.s_pp + q * q * s.s_tt - 2.0 * pi * s.s_up - 2.0 * q * s.s_ut
        + 2.0 * pi * q * s.s_pt;
    Ok(Quadratic { d, c, e })
}

/// Empirical objective `L̂(γ)`.
pub fn objective(stats: &EmbeddingStats, pi: f64, gamma: f64) -> Result<f64> {
    let q = objective_terms(stats, pi)?;
    Ok(gamma * gamma * q.d - 2.0 * gamma * q.c + q.e)
}

fn checked_denominator(stats: &EmbeddingStats) -> Result<f64> {
    let d = squared_norm_diff(stats)?;
    if d <= DENOMINATOR_EPS {
        return Err(Error::DegenerateEmbedding {
            squared_distance: d,
        });
    }
    Ok(d)
}

/// Second algebraic form: `1 − (1−π)<u, Φ(P̂′) − Φ(P̂⁺)> / ‖u‖²`.
pub fn tcpu_complement_form(stats: &EmbeddingStats, pi: f64) -> Result<f64> {
    check_pi(pi)?;
    let d = checked_denominator(stats)?;
    let s = stats;
    let inner = s.s_ut - s.s_up - s.s_pt + s.s_pp;
    Ok(1.0 - (1.0 - pi) * inner / d)
}

/// Exact minimizer of the empirical objective, `<u, Δ> / ‖u‖²`.
pub fn tcpu_closed_form(
    stats: &EmbeddingStats,
    pi: f64,
    pi_source: PiSource,
) -> Result<PriorEstimate> {
    let q = objective_terms(stats, pi)?;
    let d = checked_denominator(stats)?;
    let raw = q.c / d;
    Ok(PriorEstimate {
        raw,
        clipped: raw.clamp(0.0, 1.0),
        denominator: d.sqrt(),
        pi_used: pi,
        pi_source,
    })
}

/// Brute-force argmin of the objective over `lo, lo+step, …, ≤ hi`.
/// Ties go to the smaller grid point.
pub fn tcpu_grid_oracle(
    stats: &EmbeddingStats,
    pi: f64,
    lo: f64,
    hi: f64,
    step: f64,
) -> Result<f64> {
    if !(lo.is_finite() && hi.is_finite() && lo < hi && step > 0.0 && step.is_finite()) {
        return Err(Error::invalid(format!(
            "empty grid: lo={lo}, hi={hi}, step={step}"
        )));
    }
    let q = objective_terms(stats, pi)?;
    let count = ((hi - lo) / step + 1e-9).floor() as u64;
    let mut best = (lo, f64::INFINITY);
    for k in 0..=count {
        let g = lo + k as f64 * step;
        let v = g * g * q.d - 2.0 * g * q.c + q.e;
        if v < best.1 {
            best = (g, v);
        }
    }
    Ok(best.0)
}

/// Estimates the target prior from source unlabeled, source positive and
/// target samples, resolving the source prior as requested.
pub fn estimate_target_prior(
    cfg: &KernelConfig,
    u: &Sample,
    pos: &Sample,
    tgt: &Sample,
    pi_spec: &PiSpec,
) -> Result<PriorEstimate> {
    let stats = embedding_stats(cfg, u, pos, tgt)?;
    let (pi, source) = resolve_pi(cfg, u, pos, pi_spec)?;
    tcpu_closed_form(&stats, pi, source)
}

pub(crate) fn resolve_pi(
    cfg: &KernelConfig,
    u: &Sample,
    pos: &Sample,
    pi_spec: &PiSpec,
) -> Result<(f64, PiSource)> {
    match pi_spec {
        PiSpec::Known(pi) => {
            check_pi(*pi)?;
            Ok((*pi, PiSource::Known))
        }
        PiSpec::Plugin(km) => {
            let est =
                km2_prior(cfg, km, u, pos).map_err(|e| Error::PluginFailure(e.to_string()))?;
            Ok((est.pi, PiSource::Km2Plugin))
        }
    }
}
