//! KM2-style mixture proportion estimation by convex-hull projection in the RKHS.
//!
//! For a mixture sample `mix` and a component sample `comp`, the curve
//! `d(λ) = dist(λΦ(mix) + (1−λ)Φ(comp), conv{φ(zᵢ)})` stays near zero while
//! `λ ≤ 1/(1−κ)` (κ the component weight) and grows linearly beyond it. The
//! kink is located by thresholding the curve's forward slope.
//!
//! Used both as the source-prior plug-in on (unlabeled, positives) and as the
//! KM2-LS baseline on (target, positives).

use rand::seq::index;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::kernel::{KernelConfig, Sample};

/// Slope threshold ν, frozen from the synthetic calibration sweep
/// (see `crates/bench/examples/calibrate_slope.rs`).
pub const DEFAULT_SLOPE_THRESHOLD: f64 = 0.06;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct KmConfig {
    pub lambda_grid: Vec<f64>,
    pub fw_max_iter: usize,
    /// Stop once the Frank–Wolfe duality gap drops below `fw_tol · max(f, fw_tol)`.
    pub fw_tol: f64,
    pub slope_threshold: f64,
    /// Pooled hull vertices above this count are uniformly subsampled.
    pub max_pooled: usize,
    pub seed: u64,
}

impl Default for KmConfig {
    fn default() -> Self {
        KmConfig {
            lambda_grid: linear_grid(1.0, 10.0, 0.05),
            fw_max_iter: 500,
            fw_tol: 1e-6,
            slope_threshold: DEFAULT_SLOPE_THRESHOLD,
            max_pooled: 2000,
            seed: 0,
        }
    }
}

/// `start, start+step, …` up to and including `stop` (within rounding).
pub fn linear_grid(start: f64, stop: f64, step: f64) -> Vec<f64> {
    let count = ((stop - start) / step + 1e-9).floor() as usize;
    (0..=count).map(|k| start + k as f64 * step).collect()
}

impl KmConfig {
    pub fn validate(&self) -> Result<()> {
        let g = &self.lambda_grid;
        if g.len() < 2 {
            return Err(Error::invalid("lambda grid needs at least two points"));
        }
        if g[0] != 1.0 {
            return Err(Error::invalid("lambda grid must start at 1"));
        }
        if g.windows(2).any(|w| !(w[1] > w[0])) {
            return Err(Error::invalid("lambda grid must be strictly increasing"));
        }
        if self.fw_max_iter == 0 || !(self.fw_tol > 0.0) || !(self.slope_threshold > 0.0) {
            return Err(Error::invalid(
                "Frank-Wolfe settings and slope threshold must be positive",
            ));
        }
        if self.max_pooled < 2 {
            return Err(Error::invalid("max_pooled must be at least 2"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DistanceCurve {
    pub lambdas: Vec<f64>,
    pub distances: Vec<f64>,
    pub weights_converged: Vec<bool>,
}

/// Outcome of a single hull projection.
#[derive(Debug, Clone, PartialEq)]
pub struct HullProjection {
    pub distance: f64,
    pub converged: bool,
    pub iterations: usize,
    /// Squared distance after each iteration, starting with the initial point.
    pub objective_history: Vec<f64>,
    pub weights: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Km2Estimate {
    /// Estimated weight of `comp` inside `mix`, in `[0, 1)`.
    pub pi: f64,
    pub lambda_hat: f64,
    /// No slope on the grid exceeded the threshold.
    pub low_confidence: bool,
    pub curve: DistanceCurve,
}

/// Pooled vertices with their Gram matrix and mean-map inner products.
///
/// Vertices `0..n_mix` come from the mixture, the rest from the component.
pub struct HullProblem {
    n: usize,
    n_mix: usize,
    gram: Vec<f64>,
    /// `<Φ(mix), φ(zᵢ)>`
    b_mix: Vec<f64>,
    /// `<Φ(comp), φ(zᵢ)>`
    b_comp: Vec<f64>,
    s_mm: f64,
    s_mc: f64,
    s_cc: f64,
}

fn subsample(s: &Sample, k: usize, rng: &mut ChaCha8Rng) -> Sample {
    if k >= s.len() {
        return s.clone();
    }
    let mut idx = index::sample(rng, s.len(), k).into_vec();
    idx.sort_unstable();
    s.select(&idx)
}

impl HullProblem {
    pub fn new(
        cfg_k: &KernelConfig,
        cfg_km: &KmConfig,
        mix: &Sample,
        comp: &Sample,
    ) -> Result<Self> {
        if mix.is_empty() || comp.is_empty() {
            return Err(Error::EmptySample);
        }
        if mix.dim() != comp.dim() {
            return Err(Error::DimensionMismatch {
                expected: mix.dim(),
                found: comp.dim(),
            });
        }
        let total = mix.len() + comp.len();
        let (mix, comp) = if total > cfg_km.max_pooled {
            let mut rng = ChaCha8Rng::seed_from_u64(cfg_km.seed);
            let k_mix = ((cfg_km.max_pooled as f64 * mix.len() as f64 / total as f64).round()
                as usize)
                .clamp(1, cfg_km.max_pooled - 1);
            let k_comp = cfg_km.max_pooled - k_mix;
            (
                subsample(mix, k_mix, &mut rng),
                subsample(comp, k_comp, &mut rng),
            )
        } else {
            (mix.clone(), comp.clone())
        };
        let pooled = mix.concat(&comp)?;
        let n = pooled.len();
        let n_mix = mix.len();
        let mut gram = vec![0.0; n * n];
        gram.par_chunks_mut(n).enumerate().for_each(|(i, row)| {
            let x = pooled.row(i);
            for (j, slot) in row.iter_mut().enumerate() {
                // eval_kernel validated dimensions above
                *slot = crate::kernel::eval_kernel(cfg_k, x, pooled.row(j)).unwrap_or(0.0);
            }
        });
        let n_comp = n - n_mix;
        let mut b_mix = vec![0.0; n];
        let mut b_comp = vec![0.0; n];
        for i in 0..n {
            let row = &gram[i * n..(i + 1) * n];
            b_mix[i] = row[..n_mix].iter().sum::<f64>() / n_mix as f64;
            b_comp[i] = row[n_mix..].iter().sum::<f64>() / n_comp as f64;
        }
        let s_mm = b_mix[..n_mix].iter().sum::<f64>() / n_mix as f64;
        let s_mc = b_comp[..n_mix].iter().sum::<f64>() / n_mix as f64;
        let s_cc = b_comp[n_mix..].iter().sum::<f64>() / n_comp as f64;
        Ok(HullProblem {
            n,
            n_mix,
            gram,
            b_mix,
            b_comp,
            s_mm,
            s_mc,
            s_cc,
        })
    }

    pub fn num_vertices(&self) -> usize {
        self.n
    }

    /// Uniform weights on the mixture vertices; their image is exactly `Φ(mix)`.
    fn initial_state(&self) -> FwState {
        let mut w = vec![0.0; self.n];
        let w0 = 1.0 / self.n_mix as f64;
        w[..self.n_mix].iter_mut().for_each(|v| *v = w0);
        FwState {
            w,
            gw: self.b_mix.clone(),
        }
    }

    /// Projects `λΦ(mix) + (1−λ)Φ(comp)` onto the hull, starting from the
    /// uniform weights on the mixture vertices.
    pub fn project(&self, lam: f64, max_iter: usize, tol: f64) -> HullProjection {
        let mut state = self.initial_state();
        let (distance, converged, iterations, objective_history) =
            self.solve(lam, max_iter, tol, &mut state);
        HullProjection {
            distance,
            converged,
            iterations,
            objective_history,
            weights: state.w,
        }
    }

    /// Frank–Wolfe with pairwise steps and exact line search on
    /// `f(w) = ‖Σ wᵢφ(zᵢ) − μ‖² = wᵀGw − 2wᵀb + ‖μ‖²`.
    ///
    /// Each step shifts mass from the active vertex with the largest gradient
    /// coordinate to the vertex with the smallest, so iterations cost O(n)
    /// given the cached Gram matrix. Stops when the duality gap falls below
    /// `tol · max(f, tol)`.
    fn solve(
        &self,
        lam: f64,
        max_iter: usize,
        tol: f64,
        state: &mut FwState,
    ) -> (f64, bool, usize, Vec<f64>) {
        let n = self.n;
        let b: Vec<f64> = self
            .b_mix
            .iter()
            .zip(&self.b_comp)
            .map(|(m, c)| lam * m + (1.0 - lam) * c)
            .collect();
        let c0 = lam * lam * self.s_mm
            + 2.0 * lam * (1.0 - lam) * self.s_mc
            + (1.0 - lam) * (1.0 - lam) * self.s_cc;
        let gram_row = |i: usize| &self.gram[i * n..(i + 1) * n];
        let FwState { w, gw } = state;

        // returns (f, wᵀ(Gw − b))
        let evaluate = |w: &[f64], gw: &[f64]| -> (f64, f64) {
            let q: f64 = w.iter().zip(gw.iter()).map(|(a, b)| a * b).sum();
            let lin: f64 = w.iter().zip(&b).map(|(a, b)| a * b).sum();
            (q - 2.0 * lin + c0, q - lin)
        };

        let (mut f, mut wg) = evaluate(w, gw);
        let mut history = vec![f.max(0.0)];
        let mut converged = false;
        let mut iterations = 0;

        for _ in 0..max_iter {
            let mut s = 0;
            let mut g_s = f64::INFINITY;
            let mut v = usize::MAX;
            let mut g_v = f64::NEG_INFINITY;
            for i in 0..n {
                let g = gw[i] - b[i];
                if g < g_s {
                    g_s = g;
                    s = i;
                }
                if w[i] > 0.0 && g > g_v {
                    g_v = g;
                    v = i;
                }
            }
            let gap = 2.0 * (wg - g_s);
            if gap <= tol * f.max(tol) {
                converged = true;
                break;
            }
            if v == s || v == usize::MAX {
                break;
            }
            iterations += 1;
            // direction e_s − e_v: slope 2(g_s − g_v), curvature G_ss − 2G_sv + G_vv
            let curvature = gram_row(s)[s] - 2.0 * gram_row(s)[v] + gram_row(v)[v];
            let max_step = w[v];
            let step = if curvature > 0.0 {
                ((g_v - g_s) / curvature).min(max_step)
            } else {
                max_step
            };
            if !(step > 0.0) {
                break;
            }
            w[s] += step;
            if step >= max_step {
                w[v] = 0.0;
            } else {
                w[v] -= step;
            }
            let (col_s, col_v) = (gram_row(s), gram_row(v));
            for i in 0..n {
                gw[i] += step * (col_s[i] - col_v[i]);
            }
            let (f_new, wg_new) = evaluate(w, gw);
            f = f_new;
            wg = wg_new;
            history.push(f.max(0.0));
        }
        (f.max(0.0).sqrt(), converged, iterations, history)
    }

    /// Distances over the λ grid, each solve warm-started from the previous
    /// grid point's weights.
    pub fn distance_curve(&self, cfg_km: &KmConfig) -> DistanceCurve {
        let mut state = self.initial_state();
        let mut distances = Vec::with_capacity(cfg_km.lambda_grid.len());
        let mut weights_converged = Vec::with_capacity(cfg_km.lambda_grid.len());
        for &lam in &cfg_km.lambda_grid {
            let (d, conv, _, _) = self.solve(lam, cfg_km.fw_max_iter, cfg_km.fw_tol, &mut state);
            distances.push(d);
            weights_converged.push(conv);
        }
        DistanceCurve {
            lambdas: cfg_km.lambda_grid.clone(),
            distances,
            weights_converged,
        }
    }
}

struct FwState {
    w: Vec<f64>,
    gw: Vec<f64>,
}

/// Distance from `λΦ(mix) + (1−λ)Φ(comp)` to the convex hull of the pooled
/// feature maps, with a convergence flag.
pub fn hull_distance(
    cfg_k: &KernelConfig,
    cfg_km: &KmConfig,
    mix: &Sample,
    comp: &Sample,
    lam: f64,
) -> Result<(f64, bool)> {
    if !(lam >= 1.0 && lam.is_finite()) {
        return Err(Error::invalid(format!(
            "lambda must be at least 1, got {lam}"
        )));
    }
    let problem = HullProblem::new(cfg_k, cfg_km, mix, comp)?;
    let p = problem.project(lam, cfg_km.fw_max_iter, cfg_km.fw_tol);
    Ok((p.distance, p.converged))
}

/// Picks the smallest grid λ whose forward slope exceeds the threshold.
pub fn select_lambda(curve: &DistanceCurve, slope_threshold: f64) -> (f64, bool) {
    let l = &curve.lambdas;
    let d = &curve.distances;
    for k in 0..l.len().saturating_sub(1) {
        let slope = (d[k + 1] - d[k]) / (l[k + 1] - l[k]);
        if slope > slope_threshold {
            return (l[k], false);
        }
    }
    (*l.last().unwrap_or(&1.0), true)
}

fn km2(
    cfg_k: &KernelConfig,
    cfg_km: &KmConfig,
    mix: &Sample,
    comp: &Sample,
) -> Result<Km2Estimate> {
    cfg_km.validate()?;
    let problem = HullProblem::new(cfg_k, cfg_km, mix, comp)?;
    let curve = problem.distance_curve(cfg_km);
    let (lambda_hat, low_confidence) = select_lambda(&curve, cfg_km.slope_threshold);
    let pi = (1.0 - 1.0 / lambda_hat).clamp(0.0, 1.0 - f64::EPSILON);
    Ok(Km2Estimate {
        pi,
        lambda_hat,
        low_confidence,
        curve,
    })
}

/// Source prior `π` from unlabeled and labeled-positive samples.
pub fn km2_prior(
    cfg_k: &KernelConfig,
    cfg_km: &KmConfig,
    unlabeled: &Sample,
    positives: &Sample,
) -> Result<Km2Estimate> {
    km2(cfg_k, cfg_km, unlabeled, positives)
}

/// KM2-LS: the same procedure applied to (target, positives), ignoring the
/// source unlabeled sample.
pub fn km2_ls_target_prior(
    cfg_k: &KernelConfig,
    cfg_km: &KmConfig,
    target: &Sample,
    positives: &Sample,
) -> Result<Km2Estimate> {
    km2(cfg_k, cfg_km, target, positives)
}
