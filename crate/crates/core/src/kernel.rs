//! Kernel evaluation and mean-embedding statistics.
//!
//! Every quantity the estimator and the bounds need is an inner product of
//! empirical mean maps, `<Φ(A), Φ(B)> = (|A||B|)⁻¹ Σᵢ Σⱼ K(aᵢ, bⱼ)`. These are
//! computed by streaming over fixed-size row blocks so the Gram matrix is never
//! held in memory.

use rand::seq::index;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Rows of `A` handled per reduction block.
pub const BLOCK_ROWS: usize = 64;

/// Relative tolerance for squared norms that come out slightly negative.
pub const NUMERIC_EPS: f64 = 1e-12;

/// Which distribution a sample was drawn from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SampleTag {
    SourceUnlabeled,
    SourcePositive,
    Target,
}

/// A finite set of feature vectors, stored row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct Sample {
    data: Vec<f64>,
    n: usize,
    p: usize,
    tag: SampleTag,
}

impl Sample {
    /// Builds a sample from a row-major buffer of `n * p` finite values.
    pub fn from_flat(data: Vec<f64>, p: usize, tag: SampleTag) -> Result<Self> {
        if p == 0 {
            return Err(Error::invalid("feature dimension must be at least 1"));
        }
        if !data.len().is_multiple_of(p) {
            return Err(Error::invalid(format!(
                "buffer of length {} is not a multiple of dimension {p}",
                data.len()
            )));
        }
        if let Some(pos) = data.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFinite {
                row: pos / p,
                col: pos % p,
            });
        }
        let n = data.len() / p;
        Ok(Sample { data, n, p, tag })
    }

    pub fn from_rows(rows: &[Vec<f64>], tag: SampleTag) -> Result<Self> {
        let p = rows.first().map(Vec::len).ok_or(Error::EmptySample)?;
        let mut data = Vec::with_capacity(rows.len() * p);
        for row in rows {
            if row.len() != p {
                return Err(Error::DimensionMismatch {
                    expected: p,
                    found: row.len(),
                });
            }
            data.extend_from_slice(row);
        }
        Sample::from_flat(data, p, tag)
    }

    /// An empty sample of dimension `p`. Kernel operations reject it.
    pub fn empty(p: usize, tag: SampleTag) -> Self {
        Sample {
            data: Vec::new(),
            n: 0,
            p,
            tag,
        }
    }

    pub fn len(&self) -> usize {
        self.n
    }

    pub fn is_empty(&self) -> bool {
        self.n == 0
    }

    pub fn dim(&self) -> usize {
        self.p
    }

    pub fn tag(&self) -> SampleTag {
        self.tag
    }

    pub fn with_tag(mut self, tag: SampleTag) -> Self {
        self.tag = tag;
        self
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.p..(i + 1) * self.p]
    }

    pub fn rows(&self) -> impl ExactSizeIterator<Item = &[f64]> + '_ {
        self.data.chunks_exact(self.p)
    }

    pub fn as_flat(&self) -> &[f64] {
        &self.data
    }

    /// New sample holding the given rows, in the given order.
    pub fn select(&self, indices: &[usize]) -> Sample {
        let mut data = Vec::with_capacity(indices.len() * self.p);
        for &i in indices {
            data.extend_from_slice(self.row(i));
        }
        Sample {
            data,
            n: indices.len(),
            p: self.p,
            tag: self.tag,
        }
    }

    /// Row-wise concatenation; the result carries `self`'s tag.
    pub fn concat(&self, other: &Sample) -> Result<Sample> {
        check_dims(self, other)?;
        let mut data = self.data.clone();
        data.extend_from_slice(&other.data);
        Ok(Sample {
            data,
            n: self.n + other.n,
            p: self.p,
            tag: self.tag,
        })
    }

    pub(crate) fn map_values(&self, mut f: impl FnMut(usize, f64) -> f64) -> Sample {
        let p = self.p;
        let data = self
            .data
            .iter()
            .enumerate()
            .map(|(k, &v)| f(k % p, v))
            .collect();
        Sample {
            data,
            n: self.n,
            p,
            tag: self.tag,
        }
    }
}

fn check_dims(a: &Sample, b: &Sample) -> Result<()> {
    if a.p != b.p {
        return Err(Error::DimensionMismatch {
            expected: a.p,
            found: b.p,
        });
    }
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum KernelKind {
    /// `K(x, y) = exp(-τ‖x − y‖²)`
    Gaussian,
}

/// Kernel choice and scale. Every kind must report `sup_x K(x, x)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KernelConfig {
    pub kind: KernelKind,
    pub tau: f64,
}

impl KernelConfig {
    pub fn gaussian(tau: f64) -> Result<Self> {
        if !(tau.is_finite() && tau > 0.0) {
            return Err(Error::invalid(format!("tau must be positive, got {tau}")));
        }
        Ok(KernelConfig {
            kind: KernelKind::Gaussian,
            tau,
        })
    }

    /// Gaussian kernel with the default scale `τ = 1/p`.
    pub fn gaussian_default(p: usize) -> Result<Self> {
        if p == 0 {
            return Err(Error::invalid("feature dimension must be at least 1"));
        }
        Self::gaussian(1.0 / p as f64)
    }

    /// `M = sup_x K(x, x)`.
    pub fn sup_bound(&self) -> f64 {
        match self.kind {
            KernelKind::Gaussian => 1.0,
        }
    }

    #[inline]
    fn eval_unchecked(&self, x: &[f64], y: &[f64]) -> f64 {
        match self.kind {
            KernelKind::Gaussian => {
                let d2: f64 = x
                    .iter()
                    .zip(y)
                    .map(|(a, b)| {
                        let d = a - b;
                        d * d
                    })
                    .sum();
                (-self.tau * d2).exp()
            }
        }
    }
}

/// Evaluates the kernel on a pair of feature vectors.
pub fn eval_kernel(cfg: &KernelConfig, x: &[f64], y: &[f64]) -> Result<f64> {
    if x.len() != y.len() {
        return Err(Error::DimensionMismatch {
            expected: x.len(),
            found: y.len(),
        });
    }
    if x.iter().chain(y).any(|v| !v.is_finite()) {
        return Err(Error::invalid("kernel arguments must be finite"));
    }
    Ok(cfg.eval_unchecked(x, y))
}

/// Orders the pair so that `(A, B)` and `(B, A)` reduce in the same order.
fn canonical<'a>(a: &'a Sample, b: &'a Sample) -> (&'a Sample, &'a Sample) {
    let key = |s: &Sample| s.n;
    let swap = match key(a).cmp(&key(b)) {
        std::cmp::Ordering::Greater => true,
        std::cmp::Ordering::Less => false,
        std::cmp::Ordering::Equal => a
            .data
            .iter()
            .zip(&b.data)
            .map(|(x, y)| x.total_cmp(y))
            .find(|o| o.is_ne())
            .is_some_and(|o| o.is_gt()),
    };
    if swap {
        (b, a)
    } else {
        (a, b)
    }
}

/// Sum of `K(aᵢ, bⱼ)` over all pairs, reduced block by block in a fixed order.
///
/// Each block of `BLOCK_ROWS` rows of `a` yields one partial sum; partials
/// are then added sequentially in block order, so the result does not depend
/// on how many threads evaluated the blocks.
fn blocked_kernel_sum(cfg: &KernelConfig, a: &Sample, b: &Sample) -> f64 {
    let block_len = BLOCK_ROWS * a.p;
    let partials: Vec<f64> = a
        .data
        .par_chunks(block_len)
        .map(|block| {
            block
                .chunks_exact(a.p)
                .map(|x| b.rows().map(|y| cfg.eval_unchecked(x, y)).sum::<f64>())
                .sum::<f64>()
        })
        .collect();
    partials.into_iter().sum()
}

/// `S(A, B) = <Φ(Â), Φ(B̂)>`, the mean of the kernel over all cross pairs.
pub fn mean_cross_kernel(cfg: &KernelConfig, a: &Sample, b: &Sample) -> Result<f64> {
    check_dims(a, b)?;
    if a.is_empty() || b.is_empty() {
        return Err(Error::EmptySample);
    }
    let (a, b) = canonical(a, b);
    let total = blocked_kernel_sum(cfg, a, b);
    Ok(total / (a.n as f64 * b.n as f64))
}

/// The six pairwise mean-kernel values among unlabeled (U), positive (P) and
/// target (T) samples.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EmbeddingStats {
    pub s_uu: f64,
    pub s_pp: f64,
    pub s_tt: f64,
    pub s_up: f64,
    pub s_ut: f64,
    pub s_pt: f64,
    pub n: usize,
    pub m: usize,
    pub n_prime: usize,
}

impl EmbeddingStats {
    /// `N = min(n, m, n′)`.
    pub fn min_size(&self) -> usize {
        self.n.min(self.m).min(self.n_prime)
    }

    /// Multiplies every kernel value by `c`, as if the kernel were `c·K`.
    pub fn scaled(&self, c: f64) -> Self {
        EmbeddingStats {
            s_uu: c * self.s_uu,
            s_pp: c * self.s_pp,
            s_tt: c * self.s_tt,
            s_up: c * self.s_up,
            s_ut: c * self.s_ut,
            s_pt: c * self.s_pt,
            ..*self
        }
    }
}

/// Computes all six mean cross-kernel values in one call.
pub fn embedding_stats(
    cfg: &KernelConfig,
    u: &Sample,
    pos: &Sample,
    tgt: &Sample,
) -> Result<EmbeddingStats> {
    check_dims(u, pos)?;
    check_dims(u, tgt)?;
    Ok(EmbeddingStats {
        s_uu: mean_cross_kernel(cfg, u, u)?,
        s_pp: mean_cross_kernel(cfg, pos, pos)?,
        s_tt: mean_cross_kernel(cfg, tgt, tgt)?,
        s_up: mean_cross_kernel(cfg, u, pos)?,
        s_ut: mean_cross_kernel(cfg, u, tgt)?,
        s_pt: mean_cross_kernel(cfg, pos, tgt)?,
        n: u.len(),
        m: pos.len(),
        n_prime: tgt.len(),
    })
}

/// `‖Φ(P̂) − Φ(P̂⁺)‖²`, clamped at zero when rounding pushes it just below.
pub fn squared_norm_diff(stats: &EmbeddingStats) -> Result<f64> {
    let value = stats.s_uu - 2.0 * stats.s_up + stats.s_pp;
    let tol = NUMERIC_EPS * (stats.s_uu.abs() + stats.s_pp.abs()).max(f64::MIN_POSITIVE);
    if value < -tol {
        return Err(Error::NumericalInconsistency { value, tol: -tol });
    }
    Ok(value.max(0.0))
}

/// Median-heuristic scale: `τ = 1 / median ‖xᵢ − xⱼ‖²` over at most
/// `max_points` pooled rows (uniformly subsampled with `seed`).
pub fn median_heuristic_tau(samples: &[&Sample], max_points: usize, seed: u64) -> Result<f64> {
    let first = samples.first().ok_or(Error::EmptySample)?;
    for s in samples {
        check_dims(first, s)?;
    }
    let pooled: Vec<&[f64]> = samples.iter().flat_map(|s| s.rows()).collect();
    if pooled.len() < 2 {
        return Err(Error::invalid("median heuristic needs at least two points"));
    }
    let chosen: Vec<&[f64]> = if pooled.len() > max_points.max(2) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut idx = index::sample(&mut rng, pooled.len(), max_points.max(2)).into_vec();
        idx.sort_unstable();
        idx.into_iter().map(|i| pooled[i]).collect()
    } else {
        pooled
    };
    let mut d2 = Vec::with_capacity(chosen.len() * (chosen.len() - 1) / 2);
    for i in 0..chosen.len() {
        for j in (i + 1)..chosen.len() {
            d2.push(
                chosen[i]
                    .iter()
                    .zip(chosen[j])
                    .map(|(a, b)| (a - b) * (a - b))
                    .sum::<f64>(),
            );
        }
    }
    d2.sort_unstable_by(f64::total_cmp);
    let k = d2.len();
    let median = if k % 2 == 1 {
        d2[k / 2]
    } else {
        0.5 * (d2[k / 2 - 1] + d2[k / 2])
    };
    if median <= 0.0 {
        return Err(Error::invalid(
            "median pairwise squared distance is zero; cannot set bandwidth",
        ));
    }
    Ok(1.0 / median)
}
