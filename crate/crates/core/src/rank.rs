//! Rank estimation for the joint/individual decomposition.
//!
//! * initial signal ranks from the largest relative gap of a scree spectrum,
//! * the joint rank from a Monte Carlo random direction bound on the
//!   singular values of the stacked score bases,
//! * individual ranks from the midpoint threshold between the last signal and
//!   first noise singular value of each view.

use ndarray::{s, Array2};
use rand::Rng;
use rand_distr::Uniform;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::matrix::{center_columns, quantile_sorted, FeatureMatrix};
use crate::rng::substream;
use crate::svd::{orthonormalize, singular_values};

pub const DEFAULT_BOUND_SAMPLES: usize = 1000;
pub const DEFAULT_BOUND_PERCENTILE: f64 = 0.95;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScreeData {
    pub singular_values: Vec<f64>,
    /// `gaps[k] = sv[k] - sv[k + 1]`.
    pub gaps: Vec<f64>,
}

impl ScreeData {
    pub fn from_singular_values(singular_values: Vec<f64>) -> Self {
        let gaps = singular_values.windows(2).map(|w| w[0] - w[1]).collect();
        Self {
            singular_values,
            gaps,
        }
    }
}

/// Full singular spectrum of the column-centered matrix.
pub fn scree(m: &FeatureMatrix) -> Result<ScreeData> {
    let c = center_columns(m);
    Ok(ScreeData::from_singular_values(singular_values(
        c.values().view(),
    )?))
}

/// `argmax_{1 <= k <= max_rank} (sv[k-1] - sv[k]) / sv[k-1]`, smallest k on
/// ties.
pub fn suggest_initial_rank(s: &ScreeData, max_rank: usize) -> usize {
    let sv = &s.singular_values;
    let upper = max_rank.min(sv.len().saturating_sub(1)).max(1);
    let mut best = 1;
    let mut best_gap = f64::NEG_INFINITY;
    for k in 1..=upper {
        let gap = match (sv.get(k - 1), sv.get(k)) {
            (Some(&a), Some(&b)) if a > 0.0 => (a - b) / a,
            _ => 0.0,
        };
        if gap > best_gap {
            best_gap = gap;
            best = k;
        }
    }
    best
}

/// Monte Carlo null distribution for singular values of the stacked score
/// matrix `M = (Ũ_1 … Ũ_k)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DirectionBound {
    pub n: usize,
    pub initial_ranks: Vec<usize>,
    pub percentile: f64,
    pub seed: u64,
    /// Largest singular value of each simulated matrix.
    pub samples: Vec<f64>,
    /// Full nonincreasing spectrum of each simulated matrix.
    pub spectra: Vec<Vec<f64>>,
    /// Percentile of `samples`.
    pub threshold: f64,
    /// Percentile of the i-th largest singular value across samples.
    pub per_index_thresholds: Vec<f64>,
}

/// Simulates `n_samples` stacked score matrices under the no-joint-signal
/// null and takes the `percentile` of their largest singular values.
///
/// Each block of a simulated matrix has `n × r̃_i` entries drawn i.i.d.
/// Uniform(0, 1); the block is column-centered and orthonormalized so that
/// it is distributed like an estimated score basis with no shared
/// directions. Sample `s` uses substream `s` of the `"ranks"` stream, so the
/// draw does not depend on thread scheduling.
pub fn random_direction_bound(
    n: usize,
    initial_ranks: &[usize],
    n_samples: usize,
    percentile: f64,
    seed: u64,
) -> Result<DirectionBound> {
    if n_samples == 0 {
        return Err(Error::InvalidInput("n_samples must be at least 1".into()));
    }
    if !(0.0..=1.0).contains(&percentile) {
        return Err(Error::InvalidInput(format!("percentile {percentile} outside [0, 1]")));
    }
    let total: usize = initial_ranks.iter().sum();
    if initial_ranks.is_empty() || initial_ranks.contains(&0) {
        return Err(Error::InvalidInput("initial ranks must be positive".into()));
    }
    if total > n || initial_ranks.iter().any(|&r| r >= n) {
        return Err(Error::RankTooLarge {
            requested: total,
            max: n,
        });
    }

    let spectra: Vec<Vec<f64>> = (0..n_samples)
        .into_par_iter()
        .map(|s| simulate_stacked_spectrum(n, initial_ranks, seed, s as u64))
        .collect::<Result<_>>()?;

    let samples: Vec<f64> = spectra.iter().map(|sp| sp[0]).collect();
    let mut sorted = samples.clone();
    sorted.sort_by(f64::total_cmp);
    let threshold = quantile_sorted(&sorted, percentile);

    let per_index_thresholds = (0..total)
        .map(|i| {
            let mut col: Vec<f64> = spectra.iter().map(|sp| sp[i]).collect();
            col.sort_by(f64::total_cmp);
            quantile_sorted(&col, percentile)
        })
        .collect();

    Ok(DirectionBound {
        n,
        initial_ranks: initial_ranks.to_vec(),
        percentile,
        seed,
        samples,
        spectra,
        threshold,
        per_index_thresholds,
    })
}

fn simulate_stacked_spectrum(n: usize, ranks: &[usize], seed: u64, index: u64) -> Result<Vec<f64>> {
    let mut rng = substream(seed, "ranks", index);
    let unif = Uniform::new(0.0f64, 1.0).expect("valid range");
    let total: usize = ranks.iter().sum();
    let mut stacked = Array2::<f64>::zeros((n, total));
    let mut offset = 0;
    for &r in ranks {
        let mut block = Array2::from_shape_fn((n, r), |_| rng.sample(unif));
        let means = block.mean_axis(ndarray::Axis(0)).expect("n > 0");
        block -= &means.insert_axis(ndarray::Axis(0));
        let q = orthonormalize(block.view());
        stacked.slice_mut(s![.., offset..offset + r]).assign(&q);
        offset += r;
    }
    singular_values(stacked.view())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum BoundMode {
    /// Every singular value of M is compared with the percentile of the
    /// simulated largest singular values.
    #[default]
    MaxBound,
    /// The i-th singular value of M is compared with the percentile of the
    /// simulated i-th singular values; the longest passing prefix is kept.
    PerIndex,
}

/// Number of singular values strictly above `threshold`.
pub fn joint_rank_above(sv: &[f64], threshold: f64) -> usize {
    sv.iter().take_while(|&&s| s > threshold).count()
}

pub fn joint_rank(sv: &[f64], bound: &DirectionBound, mode: BoundMode) -> usize {
    match mode {
        BoundMode::MaxBound => joint_rank_above(sv, bound.threshold),
        BoundMode::PerIndex => sv
            .iter()
            .zip(bound.per_index_thresholds.iter())
            .take_while(|(s, t)| s > t)
            .count(),
    }
}

/// `(λ_{r̃} + λ_{r̃+1}) / 2` from a view's nonincreasing spectrum (1-based
/// indices; a missing `λ_{r̃+1}` counts as zero).
pub fn nu_threshold(view_sv: &[f64], initial_rank: usize) -> f64 {
    assert!(initial_rank >= 1, "initial rank must be positive");
    let a = view_sv.get(initial_rank - 1).copied().unwrap_or(0.0);
    let b = view_sv.get(initial_rank).copied().unwrap_or(0.0);
    0.5 * (a + b)
}

/// Number of residual singular values at or above `nu`.
pub fn individual_rank(residual_sv: &[f64], nu: f64) -> usize {
    residual_sv.iter().filter(|&&s| s >= nu).count()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RankSelection {
    pub initial_ranks: Vec<usize>,
    pub joint_rank: usize,
    pub individual_ranks: Vec<usize>,
    pub nu_thresholds: Vec<f64>,
    /// Singular values of the stacked score matrix.
    pub m_singular_values: Vec<f64>,
    pub bound_mode: BoundMode,
    /// `None` when the joint rank was fixed by the caller.
    pub bound_threshold: Option<f64>,
    pub per_index_thresholds: Vec<f64>,
    pub bound_samples: Vec<f64>,
    pub rng_seed: u64,
}
