//! Angle-based joint and individual variation explained (AJIVE).
//!
//! Given `k >= 2` views `X_i` (n × p_i) over the same units, estimate
//! `X_i = J_i + A_i + E_i` where the joint blocks share one score space, the
//! individual blocks have scores orthogonal to it, and `E_i` is noise:
//!
//! 1. truncate each view to its initial signal rank `r̃_i`;
//! 2. stack the score bases into `M`, keep the leading `r_J` left singular
//!    vectors `Ũ_J` (rank from the random direction bound), and decompose the
//!    projection `Ũ_J Ũ_Jᵀ X` of the column-concatenated views;
//! 3. project each view onto the orthogonal complement of `Ũ_J` and keep the
//!    residual components at or above the view's `ν_i` threshold.

use std::ops::RangeInclusive;

use ndarray::{concatenate, s, Array2, Axis};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::matrix::{check_same_units, FeatureMatrix};
use crate::rank::{
    individual_rank, joint_rank, nu_threshold, random_direction_bound, BoundMode, RankSelection,
    DEFAULT_BOUND_PERCENTILE, DEFAULT_BOUND_SAMPLES,
};
use crate::svd::{frob2, numerical_rank, thin_svd, SvdFactors};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum JointRankRule {
    /// Random direction bound.
    Auto {
        n_samples: usize,
        percentile: f64,
        mode: BoundMode,
    },
    Fixed(usize),
}

impl Default for JointRankRule {
    fn default() -> Self {
        JointRankRule::Auto {
            n_samples: DEFAULT_BOUND_SAMPLES,
            percentile: DEFAULT_BOUND_PERCENTILE,
            mode: BoundMode::MaxBound,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AjiveConfig {
    pub initial_ranks: Vec<usize>,
    pub joint_rank: JointRankRule,
    /// Overrides the `ν_i` rule when set.
    pub individual_ranks: Option<Vec<usize>>,
    pub seed: u64,
}

impl AjiveConfig {
    pub fn new(initial_ranks: Vec<usize>, seed: u64) -> Self {
        Self {
            initial_ranks,
            joint_rank: JointRankRule::default(),
            individual_ranks: None,
            seed,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IndividualBlock {
    /// n × r_i, orthogonal to the joint scores.
    pub scores: Array2<f64>,
    pub sigma: Vec<f64>,
    /// p_i × r_i.
    pub loadings: Array2<f64>,
}

impl IndividualBlock {
    pub fn rank(&self) -> usize {
        self.sigma.len()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AjiveResult {
    pub unit_ids: Vec<String>,
    pub feature_names: Vec<Vec<String>>,
    /// Stage-2 joint basis `Ũ_J` (leading left singular vectors of M).
    pub joint_basis: Array2<f64>,
    /// `Û_J`, n × r_J.
    pub joint_scores: Array2<f64>,
    pub joint_sigma: Vec<f64>,
    /// Rows of `V̂_J` split by view, each p_i × r_J.
    pub joint_loadings: Vec<Array2<f64>>,
    /// SVD of each view's own joint block `Ĵ_i = Ũ_J Ũ_Jᵀ X_i`.
    pub joint_by_view: Vec<SvdFactors>,
    pub individual: Vec<IndividualBlock>,
    pub ranks: RankSelection,
    /// Full spectrum of each input view.
    pub view_singular_values: Vec<Vec<f64>>,
}

impl AjiveResult {
    pub fn n_views(&self) -> usize {
        self.individual.len()
    }

    pub fn joint_rank(&self) -> usize {
        self.joint_sigma.len()
    }

    /// `Ĵ_i = Û_J Σ̂_J V̂_{J,i}ᵀ`.
    pub fn joint_block(&self, view: usize) -> Array2<f64> {
        let us = &self.joint_scores * &ndarray::Array1::from(self.joint_sigma.clone()).insert_axis(Axis(0));
        us.dot(&self.joint_loadings[view].t())
    }

    /// `Â_i = Û_i Σ̂_i V̂_iᵀ`.
    pub fn individual_block(&self, view: usize) -> Array2<f64> {
        let b = &self.individual[view];
        let us = &b.scores * &ndarray::Array1::from(b.sigma.clone()).insert_axis(Axis(0));
        us.dot(&b.loadings.t())
    }

    /// `Ê_i = X_i − Ĵ_i − Â_i`.
    pub fn noise_block(&self, view: usize, x: &FeatureMatrix) -> Array2<f64> {
        x.values() - &self.joint_block(view) - &self.individual_block(view)
    }
}

/// Runs the three-stage decomposition.
pub fn ajive_decompose(views: &[FeatureMatrix], config: &AjiveConfig) -> Result<AjiveResult> {
    let k = views.len();
    if k < 2 {
        return Err(Error::InvalidInput(format!("need at least 2 views, got {k}")));
    }
    if config.initial_ranks.len() != k {
        return Err(Error::LengthMismatch {
            expected: k,
            got: config.initial_ranks.len(),
        });
    }
    check_same_units(views)?;
    let n = views[0].nrows();
    for (v, &r) in views.iter().zip(&config.initial_ranks) {
        let max = n.min(v.ncols());
        if r == 0 || r > max {
            return Err(Error::RankTooLarge { requested: r, max });
        }
    }

    // Stage 1
    let full: Vec<SvdFactors> = views
        .par_iter()
        .map(|v| thin_svd(v.values().view()))
        .collect::<Result<_>>()?;
    for (i, (f, &r)) in full.iter().zip(&config.initial_ranks).enumerate() {
        let rank = f.numerical_rank();
        if rank < r {
            return Err(Error::DegenerateView {
                view: i,
                rank,
                requested: r,
            });
        }
    }
    let view_sv: Vec<Vec<f64>> = full.iter().map(|f| f.sigma.to_vec()).collect();

    // Stage 2
    let blocks: Vec<_> = full
        .iter()
        .zip(&config.initial_ranks)
        .map(|(f, &r)| f.u.slice(s![.., ..r]))
        .collect();
    let m = concatenate(Axis(1), &blocks).map_err(|e| Error::ShapeMismatch(e.to_string()))?;
    let m_svd = thin_svd(m.view())?;
    let m_sv = m_svd.sigma.to_vec();

    let (r_joint, bound) = match &config.joint_rank {
        JointRankRule::Fixed(r) => {
            if *r > m_sv.len() {
                return Err(Error::RankTooLarge {
                    requested: *r,
                    max: m_sv.len(),
                });
            }
            (*r, None)
        }
        JointRankRule::Auto {
            n_samples,
            percentile,
            mode,
        } => {
            let b = random_direction_bound(n, &config.initial_ranks, *n_samples, *percentile, config.seed)?;
            (joint_rank(&m_sv, &b, *mode), Some((b, *mode)))
        }
    };
    let basis = m_svd.u.slice(s![.., ..r_joint]).to_owned();

    // Ĵ = Ũ_J (Ũ_Jᵀ X); decompose the small r_J × Σp factor instead of Ĵ.
    let projected: Vec<Array2<f64>> = views.iter().map(|v| basis.t().dot(v.values())).collect();
    let proj_views: Vec<_> = projected.iter().map(|b| b.view()).collect();
    let stacked = concatenate(Axis(1), &proj_views).map_err(|e| Error::ShapeMismatch(e.to_string()))?;
    let (joint_scores, joint_sigma, joint_loadings) = if r_joint == 0 {
        (
            Array2::zeros((n, 0)),
            Vec::new(),
            views.iter().map(|v| Array2::zeros((v.ncols(), 0))).collect(),
        )
    } else {
        let f = thin_svd(stacked.view())?;
        let scores = basis.dot(&f.u);
        let mut loadings = Vec::with_capacity(k);
        let mut offset = 0;
        for v in views {
            loadings.push(f.v.slice(s![offset..offset + v.ncols(), ..]).to_owned());
            offset += v.ncols();
        }
        (scores, f.sigma.to_vec(), loadings)
    };

    let joint_by_view: Vec<SvdFactors> = projected
        .iter()
        .map(|b| {
            let f = thin_svd(b.view())?;
            Ok(SvdFactors {
                u: basis.dot(&f.u),
                sigma: f.sigma,
                v: f.v,
            })
        })
        .collect::<Result<_>>()?;

    // Stage 3
    let nu: Vec<f64> = view_sv
        .iter()
        .zip(&config.initial_ranks)
        .map(|(sv, &r)| nu_threshold(sv, r))
        .collect();
    if let Some(fixed) = &config.individual_ranks {
        if fixed.len() != k {
            return Err(Error::LengthMismatch {
                expected: k,
                got: fixed.len(),
            });
        }
    }
    let stage3: Vec<(IndividualBlock, usize)> = views
        .par_iter()
        .enumerate()
        .map(|(i, v)| {
            let residual = v.values() - &basis.dot(&projected[i]);
            let f = thin_svd(residual.view())?;
            let sv = f.sigma.to_vec();
            let wanted = match &config.individual_ranks {
                Some(fixed) => fixed[i],
                None => individual_rank(&sv, nu[i]).min(config.initial_ranks[i]),
            };
            let available = numerical_rank(&sv);
            let r = if wanted > available {
                log::warn!(
                    "view {i}: individual rank {wanted} exceeds residual numerical rank {available}; clipping"
                );
                available
            } else {
                wanted
            };
            let t = f.truncate(r);
            Ok((
                IndividualBlock {
                    scores: t.u,
                    sigma: t.sigma.to_vec(),
                    loadings: t.v,
                },
                r,
            ))
        })
        .collect::<Result<_>>()?;
    let (individual, individual_ranks): (Vec<_>, Vec<_>) = stage3.into_iter().unzip();

    let (bound_mode, bound_threshold, per_index_thresholds, bound_samples) = match bound {
        Some((b, mode)) => (mode, Some(b.threshold), b.per_index_thresholds, b.samples),
        None => (BoundMode::MaxBound, None, Vec::new(), Vec::new()),
    };
    let ranks = RankSelection {
        initial_ranks: config.initial_ranks.clone(),
        joint_rank: r_joint,
        individual_ranks,
        nu_thresholds: nu,
        m_singular_values: m_sv,
        bound_mode,
        bound_threshold,
        per_index_thresholds,
        bound_samples,
        rng_seed: config.seed,
    };

    Ok(AjiveResult {
        unit_ids: views[0].unit_ids().to_vec(),
        feature_names: views.iter().map(|v| v.feature_names().to_vec()).collect(),
        joint_basis: basis,
        joint_scores,
        joint_sigma,
        joint_loadings,
        joint_by_view,
        individual,
        ranks,
        view_singular_values: view_sv,
    })
}

/// The three-view entry point; identical algorithm with `k = 3`.
pub fn three_view_decompose(views: &[FeatureMatrix], config: &AjiveConfig) -> Result<AjiveResult> {
    if views.len() != 3 {
        return Err(Error::InvalidInput(format!(
            "three-view decomposition needs 3 views, got {}",
            views.len()
        )));
    }
    ajive_decompose(views, config)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ViewVariance {
    pub joint: f64,
    pub individual: f64,
    pub residual: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VarianceExplained {
    pub per_view: Vec<ViewVariance>,
}

/// Fractions of each view's squared Frobenius norm in the joint, individual
/// and residual blocks.
pub fn variance_explained(r: &AjiveResult, views: &[FeatureMatrix]) -> Result<VarianceExplained> {
    if views.len() != r.n_views() {
        return Err(Error::LengthMismatch {
            expected: r.n_views(),
            got: views.len(),
        });
    }
    let per_view = views
        .iter()
        .enumerate()
        .map(|(i, v)| {
            let total = frob2(v.values().view());
            if total == 0.0 {
                return ViewVariance {
                    joint: 0.0,
                    individual: 0.0,
                    residual: 1.0,
                };
            }
            let joint = (frob2(r.joint_basis.t().dot(v.values()).view()) / total).clamp(0.0, 1.0);
            let individual = (r.individual[i].sigma.iter().map(|s| s * s).sum::<f64>() / total)
                .clamp(0.0, 1.0 - joint);
            ViewVariance {
                joint,
                individual,
                residual: (1.0 - joint - individual).max(0.0),
            }
        })
        .collect();
    Ok(VarianceExplained { per_view })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    /// Common initial rank applied to every view.
    pub initial_rank: usize,
    pub joint_rank: usize,
    pub individual_ranks: Vec<usize>,
    pub variance: VarianceExplained,
}

/// Re-runs the decomposition with the same initial rank for every view over
/// `ranks`. The bound seed is the same for every row.
pub fn rank_sweep(
    views: &[FeatureMatrix],
    ranks: RangeInclusive<usize>,
    joint_rule: &JointRankRule,
    seed: u64,
) -> Result<Vec<SweepRow>> {
    let n = views.first().map(|v| v.nrows()).unwrap_or(0);
    let max_rank = views.iter().map(|v| v.ncols().min(n)).min().unwrap_or(0);
    if *ranks.start() == 0 || *ranks.end() > max_rank {
        return Err(Error::RankTooLarge {
            requested: *ranks.end(),
            max: max_rank,
        });
    }
    ranks
        .map(|r| {
            let cfg = AjiveConfig {
                initial_ranks: vec![r; views.len()],
                joint_rank: joint_rule.clone(),
                individual_ranks: None,
                seed,
            };
            let res = ajive_decompose(views, &cfg)?;
            let variance = variance_explained(&res, views)?;
            Ok(SweepRow {
                initial_rank: r,
                joint_rank: res.ranks.joint_rank,
                individual_ranks: res.ranks.individual_ranks.clone(),
                variance,
            })
        })
        .collect()
}
