//! Cooperative multiview lasso regression.
//!
//! Minimizes, over per-view coefficient vectors `β_m`,
//!
//! ```text
//! ½‖y − Σ_m Z_m β_m‖² + Σ_m λ_m ‖β_m‖₁ + (ρ/2) Σ_{m<m'} ‖Z_m β_m − Z_{m'} β_{m'}‖²
//! ```
//!
//! With `ρ = 0` and equal `λ_m` this is the lasso on the concatenated
//! design. The smooth part is the quadratic `½ βᵀHβ − bᵀβ + ½ yᵀy` with
//! `b = Zᵀy`, `H_mm = (1 + ρ(M−1)) Z_mᵀZ_m` and `H_mm' = (1 − ρ) Z_mᵀZ_m'`,
//! which cyclic coordinate descent with soft-thresholding minimizes using a
//! precomputed Gram matrix.

mod cv;
mod features;

pub use cv::{assign_folds, cross_validate, lambda_path, standardize_views, CvGrid, CvPoint, CvReport};
pub use features::{allocate, feature_sets_from_decompositions, FeatureSource};

use ndarray::{concatenate, Array1, Array2, ArrayView1, ArrayView2, Axis};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// How `fit` checks that design columns are standardized.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum ColumnScale {
    /// `‖z‖² = n − 1` (mean 0, sample variance 1).
    #[default]
    SampleVariance,
    /// `‖z‖ = 1`.
    UnitNorm,
    Unchecked,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FitOptions {
    /// Stop when the largest coefficient change in a sweep is below this.
    pub tol: f64,
    pub max_sweeps: usize,
    pub column_scale: ColumnScale,
}

impl Default for FitOptions {
    fn default() -> Self {
        Self {
            tol: 1e-8,
            max_sweeps: 10_000,
            column_scale: ColumnScale::SampleVariance,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CoopModel {
    pub betas: Vec<Array1<f64>>,
    pub intercept: f64,
    pub lambdas: Vec<f64>,
    pub rho: f64,
    /// Objective at `betas` for the centered response.
    pub objective: f64,
    /// Objective after each sweep.
    pub objective_path: Vec<f64>,
    pub n_iterations: usize,
    pub converged: bool,
}

impl CoopModel {
    pub fn n_nonzero(&self) -> usize {
        self.betas.iter().flat_map(|b| b.iter()).filter(|&&x| x != 0.0).count()
    }
}

fn check_shapes(views: &[ArrayView2<f64>], n: usize) -> Result<()> {
    if views.is_empty() {
        return Err(Error::ShapeMismatch("no views".into()));
    }
    for (m, z) in views.iter().enumerate() {
        if z.nrows() != n {
            return Err(Error::ShapeMismatch(format!(
                "view {m} has {} rows, response has {n}",
                z.nrows()
            )));
        }
    }
    Ok(())
}

fn check_params(n_views: usize, lambdas: &[f64], rho: f64) -> Result<()> {
    if lambdas.len() != n_views {
        return Err(Error::ShapeMismatch(format!(
            "{} penalties for {n_views} views",
            lambdas.len()
        )));
    }
    if lambdas.iter().any(|&l| !(l >= 0.0)) || !(rho >= 0.0) {
        return Err(Error::InvalidInput("penalties must be nonnegative".into()));
    }
    Ok(())
}

fn view_predictions(views: &[ArrayView2<f64>], betas: &[Array1<f64>]) -> Result<Vec<Array1<f64>>> {
    if betas.len() != views.len() {
        return Err(Error::ShapeMismatch(format!(
            "{} coefficient blocks for {} views",
            betas.len(),
            views.len()
        )));
    }
    views
        .iter()
        .zip(betas)
        .enumerate()
        .map(|(m, (z, b))| {
            if z.ncols() != b.len() {
                return Err(Error::ShapeMismatch(format!(
                    "view {m} has {} columns, coefficients {}",
                    z.ncols(),
                    b.len()
                )));
            }
            Ok(z.dot(b))
        })
        .collect()
}

/// Evaluates the objective term by term from the data.
pub fn objective(
    views: &[ArrayView2<f64>],
    y: ArrayView1<f64>,
    betas: &[Array1<f64>],
    lambdas: &[f64],
    rho: f64,
) -> Result<f64> {
    check_shapes(views, y.len())?;
    check_params(views.len(), lambdas, rho)?;
    let l1: f64 = betas
        .iter()
        .zip(lambdas)
        .map(|(b, l)| l * b.iter().map(|x| x.abs()).sum::<f64>())
        .sum();
    Ok(smooth_objective(views, y, betas, rho)? + l1)
}

/// The differentiable part of the objective.
pub fn smooth_objective(
    views: &[ArrayView2<f64>],
    y: ArrayView1<f64>,
    betas: &[Array1<f64>],
    rho: f64,
) -> Result<f64> {
    check_shapes(views, y.len())?;
    let f = view_predictions(views, betas)?;
    let mut resid = y.to_owned();
    for fm in &f {
        resid -= fm;
    }
    let mut agree = 0.0;
    for a in 0..f.len() {
        for b in (a + 1)..f.len() {
            let d = &f[a] - &f[b];
            agree += d.dot(&d);
        }
    }
    Ok(0.5 * resid.dot(&resid) + 0.5 * rho * agree)
}

/// Gradient of [`smooth_objective`] per view, computed from the data.
pub fn smooth_gradient(
    views: &[ArrayView2<f64>],
    y: ArrayView1<f64>,
    betas: &[Array1<f64>],
    rho: f64,
) -> Result<Vec<Array1<f64>>> {
    check_shapes(views, y.len())?;
    let f = view_predictions(views, betas)?;
    let mut resid = y.to_owned();
    for fm in &f {
        resid -= fm;
    }
    Ok(views
        .iter()
        .enumerate()
        .map(|(m, z)| {
            let mut g = -z.t().dot(&resid);
            for (mp, fmp) in f.iter().enumerate() {
                if mp != m {
                    g += &(z.t().dot(&(&f[m] - fmp)) * rho);
                }
            }
            g
        })
        .collect())
}

/// Largest KKT violation relative to `max(1, ‖Zᵀy‖_∞)` for a model fitted on
/// `(views, y)`.
pub fn kkt_violation(views: &[ArrayView2<f64>], y: ArrayView1<f64>, model: &CoopModel) -> Result<f64> {
    let yc = &y - model.intercept;
    let grad = smooth_gradient(views, yc.view(), &model.betas, model.rho)?;
    let mut scale: f64 = 1.0;
    for z in views {
        for v in z.t().dot(&yc).iter() {
            scale = scale.max(v.abs());
        }
    }
    let mut worst: f64 = 0.0;
    for ((g, b), &lam) in grad.iter().zip(&model.betas).zip(&model.lambdas) {
        for (gj, bj) in g.iter().zip(b.iter()) {
            let v = if *bj != 0.0 {
                (gj + lam * bj.signum()).abs()
            } else {
                (gj.abs() - lam).max(0.0)
            };
            worst = worst.max(v);
        }
    }
    Ok(worst / scale)
}

pub fn soft_threshold(x: f64, t: f64) -> f64 {
    if x > t {
        x - t
    } else if x < -t {
        x + t
    } else {
        0.0
    }
}

/// Gram form of a regression problem: everything coordinate descent needs,
/// independent of `(λ, ρ)`.
#[derive(Debug, Clone)]
pub struct CoopProblem {
    gram: Array2<f64>,
    zty: Array1<f64>,
    yty: f64,
    /// View index of every column.
    owner: Vec<usize>,
    sizes: Vec<usize>,
    intercept: f64,
}

impl CoopProblem {
    /// Centers `y` (the intercept is its mean) and forms `ZᵀZ`, `Zᵀy`.
    pub fn new(views: &[ArrayView2<f64>], y: ArrayView1<f64>, scale: ColumnScale) -> Result<Self> {
        let n = y.len();
        check_shapes(views, n)?;
        if n == 0 {
            return Err(Error::InvalidInput("empty response".into()));
        }
        if let Some((i, _)) = y.iter().enumerate().find(|(_, v)| !v.is_finite()) {
            return Err(Error::NonFinite { row: i, col: 0 });
        }
        for (m, z) in views.iter().enumerate() {
            check_standardized(m, z, scale)?;
        }
        let intercept = y.sum() / n as f64;
        let yc = &y - intercept;
        let z = concatenate(Axis(1), views).map_err(|e| Error::ShapeMismatch(e.to_string()))?;
        let owner = views
            .iter()
            .enumerate()
            .flat_map(|(m, z)| std::iter::repeat_n(m, z.ncols()))
            .collect();
        Ok(Self {
            gram: z.t().dot(&z),
            zty: z.t().dot(&yc),
            yty: yc.dot(&yc),
            owner,
            sizes: views.iter().map(|z| z.ncols()).collect(),
            intercept,
        })
    }

    pub fn n_views(&self) -> usize {
        self.sizes.len()
    }

    /// `max_m ‖Z_mᵀ y‖_∞`: the smallest penalty that zeroes every coefficient.
    pub fn lambda_max(&self) -> f64 {
        self.zty.iter().fold(0.0, |a, v| a.max(v.abs()))
    }

    fn h_factor(&self, rho: f64, a: usize, b: usize) -> f64 {
        if a == b {
            1.0 + rho * (self.n_views() as f64 - 1.0)
        } else {
            1.0 - rho
        }
    }

    fn split(&self, flat: &Array1<f64>) -> Vec<Array1<f64>> {
        let mut out = Vec::with_capacity(self.sizes.len());
        let mut off = 0;
        for &s in &self.sizes {
            out.push(flat.slice(ndarray::s![off..off + s]).to_owned());
            off += s;
        }
        out
    }

    fn quad_objective(&self, beta: &Array1<f64>, hb: &Array1<f64>, lambdas: &[f64]) -> f64 {
        let smooth = 0.5 * beta.dot(hb) - self.zty.dot(beta) + 0.5 * self.yty;
        let l1: f64 = beta
            .iter()
            .zip(&self.owner)
            .map(|(b, &m)| lambdas[m] * b.abs())
            .sum();
        smooth + l1
    }

    /// Coordinate descent from `init` (zeros when `None`).
    pub fn fit(
        &self,
        lambdas: &[f64],
        rho: f64,
        init: Option<&[Array1<f64>]>,
        opts: &FitOptions,
    ) -> Result<CoopModel> {
        check_params(self.n_views(), lambdas, rho)?;
        let p = self.owner.len();
        let mut beta = match init {
            Some(blocks) => {
                if blocks.len() != self.n_views()
                    || blocks.iter().zip(&self.sizes).any(|(b, &s)| b.len() != s)
                {
                    return Err(Error::ShapeMismatch("warm start has the wrong shape".into()));
                }
                let views: Vec<_> = blocks.iter().map(|b| b.view()).collect();
                concatenate(Axis(0), &views).map_err(|e| Error::ShapeMismatch(e.to_string()))?
            }
            None => Array1::zeros(p),
        };
        // H as a dense matrix: p is the number of components, not features
        let h = Array2::from_shape_fn((p, p), |(i, j)| {
            self.gram[[i, j]] * self.h_factor(rho, self.owner[i], self.owner[j])
        });
        let mut hb = h.dot(&beta);
        let mut path = Vec::new();
        let mut converged = false;
        let mut sweeps = 0;
        while sweeps < opts.max_sweeps {
            sweeps += 1;
            let mut max_delta: f64 = 0.0;
            for j in 0..p {
                let hjj = h[[j, j]];
                let old = beta[j];
                if hjj <= 0.0 {
                    if old != 0.0 {
                        hb.scaled_add(-old, &h.column(j));
                        beta[j] = 0.0;
                    }
                    continue;
                }
                let grad = hb[j] - self.zty[j];
                let new = soft_threshold(hjj * old - grad, lambdas[self.owner[j]]) / hjj;
                let delta = new - old;
                if delta != 0.0 {
                    beta[j] = new;
                    hb.scaled_add(delta, &h.column(j));
                    max_delta = max_delta.max(delta.abs());
                }
            }
            path.push(self.quad_objective(&beta, &hb, lambdas));
            if max_delta < opts.tol {
                converged = true;
                break;
            }
        }
        // recompute to shed accumulated drift in hb
        let hb = h.dot(&beta);
        let objective = self.quad_objective(&beta, &hb, lambdas);
        Ok(CoopModel {
            betas: self.split(&beta),
            intercept: self.intercept,
            lambdas: lambdas.to_vec(),
            rho,
            objective,
            objective_path: path,
            n_iterations: sweeps,
            converged,
        })
    }
}

fn check_standardized(m: usize, z: &ArrayView2<f64>, scale: ColumnScale) -> Result<()> {
    let n = z.nrows() as f64;
    let expected = match scale {
        ColumnScale::Unchecked => return Ok(()),
        ColumnScale::SampleVariance => (n - 1.0).max(1.0),
        ColumnScale::UnitNorm => 1.0,
    };
    for (j, col) in z.columns().into_iter().enumerate() {
        let sq = col.dot(&col);
        // all-zero columns are inert and allowed
        if sq == 0.0 {
            continue;
        }
        if ((sq / expected).sqrt() - 1.0).abs() > 0.01 {
            return Err(Error::NotStandardized {
                name: format!("view {m} column {j}"),
                found: sq,
                expected,
            });
        }
    }
    Ok(())
}

/// Fits the cooperative model by coordinate descent.
pub fn fit(
    views: &[ArrayView2<f64>],
    y: ArrayView1<f64>,
    lambdas: &[f64],
    rho: f64,
    opts: &FitOptions,
) -> Result<CoopModel> {
    CoopProblem::new(views, y, opts.column_scale)?.fit(lambdas, rho, None, opts)
}

/// `intercept + Σ_m z_mᵀ β_m` for one observation.
pub fn predict(model: &CoopModel, z: &[ArrayView1<f64>]) -> Result<f64> {
    if z.len() != model.betas.len() {
        return Err(Error::ShapeMismatch(format!(
            "{} views given, model has {}",
            z.len(),
            model.betas.len()
        )));
    }
    let mut out = model.intercept;
    for (m, (zm, b)) in z.iter().zip(&model.betas).enumerate() {
        if zm.len() != b.len() {
            return Err(Error::ShapeMismatch(format!(
                "view {m}: {} features, model has {}",
                zm.len(),
                b.len()
            )));
        }
        out += zm.dot(b);
    }
    Ok(out)
}

/// Predictions for every row of the given views.
pub fn predict_rows(model: &CoopModel, views: &[ArrayView2<f64>]) -> Result<Array1<f64>> {
    let f = view_predictions(views, &model.betas)?;
    let n = views.first().map(|z| z.nrows()).unwrap_or(0);
    let mut out = Array1::from_elem(n, model.intercept);
    for fm in f {
        out += &fm;
    }
    Ok(out)
}
