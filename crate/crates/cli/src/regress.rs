//! Feature assembly, cross-validation and the final cooperative fit.

use multiview_core::ajive::AjiveResult;
use multiview_core::coop::{
    cross_validate, feature_sets_from_decompositions, fit, lambda_path, standardize_views, CvGrid, CvReport,
    FeatureSource, FitOptions,
};
use multiview_core::matrix::{column_means, sample_variance};
use multiview_core::pca::{pca, PcaResult};
use multiview_core::FeatureMatrix;
use ndarray::{Array1, ArrayView2};
use serde::{Deserialize, Serialize};

use crate::error::{CliError, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "snake_case")]
pub enum FeatureKind {
    /// The (preprocessed) views themselves.
    Raw,
    Pca,
    Ajive,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "snake_case")]
pub enum LambdaMode {
    /// One penalty shared by all views.
    Tied,
    /// Independent per-view penalties (Cartesian grid).
    Free,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RegressionSettings {
    pub source: FeatureKind,
    pub total_components: usize,
    /// Use every available component instead of failing when fewer than
    /// `total_components` exist.
    pub clip: bool,
    pub rhos: Vec<f64>,
    pub lambda_mode: LambdaMode,
    pub n_lambda: usize,
    pub lambda_ratio: f64,
    /// Top of the penalty grid; defaults to the smallest penalty that zeroes
    /// every coefficient.
    pub lambda_max: Option<f64>,
    pub folds: usize,
    pub repeats: usize,
}

impl Default for RegressionSettings {
    fn default() -> Self {
        Self {
            source: FeatureKind::Ajive,
            total_components: 30,
            clip: true,
            rhos: vec![0.0, 0.2, 0.4, 0.6, 0.8, 1.0],
            lambda_mode: LambdaMode::Tied,
            n_lambda: 50,
            lambda_ratio: 1e-3,
            lambda_max: None,
            folds: 20,
            repeats: 5,
        }
    }
}

impl RegressionSettings {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(CliError::Config(m.to_owned()));
        if self.rhos.is_empty() || self.rhos.iter().any(|r| !(*r >= 0.0 && r.is_finite())) {
            return bad("rhos must be a nonempty list of finite values >= 0");
        }
        if self.n_lambda == 0 {
            return bad("n_lambda must be positive");
        }
        if !(self.lambda_ratio > 0.0 && self.lambda_ratio <= 1.0) {
            return bad("lambda_ratio must lie in (0, 1]");
        }
        if self.lambda_max.is_some_and(|l| !(l > 0.0 && l.is_finite())) {
            return bad("lambda_max must be positive");
        }
        if self.folds < 2 || self.repeats == 0 {
            return bad("need at least 2 folds and 1 repeat");
        }
        if self.total_components == 0 && self.source != FeatureKind::Raw {
            return bad("total_components must be positive");
        }
        Ok(())
    }
}

/// Regression design per view, named `<view>`.
pub fn feature_views(
    views: &[FeatureMatrix],
    names: &[String],
    settings: &RegressionSettings,
    ajive: Option<&AjiveResult>,
) -> Result<Vec<(String, FeatureMatrix)>> {
    match settings.source {
        FeatureKind::Raw => Ok(names.iter().cloned().zip(views.iter().cloned()).collect()),
        FeatureKind::Pca => {
            let pcs = views
                .iter()
                .map(|v| pca(v, settings.total_components.min(v.ncols()).min(v.nrows())))
                .collect::<multiview_core::Result<Vec<PcaResult>>>()?;
            Ok(feature_sets_from_decompositions(
                FeatureSource::Pca(&pcs),
                names,
                settings.total_components,
                settings.clip,
            )?)
        }
        FeatureKind::Ajive => {
            let res = ajive.ok_or_else(|| CliError::Config("ajive features need a decomposition".into()))?;
            Ok(feature_sets_from_decompositions(
                FeatureSource::Ajive(res),
                names,
                settings.total_components,
                settings.clip,
            )?)
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct ModelView {
    pub name: String,
    pub features: Vec<String>,
    /// Column means subtracted before scaling.
    pub center: Vec<f64>,
    /// Sample standard deviations divided out (0 for constant columns,
    /// which are dropped).
    pub scale: Vec<f64>,
    pub beta: Vec<f64>,
}

#[derive(Debug, Clone, Serialize)]
pub struct ModelFile {
    pub source: FeatureKind,
    pub views: Vec<ModelView>,
    pub intercept: f64,
    pub lambdas: Vec<f64>,
    pub rho: f64,
    pub objective: f64,
    pub n_iterations: usize,
    pub converged: bool,
    pub cv_mse: f64,
    pub cv_se: f64,
    pub null_mse: f64,
    pub n_folds: usize,
    pub n_repeats: usize,
    pub seed: u64,
}

pub struct RegressionOutput {
    pub report: CvReport,
    pub model: ModelFile,
}

fn penalty_grid(views: &[ArrayView2<f64>], y: &Array1<f64>, s: &RegressionSettings) -> Result<Vec<f64>> {
    match s.lambda_max {
        None => Ok(lambda_path(views, y.view(), s.n_lambda, s.lambda_ratio)?),
        Some(top) if s.n_lambda == 1 => Ok(vec![top]),
        Some(top) => {
            let step = s.lambda_ratio.ln() / (s.n_lambda - 1) as f64;
            Ok((0..s.n_lambda).map(|k| top * (step * k as f64).exp()).collect())
        }
    }
}

/// Standardizes each design, cross-validates the (λ, ρ) grid and refits the
/// chosen point on all units.
pub fn regress(sets: &[(String, FeatureMatrix)], y: &[f64], s: &RegressionSettings, seed: u64) -> Result<RegressionOutput> {
    s.validate()?;
    if sets.is_empty() {
        return Err(CliError::Data("no regression features".into()));
    }
    let raw: Vec<ArrayView2<f64>> = sets.iter().map(|(_, m)| m.values().view()).collect();
    let z = standardize_views(&raw);
    let zv: Vec<ArrayView2<f64>> = z.iter().map(|a| a.view()).collect();
    let y = Array1::from(y.to_vec());
    let path = penalty_grid(&zv, &y, s)?;
    let grid = match s.lambda_mode {
        LambdaMode::Tied => CvGrid::tied(&path, zv.len(), &s.rhos),
        LambdaMode::Free => CvGrid::free(&vec![path; zv.len()], &s.rhos),
    };
    let opts = FitOptions::default();
    let report = cross_validate(&zv, y.view(), &grid, s.folds, s.repeats, seed, &opts)?;
    let best = report.best().clone();
    let m = fit(&zv, y.view(), &best.lambdas, best.rho, &opts)?;
    let views = sets
        .iter()
        .zip(&m.betas)
        .map(|((name, fm), beta)| ModelView {
            name: name.clone(),
            features: fm.feature_names().to_vec(),
            center: column_means(fm.values()).to_vec(),
            scale: fm
                .values()
                .columns()
                .into_iter()
                .map(|c| {
                    let sd = sample_variance(c).sqrt();
                    let mean = c.mean().unwrap_or(0.0);
                    if sd > 1e-12 * (1.0 + mean.abs()) {
                        sd
                    } else {
                        0.0
                    }
                })
                .collect(),
            beta: beta.to_vec(),
        })
        .collect();
    let model = ModelFile {
        source: s.source,
        views,
        intercept: m.intercept,
        lambdas: m.lambdas.clone(),
        rho: m.rho,
        objective: m.objective,
        n_iterations: m.n_iterations,
        converged: m.converged,
        cv_mse: best.mean_mse,
        cv_se: best.se,
        null_mse: report.null_mse,
        n_folds: s.folds,
        n_repeats: s.repeats,
        seed,
    };
    Ok(RegressionOutput { report, model })
}
