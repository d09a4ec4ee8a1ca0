//! Pipeline configuration (JSON). Relative paths are resolved against the
//! directory containing the config file.

use std::collections::HashSet;
use std::path::{Path, PathBuf};

use multiview_core::rank::{BoundMode, DEFAULT_BOUND_PERCENTILE, DEFAULT_BOUND_SAMPLES};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{CliError, Result};
use crate::regress::RegressionSettings;
use crate::sources::{AggregateRecipe, PatchRecipe};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PipelineConfig {
    pub views: Vec<ViewSpec>,
    #[serde(default)]
    pub preprocess: Vec<PreprocessStep>,
    #[serde(default)]
    pub ranks: RankSettings,
    #[serde(default)]
    pub pca: PcaSettings,
    #[serde(default)]
    pub regression: Option<RegressionConfig>,
    #[serde(default)]
    pub external_scores: Vec<ExternalScore>,
    /// Units listed per side and joint component in extremes.csv.
    #[serde(default = "default_extremes")]
    pub extremes: usize,
    #[serde(default)]
    pub output: Option<PathBuf>,
    #[serde(default)]
    pub seed: u64,
}

fn default_extremes() -> usize {
    2
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ViewSpec {
    pub name: String,
    #[serde(flatten)]
    pub source: ViewSource,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ViewSource {
    /// A feature matrix CSV.
    Matrix(PathBuf),
    Aggregate(AggregateRecipe),
    Patches(PatchRecipe),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "op", rename_all = "snake_case")]
pub enum PreprocessStep {
    Winsorize {
        lower: f64,
        upper: f64,
        /// Views to apply to; all when absent.
        #[serde(default)]
        views: Option<Vec<String>>,
    },
    Center {
        #[serde(default)]
        views: Option<Vec<String>>,
    },
    Standardize {
        #[serde(default)]
        views: Option<Vec<String>>,
    },
}

impl PreprocessStep {
    pub fn views(&self) -> Option<&[String]> {
        match self {
            PreprocessStep::Winsorize { views, .. }
            | PreprocessStep::Center { views }
            | PreprocessStep::Standardize { views } => views.as_deref(),
        }
    }

    pub fn applies_to(&self, view: &str) -> bool {
        self.views().map_or(true, |v| v.iter().any(|n| n == view))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RankSettings {
    /// Initial signal rank per view; suggested from the scree gaps when
    /// absent.
    pub initial: Option<Vec<usize>>,
    /// Largest rank considered by the scree suggestion.
    pub max_rank: usize,
    pub n_samples: usize,
    pub percentile: f64,
    pub mode: BoundMode,
    /// Fixes the joint rank instead of using the bound.
    pub joint: Option<usize>,
    /// Fixes the individual ranks instead of using the ν thresholds.
    pub individual: Option<Vec<usize>>,
    /// Re-runs the decomposition for common initial ranks 1..=sweep.
    pub sweep: Option<usize>,
}

impl Default for RankSettings {
    fn default() -> Self {
        Self {
            initial: None,
            max_rank: 10,
            n_samples: DEFAULT_BOUND_SAMPLES,
            percentile: DEFAULT_BOUND_PERCENTILE,
            mode: BoundMode::MaxBound,
            joint: None,
            individual: None,
            sweep: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PcaSettings {
    /// Components per view (clipped to the view's size).
    pub components: usize,
    /// Also decompose the column-concatenation of all views.
    pub concatenated: bool,
}

impl Default for PcaSettings {
    fn default() -> Self {
        Self {
            components: 3,
            concatenated: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegressionConfig {
    /// Two-column CSV `unit_id,score`.
    pub response: PathBuf,
    #[serde(flatten)]
    pub settings: RegressionSettings,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExternalScore {
    pub name: String,
    /// Two-column CSV `unit_id,score`.
    pub path: PathBuf,
}

pub struct LoadedConfig {
    pub config: PipelineConfig,
    /// Hex SHA-256 of the config file bytes.
    pub hash: String,
}

pub fn load(path: &Path) -> Result<LoadedConfig> {
    let bytes = std::fs::read(path).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
    let mut config: PipelineConfig = serde_json::from_slice(&bytes)
        .map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
    let base = path.parent().unwrap_or(Path::new("."));
    config.resolve_paths(base);
    config.validate()?;
    let hash = Sha256::digest(&bytes).iter().map(|b| format!("{b:02x}")).collect();
    Ok(LoadedConfig { config, hash })
}

fn resolve(base: &Path, p: &mut PathBuf) {
    if p.is_relative() {
        *p = base.join(&*p);
    }
}

/// View names end up in file names.
fn valid_name(s: &str) -> bool {
    !s.is_empty() && s.chars().all(|c| c.is_ascii_alphanumeric() || c == '_' || c == '-')
}

impl PipelineConfig {
    pub fn resolve_paths(&mut self, base: &Path) {
        for v in &mut self.views {
            match &mut v.source {
                ViewSource::Matrix(p) => resolve(base, p),
                ViewSource::Aggregate(a) => {
                    for p in [&mut a.units, &mut a.sites, &mut a.boundary, &mut a.features] {
                        resolve(base, p);
                    }
                }
                ViewSource::Patches(PatchRecipe::Images { images, .. }) => resolve(base, images),
                ViewSource::Patches(PatchRecipe::Embeddings {
                    manifest,
                    embeddings,
                    sidecar,
                }) => {
                    for p in [manifest, embeddings, sidecar] {
                        resolve(base, p);
                    }
                }
            }
        }
        if let Some(r) = &mut self.regression {
            resolve(base, &mut r.response);
        }
        for e in &mut self.external_scores {
            resolve(base, &mut e.path);
        }
        if let Some(o) = &mut self.output {
            resolve(base, o);
        }
    }

    pub fn input_paths(&self) -> Vec<&Path> {
        let mut out = Vec::new();
        for v in &self.views {
            match &v.source {
                ViewSource::Matrix(p) => out.push(p.as_path()),
                ViewSource::Aggregate(a) => out.extend(a.paths()),
                ViewSource::Patches(p) => out.extend(p.paths()),
            }
        }
        if let Some(r) = &self.regression {
            out.push(&r.response);
        }
        out.extend(self.external_scores.iter().map(|e| e.path.as_path()));
        out
    }

    pub fn view_names(&self) -> Vec<String> {
        self.views.iter().map(|v| v.name.clone()).collect()
    }

    pub fn validate(&self) -> Result<()> {
        let err = |m: String| Err(CliError::Config(m));
        if self.views.len() < 2 {
            return err(format!("need at least two views, got {}", self.views.len()));
        }
        let mut seen = HashSet::new();
        for v in &self.views {
            if !valid_name(&v.name) {
                return err(format!("view name `{}` must be nonempty ASCII letters, digits, `_` or `-`", v.name));
            }
            if !seen.insert(v.name.as_str()) {
                return err(format!("duplicate view name `{}`", v.name));
            }
        }
        for p in self.input_paths() {
            if !p.exists() {
                return err(format!("{} does not exist", p.display()));
            }
        }
        for step in &self.preprocess {
            for name in step.views().unwrap_or_default() {
                if !seen.contains(name.as_str()) {
                    return err(format!("preprocessing refers to unknown view `{name}`"));
                }
            }
            if let PreprocessStep::Winsorize { lower, upper, .. } = step {
                if !(0.0..=1.0).contains(lower) || !(0.0..=1.0).contains(upper) || lower >= upper {
                    return err(format!("winsorize quantiles ({lower}, {upper}) must satisfy 0 <= lower < upper <= 1"));
                }
            }
        }
        let k = self.views.len();
        let r = &self.ranks;
        if let Some(init) = &r.initial {
            if init.len() != k || init.contains(&0) {
                return err(format!("ranks.initial needs {k} positive entries"));
            }
        }
        if let Some(ind) = &r.individual {
            if ind.len() != k {
                return err(format!("ranks.individual needs {k} entries"));
            }
        }
        if r.max_rank == 0 || r.n_samples == 0 || !(r.percentile > 0.0 && r.percentile <= 1.0) {
            return err("ranks: max_rank and n_samples must be positive, percentile in (0, 1]".into());
        }
        if r.sweep == Some(0) {
            return err("ranks.sweep must be positive".into());
        }
        if let Some(reg) = &self.regression {
            reg.settings.validate()?;
        }
        let mut ext = HashSet::new();
        for e in &self.external_scores {
            if e.name.is_empty() || !ext.insert(e.name.as_str()) {
                return err(format!("external score names must be unique and nonempty (`{}`)", e.name));
            }
        }
        Ok(())
    }
}
