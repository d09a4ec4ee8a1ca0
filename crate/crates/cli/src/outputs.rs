//! Writers for run-directory artifacts. Every CSV uses the matrix format
//! (label column then named values) and prints floats with round-trip
//! precision, so outputs re-ingest losslessly.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use multiview_core::ajive::{AjiveResult, VarianceExplained, ViewVariance};
use multiview_core::matrix::{fmt_f64, write_labelled_csv};
use multiview_core::pca::{LabelledMatrix, PcaResult};
use multiview_core::rank::ScreeData;
use ndarray::Array2;
use serde::Serialize;

use crate::error::{CliError, Result};

pub fn ensure_dir(dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| CliError::io(dir, e))
}

pub fn create(path: &Path) -> Result<BufWriter<File>> {
    File::create(path).map(BufWriter::new).map_err(|e| CliError::io(path, e))
}

pub fn write_json<T: Serialize + ?Sized>(path: &Path, value: &T) -> Result<()> {
    let mut w = create(path)?;
    serde_json::to_writer_pretty(&mut w, value)?;
    w.write_all(b"\n").map_err(|e| CliError::io(path, e))?;
    w.flush().map_err(|e| CliError::io(path, e))
}

pub fn component_names(prefix: &str, k: usize) -> Vec<String> {
    (1..=k).map(|i| format!("{prefix}{i}")).collect()
}

pub fn write_matrix(path: &Path, label: &str, rows: &[String], cols: &[String], values: &Array2<f64>) -> Result<()> {
    let mut w = create(path)?;
    write_labelled_csv(&mut w, label, rows, cols, values)?;
    w.flush().map_err(|e| CliError::io(path, e))
}

/// Long-format scree table: one row per (view, index).
pub fn write_scree(path: &Path, screes: &[(String, ScreeData)]) -> Result<()> {
    let mut w = csv::Writer::from_writer(create(path)?);
    w.write_record(["view", "k", "singular_value", "gap", "relative_gap"])
        .map_err(multiview_core::Error::from)?;
    for (name, s) in screes {
        for (k, &sv) in s.singular_values.iter().enumerate() {
            let gap = s.gaps.get(k).copied().unwrap_or(0.0);
            let rel = if sv > 0.0 { gap / sv } else { 0.0 };
            w.write_record([name.clone(), (k + 1).to_string(), fmt_f64(sv), fmt_f64(gap), fmt_f64(rel)])
                .map_err(multiview_core::Error::from)?;
        }
    }
    w.flush().map_err(|e| CliError::io(path, e))
}

pub fn write_bound_samples(path: &Path, samples: &[f64]) -> Result<()> {
    let mut w = csv::Writer::from_writer(create(path)?);
    w.write_record(["sample", "largest_singular_value"])
        .map_err(multiview_core::Error::from)?;
    for (i, &s) in samples.iter().enumerate() {
        w.write_record([(i + 1).to_string(), fmt_f64(s)])
            .map_err(multiview_core::Error::from)?;
    }
    w.flush().map_err(|e| CliError::io(path, e))
}

#[derive(Debug, Clone, Serialize)]
pub struct ChosenRanks {
    pub initial_ranks: Vec<usize>,
    pub joint_rank: usize,
    pub individual_ranks: Vec<usize>,
    pub nu: Vec<f64>,
    pub threshold: Option<f64>,
    pub seed: u64,
}

impl ChosenRanks {
    pub fn from_result(res: &AjiveResult) -> Self {
        let r = &res.ranks;
        Self {
            initial_ranks: r.initial_ranks.clone(),
            joint_rank: r.joint_rank,
            individual_ranks: r.individual_ranks.clone(),
            nu: r.nu_thresholds.clone(),
            threshold: r.bound_threshold,
            seed: r.rng_seed,
        }
    }
}

#[derive(Serialize)]
struct ViewSigma<'a> {
    view: &'a str,
    individual: &'a [f64],
    spectrum: &'a [f64],
}

#[derive(Serialize)]
struct SigmaFile<'a> {
    joint: &'a [f64],
    views: Vec<ViewSigma<'a>>,
}

#[derive(Serialize)]
struct NamedVariance<'a> {
    view: &'a str,
    #[serde(flatten)]
    share: ViewVariance,
}

pub fn write_variance(path: &Path, names: &[String], ve: &VarianceExplained) -> Result<()> {
    let rows: Vec<NamedVariance> = names
        .iter()
        .zip(&ve.per_view)
        .map(|(n, v)| NamedVariance { view: n, share: *v })
        .collect();
    write_json(path, &rows)
}

/// Score, loading and spectrum files of a decomposition; returns the paths
/// written.
pub fn write_ajive(dir: &Path, names: &[String], res: &AjiveResult) -> Result<Vec<PathBuf>> {
    let mut written = Vec::new();
    let jc = component_names("JC", res.joint_rank());
    let p = dir.join("joint_scores.csv");
    write_matrix(&p, "unit_id", &res.unit_ids, &jc, &res.joint_scores)?;
    written.push(p);
    for (i, name) in names.iter().enumerate() {
        let p = dir.join(format!("joint_loadings_{name}.csv"));
        write_matrix(&p, "feature", &res.feature_names[i], &jc, &res.joint_loadings[i])?;
        written.push(p);
        let b = &res.individual[i];
        let ic = component_names("IC", b.rank());
        let p = dir.join(format!("individual_scores_{name}.csv"));
        write_matrix(&p, "unit_id", &res.unit_ids, &ic, &b.scores)?;
        written.push(p);
        let p = dir.join(format!("individual_loadings_{name}.csv"));
        write_matrix(&p, "feature", &res.feature_names[i], &ic, &b.loadings)?;
        written.push(p);
    }
    let sigma = SigmaFile {
        joint: &res.joint_sigma,
        views: names
            .iter()
            .enumerate()
            .map(|(i, n)| ViewSigma {
                view: n,
                individual: &res.individual[i].sigma,
                spectrum: &res.view_singular_values[i],
            })
            .collect(),
    };
    let p = dir.join("sigma.json");
    write_json(&p, &sigma)?;
    written.push(p);
    let p = dir.join("ranks.json");
    write_json(&p, &res.ranks)?;
    written.push(p);
    Ok(written)
}

/// `<stem>scores.csv`, `<stem>loadings.csv` and `<stem>sigma.csv`.
pub fn write_pca(dir: &Path, stem: &str, res: &PcaResult) -> Result<Vec<PathBuf>> {
    let pcs = component_names("PC", res.n_components());
    let scores = dir.join(format!("{stem}scores.csv"));
    write_matrix(&scores, "unit_id", &res.unit_ids, &pcs, &res.scores)?;
    let loadings = dir.join(format!("{stem}loadings.csv"));
    write_matrix(&loadings, "feature", &res.source_feature_names, &pcs, &res.loadings)?;
    let sigma = dir.join(format!("{stem}sigma.csv"));
    let mut vals = Array2::zeros((pcs.len(), 2));
    for k in 0..pcs.len() {
        vals[[k, 0]] = res.sigma[k];
        vals[[k, 1]] = res.var_explained[k];
    }
    write_matrix(&sigma, "component", &pcs, &["sigma".into(), "var_explained".into()], &vals)?;
    Ok(vec![scores, loadings, sigma])
}

pub fn write_correlations(path: &Path, m: &LabelledMatrix) -> Result<()> {
    let mut w = create(path)?;
    m.write_csv(&mut w)?;
    w.flush().map_err(|e| CliError::io(path, e))
}
