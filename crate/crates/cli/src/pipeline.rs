//! End-to-end run: ingest, align, preprocess, decompose, regress, write.

use std::path::{Path, PathBuf};

use multiview_core::ajive::{ajive_decompose, rank_sweep, variance_explained, AjiveConfig, AjiveResult, JointRankRule};
use multiview_core::matrix::{
    align_scores, center_columns, intersect_units, read_scores_csv, standardize_columns, winsorize_columns,
};
use multiview_core::pca::{concat_views, pca, score_correlation_matrix};
use multiview_core::rank::{scree, suggest_initial_rank, ScreeData};
use multiview_core::FeatureMatrix;
use ndarray::Array2;
use serde::Serialize;

use crate::config::{PipelineConfig, PreprocessStep, RankSettings, ViewSource};
use crate::error::{CliError, Result};
use crate::extremes::{extremes, write_extremes, Extremes};
use crate::outputs::{
    component_names, create, ensure_dir, write_ajive, write_bound_samples, write_correlations, write_json, write_pca,
    write_scree, write_variance, ChosenRanks,
};
use crate::regress::{feature_views, regress};
use crate::sources::{aggregate, patch_features};

#[derive(Debug, Clone, Serialize)]
pub struct ViewSummary {
    pub name: String,
    pub n_units: usize,
    pub n_features: usize,
}

#[derive(Debug, Clone, Serialize)]
pub struct Provenance {
    pub config_sha256: String,
    pub seed: u64,
    pub versions: Versions,
    pub views: Vec<ViewSummary>,
    /// Units missing from at least one view, dropped before analysis.
    pub dropped_units: Vec<String>,
    /// Output files relative to the run directory, sorted.
    pub outputs: Vec<String>,
}

#[derive(Debug, Clone, Serialize)]
pub struct Versions {
    pub multiview: &'static str,
    pub format: u32,
}

pub fn load_views(cfg: &PipelineConfig, seed: u64) -> Result<Vec<FeatureMatrix>> {
    cfg.views
        .iter()
        .map(|v| match &v.source {
            ViewSource::Matrix(p) => Ok(FeatureMatrix::from_path(p)?),
            ViewSource::Aggregate(a) => Ok(aggregate(a)?.1),
            ViewSource::Patches(p) => Ok(patch_features(p, seed)?.features),
        })
        .collect()
}

pub fn preprocess(views: &mut [FeatureMatrix], names: &[String], steps: &[PreprocessStep]) -> Result<()> {
    for step in steps {
        for (v, name) in views.iter_mut().zip(names) {
            if !step.applies_to(name) {
                continue;
            }
            *v = match step {
                PreprocessStep::Winsorize { lower, upper, .. } => winsorize_columns(v, *lower, *upper)?,
                PreprocessStep::Center { .. } => center_columns(v),
                PreprocessStep::Standardize { .. } => standardize_columns(v)?,
            };
        }
    }
    Ok(())
}

pub fn joint_rule(r: &RankSettings) -> JointRankRule {
    match r.joint {
        Some(k) => JointRankRule::Fixed(k),
        None => JointRankRule::Auto {
            n_samples: r.n_samples,
            percentile: r.percentile,
            mode: r.mode,
        },
    }
}

fn read_external(path: &Path, ids: &[String]) -> Result<Vec<f64>> {
    let file = std::fs::File::open(path).map_err(|e| CliError::io(path, e))?;
    let scores = read_scores_csv(std::io::BufReader::new(file))?;
    Ok(align_scores(&scores, ids)?)
}

fn relative(dir: &Path, p: &Path) -> String {
    p.strip_prefix(dir).unwrap_or(p).to_string_lossy().replace('\\', "/")
}

/// Executes the configured pipeline into `out`; returns the provenance record
/// that is also written to `provenance.json`.
pub fn run(cfg: &PipelineConfig, config_hash: &str, out: &Path, seed: u64) -> Result<Provenance> {
    ensure_dir(out)?;
    let names = cfg.view_names();
    let raw = load_views(cfg, seed)?;
    let (mut views, dropped) = intersect_units(&raw)?;
    if !dropped.is_empty() {
        log::warn!("dropping {} units missing from some view: {:?}", dropped.len(), dropped);
    }
    preprocess(&mut views, &names, &cfg.preprocess)?;
    let ids = views[0].unit_ids().to_vec();
    let mut written: Vec<PathBuf> = Vec::new();

    let view_dir = out.join("views");
    ensure_dir(&view_dir)?;
    for (v, name) in views.iter().zip(&names) {
        let p = view_dir.join(format!("{name}.csv"));
        v.to_path(&p)?;
        written.push(p);
    }

    // ranks
    let screes: Vec<(String, ScreeData)> = views
        .iter()
        .zip(&names)
        .map(|(v, n)| Ok((n.clone(), scree(v)?)))
        .collect::<Result<_>>()?;
    let p = out.join("scree.csv");
    write_scree(&p, &screes)?;
    written.push(p);
    let initial = match &cfg.ranks.initial {
        Some(r) => r.clone(),
        None => screes.iter().map(|(_, s)| suggest_initial_rank(s, cfg.ranks.max_rank)).collect(),
    };
    let ajive_cfg = AjiveConfig {
        initial_ranks: initial,
        joint_rank: joint_rule(&cfg.ranks),
        individual_ranks: cfg.ranks.individual.clone(),
        seed,
    };
    let res = ajive_decompose(&views, &ajive_cfg)?;
    let p = out.join("bound_samples.csv");
    write_bound_samples(&p, &res.ranks.bound_samples)?;
    written.push(p);
    let p = out.join("chosen_ranks.json");
    write_json(&p, &ChosenRanks::from_result(&res))?;
    written.push(p);

    written.extend(write_ajive(out, &names, &res)?);
    let p = out.join("variance.json");
    write_variance(&p, &names, &variance_explained(&res, &views)?)?;
    written.push(p);

    if let Some(max) = cfg.ranks.sweep {
        let rows = rank_sweep(&views, 1..=max, &joint_rule(&cfg.ranks), seed)?;
        let p = out.join("rank_sweep.csv");
        let mut cols = vec!["joint_rank".to_string()];
        cols.extend(names.iter().map(|n| format!("individual_rank_{n}")));
        cols.extend(names.iter().map(|n| format!("joint_share_{n}")));
        cols.extend(names.iter().map(|n| format!("individual_share_{n}")));
        let k = names.len();
        let mut vals = Array2::zeros((rows.len(), 1 + 3 * k));
        for (i, r) in rows.iter().enumerate() {
            vals[[i, 0]] = r.joint_rank as f64;
            for m in 0..k {
                vals[[i, 1 + m]] = r.individual_ranks[m] as f64;
                vals[[i, 1 + k + m]] = r.variance.per_view[m].joint;
                vals[[i, 1 + 2 * k + m]] = r.variance.per_view[m].individual;
            }
        }
        let labels: Vec<String> = rows.iter().map(|r| r.initial_rank.to_string()).collect();
        crate::outputs::write_matrix(&p, "initial_rank", &labels, &cols, &vals)?;
        written.push(p);
    }

    // PCA baseline
    let mut score_sets: Vec<(String, Array2<f64>)> = vec![("JC".into(), res.joint_scores.clone())];
    for (i, n) in names.iter().enumerate() {
        score_sets.push((format!("IC_{n}"), res.individual[i].scores.clone()));
    }
    for (v, n) in views.iter().zip(&names) {
        let r = cfg.pca.components.min(v.ncols()).min(v.nrows());
        if r == 0 {
            continue;
        }
        let pc = pca(v, r)?;
        written.extend(write_pca(out, &format!("pca_{n}_"), &pc)?);
        score_sets.push((format!("PC_{n}"), pc.scores));
    }
    if cfg.pca.concatenated {
        let pairs: Vec<(&str, &FeatureMatrix)> = names.iter().map(String::as_str).zip(views.iter()).collect();
        let joined = concat_views(&pairs)?;
        let r = cfg.pca.components.min(joined.ncols()).min(joined.nrows());
        if r > 0 {
            let pc = pca(&joined, r)?;
            written.extend(write_pca(out, "pca_concat_", &pc)?);
            score_sets.push(("PC_concat".into(), pc.scores));
        }
    }

    let external = cfg
        .external_scores
        .iter()
        .map(|e| Ok((e.name.clone(), read_external(&e.path, &ids)?)))
        .collect::<Result<Vec<_>>>()?;
    let p = out.join("correlations.csv");
    write_correlations(&p, &score_correlation_matrix(&score_sets, &external)?)?;
    written.push(p);

    if cfg.extremes > 0 && res.joint_rank() > 0 {
        let p = out.join("extremes.csv");
        write_extremes(create(&p)?, &joint_extremes(&res, cfg.extremes)?)?;
        written.push(p);
    }

    if let Some(reg) = &cfg.regression {
        let y = read_external(&reg.response, &ids)?;
        let sets = feature_views(&views, &names, &reg.settings, Some(&res))?;
        let fitted = regress(&sets, &y, &reg.settings, seed)?;
        let p = out.join("cv_report.csv");
        fitted.report.write_csv(create(&p)?)?;
        written.push(p);
        let p = out.join("model.json");
        write_json(&p, &fitted.model)?;
        written.push(p);
    }

    let mut outputs: Vec<String> = written.iter().map(|p| relative(out, p)).collect();
    outputs.push("provenance.json".into());
    outputs.sort();
    let prov = Provenance {
        config_sha256: config_hash.to_owned(),
        seed,
        versions: Versions {
            multiview: env!("CARGO_PKG_VERSION"),
            format: 1,
        },
        views: names
            .iter()
            .zip(&raw)
            .map(|(n, v)| ViewSummary {
                name: n.clone(),
                n_units: v.nrows(),
                n_features: v.ncols(),
            })
            .collect(),
        dropped_units: dropped,
        outputs,
    };
    write_json(&out.join("provenance.json"), &prov)?;
    Ok(prov)
}

pub fn joint_extremes(res: &AjiveResult, k: usize) -> Result<Vec<Extremes>> {
    let jc = component_names("JC", res.joint_rank());
    let scores = FeatureMatrix::new(res.unit_ids.clone(), jc.clone(), res.joint_scores.clone())?;
    jc.iter().map(|c| extremes(&scores, c, k)).collect()
}
