//! Principal component analysis of single or concatenated views.

use ndarray::{concatenate, Array2, ArrayView1, Axis};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::matrix::{center_columns, check_same_units, FeatureMatrix};
use crate::svd::{frob2, thin_svd};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PcaResult {
    pub unit_ids: Vec<String>,
    /// n×r, unit-norm score columns (left singular vectors).
    pub scores: Array2<f64>,
    /// p×r loadings (right singular vectors).
    pub loadings: Array2<f64>,
    pub sigma: Vec<f64>,
    /// `sigma[k]² / Σ_j sigma_full[j]²`.
    pub var_explained: Vec<f64>,
    pub source_feature_names: Vec<String>,
}

impl PcaResult {
    pub fn n_components(&self) -> usize {
        self.sigma.len()
    }

    pub fn component_names(&self, prefix: &str) -> Vec<String> {
        (1..=self.n_components())
            .map(|k| format!("{prefix}{k}"))
            .collect()
    }

    pub fn scores_matrix(&self, prefix: &str) -> Result<FeatureMatrix> {
        FeatureMatrix::new(
            self.unit_ids.clone(),
            self.component_names(prefix),
            self.scores.clone(),
        )
    }
}

/// PCA of a (column-centered copy of a) view, keeping `r` components.
pub fn pca(m: &FeatureMatrix, r: usize) -> Result<PcaResult> {
    let max = m.nrows().min(m.ncols());
    if r == 0 || r > max {
        return Err(Error::RankTooLarge { requested: r, max });
    }
    let centered = center_columns(m);
    let total = frob2(centered.values().view());
    let f = thin_svd(centered.values().view())?.truncate(r);
    let sigma: Vec<f64> = f.sigma.to_vec();
    let var_explained = sigma
        .iter()
        .map(|s| if total > 0.0 { s * s / total } else { 0.0 })
        .collect();
    Ok(PcaResult {
        unit_ids: m.unit_ids().to_vec(),
        scores: f.u,
        loadings: f.v,
        sigma,
        var_explained,
        source_feature_names: m.feature_names().to_vec(),
    })
}

/// Column-wise concatenation; feature names become `<view>:<feature>`.
pub fn concat_views(views: &[(&str, &FeatureMatrix)]) -> Result<FeatureMatrix> {
    if views.is_empty() {
        return Err(Error::InvalidInput("no views to concatenate".into()));
    }
    let mats: Vec<FeatureMatrix> = views.iter().map(|(_, m)| (*m).clone()).collect();
    check_same_units(&mats)?;
    let names = views
        .iter()
        .flat_map(|(name, m)| m.feature_names().iter().map(move |f| format!("{name}:{f}")))
        .collect();
    let blocks: Vec<_> = views.iter().map(|(_, m)| m.values().view()).collect();
    let values = concatenate(Axis(1), &blocks).map_err(|e| Error::ShapeMismatch(e.to_string()))?;
    FeatureMatrix::new(mats[0].unit_ids().to_vec(), names, values)
}

/// Square matrix with row/column labels.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LabelledMatrix {
    pub labels: Vec<String>,
    pub values: Array2<f64>,
}

impl LabelledMatrix {
    pub fn get(&self, a: &str, b: &str) -> Option<f64> {
        let i = self.labels.iter().position(|l| l == a)?;
        let j = self.labels.iter().position(|l| l == b)?;
        Some(self.values[[i, j]])
    }

    pub fn write_csv<W: std::io::Write>(&self, w: W) -> Result<()> {
        crate::matrix::write_labelled_csv(w, "score", &self.labels, &self.labels, &self.values)
    }
}

/// Pearson correlation; zero when either vector is constant.
pub fn pearson(a: ArrayView1<f64>, b: ArrayView1<f64>) -> f64 {
    let n = a.len() as f64;
    let ma = a.sum() / n;
    let mb = b.sum() / n;
    let (mut sab, mut saa, mut sbb) = (0.0, 0.0, 0.0);
    for (x, y) in a.iter().zip(b.iter()) {
        let (dx, dy) = (x - ma, y - mb);
        sab += dx * dy;
        saa += dx * dx;
        sbb += dy * dy;
    }
    if saa <= 0.0 || sbb <= 0.0 {
        0.0
    } else {
        (sab / (saa.sqrt() * sbb.sqrt())).clamp(-1.0, 1.0)
    }
}

/// Absolute Pearson correlations between all score columns (labelled
/// `<set>:<k>` with 1-based k) and any external vectors.
pub fn score_correlation_matrix(
    score_sets: &[(String, Array2<f64>)],
    external: &[(String, Vec<f64>)],
) -> Result<LabelledMatrix> {
    let n = score_sets
        .first()
        .map(|(_, a)| a.nrows())
        .or_else(|| external.first().map(|(_, v)| v.len()))
        .unwrap_or(0);
    let mut labels = Vec::new();
    let mut columns: Vec<Vec<f64>> = Vec::new();
    for (name, a) in score_sets {
        if a.nrows() != n {
            return Err(Error::LengthMismatch {
                expected: n,
                got: a.nrows(),
            });
        }
        for (k, col) in a.columns().into_iter().enumerate() {
            labels.push(format!("{name}:{}", k + 1));
            columns.push(col.to_vec());
        }
    }
    for (name, v) in external {
        if v.len() != n {
            return Err(Error::LengthMismatch {
                expected: n,
                got: v.len(),
            });
        }
        labels.push(name.clone());
        columns.push(v.clone());
    }
    let k = columns.len();
    let cols: Vec<ndarray::Array1<f64>> = columns.into_iter().map(Into::into).collect();
    let mut values = Array2::zeros((k, k));
    for i in 0..k {
        values[[i, i]] = 1.0;
        for j in (i + 1)..k {
            let c = pearson(cols[i].view(), cols[j].view()).abs();
            values[[i, j]] = c;
            values[[j, i]] = c;
        }
    }
    Ok(LabelledMatrix { labels, values })
}
