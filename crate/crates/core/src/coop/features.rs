use ndarray::{concatenate, s, Array2, Axis};

use crate::ajive::AjiveResult;
use crate::error::{Error, Result};
use crate::matrix::FeatureMatrix;
use crate::pca::PcaResult;

/// Decomposition whose scores become regression features.
#[derive(Debug, Clone, Copy)]
pub enum FeatureSource<'a> {
    Ajive(&'a AjiveResult),
    /// One PCA per view.
    Pca(&'a [PcaResult]),
}

/// Splits `total` across slots as evenly as the capacities allow, earlier
/// slots taking the remainder.
pub fn allocate(total: usize, caps: &[usize]) -> Result<Vec<usize>> {
    let available: usize = caps.iter().sum();
    if total > available {
        return Err(Error::InsufficientComponents {
            requested: total,
            available,
        });
    }
    let mut alloc = vec![0; caps.len()];
    let mut remaining = total;
    while remaining > 0 {
        let open: Vec<usize> = (0..caps.len()).filter(|&i| alloc[i] < caps[i]).collect();
        let share = remaining / open.len();
        let extra = remaining % open.len();
        for (k, &i) in open.iter().enumerate() {
            let give = (share + usize::from(k < extra)).min(caps[i] - alloc[i]);
            alloc[i] += give;
            remaining -= give;
        }
    }
    Ok(alloc)
}

/// Builds per-view score matrices holding `total` components in all.
///
/// Components are split equally between views. For AJIVE each view's share
/// is split between its joint and individual scores, joint first. With
/// `clip`, a request beyond what the decomposition holds uses everything
/// available instead of failing. Views left with no columns are omitted.
pub fn feature_sets_from_decompositions(
    source: FeatureSource<'_>,
    view_names: &[String],
    total: usize,
    clip: bool,
) -> Result<Vec<(String, FeatureMatrix)>> {
    let (unit_ids, blocks): (Vec<String>, Vec<Vec<(String, Array2<f64>)>>) = match source {
        FeatureSource::Ajive(res) => {
            let blocks = (0..res.n_views())
                .map(|m| {
                    let joint = &res.joint_by_view[m].u;
                    let rj = res.joint_rank().min(joint.ncols());
                    vec![
                        ("JC".to_string(), joint.slice(s![.., ..rj]).to_owned()),
                        ("IC".to_string(), res.individual[m].scores.clone()),
                    ]
                })
                .collect();
            (res.unit_ids.clone(), blocks)
        }
        FeatureSource::Pca(list) => {
            let ids = list
                .first()
                .ok_or_else(|| Error::InvalidInput("no PCA results".into()))?
                .unit_ids
                .clone();
            if list.iter().any(|p| p.unit_ids != ids) {
                return Err(Error::UnitMismatch(vec![]));
            }
            let blocks = list.iter().map(|p| vec![("PC".to_string(), p.scores.clone())]).collect();
            (ids, blocks)
        }
    };
    if view_names.len() != blocks.len() {
        return Err(Error::ShapeMismatch(format!(
            "{} view names for {} views",
            view_names.len(),
            blocks.len()
        )));
    }
    let caps: Vec<usize> = blocks
        .iter()
        .map(|b| b.iter().map(|(_, a)| a.ncols()).sum())
        .collect();
    let available: usize = caps.iter().sum();
    let total = if clip && total > available {
        log::warn!("{total} components requested, {available} available; clipping");
        available
    } else {
        total
    };
    let per_view = allocate(total, &caps)?;
    let mut out = Vec::new();
    for ((name, view_blocks), quota) in view_names.iter().zip(&blocks).zip(per_view) {
        let inner_caps: Vec<usize> = view_blocks.iter().map(|(_, a)| a.ncols()).collect();
        let counts = allocate(quota, &inner_caps)?;
        let mut cols = Vec::new();
        let mut names = Vec::new();
        for ((prefix, a), k) in view_blocks.iter().zip(counts) {
            cols.push(a.slice(s![.., ..k]));
            names.extend((1..=k).map(|j| format!("{prefix}{j}_{name}")));
        }
        if names.is_empty() {
            continue;
        }
        let values = concatenate(Axis(1), &cols).map_err(|e| Error::ShapeMismatch(e.to_string()))?;
        out.push((name.clone(), FeatureMatrix::new(unit_ids.clone(), names, values)?));
    }
    Ok(out)
}
