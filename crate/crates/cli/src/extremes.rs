//! Units with the most positive and most negative scores on a component.

use std::io::Write;

use multiview_core::matrix::fmt_f64;
use multiview_core::FeatureMatrix;

use crate::error::{CliError, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct Extremes {
    pub component: String,
    /// Highest scores first.
    pub top: Vec<(String, f64)>,
    /// Lowest scores first.
    pub bottom: Vec<(String, f64)>,
}

/// Top-k and bottom-k units of `component`. Equal scores are ordered by
/// unit id (lexicographic, ascending) in both lists; `k` is clipped to the
/// number of units.
pub fn extremes(scores: &FeatureMatrix, component: &str, k: usize) -> Result<Extremes> {
    let col = scores
        .feature_names()
        .iter()
        .position(|c| c == component)
        .ok_or_else(|| CliError::UnknownComponent(component.to_owned()))?;
    let mut rows: Vec<(String, f64)> = scores
        .unit_ids()
        .iter()
        .cloned()
        .zip(scores.values().column(col).iter().copied())
        .collect();
    let k = k.min(rows.len());
    rows.sort_by(|a, b| b.1.total_cmp(&a.1).then_with(|| a.0.cmp(&b.0)));
    let top = rows[..k].to_vec();
    rows.sort_by(|a, b| a.1.total_cmp(&b.1).then_with(|| a.0.cmp(&b.0)));
    let bottom = rows[..k].to_vec();
    Ok(Extremes {
        component: component.to_owned(),
        top,
        bottom,
    })
}

pub fn write_extremes<W: Write>(w: W, all: &[Extremes]) -> Result<()> {
    let mut out = csv::Writer::from_writer(w);
    let err = |e: csv::Error| CliError::Core(e.into());
    out.write_record(["component", "side", "rank", "unit_id", "score"]).map_err(err)?;
    for e in all {
        for (side, list) in [("top", &e.top), ("bottom", &e.bottom)] {
            for (i, (id, s)) in list.iter().enumerate() {
                out.write_record([e.component.as_str(), side, &(i + 1).to_string(), id, &fmt_f64(*s)])
                    .map_err(err)?;
            }
        }
    }
    out.flush().map_err(|e| CliError::Core(e.into()))
}
