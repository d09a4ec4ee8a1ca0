//! Labelled dense matrices and column preprocessing.
//!
//! A [`FeatureMatrix`] is one view of the data: rows are observational units
//! (identified by opaque string ids), columns are named features.

use std::collections::{HashMap, HashSet};
use std::io::{Read, Write};
use std::path::Path;

use ndarray::{Array1, Array2, ArrayView1, Axis};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Variance below this is treated as zero by [`standardize_columns`].
pub const CONSTANT_VARIANCE_TOL: f64 = 1e-14;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureMatrix {
    unit_ids: Vec<String>,
    feature_names: Vec<String>,
    values: Array2<f64>,
}

impl FeatureMatrix {
    pub fn new(
        unit_ids: Vec<String>,
        feature_names: Vec<String>,
        values: Array2<f64>,
    ) -> Result<Self> {
        let (n, p) = values.dim();
        if unit_ids.len() != n {
            return Err(Error::ShapeMismatch(format!(
                "{} unit ids for {} rows",
                unit_ids.len(),
                n
            )));
        }
        if feature_names.len() != p {
            return Err(Error::ShapeMismatch(format!(
                "{} feature names for {} columns",
                feature_names.len(),
                p
            )));
        }
        if n < 2 || p < 1 {
            return Err(Error::InvalidInput(format!(
                "feature matrix must be at least 2x1, got {n}x{p}"
            )));
        }
        check_unique(&unit_ids)?;
        check_unique(&feature_names)?;
        if let Some(((row, col), _)) = values.indexed_iter().find(|(_, v)| !v.is_finite()) {
            return Err(Error::NonFinite { row, col });
        }
        Ok(Self {
            unit_ids,
            feature_names,
            values,
        })
    }

    /// Builds a matrix with generated ids `u0..` and names `prefix1..`.
    pub fn from_array(values: Array2<f64>, prefix: &str) -> Result<Self> {
        let (n, p) = values.dim();
        let ids = (0..n).map(|i| format!("u{i}")).collect();
        let names = (1..=p).map(|j| format!("{prefix}{j}")).collect();
        Self::new(ids, names, values)
    }

    pub fn unit_ids(&self) -> &[String] {
        &self.unit_ids
    }

    pub fn feature_names(&self) -> &[String] {
        &self.feature_names
    }

    pub fn values(&self) -> &Array2<f64> {
        &self.values
    }

    pub fn into_values(self) -> Array2<f64> {
        self.values
    }

    pub fn nrows(&self) -> usize {
        self.values.nrows()
    }

    pub fn ncols(&self) -> usize {
        self.values.ncols()
    }

    /// Same labels, new values. Shape must match.
    pub fn with_values(&self, values: Array2<f64>) -> Result<Self> {
        Self::new(self.unit_ids.clone(), self.feature_names.clone(), values)
    }

    /// Rows for the given unit ids, in that order.
    pub fn select_units(&self, ids: &[String]) -> Result<Self> {
        let index: HashMap<&str, usize> = self
            .unit_ids
            .iter()
            .enumerate()
            .map(|(i, id)| (id.as_str(), i))
            .collect();
        let mut rows = Vec::with_capacity(ids.len());
        let mut missing = Vec::new();
        for id in ids {
            match index.get(id.as_str()) {
                Some(&i) => rows.push(i),
                None => missing.push(id.clone()),
            }
        }
        if !missing.is_empty() {
            return Err(Error::UnitMismatch(missing));
        }
        let values = self.values.select(Axis(0), &rows);
        Self::new(ids.to_vec(), self.feature_names.clone(), values)
    }

    /// Columns `start..end`.
    pub fn slice_columns(&self, start: usize, end: usize) -> Result<Self> {
        if start >= end || end > self.ncols() {
            return Err(Error::InvalidInput(format!(
                "column range {start}..{end} out of bounds for {} columns",
                self.ncols()
            )));
        }
        Self::new(
            self.unit_ids.clone(),
            self.feature_names[start..end].to_vec(),
            self.values.slice(ndarray::s![.., start..end]).to_owned(),
        )
    }

    pub fn read_csv<R: Read>(reader: R) -> Result<Self> {
        let (label, m) = Self::read_labelled_csv(reader)?;
        if label != "unit_id" {
            return Err(Error::Parse(
                "matrix CSV must start with a `unit_id` column".into(),
            ));
        }
        Ok(m)
    }

    /// Like [`read_csv`](Self::read_csv) but accepts any name for the row
    /// label column and returns it.
    pub fn read_labelled_csv<R: Read>(reader: R) -> Result<(String, Self)> {
        let mut rdr = csv::ReaderBuilder::new()
            .has_headers(true)
            .trim(csv::Trim::All)
            .from_reader(reader);
        let headers = rdr.headers()?.clone();
        if headers.is_empty() || headers[0].is_empty() {
            return Err(Error::Parse("matrix CSV has no row label column".into()));
        }
        let label = headers[0].to_owned();
        let names: Vec<String> = headers.iter().skip(1).map(str::to_owned).collect();
        let p = names.len();
        let mut ids = Vec::new();
        let mut data = Vec::new();
        for (line, rec) in rdr.records().enumerate() {
            let rec = rec?;
            if rec.len() != p + 1 {
                return Err(Error::Parse(format!(
                    "row {} has {} fields, expected {}",
                    line + 2,
                    rec.len(),
                    p + 1
                )));
            }
            ids.push(rec[0].to_owned());
            for (j, field) in rec.iter().skip(1).enumerate() {
                let v: f64 = field.parse().map_err(|_| {
                    Error::Parse(format!(
                        "row {} column `{}`: cannot parse `{field}` as a number",
                        line + 2,
                        names[j]
                    ))
                })?;
                data.push(v);
            }
        }
        let n = ids.len();
        let values = Array2::from_shape_vec((n, p), data)
            .map_err(|e| Error::Parse(e.to_string()))?;
        Ok((label, Self::new(ids, names, values)?))
    }

    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        write_labelled_csv(
            writer,
            "unit_id",
            &self.unit_ids,
            &self.feature_names,
            &self.values,
        )
    }

    pub fn from_path(path: impl AsRef<Path>) -> Result<Self> {
        let file = std::fs::File::open(path.as_ref())?;
        Self::read_csv(std::io::BufReader::new(file))
    }

    pub fn to_path(&self, path: impl AsRef<Path>) -> Result<()> {
        let file = std::fs::File::create(path.as_ref())?;
        self.write_csv(std::io::BufWriter::new(file))
    }
}

fn check_unique(items: &[String]) -> Result<()> {
    let mut seen = HashSet::with_capacity(items.len());
    for it in items {
        if !seen.insert(it.as_str()) {
            return Err(Error::DuplicateId(it.clone()));
        }
    }
    Ok(())
}

/// Formats a float so that parsing it back yields the same bits.
pub fn fmt_f64(v: f64) -> String {
    format!("{v:?}")
}

/// Writes a matrix with a label column and named value columns.
pub fn write_labelled_csv<W: Write>(
    writer: W,
    label_header: &str,
    labels: &[String],
    columns: &[String],
    values: &Array2<f64>,
) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    let mut header = Vec::with_capacity(columns.len() + 1);
    header.push(label_header.to_owned());
    header.extend(columns.iter().cloned());
    w.write_record(&header)?;
    for (label, row) in labels.iter().zip(values.rows()) {
        let mut rec = Vec::with_capacity(row.len() + 1);
        rec.push(label.clone());
        rec.extend(row.iter().map(|&v| fmt_f64(v)));
        w.write_record(&rec)?;
    }
    w.flush()?;
    Ok(())
}

/// Empirical quantile of sorted data by linear interpolation at position
/// `q * (n - 1)` (zero-indexed).
pub fn quantile_sorted(sorted: &[f64], q: f64) -> f64 {
    assert!(!sorted.is_empty(), "quantile of empty data");
    let q = q.clamp(0.0, 1.0);
    let pos = q * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    let frac = pos - lo as f64;
    if lo == hi {
        sorted[lo]
    } else {
        sorted[lo] + frac * (sorted[hi] - sorted[lo])
    }
}

/// Quantile of unsorted data; see [`quantile_sorted`].
pub fn quantile(data: &[f64], q: f64) -> f64 {
    let mut v = data.to_vec();
    v.sort_by(f64::total_cmp);
    quantile_sorted(&v, q)
}

pub fn column_means(values: &Array2<f64>) -> Array1<f64> {
    values
        .mean_axis(Axis(0))
        .unwrap_or_else(|| Array1::zeros(values.ncols()))
}

/// Sample variance (divisor n - 1) of a vector.
pub fn sample_variance(x: ArrayView1<f64>) -> f64 {
    let n = x.len();
    if n < 2 {
        return 0.0;
    }
    let mean = x.sum() / n as f64;
    x.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1) as f64
}

pub fn center_columns(m: &FeatureMatrix) -> FeatureMatrix {
    let means = column_means(&m.values);
    let values = &m.values - &means.insert_axis(Axis(0));
    FeatureMatrix {
        unit_ids: m.unit_ids.clone(),
        feature_names: m.feature_names.clone(),
        values,
    }
}

/// Centers each column and scales it to unit sample variance.
pub fn standardize_columns(m: &FeatureMatrix) -> Result<FeatureMatrix> {
    let mut values = m.values.clone();
    for (j, mut col) in values.columns_mut().into_iter().enumerate() {
        let var = sample_variance(col.view());
        if var < CONSTANT_VARIANCE_TOL {
            return Err(Error::ConstantColumn(m.feature_names[j].clone()));
        }
        let mean = col.sum() / col.len() as f64;
        let sd = var.sqrt();
        col.mapv_inplace(|v| (v - mean) / sd);
    }
    Ok(FeatureMatrix {
        unit_ids: m.unit_ids.clone(),
        feature_names: m.feature_names.clone(),
        values,
    })
}

/// Clamps each column to its `[lower_q, upper_q]` empirical quantiles.
pub fn winsorize_columns(m: &FeatureMatrix, lower_q: f64, upper_q: f64) -> Result<FeatureMatrix> {
    if !(0.0..=1.0).contains(&lower_q) || !(0.0..=1.0).contains(&upper_q) || lower_q >= upper_q {
        return Err(Error::InvalidInput(format!(
            "winsorization quantiles must satisfy 0 <= lower < upper <= 1, got ({lower_q}, {upper_q})"
        )));
    }
    let mut values = m.values.clone();
    for mut col in values.columns_mut() {
        let mut sorted = col.to_vec();
        sorted.sort_by(f64::total_cmp);
        let lo = quantile_sorted(&sorted, lower_q);
        let hi = quantile_sorted(&sorted, upper_q);
        col.mapv_inplace(|v| v.clamp(lo, hi));
    }
    Ok(FeatureMatrix {
        unit_ids: m.unit_ids.clone(),
        feature_names: m.feature_names.clone(),
        values,
    })
}

/// Restricts views to the units present in all of them, ordered as in the
/// first view. Returns the aligned views and the dropped ids (sorted).
pub fn intersect_units(views: &[FeatureMatrix]) -> Result<(Vec<FeatureMatrix>, Vec<String>)> {
    let Some(first) = views.first() else {
        return Ok((Vec::new(), Vec::new()));
    };
    let sets: Vec<HashSet<&str>> = views
        .iter()
        .map(|v| v.unit_ids.iter().map(String::as_str).collect())
        .collect();
    let common: Vec<String> = first
        .unit_ids
        .iter()
        .filter(|id| sets.iter().all(|s| s.contains(id.as_str())))
        .cloned()
        .collect();
    let common_set: HashSet<&str> = common.iter().map(String::as_str).collect();
    let mut dropped: Vec<String> = views
        .iter()
        .flat_map(|v| v.unit_ids.iter())
        .filter(|id| !common_set.contains(id.as_str()))
        .cloned()
        .collect::<HashSet<_>>()
        .into_iter()
        .collect();
    dropped.sort();
    let aligned = views
        .iter()
        .map(|v| v.select_units(&common))
        .collect::<Result<Vec<_>>>()?;
    Ok((aligned, dropped))
}

/// Fails with `UnitMismatch` unless all views list the same ids in the same
/// order.
pub fn check_same_units(views: &[FeatureMatrix]) -> Result<()> {
    let Some(first) = views.first() else {
        return Ok(());
    };
    for v in &views[1..] {
        if v.unit_ids != first.unit_ids {
            let offending: Vec<String> = first
                .unit_ids
                .iter()
                .zip(v.unit_ids.iter())
                .filter(|(a, b)| a != b)
                .flat_map(|(a, b)| [a.clone(), b.clone()])
                .chain(
                    first
                        .unit_ids
                        .iter()
                        .skip(v.unit_ids.len())
                        .chain(v.unit_ids.iter().skip(first.unit_ids.len()))
                        .cloned(),
                )
                .collect();
            return Err(Error::UnitMismatch(offending));
        }
    }
    Ok(())
}

/// Reads a two-column `unit_id,score` CSV.
pub fn read_scores_csv<R: Read>(reader: R) -> Result<Vec<(String, f64)>> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::All)
        .from_reader(reader);
    let mut out = Vec::new();
    for (line, rec) in rdr.records().enumerate() {
        let rec = rec?;
        if rec.len() < 2 {
            return Err(Error::Parse(format!("row {}: expected unit_id,score", line + 2)));
        }
        let v: f64 = rec[1]
            .parse()
            .map_err(|_| Error::Parse(format!("row {}: bad score `{}`", line + 2, &rec[1])))?;
        if !v.is_finite() {
            return Err(Error::NonFinite { row: line, col: 1 });
        }
        out.push((rec[0].to_owned(), v));
    }
    Ok(out)
}

/// Looks up a score for every id, failing with the list of missing ids.
pub fn align_scores(scores: &[(String, f64)], ids: &[String]) -> Result<Vec<f64>> {
    let map: HashMap<&str, f64> = scores.iter().map(|(k, v)| (k.as_str(), *v)).collect();
    let mut missing = Vec::new();
    let out = ids
        .iter()
        .map(|id| {
            map.get(id.as_str()).copied().unwrap_or_else(|| {
                missing.push(id.clone());
                f64::NAN
            })
        })
        .collect();
    if missing.is_empty() {
        Ok(out)
    } else {
        Err(Error::UnitMismatch(missing))
    }
}
