use std::collections::HashSet;

use ndarray::Array2;
use rayon::prelude::*;

use multiview_core::matrix::write_labelled_csv;
use multiview_core::FeatureMatrix;

use crate::error::{GeoError, Result};
use crate::polygon::{intersection_area, BBox, ConvexPolygon, Point, Polygon};

/// Named regions, each made of one or more polygon parts.
#[derive(Debug, Clone, PartialEq)]
pub struct RegionSet {
    ids: Vec<String>,
    regions: Vec<Vec<Polygon>>,
}

impl RegionSet {
    pub fn new(ids: Vec<String>, regions: Vec<Vec<Polygon>>) -> Result<Self> {
        if ids.len() != regions.len() {
            return Err(GeoError::Mismatch(format!(
                "{} ids for {} regions",
                ids.len(),
                regions.len()
            )));
        }
        let mut seen = HashSet::new();
        for id in &ids {
            if !seen.insert(id.as_str()) {
                return Err(GeoError::DuplicateId(id.clone()));
            }
        }
        Ok(Self { ids, regions })
    }

    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }

    pub fn ids(&self) -> &[String] {
        &self.ids
    }

    pub fn regions(&self) -> &[Vec<Polygon>] {
        &self.regions
    }

    pub fn area(&self, i: usize) -> f64 {
        self.regions[i].iter().map(Polygon::area).sum()
    }

    /// Index of the first region containing `p`.
    pub fn locate(&self, p: Point) -> Option<usize> {
        self.regions
            .iter()
            .position(|parts| parts.iter().any(|poly| poly.contains(p)))
    }
}

/// Unit-by-site intersection areas.
#[derive(Debug, Clone, PartialEq)]
pub struct OverlapMatrix {
    pub unit_ids: Vec<String>,
    pub site_ids: Vec<String>,
    pub gamma: Array2<f64>,
}

impl OverlapMatrix {
    pub fn write_csv<W: std::io::Write>(&self, w: W) -> Result<()> {
        write_labelled_csv(w, "unit_id", &self.unit_ids, &self.site_ids, &self.gamma)?;
        Ok(())
    }
}

/// `γ_ij = area(unit_i ∩ cell_j)`. Cell parts must be convex.
pub fn overlap_matrix(units: &RegionSet, cells: &RegionSet) -> Result<OverlapMatrix> {
    let convex: Vec<Vec<(ConvexPolygon, BBox)>> = cells
        .regions
        .iter()
        .zip(&cells.ids)
        .map(|(parts, id)| {
            parts
                .iter()
                .map(|p| {
                    let c = ConvexPolygon::try_from(p).map_err(|e| GeoError::Pair {
                        unit: String::new(),
                        site: id.clone(),
                        source: Box::new(e),
                    })?;
                    let b = c.bbox();
                    Ok((c, b))
                })
                .collect::<Result<Vec<_>>>()
        })
        .collect::<Result<_>>()?;
    let rows: Vec<Vec<f64>> = units
        .regions
        .par_iter()
        .map(|parts| {
            convex
                .iter()
                .map(|cell| {
                    let mut total = 0.0;
                    for poly in parts {
                        let pb = poly.bbox();
                        for (c, cb) in cell {
                            if pb.intersects(cb) {
                                total += intersection_area(poly, c);
                            }
                        }
                    }
                    total
                })
                .collect()
        })
        .collect();
    let mut gamma = Array2::zeros((units.len(), cells.len()));
    for (i, row) in rows.into_iter().enumerate() {
        for (j, v) in row.into_iter().enumerate() {
            gamma[[i, j]] = v;
        }
    }
    Ok(OverlapMatrix {
        unit_ids: units.ids.clone(),
        site_ids: cells.ids.clone(),
        gamma,
    })
}

/// Area-weighted average of site feature vectors for every unit:
/// `x_i = γ_iᵀ X / γ_iᵀ 1`. Site rows are matched to Γ columns by id.
pub fn aggregate_features(overlap: &OverlapMatrix, site_features: &FeatureMatrix) -> Result<FeatureMatrix> {
    let sites = site_features.select_units(&overlap.site_ids).map_err(|_| {
        GeoError::Mismatch("site features do not cover every site of the overlap matrix".into())
    })?;
    let x = sites.values();
    let mut out = Array2::zeros((overlap.unit_ids.len(), x.ncols()));
    for (i, row) in overlap.gamma.rows().into_iter().enumerate() {
        let w = row.sum();
        if !(w > 0.0) {
            return Err(GeoError::EmptyOverlap(overlap.unit_ids[i].clone()));
        }
        out.row_mut(i).assign(&(row.dot(x) / w));
    }
    Ok(FeatureMatrix::new(
        overlap.unit_ids.clone(),
        site_features.feature_names().to_vec(),
        out,
    )?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    fn sq(x0: f64, y0: f64, x1: f64, y1: f64) -> Polygon {
        Polygon::rect(x0, y0, x1, y1).unwrap()
    }

    #[test]
    fn units_equal_cells_give_diagonal() {
        let cells = RegionSet::new(
            vec!["a".into(), "b".into()],
            vec![vec![sq(0.0, 0.0, 1.0, 1.0)], vec![sq(1.0, 0.0, 3.0, 1.0)]],
        )
        .unwrap();
        let g = overlap_matrix(&cells, &cells).unwrap();
        assert!((g.gamma[[0, 0]] - 1.0).abs() < 1e-12);
        assert!((g.gamma[[1, 1]] - 2.0).abs() < 1e-12);
        assert!(g.gamma[[0, 1]].abs() < 1e-12 && g.gamma[[1, 0]].abs() < 1e-12);
    }

    #[test]
    fn unit_inside_one_cell() {
        let cells = RegionSet::new(
            vec!["a".into(), "b".into()],
            vec![vec![sq(0.0, 0.0, 1.0, 1.0)], vec![sq(1.0, 0.0, 2.0, 1.0)]],
        )
        .unwrap();
        let units = RegionSet::new(vec!["u".into()], vec![vec![sq(1.2, 0.2, 1.7, 0.6)]]).unwrap();
        let g = overlap_matrix(&units, &cells).unwrap();
        assert_eq!(g.gamma[[0, 0]], 0.0);
        assert!((g.gamma[[0, 1]] - 0.2).abs() < 1e-12);
    }

    #[test]
    fn duplicate_ids_rejected() {
        assert!(matches!(
            RegionSet::new(vec!["a".into(), "a".into()], vec![vec![], vec![]]),
            Err(GeoError::DuplicateId(_))
        ));
    }

    fn overlap(gamma: Array2<f64>) -> OverlapMatrix {
        OverlapMatrix {
            unit_ids: (0..gamma.nrows()).map(|i| format!("u{i}")).collect(),
            site_ids: (0..gamma.ncols()).map(|j| format!("s{j}")).collect(),
            gamma,
        }
    }

    fn sites(values: Array2<f64>) -> FeatureMatrix {
        let ids = (0..values.nrows()).map(|j| format!("s{j}")).collect();
        let names = (0..values.ncols()).map(|k| format!("f{k}")).collect();
        FeatureMatrix::new(ids, names, values).unwrap()
    }

    #[test]
    fn weighted_means() {
        let g = overlap(array![[1.0, 3.0], [0.0, 2.0]]);
        let x = sites(array![[0.0, 5.0], [4.0, 5.0]]);
        let out = aggregate_features(&g, &x).unwrap();
        assert_eq!(out.values(), &array![[3.0, 5.0], [4.0, 5.0]]);
        let scaled = overlap(array![[7.0, 21.0], [0.0, 0.5]]);
        assert_eq!(aggregate_features(&scaled, &x).unwrap().values(), out.values());
    }

    #[test]
    fn sites_matched_by_id() {
        let g = overlap(array![[0.0, 1.0], [1.0, 0.0]]);
        let x = FeatureMatrix::new(
            vec!["s1".into(), "s0".into()],
            vec!["f".into()],
            array![[9.0], [1.0]],
        )
        .unwrap();
        let out = aggregate_features(&g, &x).unwrap();
        assert_eq!(out.values(), &array![[9.0], [1.0]]);
    }

    #[test]
    fn empty_row_is_an_error() {
        let g = overlap(array![[0.0, 0.0], [1.0, 0.0]]);
        let x = sites(array![[1.0], [2.0]]);
        assert!(matches!(aggregate_features(&g, &x), Err(GeoError::EmptyOverlap(id)) if id == "u0"));
    }
}
