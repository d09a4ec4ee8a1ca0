//! GeoJSON regions, site CSVs.

use std::path::Path;
use std::str::FromStr;

use geojson::{GeoJson, Value};
use serde::Deserialize;

use crate::error::{GeoError, Result};
use crate::polygon::{Point, Polygon};
use crate::regions::RegionSet;
use crate::voronoi::Site;

fn ring(coords: &[Vec<f64>]) -> Result<Vec<Point>> {
    coords
        .iter()
        .map(|c| match c.as_slice() {
            [x, y, ..] => Ok(Point::new(*x, *y)),
            _ => Err(GeoError::Parse("coordinate with fewer than two values".into())),
        })
        .collect()
}

fn polygon(rings: &[Vec<Vec<f64>>]) -> Result<Polygon> {
    Polygon::new(rings.iter().map(|r| ring(r)).collect::<Result<_>>()?)
}

fn id_string(v: &serde_json::Value) -> Option<String> {
    match v {
        serde_json::Value::String(s) => Some(s.clone()),
        serde_json::Value::Number(n) => Some(n.to_string()),
        _ => None,
    }
}

/// Regions from a FeatureCollection of Polygon or MultiPolygon features. The
/// id comes from the `id` property, falling back to the feature id.
pub fn parse_regions(text: &str) -> Result<RegionSet> {
    let gj = GeoJson::from_str(text).map_err(|e| GeoError::Parse(e.to_string()))?;
    let GeoJson::FeatureCollection(fc) = gj else {
        return Err(GeoError::Parse("expected a FeatureCollection".into()));
    };
    let mut ids = Vec::with_capacity(fc.features.len());
    let mut regions = Vec::with_capacity(fc.features.len());
    for (k, f) in fc.features.iter().enumerate() {
        let id = f
            .property("id")
            .and_then(id_string)
            .or_else(|| match &f.id {
                Some(geojson::feature::Id::String(s)) => Some(s.clone()),
                Some(geojson::feature::Id::Number(n)) => Some(n.to_string()),
                None => None,
            })
            .ok_or_else(|| GeoError::Parse(format!("feature {k} has no id")))?;
        let geom = f
            .geometry
            .as_ref()
            .ok_or_else(|| GeoError::Parse(format!("feature {id} has no geometry")))?;
        let parts = match &geom.value {
            Value::Polygon(rings) => vec![polygon(rings)?],
            Value::MultiPolygon(polys) => polys.iter().map(|p| polygon(p)).collect::<Result<_>>()?,
            _ => return Err(GeoError::Parse(format!("feature {id} is not a polygon"))),
        };
        ids.push(id);
        regions.push(parts);
    }
    RegionSet::new(ids, regions)
}

pub fn read_regions(path: &Path) -> Result<RegionSet> {
    parse_regions(&std::fs::read_to_string(path)?)
        .map_err(|e| GeoError::Parse(format!("{}: {e}", path.display())))
}

/// A single-part boundary polygon from a GeoJSON file.
pub fn read_boundary(path: &Path) -> Result<Polygon> {
    let set = read_regions(path)?;
    match set.regions() {
        [parts] if parts.len() == 1 => Ok(parts[0].clone()),
        _ => Err(GeoError::InvalidPolygon(format!(
            "{}: boundary must be exactly one single-part polygon",
            path.display()
        ))),
    }
}

#[derive(Deserialize)]
struct SiteRow {
    id: String,
    x: f64,
    y: f64,
}

/// Sites from CSV with header `id,x,y`.
pub fn read_sites<R: std::io::Read>(r: R) -> Result<Vec<Site>> {
    let mut rdr = csv::Reader::from_reader(r);
    rdr.deserialize::<SiteRow>()
        .map(|row| {
            let row = row?;
            Ok(Site::new(row.id, row.x, row.y))
        })
        .collect()
}
