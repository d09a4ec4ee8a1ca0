use rayon::prelude::*;

use crate::error::{GeoError, Result};
use crate::polygon::{clip_halfplane, convex_pieces, signed_area, ConvexPolygon, Point, Polygon, EPS};
use crate::regions::RegionSet;

#[derive(Debug, Clone, PartialEq)]
pub struct Site {
    pub id: String,
    pub at: Point,
}

impl Site {
    pub fn new(id: impl Into<String>, x: f64, y: f64) -> Self {
        Self {
            id: id.into(),
            at: Point::new(x, y),
        }
    }
}

/// Cell of `site` within one convex piece of the boundary: the piece
/// intersected with every bisector half-plane, nearest sites first.
fn clip_piece(piece: &ConvexPolygon, site: Point, others: &[(f64, Point)]) -> Vec<Point> {
    let mut ring = piece.vertices().to_vec();
    for &(d2, other) in others {
        if ring.len() < 3 {
            return Vec::new();
        }
        let reach2 = ring.iter().map(|v| v.dist2(site)).fold(0.0, f64::max);
        // bisector sits at half the site distance: once that exceeds the
        // farthest vertex no later site can cut
        if d2 / 4.0 > reach2 {
            break;
        }
        // keep x with (x − m)·(o − s) ≤ 0
        let (a, b) = (other.x - site.x, other.y - site.y);
        let c = a * 0.5 * (site.x + other.x) + b * 0.5 * (site.y + other.y);
        ring = clip_halfplane(&ring, a, b, c);
    }
    ring
}

/// Voronoi cells of `sites` clipped to `boundary`, one region per site in
/// input order. Non-convex boundaries are triangulated first, so a cell
/// may consist of several convex parts.
pub fn voronoi(sites: &[Site], boundary: &Polygon) -> Result<RegionSet> {
    if sites.is_empty() {
        return Err(GeoError::Mismatch("no sites".into()));
    }
    if !boundary.holes().is_empty() {
        return Err(GeoError::InvalidPolygon("boundary with holes is not supported".into()));
    }
    let mut order: Vec<usize> = (0..sites.len()).collect();
    order.sort_by(|&a, &b| sites[a].at.x.total_cmp(&sites[b].at.x));
    for (k, &i) in order.iter().enumerate() {
        for &j in &order[k + 1..] {
            if sites[j].at.x - sites[i].at.x > EPS {
                break;
            }
            if sites[i].at.dist2(sites[j].at) <= EPS * EPS {
                return Err(GeoError::DuplicateSites(sites[i].id.clone(), sites[j].id.clone()));
            }
        }
    }
    if let Some(s) = sites.iter().find(|s| !boundary.contains(s.at)) {
        return Err(GeoError::SiteOutsideBoundary(s.id.clone()));
    }
    let pieces = convex_pieces(boundary)?;
    let cells: Vec<Vec<Polygon>> = sites
        .par_iter()
        .enumerate()
        .map(|(i, s)| {
            let mut others: Vec<(f64, Point)> = sites
                .iter()
                .enumerate()
                .filter(|&(j, _)| j != i)
                .map(|(_, o)| (o.at.dist2(s.at), o.at))
                .collect();
            others.sort_by(|a, b| a.0.total_cmp(&b.0));
            pieces
                .iter()
                .map(|p| clip_piece(p, s.at, &others))
                .filter(|r| r.len() >= 3 && signed_area(r) > 0.0)
                .map(Polygon::from_ccw_ring)
                .collect()
        })
        .collect();
    RegionSet::new(sites.iter().map(|s| s.id.clone()).collect(), cells)
}
