//! Planar polygons, convex clipping and shoelace areas.

use serde::{Deserialize, Serialize};

use crate::error::{GeoError, Result};

/// Distance within which a point counts as lying on a clipping line.
pub const EPS: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Point {
    pub x: f64,
    pub y: f64,
}

impl Point {
    pub const fn new(x: f64, y: f64) -> Self {
        Self { x, y }
    }

    pub fn dist2(self, o: Point) -> f64 {
        (self.x - o.x).powi(2) + (self.y - o.y).powi(2)
    }
}

/// `(b − a) × (c − a)`; positive when `a, b, c` turn left.
pub fn cross(a: Point, b: Point, c: Point) -> f64 {
    (b.x - a.x) * (c.y - a.y) - (b.y - a.y) * (c.x - a.x)
}

/// Signed shoelace area, positive for counterclockwise rings.
pub fn signed_area(ring: &[Point]) -> f64 {
    let n = ring.len();
    if n < 3 {
        return 0.0;
    }
    let mut s = 0.0;
    for i in 0..n {
        let (a, b) = (ring[i], ring[(i + 1) % n]);
        s += a.x * b.y - b.x * a.y;
    }
    0.5 * s
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BBox {
    pub min: Point,
    pub max: Point,
}

impl BBox {
    pub fn of(points: &[Point]) -> Self {
        let mut b = BBox {
            min: Point::new(f64::INFINITY, f64::INFINITY),
            max: Point::new(f64::NEG_INFINITY, f64::NEG_INFINITY),
        };
        for p in points {
            b.min.x = b.min.x.min(p.x);
            b.min.y = b.min.y.min(p.y);
            b.max.x = b.max.x.max(p.x);
            b.max.y = b.max.y.max(p.y);
        }
        b
    }

    pub fn intersects(&self, o: &BBox) -> bool {
        self.min.x <= o.max.x && o.min.x <= self.max.x && self.min.y <= o.max.y && o.min.y <= self.max.y
    }
}

fn segments_cross(a: Point, b: Point, c: Point, d: Point) -> bool {
    let d1 = cross(c, d, a);
    let d2 = cross(c, d, b);
    let d3 = cross(a, b, c);
    let d4 = cross(a, b, d);
    ((d1 > 0.0 && d2 < 0.0) || (d1 < 0.0 && d2 > 0.0)) && ((d3 > 0.0 && d4 < 0.0) || (d3 < 0.0 && d4 > 0.0))
}

fn clean_ring(mut ring: Vec<Point>) -> Vec<Point> {
    if ring.len() > 1 && ring.first() == ring.last() {
        ring.pop();
    }
    ring.dedup();
    ring
}

/// Outer ring followed by holes. Construction reorients the outer ring
/// counterclockwise and holes clockwise.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Polygon {
    rings: Vec<Vec<Point>>,
}

impl Polygon {
    /// Accepts rings with or without a repeated closing vertex.
    pub fn new(rings: Vec<Vec<Point>>) -> Result<Self> {
        if rings.is_empty() {
            return Err(GeoError::InvalidPolygon("no rings".into()));
        }
        let mut out = Vec::with_capacity(rings.len());
        for (k, ring) in rings.into_iter().enumerate() {
            let mut ring = clean_ring(ring);
            if ring.len() < 3 {
                return Err(GeoError::InvalidPolygon(format!("ring {k} has fewer than 3 vertices")));
            }
            if ring.iter().any(|p| !p.x.is_finite() || !p.y.is_finite()) {
                return Err(GeoError::InvalidPolygon(format!("ring {k} has a non-finite vertex")));
            }
            let area = signed_area(&ring);
            if area == 0.0 {
                return Err(GeoError::InvalidPolygon(format!("ring {k} has zero area")));
            }
            if (k == 0) != (area > 0.0) {
                ring.reverse();
            }
            if !is_simple(&ring) {
                return Err(GeoError::InvalidPolygon(format!("ring {k} self-intersects")));
            }
            out.push(ring);
        }
        Ok(Self { rings: out })
    }

    /// Wraps a counterclockwise ring produced by clipping, skipping
    /// validation.
    pub(crate) fn from_ccw_ring(ring: Vec<Point>) -> Self {
        Self { rings: vec![ring] }
    }

    pub fn rect(x0: f64, y0: f64, x1: f64, y1: f64) -> Result<Self> {
        Self::new(vec![vec![
            Point::new(x0, y0),
            Point::new(x1, y0),
            Point::new(x1, y1),
            Point::new(x0, y1),
        ]])
    }

    pub fn rings(&self) -> &[Vec<Point>] {
        &self.rings
    }

    pub fn outer(&self) -> &[Point] {
        &self.rings[0]
    }

    pub fn holes(&self) -> &[Vec<Point>] {
        &self.rings[1..]
    }

    /// Outer area minus hole areas.
    pub fn area(&self) -> f64 {
        self.rings.iter().map(|r| signed_area(r)).sum()
    }

    pub fn bbox(&self) -> BBox {
        BBox::of(&self.rings[0])
    }

    /// Strictly inside or within [`EPS`] of an edge.
    pub fn contains(&self, p: Point) -> bool {
        let mut inside = false;
        for ring in &self.rings {
            if on_ring(ring, p) {
                return true;
            }
            inside ^= crossing_parity(ring, p);
        }
        inside
    }

    /// Whether the outer ring is convex and there are no holes.
    pub fn is_convex(&self) -> bool {
        self.rings.len() == 1 && ring_is_convex(&self.rings[0])
    }
}

fn is_simple(ring: &[Point]) -> bool {
    let n = ring.len();
    for i in 0..n {
        let (a, b) = (ring[i], ring[(i + 1) % n]);
        for j in (i + 2)..n {
            if i == 0 && j == n - 1 {
                continue;
            }
            let (c, d) = (ring[j], ring[(j + 1) % n]);
            if segments_cross(a, b, c, d) {
                return false;
            }
        }
    }
    true
}

fn ring_is_convex(ring: &[Point]) -> bool {
    let n = ring.len();
    let scale = BBox::of(ring);
    let tol = EPS * ((scale.max.x - scale.min.x) + (scale.max.y - scale.min.y)).max(1.0);
    (0..n).all(|i| cross(ring[i], ring[(i + 1) % n], ring[(i + 2) % n]) >= -tol)
}

fn crossing_parity(ring: &[Point], p: Point) -> bool {
    let n = ring.len();
    let mut inside = false;
    let mut j = n - 1;
    for i in 0..n {
        let (a, b) = (ring[i], ring[j]);
        if (a.y > p.y) != (b.y > p.y) && p.x < (b.x - a.x) * (p.y - a.y) / (b.y - a.y) + a.x {
            inside = !inside;
        }
        j = i;
    }
    inside
}

fn on_ring(ring: &[Point], p: Point) -> bool {
    let n = ring.len();
    (0..n).any(|i| {
        let (a, b) = (ring[i], ring[(i + 1) % n]);
        let len2 = a.dist2(b);
        if len2 == 0.0 {
            return a.dist2(p) <= EPS * EPS;
        }
        let t = (((p.x - a.x) * (b.x - a.x) + (p.y - a.y) * (b.y - a.y)) / len2).clamp(0.0, 1.0);
        let q = Point::new(a.x + t * (b.x - a.x), a.y + t * (b.y - a.y));
        q.dist2(p) <= EPS * EPS
    })
}

/// Counterclockwise convex polygon.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConvexPolygon {
    vertices: Vec<Point>,
}

impl ConvexPolygon {
    pub fn new(vertices: Vec<Point>) -> Result<Self> {
        let p = Polygon::new(vec![vertices])?;
        Self::try_from(&p)
    }

    pub fn vertices(&self) -> &[Point] {
        &self.vertices
    }

    pub fn area(&self) -> f64 {
        signed_area(&self.vertices)
    }

    pub fn bbox(&self) -> BBox {
        BBox::of(&self.vertices)
    }

    pub fn to_polygon(&self) -> Polygon {
        Polygon {
            rings: vec![self.vertices.clone()],
        }
    }

    pub fn contains(&self, p: Point) -> bool {
        self.to_polygon().contains(p)
    }
}

impl TryFrom<&Polygon> for ConvexPolygon {
    type Error = GeoError;

    fn try_from(p: &Polygon) -> Result<Self> {
        if !p.is_convex() {
            return Err(GeoError::InvalidPolygon("polygon is not convex".into()));
        }
        Ok(Self {
            vertices: p.rings[0].clone(),
        })
    }
}

/// Keeps the part of `ring` where `a·x + b·y ≤ c` (one Sutherland–Hodgman
/// stage). Orientation is preserved.
pub fn clip_halfplane(ring: &[Point], a: f64, b: f64, c: f64) -> Vec<Point> {
    let n = ring.len();
    if n == 0 {
        return Vec::new();
    }
    let norm = a.hypot(b);
    let side = |p: Point| (a * p.x + b * p.y - c) / norm;
    let mut out = Vec::with_capacity(n + 2);
    for i in 0..n {
        let (cur, next) = (ring[i], ring[(i + 1) % n]);
        let (sc, sn) = (side(cur), side(next));
        let cur_in = sc <= EPS;
        let next_in = sn <= EPS;
        if cur_in {
            out.push(cur);
        }
        if (cur_in && sn > EPS && sc < -EPS) || (!cur_in && next_in && sn < -EPS) {
            let t = sc / (sc - sn);
            out.push(Point::new(cur.x + t * (next.x - cur.x), cur.y + t * (next.y - cur.y)));
        }
    }
    out
}

/// Clips a ring to a convex polygon edge by edge.
pub fn clip_ring(ring: &[Point], q: &ConvexPolygon) -> Vec<Point> {
    let v = &q.vertices;
    let n = v.len();
    let mut out = ring.to_vec();
    for i in 0..n {
        if out.len() < 3 {
            return Vec::new();
        }
        let (p0, p1) = (v[i], v[(i + 1) % n]);
        // left of p0→p1 is inside: (p1 − p0) × (x − p0) ≥ 0
        let a = p1.y - p0.y;
        let b = -(p1.x - p0.x);
        let c = a * p0.x + b * p0.y;
        out = clip_halfplane(&out, a, b, c);
    }
    out
}

/// Area of `p ∩ q`: every ring of `p` is clipped against `q` and the signed
/// areas are summed, so holes subtract.
pub fn intersection_area(p: &Polygon, q: &ConvexPolygon) -> f64 {
    if !p.bbox().intersects(&q.bbox()) {
        return 0.0;
    }
    let total: f64 = p.rings.iter().map(|r| signed_area(&clip_ring(r, q))).sum();
    total.max(0.0)
}

/// Ear-clipping triangulation of a hole-free polygon.
pub fn triangulate(p: &Polygon) -> Result<Vec<ConvexPolygon>> {
    if !p.holes().is_empty() {
        return Err(GeoError::InvalidPolygon("cannot triangulate a polygon with holes".into()));
    }
    let mut idx: Vec<Point> = p.outer().to_vec();
    let mut out = Vec::with_capacity(idx.len().saturating_sub(2));
    while idx.len() > 3 {
        let n = idx.len();
        let mut cut = None;
        for i in 0..n {
            let (a, b, c) = (idx[(i + n - 1) % n], idx[i], idx[(i + 1) % n]);
            let turn = cross(a, b, c);
            if turn <= 0.0 {
                if turn == 0.0 {
                    // collinear or spike vertex, drop it
                    cut = Some((i, None));
                    break;
                }
                continue;
            }
            let blocked = idx.iter().enumerate().any(|(k, &q)| {
                k != i
                    && k != (i + n - 1) % n
                    && k != (i + 1) % n
                    && q != a
                    && q != b
                    && q != c
                    && cross(a, b, q) >= 0.0
                    && cross(b, c, q) >= 0.0
                    && cross(c, a, q) >= 0.0
            });
            if !blocked {
                cut = Some((i, Some([a, b, c])));
                break;
            }
        }
        match cut {
            Some((i, tri)) => {
                if let Some(t) = tri {
                    out.push(ConvexPolygon { vertices: t.to_vec() });
                }
                idx.remove(i);
            }
            None => return Err(GeoError::InvalidPolygon("triangulation found no ear".into())),
        }
    }
    if signed_area(&idx) > 0.0 {
        out.push(ConvexPolygon { vertices: idx });
    }
    Ok(out)
}

/// Convex pieces covering a hole-free polygon: the polygon itself when it is
/// convex, otherwise a triangulation.
pub fn convex_pieces(p: &Polygon) -> Result<Vec<ConvexPolygon>> {
    if p.is_convex() {
        Ok(vec![ConvexPolygon::try_from(p)?])
    } else {
        triangulate(p)
    }
}
