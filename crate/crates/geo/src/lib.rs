//! Spatial aggregation from point sites to areal units: Voronoi cells
//! clipped to a boundary, unit/cell overlap areas and area-weighted
//! averaging of site features.

pub mod error;
pub mod io;
pub mod polygon;
pub mod regions;
pub mod voronoi;

pub use error::{GeoError, Result};
pub use polygon::{intersection_area, ConvexPolygon, Point, Polygon};
pub use regions::{aggregate_features, overlap_matrix, OverlapMatrix, RegionSet};
pub use voronoi::{voronoi, Site};
