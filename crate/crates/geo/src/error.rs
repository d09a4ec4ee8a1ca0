use thiserror::Error;

#[derive(Debug, Error)]
pub enum GeoError {
    #[error("invalid polygon: {0}")]
    InvalidPolygon(String),
    #[error("sites {0} and {1} coincide")]
    DuplicateSites(String, String),
    #[error("site {0} lies outside the boundary")]
    SiteOutsideBoundary(String),
    #[error("unit {0} overlaps no cell")]
    EmptyOverlap(String),
    #[error("duplicate region id {0}")]
    DuplicateId(String),
    #[error("unit {unit}, site {site}: {source}")]
    Pair {
        unit: String,
        site: String,
        #[source]
        source: Box<GeoError>,
    },
    #[error("{0}")]
    Parse(String),
    #[error("{0}")]
    Mismatch(String),
    #[error(transparent)]
    Core(#[from] multiview_core::Error),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl GeoError {
    /// Whether the error stems from the input data rather than the
    /// environment.
    pub fn is_data_error(&self) -> bool {
        match self {
            GeoError::Io(_) => false,
            GeoError::Core(e) => e.is_data_error(),
            GeoError::Pair { source, .. } => source.is_data_error(),
            _ => true,
        }
    }
}

pub type Result<T> = std::result::Result<T, GeoError>;
