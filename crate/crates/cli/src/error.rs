use thiserror::Error;

pub type Result<T> = std::result::Result<T, CliError>;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("config error: {0}")]
    Config(String),

    #[error("unknown component `{0}`")]
    UnknownComponent(String),

    #[error("{0}")]
    Data(String),

    #[error(transparent)]
    Core(#[from] multiview_core::Error),

    #[error(transparent)]
    Geo(#[from] multiview_geo::GeoError),

    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

impl CliError {
    pub fn io(path: &std::path::Path, source: std::io::Error) -> Self {
        CliError::Io {
            path: path.display().to_string(),
            source,
        }
    }

    /// 2 for configuration problems, 3 for bad input data, 4 for numerical
    /// failures.
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => 2,
            CliError::UnknownComponent(_) | CliError::Data(_) | CliError::Io { .. } => 3,
            CliError::Core(e) => {
                if e.is_data_error() {
                    3
                } else {
                    4
                }
            }
            CliError::Geo(e) => match e {
                multiview_geo::GeoError::Core(c) if !c.is_data_error() => 4,
                _ => 3,
            },
        }
    }
}

impl From<serde_json::Error> for CliError {
    fn from(e: serde_json::Error) -> Self {
        CliError::Data(e.to_string())
    }
}
