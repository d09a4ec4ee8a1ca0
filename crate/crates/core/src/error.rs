use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("non-finite value at row {row}, column {col}")]
    NonFinite { row: usize, col: usize },

    #[error("duplicate identifier `{0}`")]
    DuplicateId(String),

    #[error("column `{0}` has (near-)zero variance")]
    ConstantColumn(String),

    #[error("requested rank {requested} exceeds the maximum {max}")]
    RankTooLarge { requested: usize, max: usize },

    #[error("view {view} has numerical rank {rank}, below the requested initial rank {requested}")]
    DegenerateView {
        view: usize,
        rank: usize,
        requested: usize,
    },

    #[error("unit identifiers differ between views: {0:?}")]
    UnitMismatch(Vec<String>),

    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),

    #[error("length mismatch: expected {expected}, got {got}")]
    LengthMismatch { expected: usize, got: usize },

    #[error("matrix is not column-orthonormal (max deviation {0:e})")]
    NotOrthonormal(f64),

    #[error("column `{name}` is not standardized (squared norm {found}, expected {expected})")]
    NotStandardized {
        name: String,
        found: f64,
        expected: f64,
    },

    #[error("synthetic specification infeasible: {0}")]
    SpecInfeasible(String),

    #[error("cross-validation grid is empty")]
    GridEmpty,

    #[error("insufficient components: requested {requested}, available {available}")]
    InsufficientComponents { requested: usize, available: usize },

    #[error("too much background: no acceptable patch after {attempts} attempts")]
    TooMuchBackground { attempts: usize },

    #[error("empty patch set")]
    EmptyPatchSet,

    #[error("numerical failure: {0}")]
    Numerical(String),

    #[error("parse error: {0}")]
    Parse(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    /// Errors caused by malformed or inconsistent input data, as opposed to
    /// numerical breakdown.
    pub fn is_data_error(&self) -> bool {
        !matches!(self, Error::Numerical(_) | Error::DegenerateView { .. })
    }
}
