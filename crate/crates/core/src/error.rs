use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("non-finite value in {0}")]
    NonFinite(&'static str),

    #[error("degenerate labels: both classes must be present")]
    DegenerateLabels,

    #[error("empty dataset")]
    EmptyDataset,

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("locally constant model: every sampled neighbor has the same label")]
    LocallyConstant,

    #[error("surrogate disagrees with the model at the query point")]
    SurrogateMismatch,

    #[error("diverged after {} iterations", trace.len().saturating_sub(1))]
    Diverged { trace: Vec<f64> },

    #[error("no recourse in action set")]
    NoRecourse,

    #[error("comparison graph over features is disconnected")]
    DisconnectedComparisons,

    #[error("covariance is not symmetric positive-definite")]
    NotPositiveDefinite,

    #[error("degenerate projection: zero-variance direction")]
    DegenerateProjection,

    #[error("no favorable category")]
    NoFavorableCategory,

    #[error("no recourses")]
    NoRecourses,

    #[error("missing column `{0}`")]
    MissingColumn(String),

    #[error("row {row}: cannot parse `{value}` in column `{column}`")]
    Parse {
        row: usize,
        column: String,
        value: String,
    },

    #[error("empty file")]
    EmptyFile,

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl Error {
    /// Whether this error comes from a numerical procedure rather than bad
    /// inputs. The CLI maps these to a distinct exit code.
    pub fn is_numerical(&self) -> bool {
        matches!(
            self,
            Error::Diverged { .. }
                | Error::LocallyConstant
                | Error::SurrogateMismatch
                | Error::DegenerateProjection
                | Error::NonFinite(_)
        )
    }
}

pub(crate) fn check_dim(expected: usize, got: usize) -> Result<()> {
    if expected != got {
        return Err(Error::DimensionMismatch { expected, got });
    }
    Ok(())
}

pub(crate) fn check_finite(values: &[f64], what: &'static str) -> Result<()> {
    if values.iter().all(|v| v.is_finite()) {
        Ok(())
    } else {
        Err(Error::NonFinite(what))
    }
}
