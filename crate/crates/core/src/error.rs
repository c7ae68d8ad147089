use std::path::PathBuf;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("line {line}: {message}")]
    Parse { line: u64, message: String },
    #[error("no data rows")]
    NoData,
    #[error("duplicate observation: experiment `{experiment}`, participant `{participant}`, treatment `{treatment}`")]
    Duplicate {
        experiment: String,
        participant: String,
        treatment: String,
    },
    #[error("line {line}: unknown treatment label `{label}`")]
    UnknownTreatment { line: u64, label: String },
    #[error("{0}")]
    Validation(String),
    #[error("participant `{participant}` of experiment `{experiment}` does not appear in the raw data")]
    OrphanParticipant {
        experiment: String,
        participant: String,
    },
    #[error("insufficient data: {0}")]
    InsufficientData(String),
    #[error("domain error: {0}")]
    Domain(String),
    #[error("matrix is not positive definite (pivot {pivot})")]
    NotPositiveDefinite { pivot: usize },
    #[error("design matrix is rank deficient")]
    RankDeficient,
    #[error("optimizer did not converge: {0}")]
    NoConvergence(String),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    /// True for errors caused by the caller's input rather than by a numerical failure.
    pub fn is_user_error(&self) -> bool {
        !matches!(
            self,
            Error::NotPositiveDefinite { .. } | Error::NoConvergence(_)
        )
    }
}
