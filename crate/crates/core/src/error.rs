use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    /// Method-of-moments fit could not produce valid Beta shapes.
    #[error("beta estimation infeasible: {0}")]
    EstimationInfeasible(String),

    /// An argument fell outside the domain of a numerical routine.
    #[error("domain error: {0}")]
    Domain(String),

    #[error("invalid study design: {0}")]
    InvalidDesign(String),

    #[error("invalid series {subject}: {reason}")]
    InvalidSeries { subject: String, reason: String },

    /// A rank-sum test had an empty sample after filtering undefined entries.
    #[error("test infeasible: {0}")]
    TestInfeasible(String),

    #[error("subject {subject}: {source}")]
    Subject {
        subject: String,
        #[source]
        source: Box<Error>,
    },

    #[error("parse error at {location}: {reason}")]
    Parse { location: String, reason: String },

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    pub(crate) fn for_subject(self, subject: &str) -> Self {
        Error::Subject {
            subject: subject.to_string(),
            source: Box::new(self),
        }
    }
}
