use thiserror::Error;

/// Errors raised anywhere in the simulation pipeline.
#[derive(Debug, Error)]
pub enum Error {
    #[error("{law} pressure: {what} (value {value})")]
    Domain {
        law: &'static str,
        what: &'static str,
        value: f64,
    },

    #[error("invalid initial datum: {0}")]
    InvalidDatum(String),

    #[error("integrity violation: {0}")]
    Integrity(String),

    #[error("step rejected {halvings} times at t = {time}: spacing barrier crossed at gap {index}")]
    Stiffness {
        index: usize,
        time: f64,
        halvings: u32,
    },

    #[error("mass mismatch: {left} vs {right}")]
    MassMismatch { left: f64, right: f64 },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("configuration error: {0}")]
    Config(String),

    #[error("invariant violated: {0}")]
    Invariant(String),

    #[error("{stage}: {source}")]
    Stage {
        stage: &'static str,
        source: Box<Error>,
    },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

/// Labels errors with the pipeline stage that produced them.
pub(crate) trait StageExt<T> {
    fn stage(self, stage: &'static str) -> Result<T>;
}

impl<T> StageExt<T> for Result<T> {
    fn stage(self, stage: &'static str) -> Result<T> {
        self.map_err(|e| Error::Stage {
            stage,
            source: Box::new(e),
        })
    }
}

impl Error {
    /// Process exit code used by the command line front end.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Stage { source, .. } => source.exit_code(),
            Error::Invariant(_) => 1,
            Error::Config(_) | Error::InvalidArgument(_) | Error::InvalidDatum(_) => 2,
            Error::Io(_) | Error::Csv(_) => 2,
            Error::Domain { .. }
            | Error::Integrity(_)
            | Error::Stiffness { .. }
            | Error::MassMismatch { .. } => 3,
        }
    }
}
