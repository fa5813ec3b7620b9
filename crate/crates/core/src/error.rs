use std::path::PathBuf;

use thiserror::Error;

/// Everything that can go wrong inside the simulator.
#[derive(Debug, Error)]
pub enum Error {
    #[error("config parse error at `{key}`: {message}")]
    Parse { key: String, message: String },

    #[error("invalid config: {0}")]
    Validation(String),

    #[error("I/O error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("CSV error on {path}: {source}")]
    Csv {
        path: PathBuf,
        #[source]
        source: csv::Error,
    },

    #[error("domain error: {0}")]
    Domain(String),

    #[error("numerical failure: {0}")]
    Numeric(String),

    #[error("admission of UE {ue} failed: master AP {master} at capacity (all pilots master-blocked)")]
    MasterAtCapacity { ue: usize, master: usize },

    #[error("UE {0} is already admitted")]
    AlreadyAdmitted(usize),

    #[error("UE {ue} has a degenerate precoder (zero normalization)")]
    DegeneratePrecoder { ue: usize },

    #[error("duality power construction is infeasible: {0}")]
    Infeasible(String),

    #[error("no realizations requested")]
    NoRealizations,

    #[error("empty input: {0}")]
    Empty(&'static str),

    #[error("unknown scenario `{0}`")]
    UnknownScenario(String),

    #[error("scenario `{0}` is full-scale only; pass the full-scale flag")]
    FullScaleRequired(String),

    #[error("setup {setup}, realization {realization}: {source}")]
    AtRealization {
        setup: usize,
        realization: usize,
        #[source]
        source: Box<Error>,
    },

    #[error("setup {setup}: {source}")]
    AtSetup {
        setup: usize,
        #[source]
        source: Box<Error>,
    },
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

impl Error {
    pub(crate) fn at_setup(self, setup: usize) -> Self {
        Error::AtSetup {
            setup,
            source: Box::new(self),
        }
    }

    pub(crate) fn at_realization(self, setup: usize, realization: usize) -> Self {
        Error::AtRealization {
            setup,
            realization,
            source: Box::new(self),
        }
    }
}
