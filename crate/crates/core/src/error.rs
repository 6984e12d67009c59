use std::fmt;
use std::path::PathBuf;

use crate::twopass::FrameRecord;

pub type Result<T> = std::result::Result<T, Error>;

/// Pipeline stage names used to label failures of a full experiment run.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Stage {
    Anchor,
    Budget,
    ModelFit,
    Allocate,
    PreEncode,
    SecondPass,
    Report,
}

impl fmt::Display for Stage {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let name = match self {
            Stage::Anchor => "anchor",
            Stage::Budget => "budget",
            Stage::ModelFit => "model-fit",
            Stage::Allocate => "allocate",
            Stage::PreEncode => "pre-encode",
            Stage::SecondPass => "second-pass",
            Stage::Report => "report",
        };
        f.write_str(name)
    }
}

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("domain error: {0}")]
    Domain(String),

    #[error("fit error: {0}")]
    Fit(String),

    #[error("R-Q model with zero exponent cannot be inverted")]
    NotInvertible,

    #[error(
    "budget error: total target {total} bits does not exceed constant substreams (occupancy {occ} + patch {patch} bits)"
  )]
    Budget { total: f64, occ: f64, patch: f64 },

    #[error("invalid input: {0}")]
    Invalid(String),

    #[error("metric error: {0}")]
    Metric(String),

    #[error("line {line}: {msg}")]
    Parse { line: u64, msg: String },

    #[error("config error: {0}")]
    Config(String),

    #[error("{}: {source}", path.display())]
    Io { path: PathBuf, source: std::io::Error },

    #[error("{stage} stage failed: {source}")]
    Stage { stage: Stage, source: Box<Error> },

    #[error("second pass aborted after {} frames: {source}", ledger.len())]
    SecondPass {
        ledger: Vec<FrameRecord>,
        source: Box<Error>,
    },
}

impl Error {
    pub fn at(stage: Stage) -> impl FnOnce(Error) -> Error {
        move |e| Error::Stage {
            stage,
            source: Box::new(e),
        }
    }

    pub fn io(path: impl Into<PathBuf>) -> impl FnOnce(std::io::Error) -> Error {
        let path = path.into();
        move |source| Error::Io { path, source }
    }

    /// The stage that failed, if this error came out of a pipeline run.
    pub fn stage(&self) -> Option<Stage> {
        match self {
            Error::Stage { stage, .. } => Some(*stage),
            _ => None,
        }
    }
}
