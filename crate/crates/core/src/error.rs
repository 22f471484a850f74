use thiserror::Error;

use crate::registry::RiskModelDescriptor;
use crate::scheduler::Lifecycle;
use crate::types::{ContentId, ModelId};

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("model `{}` is already registered", .existing.model_id)]
    DuplicateModel { existing: Box<RiskModelDescriptor> },

    #[error("unknown model `{0}`")]
    UnknownModel(ModelId),

    #[error("{0} must not be empty")]
    EmptyInput(&'static str),

    #[error("invalid {name}: {reason}")]
    InvalidParameter { name: &'static str, reason: String },

    #[error("invalid bin layout: {0}")]
    InvalidBinLayout(String),

    #[error("severity must be a finite non-negative number, got {0}")]
    NegativeSeverity(f64),

    #[error("hawkes process is not subcritical (branching ratio {branching_ratio})")]
    Supercritical { branching_ratio: f64 },

    #[error("unknown content `{0}`")]
    UnknownContent(ContentId),

    #[error("content `{id}` is {state:?}, not under review")]
    NotUnderReview { id: ContentId, state: Lifecycle },
}

impl Error {
    pub(crate) fn invalid(name: &'static str, reason: impl Into<String>) -> Self {
        Error::InvalidParameter {
            name,
            reason: reason.into(),
        }
    }
}
