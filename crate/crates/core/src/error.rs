use serde::{Deserialize, Serialize};

use crate::corpus::CorpusError;
use crate::eval::EvalError;
use crate::hintgen::{CacheError, HintgenError, ProviderError};
use crate::hints::HintError;
use crate::index::IndexError;
use crate::rerank::{BackendError, RerankError};
use crate::retrieval::RetrievalError;

/// Coarse error kind; decides the CLI exit status.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ErrorClass {
    /// Bad arguments or configuration.
    Usage,
    /// Input files or records that fail to load or validate.
    Data,
    /// A provider or scorer that failed or broke protocol.
    Backend,
}

impl ErrorClass {
    pub fn exit_code(self) -> i32 {
        match self {
            ErrorClass::Usage => 2,
            ErrorClass::Data => 3,
            ErrorClass::Backend => 4,
        }
    }
}

pub trait Classify {
    fn class(&self) -> ErrorClass;
}

impl Classify for CorpusError {
    fn class(&self) -> ErrorClass {
        match self {
            CorpusError::InvalidRatios(_) => ErrorClass::Usage,
            _ => ErrorClass::Data,
        }
    }
}

impl Classify for IndexError {
    fn class(&self) -> ErrorClass {
        match self {
            IndexError::InvalidArgument(_) | IndexError::DimMismatch { .. } => ErrorClass::Usage,
            _ => ErrorClass::Data,
        }
    }
}

impl Classify for HintError {
    fn class(&self) -> ErrorClass {
        ErrorClass::Data
    }
}

impl Classify for ProviderError {
    fn class(&self) -> ErrorClass {
        match self {
            ProviderError::Config(_) => ErrorClass::Usage,
            _ => ErrorClass::Backend,
        }
    }
}

impl Classify for CacheError {
    fn class(&self) -> ErrorClass {
        ErrorClass::Data
    }
}

impl Classify for HintgenError {
    fn class(&self) -> ErrorClass {
        match self {
            HintgenError::Provider(e) => e.class(),
            HintgenError::Cache(e) => e.class(),
            HintgenError::InvalidArgument(_) | HintgenError::Template(_) => ErrorClass::Usage,
            _ => ErrorClass::Backend,
        }
    }
}

impl Classify for RetrievalError {
    fn class(&self) -> ErrorClass {
        match self {
            RetrievalError::Index(e) => e.class(),
            RetrievalError::InvalidConfig(_) => ErrorClass::Usage,
            _ => ErrorClass::Data,
        }
    }
}

impl Classify for BackendError {
    fn class(&self) -> ErrorClass {
        ErrorClass::Backend
    }
}

impl Classify for RerankError {
    fn class(&self) -> ErrorClass {
        match self {
            RerankError::InvalidArgument(_) => ErrorClass::Usage,
            RerankError::UnknownProduct(_) | RerankError::Enrich(_) => ErrorClass::Data,
            _ => ErrorClass::Backend,
        }
    }
}

impl Classify for EvalError {
    fn class(&self) -> ErrorClass {
        match self {
            EvalError::InvalidArgument(_) => ErrorClass::Usage,
            _ => ErrorClass::Data,
        }
    }
}
