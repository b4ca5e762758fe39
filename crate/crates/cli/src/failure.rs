//! Error classes and their exit codes.

use std::fmt;
use std::path::Path;

use crowdsense_core::apc_audit::AuditError;
use crowdsense_core::classifiers::ClassifierError;
use crowdsense_core::crowd_model::CrowdError;
use crowdsense_core::data_model::DataError;
use crowdsense_core::eval::EvalError;
use crowdsense_core::features::FeatureError;
use crowdsense_core::fleet_sim::SimError;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Kind {
    Usage,
    Data,
    Internal,
}

impl Kind {
    pub fn exit_code(self) -> u8 {
        match self {
            Kind::Usage => 1,
            Kind::Data => 2,
            Kind::Internal => 3,
        }
    }
}

#[derive(Debug)]
pub struct Failure {
    pub kind: Kind,
    pub message: String,
}

impl fmt::Display for Failure {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.message)
    }
}

pub type CliResult<T = ()> = Result<T, Failure>;

pub fn usage(message: impl Into<String>) -> Failure {
    Failure {
        kind: Kind::Usage,
        message: message.into(),
    }
}

pub fn data(message: impl Into<String>) -> Failure {
    Failure {
        kind: Kind::Data,
        message: message.into(),
    }
}

pub fn internal(message: impl Into<String>) -> Failure {
    Failure {
        kind: Kind::Internal,
        message: message.into(),
    }
}

/// Prefixes a library error with the file it came from and classifies it.
pub trait Context<T> {
    fn in_file(self, path: &Path) -> CliResult<T>;
}

/// Errors from the core library know whether they are the input's fault.
pub trait Classify: fmt::Display {
    fn kind(&self) -> Kind;
}

impl Classify for DataError {
    fn kind(&self) -> Kind {
        match self {
            DataError::Io(_) => Kind::Internal,
            _ => Kind::Data,
        }
    }
}

impl Classify for ClassifierError {
    fn kind(&self) -> Kind {
        match self {
            ClassifierError::DivergedLoss { .. } => Kind::Internal,
            _ => Kind::Data,
        }
    }
}

impl Classify for SimError {
    fn kind(&self) -> Kind {
        match self {
            SimError::Classifier(e) => e.kind(),
            _ => Kind::Data,
        }
    }
}

macro_rules! data_errors {
    ($($t:ty),*) => {$(
        impl Classify for $t {
            fn kind(&self) -> Kind {
                Kind::Data
            }
        }
    )*};
}

data_errors!(
    AuditError,
    CrowdError,
    EvalError,
    FeatureError,
    serde_json::Error
);

impl<T, E: Classify> Context<T> for Result<T, E> {
    fn in_file(self, path: &Path) -> CliResult<T> {
        self.map_err(|e| Failure {
            kind: e.kind(),
            message: format!("{}: {e}", path.display()),
        })
    }
}
