use thiserror::Error;

use crate::apc_audit::AuditError;
use crate::classifiers::ClassifierError;
use crate::crowd_model::CrowdError;
use crate::data_model::DataError;
use crate::eval::EvalError;
use crate::features::FeatureError;
use crate::fleet_sim::SimError;

/// Any error produced by the library.
#[derive(Debug, Error)]
pub enum Error {
    #[error(transparent)]
    Data(#[from] DataError),
    #[error(transparent)]
    Feature(#[from] FeatureError),
    #[error(transparent)]
    Classifier(#[from] ClassifierError),
    #[error(transparent)]
    Eval(#[from] EvalError),
    #[error(transparent)]
    Audit(#[from] AuditError),
    #[error(transparent)]
    Crowd(#[from] CrowdError),
    #[error(transparent)]
    Sim(#[from] SimError),
}
