//! Bus fullness estimation from rider smartphone sensors.
//!
//! The pipeline classifies each rider's activity (on or off a bus,
//! standing or sitting, phone position) from a short accelerometer + GPS
//! session, aggregates the per-rider predictions for a trip, and converts
//! the count of standing riders into a fullness category with a fitted
//! crowd model. Automatic passenger counter data is audited separately by
//! checking that boardings and alightings balance over each vehicle block.

pub mod apc_audit;
pub mod classifiers;
pub mod crowd_model;
pub mod data_model;
pub mod eval;
pub mod features;
pub mod fleet_sim;
pub mod rng;

mod error;

pub use error::Error;
