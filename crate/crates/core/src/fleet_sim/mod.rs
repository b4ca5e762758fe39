//! Deterministic stand-in for a fleet of buses and their riders: per-class
//! synthetic sensor sessions, trip assignment by GPS, per-trip aggregation
//! and comparison of fullness estimates against the simulated truth.

mod geo;
mod scenario;
mod signal;

pub use geo::{
    assign_trip, haversine_m, LatLon, VehiclePath, Waypoint, DEFAULT_RADIUS_M, EARTH_RADIUS_M,
    METERS_PER_DEGREE,
};
pub use scenario::{
    aggregate_trip, generate_observations, generate_scenario, run_scenario, standing_for,
    AggregateOptions, DetectedCounts, ObservationConfig, RunOptions, ScenarioConfig,
    ScenarioReport, ScenarioSummary, SimRider, SimScenario, SimVehicle, TripAggregate,
    TripFullnessTruth, TripPrediction, TripReport, STANDING_PER_FRACTION,
};
pub use signal::{
    default_specs, generate_dataset, generate_dataset_with_counts, generate_synthetic_session,
    ClassSignalSpec, SessionShape, SignalSpecs, DEFAULT_DURATION_MS, DEFAULT_SAMPLE_RATE_HZ,
};

use thiserror::Error;

use crate::classifiers::ClassifierError;
use crate::crowd_model::CrowdError;
use crate::features::FeatureError;

#[derive(Debug, Error)]
pub enum SimError {
    #[error("invalid signal spec: {0}")]
    InvalidSpec(String),
    #[error("invalid scenario: {0}")]
    InvalidScenario(String),
    #[error("trip `{0}` has no riders; estimate withheld")]
    NoRiders(String),
    #[error("incompatible model: {0}")]
    IncompatibleModel(String),
    #[error(transparent)]
    Feature(#[from] FeatureError),
    #[error(transparent)]
    Classifier(#[from] ClassifierError),
    #[error(transparent)]
    Crowd(#[from] CrowdError),
}
