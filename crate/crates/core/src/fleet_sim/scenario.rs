//! Simulated fleet: vehicles with known loads, riders carrying phones,
//! and the full classify → assign → aggregate → estimate chain.

use std::collections::{BTreeMap, HashMap, HashSet};

use rand::seq::SliceRandom;
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::geo::{assign_trip, LatLon, VehiclePath, Waypoint, DEFAULT_RADIUS_M};
use super::signal::{generate_synthetic_session, SessionShape, SignalSpecs, DEFAULT_DURATION_MS};
use super::SimError;
use crate::classifiers::Predictor;
use crate::crowd_model::{
    categorize, invert_standing, CategoryThresholds, CrowdEstimate, CrowdModel, FullnessCategory,
    FullnessObservation, DEFAULT_ZERO_STANDING_PRIOR,
};
use crate::data_model::{
    clean_sessions, ActivityClass, PhonePosition, Posture, TravelState, DEFAULT_MIN_SAMPLES,
    DEFAULT_MIN_SPAN_MS,
};
use crate::eval::{bus_posture_of, MergeMap, BUS_SITTING, BUS_STANDING};
use crate::features::extract_features;
use crate::rng::{stable_hash, stream_rng};

/// Additional standing riders per unit of seats-taken fraction above half full.
pub const STANDING_PER_FRACTION: u32 = 20;

/// Ground-truth load law: nobody stands below half full; from half full
/// on, one rider stands plus one more per 1/20 of the seats taken.
pub fn standing_for(seats_total: u32, sitting: u32) -> u32 {
    if 2 * sitting < seats_total {
        0
    } else {
        (STANDING_PER_FRACTION * sitting - STANDING_PER_FRACTION / 2 * seats_total) / seats_total
            + 1
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimVehicle {
    pub trip_id: String,
    pub seats_total: u32,
    pub sitting: u32,
    pub standing: u32,
    pub path: Vec<Waypoint>,
}

impl SimVehicle {
    pub fn vehicle_path(&self) -> VehiclePath {
        VehiclePath {
            trip_id: self.trip_id.clone(),
            waypoints: self.path.clone(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimRider {
    pub rider_id: String,
    pub trip_id: Option<String>,
    #[serde(with = "class_token")]
    pub class: ActivityClass,
    #[serde(default)]
    pub start_ms: u64,
    /// Required for riders not on a trip.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub position: Option<LatLon>,
}

mod class_token {
    use serde::{de::Error, Deserialize, Deserializer, Serializer};

    use crate::data_model::ActivityClass;

    pub fn serialize<S: Serializer>(c: &ActivityClass, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(&c.token())
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<ActivityClass, D::Error> {
        let token = String::deserialize(d)?;
        token
            .parse()
            .map_err(|_| D::Error::custom(format!("unknown class token `{token}`")))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimScenario {
    pub seed: u64,
    /// Signal spec file, relative to the scenario file. Built-in specs when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub spec_file: Option<String>,
    pub vehicles: Vec<SimVehicle>,
    pub riders: Vec<SimRider>,
}

impl SimScenario {
    pub fn validate(&self) -> Result<(), SimError> {
        let bad = |m: String| Err(SimError::InvalidScenario(m));
        let mut trips = HashMap::new();
        for v in &self.vehicles {
            if v.seats_total == 0 || v.sitting > v.seats_total {
                return bad(format!(
                    "trip `{}`: sitting must be within 1..={} seats",
                    v.trip_id, v.seats_total
                ));
            }
            v.vehicle_path().validate()?;
            if trips.insert(v.trip_id.as_str(), v).is_some() {
                return bad(format!("duplicate trip `{}`", v.trip_id));
            }
        }
        let mut riders = HashSet::new();
        for r in &self.riders {
            if !riders.insert(r.rider_id.as_str()) {
                return bad(format!("duplicate rider `{}`", r.rider_id));
            }
            let on_bus = r.class.label().state() == TravelState::Bus;
            match &r.trip_id {
                Some(t) => {
                    let Some(v) = trips.get(t.as_str()) else {
                        return bad(format!(
                            "rider `{}` references unknown trip `{t}`",
                            r.rider_id
                        ));
                    };
                    if !on_bus {
                        return bad(format!(
                            "rider `{}` is on trip `{t}` but has class {}",
                            r.rider_id, r.class
                        ));
                    }
                    if v.vehicle_path().position_at(r.start_ms).is_none() {
                        return bad(format!(
                            "rider `{}` starts outside trip `{t}`'s time span",
                            r.rider_id
                        ));
                    }
                }
                None => {
                    if on_bus {
                        return bad(format!(
                            "rider `{}` has bus class {} but no trip",
                            r.rider_id, r.class
                        ));
                    }
                    if r.position.is_none() {
                        return bad(format!(
                            "rider `{}` has neither a trip nor a position",
                            r.rider_id
                        ));
                    }
                }
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TripFullnessTruth {
    pub standing: u32,
    pub sitting: u32,
    pub seats_total: u32,
    pub seats_taken_fraction: f64,
    pub category: FullnessCategory,
}

/// A rider's classifier output, either fine or already bus-posture merged.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TripPrediction {
    Fine(ActivityClass),
    /// Index into the bus-posture coarse classes.
    BusPosture(usize),
}

impl TripPrediction {
    pub fn bus_posture(self) -> usize {
        match self {
            TripPrediction::Fine(c) => bus_posture_of(c),
            TripPrediction::BusPosture(c) => c,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AggregateOptions {
    pub thresholds: CategoryThresholds,
    pub zero_standing_prior: f64,
}

impl Default for AggregateOptions {
    fn default() -> Self {
        Self {
            thresholds: CategoryThresholds::default(),
            zero_standing_prior: DEFAULT_ZERO_STANDING_PRIOR,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DetectedCounts {
    pub standing: u32,
    pub sitting: u32,
    pub other: u32,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TripAggregate {
    pub estimate: CrowdEstimate,
    pub detected: DetectedCounts,
}

/// Counts the predictions of riders assigned to `trip_id` and turns the
/// standing count into a fullness estimate.
pub fn aggregate_trip(
    trip_id: &str,
    predictions: &[(String, TripPrediction)],
    crowd: &CrowdModel,
    options: &AggregateOptions,
) -> Result<TripAggregate, SimError> {
    if predictions.is_empty() {
        return Err(SimError::NoRiders(trip_id.to_string()));
    }
    let mut detected = DetectedCounts {
        standing: 0,
        sitting: 0,
        other: 0,
    };
    for (_, p) in predictions {
        match p.bus_posture() {
            BUS_STANDING => detected.standing += 1,
            BUS_SITTING => detected.sitting += 1,
            _ => detected.other += 1,
        }
    }
    let fraction = invert_standing(crowd, detected.standing, options.zero_standing_prior)?;
    Ok(TripAggregate {
        estimate: CrowdEstimate {
            standing_detected: detected.standing,
            est_seats_taken_fraction: fraction,
            category: categorize(fraction, detected.standing, &options.thresholds),
            n_contributing_riders: predictions.len() as u32,
        },
        detected,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RunOptions {
    pub radius_m: f64,
    pub duration_ms: u64,
    pub aggregate: AggregateOptions,
}

impl Default for RunOptions {
    fn default() -> Self {
        Self {
            radius_m: DEFAULT_RADIUS_M,
            duration_ms: DEFAULT_DURATION_MS,
            aggregate: AggregateOptions::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TripReport {
    pub trip_id: String,
    /// Absent when no rider was assigned to the trip.
    pub estimate: Option<CrowdEstimate>,
    pub detected: DetectedCounts,
    pub truth: TripFullnessTruth,
}

impl TripReport {
    pub fn category_correct(&self) -> Option<bool> {
        self.estimate.map(|e| e.category == self.truth.category)
    }

    pub fn fraction_error(&self) -> Option<f64> {
        self.estimate
            .map(|e| (e.est_seats_taken_fraction - self.truth.seats_taken_fraction).abs())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScenarioSummary {
    pub n_trips: usize,
    pub n_estimated: usize,
    pub n_withheld: usize,
    /// Riders whose session did not survive cleaning.
    pub n_dropped_riders: usize,
    /// Riders not matched to any vehicle.
    pub n_unassigned_riders: usize,
    /// Over trips with an estimate; 0 when there are none.
    pub category_accuracy: f64,
    pub mean_abs_fraction_error: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScenarioReport {
    pub trips: Vec<TripReport>,
    pub summary: ScenarioSummary,
}

/// How a model's outputs map onto trip predictions.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum OutputSpace {
    Fine,
    BusPosture,
}

impl OutputSpace {
    fn of(names: &[String]) -> Result<Self, SimError> {
        if names == ActivityClass::all_tokens() {
            Ok(OutputSpace::Fine)
        } else if names == MergeMap::bus_posture().coarse_names {
            Ok(OutputSpace::BusPosture)
        } else {
            Err(SimError::IncompatibleModel(format!(
                "model classes {names:?} are neither the 15 activity classes nor bus-posture classes"
            )))
        }
    }

    fn prediction(self, index: usize) -> Result<TripPrediction, SimError> {
        match self {
            OutputSpace::Fine => ActivityClass::from_index(index)
                .map(TripPrediction::Fine)
                .ok_or_else(|| {
                    SimError::IncompatibleModel(format!("class index {index} out of range"))
                }),
            OutputSpace::BusPosture => Ok(TripPrediction::BusPosture(index)),
        }
    }
}

struct RiderOutcome {
    rider_id: String,
    trip: Option<String>,
    prediction: Option<TripPrediction>,
}

/// Runs every rider through generate → clean → features → predict →
/// merge → assign, then aggregates per trip and pairs with the truth.
///
/// Rider `r` draws from stream `(seed, hash(r))`, so results do not depend
/// on rider order or thread count.
pub fn run_scenario(
    scenario: &SimScenario,
    specs: &SignalSpecs,
    model: &impl Predictor,
    crowd: &CrowdModel,
    options: &RunOptions,
) -> Result<ScenarioReport, SimError> {
    scenario.validate()?;
    let space = OutputSpace::of(model.class_names())?;
    let paths: Vec<VehiclePath> = scenario
        .vehicles
        .iter()
        .map(SimVehicle::vehicle_path)
        .collect();

    let outcomes = scenario
        .riders
        .par_iter()
        .map(|rider| -> Result<RiderOutcome, SimError> {
            let mut rng = stream_rng(scenario.seed, stable_hash(&rider.rider_id));
            let origin = match &rider.trip_id {
                Some(t) => {
                    let path = paths.iter().find(|p| &p.trip_id == t).expect("validated");
                    let at = path.position_at(rider.start_ms).expect("validated");
                    at.offset(rng.random_range(-5.0..5.0), rng.random_range(-5.0..5.0))
                }
                None => rider.position.expect("validated"),
            };
            let shape = SessionShape {
                session_id: rider.rider_id.clone(),
                label: None,
                origin,
                start_ms: rider.start_ms,
                duration_ms: options.duration_ms,
            };
            let session = generate_synthetic_session(specs.get(rider.class), &shape, &mut rng);
            let Some(session) =
                clean_sessions(vec![session], DEFAULT_MIN_SAMPLES, DEFAULT_MIN_SPAN_MS).pop()
            else {
                return Ok(RiderOutcome {
                    rider_id: rider.rider_id.clone(),
                    trip: None,
                    prediction: None,
                });
            };
            let features = extract_features(&session)?;
            let (index, _) = model.predict(&features.values)?;
            let first = session.samples()[0];
            let gps = first.gps.expect("generated sessions carry GPS");
            let trip = assign_trip(
                LatLon::new(gps.lat, gps.lon),
                first.t_ms,
                &paths,
                options.radius_m,
            );
            Ok(RiderOutcome {
                rider_id: rider.rider_id.clone(),
                trip: trip.map(str::to_string),
                prediction: Some(space.prediction(index)?),
            })
        })
        .collect::<Result<Vec<_>, _>>()?;

    let mut by_trip: BTreeMap<String, Vec<(String, TripPrediction)>> = BTreeMap::new();
    let (mut dropped, mut unassigned) = (0, 0);
    for o in outcomes {
        match (o.trip, o.prediction) {
            (_, None) => dropped += 1,
            (None, Some(_)) => unassigned += 1,
            (Some(t), Some(p)) => by_trip.entry(t).or_default().push((o.rider_id, p)),
        }
    }

    let thresholds = &options.aggregate.thresholds;
    let mut trips = Vec::with_capacity(scenario.vehicles.len());
    for v in &scenario.vehicles {
        let fraction = v.sitting as f64 / v.seats_total as f64;
        let truth = TripFullnessTruth {
            standing: v.standing,
            sitting: v.sitting,
            seats_total: v.seats_total,
            seats_taken_fraction: fraction,
            category: categorize(fraction, v.standing, thresholds),
        };
        let preds = by_trip.get(&v.trip_id).map(Vec::as_slice).unwrap_or(&[]);
        let (estimate, detected) =
            match aggregate_trip(&v.trip_id, preds, crowd, &options.aggregate) {
                Ok(a) => (Some(a.estimate), a.detected),
                Err(SimError::NoRiders(_)) => (
                    None,
                    DetectedCounts {
                        standing: 0,
                        sitting: 0,
                        other: 0,
                    },
                ),
                Err(e) => return Err(e),
            };
        trips.push(TripReport {
            trip_id: v.trip_id.clone(),
            estimate,
            detected,
            truth,
        });
    }
    let summary = summarize(&trips, dropped, unassigned);
    Ok(ScenarioReport { trips, summary })
}

fn summarize(trips: &[TripReport], dropped: usize, unassigned: usize) -> ScenarioSummary {
    let correct: Vec<bool> = trips
        .iter()
        .filter_map(TripReport::category_correct)
        .collect();
    let errors: Vec<f64> = trips
        .iter()
        .filter_map(TripReport::fraction_error)
        .collect();
    let n = correct.len();
    let mean = |total: f64| if n == 0 { 0.0 } else { total / n as f64 };
    ScenarioSummary {
        n_trips: trips.len(),
        n_estimated: n,
        n_withheld: trips.len() - n,
        n_dropped_riders: dropped,
        n_unassigned_riders: unassigned,
        category_accuracy: mean(correct.iter().filter(|&&c| c).count() as f64),
        mean_abs_fraction_error: mean(errors.iter().sum()),
    }
}

/// Shape of a generated fleet.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScenarioConfig {
    pub n_vehicles: usize,
    /// Bounds on participating riders per vehicle.
    pub riders_min: u32,
    pub riders_max: u32,
    pub seats_min: u32,
    pub seats_max: u32,
    /// Fraction of the people aboard who carry a participating phone.
    pub participation: f64,
    /// Walking or stationary riders placed away from every vehicle.
    pub off_trip_riders: usize,
    /// Distance between neighboring vehicles.
    pub spacing_m: f64,
    pub trip_duration_ms: u64,
}

impl Default for ScenarioConfig {
    fn default() -> Self {
        Self {
            n_vehicles: 20,
            riders_min: 8,
            riders_max: 30,
            seats_min: 20,
            seats_max: 30,
            participation: 1.0,
            off_trip_riders: 10,
            spacing_m: 1000.0,
            trip_duration_ms: 1_200_000,
        }
    }
}

const SCENARIO_ORIGIN: LatLon = LatLon::new(40.4406, -79.9959);
const BUS_SPEED_MPS: f64 = 7.0;

/// A fleet of parallel trips heading north, `spacing_m` apart, loaded
/// according to [`standing_for`].
pub fn generate_scenario(config: &ScenarioConfig, seed: u64) -> Result<SimScenario, SimError> {
    let bad = |m: &str| Err(SimError::InvalidScenario(m.to_string()));
    if config.seats_min == 0 || config.seats_min > config.seats_max {
        return bad("need 0 < seats_min <= seats_max");
    }
    if config.riders_min > config.riders_max {
        return bad("need riders_min <= riders_max");
    }
    if !(config.participation > 0.0 && config.participation <= 1.0) {
        return bad("participation must be in (0, 1]");
    }
    if config.trip_duration_ms <= DEFAULT_DURATION_MS {
        return bad("trips must outlast one session");
    }
    let feasible = (config.seats_min..=config.seats_max).any(|seats| {
        (0..=seats).any(|sitting| {
            let n = participants(sitting + standing_for(seats, sitting), config.participation);
            (config.riders_min..=config.riders_max).contains(&n)
        })
    });
    if !feasible {
        return bad("no seat count and load satisfies the rider bounds");
    }

    let mut rng = stream_rng(seed, 0);
    let mut vehicles = Vec::with_capacity(config.n_vehicles);
    let mut riders = Vec::new();
    for i in 0..config.n_vehicles {
        let trip_id = format!("trip-{i:03}");
        let (seats, sitting, standing, n) = loop {
            let seats = rng.random_range(config.seats_min..=config.seats_max);
            let sitting = rng.random_range(0..=seats);
            let standing = standing_for(seats, sitting);
            let n = participants(sitting + standing, config.participation);
            if (config.riders_min..=config.riders_max).contains(&n) {
                break (seats, sitting, standing, n);
            }
        };
        let start = SCENARIO_ORIGIN.offset(0.0, i as f64 * config.spacing_m);
        let path = (0..=4u64)
            .map(|k| {
                let t_ms = config.trip_duration_ms * k / 4;
                let p = start.offset(BUS_SPEED_MPS * t_ms as f64 / 1000.0, 0.0);
                Waypoint {
                    t_ms,
                    lat: p.lat,
                    lon: p.lon,
                }
            })
            .collect();

        let mut aboard: Vec<Posture> = std::iter::repeat_n(Posture::Sitting, sitting as usize)
            .chain(std::iter::repeat_n(Posture::Standing, standing as usize))
            .collect();
        aboard.shuffle(&mut rng);
        for (j, posture) in aboard.into_iter().take(n as usize).enumerate() {
            let position = [
                PhonePosition::Pocket,
                PhonePosition::Hand,
                PhonePosition::Backpack,
            ][rng.random_range(0..3)];
            let class = ActivityClass::from_label(
                crate::data_model::ActivityLabel::new(TravelState::Bus, posture, position)
                    .expect("bus label"),
            );
            riders.push(SimRider {
                rider_id: format!("{trip_id}-r{j:02}"),
                trip_id: Some(trip_id.clone()),
                class,
                start_ms: rng.random_range(0..=config.trip_duration_ms - DEFAULT_DURATION_MS),
                position: None,
            });
        }
        vehicles.push(SimVehicle {
            trip_id,
            seats_total: seats,
            sitting,
            standing,
            path,
        });
    }

    let off_bus: Vec<ActivityClass> = ActivityClass::all()
        .filter(|c| c.label().state() != TravelState::Bus)
        .collect();
    for j in 0..config.off_trip_riders {
        riders.push(SimRider {
            rider_id: format!("walker-{j:03}"),
            trip_id: None,
            class: off_bus[rng.random_range(0..off_bus.len())],
            start_ms: rng.random_range(0..=config.trip_duration_ms - DEFAULT_DURATION_MS),
            position: Some(SCENARIO_ORIGIN.offset(-5_000.0 - 100.0 * j as f64, 0.0)),
        });
    }
    Ok(SimScenario {
        seed,
        spec_file: None,
        vehicles,
        riders,
    })
}

fn participants(aboard: u32, participation: f64) -> u32 {
    (aboard as f64 * participation).round() as u32
}

/// Settings for synthetic field observations of seats and standing riders.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ObservationConfig {
    pub n: usize,
    pub seats_min: u32,
    pub seats_max: u32,
    /// Bounds on the people aboard an observed bus, sitting plus standing.
    pub aboard_min: u32,
    pub aboard_max: u32,
    /// Std of Gaussian noise on the standing count, rounded and floored at 0.
    pub standing_noise: f64,
}

impl Default for ObservationConfig {
    /// Matches the buses of a default [`ScenarioConfig`].
    fn default() -> Self {
        let fleet = ScenarioConfig::default();
        Self {
            n: 246,
            seats_min: fleet.seats_min,
            seats_max: fleet.seats_max,
            aboard_min: fleet.riders_min,
            aboard_max: fleet.riders_max,
            standing_noise: 0.5,
        }
    }
}

/// Observations drawn from the same load law as [`generate_scenario`].
pub fn generate_observations(
    config: &ObservationConfig,
    seed: u64,
) -> Result<Vec<FullnessObservation>, SimError> {
    if config.seats_min == 0 || config.seats_min > config.seats_max {
        return Err(SimError::InvalidScenario(
            "need 0 < seats_min <= seats_max".into(),
        ));
    }
    let aboard = config.aboard_min..=config.aboard_max;
    let feasible = (config.seats_min..=config.seats_max).any(|seats| {
        (0..=seats).any(|sitting| aboard.contains(&(sitting + standing_for(seats, sitting))))
    });
    if !feasible {
        return Err(SimError::InvalidScenario(
            "no seat count and load satisfies the aboard bounds".into(),
        ));
    }
    if !(config.standing_noise >= 0.0 && config.standing_noise.is_finite()) {
        return Err(SimError::InvalidScenario(
            "standing noise must be non-negative".into(),
        ));
    }
    let mut rng = stream_rng(seed, 0);
    Ok((0..config.n)
        .map(|i| {
            let (seats, sitting) = loop {
                let seats = rng.random_range(config.seats_min..=config.seats_max);
                let sitting = rng.random_range(0..=seats);
                if aboard.contains(&(sitting + standing_for(seats, sitting))) {
                    break (seats, sitting);
                }
            };
            let z: f64 = rng.sample(rand_distr::StandardNormal);
            let standing = (standing_for(seats, sitting) as f64 + config.standing_noise * z)
                .round()
                .max(0.0);
            FullnessObservation {
                bus_id: format!("bus-{:03}", i % 40),
                route_id: format!("route-{}", i % 4),
                stop_index: (i / 40) as u32,
                seats_total: seats,
                sitting,
                standing: standing as u32,
            }
        })
        .collect())
}
