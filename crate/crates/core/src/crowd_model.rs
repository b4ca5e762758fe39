//! Relationship between riders standing and the fraction of seats taken,
//! and its inversion into a rider-facing fullness category.
//!
//! The regression is always fitted from observation data; no coefficients
//! are built in.

use std::fmt;
use std::io::{Read, Write};
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::data_model::DataError;

pub const OBSERVATIONS_CSV_HEADER: [&str; 6] = [
    "bus_id",
    "route_id",
    "stop_index",
    "seats_total",
    "sitting",
    "standing",
];

/// Seats-taken fraction below which a bus with nobody standing counts as
/// having many seats; riders start standing around half full.
pub const STANDING_ONSET_FRACTION: f64 = 0.50;
pub const CROWDED_FRACTION: f64 = 0.80;
pub const CROWDED_STANDING: u32 = 3;
pub const VERY_CROWDED_STANDING: u32 = 8;
/// Fraction reported when nobody is detected standing.
pub const DEFAULT_ZERO_STANDING_PRIOR: f64 = 0.25;

#[derive(Debug, Error)]
pub enum CrowdError {
    #[error("need at least 2 observations, got {0}")]
    TooFewObservations(usize),
    #[error("all observations share one seats-taken fraction")]
    DegenerateData,
    #[error("crowd model slope {0} is not positive; cannot invert")]
    NonPositiveSlope(f64),
    #[error("invalid observation: {0}")]
    InvalidObservation(String),
    #[error("invalid thresholds: {0}")]
    InvalidThresholds(String),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FullnessObservation {
    pub bus_id: String,
    pub route_id: String,
    pub stop_index: u32,
    pub seats_total: u32,
    pub sitting: u32,
    pub standing: u32,
}

impl FullnessObservation {
    pub fn seats_taken_fraction(&self) -> f64 {
        self.sitting as f64 / self.seats_total as f64
    }

    fn check(&self) -> Result<(), String> {
        if self.seats_total == 0 {
            return Err(format!(
                "bus `{}`: seats_total must be positive",
                self.bus_id
            ));
        }
        if self.sitting > self.seats_total {
            return Err(format!(
                "bus `{}`: {} sitting exceeds {} seats",
                self.bus_id, self.sitting, self.seats_total
            ));
        }
        Ok(())
    }
}

/// `standing ≈ slope · seats_taken_fraction + intercept`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CrowdModel {
    pub slope: f64,
    pub intercept: f64,
    pub n_obs: usize,
    pub r2: f64,
}

/// Ordinary least squares of standing on seats-taken fraction.
///
/// Points are put in a canonical order before summation so the fitted
/// model is bit-identical for any permutation of the input.
pub fn fit_crowd(observations: &[FullnessObservation]) -> Result<CrowdModel, CrowdError> {
    if observations.len() < 2 {
        return Err(CrowdError::TooFewObservations(observations.len()));
    }
    for o in observations {
        o.check().map_err(CrowdError::InvalidObservation)?;
    }
    let mut points: Vec<(f64, f64)> = observations
        .iter()
        .map(|o| (o.seats_taken_fraction(), o.standing as f64))
        .collect();
    points.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.total_cmp(&b.1)));

    let n = points.len() as f64;
    let mean_x = points.iter().map(|p| p.0).sum::<f64>() / n;
    let mean_y = points.iter().map(|p| p.1).sum::<f64>() / n;
    let sxx: f64 = points.iter().map(|p| (p.0 - mean_x).powi(2)).sum();
    let sxy: f64 = points.iter().map(|p| (p.0 - mean_x) * (p.1 - mean_y)).sum();
    if sxx == 0.0 || points.iter().all(|p| p.0 == points[0].0) {
        return Err(CrowdError::DegenerateData);
    }
    let slope = sxy / sxx;
    let intercept = mean_y - slope * mean_x;
    let ss_tot: f64 = points.iter().map(|p| (p.1 - mean_y).powi(2)).sum();
    let ss_res: f64 = points
        .iter()
        .map(|p| (p.1 - (intercept + slope * p.0)).powi(2))
        .sum();
    // A constant response is fitted exactly.
    let r2 = if ss_tot == 0.0 {
        1.0
    } else {
        (1.0 - ss_res / ss_tot).clamp(0.0, 1.0)
    };
    Ok(CrowdModel {
        slope,
        intercept,
        n_obs: points.len(),
        r2,
    })
}

/// Seats-taken fraction implied by a standing count, clamped to `[0, 1]`.
/// Zero standing only bounds fullness from above, so it returns
/// `zero_standing_prior` instead.
pub fn invert_standing(
    model: &CrowdModel,
    standing_count: u32,
    zero_standing_prior: f64,
) -> Result<f64, CrowdError> {
    if !(model.slope > 0.0) {
        return Err(CrowdError::NonPositiveSlope(model.slope));
    }
    if standing_count == 0 {
        return Ok(zero_standing_prior);
    }
    Ok(((standing_count as f64 - model.intercept) / model.slope).clamp(0.0, 1.0))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FullnessCategory {
    ManySeats,
    FewSeats,
    Crowded,
    VeryCrowded,
}

impl FullnessCategory {
    pub const ALL: [FullnessCategory; 4] = [
        FullnessCategory::ManySeats,
        FullnessCategory::FewSeats,
        FullnessCategory::Crowded,
        FullnessCategory::VeryCrowded,
    ];
}

impl fmt::Display for FullnessCategory {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            FullnessCategory::ManySeats => "many seats",
            FullnessCategory::FewSeats => "few seats",
            FullnessCategory::Crowded => "crowded",
            FullnessCategory::VeryCrowded => "very crowded",
        })
    }
}

/// Category boundaries. Standing-count rules take precedence over the
/// fraction rules.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CategoryThresholds {
    /// Below this fraction with nobody standing: many seats.
    pub few_seats_fraction: f64,
    /// At or above this fraction: crowded.
    pub crowded_fraction: f64,
    /// At least this many standing: crowded.
    pub crowded_standing: u32,
    /// At least this many standing: very crowded.
    pub very_crowded_standing: u32,
}

impl Default for CategoryThresholds {
    fn default() -> Self {
        Self {
            few_seats_fraction: STANDING_ONSET_FRACTION,
            crowded_fraction: CROWDED_FRACTION,
            crowded_standing: CROWDED_STANDING,
            very_crowded_standing: VERY_CROWDED_STANDING,
        }
    }
}

impl CategoryThresholds {
    pub fn validate(&self) -> Result<(), CrowdError> {
        let ok = (0.0..=1.0).contains(&self.few_seats_fraction)
            && (0.0..=1.0).contains(&self.crowded_fraction)
            && self.few_seats_fraction <= self.crowded_fraction
            && self.crowded_standing >= 1
            && self.crowded_standing <= self.very_crowded_standing;
        if ok {
            Ok(())
        } else {
            Err(CrowdError::InvalidThresholds(format!("{self:?}")))
        }
    }
}

/// Parses `few,crowded,crowded_standing,very_crowded_standing`,
/// e.g. `0.5,0.8,3,8`.
impl FromStr for CategoryThresholds {
    type Err = CrowdError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let parts: Vec<&str> = s.split(',').map(str::trim).collect();
        let bad = || {
            CrowdError::InvalidThresholds(format!("expected 4 comma-separated values, got `{s}`"))
        };
        if parts.len() != 4 {
            return Err(bad());
        }
        let t = Self {
            few_seats_fraction: parts[0].parse().map_err(|_| bad())?,
            crowded_fraction: parts[1].parse().map_err(|_| bad())?,
            crowded_standing: parts[2].parse().map_err(|_| bad())?,
            very_crowded_standing: parts[3].parse().map_err(|_| bad())?,
        };
        t.validate()?;
        Ok(t)
    }
}

pub fn categorize(
    fraction: f64,
    standing_detected: u32,
    t: &CategoryThresholds,
) -> FullnessCategory {
    if standing_detected >= t.very_crowded_standing {
        FullnessCategory::VeryCrowded
    } else if standing_detected >= t.crowded_standing || fraction >= t.crowded_fraction {
        FullnessCategory::Crowded
    } else if standing_detected >= 1 || fraction >= t.few_seats_fraction {
        FullnessCategory::FewSeats
    } else {
        FullnessCategory::ManySeats
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CrowdEstimate {
    pub standing_detected: u32,
    pub est_seats_taken_fraction: f64,
    pub category: FullnessCategory,
    pub n_contributing_riders: u32,
}

pub fn parse_observations_csv(input: impl Read) -> Result<Vec<FullnessObservation>, DataError> {
    let mut reader = csv::Reader::from_reader(input);
    let malformed = |line: usize, message: String| DataError::MalformedRecord { line, message };
    let header = reader.headers().map_err(|e| malformed(1, e.to_string()))?;
    if header.iter().collect::<Vec<_>>() != OBSERVATIONS_CSV_HEADER {
        return Err(malformed(
            1,
            format!("expected header `{}`", OBSERVATIONS_CSV_HEADER.join(",")),
        ));
    }
    let mut out = Vec::new();
    for row in reader.records() {
        let row = row.map_err(|e| {
            malformed(
                e.position().map(|p| p.line() as usize).unwrap_or(0),
                e.to_string(),
            )
        })?;
        let line = row.position().map(|p| p.line() as usize).unwrap_or(0);
        let int = |idx: usize| -> Result<u32, DataError> {
            row[idx].trim().parse::<u32>().map_err(|_| {
                malformed(
                    line,
                    format!(
                        "field `{}`: expected a non-negative integer, got `{}`",
                        OBSERVATIONS_CSV_HEADER[idx], &row[idx]
                    ),
                )
            })
        };
        let obs = FullnessObservation {
            bus_id: row[0].to_string(),
            route_id: row[1].to_string(),
            stop_index: int(2)?,
            seats_total: int(3)?,
            sitting: int(4)?,
            standing: int(5)?,
        };
        obs.check().map_err(|m| malformed(line, m))?;
        out.push(obs);
    }
    Ok(out)
}

pub fn write_observations_csv(
    obs: &[FullnessObservation],
    out: impl Write,
) -> Result<(), DataError> {
    let mut w = csv::Writer::from_writer(out);
    let io = |e: csv::Error| DataError::Io(e.into());
    w.write_record(OBSERVATIONS_CSV_HEADER).map_err(io)?;
    for o in obs {
        w.write_record([
            o.bus_id.as_str(),
            &o.route_id,
            &o.stop_index.to_string(),
            &o.seats_total.to_string(),
            &o.sitting.to_string(),
            &o.standing.to_string(),
        ])
        .map_err(io)?;
    }
    w.flush()?;
    Ok(())
}
