//! Great-circle distance and matching rider pings to vehicles.

use serde::{Deserialize, Serialize};

use super::SimError;

pub const EARTH_RADIUS_M: f64 = 6_371_008.8;
/// Meters per degree of latitude on the mean-radius sphere.
pub const METERS_PER_DEGREE: f64 = EARTH_RADIUS_M * std::f64::consts::PI / 180.0;
pub const DEFAULT_RADIUS_M: f64 = 50.0;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LatLon {
    pub lat: f64,
    pub lon: f64,
}

impl LatLon {
    pub const fn new(lat: f64, lon: f64) -> Self {
        Self { lat, lon }
    }

    /// Point `north_m` / `east_m` meters away on a local flat approximation.
    pub fn offset(self, north_m: f64, east_m: f64) -> Self {
        Self {
            lat: self.lat + north_m / METERS_PER_DEGREE,
            lon: self.lon + east_m / (METERS_PER_DEGREE * self.lat.to_radians().cos()),
        }
    }
}

pub fn haversine_m(a: LatLon, b: LatLon) -> f64 {
    let (phi1, phi2) = (a.lat.to_radians(), b.lat.to_radians());
    let dphi = phi2 - phi1;
    let dlambda = (b.lon - a.lon).to_radians();
    let h = (dphi / 2.0).sin().powi(2) + phi1.cos() * phi2.cos() * (dlambda / 2.0).sin().powi(2);
    2.0 * EARTH_RADIUS_M * h.sqrt().min(1.0).asin()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Waypoint {
    pub t_ms: u64,
    pub lat: f64,
    pub lon: f64,
}

/// A vehicle's timestamped polyline.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VehiclePath {
    pub trip_id: String,
    pub waypoints: Vec<Waypoint>,
}

impl VehiclePath {
    pub fn validate(&self) -> Result<(), SimError> {
        if self.waypoints.is_empty() {
            return Err(SimError::InvalidScenario(format!(
                "trip `{}` has an empty path",
                self.trip_id
            )));
        }
        if self.waypoints.windows(2).any(|w| w[1].t_ms <= w[0].t_ms) {
            return Err(SimError::InvalidScenario(format!(
                "trip `{}`: waypoint times must strictly increase",
                self.trip_id
            )));
        }
        Ok(())
    }

    /// Linearly interpolated position, or `None` outside the path's time span.
    pub fn position_at(&self, t_ms: u64) -> Option<LatLon> {
        let first = self.waypoints.first()?;
        let last = self.waypoints.last()?;
        if t_ms < first.t_ms || t_ms > last.t_ms {
            return None;
        }
        let i = self.waypoints.partition_point(|w| w.t_ms <= t_ms);
        let a = &self.waypoints[i - 1];
        let Some(b) = self.waypoints.get(i) else {
            return Some(LatLon::new(a.lat, a.lon));
        };
        let u = (t_ms - a.t_ms) as f64 / (b.t_ms - a.t_ms) as f64;
        Some(LatLon::new(
            a.lat + u * (b.lat - a.lat),
            a.lon + u * (b.lon - a.lon),
        ))
    }
}

/// Nearest vehicle within `radius_m` at the ping's time. Ties go to the
/// earlier vehicle in `vehicles`.
pub fn assign_trip<'a>(
    ping: LatLon,
    t_ms: u64,
    vehicles: &'a [VehiclePath],
    radius_m: f64,
) -> Option<&'a str> {
    let mut best: Option<(f64, &str)> = None;
    for v in vehicles {
        let Some(pos) = v.position_at(t_ms) else {
            continue;
        };
        let d = haversine_m(ping, pos);
        if d <= radius_m && best.is_none_or(|(bd, _)| d < bd) {
            best = Some((d, &v.trip_id));
        }
    }
    best.map(|(_, id)| id)
}
