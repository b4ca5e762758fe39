//! Stylized per-class sensor signals: a constant gravity vector, one
//! sinusoidal oscillation and white noise on each axis, plus a GPS track
//! moving at the class's speed.

use std::collections::BTreeMap;
use std::f64::consts::PI;

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use super::geo::{LatLon, METERS_PER_DEGREE};
use super::SimError;
use crate::data_model::{ActivityClass, ActivityLabel, GpsFix, SensorSample, SensorSession};
use crate::rng::stream_rng;

pub const DEFAULT_SAMPLE_RATE_HZ: f64 = 20.0;
pub const DEFAULT_DURATION_MS: u64 = 15_000;

/// Signal parameters for one activity class.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ClassSignalSpec {
    /// m/s²
    pub accel_base: [f64; 3],
    pub amplitude: [f64; 3],
    pub frequency_hz: f64,
    /// m/s²
    pub noise_std: f64,
    /// m/s
    pub speed_mean: f64,
    pub speed_std: f64,
    /// degrees
    pub gps_jitter_deg: f64,
    #[serde(default = "default_rate")]
    pub sample_rate_hz: f64,
    /// Std of a per-session offset added to `accel_base` on each axis,
    /// standing in for how differently people carry their phones.
    #[serde(default)]
    pub base_jitter: f64,
}

fn default_rate() -> f64 {
    DEFAULT_SAMPLE_RATE_HZ
}

impl ClassSignalSpec {
    pub fn validate(&self) -> Result<(), SimError> {
        let finite = self
            .accel_base
            .iter()
            .chain(&self.amplitude)
            .chain(&[
                self.frequency_hz,
                self.noise_std,
                self.speed_mean,
                self.speed_std,
            ])
            .chain(&[self.gps_jitter_deg, self.sample_rate_hz, self.base_jitter])
            .all(|v| v.is_finite());
        let bad = |m: &str| Err(SimError::InvalidSpec(m.to_string()));
        if !finite {
            return bad("all parameters must be finite");
        }
        if self.noise_std < 0.0
            || self.speed_std < 0.0
            || self.gps_jitter_deg < 0.0
            || self.base_jitter < 0.0
        {
            return bad("standard deviations must be non-negative");
        }
        if self.frequency_hz < 0.0 {
            return bad("frequency must be non-negative");
        }
        if self.sample_rate_hz <= 0.0 {
            return bad("sample rate must be positive");
        }
        Ok(())
    }
}

/// One spec per activity class, indexed by [`ActivityClass::index`].
#[derive(Debug, Clone, PartialEq)]
pub struct SignalSpecs {
    specs: [ClassSignalSpec; ActivityClass::COUNT],
}

impl SignalSpecs {
    pub fn new(specs: [ClassSignalSpec; ActivityClass::COUNT]) -> Result<Self, SimError> {
        for (i, s) in specs.iter().enumerate() {
            s.validate().map_err(|e| {
                SimError::InvalidSpec(format!("{}: {e}", ActivityClass::from_index(i).unwrap()))
            })?;
        }
        Ok(Self { specs })
    }

    pub fn get(&self, class: ActivityClass) -> &ClassSignalSpec {
        &self.specs[class.index()]
    }

    pub fn get_mut(&mut self, class: ActivityClass) -> &mut ClassSignalSpec {
        &mut self.specs[class.index()]
    }

    /// JSON object keyed by class token; all 15 tokens are required.
    pub fn from_json(text: &str) -> Result<Self, SimError> {
        let map: BTreeMap<String, ClassSignalSpec> =
            serde_json::from_str(text).map_err(|e| SimError::InvalidSpec(e.to_string()))?;
        let mut specs = [None; ActivityClass::COUNT];
        for (token, spec) in map {
            let class: ActivityClass = token
                .parse()
                .map_err(|_| SimError::InvalidSpec(format!("unknown class token `{token}`")))?;
            specs[class.index()] = Some(spec);
        }
        let mut out = [default_specs().specs[0]; ActivityClass::COUNT];
        for (i, s) in specs.into_iter().enumerate() {
            out[i] = s.ok_or_else(|| {
                SimError::InvalidSpec(format!(
                    "missing class `{}`",
                    ActivityClass::from_index(i).unwrap()
                ))
            })?;
        }
        Self::new(out)
    }

    pub fn to_json(&self) -> String {
        let map: BTreeMap<String, ClassSignalSpec> = ActivityClass::all()
            .map(|c| (c.token(), *self.get(c)))
            .collect();
        serde_json::to_string_pretty(&map).expect("specs serialize")
    }
}

impl Default for SignalSpecs {
    fn default() -> Self {
        default_specs()
    }
}

/// Built-in specs. Phone position sets the gravity direction, posture
/// tilts it, walking adds a strong ~2 Hz gait, and riding a bus adds
/// vibration plus, when standing, a slow sway.
pub fn default_specs() -> SignalSpecs {
    use crate::data_model::{PhonePosition as P, Posture, TravelState as T};

    let base = |posture: Posture, position: P| -> [f64; 3] {
        match (posture, position) {
            (Posture::Sitting, P::Pocket) => [0.5, 2.0, 9.6],
            (Posture::Sitting, P::Hand) => [0.3, 4.6, 8.6],
            (Posture::Sitting, P::Backpack) => [2.2, 4.0, 8.7],
            (_, P::Pocket) => [0.5, 9.6, 1.6],
            (_, P::Hand) => [0.3, 6.6, 7.2],
            (_, P::Backpack) => [1.2, 8.6, 4.6],
        }
    };
    let specs = std::array::from_fn(|i| {
        let label = ActivityClass::from_index(i).unwrap().label();
        let accel_base = base(label.posture(), label.position());
        let mut s = ClassSignalSpec {
            accel_base,
            amplitude: [0.0; 3],
            frequency_hz: 0.0,
            noise_std: 0.1,
            speed_mean: 0.0,
            speed_std: 0.05,
            gps_jitter_deg: 2e-5,
            sample_rate_hz: DEFAULT_SAMPLE_RATE_HZ,
            base_jitter: 0.8,
        };
        match (label.state(), label.posture()) {
            (T::Walking, _) => {
                s.amplitude = [1.5, 3.5, 2.0];
                s.frequency_hz = 1.9;
                s.noise_std = 0.8;
                s.speed_mean = 1.4;
                s.speed_std = 0.3;
            }
            (T::Bus, Posture::Standing) => {
                s.amplitude = [0.8, 0.3, 0.8];
                s.frequency_hz = 0.3;
                s.noise_std = 0.6;
                s.speed_mean = 7.0;
                s.speed_std = 2.0;
            }
            (T::Bus, _) => {
                s.amplitude = [0.2, 0.1, 0.2];
                s.frequency_hz = 0.3;
                s.noise_std = 0.5;
                s.speed_mean = 7.0;
                s.speed_std = 2.0;
            }
            (T::Stationary, Posture::Standing) => {
                s.noise_std = 0.2;
            }
            _ => {}
        }
        s
    });
    SignalSpecs::new(specs).expect("built-in specs are valid")
}

/// Identity, placement, and timing of a generated session.
#[derive(Debug, Clone, PartialEq)]
pub struct SessionShape {
    pub session_id: String,
    pub label: Option<ActivityLabel>,
    pub origin: LatLon,
    pub start_ms: u64,
    pub duration_ms: u64,
}

impl Default for SessionShape {
    fn default() -> Self {
        Self {
            session_id: "synthetic".into(),
            label: None,
            origin: LatLon::new(40.4406, -79.9959),
            start_ms: 0,
            duration_ms: DEFAULT_DURATION_MS,
        }
    }
}

fn normal(rng: &mut impl Rng, std: f64) -> f64 {
    let z: f64 = rng.sample(StandardNormal);
    std * z
}

/// `floor(duration · rate)` samples starting at `shape.start_ms`.
pub fn generate_synthetic_session(
    spec: &ClassSignalSpec,
    shape: &SessionShape,
    rng: &mut impl Rng,
) -> SensorSession {
    let n = ((shape.duration_ms as f64 * spec.sample_rate_hz / 1000.0).floor() as usize).max(1);
    let phase = rng.random::<f64>() * 2.0 * PI;
    let base: [f64; 3] =
        std::array::from_fn(|a| spec.accel_base[a] + normal(rng, spec.base_jitter));
    let speed = (spec.speed_mean + normal(rng, spec.speed_std)).max(0.0);
    let heading = rng.random::<f64>() * 360.0;
    let (sin_h, cos_h) = heading.to_radians().sin_cos();
    let lon_scale = METERS_PER_DEGREE * shape.origin.lat.to_radians().cos();

    let samples = (0..n)
        .map(|i| {
            let t = i as f64 / spec.sample_rate_hz;
            let wave = (2.0 * PI * spec.frequency_hz * t + phase).sin();
            let [ax, ay, az]: [f64; 3] = std::array::from_fn(|a| {
                base[a] + spec.amplitude[a] * wave + normal(rng, spec.noise_std)
            });
            let d = speed * t;
            let lat =
                shape.origin.lat + d * cos_h / METERS_PER_DEGREE + normal(rng, spec.gps_jitter_deg);
            let lon = shape.origin.lon + d * sin_h / lon_scale + normal(rng, spec.gps_jitter_deg);
            let reported = (speed + normal(rng, spec.speed_std * 0.25)).max(0.0);
            SensorSample {
                t_ms: shape.start_ms + (t * 1000.0).round() as u64,
                ax,
                ay,
                az,
                gps: Some(GpsFix {
                    lat: lat.clamp(-90.0, 90.0),
                    lon: lon.clamp(-180.0, 180.0),
                    speed: reported,
                    heading,
                }),
            }
        })
        .collect();
    SensorSession::new(shape.session_id.clone(), None, shape.label, samples)
        .expect("generated samples are valid")
}

/// `sessions_per_class` labeled sessions for every class, grouped by class.
pub fn generate_dataset(
    specs: &SignalSpecs,
    sessions_per_class: usize,
    seed: u64,
) -> Vec<SensorSession> {
    generate_dataset_with_counts(specs, &[sessions_per_class; ActivityClass::COUNT], seed)
}

/// Like [`generate_dataset`] with a separate count per class. Class `c`
/// draws from stream `(seed, c)`, so a class's sessions do not depend on
/// the other counts.
pub fn generate_dataset_with_counts(
    specs: &SignalSpecs,
    counts: &[usize; ActivityClass::COUNT],
    seed: u64,
) -> Vec<SensorSession> {
    let origin_rng = &mut stream_rng(seed, u64::MAX);
    let origin = LatLon::new(
        40.4406 + (origin_rng.random::<f64>() - 0.5) * 0.1,
        -79.9959 + (origin_rng.random::<f64>() - 0.5) * 0.1,
    );
    let mut out = Vec::with_capacity(counts.iter().sum());
    for class in ActivityClass::all() {
        let mut rng = stream_rng(seed, class.index() as u64);
        for k in 0..counts[class.index()] {
            let shape = SessionShape {
                session_id: format!("{}-{k:05}", class.token()),
                label: Some(class.label()),
                origin,
                ..SessionShape::default()
            };
            out.push(generate_synthetic_session(
                specs.get(class),
                &shape,
                &mut rng,
            ));
        }
    }
    out
}
