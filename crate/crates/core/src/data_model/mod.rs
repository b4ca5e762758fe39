//! Labeled sensor sessions: domain types, ingestion, cleaning and the
//! class-balanced train/test split.

mod codec;
mod label;

pub use codec::{parse_sessions, write_sessions, SessionFormat};
pub use label::{ActivityClass, ActivityLabel, PhonePosition, Posture, TravelState};

use std::collections::HashSet;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

/// Training-set sessions per class in the reference corpus, in
/// [`ActivityClass`] order. Sums to 2909.
pub const TABLE1_TRAIN_COUNTS: [usize; ActivityClass::COUNT] = [
    198, 217, 139, 212, 247, 210, 197, 194, 196, 202, 187, 165, 179, 183, 183,
];

/// Test-set sessions per class in the reference corpus.
pub const TABLE1_TEST_PER_CLASS: usize = 20;

pub const DEFAULT_MIN_SAMPLES: usize = 200;
pub const DEFAULT_MIN_SPAN_MS: u64 = 10_000;

#[derive(Debug, Error)]
pub enum DataError {
    #[error("line {line}: malformed record: {message}")]
    MalformedRecord { line: usize, message: String },

    #[error("line {line}: unknown label token `{token}`")]
    UnknownLabelToken { line: usize, token: String },

    #[error("session `{session_id}`: timestamps decrease at sample {index}")]
    NonMonotonicTimestamps { session_id: String, index: usize },

    #[error("invalid label: state `{state}` with posture `{posture}`")]
    InvalidLabel { state: String, posture: String },

    #[error("session `{session_id}` has no label")]
    UnlabeledSession { session_id: String },

    #[error("class {class} has {have} sessions, {need} required for the test split")]
    InsufficientClassSize {
        class: String,
        have: usize,
        need: usize,
    },

    #[error("I/O error: {0}")]
    Io(#[from] std::io::Error),
}

/// GPS portion of a sample. Absent indoors.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GpsFix {
    pub lat: f64,
    pub lon: f64,
    /// m/s
    pub speed: f64,
    /// degrees in [0, 360)
    pub heading: f64,
}

/// One reading. Acceleration is in m/s², stored as delivered by the device.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SensorSample {
    pub t_ms: u64,
    pub ax: f64,
    pub ay: f64,
    pub az: f64,
    pub gps: Option<GpsFix>,
}

impl SensorSample {
    fn check(&self) -> Result<(), String> {
        if ![self.ax, self.ay, self.az].iter().all(|v| v.is_finite()) {
            return Err("acceleration must be finite".into());
        }
        if let Some(g) = &self.gps {
            if !(-90.0..=90.0).contains(&g.lat) {
                return Err(format!("lat {} out of range", g.lat));
            }
            if !(-180.0..=180.0).contains(&g.lon) {
                return Err(format!("lon {} out of range", g.lon));
            }
            if !(g.speed >= 0.0 && g.speed.is_finite()) {
                return Err(format!("speed {} must be non-negative", g.speed));
            }
            if !(0.0..360.0).contains(&g.heading) {
                return Err(format!("heading {} out of [0, 360)", g.heading));
            }
        }
        Ok(())
    }
}

/// One recording: a non-empty, time-ordered sample series with an
/// optional activity label.
#[derive(Debug, Clone, PartialEq)]
pub struct SensorSession {
    pub session_id: String,
    pub device_id: Option<String>,
    pub label: Option<ActivityLabel>,
    samples: Vec<SensorSample>,
}

impl SensorSession {
    /// Validates the sample invariants. `line` is only used for error
    /// reporting.
    pub fn new(
        session_id: impl Into<String>,
        device_id: Option<String>,
        label: Option<ActivityLabel>,
        samples: Vec<SensorSample>,
    ) -> Result<Self, DataError> {
        Self::validated(session_id.into(), device_id, label, samples, 0)
    }

    pub(crate) fn validated(
        session_id: String,
        device_id: Option<String>,
        label: Option<ActivityLabel>,
        samples: Vec<SensorSample>,
        line: usize,
    ) -> Result<Self, DataError> {
        if samples.is_empty() {
            return Err(DataError::MalformedRecord {
                line,
                message: format!("session `{session_id}` has no samples"),
            });
        }
        for (i, s) in samples.iter().enumerate() {
            s.check().map_err(|message| DataError::MalformedRecord {
                line,
                message: format!("session `{session_id}` sample {i}: {message}"),
            })?;
        }
        if let Some(i) = samples.windows(2).position(|w| w[1].t_ms < w[0].t_ms) {
            return Err(DataError::NonMonotonicTimestamps {
                session_id,
                index: i + 1,
            });
        }
        Ok(Self {
            session_id,
            device_id,
            label,
            samples,
        })
    }

    pub fn samples(&self) -> &[SensorSample] {
        &self.samples
    }

    pub fn class(&self) -> Option<ActivityClass> {
        self.label.map(|l| l.class())
    }

    /// Last minus first timestamp.
    pub fn span_ms(&self) -> u64 {
        // non-empty and sorted by construction
        self.samples[self.samples.len() - 1].t_ms - self.samples[0].t_ms
    }
}

/// Keeps sessions with at least `min_samples` readings spanning at least
/// `min_span_ms`. Order is preserved.
pub fn clean_sessions(
    sessions: Vec<SensorSession>,
    min_samples: usize,
    min_span_ms: u64,
) -> Vec<SensorSession> {
    sessions
        .into_iter()
        .filter(|s| s.samples.len() >= min_samples && s.span_ms() >= min_span_ms)
        .collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct DatasetSplit {
    pub train: Vec<SensorSession>,
    pub test: Vec<SensorSession>,
    pub seed: u64,
}

/// Draws exactly `per_class_test` sessions of every class into the test
/// side, uniformly at random; everything else goes to train.
///
/// One ChaCha stream seeded by `seed` shuffles each class in
/// [`ActivityClass`] order. Both sides keep input order.
pub fn split_train_test(
    sessions: Vec<SensorSession>,
    per_class_test: usize,
    seed: u64,
) -> Result<DatasetSplit, DataError> {
    let mut by_class: Vec<Vec<usize>> = vec![Vec::new(); ActivityClass::COUNT];
    for (i, s) in sessions.iter().enumerate() {
        let class = s.class().ok_or_else(|| DataError::UnlabeledSession {
            session_id: s.session_id.clone(),
        })?;
        by_class[class.index()].push(i);
    }
    for (c, members) in by_class.iter().enumerate() {
        if members.len() < per_class_test {
            return Err(DataError::InsufficientClassSize {
                class: ActivityClass::from_index(c).unwrap().token(),
                have: members.len(),
                need: per_class_test,
            });
        }
    }

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut in_test = vec![false; sessions.len()];
    for members in &mut by_class {
        members.shuffle(&mut rng);
        for &i in &members[..per_class_test] {
            in_test[i] = true;
        }
    }

    let mut seen = HashSet::new();
    let (mut train, mut test) = (Vec::new(), Vec::new());
    for (s, is_test) in sessions.into_iter().zip(in_test) {
        if !seen.insert(s.session_id.clone()) {
            return Err(DataError::MalformedRecord {
                line: 0,
                message: format!("duplicate session_id `{}`", s.session_id),
            });
        }
        if is_test {
            test.push(s);
        } else {
            train.push(s);
        }
    }
    Ok(DatasetSplit { train, test, seed })
}
