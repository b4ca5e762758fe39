//! 48-value statistical feature vector: eight summary statistics for each
//! of six channels (three acceleration axes, latitude, longitude, speed).
//!
//! Heading is deliberately never read. Layout is channel-major, so the
//! feature at `8 * channel + statistic` is that statistic of that channel.

use std::io::{Read, Write};

use thiserror::Error;

use crate::data_model::{ActivityClass, DataError, SensorSession};

pub const N_CHANNELS: usize = 6;
pub const N_STATISTICS: usize = 8;
pub const N_FEATURES: usize = N_CHANNELS * N_STATISTICS;

#[derive(Debug, Error)]
pub enum FeatureError {
    #[error("cannot summarize an empty channel")]
    EmptyChannel,
    #[error("session has no samples")]
    EmptySession,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Channel {
    Ax,
    Ay,
    Az,
    Lat,
    Lon,
    Speed,
}

impl Channel {
    pub const ALL: [Channel; N_CHANNELS] = [
        Channel::Ax,
        Channel::Ay,
        Channel::Az,
        Channel::Lat,
        Channel::Lon,
        Channel::Speed,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Channel::Ax => "ax",
            Channel::Ay => "ay",
            Channel::Az => "az",
            Channel::Lat => "lat",
            Channel::Lon => "lon",
            Channel::Speed => "speed",
        }
    }

    pub fn is_gps(self) -> bool {
        matches!(self, Channel::Lat | Channel::Lon | Channel::Speed)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Statistic {
    Mean,
    MeanAbs,
    Median,
    Variance,
    Std,
    AvgAbsDiff,
    Iqr,
    P75,
}

impl Statistic {
    pub const ALL: [Statistic; N_STATISTICS] = [
        Statistic::Mean,
        Statistic::MeanAbs,
        Statistic::Median,
        Statistic::Variance,
        Statistic::Std,
        Statistic::AvgAbsDiff,
        Statistic::Iqr,
        Statistic::P75,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Statistic::Mean => "mean",
            Statistic::MeanAbs => "mean_abs",
            Statistic::Median => "median",
            Statistic::Variance => "variance",
            Statistic::Std => "std",
            Statistic::AvgAbsDiff => "avg_abs_diff",
            Statistic::Iqr => "iqr",
            Statistic::P75 => "p75",
        }
    }
}

pub fn feature_index(channel: Channel, statistic: Statistic) -> usize {
    let c = Channel::ALL.iter().position(|&x| x == channel).unwrap();
    let s = Statistic::ALL.iter().position(|&x| x == statistic).unwrap();
    N_STATISTICS * c + s
}

/// The eight summary statistics of one channel.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct Summary {
    pub mean: f64,
    /// Mean of absolute values.
    pub mean_abs: f64,
    pub median: f64,
    /// Population variance (divisor N).
    pub variance: f64,
    pub std: f64,
    /// Mean absolute deviation from the mean.
    pub avg_abs_diff: f64,
    pub iqr: f64,
    pub p75: f64,
}

impl Summary {
    pub fn to_array(&self) -> [f64; N_STATISTICS] {
        [
            self.mean,
            self.mean_abs,
            self.median,
            self.variance,
            self.std,
            self.avg_abs_diff,
            self.iqr,
            self.p75,
        ]
    }

    pub fn get(&self, statistic: Statistic) -> f64 {
        self.to_array()[Statistic::ALL.iter().position(|&s| s == statistic).unwrap()]
    }
}

/// Percentile of already sorted data, linearly interpolated between the
/// closest ranks (rank `p/100 * (n-1)`).
pub fn percentile_sorted(sorted: &[f64], p: f64) -> f64 {
    let rank = p / 100.0 * (sorted.len() - 1) as f64;
    let lo = rank.floor() as usize;
    let hi = rank.ceil() as usize;
    let frac = rank - lo as f64;
    if lo == hi {
        sorted[lo]
    } else {
        sorted[lo] + (sorted[hi] - sorted[lo]) * frac
    }
}

pub fn summarize(values: &[f64]) -> Result<Summary, FeatureError> {
    if values.is_empty() {
        return Err(FeatureError::EmptyChannel);
    }
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let mean_abs = values.iter().map(|x| x.abs()).sum::<f64>() / n;
    let variance = values.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / n;
    let avg_abs_diff = values.iter().map(|x| (x - mean).abs()).sum::<f64>() / n;

    let mut sorted = values.to_vec();
    sorted.sort_by(f64::total_cmp);
    let p25 = percentile_sorted(&sorted, 25.0);
    let median = percentile_sorted(&sorted, 50.0);
    let p75 = percentile_sorted(&sorted, 75.0);

    Ok(Summary {
        mean,
        mean_abs,
        median,
        variance,
        std: variance.sqrt(),
        avg_abs_diff,
        iqr: p75 - p25,
        p75,
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FeatureVector {
    pub values: [f64; N_FEATURES],
    /// No sample in the session carried GPS; the 24 GPS features are zero.
    pub gps_missing: bool,
}

impl FeatureVector {
    pub fn block(&self, channel: Channel) -> &[f64] {
        let start = feature_index(channel, Statistic::Mean);
        &self.values[start..start + N_STATISTICS]
    }
}

/// Pulls one channel out of a session. GPS channels only include samples
/// that carry a fix.
pub fn channel_values(session: &SensorSession, channel: Channel) -> Vec<f64> {
    session
        .samples()
        .iter()
        .filter_map(|s| match channel {
            Channel::Ax => Some(s.ax),
            Channel::Ay => Some(s.ay),
            Channel::Az => Some(s.az),
            Channel::Lat => s.gps.map(|g| g.lat),
            Channel::Lon => s.gps.map(|g| g.lon),
            Channel::Speed => s.gps.map(|g| g.speed),
        })
        .collect()
}

pub fn extract_features(session: &SensorSession) -> Result<FeatureVector, FeatureError> {
    if session.samples().is_empty() {
        return Err(FeatureError::EmptySession);
    }
    let gps_missing = session.samples().iter().all(|s| s.gps.is_none());
    let mut values = [0.0; N_FEATURES];
    for (c, &channel) in Channel::ALL.iter().enumerate() {
        if channel.is_gps() && gps_missing {
            continue;
        }
        let summary = summarize(&channel_values(session, channel))?;
        values[c * N_STATISTICS..(c + 1) * N_STATISTICS].copy_from_slice(&summary.to_array());
    }
    Ok(FeatureVector {
        values,
        gps_missing,
    })
}

/// One row of the feature matrix file.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureRow {
    pub session_id: String,
    pub label: Option<ActivityClass>,
    pub features: FeatureVector,
}

pub fn feature_csv_header() -> Vec<String> {
    let mut h = vec!["session_id".to_string(), "label_class".to_string()];
    h.extend((0..N_FEATURES).map(|i| format!("f{i:02}")));
    h.push("gps_missing".into());
    h
}

pub fn write_feature_csv(rows: &[FeatureRow], out: impl Write) -> Result<(), DataError> {
    let mut w = csv::Writer::from_writer(out);
    let io = |e: csv::Error| DataError::Io(e.into());
    w.write_record(feature_csv_header()).map_err(io)?;
    for r in rows {
        let mut rec = vec![
            r.session_id.clone(),
            r.label.map(|c| c.token()).unwrap_or_default(),
        ];
        rec.extend(r.features.values.iter().map(f64::to_string));
        rec.push(r.features.gps_missing.to_string());
        w.write_record(&rec).map_err(io)?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_feature_csv(input: impl Read) -> Result<Vec<FeatureRow>, DataError> {
    let mut reader = csv::Reader::from_reader(input);
    let malformed = |line: usize, message: String| DataError::MalformedRecord { line, message };
    let header = reader.headers().map_err(|e| malformed(1, e.to_string()))?;
    if header.iter().map(str::to_string).collect::<Vec<_>>() != feature_csv_header() {
        return Err(malformed(1, "unexpected feature matrix header".into()));
    }
    let mut rows = Vec::new();
    for rec in reader.records() {
        let rec = rec.map_err(|e| {
            malformed(
                e.position().map(|p| p.line() as usize).unwrap_or(0),
                e.to_string(),
            )
        })?;
        let line = rec.position().map(|p| p.line() as usize).unwrap_or(0);
        let label =
            match &rec[1] {
                "" => None,
                token => Some(token.parse::<ActivityClass>().map_err(|_| {
                    DataError::UnknownLabelToken {
                        line,
                        token: token.to_string(),
                    }
                })?),
            };
        let mut values = [0.0; N_FEATURES];
        for (i, v) in values.iter_mut().enumerate() {
            let cell = &rec[i + 2];
            *v = cell
                .parse::<f64>()
                .ok()
                .filter(|x| x.is_finite())
                .ok_or_else(|| malformed(line, format!("field `f{i:02}`: bad value `{cell}`")))?;
        }
        let gps_missing = match &rec[N_FEATURES + 2] {
            "true" => true,
            "false" => false,
            other => {
                return Err(malformed(
                    line,
                    format!("field `gps_missing`: bad value `{other}`"),
                ))
            }
        };
        rows.push(FeatureRow {
            session_id: rec[0].to_string(),
            label,
            features: FeatureVector {
                values,
                gps_missing,
            },
        });
    }
    Ok(rows)
}
