//! Session JSONL and wide-CSV codecs.
//!
//! JSONL carries one session object per line. The CSV form has one row per
//! sample, with consecutive rows sharing a `session_id` forming a session;
//! it has no device column, so `device_id` does not survive a CSV trip.

use std::collections::HashSet;
use std::io::{BufRead, BufReader, Read, Write};

use serde::{Deserialize, Serialize};

use super::{
    ActivityLabel, DataError, GpsFix, PhonePosition, Posture, SensorSample, SensorSession,
    TravelState,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SessionFormat {
    JsonLines,
    Csv,
}

pub const CSV_HEADER: [&str; 12] = [
    "session_id",
    "t_ms",
    "ax",
    "ay",
    "az",
    "lat",
    "lon",
    "speed",
    "heading",
    "state",
    "posture",
    "position",
];

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct SessionRecord {
    session_id: String,
    #[serde(default)]
    device_id: Option<String>,
    #[serde(default)]
    label: Option<LabelRecord>,
    samples: Vec<SampleRecord>,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct LabelRecord {
    state: String,
    #[serde(default)]
    posture: Option<String>,
    position: String,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct SampleRecord {
    t_ms: u64,
    ax: f64,
    ay: f64,
    az: f64,
    #[serde(default)]
    gps: Option<GpsRecord>,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct GpsRecord {
    lat: f64,
    lon: f64,
    speed: f64,
    heading: f64,
}

fn parse_label(
    line: usize,
    state: &str,
    posture: Option<&str>,
    position: &str,
) -> Result<ActivityLabel, DataError> {
    let unknown = |token: String| DataError::UnknownLabelToken { line, token };
    let state: TravelState = state.parse().map_err(unknown)?;
    let posture = match posture {
        None => Posture::NotApplicable,
        Some(p) => p.parse().map_err(unknown)?,
    };
    let position: PhonePosition = position.parse().map_err(unknown)?;
    ActivityLabel::new(state, posture, position).map_err(|e| DataError::MalformedRecord {
        line,
        message: e.to_string(),
    })
}

/// Parses all sessions from `input`, in input order.
pub fn parse_sessions(
    input: impl Read,
    format: SessionFormat,
) -> Result<Vec<SensorSession>, DataError> {
    match format {
        SessionFormat::JsonLines => parse_jsonl(input),
        SessionFormat::Csv => parse_csv(input),
    }
}

fn parse_jsonl(input: impl Read) -> Result<Vec<SensorSession>, DataError> {
    let mut out = Vec::new();
    for (i, line) in BufReader::new(input).lines().enumerate() {
        let line_no = i + 1;
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let rec: SessionRecord =
            serde_json::from_str(&line).map_err(|e| DataError::MalformedRecord {
                line: line_no,
                message: e.to_string(),
            })?;
        let label = rec
            .label
            .map(|l| parse_label(line_no, &l.state, l.posture.as_deref(), &l.position))
            .transpose()?;
        let samples = rec
            .samples
            .into_iter()
            .map(|s| SensorSample {
                t_ms: s.t_ms,
                ax: s.ax,
                ay: s.ay,
                az: s.az,
                gps: s.gps.map(|g| GpsFix {
                    lat: g.lat,
                    lon: g.lon,
                    speed: g.speed,
                    heading: g.heading,
                }),
            })
            .collect();
        out.push(SensorSession::validated(
            rec.session_id,
            rec.device_id,
            label,
            samples,
            line_no,
        )?);
    }
    Ok(out)
}

struct PendingSession {
    id: String,
    label: Option<ActivityLabel>,
    first_line: usize,
    samples: Vec<SensorSample>,
}

fn parse_csv(input: impl Read) -> Result<Vec<SensorSession>, DataError> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .from_reader(input);
    let malformed = |line: usize, message: String| DataError::MalformedRecord { line, message };

    let header = reader
        .headers()
        .map_err(|e| malformed(1, e.to_string()))?
        .clone();
    if header.is_empty() {
        return Ok(Vec::new());
    }
    if header.iter().collect::<Vec<_>>() != CSV_HEADER {
        return Err(malformed(
            1,
            format!("expected header `{}`", CSV_HEADER.join(",")),
        ));
    }

    let mut out = Vec::new();
    let mut finished: HashSet<String> = HashSet::new();
    let mut pending: Option<PendingSession> = None;

    for row in reader.records() {
        let row = row.map_err(|e| {
            let line = e.position().map(|p| p.line() as usize).unwrap_or(0);
            malformed(line, e.to_string())
        })?;
        let line = row.position().map(|p| p.line() as usize).unwrap_or(0);
        let num = |idx: usize| -> Result<f64, DataError> {
            row[idx].parse::<f64>().map_err(|_| {
                malformed(
                    line,
                    format!("field `{}`: not a number: `{}`", CSV_HEADER[idx], &row[idx]),
                )
            })
        };

        let t_ms = row[1].parse::<u64>().map_err(|_| {
            malformed(
                line,
                format!("field `t_ms`: not a non-negative integer: `{}`", &row[1]),
            )
        })?;
        let gps_cells = (5..9).filter(|&i| !row[i].is_empty()).count();
        let gps = match gps_cells {
            0 => None,
            4 => Some(GpsFix {
                lat: num(5)?,
                lon: num(6)?,
                speed: num(7)?,
                heading: num(8)?,
            }),
            _ => {
                return Err(malformed(
                    line,
                    "GPS cells must be all present or all empty".into(),
                ))
            }
        };
        let sample = SensorSample {
            t_ms,
            ax: num(2)?,
            ay: num(3)?,
            az: num(4)?,
            gps,
        };
        let label = match (&row[9], &row[10], &row[11]) {
            ("", "", "") => None,
            (state, posture, position) => Some(parse_label(
                line,
                state,
                (!posture.is_empty()).then_some(posture),
                position,
            )?),
        };

        let id = &row[0];
        if id.is_empty() {
            return Err(malformed(line, "field `session_id` is empty".into()));
        }
        match &mut pending {
            Some(p) if p.id == id => {
                if p.label != label {
                    return Err(malformed(
                        line,
                        format!("label changes within session `{id}`"),
                    ));
                }
                p.samples.push(sample);
            }
            _ => {
                if let Some(done) = pending.take() {
                    finished.insert(done.id.clone());
                    out.push(SensorSession::validated(
                        done.id,
                        None,
                        done.label,
                        done.samples,
                        done.first_line,
                    )?);
                }
                if finished.contains(id) {
                    return Err(malformed(
                        line,
                        format!("rows of session `{id}` are not contiguous"),
                    ));
                }
                pending = Some(PendingSession {
                    id: id.to_string(),
                    label,
                    first_line: line,
                    samples: vec![sample],
                });
            }
        }
    }
    if let Some(done) = pending {
        out.push(SensorSession::validated(
            done.id,
            None,
            done.label,
            done.samples,
            done.first_line,
        )?);
    }
    Ok(out)
}

/// Serializes sessions in the given format. Floats are written in their
/// shortest round-trip decimal form.
pub fn write_sessions(
    sessions: &[SensorSession],
    format: SessionFormat,
    mut out: impl Write,
) -> Result<(), DataError> {
    match format {
        SessionFormat::JsonLines => {
            for s in sessions {
                let rec = SessionRecord {
                    session_id: s.session_id.clone(),
                    device_id: s.device_id.clone(),
                    label: s.label.map(|l| LabelRecord {
                        state: l.state().token().to_string(),
                        posture: l.posture().token().map(str::to_string),
                        position: l.position().token().to_string(),
                    }),
                    samples: s
                        .samples()
                        .iter()
                        .map(|x| SampleRecord {
                            t_ms: x.t_ms,
                            ax: x.ax,
                            ay: x.ay,
                            az: x.az,
                            gps: x.gps.map(|g| GpsRecord {
                                lat: g.lat,
                                lon: g.lon,
                                speed: g.speed,
                                heading: g.heading,
                            }),
                        })
                        .collect(),
                };
                serde_json::to_writer(&mut out, &rec).map_err(std::io::Error::from)?;
                out.write_all(b"\n")?;
            }
        }
        SessionFormat::Csv => {
            let mut w = csv::Writer::from_writer(out);
            let csv_err = |e: csv::Error| DataError::Io(e.into());
            w.write_record(CSV_HEADER).map_err(csv_err)?;
            for s in sessions {
                let (state, posture, position) = match s.label {
                    Some(l) => (
                        l.state().token(),
                        l.posture().token().unwrap_or(""),
                        l.position().token(),
                    ),
                    None => ("", "", ""),
                };
                for x in s.samples() {
                    let gps: [String; 4] = match x.gps {
                        Some(g) => [g.lat, g.lon, g.speed, g.heading].map(|v| v.to_string()),
                        None => Default::default(),
                    };
                    w.write_record([
                        s.session_id.as_str(),
                        &x.t_ms.to_string(),
                        &x.ax.to_string(),
                        &x.ay.to_string(),
                        &x.az.to_string(),
                        &gps[0],
                        &gps[1],
                        &gps[2],
                        &gps[3],
                        state,
                        posture,
                        position,
                    ])
                    .map_err(csv_err)?;
                }
            }
            w.flush()?;
        }
    }
    Ok(())
}
