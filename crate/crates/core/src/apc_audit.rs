//! Automatic passenger counter audit.
//!
//! Every rider who boards during a vehicle block must also alight during
//! it, so `Σ ons − Σ offs` over a block should be zero. The block error
//! is that difference; this module summarizes its distribution. No
//! cleaning is applied to the counts beforehand.
//!
//! Blocks are keyed by `(service_date, block_id)` because block ids repeat
//! every service day.

use std::collections::BTreeMap;
use std::io::{Read, Write};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::data_model::DataError;

pub const CSV_HEADER: [&str; 6] = [
    "service_date",
    "block_id",
    "trip_id",
    "stop_sequence",
    "ons",
    "offs",
];

/// Half-width of the cropped histogram view.
pub const CROPPED_LIMIT: i64 = 30;

/// Largest histogram (in unit bins) that will be materialized.
const MAX_HISTOGRAM_BINS: i64 = 10_000_000;

#[derive(Debug, Error)]
pub enum AuditError {
    #[error("no blocks to audit")]
    EmptyDataset,
    #[error("block errors span {min}..={max}, too wide for a unit-bin histogram")]
    HistogramTooWide { min: i64, max: i64 },
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ApcStopRecord {
    pub service_date: String,
    pub block_id: String,
    pub trip_id: String,
    pub stop_sequence: u32,
    pub ons: u32,
    pub offs: u32,
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct BlockKey {
    pub service_date: String,
    pub block_id: String,
}

impl ApcStopRecord {
    pub fn block_key(&self) -> BlockKey {
        BlockKey {
            service_date: self.service_date.clone(),
            block_id: self.block_id.clone(),
        }
    }
}

/// `Σ ons − Σ offs` per block.
pub fn block_errors(records: &[ApcStopRecord]) -> BTreeMap<BlockKey, i64> {
    let mut errors = BTreeMap::new();
    for r in records {
        *errors.entry(r.block_key()).or_insert(0) += r.ons as i64 - r.offs as i64;
    }
    errors
}

/// Mergeable fold over block errors. All fields are integers, so any
/// partition of the blocks merges to exactly the same state.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ErrorStats {
    pub count: u64,
    pub sum: i128,
    pub sum_sq: i128,
    pub nonzero: u64,
    pub min: i64,
    pub max: i64,
    pub histogram: BTreeMap<i64, u64>,
}

impl Default for ErrorStats {
    fn default() -> Self {
        Self {
            count: 0,
            sum: 0,
            sum_sq: 0,
            nonzero: 0,
            min: i64::MAX,
            max: i64::MIN,
            histogram: BTreeMap::new(),
        }
    }
}

impl ErrorStats {
    pub fn push(&mut self, e: i64) {
        self.count += 1;
        self.sum += e as i128;
        self.sum_sq += (e as i128) * (e as i128);
        self.nonzero += u64::from(e != 0);
        self.min = self.min.min(e);
        self.max = self.max.max(e);
        *self.histogram.entry(e).or_insert(0) += 1;
    }

    pub fn merge(mut self, other: ErrorStats) -> ErrorStats {
        self.count += other.count;
        self.sum += other.sum;
        self.sum_sq += other.sum_sq;
        self.nonzero += other.nonzero;
        self.min = self.min.min(other.min);
        self.max = self.max.max(other.max);
        for (bin, c) in other.histogram {
            *self.histogram.entry(bin).or_insert(0) += c;
        }
        self
    }

    pub fn report(&self) -> Result<AuditReport, AuditError> {
        if self.count == 0 {
            return Err(AuditError::EmptyDataset);
        }
        if self.max - self.min >= MAX_HISTOGRAM_BINS {
            return Err(AuditError::HistogramTooWide {
                min: self.min,
                max: self.max,
            });
        }
        let n = self.count as f64;
        // n² · variance, exact in integers
        let scaled = self.count as i128 * self.sum_sq - self.sum * self.sum;
        let variance = scaled as f64 / (n * n);
        let histogram = (self.min..=self.max)
            .map(|bin| (bin, self.histogram.get(&bin).copied().unwrap_or(0)))
            .collect();
        Ok(AuditReport {
            n_blocks: self.count,
            mean: self.sum as f64 / n,
            variance,
            sem: (variance / n).sqrt(),
            nonzero_fraction: self.nonzero as f64 / n,
            min_error: self.min,
            max_error: self.max,
            histogram,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AuditReport {
    pub n_blocks: u64,
    pub mean: f64,
    /// Population variance (divisor `n_blocks`).
    pub variance: f64,
    /// Standard error of the mean, `sqrt(variance / n_blocks)`.
    pub sem: f64,
    pub nonzero_fraction: f64,
    pub min_error: i64,
    pub max_error: i64,
    /// `(bin, count)` for every integer in `[min_error, max_error]`.
    pub histogram: Vec<(i64, u64)>,
}

impl AuditReport {
    /// Histogram restricted to `|error| <= limit`.
    pub fn cropped_histogram(&self, limit: i64) -> Vec<(i64, u64)> {
        self.histogram
            .iter()
            .copied()
            .filter(|(bin, _)| bin.abs() <= limit)
            .collect()
    }
}

pub fn audit_block_errors(
    errors: impl IntoIterator<Item = i64>,
) -> Result<AuditReport, AuditError> {
    let mut stats = ErrorStats::default();
    errors.into_iter().for_each(|e| stats.push(e));
    stats.report()
}

pub fn audit(records: &[ApcStopRecord]) -> Result<AuditReport, AuditError> {
    audit_block_errors(block_errors(records).into_values())
}

/// Parallel audit: records are split into `shards`, block errors are
/// accumulated per shard and summed per key, then the statistics are
/// folded over chunks of blocks and merged. Equal to [`audit`] exactly.
pub fn audit_sharded(records: &[ApcStopRecord], shards: usize) -> Result<AuditReport, AuditError> {
    let shard_len = records.len().div_ceil(shards.max(1)).max(1);
    let errors =
        records
            .par_chunks(shard_len)
            .map(block_errors)
            .reduce(BTreeMap::new, |mut a, b| {
                for (k, e) in b {
                    *a.entry(k).or_insert(0) += e;
                }
                a
            });
    let values: Vec<i64> = errors.into_values().collect();
    let chunk = values.len().div_ceil(shards.max(1)).max(1);
    values
        .par_chunks(chunk)
        .map(|c| {
            let mut s = ErrorStats::default();
            c.iter().for_each(|&e| s.push(e));
            s
        })
        .reduce(ErrorStats::default, ErrorStats::merge)
        .report()
}

pub fn parse_apc_csv(input: impl Read) -> Result<Vec<ApcStopRecord>, DataError> {
    let mut reader = csv::Reader::from_reader(input);
    let malformed = |line: usize, message: String| DataError::MalformedRecord { line, message };
    let header = reader.headers().map_err(|e| malformed(1, e.to_string()))?;
    if header.iter().collect::<Vec<_>>() != CSV_HEADER {
        return Err(malformed(
            1,
            format!("expected header `{}`", CSV_HEADER.join(",")),
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
                        CSV_HEADER[idx], &row[idx]
                    ),
                )
            })
        };
        for idx in [0, 1] {
            if row[idx].is_empty() {
                return Err(malformed(
                    line,
                    format!("field `{}` is empty", CSV_HEADER[idx]),
                ));
            }
        }
        out.push(ApcStopRecord {
            service_date: row[0].to_string(),
            block_id: row[1].to_string(),
            trip_id: row[2].to_string(),
            stop_sequence: int(3)?,
            ons: int(4)?,
            offs: int(5)?,
        });
    }
    Ok(out)
}

pub fn write_apc_csv(records: &[ApcStopRecord], out: impl Write) -> Result<(), DataError> {
    let mut w = csv::Writer::from_writer(out);
    let io = |e: csv::Error| DataError::Io(e.into());
    w.write_record(CSV_HEADER).map_err(io)?;
    for r in records {
        w.write_record([
            r.service_date.as_str(),
            &r.block_id,
            &r.trip_id,
            &r.stop_sequence.to_string(),
            &r.ons.to_string(),
            &r.offs.to_string(),
        ])
        .map_err(io)?;
    }
    w.flush()?;
    Ok(())
}

/// Writes `bin,count` rows.
pub fn write_histogram_csv(histogram: &[(i64, u64)], mut out: impl Write) -> std::io::Result<()> {
    writeln!(out, "bin,count")?;
    for (bin, count) in histogram {
        writeln!(out, "{bin},{count}")?;
    }
    Ok(())
}
