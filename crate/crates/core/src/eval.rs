//! Accuracy, confusion matrices and the two class-merging experiments.
//!
//! Merged results can be produced two ways: post-hoc (map fine predictions
//! and truths through a [`MergeMap`]) or by retraining on merged labels.
//! Reports carry their mode so the two are never mixed up.

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::data_model::{ActivityClass, Posture, TravelState};

#[derive(Debug, Error)]
pub enum EvalError {
    #[error("predictions ({pred}) and truths ({truth}) differ in length")]
    LengthMismatch { pred: usize, truth: usize },
    #[error("nothing to evaluate")]
    EmptyInput,
    #[error("class id {id} out of range for {n_classes} classes")]
    ClassOutOfRange { id: usize, n_classes: usize },
    #[error("invalid merge map: {0}")]
    InvalidMergeMap(String),
}

fn check_lengths(pred: &[usize], truth: &[usize]) -> Result<(), EvalError> {
    if pred.len() != truth.len() {
        return Err(EvalError::LengthMismatch {
            pred: pred.len(),
            truth: truth.len(),
        });
    }
    Ok(())
}

pub fn accuracy(pred: &[usize], truth: &[usize]) -> Result<f64, EvalError> {
    check_lengths(pred, truth)?;
    if pred.is_empty() {
        return Err(EvalError::EmptyInput);
    }
    let hits = pred.iter().zip(truth).filter(|(p, t)| p == t).count();
    Ok(hits as f64 / pred.len() as f64)
}

/// Rows are true classes, columns predicted classes.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ConfusionMatrix {
    pub counts: Vec<Vec<u64>>,
    pub class_names: Vec<String>,
}

impl ConfusionMatrix {
    pub fn n_classes(&self) -> usize {
        self.class_names.len()
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().flatten().sum()
    }

    pub fn trace(&self) -> u64 {
        (0..self.n_classes()).map(|i| self.counts[i][i]).sum()
    }

    pub fn support(&self, class: usize) -> u64 {
        self.counts[class].iter().sum()
    }

    pub fn accuracy(&self) -> f64 {
        self.trace() as f64 / self.total() as f64
    }

    /// Sums cells into the coarse classes of `map`.
    pub fn aggregate(&self, map: &MergeMap) -> Result<ConfusionMatrix, EvalError> {
        if map.mapping.len() != self.n_classes() {
            return Err(EvalError::InvalidMergeMap(format!(
                "map `{}` covers {} classes, matrix has {}",
                map.name,
                map.mapping.len(),
                self.n_classes()
            )));
        }
        let k = map.n_coarse();
        let mut counts = vec![vec![0u64; k]; k];
        for (t, row) in self.counts.iter().enumerate() {
            for (p, &c) in row.iter().enumerate() {
                counts[map.mapping[t]][map.mapping[p]] += c;
            }
        }
        Ok(ConfusionMatrix {
            counts,
            class_names: map.coarse_names.clone(),
        })
    }
}

pub fn confusion(
    pred: &[usize],
    truth: &[usize],
    class_names: &[String],
) -> Result<ConfusionMatrix, EvalError> {
    check_lengths(pred, truth)?;
    let c = class_names.len();
    let mut counts = vec![vec![0u64; c]; c];
    for (&p, &t) in pred.iter().zip(truth) {
        if let Some(&id) = [p, t].iter().find(|&&id| id >= c) {
            return Err(EvalError::ClassOutOfRange { id, n_classes: c });
        }
        counts[t][p] += 1;
    }
    Ok(ConfusionMatrix {
        counts,
        class_names: class_names.to_vec(),
    })
}

/// A total, surjective map from fine classes to a coarser class set.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MergeMap {
    pub name: String,
    pub mapping: Vec<usize>,
    pub coarse_names: Vec<String>,
}

pub const TRANSPORT: &str = "transport";
pub const BUS_POSTURE: &str = "bus-posture";

/// Coarse ids of the bus-posture map.
pub const BUS_STANDING: usize = 0;
pub const BUS_SITTING: usize = 1;
pub const OTHER: usize = 2;

impl MergeMap {
    pub fn new(
        name: impl Into<String>,
        mapping: Vec<usize>,
        coarse_names: Vec<String>,
    ) -> Result<Self, EvalError> {
        let name = name.into();
        let k = coarse_names.len();
        if let Some(&bad) = mapping.iter().find(|&&m| m >= k) {
            return Err(EvalError::InvalidMergeMap(format!(
                "target {bad} out of range for {k} coarse classes"
            )));
        }
        if let Some(missing) = (0..k).find(|c| !mapping.contains(c)) {
            return Err(EvalError::InvalidMergeMap(format!(
                "coarse class `{}` has no fine class",
                coarse_names[missing]
            )));
        }
        Ok(Self {
            name,
            mapping,
            coarse_names,
        })
    }

    /// 15 classes onto bus / walking / stationary.
    pub fn transport() -> Self {
        let mapping = ActivityClass::all()
            .map(|c| match c.label().state() {
                TravelState::Bus => 0,
                TravelState::Walking => 1,
                TravelState::Stationary => 2,
            })
            .collect();
        Self::new(
            TRANSPORT,
            mapping,
            vec!["bus".into(), "walking".into(), "stationary".into()],
        )
        .unwrap()
    }

    /// 15 classes onto standing on a bus / sitting on a bus / other.
    pub fn bus_posture() -> Self {
        let mapping = ActivityClass::all().map(bus_posture_of).collect();
        Self::new(
            BUS_POSTURE,
            mapping,
            vec!["bus-standing".into(), "bus-sitting".into(), "other".into()],
        )
        .unwrap()
    }

    pub fn by_name(name: &str) -> Option<Self> {
        match name {
            TRANSPORT => Some(Self::transport()),
            BUS_POSTURE => Some(Self::bus_posture()),
            _ => None,
        }
    }

    pub fn n_coarse(&self) -> usize {
        self.coarse_names.len()
    }

    pub fn apply(&self, fine: usize) -> usize {
        self.mapping[fine]
    }

    pub fn apply_all(&self, fine: &[usize]) -> Result<Vec<usize>, EvalError> {
        fine.iter()
            .map(|&f| {
                self.mapping
                    .get(f)
                    .copied()
                    .ok_or(EvalError::ClassOutOfRange {
                        id: f,
                        n_classes: self.mapping.len(),
                    })
            })
            .collect()
    }

    /// Sizes of each coarse class's preimage.
    pub fn block_sizes(&self) -> Vec<usize> {
        (0..self.n_coarse())
            .map(|c| self.mapping.iter().filter(|&&m| m == c).count())
            .collect()
    }
}

/// Bus-posture coarse id of a fine class.
pub fn bus_posture_of(class: ActivityClass) -> usize {
    let label = class.label();
    match (label.state(), label.posture()) {
        (TravelState::Bus, Posture::Standing) => BUS_STANDING,
        (TravelState::Bus, Posture::Sitting) => BUS_SITTING,
        _ => OTHER,
    }
}

/// Post-hoc merge: maps both sides through `map`, then scores.
pub fn merge_eval(
    pred_fine: &[usize],
    truth_fine: &[usize],
    map: &MergeMap,
) -> Result<(f64, ConfusionMatrix), EvalError> {
    check_lengths(pred_fine, truth_fine)?;
    let pred = map.apply_all(pred_fine)?;
    let truth = map.apply_all(truth_fine)?;
    let acc = accuracy(&pred, &truth)?;
    Ok((acc, confusion(&pred, &truth, &map.coarse_names)?))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum ReportMode {
    #[serde(rename = "fine")]
    Fine,
    #[serde(rename = "merged-posthoc")]
    MergedPosthoc,
    #[serde(rename = "merged-retrain")]
    MergedRetrain,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub mode: ReportMode,
    pub map: Option<String>,
    pub accuracy: f64,
    pub classes: Vec<String>,
    pub matrix: Vec<Vec<u64>>,
}

impl EvalReport {
    pub fn new(mode: ReportMode, map: Option<&str>, matrix: &ConfusionMatrix) -> Self {
        Self {
            mode,
            map: map.map(str::to_string),
            accuracy: matrix.accuracy(),
            classes: matrix.class_names.clone(),
            matrix: matrix.counts.clone(),
        }
    }
}

/// Short axis label for a class name, using the S/W/B, h/p/b, ↑/↓ key.
pub fn class_symbol(name: &str) -> String {
    if let Ok(class) = name.parse::<ActivityClass>() {
        return class.symbol();
    }
    match name {
        "bus" => "B".into(),
        "walking" => "W".into(),
        "stationary" => "S".into(),
        "bus-standing" => "B↑".into(),
        "bus-sitting" => "B↓".into(),
        "other" => "O".into(),
        other => other.into(),
    }
}

pub const SYMBOL_KEY: [(&str, &str); 8] = [
    ("S", "Stationary"),
    ("W", "Walking"),
    ("B", "On Bus"),
    ("h", "Hand"),
    ("p", "Pocket"),
    ("b", "Backpack/Bag"),
    ("↑", "Standing"),
    ("↓", "Sitting"),
];

/// Plain-text confusion matrix (rows true, columns predicted) followed by
/// the symbol key.
pub fn render_report(report: &EvalReport) -> String {
    let symbols: Vec<String> = report.classes.iter().map(|c| class_symbol(c)).collect();
    let width = |s: &str| s.chars().count();
    let corner = "true\\pred";
    let label_w = symbols
        .iter()
        .map(|s| width(s))
        .max()
        .unwrap_or(0)
        .max(width(corner));
    let cell_w = 1 + report
        .matrix
        .iter()
        .flatten()
        .map(|c| c.to_string().len())
        .chain(symbols.iter().map(|s| width(s)))
        .max()
        .unwrap_or(1);
    let right = |s: &str, w: usize| format!("{}{s}", " ".repeat(w.saturating_sub(width(s))));

    let mode = match report.mode {
        ReportMode::Fine => "fine",
        ReportMode::MergedPosthoc => "merged-posthoc",
        ReportMode::MergedRetrain => "merged-retrain",
    };
    let mut out = String::new();
    let _ = writeln!(
        out,
        "mode: {mode}  map: {}  accuracy: {:.4}",
        report.map.as_deref().unwrap_or("none"),
        report.accuracy
    );
    out.push_str(&right(corner, label_w));
    for sym in &symbols {
        out.push_str(&right(sym, cell_w));
    }
    out.push('\n');
    for (sym, row) in symbols.iter().zip(&report.matrix) {
        out.push_str(&right(sym, label_w));
        for c in row {
            out.push_str(&right(&c.to_string(), cell_w));
        }
        out.push('\n');
    }
    out.push_str("key:");
    for (sym, meaning) in SYMBOL_KEY {
        let _ = write!(out, " {sym}={meaning}");
    }
    out.push('\n');
    out
}
