//! Tracking indicators: RMSE and time-above-threshold (TAT) of the real
//! error, per axis, plus trial averaging and per-condition summaries.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::copstream::CoPSample;
use crate::feedback::{ActuatorCommand, Axis};
use crate::refpath::ReferencePath;
use crate::simwalker::Condition;

#[derive(Debug, Error, PartialEq)]
pub enum MetricsError {
    #[error("trial record has no usable samples")]
    Empty,
    #[error("measured series has {measured} samples, reference has {reference}")]
    LengthMismatch { measured: usize, reference: usize },
    #[error("sample {index} at t={t} is off the reference grid")]
    Misaligned { index: usize, t: f64 },
    #[error("threshold must be positive, got {0}")]
    BadThreshold(f64),
    #[error("cannot average records from different conditions ({0} and {1})")]
    MixedConditions(Condition, Condition),
}

/// A command together with the tick that emitted it.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TimedCommand {
    pub t: f64,
    pub command: ActuatorCommand,
}

/// One trial: the reference, the time-aligned measurement, and the commands.
#[derive(Debug, Clone, PartialEq)]
pub struct TrialRecord {
    reference: ReferencePath,
    measured: Vec<CoPSample>,
    pub commands: Vec<TimedCommand>,
    pub condition: Condition,
    pub trial_index: u32,
    pub seed: u64,
    /// Walker instance (subject) the trial belongs to.
    pub walker: String,
}

// Grid alignment slack, in samples.
const ALIGN_TOL: f64 = 1e-6;

impl TrialRecord {
    pub fn new(
        reference: ReferencePath,
        measured: Vec<CoPSample>,
        condition: Condition,
        walker: impl Into<String>,
    ) -> Result<Self, MetricsError> {
        if measured.len() != reference.len() {
            return Err(MetricsError::LengthMismatch {
                measured: measured.len(),
                reference: reference.len(),
            });
        }
        for (index, s) in measured.iter().enumerate() {
            if ((s.t - reference.time_at(index)) * reference.rate()).abs() > ALIGN_TOL {
                return Err(MetricsError::Misaligned { index, t: s.t });
            }
        }
        Ok(TrialRecord {
            reference,
            measured,
            commands: Vec::new(),
            condition,
            trial_index: 0,
            seed: 0,
            walker: walker.into(),
        })
    }

    pub fn reference(&self) -> &ReferencePath {
        &self.reference
    }

    pub fn measured(&self) -> &[CoPSample] {
        &self.measured
    }

    /// Real error on `axis` for every sample; `None` where the sample is invalid.
    pub fn real_errors(&self, axis: Axis) -> impl Iterator<Item = Option<f64>> + '_ {
        self.measured
            .iter()
            .zip(self.reference.points())
            .map(move |(s, &(rx, ry))| {
                let e = match axis {
                    Axis::Ap => rx - s.x,
                    Axis::Ml => ry - s.y,
                };
                s.valid.then_some(e)
            })
    }

    fn invalid_count(&self) -> usize {
        self.measured.iter().filter(|s| !s.valid).count()
    }
}

/// Root mean square of the real error. Invalid samples are dropped and `N`
/// shrinks accordingly.
pub fn rmse(record: &TrialRecord, axis: Axis) -> Result<f64, MetricsError> {
    let errors: Vec<f64> = record.real_errors(axis).flatten().collect();
    if errors.is_empty() {
        return Err(MetricsError::Empty);
    }
    let skipped = record.invalid_count();
    if skipped > 0 {
        log::warn!(
            "{} {} trial {}: {skipped} invalid samples excluded from RMSE",
            record.walker,
            record.condition,
            record.trial_index
        );
    }
    Ok(root_mean_square(&errors))
}

// Scaled by the largest magnitude, so a constant series comes back exactly.
fn root_mean_square(values: &[f64]) -> f64 {
    let scale = values.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    if scale == 0.0 {
        return 0.0;
    }
    let sum: f64 = values.iter().map(|v| (v / scale) * (v / scale)).sum();
    scale * (sum / values.len() as f64).sqrt()
}

/// Percentage of samples whose real error magnitude strictly exceeds `th`.
/// Invalid samples count as above threshold.
pub fn tat(record: &TrialRecord, axis: Axis, th: f64) -> Result<f64, MetricsError> {
    if !(th > 0.0) {
        return Err(MetricsError::BadThreshold(th));
    }
    let n = record.measured.len();
    if n == 0 {
        return Err(MetricsError::Empty);
    }
    let above = record
        .real_errors(axis)
        .filter(|e| e.is_none_or(|e| e.abs() > th))
        .count();
    Ok(100.0 * above as f64 / n as f64)
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct IndicatorSet {
    pub rmse_x: f64,
    pub rmse_y: f64,
    pub tat_x: f64,
    pub tat_y: f64,
}

impl IndicatorSet {
    pub fn of(record: &TrialRecord, th: f64) -> Result<Self, MetricsError> {
        Ok(IndicatorSet {
            rmse_x: rmse(record, Axis::Ap)?,
            rmse_y: rmse(record, Axis::Ml)?,
            tat_x: tat(record, Axis::Ap, th)?,
            tat_y: tat(record, Axis::Ml, th)?,
        })
    }

    pub fn mean(sets: &[IndicatorSet]) -> Option<IndicatorSet> {
        if sets.is_empty() {
            return None;
        }
        let n = sets.len() as f64;
        let avg = |f: fn(&IndicatorSet) -> f64| sets.iter().map(f).sum::<f64>() / n;
        Some(IndicatorSet {
            rmse_x: avg(|s| s.rmse_x),
            rmse_y: avg(|s| s.rmse_y),
            tat_x: avg(|s| s.tat_x),
            tat_y: avg(|s| s.tat_y),
        })
    }

    /// Values as reported: RMSE in cm, TAT in %.
    pub fn report_values(&self) -> [f64; 4] {
        [
            self.rmse_x * 100.0,
            self.rmse_y * 100.0,
            self.tat_x,
            self.tat_y,
        ]
    }
}

/// Mean indicators over the trials of one condition.
pub fn trial_average(records: &[TrialRecord], th: f64) -> Result<IndicatorSet, MetricsError> {
    let first = records.first().ok_or(MetricsError::Empty)?;
    if let Some(other) = records.iter().find(|r| r.condition != first.condition) {
        return Err(MetricsError::MixedConditions(
            first.condition,
            other.condition,
        ));
    }
    let sets = records
        .iter()
        .map(|r| IndicatorSet::of(r, th))
        .collect::<Result<Vec<_>, _>>()?;
    IndicatorSet::mean(&sets).ok_or(MetricsError::Empty)
}

/// One table row: a walker's trial-averaged indicators under one condition.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SummaryRow {
    pub walker: String,
    pub condition: Condition,
    pub trials: usize,
    pub indicators: IndicatorSet,
}

/// Five-number summary, as drawn by a box plot.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Quartiles {
    pub min: f64,
    pub q1: f64,
    pub median: f64,
    pub q3: f64,
    pub max: f64,
}

impl Quartiles {
    /// Linear-interpolation quantiles over the sorted values.
    pub fn of(values: &[f64]) -> Option<Quartiles> {
        if values.is_empty() {
            return None;
        }
        let mut v = values.to_vec();
        v.sort_by(f64::total_cmp);
        Some(Quartiles {
            min: v[0],
            q1: quantile_sorted(&v, 0.25),
            median: quantile_sorted(&v, 0.5),
            q3: quantile_sorted(&v, 0.75),
            max: v[v.len() - 1],
        })
    }
}

fn quantile_sorted(v: &[f64], q: f64) -> f64 {
    let pos = q * (v.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    v[lo] + (pos - lo as f64) * (v[hi] - v[lo])
}

pub fn median(values: &[f64]) -> Option<f64> {
    Quartiles::of(values).map(|q| q.median)
}

/// Box-plot statistics of each indicator across walkers, report units.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConditionStats {
    pub condition: Condition,
    pub walkers: usize,
    pub rmse_x_cm: Quartiles,
    pub rmse_y_cm: Quartiles,
    pub tat_x_pct: Quartiles,
    pub tat_y_pct: Quartiles,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub th: f64,
    pub rows: Vec<SummaryRow>,
    pub conditions: Vec<ConditionStats>,
}

impl Summary {
    pub fn stats(&self, condition: Condition) -> Option<&ConditionStats> {
        self.conditions.iter().find(|c| c.condition == condition)
    }

    /// `walker,condition,rmse_x_cm,rmse_y_cm,tat_x_pct,tat_y_pct`, one decimal.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("walker,condition,rmse_x_cm,rmse_y_cm,tat_x_pct,tat_y_pct\n");
        for row in &self.rows {
            let [rx, ry, tx, ty] = row.indicators.report_values();
            let _ = writeln!(
                out,
                "{},{},{rx:.1},{ry:.1},{tx:.1},{ty:.1}",
                row.walker, row.condition
            );
        }
        out
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("summary is always serializable")
    }
}

/// Groups records by (walker, condition), averages each group, and computes
/// per-condition quartiles across walkers. Rows follow walker name, then
/// session order of conditions.
pub fn summarize(records: &[TrialRecord], th: f64) -> Result<Summary, MetricsError> {
    let mut groups: BTreeMap<(&str, Condition), Vec<&TrialRecord>> = BTreeMap::new();
    for r in records {
        groups
            .entry((r.walker.as_str(), r.condition))
            .or_default()
            .push(r);
    }
    let mut rows = Vec::with_capacity(groups.len());
    for ((walker, condition), group) in groups {
        let sets = group
            .iter()
            .map(|r| IndicatorSet::of(r, th))
            .collect::<Result<Vec<_>, _>>()?;
        rows.push(SummaryRow {
            walker: walker.to_string(),
            condition,
            trials: sets.len(),
            indicators: IndicatorSet::mean(&sets).ok_or(MetricsError::Empty)?,
        });
    }

    let conditions = Condition::ALL
        .into_iter()
        .filter_map(|c| {
            let values: Vec<[f64; 4]> = rows
                .iter()
                .filter(|r| r.condition == c)
                .map(|r| r.indicators.report_values())
                .collect();
            let column = |i: usize| Quartiles::of(&values.iter().map(|v| v[i]).collect::<Vec<_>>());
            Some(ConditionStats {
                condition: c,
                walkers: values.len(),
                rmse_x_cm: column(0)?,
                rmse_y_cm: column(1)?,
                tat_x_pct: column(2)?,
                tat_y_pct: column(3)?,
            })
        })
        .collect();
    Ok(Summary {
        th,
        rows,
        conditions,
    })
}
