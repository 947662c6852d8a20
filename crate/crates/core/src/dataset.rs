//! Model-ready matrices: per-interval mean/std vectors, 60-minute and daily
//! aggregation, experiment-cell selection and unit-norm standardization.

use std::collections::{BTreeMap, HashMap};
use std::fmt;
use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;
use std::str::FromStr;
use std::sync::Arc;

use chrono::NaiveDate;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::features::{IntervalFeatures, Presence};
use crate::ingest::{local_date, DayKey, DayLabel, DayRecord, Split};

/// Base features; each contributes a `_mean` and a `_std` column.
pub const BASE_FEATURES: [&str; 15] = [
    "acc_energy",
    "gyro_energy",
    "bpm",
    "hrv_sdnn",
    "lf_power",
    "hf_power",
    "lf_fraction",
    "hf_fraction",
    "sin_t",
    "cos_t",
    "step_count",
    "dist",
    "cal",
    "stepsize",
    "speed",
];

/// Index in [`BASE_FEATURES`] where the step group starts.
pub const STEP_FEATURE_START: usize = 10;

pub fn column_names() -> Vec<String> {
    BASE_FEATURES
        .iter()
        .flat_map(|f| [format!("{f}_mean"), format!("{f}_std")])
        .collect()
}

pub fn is_step_column(name: &str) -> bool {
    BASE_FEATURES[STEP_FEATURE_START..]
        .iter()
        .any(|f| name.strip_prefix(f).is_some_and(|rest| rest == "_mean" || rest == "_std"))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Segment {
    Sleep,
    Awake,
    Aggregate,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StepUse {
    WithStep,
    WithoutStep,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Resolution {
    #[serde(rename = "5min")]
    FiveMin,
    #[serde(rename = "60min")]
    SixtyMin,
    #[serde(rename = "daily")]
    Daily,
}

impl Resolution {
    pub const ALL: [Resolution; 3] = [Resolution::FiveMin, Resolution::SixtyMin, Resolution::Daily];

    pub fn as_str(self) -> &'static str {
        match self {
            Resolution::FiveMin => "5min",
            Resolution::SixtyMin => "60min",
            Resolution::Daily => "daily",
        }
    }
}

/// One cell of the segment × steps × resolution grid.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct ExperimentCell {
    pub segment: Segment,
    pub steps: StepUse,
    pub resolution: Resolution,
}

impl ExperimentCell {
    pub fn new(segment: Segment, steps: StepUse, resolution: Resolution) -> Self {
        ExperimentCell {
            segment,
            steps,
            resolution,
        }
    }

    /// All 18 cells, rows ordered as the results table prints them.
    pub fn grid() -> Vec<ExperimentCell> {
        let mut out = Vec::with_capacity(18);
        for steps in [StepUse::WithoutStep, StepUse::WithStep] {
            for segment in [Segment::Sleep, Segment::Awake, Segment::Aggregate] {
                for resolution in Resolution::ALL {
                    out.push(ExperimentCell::new(segment, steps, resolution));
                }
            }
        }
        out
    }

    /// Human-readable row label, e.g. `Sleep + Step`.
    pub fn row_label(&self) -> String {
        let seg = match self.segment {
            Segment::Sleep => "Sleep",
            Segment::Awake => "Awake",
            Segment::Aggregate => "Aggregate",
        };
        match self.steps {
            StepUse::WithStep => format!("{seg} + Step"),
            StepUse::WithoutStep => seg.to_string(),
        }
    }

    pub fn with_segment(self, segment: Segment) -> Self {
        ExperimentCell { segment, ..self }
    }
}

impl fmt::Display for ExperimentCell {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let seg = match self.segment {
            Segment::Sleep => "sleep",
            Segment::Awake => "awake",
            Segment::Aggregate => "aggregate",
        };
        let steps = match self.steps {
            StepUse::WithStep => "with_step",
            StepUse::WithoutStep => "without_step",
        };
        write!(f, "{seg}-{steps}-{}", self.resolution.as_str())
    }
}

impl FromStr for ExperimentCell {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        let bad = || Error::Config(format!("cell must look like sleep-with_step-5min, got {s:?}"));
        let mut parts = s.split('-');
        let (Some(seg), Some(steps), Some(res), None) = (parts.next(), parts.next(), parts.next(), parts.next()) else {
            return Err(bad());
        };
        let segment = match seg {
            "sleep" => Segment::Sleep,
            "awake" => Segment::Awake,
            "aggregate" => Segment::Aggregate,
            _ => return Err(bad()),
        };
        let steps = match steps {
            "with_step" => StepUse::WithStep,
            "without_step" => StepUse::WithoutStep,
            _ => return Err(bad()),
        };
        let resolution = match res {
            "5min" => Resolution::FiveMin,
            "60min" => Resolution::SixtyMin,
            "daily" => Resolution::Daily,
            _ => return Err(bad()),
        };
        Ok(ExperimentCell::new(segment, steps, resolution))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MatrixRow {
    pub subject_id: Arc<str>,
    pub date: NaiveDate,
    pub t_start: f64,
    pub label: DayLabel,
    pub split: Split,
    pub is_sleep: bool,
    pub steps_present: bool,
    /// Number of 5-minute rows pooled into this row.
    pub weight: u32,
    /// Step columns are `NaN` when `steps_present` is false.
    pub values: Vec<f64>,
}

impl MatrixRow {
    pub fn day_key(&self) -> DayKey {
        DayKey::new(&self.subject_id, self.date)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FeatureMatrix {
    pub rows: Vec<MatrixRow>,
    pub column_names: Vec<String>,
    pub resolution: Resolution,
    /// Set once a cell selection has been applied.
    pub cell: Option<ExperimentCell>,
    /// Intervals dropped for lacking a required feature group.
    pub dropped: usize,
}

impl FeatureMatrix {
    pub fn n_cols(&self) -> usize {
        self.column_names.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn train_rows(&self) -> impl Iterator<Item = &MatrixRow> {
        self.rows.iter().filter(|r| r.split == Split::Train)
    }
}

fn day_index(days: &[DayRecord]) -> HashMap<DayKey, (DayLabel, Split)> {
    days.iter().map(|d| (d.key(), (d.label, d.split))).collect()
}

/// Per-constituent statistics of the 15 base features: `(mean, variance,
/// sample count)`.
fn base_stats(f: &IntervalFeatures) -> [(f64, f64, f64); 15] {
    let single = |v: f64| (v, 0.0, 1.0);
    let multi = |m: f64, s: f64, n: u32| (m, s * s, n as f64);
    [
        multi(f.acc_energy, f.acc_energy_std, f.n_acc),
        multi(f.gyro_energy, f.gyro_energy_std, f.n_gyro),
        multi(f.bpm_mean, f.bpm_std, f.n_rr),
        single(f.hrv_sdnn),
        single(f.lf_power),
        single(f.hf_power),
        single(f.lf_fraction),
        single(f.hf_fraction),
        single(f.sin_t),
        single(f.cos_t),
        single(f.step_count),
        multi(f.dist_mean, f.dist_std, f.n_step_events),
        multi(f.cal_mean, f.cal_std, f.n_step_events),
        // Zero-step events have no step size; the count is an upper bound.
        multi(f.stepsize_mean, f.stepsize_std, f.n_step_events),
        multi(f.speed_mean, f.speed_std, f.n_step_events),
    ]
}

/// Pooled mean and population std over constituents: total-variance
/// combination weighted by underlying sample counts.
fn pool(stats: &[(f64, f64, f64)]) -> (f64, f64) {
    let present: Vec<_> = stats.iter().filter(|(m, _, n)| m.is_finite() && *n > 0.0).collect();
    if present.is_empty() {
        return (f64::NAN, f64::NAN);
    }
    let total: f64 = present.iter().map(|(_, _, n)| n).sum();
    let mean = present.iter().map(|(m, _, n)| m * n).sum::<f64>() / total;
    let second = present.iter().map(|(m, v, n)| (v + m * m) * n).sum::<f64>() / total;
    let var = (second - mean * mean).max(0.0);
    let var = if present.len() == 1 { present[0].1.max(0.0) } else { var };
    (mean, var.sqrt())
}

/// Builds `[mean, std]` vectors per base feature over windows of `width`
/// seconds (a multiple of the interval width, aligned to local midnight).
/// Intervals missing any required group are dropped and counted. At the
/// interval width itself, single-valued features get std 0.
pub fn interval_stats(
    features: &[IntervalFeatures],
    days: &[DayRecord],
    width: f64,
    utc_offset: i32,
) -> Result<FeatureMatrix> {
    let index = day_index(days);
    let mut dropped = 0;
    let mut groups: BTreeMap<(Arc<str>, i64, bool), Vec<&IntervalFeatures>> = BTreeMap::new();
    for f in features {
        if !f.presence.contains(Presence::REQUIRED) {
            dropped += 1;
            continue;
        }
        let slot = ((f.t_start + utc_offset as f64) / width).floor() as i64;
        groups
            .entry((Arc::clone(&f.subject_id), slot, f.is_sleep))
            .or_default()
            .push(f);
    }
    let mut rows = Vec::with_capacity(groups.len());
    for ((subject, slot, is_sleep), members) in groups {
        let t_start = slot as f64 * width - utc_offset as f64;
        let date = local_date(t_start, utc_offset);
        let (label, split) = lookup(&index, &subject, date)?;
        let per_member: Vec<[(f64, f64, f64); 15]> = members.iter().map(|f| base_stats(f)).collect();
        let steps_present = members.iter().any(|f| f.presence.contains(Presence::STEPS));
        let mut values = Vec::with_capacity(30);
        for k in 0..BASE_FEATURES.len() {
            let col: Vec<(f64, f64, f64)> = per_member.iter().map(|s| s[k]).collect();
            let (m, s) = pool(&col);
            values.push(m);
            values.push(s);
        }
        rows.push(MatrixRow {
            subject_id: subject,
            date,
            t_start,
            label,
            split,
            is_sleep,
            steps_present,
            weight: members.len() as u32,
            values,
        });
    }
    sort_rows(&mut rows);
    let resolution = if (width - 300.0).abs() < 1e-9 {
        Resolution::FiveMin
    } else if (width - 3600.0).abs() < 1e-9 {
        Resolution::SixtyMin
    } else {
        Resolution::Daily
    };
    Ok(FeatureMatrix {
        rows,
        column_names: column_names(),
        resolution,
        cell: None,
        dropped,
    })
}

fn lookup(index: &HashMap<DayKey, (DayLabel, Split)>, subject: &Arc<str>, date: NaiveDate) -> Result<(DayLabel, Split)> {
    index
        .get(&DayKey::new(subject, date))
        .copied()
        .ok_or_else(|| Error::Contract(format!("no day record for {subject}/{date}")))
}

fn sort_rows(rows: &mut [MatrixRow]) {
    rows.sort_by(|a, b| {
        a.subject_id
            .cmp(&b.subject_id)
            .then(a.t_start.total_cmp(&b.t_start))
            .then(b.is_sleep.cmp(&a.is_sleep))
    });
}

/// Component-wise mean of constituent rows, ignoring `NaN` entries.
fn mean_rows(members: &[&MatrixRow], n_cols: usize) -> Vec<f64> {
    (0..n_cols)
        .map(|c| {
            let (sum, n) = members
                .iter()
                .map(|r| r.values[c])
                .filter(|v| !v.is_nan())
                .fold((0.0, 0usize), |(s, n), v| (s + v, n + 1));
            if n == 0 {
                f64::NAN
            } else {
                sum / n as f64
            }
        })
        .collect()
}

fn aggregate_by(
    m: &FeatureMatrix,
    resolution: Resolution,
    slot_of: impl Fn(&MatrixRow) -> (i64, f64),
) -> FeatureMatrix {
    let mut groups: BTreeMap<(Arc<str>, i64, bool), (f64, Vec<&MatrixRow>)> = BTreeMap::new();
    for r in &m.rows {
        let (slot, start) = slot_of(r);
        groups
            .entry((Arc::clone(&r.subject_id), slot, r.is_sleep))
            .or_insert_with(|| (start, Vec::new()))
            .1
            .push(r);
    }
    let n_cols = m.n_cols();
    let mut rows: Vec<MatrixRow> = groups
        .into_values()
        .map(|(start, members)| {
            let first = members[0];
            MatrixRow {
                subject_id: Arc::clone(&first.subject_id),
                date: first.date,
                t_start: start,
                label: first.label,
                split: first.split,
                is_sleep: first.is_sleep,
                steps_present: members.iter().any(|r| r.steps_present),
                weight: members.iter().map(|r| r.weight).sum(),
                values: mean_rows(&members, n_cols),
            }
        })
        .collect();
    sort_rows(&mut rows);
    FeatureMatrix {
        rows,
        column_names: m.column_names.clone(),
        resolution,
        cell: m.cell,
        dropped: m.dropped,
    }
}

/// 60-minute rows: mean of the (up to 12) 5-minute rows sharing an hour and
/// a sleep/awake tag. Empty hours produce no row.
pub fn aggregate_resolution(m: &FeatureMatrix, utc_offset: i32) -> Result<FeatureMatrix> {
    if m.resolution != Resolution::FiveMin {
        return Err(Error::Contract("60-minute aggregation expects a 5-minute matrix".into()));
    }
    let off = utc_offset as f64;
    Ok(aggregate_by(m, Resolution::SixtyMin, |r| {
        let slot = ((r.t_start + off) / 3600.0).floor() as i64;
        (slot, slot as f64 * 3600.0 - off)
    }))
}

/// Daily rows: mean of all 5-minute rows of a day sharing a sleep/awake tag.
pub fn aggregate_daily(m: &FeatureMatrix, utc_offset: i32) -> Result<FeatureMatrix> {
    if m.resolution != Resolution::FiveMin {
        return Err(Error::Contract("daily aggregation expects a 5-minute matrix".into()));
    }
    Ok(aggregate_by(m, Resolution::Daily, |r| {
        let day = crate::ingest::epoch_days(r.date);
        (day, crate::ingest::local_midnight(r.date, utc_offset))
    }))
}

/// Keeps the rows and columns of one cell. With steps, rows lacking step
/// data are dropped when `require_steps`, else kept for zero imputation
/// after z-scoring.
pub fn select_cell(m: &FeatureMatrix, cell: ExperimentCell, require_steps: bool) -> Result<FeatureMatrix> {
    if m.resolution != cell.resolution {
        return Err(Error::Contract(format!(
            "cell {cell} needs a {} matrix, got {}",
            cell.resolution.as_str(),
            m.resolution.as_str()
        )));
    }
    let keep_cols: Vec<usize> = (0..m.n_cols())
        .filter(|&c| cell.steps == StepUse::WithStep || !is_step_column(&m.column_names[c]))
        .collect();
    let rows: Vec<MatrixRow> = m
        .rows
        .iter()
        .filter(|r| match cell.segment {
            Segment::Sleep => r.is_sleep,
            Segment::Awake => !r.is_sleep,
            Segment::Aggregate => true,
        })
        .filter(|r| !(require_steps && cell.steps == StepUse::WithStep && !r.steps_present))
        .map(|r| MatrixRow {
            values: keep_cols.iter().map(|&c| r.values[c]).collect(),
            ..r.clone()
        })
        .collect();
    if rows.is_empty() {
        return Err(Error::EmptyCell(cell.to_string()));
    }
    Ok(FeatureMatrix {
        rows,
        column_names: keep_cols.iter().map(|&c| m.column_names[c].clone()).collect(),
        resolution: m.resolution,
        cell: Some(cell),
        dropped: m.dropped,
    })
}

/// Per-column z-score parameters fitted on train-split rows.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Scaler {
    pub columns: Vec<String>,
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
    /// Per-subject parameters when subject-wise scaling is enabled.
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub per_subject: BTreeMap<String, (Vec<f64>, Vec<f64>)>,
}

fn column_moments<'a>(rows: impl Iterator<Item = &'a MatrixRow>, n_cols: usize) -> (Vec<f64>, Vec<f64>) {
    let mut sum = vec![0.0; n_cols];
    let mut sq = vec![0.0; n_cols];
    let mut n = vec![0usize; n_cols];
    let rows: Vec<&MatrixRow> = rows.collect();
    for r in &rows {
        for c in 0..n_cols {
            let v = r.values[c];
            if !v.is_nan() {
                sum[c] += v;
                n[c] += 1;
            }
        }
    }
    let mean: Vec<f64> = (0..n_cols)
        .map(|c| if n[c] > 0 { sum[c] / n[c] as f64 } else { 0.0 })
        .collect();
    for r in &rows {
        for c in 0..n_cols {
            let v = r.values[c];
            if !v.is_nan() {
                sq[c] += (v - mean[c]) * (v - mean[c]);
            }
        }
    }
    let std = (0..n_cols)
        .map(|c| {
            let s = if n[c] > 0 { (sq[c] / n[c] as f64).sqrt() } else { 0.0 };
            // Zero-variance columns keep their centered values.
            if s > 0.0 && s.is_finite() {
                s
            } else {
                1.0
            }
        })
        .collect();
    (mean, std)
}

impl Scaler {
    /// Fits on train-split rows only.
    pub fn fit(m: &FeatureMatrix, per_subject: bool) -> Result<Scaler> {
        if m.train_rows().next().is_none() {
            return Err(Error::Contract("no train-split rows to fit the scaler on".into()));
        }
        let (mean, std) = column_moments(m.train_rows(), m.n_cols());
        let mut subjects = BTreeMap::new();
        if per_subject {
            let mut by_subject: BTreeMap<&str, Vec<&MatrixRow>> = BTreeMap::new();
            for r in m.train_rows() {
                by_subject.entry(&*r.subject_id).or_default().push(r);
            }
            for (s, rows) in by_subject {
                subjects.insert(s.to_string(), column_moments(rows.into_iter(), m.n_cols()));
            }
        }
        Ok(Scaler {
            columns: m.column_names.clone(),
            mean,
            std,
            per_subject: subjects,
        })
    }

    pub fn identity(columns: Vec<String>) -> Scaler {
        let n = columns.len();
        Scaler {
            columns,
            mean: vec![0.0; n],
            std: vec![1.0; n],
            per_subject: BTreeMap::new(),
        }
    }

    /// Z-scores a row in place; absent (`NaN`) entries become 0.
    pub fn transform_row(&self, subject: &str, values: &mut [f64]) {
        let (mean, std) = self
            .per_subject
            .get(subject)
            .map_or((&self.mean, &self.std), |(m, s)| (m, s));
        for ((v, m), s) in values.iter_mut().zip(mean).zip(std) {
            *v = if v.is_nan() { 0.0 } else { (*v - m) / s };
        }
    }

    pub fn write_json(&self, path: &Path) -> Result<()> {
        let text = serde_json::to_string_pretty(self)?;
        std::fs::write(path, text).map_err(|e| Error::io(path, e))
    }

    pub fn read_json(path: &Path) -> Result<Scaler> {
        let text = std::fs::read_to_string(path).map_err(|e| match e.kind() {
            std::io::ErrorKind::NotFound => Error::MissingArtifact(path.to_path_buf()),
            _ => Error::io(path, e),
        })?;
        Ok(serde_json::from_str(&text)?)
    }
}

/// Scales every row to unit L2 norm; all-zero rows are left as zero.
/// Returns the number of zero rows.
pub fn normalize_rows(m: &mut FeatureMatrix) -> usize {
    let mut zero = 0;
    for r in &mut m.rows {
        let norm = r.values.iter().map(|v| v * v).sum::<f64>().sqrt();
        if norm > 0.0 {
            r.values.iter_mut().for_each(|v| *v /= norm);
        } else {
            zero += 1;
        }
    }
    if zero > 0 {
        log::warn!("{zero} all-zero rows left unnormalized");
    }
    zero
}

/// Z-scores columns with `scaler` (fitted on train rows), zero-fills absent
/// entries, then L2-normalizes each row.
pub fn standardize_unit_norm(m: &FeatureMatrix, scaler: &Scaler) -> Result<FeatureMatrix> {
    if scaler.columns != m.column_names {
        return Err(Error::Dimension {
            expected: scaler.columns.len(),
            got: m.n_cols(),
        });
    }
    let mut out = m.clone();
    for r in &mut out.rows {
        scaler.transform_row(&r.subject_id, &mut r.values);
    }
    normalize_rows(&mut out);
    Ok(out)
}

pub const PROVENANCE_COLUMNS: [&str; 4] = ["subject_id", "date", "t_start", "label"];

pub fn write_matrix_csv(path: &Path, m: &FeatureMatrix) -> Result<()> {
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    let io = |e| Error::io(path, e);
    let mut header: Vec<&str> = PROVENANCE_COLUMNS.to_vec();
    header.extend(m.column_names.iter().map(String::as_str));
    writeln!(w, "{}", header.join(",")).map_err(io)?;
    for r in &m.rows {
        write!(w, "{},{},{},{}", r.subject_id, r.date.format("%Y-%m-%d"), r.t_start, r.label).map_err(io)?;
        for v in &r.values {
            if v.is_nan() {
                write!(w, ",").map_err(io)?;
            } else {
                write!(w, ",{v}").map_err(io)?;
            }
        }
        writeln!(w).map_err(io)?;
    }
    w.flush().map_err(io)
}

/// Reads a matrix written by [`write_matrix_csv`]. Split membership comes
/// from `days`; the sleep tag follows the cell's segment.
pub fn read_matrix_csv(path: &Path, days: &[DayRecord], cell: ExperimentCell) -> Result<FeatureMatrix> {
    let index = day_index(days);
    let file = File::open(path).map_err(|e| match e.kind() {
        std::io::ErrorKind::NotFound => Error::MissingArtifact(path.to_path_buf()),
        _ => Error::io(path, e),
    })?;
    let mut rdr = csv::Reader::from_reader(file);
    let header = rdr.headers().map_err(|e| Error::csv(path, e))?.clone();
    if header.len() < 4 || header.iter().take(4).ne(PROVENANCE_COLUMNS.iter().copied()) {
        return Err(Error::malformed(path.display().to_string(), "missing provenance columns"));
    }
    let column_names: Vec<String> = header.iter().skip(4).map(str::to_string).collect();
    let mut subjects: BTreeMap<String, Arc<str>> = BTreeMap::new();
    let mut rows = Vec::new();
    for (i, rec) in rdr.records().enumerate() {
        let rec = rec.map_err(|e| Error::csv(path, e))?;
        let bad = |what: &str| Error::malformed(path.display().to_string(), format!("row {}: bad {what}", i + 1));
        let subject = subjects
            .entry(rec[0].to_string())
            .or_insert_with(|| Arc::from(&rec[0]))
            .clone();
        let date = NaiveDate::parse_from_str(&rec[1], "%Y-%m-%d").map_err(|_| bad("date"))?;
        let t_start: f64 = rec[2].parse().map_err(|_| bad("t_start"))?;
        let label: DayLabel = rec[3].parse().map_err(|_| bad("label"))?;
        let (_, split) = lookup(&index, &subject, date)?;
        let values = rec
            .iter()
            .skip(4)
            .map(|s| if s.is_empty() { Ok(f64::NAN) } else { s.parse().map_err(|_| bad("value")) })
            .collect::<Result<Vec<f64>>>()?;
        if values.len() != column_names.len() {
            return Err(bad("field count"));
        }
        rows.push(MatrixRow {
            subject_id: subject,
            date,
            t_start,
            label,
            split,
            is_sleep: cell.segment == Segment::Sleep,
            steps_present: true,
            weight: 1,
            values,
        });
    }
    Ok(FeatureMatrix {
        rows,
        column_names,
        resolution: cell.resolution,
        cell: Some(cell),
        dropped: 0,
    })
}
