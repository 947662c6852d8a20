//! Stage composition shared by the CLI, the tests and the Python bindings.

use std::collections::BTreeMap;
use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;
use std::sync::Arc;

use chrono::NaiveDate;
use serde::Serialize;

use crate::config::PipelineConfig;
use crate::dataset::{
    aggregate_daily, aggregate_resolution, interval_stats, select_cell, standardize_unit_norm, ExperimentCell,
    FeatureMatrix, Resolution, Scaler, Segment,
};
use crate::error::{Error, Result};
use crate::eval::{awake_fallback, evaluate, percent, split_labels, CellOutcome, EvalReport, GridReport};
use crate::features::{extract_intervals, IntervalFeatures};
use crate::iforest::{fit, pool_days, score_matrix, ForestModel};
use crate::ingest::{DayKey, DayLabel, DayRecord, SensorStreams, Split, DAYS_HEADER};
use crate::preprocess::{preprocess_streams, PreprocessReport};
use crate::synthgen::generate_subject;

/// Hampel cleaning followed by 5-minute feature extraction.
pub fn process_subject(
    streams: &SensorStreams,
    cfg: &PipelineConfig,
) -> Result<(Vec<IntervalFeatures>, PreprocessReport)> {
    let (clean, report) = preprocess_streams(
        streams,
        &cfg.hampel,
        cfg.features.motion_rate_hz,
        cfg.features.rr_rate_hz,
    )?;
    Ok((extract_intervals(&clean, &cfg.features)?, report))
}

/// Features and day records of all subjects.
#[derive(Debug, Clone, Default)]
pub struct Cohort {
    pub features: Vec<IntervalFeatures>,
    pub days: Vec<DayRecord>,
}

impl Cohort {
    pub fn push(&mut self, features: Vec<IntervalFeatures>, days: &[DayRecord]) {
        self.features.extend(features);
        self.days.extend_from_slice(days);
    }
}

/// Generates, cleans and featurizes every subject in memory, one subject at
/// a time.
pub fn synthetic_cohort(cfg: &PipelineConfig) -> Result<(Cohort, Vec<crate::synthgen::SubjectTruth>)> {
    let mut cohort = Cohort::default();
    let mut truth = Vec::new();
    for i in 0..cfg.generator.n_subjects {
        let (streams, t) = generate_subject(&cfg.generator, i)?;
        let (features, _) = process_subject(&streams, cfg)?;
        cohort.push(features, &streams.days);
        truth.push(t);
    }
    Ok((cohort, truth))
}

/// 5-minute, 60-minute and daily matrices over all subjects.
#[derive(Debug, Clone)]
pub struct BaseMatrices {
    pub five: FeatureMatrix,
    pub sixty: FeatureMatrix,
    pub daily: FeatureMatrix,
}

impl BaseMatrices {
    pub fn build(cohort: &Cohort, cfg: &PipelineConfig) -> Result<BaseMatrices> {
        let off = cfg.ingest.utc_offset_seconds;
        let five = interval_stats(&cohort.features, &cohort.days, cfg.features.interval_seconds, off)?;
        let sixty = aggregate_resolution(&five, off)?;
        let daily = aggregate_daily(&five, off)?;
        Ok(BaseMatrices { five, sixty, daily })
    }

    pub fn get(&self, r: Resolution) -> &FeatureMatrix {
        match r {
            Resolution::FiveMin => &self.five,
            Resolution::SixtyMin => &self.sixty,
            Resolution::Daily => &self.daily,
        }
    }
}

/// Fitted state and scores of one experiment cell.
#[derive(Debug, Clone)]
pub struct CellRun {
    pub cell: ExperimentCell,
    pub selected: FeatureMatrix,
    pub scaler: Scaler,
    pub model: ForestModel,
    pub row_scores: Vec<f64>,
    pub day_scores: BTreeMap<DayKey, f64>,
}

/// Fits the scaler and the forest on the cell's train rows, then scores
/// every row and pools by day.
pub fn run_cell_on(selected: FeatureMatrix, cfg: &PipelineConfig) -> Result<CellRun> {
    let cell = selected
        .cell
        .ok_or_else(|| Error::Contract("matrix has no cell selection".into()))?;
    let scaler = Scaler::fit(&selected, cfg.dataset.per_subject_scaling)?;
    let standardized = standardize_unit_norm(&selected, &scaler)?;
    let model = fit(&standardized, cfg.forest_params())?;
    let row_scores = score_matrix(&model, &standardized)?;
    let day_scores = pool_days(&standardized, &row_scores, cfg.model.day_pooling);
    Ok(CellRun {
        cell,
        selected,
        scaler,
        model,
        row_scores,
        day_scores,
    })
}

pub fn run_cell(base: &BaseMatrices, cell: ExperimentCell, cfg: &PipelineConfig) -> Result<CellRun> {
    let selected = select_cell(base.get(cell.resolution), cell, cfg.dataset.require_steps)?;
    run_cell_on(selected, cfg)
}

/// Evaluates a cell's day scores; sleep cells borrow aligned awake scores
/// for days without sleep rows when enabled.
pub fn evaluate_cell(
    cell: ExperimentCell,
    day_scores: &BTreeMap<DayKey, f64>,
    awake_scores: Option<&BTreeMap<DayKey, f64>>,
    days: &[DayRecord],
    cfg: &PipelineConfig,
) -> Result<EvalReport> {
    let labels = split_labels(days, cfg.eval.split);
    match awake_scores {
        Some(awake) if cell.segment == Segment::Sleep && cfg.eval.awake_fallback => {
            let fb = awake_fallback(day_scores, awake, &labels);
            let used = fb.rescaled.iter().filter(|k| labels.contains_key(*k)).count();
            evaluate(cell, &fb.scores, &labels, cfg.eval.aggregate_mode, used)
        }
        _ => evaluate(cell, day_scores, &labels, cfg.eval.aggregate_mode, 0),
    }
}

/// Runs all 18 cells. A failing cell is recorded and the rest still run.
/// `on_cell` sees each fitted cell and its report (artifact writing).
pub fn run_experiment(
    base: &BaseMatrices,
    days: &[DayRecord],
    cfg: &PipelineConfig,
    mut on_cell: impl FnMut(&CellRun, &EvalReport) -> Result<()>,
) -> Result<(GridReport, BTreeMap<ExperimentCell, EvalReport>)> {
    let mut outcomes = Vec::new();
    let mut reports = BTreeMap::new();
    let mut awake_scores: BTreeMap<ExperimentCell, BTreeMap<DayKey, f64>> = BTreeMap::new();
    // Awake cells first so sleep cells can fall back on them.
    let mut order = ExperimentCell::grid();
    order.sort_by_key(|c| (c.segment != Segment::Awake, *c));
    let mut by_cell: BTreeMap<ExperimentCell, CellOutcome> = BTreeMap::new();
    for cell in order {
        let started = std::time::Instant::now();
        let result = run_cell(base, cell, cfg).and_then(|run| {
            let awake = awake_scores.get(&cell.with_segment(Segment::Awake));
            let report = evaluate_cell(cell, &run.day_scores, awake, days, cfg)?;
            on_cell(&run, &report)?;
            if cell.segment == Segment::Awake {
                awake_scores.insert(cell, run.day_scores.clone());
            }
            Ok(report)
        });
        log::info!("cell {cell}: {:.2} s", started.elapsed().as_secs_f64());
        let outcome = match result {
            Ok(report) => {
                let v = report.aggregate_hmean;
                log::info!("cell {cell}: {}", percent(v));
                reports.insert(cell, report);
                CellOutcome {
                    cell,
                    tag: cell.to_string(),
                    aggregate_hmean: Some(v),
                    error: None,
                }
            }
            Err(e) => {
                log::warn!("cell {cell} failed: {e}");
                CellOutcome {
                    cell,
                    tag: cell.to_string(),
                    aggregate_hmean: None,
                    error: Some(e.to_string()),
                }
            }
        };
        by_cell.insert(cell, outcome);
    }
    for cell in ExperimentCell::grid() {
        outcomes.push(by_cell.remove(&cell).expect("every cell ran"));
    }
    Ok((GridReport::new(cfg.seed, outcomes), reports))
}

pub const COHORT_DAYS_FILE: &str = "days.csv";

/// Writes all subjects' day records with a leading `subject_id` column.
pub fn write_days_csv(path: &Path, days: &[DayRecord]) -> Result<()> {
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    let io = |e| Error::io(path, e);
    writeln!(w, "subject_id,{}", DAYS_HEADER.join(",")).map_err(io)?;
    for d in days {
        writeln!(w, "{},{},{},{}", d.subject_id, d.date.format("%Y-%m-%d"), d.label, d.split).map_err(io)?;
    }
    w.flush().map_err(io)
}

pub fn read_days_csv(path: &Path) -> Result<Vec<DayRecord>> {
    let file = File::open(path).map_err(|e| match e.kind() {
        std::io::ErrorKind::NotFound => Error::MissingArtifact(path.to_path_buf()),
        _ => Error::io(path, e),
    })?;
    let mut rdr = csv::Reader::from_reader(file);
    let mut subjects: BTreeMap<String, Arc<str>> = BTreeMap::new();
    let mut out = Vec::new();
    for (i, rec) in rdr.records().enumerate() {
        let rec = rec.map_err(|e| Error::csv(path, e))?;
        let bad = |what: &str| Error::malformed(path.display().to_string(), format!("row {}: bad {what}", i + 1));
        if rec.len() != 4 {
            return Err(bad("field count"));
        }
        let subject = subjects
            .entry(rec[0].to_string())
            .or_insert_with(|| Arc::from(&rec[0]))
            .clone();
        out.push(DayRecord {
            subject_id: subject,
            date: NaiveDate::parse_from_str(&rec[1], "%Y-%m-%d").map_err(|_| bad("date"))?,
            label: rec[2].parse::<DayLabel>().map_err(|_| bad("label"))?,
            split: rec[3].parse::<Split>().map_err(|_| bad("split"))?,
        });
    }
    Ok(out)
}

#[derive(Debug, Serialize)]
struct ScoreRow<'a> {
    subject_id: &'a str,
    date: String,
    score: f64,
}

pub fn write_day_scores(path: &Path, scores: &BTreeMap<DayKey, f64>) -> Result<()> {
    let mut w = csv::Writer::from_path(path).map_err(|e| Error::csv(path, e))?;
    for (k, &score) in scores {
        w.serialize(ScoreRow {
            subject_id: &k.subject,
            date: k.date.format("%Y-%m-%d").to_string(),
            score,
        })
        .map_err(|e| Error::csv(path, e))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

pub fn read_day_scores(path: &Path) -> Result<BTreeMap<DayKey, f64>> {
    let file = File::open(path).map_err(|e| match e.kind() {
        std::io::ErrorKind::NotFound => Error::MissingArtifact(path.to_path_buf()),
        _ => Error::io(path, e),
    })?;
    let mut rdr = csv::Reader::from_reader(file);
    let mut out = BTreeMap::new();
    for (i, rec) in rdr.records().enumerate() {
        let rec = rec.map_err(|e| Error::csv(path, e))?;
        let bad = || Error::malformed(path.display().to_string(), format!("row {}", i + 1));
        if rec.len() != 3 {
            return Err(bad());
        }
        let subject: Arc<str> = Arc::from(&rec[0]);
        let date = NaiveDate::parse_from_str(&rec[1], "%Y-%m-%d").map_err(|_| bad())?;
        let score: f64 = rec[2].parse().map_err(|_| bad())?;
        out.insert(DayKey::new(&subject, date), score);
    }
    Ok(out)
}

/// Plain-text summary of one cell's evaluation.
pub fn render_cell_report(r: &EvalReport) -> String {
    let mut out = format!("cell {}\naggregate {}\n", r.cell, percent(r.aggregate_hmean));
    out.push_str(&format!(
        "days: {} relapse, {} normal, {} unscoreable, {} via awake fallback\n",
        r.counts.relapse_days, r.counts.normal_days, r.counts.unscoreable_days, r.counts.fallback_days
    ));
    out.push_str(&format!("{:<10}{:>10}{:>10}{:>10}\n", "subject", "roc_auc", "pr_auc", "hmean"));
    let f = |v: Option<f64>| v.map_or("-".to_string(), |v| format!("{v:.4}"));
    for (s, m) in &r.per_subject {
        out.push_str(&format!("{s:<10}{:>10}{:>10}{:>10}\n", f(m.roc_auc), f(m.pr_auc), f(m.hmean)));
    }
    out
}
