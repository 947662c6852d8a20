//! Command-line front end. Each stage reads its predecessor's files under
//! `--out` and writes its own:
//!
//! ```text
//! raw/<subject>/*.csv, raw/ground_truth.json     generate
//! clean/<subject>/*.csv, clean/preprocess.json   preprocess
//! features/features_5min.csv, features/days.csv  extract
//! cells/<tag>/matrix_<tag>.csv, scaler, model    train
//! cells/<tag>/scores_<tag>.csv                   score
//! cells/<tag>/report_<tag>.{json,txt}            evaluate
//! grid_report.{json,txt}                         experiment
//! ```

use std::ffi::OsString;
use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand};
use serde::Serialize;

use crate::config::PipelineConfig;
use crate::dataset::{
    read_matrix_csv, select_cell, standardize_unit_norm, write_matrix_csv, ExperimentCell, Scaler, Segment,
};
use crate::error::{Error, Result};
use crate::features::{extract_intervals, read_features_csv, write_features_csv, FEATURES_FILE};
use crate::iforest::{fit, pool_days, score_matrix, ForestModel};
use crate::ingest::{load_subject, subject_dirs, write_subject};
use crate::pipeline::{
    evaluate_cell, read_day_scores, read_days_csv, render_cell_report, run_experiment, write_day_scores,
    write_days_csv, BaseMatrices, Cohort, COHORT_DAYS_FILE,
};
use crate::preprocess::{preprocess_streams, PreprocessReport};
use crate::synthgen::write_dataset;

#[derive(Debug, Parser)]
#[command(name = "relapse-detect", version, about = "Relapse-day detection from wearable signals")]
pub struct Cli {
    /// TOML configuration file; unset keys take defaults.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Run seed (model and generator).
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Worker thread cap.
    #[arg(long, global = true)]
    pub threads: Option<usize>,
    /// Run directory.
    #[arg(long, global = true, default_value = "run")]
    pub out: PathBuf,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Write a synthetic cohort to <out>/raw.
    Generate {
        /// Number of subjects (overrides generator.n_subjects).
        #[arg(long)]
        subjects: Option<usize>,
        /// Days per subject (overrides generator.n_days).
        #[arg(long)]
        days: Option<usize>,
    },
    /// Hampel-clean each subject into <out>/clean.
    Preprocess {
        /// Raw data root (defaults to <out>/raw).
        #[arg(long)]
        input: Option<PathBuf>,
    },
    /// Extract 5-minute features into <out>/features.
    Extract,
    /// Build the cell matrix and fit the scaler and forest.
    Train {
        #[arg(long, default_value = "sleep-with_step-5min")]
        cell: ExperimentCell,
    },
    /// Score the cell matrix and pool scores per day.
    Score {
        #[arg(long, default_value = "sleep-with_step-5min")]
        cell: ExperimentCell,
    },
    /// Compute ranking metrics from the cell's day scores.
    Evaluate {
        #[arg(long, default_value = "sleep-with_step-5min")]
        cell: ExperimentCell,
    },
    /// Run the full 6 x 3 grid from extracted features.
    Experiment,
}

struct Layout {
    out: PathBuf,
}

impl Layout {
    fn raw(&self) -> PathBuf {
        self.out.join("raw")
    }
    fn clean(&self) -> PathBuf {
        self.out.join("clean")
    }
    fn features(&self) -> PathBuf {
        self.out.join("features")
    }
    fn cell_dir(&self, cell: ExperimentCell) -> PathBuf {
        self.out.join("cells").join(cell.to_string())
    }
    fn cell_file(&self, cell: ExperimentCell, stem: &str, ext: &str) -> PathBuf {
        self.cell_dir(cell).join(format!("{stem}_{cell}.{ext}"))
    }
}

fn mkdir(p: &Path) -> Result<()> {
    std::fs::create_dir_all(p).map_err(|e| Error::io(p, e))
}

fn write_json(path: &Path, value: &impl Serialize) -> Result<()> {
    let text = serde_json::to_string_pretty(value)?;
    std::fs::write(path, text + "\n").map_err(|e| Error::io(path, e))
}

fn write_text(path: &Path, text: &str) -> Result<()> {
    std::fs::write(path, text).map_err(|e| Error::io(path, e))
}

/// Parses `args` (program name first), runs the command and returns the
/// process exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    let _ = env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).try_init();
    match execute(cli) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}

pub fn execute(cli: Cli) -> Result<()> {
    let cfg = match &cli.config {
        Some(p) => PipelineConfig::load(p)?,
        None => PipelineConfig::default(),
    }
    .with_seed(cli.seed);
    let mut builder = rayon::ThreadPoolBuilder::new();
    if let Some(n) = cli.threads {
        if n == 0 {
            return Err(Error::Config("--threads must be at least 1".into()));
        }
        builder = builder.num_threads(n);
    }
    let pool = builder
        .build()
        .map_err(|e| Error::Config(format!("thread pool: {e}")))?;
    let layout = Layout { out: cli.out.clone() };
    mkdir(&layout.out)?;
    let started = std::time::Instant::now();
    let result = pool.install(|| dispatch(cli.command, cfg, &layout));
    log::info!("finished in {:.2} s", started.elapsed().as_secs_f64());
    result
}

fn dispatch(command: Command, mut cfg: PipelineConfig, layout: &Layout) -> Result<()> {
    if let Command::Generate { subjects, days } = &command {
        if let Some(n) = subjects {
            cfg.generator.n_subjects = *n;
        }
        if let Some(n) = days {
            cfg.generator.n_days = *n;
        }
        cfg.validate()?;
    }
    cfg.write_resolved(&layout.out)?;
    match command {
        Command::Generate { .. } => cmd_generate(&cfg, layout),
        Command::Preprocess { input } => cmd_preprocess(&cfg, layout, input),
        Command::Extract => cmd_extract(&cfg, layout),
        Command::Train { cell } => cmd_train(&cfg, layout, cell),
        Command::Score { cell } => cmd_score(&cfg, layout, cell),
        Command::Evaluate { cell } => cmd_evaluate(&cfg, layout, cell),
        Command::Experiment => cmd_experiment(&cfg, layout),
    }
}

fn cmd_generate(cfg: &PipelineConfig, layout: &Layout) -> Result<()> {
    let mut gen = cfg.generator.clone();
    gen.utc_offset_seconds = cfg.ingest.utc_offset_seconds;
    let truth = write_dataset(&gen, &layout.raw())?;
    log::info!("generated {} subjects under {}", truth.subjects.len(), layout.raw().display());
    Ok(())
}

#[derive(Serialize)]
struct SubjectPreprocess {
    subject: String,
    rejected_rows: usize,
    load_warnings: Vec<String>,
    hampel: PreprocessReport,
}

fn cmd_preprocess(cfg: &PipelineConfig, layout: &Layout, input: Option<PathBuf>) -> Result<()> {
    let input = input.unwrap_or_else(|| layout.raw());
    let dirs = subject_dirs(&input)?;
    if dirs.is_empty() {
        return Err(Error::MissingArtifact(input.join("<subject>").join(crate::ingest::DAYS_FILE)));
    }
    let mut reports = Vec::new();
    for dir in dirs {
        let name = dir.file_name().map(|n| n.to_string_lossy().into_owned()).unwrap_or_default();
        let (streams, load) = load_subject(&dir, cfg.ingest.utc_offset_seconds)?;
        if load.rejected_rows() > 0 {
            log::warn!("{name}: {} rows rejected", load.rejected_rows());
        }
        let (clean, hampel) = preprocess_streams(
            &streams,
            &cfg.hampel,
            cfg.features.motion_rate_hz,
            cfg.features.rr_rate_hz,
        )?;
        write_subject(&clean, &layout.clean().join(&name))?;
        let mut load_warnings = load.warnings.clone();
        load_warnings.truncate(100);
        reports.push(SubjectPreprocess {
            subject: name,
            rejected_rows: load.rejected_rows(),
            load_warnings,
            hampel,
        });
    }
    write_json(&layout.clean().join("preprocess.json"), &reports)
}

fn cmd_extract(cfg: &PipelineConfig, layout: &Layout) -> Result<()> {
    let dirs = subject_dirs(&layout.clean())?;
    if dirs.is_empty() {
        return Err(Error::MissingArtifact(layout.clean().join("<subject>")));
    }
    let mut cohort = Cohort::default();
    for dir in dirs {
        let (streams, _) = load_subject(&dir, cfg.ingest.utc_offset_seconds)?;
        cohort.push(extract_intervals(&streams, &cfg.features)?, &streams.days);
    }
    mkdir(&layout.features())?;
    write_features_csv(&layout.features().join(FEATURES_FILE), &cohort.features)?;
    write_days_csv(&layout.features().join(COHORT_DAYS_FILE), &cohort.days)?;
    log::info!("extracted {} intervals", cohort.features.len());
    Ok(())
}

fn load_cohort(layout: &Layout) -> Result<Cohort> {
    Ok(Cohort {
        features: read_features_csv(&layout.features().join(FEATURES_FILE))?,
        days: read_days_csv(&layout.features().join(COHORT_DAYS_FILE))?,
    })
}

fn cmd_train(cfg: &PipelineConfig, layout: &Layout, cell: ExperimentCell) -> Result<()> {
    let cohort = load_cohort(layout)?;
    let base = BaseMatrices::build(&cohort, cfg)?;
    let selected = select_cell(base.get(cell.resolution), cell, cfg.dataset.require_steps)?;
    mkdir(&layout.cell_dir(cell))?;
    write_matrix_csv(&layout.cell_file(cell, "matrix", "csv"), &selected)?;
    // Train from the written matrix so training and scoring see the same values.
    let selected = read_matrix_csv(&layout.cell_file(cell, "matrix", "csv"), &cohort.days, cell)?;
    let scaler = Scaler::fit(&selected, cfg.dataset.per_subject_scaling)?;
    let model = fit(&standardize_unit_norm(&selected, &scaler)?, cfg.forest_params())?;
    scaler.write_json(&layout.cell_file(cell, "scaler", "json"))?;
    model.write_json(&layout.cell_file(cell, "model", "json"))
}

fn cmd_score(cfg: &PipelineConfig, layout: &Layout, cell: ExperimentCell) -> Result<()> {
    let days = read_days_csv(&layout.features().join(COHORT_DAYS_FILE))?;
    let matrix = read_matrix_csv(&layout.cell_file(cell, "matrix", "csv"), &days, cell)?;
    let scaler = Scaler::read_json(&layout.cell_file(cell, "scaler", "json"))?;
    let model = ForestModel::read_json(&layout.cell_file(cell, "model", "json"))?;
    let standardized = standardize_unit_norm(&matrix, &scaler)?;
    let scores = score_matrix(&model, &standardized)?;
    let days = pool_days(&standardized, &scores, cfg.model.day_pooling);
    write_day_scores(&layout.cell_file(cell, "scores", "csv"), &days)
}

fn cmd_evaluate(cfg: &PipelineConfig, layout: &Layout, cell: ExperimentCell) -> Result<()> {
    let days = read_days_csv(&layout.features().join(COHORT_DAYS_FILE))?;
    let scores = read_day_scores(&layout.cell_file(cell, "scores", "csv"))?;
    let awake_cell = cell.with_segment(Segment::Awake);
    let awake_path = layout.cell_file(awake_cell, "scores", "csv");
    let awake = if cell.segment == Segment::Sleep && awake_path.exists() {
        Some(read_day_scores(&awake_path)?)
    } else {
        None
    };
    let report = evaluate_cell(cell, &scores, awake.as_ref(), &days, cfg)?;
    write_json(&layout.cell_file(cell, "report", "json"), &report)?;
    let text = render_cell_report(&report);
    write_text(&layout.cell_file(cell, "report", "txt"), &text)?;
    print!("{text}");
    Ok(())
}

fn cmd_experiment(cfg: &PipelineConfig, layout: &Layout) -> Result<()> {
    let cohort = load_cohort(layout)?;
    let base = BaseMatrices::build(&cohort, cfg)?;
    let (grid, _) = run_experiment(&base, &cohort.days, cfg, |run, report| {
        let cell = run.cell;
        mkdir(&layout.cell_dir(cell))?;
        run.scaler.write_json(&layout.cell_file(cell, "scaler", "json"))?;
        run.model.write_json(&layout.cell_file(cell, "model", "json"))?;
        write_day_scores(&layout.cell_file(cell, "scores", "csv"), &run.day_scores)?;
        write_json(&layout.cell_file(cell, "report", "json"), report)?;
        write_text(&layout.cell_file(cell, "report", "txt"), &render_cell_report(report))
    })?;
    write_json(&layout.out.join("grid_report.json"), &grid)?;
    let table = grid.render_table();
    write_text(&layout.out.join("grid_report.txt"), &table)?;
    print!("{table}");
    Ok(())
}
