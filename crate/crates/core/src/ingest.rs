//! Canonical stream schema, per-subject CSV loading and day partitioning.
//!
//! A subject directory holds five CSV files (see the `*_FILE` constants).
//! Timestamps are UTC seconds with a fractional part. Missing sensor values
//! are empty CSV fields and are held in memory as `NaN`; rows that violate
//! the schema are rejected and counted rather than aborting the load.

use std::collections::BTreeMap;
use std::fmt;
use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;
use std::str::FromStr;
use std::sync::Arc;

use chrono::NaiveDate;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const MOTION_FILE: &str = "motion.csv";
pub const RR_FILE: &str = "rr.csv";
pub const STEPS_FILE: &str = "steps.csv";
pub const SLEEP_FILE: &str = "sleep.csv";
pub const DAYS_FILE: &str = "days.csv";

pub const MOTION_HEADER: [&str; 7] = ["t", "ax", "ay", "az", "gx", "gy", "gz"];
pub const RR_HEADER: [&str; 2] = ["t", "rr_ms"];
pub const STEPS_HEADER: [&str; 5] = ["t_start", "t_end", "steps", "distance_m", "calories"];
pub const SLEEP_HEADER: [&str; 2] = ["t_start", "t_end"];
pub const DAYS_HEADER: [&str; 3] = ["date", "label", "split"];

pub const SECONDS_PER_DAY: f64 = 86_400.0;
/// Days between 0001-01-01 (CE day 1) and 1970-01-01.
const UNIX_EPOCH_CE_DAYS: i64 = 719_163;

/// One 6-axis IMU reading. Accelerations in g, angular velocity in deg/s.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SensorSample {
    pub t: f64,
    pub ax: f64,
    pub ay: f64,
    pub az: f64,
    pub gx: f64,
    pub gy: f64,
    pub gz: f64,
}

impl SensorSample {
    pub fn missing(t: f64) -> Self {
        SensorSample {
            t,
            ax: f64::NAN,
            ay: f64::NAN,
            az: f64::NAN,
            gx: f64::NAN,
            gy: f64::NAN,
            gz: f64::NAN,
        }
    }

    pub fn acc(&self) -> [f64; 3] {
        [self.ax, self.ay, self.az]
    }

    pub fn gyro(&self) -> [f64; 3] {
        [self.gx, self.gy, self.gz]
    }

    pub fn channel(&self, c: usize) -> f64 {
        match c {
            0 => self.ax,
            1 => self.ay,
            2 => self.az,
            3 => self.gx,
            4 => self.gy,
            5 => self.gz,
            _ => panic!("motion channel index {c} out of range"),
        }
    }

    pub fn set_channel(&mut self, c: usize, v: f64) {
        match c {
            0 => self.ax = v,
            1 => self.ay = v,
            2 => self.az = v,
            3 => self.gx = v,
            4 => self.gy = v,
            5 => self.gz = v,
            _ => panic!("motion channel index {c} out of range"),
        }
    }
}

/// Inter-beat interval in milliseconds; `NaN` marks a missing reading.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RrSample {
    pub t: f64,
    pub rr: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StepEvent {
    pub t_start: f64,
    pub t_end: f64,
    pub steps: u32,
    pub distance: f64,
    pub calories: f64,
}

impl StepEvent {
    pub fn duration(&self) -> f64 {
        self.t_end - self.t_start
    }
}

/// Half-open sleep period `[t_start, t_end)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SleepInterval {
    pub t_start: f64,
    pub t_end: f64,
}

impl SleepInterval {
    pub fn contains(&self, t: f64) -> bool {
        t >= self.t_start && t < self.t_end
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DayLabel {
    Normal,
    Relapse,
    Unlabeled,
}

impl DayLabel {
    pub fn as_str(self) -> &'static str {
        match self {
            DayLabel::Normal => "normal",
            DayLabel::Relapse => "relapse",
            DayLabel::Unlabeled => "unlabeled",
        }
    }
}

impl fmt::Display for DayLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for DayLabel {
    type Err = String;
    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        match s.trim() {
            "normal" => Ok(DayLabel::Normal),
            "relapse" => Ok(DayLabel::Relapse),
            "unlabeled" => Ok(DayLabel::Unlabeled),
            other => Err(format!("unknown day label {other:?}")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Validation,
    Test,
}

impl Split {
    pub fn as_str(self) -> &'static str {
        match self {
            Split::Train => "train",
            Split::Validation => "validation",
            Split::Test => "test",
        }
    }
}

impl fmt::Display for Split {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Split {
    type Err = String;
    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        match s.trim() {
            "train" => Ok(Split::Train),
            "validation" => Ok(Split::Validation),
            "test" => Ok(Split::Test),
            other => Err(format!("unknown split {other:?}")),
        }
    }
}

/// Identifies one subject-day.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct DayKey {
    pub subject: Arc<str>,
    pub date: NaiveDate,
}

impl DayKey {
    pub fn new(subject: &Arc<str>, date: NaiveDate) -> Self {
        DayKey {
            subject: Arc::clone(subject),
            date,
        }
    }
}

impl fmt::Display for DayKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}/{}", self.subject, self.date)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DayRecord {
    pub subject_id: Arc<str>,
    pub date: NaiveDate,
    pub label: DayLabel,
    pub split: Split,
}

impl DayRecord {
    pub fn key(&self) -> DayKey {
        DayKey::new(&self.subject_id, self.date)
    }
}

/// All raw streams of one subject. Immutable once loaded.
#[derive(Debug, Clone, PartialEq)]
pub struct SensorStreams {
    pub subject_id: Arc<str>,
    /// Fixed offset (seconds east of UTC) defining local calendar days.
    pub utc_offset: i32,
    pub motion: Vec<SensorSample>,
    pub rr: Vec<RrSample>,
    pub steps: Vec<StepEvent>,
    pub sleep: Vec<SleepInterval>,
    pub days: Vec<DayRecord>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SleepState {
    Sleep,
    Awake,
}

/// Per-file load diagnostics.
#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct FileReport {
    pub rows: usize,
    pub rejected_rows: usize,
    pub inversions: usize,
    pub warnings: Vec<String>,
}

impl FileReport {
    fn reject(&mut self, row: usize, why: impl fmt::Display) {
        self.rejected_rows += 1;
        self.warnings.push(format!("row {row}: {why}"));
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct LoadReport {
    pub motion: FileReport,
    pub rr: FileReport,
    pub steps: FileReport,
    pub sleep: FileReport,
    pub days: FileReport,
    pub warnings: Vec<String>,
}

impl LoadReport {
    pub fn rejected_rows(&self) -> usize {
        self.motion.rejected_rows
            + self.rr.rejected_rows
            + self.steps.rejected_rows
            + self.sleep.rejected_rows
            + self.days.rejected_rows
    }
}

/// Local calendar date of `t` under a fixed UTC offset.
pub fn local_date(t: f64, utc_offset: i32) -> NaiveDate {
    let day = ((t + utc_offset as f64) / SECONDS_PER_DAY).floor() as i64;
    date_from_epoch_days(day)
}

pub fn date_from_epoch_days(day: i64) -> NaiveDate {
    NaiveDate::from_num_days_from_ce_opt((day + UNIX_EPOCH_CE_DAYS) as i32)
        .expect("timestamp within chrono's date range")
}

pub fn epoch_days(date: NaiveDate) -> i64 {
    use chrono::Datelike;
    date.num_days_from_ce() as i64 - UNIX_EPOCH_CE_DAYS
}

/// UTC timestamp of local midnight starting `date`.
pub fn local_midnight(date: NaiveDate, utc_offset: i32) -> f64 {
    epoch_days(date) as f64 * SECONDS_PER_DAY - utc_offset as f64
}

impl SensorStreams {
    /// Sleep/awake state at `t`; sleep iff `t` falls in some `[t_start, t_end)`.
    pub fn sleep_mask(&self, t: f64) -> SleepState {
        sleep_state(&self.sleep, t)
    }

    pub fn local_date(&self, t: f64) -> NaiveDate {
        local_date(t, self.utc_offset)
    }

    /// Splits the streams into calendar days. Every sample lands in exactly
    /// one day; steps and sleep intervals go to the day on which they start.
    /// Days with a record but no data are kept with empty slices.
    pub fn partition_days(&self) -> BTreeMap<DayKey, DayStreams<'_>> {
        let mut out: BTreeMap<DayKey, DayStreams<'_>> = BTreeMap::new();
        for d in &self.days {
            out.entry(d.key()).or_default();
        }
        let off = self.utc_offset;
        for_each_day_run(&self.motion, |s| local_date(s.t, off), |date, run| {
            out.entry(DayKey::new(&self.subject_id, date)).or_default().motion = run;
        });
        for_each_day_run(&self.rr, |s| local_date(s.t, off), |date, run| {
            out.entry(DayKey::new(&self.subject_id, date)).or_default().rr = run;
        });
        for_each_day_run(&self.steps, |s| local_date(s.t_start, off), |date, run| {
            out.entry(DayKey::new(&self.subject_id, date)).or_default().steps = run;
        });
        for_each_day_run(&self.sleep, |s| local_date(s.t_start, off), |date, run| {
            out.entry(DayKey::new(&self.subject_id, date)).or_default().sleep = run;
        });
        out
    }

    pub fn day_record(&self, date: NaiveDate) -> Option<&DayRecord> {
        self.days
            .binary_search_by(|d| d.date.cmp(&date))
            .ok()
            .map(|i| &self.days[i])
    }
}

pub fn sleep_state(sleep: &[SleepInterval], t: f64) -> SleepState {
    // Intervals are sorted and disjoint after normalization.
    let idx = sleep.partition_point(|s| s.t_start <= t);
    if idx > 0 && sleep[idx - 1].contains(t) {
        SleepState::Sleep
    } else {
        SleepState::Awake
    }
}

fn for_each_day_run<'a, T>(
    items: &'a [T],
    date_of: impl Fn(&T) -> NaiveDate,
    mut emit: impl FnMut(NaiveDate, &'a [T]),
) {
    let mut start = 0;
    while start < items.len() {
        let date = date_of(&items[start]);
        let mut end = start + 1;
        while end < items.len() && date_of(&items[end]) == date {
            end += 1;
        }
        emit(date, &items[start..end]);
        start = end;
    }
}

/// Borrowed view of one subject-day.
#[derive(Debug, Clone, Copy, Default)]
pub struct DayStreams<'a> {
    pub motion: &'a [SensorSample],
    pub rr: &'a [RrSample],
    pub steps: &'a [StepEvent],
    pub sleep: &'a [SleepInterval],
}

impl DayStreams<'_> {
    pub fn sample_count(&self) -> usize {
        self.motion.len() + self.rr.len() + self.steps.len() + self.sleep.len()
    }
}

/// Sorts intervals and merges any that overlap or touch.
pub fn normalize_sleep(mut sleep: Vec<SleepInterval>) -> Vec<SleepInterval> {
    sleep.sort_by(|a, b| a.t_start.total_cmp(&b.t_start));
    let mut merged: Vec<SleepInterval> = Vec::with_capacity(sleep.len());
    for s in sleep {
        match merged.last_mut() {
            Some(last) if s.t_start <= last.t_end => last.t_end = last.t_end.max(s.t_end),
            _ => merged.push(s),
        }
    }
    merged
}

fn parse_opt(field: &str) -> std::result::Result<f64, String> {
    let f = field.trim();
    if f.is_empty() {
        return Ok(f64::NAN);
    }
    let v: f64 = f.parse().map_err(|_| format!("unparseable number {f:?}"))?;
    if v.is_finite() {
        Ok(v)
    } else {
        Err(format!("non-finite value {f:?}"))
    }
}

fn parse_req(field: &str) -> std::result::Result<f64, String> {
    let v = parse_opt(field)?;
    if v.is_nan() {
        Err("required value is empty".into())
    } else {
        Ok(v)
    }
}

fn open_csv(path: &Path, header: &[&str]) -> Result<csv::Reader<File>> {
    let file = File::open(path).map_err(|e| {
        if e.kind() == std::io::ErrorKind::NotFound {
            Error::MissingArtifact(path.to_path_buf())
        } else {
            Error::io(path, e)
        }
    })?;
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(true)
        .flexible(true)
        .from_reader(file);
    let got = rdr.headers().map_err(|e| Error::csv(path, e))?.clone();
    let got: Vec<&str> = got.iter().map(str::trim).collect();
    if got != header {
        return Err(Error::malformed(
            path.display().to_string(),
            format!("expected header {header:?}, found {got:?}"),
        ));
    }
    Ok(rdr)
}

fn read_rows<T>(
    path: &Path,
    header: &[&str],
    report: &mut FileReport,
    mut parse: impl FnMut(&csv::StringRecord) -> std::result::Result<T, String>,
) -> Result<Vec<T>> {
    let mut rdr = open_csv(path, header)?;
    let mut out = Vec::new();
    let mut record = csv::StringRecord::new();
    let mut row = 0usize;
    loop {
        match rdr.read_record(&mut record) {
            Ok(false) => break,
            Ok(true) => {
                row += 1;
                report.rows += 1;
                if record.len() != header.len() {
                    report.reject(row, format!("expected {} fields, got {}", header.len(), record.len()));
                    continue;
                }
                match parse(&record) {
                    Ok(v) => out.push(v),
                    Err(why) => report.reject(row, why),
                }
            }
            Err(e) => {
                row += 1;
                report.rows += 1;
                report.reject(row, e);
            }
        }
    }
    Ok(out)
}

/// Sorts by key if needed; returns the number of adjacent descents seen.
fn sort_counting<T>(items: &mut [T], key: impl Fn(&T) -> f64) -> usize {
    let inversions = items.windows(2).filter(|w| key(&w[1]) < key(&w[0])).count();
    if inversions > 0 {
        items.sort_by(|a, b| key(a).total_cmp(&key(b)));
    }
    inversions
}

/// Drops rows whose timestamp equals the previous one (keeps the first).
fn dedup_times<T>(items: &mut Vec<T>, key: impl Fn(&T) -> f64, report: &mut FileReport) {
    let before = items.len();
    items.dedup_by(|b, a| key(a) == key(b));
    let dropped = before - items.len();
    if dropped > 0 {
        report.rejected_rows += dropped;
        report
            .warnings
            .push(format!("{dropped} rows with duplicate timestamps dropped"));
    }
}

/// Loads and validates one subject directory. The subject id is the
/// directory name.
pub fn load_subject(dir: &Path, utc_offset: i32) -> Result<(SensorStreams, LoadReport)> {
    let subject_id: Arc<str> = dir
        .file_name()
        .and_then(|n| n.to_str())
        .ok_or_else(|| Error::malformed(dir.display().to_string(), "directory has no usable name"))?
        .into();
    let mut report = LoadReport::default();

    let mut motion = read_rows(&dir.join(MOTION_FILE), &MOTION_HEADER, &mut report.motion, |r| {
        Ok(SensorSample {
            t: parse_req(&r[0])?,
            ax: parse_opt(&r[1])?,
            ay: parse_opt(&r[2])?,
            az: parse_opt(&r[3])?,
            gx: parse_opt(&r[4])?,
            gy: parse_opt(&r[5])?,
            gz: parse_opt(&r[6])?,
        })
    })?;
    report.motion.inversions = sort_counting(&mut motion, |s| s.t);
    dedup_times(&mut motion, |s| s.t, &mut report.motion);

    let mut rr = read_rows(&dir.join(RR_FILE), &RR_HEADER, &mut report.rr, |r| {
        let t = parse_req(&r[0])?;
        let rr = parse_opt(&r[1])?;
        if rr <= 0.0 {
            return Err(format!("rr must be positive, got {rr}"));
        }
        Ok(RrSample { t, rr })
    })?;
    report.rr.inversions = sort_counting(&mut rr, |s| s.t);
    dedup_times(&mut rr, |s| s.t, &mut report.rr);

    let steps_path = dir.join(STEPS_FILE);
    let mut steps = if steps_path.exists() {
        read_rows(&steps_path, &STEPS_HEADER, &mut report.steps, |r| {
            let t_start = parse_req(&r[0])?;
            let t_end = parse_req(&r[1])?;
            if t_end <= t_start {
                return Err("t_end must exceed t_start".into());
            }
            let steps: u32 = r[2]
                .trim()
                .parse()
                .map_err(|_| format!("steps must be a non-negative integer, got {:?}", &r[2]))?;
            let distance = parse_req(&r[3])?;
            let calories = parse_req(&r[4])?;
            if distance < 0.0 || calories < 0.0 {
                return Err("distance and calories must be non-negative".into());
            }
            Ok(StepEvent {
                t_start,
                t_end,
                steps,
                distance,
                calories,
            })
        })?
    } else {
        report.warnings.push(format!("{STEPS_FILE} missing; no step events"));
        Vec::new()
    };
    report.steps.inversions = sort_counting(&mut steps, |s| s.t_start);

    let sleep_path = dir.join(SLEEP_FILE);
    let sleep = if sleep_path.exists() {
        read_rows(&sleep_path, &SLEEP_HEADER, &mut report.sleep, |r| {
            let t_start = parse_req(&r[0])?;
            let t_end = parse_req(&r[1])?;
            if t_end <= t_start {
                return Err("t_end must exceed t_start".into());
            }
            Ok(SleepInterval { t_start, t_end })
        })?
    } else {
        report.warnings.push(format!("{SLEEP_FILE} missing; every sample is awake"));
        Vec::new()
    };
    report.sleep.inversions = sleep.windows(2).filter(|w| w[1].t_start < w[0].t_start).count();
    let n_sleep = sleep.len();
    let sleep = normalize_sleep(sleep);
    if sleep.len() < n_sleep {
        report
            .sleep
            .warnings
            .push(format!("{} overlapping sleep intervals merged", n_sleep - sleep.len()));
    }

    let mut days = read_rows(&dir.join(DAYS_FILE), &DAYS_HEADER, &mut report.days, |r| {
        let date = NaiveDate::parse_from_str(r[0].trim(), "%Y-%m-%d")
            .map_err(|e| format!("bad date {:?}: {e}", &r[0]))?;
        let label: DayLabel = r[1].parse()?;
        let split: Split = r[2].parse()?;
        if split == Split::Train && label == DayLabel::Relapse {
            return Err("train split may not contain relapse days".into());
        }
        Ok(DayRecord {
            subject_id: Arc::clone(&subject_id),
            date,
            label,
            split,
        })
    })?;
    report.days.inversions = sort_counting(&mut days, |d| epoch_days(d.date) as f64);
    let before = days.len();
    days.dedup_by(|b, a| a.date == b.date);
    if days.len() < before {
        report.days.rejected_rows += before - days.len();
        report.days.warnings.push("duplicate dates dropped".into());
    }

    let mut streams = SensorStreams {
        subject_id,
        utc_offset,
        motion,
        rr,
        steps,
        sleep,
        days,
    };
    let added = add_missing_day_records(&mut streams);
    if added > 0 {
        report.warnings.push(format!(
            "{added} days with data but no record in {DAYS_FILE}; added as unlabeled/test"
        ));
    }
    for (name, fr) in [
        (MOTION_FILE, &report.motion),
        (RR_FILE, &report.rr),
        (STEPS_FILE, &report.steps),
        (SLEEP_FILE, &report.sleep),
        (DAYS_FILE, &report.days),
    ] {
        if fr.rejected_rows > 0 {
            log::warn!("{}: {name}: {} rows rejected", streams.subject_id, fr.rejected_rows);
        }
        if fr.inversions > 0 {
            log::warn!("{}: {name}: {} out-of-order rows re-sorted", streams.subject_id, fr.inversions);
        }
    }
    Ok((streams, report))
}

fn add_missing_day_records(streams: &mut SensorStreams) -> usize {
    let known: std::collections::BTreeSet<NaiveDate> = streams.days.iter().map(|d| d.date).collect();
    let mut extra = std::collections::BTreeSet::new();
    let off = streams.utc_offset;
    let mut note = |t: f64| {
        let d = local_date(t, off);
        if !known.contains(&d) {
            extra.insert(d);
        }
    };
    streams.motion.iter().for_each(|s| note(s.t));
    streams.rr.iter().for_each(|s| note(s.t));
    streams.steps.iter().for_each(|s| note(s.t_start));
    streams.sleep.iter().for_each(|s| note(s.t_start));
    let added = extra.len();
    for date in extra {
        streams.days.push(DayRecord {
            subject_id: Arc::clone(&streams.subject_id),
            date,
            label: DayLabel::Unlabeled,
            split: Split::Test,
        });
    }
    streams.days.sort_by_key(|d| d.date);
    added
}

fn fmt_opt(v: f64) -> String {
    if v.is_nan() {
        String::new()
    } else {
        format!("{v}")
    }
}

fn create(path: &Path) -> Result<BufWriter<File>> {
    File::create(path)
        .map(|f| BufWriter::with_capacity(1 << 20, f))
        .map_err(|e| Error::io(path, e))
}

/// Writes the five-file layout into `dir` (created if absent).
pub fn write_subject(streams: &SensorStreams, dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let io = |p: &Path| {
        let p = p.to_path_buf();
        move |e| Error::io(p.clone(), e)
    };

    let path = dir.join(MOTION_FILE);
    let mut w = create(&path)?;
    writeln!(w, "{}", MOTION_HEADER.join(",")).map_err(io(&path))?;
    for s in &streams.motion {
        writeln!(
            w,
            "{},{},{},{},{},{},{}",
            s.t,
            fmt_opt(s.ax),
            fmt_opt(s.ay),
            fmt_opt(s.az),
            fmt_opt(s.gx),
            fmt_opt(s.gy),
            fmt_opt(s.gz)
        )
        .map_err(io(&path))?;
    }
    w.flush().map_err(io(&path))?;

    let path = dir.join(RR_FILE);
    let mut w = create(&path)?;
    writeln!(w, "{}", RR_HEADER.join(",")).map_err(io(&path))?;
    for s in &streams.rr {
        writeln!(w, "{},{}", s.t, fmt_opt(s.rr)).map_err(io(&path))?;
    }
    w.flush().map_err(io(&path))?;

    let path = dir.join(STEPS_FILE);
    let mut w = create(&path)?;
    writeln!(w, "{}", STEPS_HEADER.join(",")).map_err(io(&path))?;
    for s in &streams.steps {
        writeln!(w, "{},{},{},{},{}", s.t_start, s.t_end, s.steps, s.distance, s.calories)
            .map_err(io(&path))?;
    }
    w.flush().map_err(io(&path))?;

    let path = dir.join(SLEEP_FILE);
    let mut w = create(&path)?;
    writeln!(w, "{}", SLEEP_HEADER.join(",")).map_err(io(&path))?;
    for s in &streams.sleep {
        writeln!(w, "{},{}", s.t_start, s.t_end).map_err(io(&path))?;
    }
    w.flush().map_err(io(&path))?;

    let path = dir.join(DAYS_FILE);
    let mut w = create(&path)?;
    writeln!(w, "{}", DAYS_HEADER.join(",")).map_err(io(&path))?;
    for d in &streams.days {
        writeln!(w, "{},{},{}", d.date.format("%Y-%m-%d"), d.label, d.split).map_err(io(&path))?;
    }
    w.flush().map_err(io(&path))?;
    Ok(())
}

/// Subject directories under `root`, sorted by name.
pub fn subject_dirs(root: &Path) -> Result<Vec<std::path::PathBuf>> {
    if !root.is_dir() {
        return Err(Error::MissingArtifact(root.to_path_buf()));
    }
    let mut dirs: Vec<_> = std::fs::read_dir(root)
        .map_err(|e| Error::io(root, e))?
        .filter_map(|e| e.ok())
        .map(|e| e.path())
        .filter(|p| p.is_dir() && p.join(DAYS_FILE).exists())
        .collect();
    dirs.sort();
    Ok(dirs)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn write(dir: &Path, name: &str, body: &str) {
        std::fs::write(dir.join(name), body).unwrap();
    }

    fn minimal_subject(dir: &Path) {
        write(dir, MOTION_FILE, "t,ax,ay,az,gx,gy,gz\n0,0,0,1,0,0,0\n1,0,0,1,0,0,0\n");
        write(dir, RR_FILE, "t,rr_ms\n0,1000\n1,1000\n");
        write(dir, STEPS_FILE, "t_start,t_end,steps,distance_m,calories\n");
        write(dir, SLEEP_FILE, "t_start,t_end\n");
        write(dir, DAYS_FILE, "date,label,split\n1970-01-01,normal,train\n");
    }

    fn subject_dir() -> (tempfile::TempDir, std::path::PathBuf) {
        let tmp = tempfile::tempdir().unwrap();
        let dir = tmp.path().join("s01");
        std::fs::create_dir(&dir).unwrap();
        (tmp, dir)
    }

    #[test]
    fn empty_steps_file_loads_zero_events() {
        let (_tmp, dir) = subject_dir();
        minimal_subject(&dir);
        let (s, report) = load_subject(&dir, 0).unwrap();
        assert!(s.steps.is_empty());
        assert_eq!(report.rejected_rows(), 0);
        assert_eq!(&*s.subject_id, "s01");
    }

    #[test]
    fn out_of_order_motion_is_sorted_and_counted() {
        let (_tmp, dir) = subject_dir();
        minimal_subject(&dir);
        write(
            &dir,
            MOTION_FILE,
            "t,ax,ay,az,gx,gy,gz\n0,0,0,1,0,0,0\n2,0,0,3,0,0,0\n1,0,0,2,0,0,0\n",
        );
        let (s, report) = load_subject(&dir, 0).unwrap();
        let ts: Vec<f64> = s.motion.iter().map(|m| m.t).collect();
        let mut expected = ts.clone();
        expected.sort_by(f64::total_cmp);
        assert_eq!(ts, expected);
        assert_eq!(report.motion.inversions, 1);
        assert_eq!(s.motion[1].az, 2.0);
    }

    #[test]
    fn negative_rr_rejected() {
        let (_tmp, dir) = subject_dir();
        minimal_subject(&dir);
        write(&dir, RR_FILE, "t,rr_ms\n0,1000\n1,-5\n2,\n");
        let (s, report) = load_subject(&dir, 0).unwrap();
        assert_eq!(report.rr.rejected_rows, 1);
        assert_eq!(s.rr.len(), 2);
        assert!(s.rr[1].rr.is_nan());
    }

    #[test]
    fn unparseable_row_is_reported_with_index() {
        let (_tmp, dir) = subject_dir();
        minimal_subject(&dir);
        write(&dir, RR_FILE, "t,rr_ms\n0,1000\n1,abc\n");
        let (_, report) = load_subject(&dir, 0).unwrap();
        assert_eq!(report.rr.rejected_rows, 1);
        assert!(report.rr.warnings[0].starts_with("row 2"));
    }

    #[test]
    fn missing_required_file_is_fatal() {
        let (_tmp, dir) = subject_dir();
        minimal_subject(&dir);
        std::fs::remove_file(dir.join(RR_FILE)).unwrap();
        assert!(matches!(load_subject(&dir, 0), Err(Error::MissingArtifact(_))));
    }

    #[test]
    fn missing_optional_file_degrades() {
        let (_tmp, dir) = subject_dir();
        minimal_subject(&dir);
        std::fs::remove_file(dir.join(SLEEP_FILE)).unwrap();
        let (s, report) = load_subject(&dir, 0).unwrap();
        assert!(s.sleep.is_empty());
        assert_eq!(report.warnings.len(), 1);
    }

    #[test]
    fn relapse_in_train_rejected() {
        let (_tmp, dir) = subject_dir();
        minimal_subject(&dir);
        write(&dir, DAYS_FILE, "date,label,split\n1970-01-01,relapse,train\n");
        let (s, report) = load_subject(&dir, 0).unwrap();
        assert_eq!(report.days.rejected_rows, 1);
        // Day re-added as unlabeled since it still has data.
        assert_eq!(s.days.len(), 1);
        assert_eq!(s.days[0].label, DayLabel::Unlabeled);
    }

    #[test]
    fn overlapping_sleep_merged() {
        let merged = normalize_sleep(vec![
            SleepInterval { t_start: 10.0, t_end: 20.0 },
            SleepInterval { t_start: 0.0, t_end: 12.0 },
            SleepInterval { t_start: 30.0, t_end: 40.0 },
        ]);
        assert_eq!(
            merged,
            vec![
                SleepInterval { t_start: 0.0, t_end: 20.0 },
                SleepInterval { t_start: 30.0, t_end: 40.0 }
            ]
        );
    }

    fn streams_with_sleep(sleep: Vec<SleepInterval>) -> SensorStreams {
        SensorStreams {
            subject_id: "s".into(),
            utc_offset: 0,
            motion: vec![],
            rr: vec![],
            steps: vec![],
            sleep,
            days: vec![],
        }
    }

    #[test]
    fn sleep_mask_half_open() {
        let s = streams_with_sleep(vec![
            SleepInterval { t_start: 100.0, t_end: 200.0 },
            SleepInterval { t_start: 300.0, t_end: 400.0 },
        ]);
        assert_eq!(s.sleep_mask(100.0), SleepState::Sleep);
        assert_eq!(s.sleep_mask(199.999), SleepState::Sleep);
        assert_eq!(s.sleep_mask(200.0), SleepState::Awake);
        assert_eq!(s.sleep_mask(250.0), SleepState::Awake);
        assert_eq!(s.sleep_mask(99.0), SleepState::Awake);
        assert_eq!(s.sleep_mask(350.0), SleepState::Sleep);
    }

    #[test]
    fn midnight_sample_belongs_to_its_date() {
        let d = NaiveDate::from_ymd_opt(2023, 3, 5).unwrap();
        let midnight = local_midnight(d, 3600);
        assert_eq!(local_date(midnight, 3600), d);
        assert_eq!(local_date(midnight - 1e-3, 3600), d.pred_opt().unwrap());
    }

    #[test]
    fn sleep_spanning_midnight_attributed_to_start_date() {
        let d0 = NaiveDate::from_ymd_opt(2023, 1, 1).unwrap();
        let m0 = local_midnight(d0, 0);
        let mut s = streams_with_sleep(vec![SleepInterval {
            t_start: m0 + 23.0 * 3600.0,
            t_end: m0 + 31.0 * 3600.0,
        }]);
        s.motion = vec![SensorSample::missing(m0), SensorSample::missing(m0 + 86_400.0)];
        let parts = s.partition_days();
        assert_eq!(parts.len(), 2);
        let first = parts.get(&DayKey::new(&s.subject_id, d0)).unwrap();
        assert_eq!(first.sleep.len(), 1);
        let second = parts
            .get(&DayKey::new(&s.subject_id, d0.succ_opt().unwrap()))
            .unwrap();
        assert!(second.sleep.is_empty());
        assert_eq!(second.motion.len(), 1);
    }
}
