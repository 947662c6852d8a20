//! 5-minute interval features: activity energy, heart rate, HRV band
//! powers, time-of-day encoding and step statistics.

pub mod spectral;

use std::collections::BTreeMap;
use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;
use std::sync::Arc;

use chrono::NaiveDate;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::ingest::{
    local_midnight, sleep_state, SensorStreams, SleepState, StepEvent, SECONDS_PER_DAY,
};
use crate::preprocess::estimate_rate;
pub use spectral::{band_powers, welch_psd, BandPowers, Bands, PsdEstimate, WelchConfig, WelchEstimator};

/// Which feature groups of an interval are populated.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Presence(pub u8);

impl Presence {
    pub const ACC: Presence = Presence(1);
    pub const GYRO: Presence = Presence(1 << 1);
    pub const HEART: Presence = Presence(1 << 2);
    pub const SPECTRAL: Presence = Presence(1 << 3);
    pub const STEPS: Presence = Presence(1 << 4);
    /// Groups a model row cannot do without.
    pub const REQUIRED: Presence = Presence(0b1111);

    pub fn contains(self, other: Presence) -> bool {
        self.0 & other.0 == other.0
    }

    pub fn insert(&mut self, other: Presence) {
        self.0 |= other.0;
    }

    pub fn remove(&mut self, other: Presence) {
        self.0 &= !other.0;
    }
}

/// Feature vector of one interval. Values of absent groups are `NaN`.
///
/// The `*_std` fields and sample counts carry the within-interval spread of
/// multi-sample features so wider windows can pool them.
#[derive(Debug, Clone, PartialEq)]
pub struct IntervalFeatures {
    pub subject_id: Arc<str>,
    pub date: NaiveDate,
    pub t_start: f64,
    pub is_sleep: bool,
    pub acc_energy: f64,
    pub gyro_energy: f64,
    pub bpm_mean: f64,
    pub hrv_sdnn: f64,
    pub lf_power: f64,
    pub hf_power: f64,
    pub lf_fraction: f64,
    pub hf_fraction: f64,
    pub sin_t: f64,
    pub cos_t: f64,
    pub step_count: f64,
    pub dist_mean: f64,
    pub cal_mean: f64,
    pub stepsize_mean: f64,
    pub speed_mean: f64,
    pub presence: Presence,
    pub acc_energy_std: f64,
    pub gyro_energy_std: f64,
    pub bpm_std: f64,
    pub dist_std: f64,
    pub cal_std: f64,
    pub stepsize_std: f64,
    pub speed_std: f64,
    pub n_acc: u32,
    pub n_gyro: u32,
    pub n_rr: u32,
    pub n_step_events: u32,
}

/// `(1/N) Σ ‖v‖²` over present vectors; `None` without any.
pub fn normalized_energy(samples: &[[f64; 3]]) -> Option<f64> {
    energy_stats(samples.iter().copied()).map(|(mean, _, _)| mean)
}

/// Mean, population std and count of per-sample squared norms.
fn energy_stats(samples: impl Iterator<Item = [f64; 3]>) -> Option<(f64, f64, u32)> {
    let e: Vec<f64> = samples
        .filter(|v| v.iter().all(|c| c.is_finite()))
        .map(|v| v[0] * v[0] + v[1] * v[1] + v[2] * v[2])
        .collect();
    let (mean, std) = mean_std(&e)?;
    Some((mean, std, e.len() as u32))
}

/// Mean and population standard deviation.
pub fn mean_std(x: &[f64]) -> Option<(f64, f64)> {
    if x.is_empty() {
        return None;
    }
    let n = x.len() as f64;
    let mean = x.iter().sum::<f64>() / n;
    let var = x.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
    Some((mean, var.sqrt()))
}

/// `(60000 / mean(rr), population std of rr)`; needs two present values.
pub fn bpm_and_sdnn(rr_ms: &[f64]) -> Option<(f64, f64)> {
    let present: Vec<f64> = rr_ms.iter().copied().filter(|v| v.is_finite()).collect();
    if present.len() < 2 {
        return None;
    }
    let (mean, sdnn) = mean_std(&present)?;
    Some((60_000.0 / mean, sdnn))
}

/// Daily phase encoding: `θ = 2π · (seconds into local day) / 86400`.
pub fn time_encoding(t: f64, utc_offset: i32) -> (f64, f64) {
    let secs = (t + utc_offset as f64).rem_euclid(SECONDS_PER_DAY);
    let theta = std::f64::consts::TAU * secs / SECONDS_PER_DAY;
    (theta.sin(), theta.cos())
}

/// Splits an integer count by fractions: round each share to nearest and
/// put the rounding remainder on the first share.
pub fn apportion_steps(steps: u32, fractions: &[f64]) -> Vec<u32> {
    if fractions.is_empty() {
        return Vec::new();
    }
    let mut shares: Vec<i64> = fractions
        .iter()
        .map(|f| (f * steps as f64).round() as i64)
        .collect();
    let mut remainder = steps as i64 - shares.iter().sum::<i64>();
    // Negative remainders may exceed the first share; spill forward.
    for s in shares.iter_mut() {
        let next = (*s + remainder).max(0);
        remainder -= next - *s;
        *s = next;
        if remainder == 0 {
            break;
        }
    }
    shares.into_iter().map(|s| s as u32).collect()
}

/// One event's contribution to an interval after time clipping.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepPiece {
    pub steps: u32,
    pub distance: f64,
    pub calories: f64,
    /// Whole-event step size (m/step); `None` for zero-step events.
    pub stepsize: Option<f64>,
    /// Whole-event speed (m/s).
    pub speed: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepFeatures {
    pub step_count: u32,
    pub dist_mean: f64,
    pub cal_mean: f64,
    /// `NaN` when every contributing event had zero steps.
    pub stepsize_mean: f64,
    pub speed_mean: f64,
    pub dist_std: f64,
    pub cal_std: f64,
    pub stepsize_std: f64,
    pub speed_std: f64,
    pub events: u32,
}

/// Sums step counts and averages distance, calories, step size and speed
/// over the contributing events.
pub fn step_features(pieces: &[StepPiece]) -> Option<StepFeatures> {
    if pieces.is_empty() {
        return None;
    }
    let dist: Vec<f64> = pieces.iter().map(|p| p.distance).collect();
    let cal: Vec<f64> = pieces.iter().map(|p| p.calories).collect();
    let size: Vec<f64> = pieces.iter().filter_map(|p| p.stepsize).collect();
    let speed: Vec<f64> = pieces.iter().map(|p| p.speed).collect();
    let (dist_mean, dist_std) = mean_std(&dist)?;
    let (cal_mean, cal_std) = mean_std(&cal)?;
    let (stepsize_mean, stepsize_std) = mean_std(&size).unwrap_or((f64::NAN, f64::NAN));
    let (speed_mean, speed_std) = mean_std(&speed)?;
    Some(StepFeatures {
        step_count: pieces.iter().map(|p| p.steps).sum(),
        dist_mean,
        cal_mean,
        stepsize_mean,
        speed_mean,
        dist_std,
        cal_std,
        stepsize_std,
        speed_std,
        events: pieces.len() as u32,
    })
}

/// Clips each event onto the interval grid `[k·w - offset, (k+1)·w - offset)`
/// proportionally to time overlap. Returns pieces keyed by grid index.
pub fn split_step_events(events: &[StepEvent], width: f64, utc_offset: i32) -> BTreeMap<i64, Vec<StepPiece>> {
    let mut out: BTreeMap<i64, Vec<StepPiece>> = BTreeMap::new();
    let off = utc_offset as f64;
    for ev in events {
        let dur = ev.duration();
        if !(dur > 0.0) {
            continue;
        }
        let stepsize = (ev.steps > 0).then(|| ev.distance / ev.steps as f64);
        let speed = ev.distance / dur;
        let first = ((ev.t_start + off) / width).floor() as i64;
        let last = ((ev.t_end + off) / width).ceil() as i64 - 1;
        let mut idx = Vec::new();
        let mut fractions = Vec::new();
        for k in first..=last {
            let a = (k as f64 * width - off).max(ev.t_start);
            let b = ((k + 1) as f64 * width - off).min(ev.t_end);
            if b > a {
                idx.push(k);
                fractions.push((b - a) / dur);
            }
        }
        let counts = apportion_steps(ev.steps, &fractions);
        for ((k, f), steps) in idx.into_iter().zip(fractions).zip(counts) {
            out.entry(k).or_default().push(StepPiece {
                steps,
                distance: ev.distance * f,
                calories: ev.calories * f,
                stepsize,
                speed,
            });
        }
    }
    out
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PsdSource {
    /// Spectrum of the RR-interval series.
    Rr,
    /// Spectrum of the instantaneous heart rate `60000 / rr`.
    Bpm,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct FeatureConfig {
    pub interval_seconds: f64,
    pub lf_band: (f64, f64),
    pub hf_band: (f64, f64),
    pub welch_segment: usize,
    pub welch_overlap: f64,
    pub remove_gravity: bool,
    pub psd_source: PsdSource,
    /// Present fraction of an interval's nominal RR samples needed for the
    /// spectral group.
    pub spectral_min_coverage: f64,
    /// Sampling rates; estimated from timestamps when unset.
    pub rr_rate_hz: Option<f64>,
    pub motion_rate_hz: Option<f64>,
}

impl Default for FeatureConfig {
    fn default() -> Self {
        let bands = Bands::default();
        let welch = WelchConfig::default();
        FeatureConfig {
            interval_seconds: 300.0,
            lf_band: bands.lf,
            hf_band: bands.hf,
            welch_segment: welch.segment_len,
            welch_overlap: welch.overlap,
            remove_gravity: false,
            psd_source: PsdSource::Rr,
            spectral_min_coverage: 0.5,
            rr_rate_hz: None,
            motion_rate_hz: None,
        }
    }
}

impl FeatureConfig {
    pub fn validate(&self) -> Result<()> {
        let w = self.interval_seconds;
        if !(w > 0.0) || SECONDS_PER_DAY % w != 0.0 {
            return Err(Error::Config(format!(
                "features.interval_seconds must divide 86400, got {w}"
            )));
        }
        if self.welch_segment < 2 || !(0.0..1.0).contains(&self.welch_overlap) {
            return Err(Error::Config("features.welch_segment >= 2 and welch_overlap in [0, 1) required".into()));
        }
        for (name, (lo, hi)) in [("lf_band", self.lf_band), ("hf_band", self.hf_band)] {
            if !(lo >= 0.0 && hi > lo) {
                return Err(Error::Config(format!("features.{name} must satisfy 0 <= lo < hi")));
            }
        }
        Ok(())
    }

    pub fn bands(&self) -> Bands {
        Bands {
            lf: self.lf_band,
            hf: self.hf_band,
        }
    }

    pub fn welch(&self) -> WelchConfig {
        WelchConfig {
            segment_len: self.welch_segment,
            overlap: self.welch_overlap,
        }
    }
}

fn slice_by_time<T>(items: &[T], t: impl Fn(&T) -> f64, lo: f64, hi: f64) -> &[T] {
    let a = items.partition_point(|s| t(s) < lo);
    let b = items.partition_point(|s| t(s) < hi);
    &items[a..b]
}

/// Extracts non-overlapping, midnight-aligned intervals of `cfg.interval_seconds`
/// for every recorded day of the subject, ordered by `t_start`.
pub fn extract_intervals(streams: &SensorStreams, cfg: &FeatureConfig) -> Result<Vec<IntervalFeatures>> {
    cfg.validate()?;
    let width = cfg.interval_seconds;
    let per_day = (SECONDS_PER_DAY / width).round() as usize;
    let off = streams.utc_offset;
    let rr_rate = cfg
        .rr_rate_hz
        .or_else(|| estimate_rate(streams.rr.iter().map(|s| s.t)));
    let mut welch = rr_rate.map(|fs| WelchEstimator::new(fs, cfg.welch()));
    let bands = cfg.bands();
    let steps = split_step_events(&streams.steps, width, off);

    let mut out = Vec::with_capacity(streams.days.len() * per_day);
    let mut rr_buf = Vec::new();
    for day in &streams.days {
        let midnight = local_midnight(day.date, off);
        for slot in 0..per_day {
            let t0 = midnight + slot as f64 * width;
            let t1 = t0 + width;
            let (sin_t, cos_t) = time_encoding(t0, off);
            let mid = t0 + 0.5 * width;
            let mut f = IntervalFeatures::empty(&streams.subject_id, day.date, t0, sin_t, cos_t);
            f.is_sleep = sleep_state(&streams.sleep, mid) == SleepState::Sleep;

            let motion = slice_by_time(&streams.motion, |s| s.t, t0, t1);
            let (acc, gyro) = if cfg.remove_gravity {
                (remove_mean(motion.iter().map(|s| s.acc())), remove_mean(motion.iter().map(|s| s.gyro())))
            } else {
                (motion.iter().map(|s| s.acc()).collect(), motion.iter().map(|s| s.gyro()).collect())
            };
            if let Some((m, s, n)) = energy_stats(acc.into_iter()) {
                f.acc_energy = m;
                f.acc_energy_std = s;
                f.n_acc = n;
                f.presence.insert(Presence::ACC);
            }
            if let Some((m, s, n)) = energy_stats(gyro.into_iter()) {
                f.gyro_energy = m;
                f.gyro_energy_std = s;
                f.n_gyro = n;
                f.presence.insert(Presence::GYRO);
            }

            let rr = slice_by_time(&streams.rr, |s| s.t, t0, t1);
            rr_buf.clear();
            rr_buf.extend(rr.iter().map(|s| s.rr).filter(|v| v.is_finite()));
            if let Some((bpm, sdnn)) = bpm_and_sdnn(&rr_buf) {
                f.bpm_mean = bpm;
                f.hrv_sdnn = sdnn;
                let inst: Vec<f64> = rr_buf.iter().map(|r| 60_000.0 / r).collect();
                f.bpm_std = mean_std(&inst).map_or(0.0, |(_, s)| s);
                f.n_rr = rr_buf.len() as u32;
                f.presence.insert(Presence::HEART);

                if let Some(est) = welch.as_mut() {
                    let nominal = est.sample_rate() * width;
                    if rr_buf.len() as f64 >= cfg.spectral_min_coverage * nominal {
                        if cfg.psd_source == PsdSource::Bpm {
                            rr_buf.iter_mut().for_each(|r| *r = 60_000.0 / *r);
                        }
                        let bp = band_powers(&est.estimate(&rr_buf), &bands);
                        if let Some((lf_frac, hf_frac)) = bp.fractions {
                            f.lf_power = bp.lf_power;
                            f.hf_power = bp.hf_power;
                            f.lf_fraction = lf_frac;
                            f.hf_fraction = hf_frac;
                            f.presence.insert(Presence::SPECTRAL);
                        }
                    }
                }
            }

            let k = ((t0 + off as f64) / width).round() as i64;
            if let Some(sf) = steps.get(&k).and_then(|p| step_features(p)) {
                f.step_count = sf.step_count as f64;
                f.dist_mean = sf.dist_mean;
                f.cal_mean = sf.cal_mean;
                f.stepsize_mean = sf.stepsize_mean;
                f.speed_mean = sf.speed_mean;
                f.dist_std = sf.dist_std;
                f.cal_std = sf.cal_std;
                f.stepsize_std = sf.stepsize_std;
                f.speed_std = sf.speed_std;
                f.n_step_events = sf.events;
                f.presence.insert(Presence::STEPS);
            }
            out.push(f);
        }
    }
    Ok(out)
}

fn remove_mean(v: impl Iterator<Item = [f64; 3]>) -> Vec<[f64; 3]> {
    let v: Vec<[f64; 3]> = v.collect();
    let present: Vec<&[f64; 3]> = v.iter().filter(|x| x.iter().all(|c| c.is_finite())).collect();
    if present.is_empty() {
        return v;
    }
    let n = present.len() as f64;
    let mut m = [0.0; 3];
    for x in &present {
        for c in 0..3 {
            m[c] += x[c] / n;
        }
    }
    v.into_iter().map(|x| [x[0] - m[0], x[1] - m[1], x[2] - m[2]]).collect()
}

impl IntervalFeatures {
    pub fn empty(subject: &Arc<str>, date: NaiveDate, t_start: f64, sin_t: f64, cos_t: f64) -> Self {
        let nan = f64::NAN;
        IntervalFeatures {
            subject_id: Arc::clone(subject),
            date,
            t_start,
            is_sleep: false,
            acc_energy: nan,
            gyro_energy: nan,
            bpm_mean: nan,
            hrv_sdnn: nan,
            lf_power: nan,
            hf_power: nan,
            lf_fraction: nan,
            hf_fraction: nan,
            sin_t,
            cos_t,
            step_count: nan,
            dist_mean: nan,
            cal_mean: nan,
            stepsize_mean: nan,
            speed_mean: nan,
            presence: Presence::default(),
            acc_energy_std: nan,
            gyro_energy_std: nan,
            bpm_std: nan,
            dist_std: nan,
            cal_std: nan,
            stepsize_std: nan,
            speed_std: nan,
            n_acc: 0,
            n_gyro: 0,
            n_rr: 0,
            n_step_events: 0,
        }
    }
}

pub const FEATURES_FILE: &str = "features_5min.csv";

pub const FEATURE_CSV_HEADER: [&str; 31] = [
    "subject_id",
    "date",
    "t_start",
    "is_sleep",
    "acc_energy",
    "gyro_energy",
    "bpm_mean",
    "hrv_sdnn",
    "lf_power",
    "hf_power",
    "lf_fraction",
    "hf_fraction",
    "sin_t",
    "cos_t",
    "step_count",
    "dist_mean",
    "cal_mean",
    "stepsize_mean",
    "speed_mean",
    "presence",
    "acc_energy_std",
    "gyro_energy_std",
    "bpm_std",
    "dist_std",
    "cal_std",
    "stepsize_std",
    "speed_std",
    "n_acc",
    "n_gyro",
    "n_rr",
    "n_step_events",
];

fn cell(v: f64) -> String {
    if v.is_nan() {
        String::new()
    } else {
        format!("{v}")
    }
}

pub fn write_features_csv(path: &Path, rows: &[IntervalFeatures]) -> Result<()> {
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    let io = |e| Error::io(path, e);
    writeln!(w, "{}", FEATURE_CSV_HEADER.join(",")).map_err(io)?;
    for r in rows {
        let vals = [
            r.acc_energy,
            r.gyro_energy,
            r.bpm_mean,
            r.hrv_sdnn,
            r.lf_power,
            r.hf_power,
            r.lf_fraction,
            r.hf_fraction,
            r.sin_t,
            r.cos_t,
            r.step_count,
            r.dist_mean,
            r.cal_mean,
            r.stepsize_mean,
            r.speed_mean,
        ];
        let spreads = [
            r.acc_energy_std,
            r.gyro_energy_std,
            r.bpm_std,
            r.dist_std,
            r.cal_std,
            r.stepsize_std,
            r.speed_std,
        ];
        let vals: Vec<String> = vals.iter().map(|v| cell(*v)).collect();
        let spreads: Vec<String> = spreads.iter().map(|v| cell(*v)).collect();
        writeln!(
            w,
            "{},{},{},{},{},{},{},{},{},{},{}",
            r.subject_id,
            r.date.format("%Y-%m-%d"),
            r.t_start,
            u8::from(r.is_sleep),
            vals.join(","),
            r.presence.0,
            spreads.join(","),
            r.n_acc,
            r.n_gyro,
            r.n_rr,
            r.n_step_events
        )
        .map_err(io)?;
    }
    w.flush().map_err(io)
}

pub fn read_features_csv(path: &Path) -> Result<Vec<IntervalFeatures>> {
    let file = File::open(path).map_err(|e| match e.kind() {
        std::io::ErrorKind::NotFound => Error::MissingArtifact(path.to_path_buf()),
        _ => Error::io(path, e),
    })?;
    let mut rdr = csv::Reader::from_reader(file);
    let header = rdr.headers().map_err(|e| Error::csv(path, e))?.clone();
    if header.iter().collect::<Vec<_>>() != FEATURE_CSV_HEADER {
        return Err(Error::malformed(path.display().to_string(), "unexpected feature header"));
    }
    let mut subjects: BTreeMap<String, Arc<str>> = BTreeMap::new();
    let mut out = Vec::new();
    for (i, rec) in rdr.records().enumerate() {
        let rec = rec.map_err(|e| Error::csv(path, e))?;
        let bad = |what: &str| Error::malformed(path.display().to_string(), format!("row {}: bad {what}", i + 1));
        let num = |j: usize| -> Result<f64> {
            let s = &rec[j];
            if s.is_empty() {
                Ok(f64::NAN)
            } else {
                s.parse().map_err(|_| bad(FEATURE_CSV_HEADER[j]))
            }
        };
        let int = |j: usize| -> Result<u32> { rec[j].parse().map_err(|_| bad(FEATURE_CSV_HEADER[j])) };
        let subject = subjects
            .entry(rec[0].to_string())
            .or_insert_with(|| Arc::from(&rec[0]))
            .clone();
        let date = NaiveDate::parse_from_str(&rec[1], "%Y-%m-%d").map_err(|_| bad("date"))?;
        out.push(IntervalFeatures {
            subject_id: subject,
            date,
            t_start: num(2)?,
            is_sleep: &rec[3] == "1",
            acc_energy: num(4)?,
            gyro_energy: num(5)?,
            bpm_mean: num(6)?,
            hrv_sdnn: num(7)?,
            lf_power: num(8)?,
            hf_power: num(9)?,
            lf_fraction: num(10)?,
            hf_fraction: num(11)?,
            sin_t: num(12)?,
            cos_t: num(13)?,
            step_count: num(14)?,
            dist_mean: num(15)?,
            cal_mean: num(16)?,
            stepsize_mean: num(17)?,
            speed_mean: num(18)?,
            presence: Presence(rec[19].parse().map_err(|_| bad("presence"))?),
            acc_energy_std: num(20)?,
            gyro_energy_std: num(21)?,
            bpm_std: num(22)?,
            dist_std: num(23)?,
            cal_std: num(24)?,
            stepsize_std: num(25)?,
            speed_std: num(26)?,
            n_acc: int(27)?,
            n_gyro: int(28)?,
            n_rr: int(29)?,
            n_step_events: int(30)?,
        });
    }
    Ok(out)
}


impl std::ops::BitOr for Presence {
    type Output = Presence;
    fn bitor(self, rhs: Presence) -> Presence {
        Presence(self.0 | rhs.0)
    }
}
