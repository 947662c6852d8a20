//! Seeded generator of wearable recordings with injected relapse days.
//!
//! Each subject gets a circadian heart-rate baseline with AR(1) noise, an RR
//! series carrying 0.1 Hz (LF) and 0.3 Hz (HF) oscillations, motion that is
//! quiet during sleep and bursty while awake, one nightly sleep period,
//! walking bouts while awake, and blocks of missing samples.
//!
//! On a relapse day the sleep samples of that calendar date are perturbed.
//! Half of the heart-rate shift is spread over the whole sleep period; the
//! other half rides on short awakenings (5 to 20 minutes) that also raise
//! motion variance and LF amplitude. Burst heart-rate amplitude is capped so
//! a one-hour Hampel window does not erase it; any excess moves to the
//! uniform part, keeping the sleep-period mean shift at
//! `sleep_hr_shift · σ`.

use std::collections::BTreeMap;
use std::path::Path;
use std::sync::Arc;

use chrono::NaiveDate;
use rand::seq::index::sample;
use rand::seq::SliceRandom;
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Exp, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::ingest::{
    local_midnight, write_subject, DayLabel, DayRecord, RrSample, SensorSample, SensorStreams, SleepInterval, Split,
    StepEvent, SECONDS_PER_DAY,
};
use crate::rng::child_rng;

pub const GROUND_TRUTH_FILE: &str = "ground_truth.json";

const HOUR: f64 = 3600.0;
const MINUTE: f64 = 60.0;
/// Burst heart-rate amplitude cap, in units of σ.
const BURST_HR_CAP: f64 = 2.5;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct AnomalyProfile {
    /// Mean sleep heart-rate increase, in multiples of the subject's σ.
    pub sleep_hr_shift: f64,
    /// Extra awakenings per relapse night.
    pub sleep_fragmentation: f64,
    /// Motion standard deviation multiplier during awakenings.
    pub activity_var_multiplier: f64,
    /// LF amplitude multiplier during awakenings.
    pub lf_hf_shift: f64,
    /// Fraction of the perturbation applied to awake samples as well.
    pub awake_leak: f64,
}

impl Default for AnomalyProfile {
    fn default() -> Self {
        AnomalyProfile {
            sleep_hr_shift: 1.0,
            sleep_fragmentation: 4.0,
            activity_var_multiplier: 2.5,
            lf_hf_shift: 2.0,
            awake_leak: 0.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct GenConfig {
    pub n_subjects: usize,
    pub n_days: usize,
    pub relapse_fraction: f64,
    pub seed: u64,
    pub anomaly_profile: AnomalyProfile,
    /// Sampling rates. Device rates are 20 Hz motion and 5 Hz RR; the
    /// defaults are reduced so long cohorts fit in memory and time.
    pub motion_hz: f64,
    pub rr_hz: f64,
    /// Fraction of samples removed in 5 to 30 minute blocks.
    pub missing_fraction: f64,
    pub start_date: NaiveDate,
    pub utc_offset_seconds: i32,
}

impl Default for GenConfig {
    fn default() -> Self {
        GenConfig {
            n_subjects: 10,
            n_days: 180,
            relapse_fraction: 0.1,
            seed: 42,
            anomaly_profile: AnomalyProfile::default(),
            motion_hz: 0.1,
            rr_hz: 1.0,
            missing_fraction: 0.02,
            start_date: NaiveDate::from_ymd_opt(2023, 1, 2).expect("valid date"),
            utc_offset_seconds: 0,
        }
    }
}

impl GenConfig {
    pub fn validate(&self) -> Result<()> {
        let p = &self.anomaly_profile;
        let bad = |m: &str| Err(Error::Config(format!("generator: {m}")));
        if self.n_subjects == 0 || self.n_days < 5 {
            return bad("need at least 1 subject and 5 days");
        }
        if !(0.0..0.5).contains(&self.relapse_fraction) {
            return bad("relapse_fraction must be in [0, 0.5)");
        }
        if !(p.sleep_hr_shift > 0.0 && p.activity_var_multiplier > 0.0 && p.lf_hf_shift > 0.0) {
            return bad("anomaly multipliers must be positive");
        }
        if !(p.sleep_fragmentation >= 0.0 && (0.0..=1.0).contains(&p.awake_leak)) {
            return bad("sleep_fragmentation >= 0 and awake_leak in [0, 1] required");
        }
        if !(self.motion_hz > 0.0 && self.rr_hz > 0.6) {
            return bad("motion_hz must be positive and rr_hz above 0.6 (HF oscillation at 0.3 Hz)");
        }
        if !(0.0..0.5).contains(&self.missing_fraction) {
            return bad("missing_fraction must be in [0, 0.5)");
        }
        Ok(())
    }

    pub fn subject_id(index: usize) -> String {
        format!("s{:02}", index + 1)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TruthDay {
    pub date: NaiveDate,
    pub label: DayLabel,
    pub split: Split,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RelapseInjection {
    pub date: NaiveDate,
    pub uniform_hr_shift_bpm: f64,
    pub burst_hr_shift_bpm: f64,
    /// `[start, end)` UTC seconds of each awakening burst.
    pub bursts: Vec<[f64; 2]>,
    pub activity_var_multiplier: f64,
    pub lf_amplitude_multiplier: f64,
    pub awake_leak: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SubjectTruth {
    pub subject_id: String,
    pub sigma_hr_bpm: f64,
    pub sleep_hr_bpm: f64,
    pub awake_hr_bpm: f64,
    pub days: Vec<TruthDay>,
    pub relapses: Vec<RelapseInjection>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroundTruth {
    pub config: GenConfig,
    pub subjects: Vec<SubjectTruth>,
}

impl GroundTruth {
    pub fn write_json(&self, path: &Path) -> Result<()> {
        std::fs::write(path, serde_json::to_string_pretty(self)?).map_err(|e| Error::io(path, e))
    }

    pub fn read_json(path: &Path) -> Result<GroundTruth> {
        let text = std::fs::read_to_string(path).map_err(|e| match e.kind() {
            std::io::ErrorKind::NotFound => Error::MissingArtifact(path.to_path_buf()),
            _ => Error::io(path, e),
        })?;
        Ok(serde_json::from_str(&text)?)
    }

    /// True labels keyed by subject and date.
    pub fn labels(&self) -> BTreeMap<(String, NaiveDate), DayLabel> {
        self.subjects
            .iter()
            .flat_map(|s| s.days.iter().map(|d| ((s.subject_id.clone(), d.date), d.label)))
            .collect()
    }
}

/// Walks sorted, disjoint `[start, end)` intervals with monotone queries.
struct Cursor<'a> {
    iv: &'a [(f64, f64)],
    i: usize,
}

impl<'a> Cursor<'a> {
    fn new(iv: &'a [(f64, f64)]) -> Self {
        Cursor { iv, i: 0 }
    }

    fn at(&mut self, t: f64) -> Option<usize> {
        while self.i < self.iv.len() && self.iv[self.i].1 <= t {
            self.i += 1;
        }
        (self.i < self.iv.len() && self.iv[self.i].0 <= t).then_some(self.i)
    }
}

fn merge(mut iv: Vec<(f64, f64)>) -> Vec<(f64, f64)> {
    iv.sort_by(|a, b| a.0.total_cmp(&b.0));
    let mut out: Vec<(f64, f64)> = Vec::with_capacity(iv.len());
    for (a, b) in iv {
        match out.last_mut() {
            Some(last) if a <= last.1 => last.1 = last.1.max(b),
            _ => out.push((a, b)),
        }
    }
    out
}

/// `[start, end)` pieces of `iv` inside `[lo, hi)`.
fn clip(iv: &[(f64, f64)], lo: f64, hi: f64) -> Vec<(f64, f64)> {
    iv.iter()
        .filter_map(|&(a, b)| {
            let (a, b) = (a.max(lo), b.min(hi));
            (b > a).then_some((a, b))
        })
        .collect()
}

fn normal(rng: &mut ChaCha8Rng) -> f64 {
    rng.sample(StandardNormal)
}

struct Subject {
    sigma_hr: f64,
    sleep_hr: f64,
    awake_hr: f64,
    day_offset: Vec<f64>,
    lf_sleep: f64,
    hf_sleep: f64,
    lf_awake: f64,
    hf_awake: f64,
    stride: f64,
    cadence: f64,
    kcal_per_step: f64,
}

/// Per-day perturbation state for the sample loops.
#[derive(Clone, Copy, Default)]
struct DayEffect {
    relapse: bool,
    uniform_bpm: f64,
    burst_bpm: f64,
}

fn place_bursts(rng: &mut ChaCha8Rng, sleep: &[(f64, f64)], count: usize) -> Vec<(f64, f64)> {
    let total: f64 = sleep.iter().map(|(a, b)| b - a).sum();
    let mut bursts: Vec<(f64, f64)> = Vec::new();
    let mut tries = 0;
    while bursts.len() < count && tries < 50 * count.max(1) {
        tries += 1;
        let dur = rng.random_range(5.0 * MINUTE..20.0 * MINUTE);
        if total <= dur {
            break;
        }
        // Position in concatenated sleep time, mapped back to a segment.
        let mut u = rng.random_range(0.0..total - dur);
        let Some(&(a, b)) = sleep.iter().find(|(a, b)| {
            let len = b - a;
            if u < len {
                true
            } else {
                u -= len;
                false
            }
        }) else {
            continue;
        };
        let start = a + u;
        let end = start + dur;
        if end > b || bursts.iter().any(|&(x, y)| start < y + MINUTE && x < end + MINUTE) {
            continue;
        }
        bursts.push((start, end));
    }
    bursts.sort_by(|x, y| x.0.total_cmp(&y.0));
    bursts
}

fn missing_blocks(rng: &mut ChaCha8Rng, lo: f64, hi: f64, fraction: f64) -> Vec<(f64, f64)> {
    let mean_block = 17.5 * MINUTE;
    let n = ((hi - lo) * fraction / mean_block).round() as usize;
    let blocks = (0..n)
        .map(|_| {
            let dur = rng.random_range(5.0 * MINUTE..30.0 * MINUTE);
            let start = rng.random_range(lo..(hi - dur).max(lo + 1.0));
            (start, start + dur)
        })
        .collect();
    merge(blocks)
}

/// Generates one subject in memory. Test-split days carry the `Unlabeled`
/// label in the returned streams; the truth holds the real labels.
pub fn generate_subject(cfg: &GenConfig, index: usize) -> Result<(SensorStreams, SubjectTruth)> {
    cfg.validate()?;
    let mut rng = child_rng(cfg.seed, index as u64);
    let profile = &cfg.anomaly_profile;
    let id = GenConfig::subject_id(index);
    let subject_id: Arc<str> = Arc::from(id.as_str());
    let off = cfg.utc_offset_seconds;
    let n_days = cfg.n_days;
    let t0 = local_midnight(cfg.start_date, off);
    let t_end = t0 + n_days as f64 * SECONDS_PER_DAY;
    let dates: Vec<NaiveDate> = (0..n_days)
        .map(|d| cfg.start_date + chrono::Days::new(d as u64))
        .collect();

    let sigma_hr = rng.random_range(2.5..4.0);
    let sleep_hr = rng.random_range(55.0..75.0);
    let gain = rng.random_range(0.8..1.2);
    let subj = Subject {
        sigma_hr,
        sleep_hr,
        awake_hr: sleep_hr + rng.random_range(10.0..20.0),
        day_offset: (0..n_days).map(|_| 0.5 * sigma_hr * normal(&mut rng)).collect(),
        lf_sleep: 15.0 * gain,
        hf_sleep: 30.0 * gain,
        lf_awake: 30.0 * gain,
        hf_awake: 12.0 * gain,
        stride: rng.random_range(0.6..0.8),
        cadence: rng.random_range(1.6..2.0),
        kcal_per_step: rng.random_range(0.035..0.05),
    };

    // Labels and splits: train draws only from normal days.
    let n_relapse = (cfg.relapse_fraction * n_days as f64).round() as usize;
    let mut labels = vec![DayLabel::Normal; n_days];
    for i in sample(&mut rng, n_days, n_relapse) {
        labels[i] = DayLabel::Relapse;
    }
    let mut normals: Vec<usize> = (0..n_days).filter(|&i| labels[i] == DayLabel::Normal).collect();
    normals.shuffle(&mut rng);
    let n_train = ((0.6 * n_days as f64).round() as usize).min(normals.len());
    let mut splits = vec![Split::Train; n_days];
    let mut rest: Vec<usize> = normals[n_train..].to_vec();
    let mut relapse_idx: Vec<usize> = (0..n_days).filter(|&i| labels[i] == DayLabel::Relapse).collect();
    relapse_idx.shuffle(&mut rng);
    // Relapse days alternate between validation and test.
    for (k, &i) in relapse_idx.iter().enumerate() {
        splits[i] = if k % 2 == 0 { Split::Validation } else { Split::Test };
    }
    rest.sort_unstable();
    rest.shuffle(&mut rng);
    let half = rest.len().div_ceil(2);
    for (k, &i) in rest.iter().enumerate() {
        splits[i] = if k < half { Split::Validation } else { Split::Test };
    }

    // Sleep: one nightly interval starting around 23:00, 6 to 9 hours long.
    let mut sleep = Vec::with_capacity(n_days + 1);
    for d in -1..n_days as i64 {
        let start = t0 + d as f64 * SECONDS_PER_DAY + 23.0 * HOUR + rng.random_range(-HOUR..HOUR);
        let end = start + rng.random_range(6.0 * HOUR..9.0 * HOUR);
        let (a, b) = (start.max(t0), end.min(t_end));
        if b > a {
            sleep.push((a, b));
        }
    }
    let sleep = merge(sleep);

    // Relapse perturbations on each relapse date's sleep samples.
    let mut effects = vec![DayEffect::default(); n_days];
    let mut bursts: Vec<(f64, f64)> = Vec::new();
    let mut relapses = Vec::new();
    let mut relapse_sorted = relapse_idx.clone();
    relapse_sorted.sort_unstable();
    for d in relapse_sorted {
        let lo = t0 + d as f64 * SECONDS_PER_DAY;
        let segs = clip(&sleep, lo, lo + SECONDS_PER_DAY);
        let sleep_secs: f64 = segs.iter().map(|(a, b)| b - a).sum();
        let count = profile.sleep_fragmentation.round() as usize;
        let day_bursts = place_bursts(&mut rng, &segs, count);
        let burst_secs: f64 = day_bursts.iter().map(|(a, b)| b - a).sum();
        let delta = profile.sleep_hr_shift * sigma_hr;
        let (uniform, burst) = if burst_secs > 0.0 && sleep_secs > 0.0 {
            let burst = (0.5 * delta * sleep_secs / burst_secs).min(BURST_HR_CAP * sigma_hr);
            (delta - burst * burst_secs / sleep_secs, burst)
        } else {
            (delta, 0.0)
        };
        effects[d] = DayEffect {
            relapse: true,
            uniform_bpm: uniform,
            burst_bpm: burst,
        };
        relapses.push(RelapseInjection {
            date: dates[d],
            uniform_hr_shift_bpm: uniform,
            burst_hr_shift_bpm: burst,
            bursts: day_bursts.iter().map(|&(a, b)| [a, b]).collect(),
            activity_var_multiplier: profile.activity_var_multiplier,
            lf_amplitude_multiplier: profile.lf_hf_shift,
            awake_leak: profile.awake_leak,
        });
        bursts.extend(day_bursts);
    }
    bursts.sort_by(|a, b| a.0.total_cmp(&b.0));

    // Walking bouts while awake, at least a minute clear of sleep.
    let mut awake = Vec::new();
    let mut cursor = t0;
    for &(a, b) in &sleep {
        if a > cursor {
            awake.push((cursor, a));
        }
        cursor = b;
    }
    if cursor < t_end {
        awake.push((cursor, t_end));
    }
    let gap = Exp::new(1.5 / HOUR).expect("positive rate");
    let mut bouts = Vec::new();
    for &(a, b) in &awake {
        let mut t = a + MINUTE + rng.sample(gap);
        loop {
            let dur = (rng.random_range(2.0..15.0_f64) * MINUTE).round();
            if t + dur > b - MINUTE {
                break;
            }
            bouts.push((t, t + dur));
            t += dur + rng.sample(gap);
        }
    }

    let mut steps = Vec::new();
    for &(a, b) in &bouts {
        let mut s = a;
        while s < b {
            let e = (s + MINUTE).min(b);
            let dur = e - s;
            let n = (subj.cadence * dur * rng.random_range(0.85..1.15)).round() as u32;
            let distance = n as f64 * subj.stride * rng.random_range(0.95..1.05);
            steps.push(StepEvent {
                t_start: s,
                t_end: e,
                steps: n,
                distance,
                calories: n as f64 * subj.kcal_per_step,
            });
            s = e;
        }
    }

    let rr = gen_rr(&mut rng, cfg, &subj, t0, &sleep, &bursts, &bouts, &effects);
    let motion = gen_motion(&mut rng, cfg, t0, &sleep, &bursts, &bouts, &effects);

    let days: Vec<DayRecord> = (0..n_days)
        .map(|d| DayRecord {
            subject_id: Arc::clone(&subject_id),
            date: dates[d],
            label: if splits[d] == Split::Test { DayLabel::Unlabeled } else { labels[d] },
            split: splits[d],
        })
        .collect();
    let truth = SubjectTruth {
        subject_id: id,
        sigma_hr_bpm: subj.sigma_hr,
        sleep_hr_bpm: subj.sleep_hr,
        awake_hr_bpm: subj.awake_hr,
        days: (0..n_days)
            .map(|d| TruthDay {
                date: dates[d],
                label: labels[d],
                split: splits[d],
            })
            .collect(),
        relapses,
    };
    let streams = SensorStreams {
        subject_id,
        utc_offset: off,
        motion,
        rr,
        steps,
        sleep: sleep.iter().map(|&(a, b)| SleepInterval { t_start: a, t_end: b }).collect(),
        days,
    };
    Ok((streams, truth))
}

#[allow(clippy::too_many_arguments)]
fn gen_rr(
    rng: &mut ChaCha8Rng,
    cfg: &GenConfig,
    subj: &Subject,
    t0: f64,
    sleep: &[(f64, f64)],
    bursts: &[(f64, f64)],
    bouts: &[(f64, f64)],
    effects: &[DayEffect],
) -> Vec<RrSample> {
    let p = &cfg.anomaly_profile;
    let dt = 1.0 / cfg.rr_hz;
    let n = (cfg.n_days as f64 * SECONDS_PER_DAY * cfg.rr_hz).round() as usize;
    let missing = missing_blocks(rng, t0, t0 + n as f64 * dt, cfg.missing_fraction);
    let (mut in_sleep, mut in_burst, mut in_bout, mut in_gap) =
        (Cursor::new(sleep), Cursor::new(bursts), Cursor::new(bouts), Cursor::new(&missing));
    let phi = (-dt / 60.0).exp();
    let innov = (1.0 - phi * phi).sqrt();
    let amp_phi = (-dt / 600.0).exp();
    let amp_innov = 0.2 * (1.0 - amp_phi * amp_phi).sqrt();
    let (ph_lf, ph_hf) = (rng.random_range(0.0..std::f64::consts::TAU), rng.random_range(0.0..std::f64::consts::TAU));
    let (mut ar, mut lf_mod, mut hf_mod) = (0.0, 0.0, 0.0);
    let mut out = Vec::with_capacity(n);
    for i in 0..n {
        let t = t0 + i as f64 * dt;
        ar = phi * ar + innov * subj.sigma_hr * normal(rng);
        lf_mod = amp_phi * lf_mod + amp_innov * normal(rng);
        hf_mod = amp_phi * hf_mod + amp_innov * normal(rng);
        let white = normal(rng);
        let spike = rng.random::<f64>();
        if in_gap.at(t).is_some() {
            out.push(RrSample { t, rr: f64::NAN });
            continue;
        }
        let day = (((t - t0) / SECONDS_PER_DAY) as usize).min(effects.len() - 1);
        let eff = effects[day];
        let asleep = in_sleep.at(t).is_some();
        let burst = in_burst.at(t).is_some();
        let secs = (t - t0).rem_euclid(SECONDS_PER_DAY);
        let circadian = 2.0 * (std::f64::consts::TAU * (secs - 15.0 * HOUR) / SECONDS_PER_DAY).cos();
        let mut hr = if asleep { subj.sleep_hr } else { subj.awake_hr } + circadian + subj.day_offset[day] + ar;
        let (mut lf, hf) = if asleep {
            (subj.lf_sleep, subj.hf_sleep)
        } else {
            (subj.lf_awake, subj.hf_awake)
        };
        if !asleep && in_bout.at(t).is_some() {
            hr += 8.0;
        }
        if eff.relapse {
            if asleep {
                hr += eff.uniform_bpm;
                if burst {
                    hr += eff.burst_bpm;
                    lf *= p.lf_hf_shift;
                }
            } else if p.awake_leak > 0.0 {
                hr += p.awake_leak * p.sleep_hr_shift * subj.sigma_hr;
                lf *= 1.0 + p.awake_leak * (p.lf_hf_shift - 1.0);
            }
        }
        let mut rr = 60_000.0 / hr
            + lf * lf_mod.exp() * (std::f64::consts::TAU * 0.1 * t.rem_euclid(1000.0) + ph_lf).sin()
            + hf * hf_mod.exp() * (std::f64::consts::TAU * 0.3 * t.rem_euclid(1000.0) + ph_hf).sin()
            + 8.0 * white;
        // Occasional missed or doubled beat detections.
        if spike < 0.0005 {
            rr *= 1.8;
        } else if spike < 0.001 {
            rr *= 0.55;
        }
        out.push(RrSample { t, rr: rr.max(250.0) });
    }
    out
}

fn gen_motion(
    rng: &mut ChaCha8Rng,
    cfg: &GenConfig,
    t0: f64,
    sleep: &[(f64, f64)],
    bursts: &[(f64, f64)],
    bouts: &[(f64, f64)],
    effects: &[DayEffect],
) -> Vec<SensorSample> {
    let p = &cfg.anomaly_profile;
    let dt = 1.0 / cfg.motion_hz;
    let n = (cfg.n_days as f64 * SECONDS_PER_DAY * cfg.motion_hz).round() as usize;
    let missing = missing_blocks(rng, t0, t0 + n as f64 * dt, cfg.missing_fraction);
    let (mut in_sleep, mut in_burst, mut in_bout, mut in_gap) =
        (Cursor::new(sleep), Cursor::new(bursts), Cursor::new(bouts), Cursor::new(&missing));
    let act_phi = (-dt / 900.0).exp();
    let act_innov = 0.5 * (1.0 - act_phi * act_phi).sqrt();
    let postures: [[f64; 3]; 4] = [[0.0, 0.0, 1.0], [0.0, 0.0, -1.0], [1.0, 0.0, 0.0], [-1.0, 0.0, 0.0]];
    let upright = [0.0, -1.0, 0.0];
    let mut posture = postures[0];
    let roll_rate = dt / HOUR;
    let mut activity = 0.0;
    let mut out = Vec::with_capacity(n);
    for i in 0..n {
        let t = t0 + i as f64 * dt;
        activity = act_phi * activity + act_innov * normal(rng);
        let noise: [f64; 6] = std::array::from_fn(|_| normal(rng));
        if rng.random::<f64>() < roll_rate {
            posture = postures[rng.random_range(0..postures.len())];
        }
        if in_gap.at(t).is_some() {
            out.push(SensorSample::missing(t));
            continue;
        }
        let day = (((t - t0) / SECONDS_PER_DAY) as usize).min(effects.len() - 1);
        let eff = effects[day];
        let asleep = in_sleep.at(t).is_some();
        let burst = in_burst.at(t).is_some();
        let (g, mut acc_sd, mut gyro_sd) = if asleep {
            (posture, 0.01, 0.5)
        } else {
            let a = activity.exp();
            let walk = if in_bout.at(t).is_some() { 4.0 } else { 1.0 };
            (upright, 0.1 * a * walk, 15.0 * a * walk)
        };
        if eff.relapse {
            let m = if asleep && burst {
                p.activity_var_multiplier
            } else if !asleep {
                1.0 + p.awake_leak * (p.activity_var_multiplier - 1.0)
            } else {
                1.0
            };
            acc_sd *= m;
            gyro_sd *= m;
        }
        out.push(SensorSample {
            t,
            ax: g[0] + acc_sd * noise[0],
            ay: g[1] + acc_sd * noise[1],
            az: g[2] + acc_sd * noise[2],
            gx: gyro_sd * noise[3],
            gy: gyro_sd * noise[4],
            gz: gyro_sd * noise[5],
        });
    }
    out
}

/// Generates every subject and writes the ingest layout plus
/// `ground_truth.json` under `root`. Subjects are produced one at a time.
pub fn write_dataset(cfg: &GenConfig, root: &Path) -> Result<GroundTruth> {
    cfg.validate()?;
    std::fs::create_dir_all(root).map_err(|e| Error::io(root, e))?;
    let mut subjects = Vec::with_capacity(cfg.n_subjects);
    for i in 0..cfg.n_subjects {
        let (streams, truth) = generate_subject(cfg, i)?;
        write_subject(&streams, &root.join(&truth.subject_id))?;
        subjects.push(truth);
    }
    let truth = GroundTruth {
        config: cfg.clone(),
        subjects,
    };
    truth.write_json(&root.join(GROUND_TRUTH_FILE))?;
    Ok(truth)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Channel {
    Motion,
    Rr,
}

/// Marks samples of `channel` with `t ∈ [t0, t0 + duration)` as missing and
/// returns how many were marked. The window must lie within the channel's
/// recorded range.
pub fn inject_gap(streams: &mut SensorStreams, channel: Channel, t0: f64, duration: f64) -> Result<usize> {
    if duration < 0.0 || !duration.is_finite() || !t0.is_finite() {
        return Err(Error::Contract(format!("invalid gap window ({t0}, {duration})")));
    }
    if duration == 0.0 {
        return Ok(0);
    }
    let times: Vec<f64> = match channel {
        Channel::Motion => streams.motion.iter().map(|s| s.t).collect(),
        Channel::Rr => streams.rr.iter().map(|s| s.t).collect(),
    };
    let (Some(&first), Some(&last)) = (times.first(), times.last()) else {
        return Err(Error::Contract("gap on an empty channel".into()));
    };
    if t0 < first || t0 + duration > last {
        return Err(Error::Contract(format!(
            "gap [{t0}, {}) outside recorded range [{first}, {last}]",
            t0 + duration
        )));
    }
    let a = times.partition_point(|&t| t < t0);
    let b = times.partition_point(|&t| t < t0 + duration);
    match channel {
        Channel::Motion => streams.motion[a..b].iter_mut().for_each(|s| *s = SensorSample::missing(s.t)),
        Channel::Rr => streams.rr[a..b].iter_mut().for_each(|s| s.rr = f64::NAN),
    }
    Ok(b - a)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small() -> GenConfig {
        GenConfig {
            n_subjects: 2,
            n_days: 20,
            relapse_fraction: 0.2,
            seed: 7,
            ..GenConfig::default()
        }
    }

    #[test]
    fn deterministic() {
        let a = generate_subject(&small(), 1).unwrap();
        let b = generate_subject(&small(), 1).unwrap();
        assert_eq!(a.0.rr.len(), b.0.rr.len());
        assert!(a.0.rr.iter().zip(&b.0.rr).all(|(x, y)| x.t == y.t && x.rr.to_bits() == y.rr.to_bits()));
        assert_eq!(a.1, b.1);
        let c = generate_subject(&GenConfig { seed: 8, ..small() }, 1).unwrap();
        assert_ne!(a.1, c.1);
    }

    #[test]
    fn train_split_is_clean_and_sizes_match() {
        let (streams, truth) = generate_subject(&small(), 0).unwrap();
        assert_eq!(streams.days.len(), 20);
        assert_eq!(truth.relapses.len(), 4);
        assert_eq!(truth.days.iter().filter(|d| d.split == Split::Train).count(), 12);
        assert!(truth.days.iter().all(|d| d.split != Split::Train || d.label == DayLabel::Normal));
        assert!(streams.days.iter().all(|d| d.split != Split::Test || d.label == DayLabel::Unlabeled));
        assert!(truth.days.iter().any(|d| d.split == Split::Validation && d.label == DayLabel::Relapse));
    }

    #[test]
    fn steps_only_while_awake() {
        let (s, _) = generate_subject(&small(), 0).unwrap();
        assert!(!s.steps.is_empty());
        for e in &s.steps {
            assert!(s.sleep.iter().all(|iv| e.t_end <= iv.t_start || e.t_start >= iv.t_end));
        }
    }

    #[test]
    fn missing_fraction_near_target() {
        let cfg = GenConfig { n_days: 60, ..small() };
        let (s, _) = generate_subject(&cfg, 0).unwrap();
        let frac = s.rr.iter().filter(|r| r.rr.is_nan()).count() as f64 / s.rr.len() as f64;
        assert!((0.01..0.035).contains(&frac), "{frac}");
    }

    #[test]
    fn gap_injection() {
        let (mut s, _) = generate_subject(&small(), 0).unwrap();
        let t = s.rr[1000].t;
        assert_eq!(inject_gap(&mut s, Channel::Rr, t, 0.0).unwrap(), 0);
        let n = inject_gap(&mut s, Channel::Rr, t, 600.0).unwrap();
        assert_eq!(n, (600.0 * small().rr_hz) as usize);
        assert!(s.rr[1000..1000 + n].iter().all(|r| r.rr.is_nan()));
        assert!(inject_gap(&mut s, Channel::Rr, t - 1e9, 10.0).is_err());
        let tm = s.motion[5].t;
        let m = inject_gap(&mut s, Channel::Motion, tm, 100.0).unwrap();
        assert_eq!(m, 10);
    }

    #[test]
    fn invalid_configs_rejected() {
        assert!(GenConfig { relapse_fraction: 0.5, ..small() }.validate().is_err());
        let mut c = small();
        c.anomaly_profile.lf_hf_shift = 0.0;
        assert!(c.validate().is_err());
    }
}
