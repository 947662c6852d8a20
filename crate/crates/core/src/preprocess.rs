//! Hampel outlier removal and median imputation over 1-hour windows.
//!
//! Each channel is filtered independently on its sample index, assuming a
//! nominal uniform rate. Missing entries are `NaN`. For entry `i` the window
//! is `[i - h, i + h]` clipped to the sequence, and only present values enter
//! the median and MAD.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::ingest::SensorStreams;

/// Gaussian consistency factor turning a MAD into a standard deviation.
pub const GAUSSIAN_MAD_SCALE: f64 = 1.4826;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HampelConfig {
    pub window_half_width: usize,
    pub n_sigmas: f64,
    pub mad_scale: f64,
    /// Minimum present fraction of a window for a missing entry to be imputed.
    pub impute_quorum: f64,
}

impl HampelConfig {
    pub fn new(window_half_width: usize) -> Self {
        HampelConfig {
            window_half_width,
            n_sigmas: 3.0,
            mad_scale: GAUSSIAN_MAD_SCALE,
            impute_quorum: 0.25,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.window_half_width < 1 {
            return Err(Error::Config("hampel window half-width must be >= 1".into()));
        }
        if !(self.n_sigmas > 0.0) || !(self.mad_scale > 0.0) {
            return Err(Error::Config("hampel n_sigmas and mad_scale must be > 0".into()));
        }
        if !(0.0..=1.0).contains(&self.impute_quorum) {
            return Err(Error::Config("hampel impute_quorum must lie in [0, 1]".into()));
        }
        Ok(())
    }
}

/// Time-based settings, turned into a [`HampelConfig`] once a channel's
/// sampling rate is known.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct HampelSettings {
    pub window_seconds: f64,
    pub n_sigmas: f64,
    pub impute_quorum: f64,
    pub mad_scale: f64,
}

impl Default for HampelSettings {
    fn default() -> Self {
        HampelSettings {
            window_seconds: 3600.0,
            n_sigmas: 3.0,
            impute_quorum: 0.25,
            mad_scale: GAUSSIAN_MAD_SCALE,
        }
    }
}

impl HampelSettings {
    /// Centered window of total width `window_seconds`.
    pub fn for_rate(&self, rate_hz: f64) -> HampelConfig {
        let half = (rate_hz * self.window_seconds / 2.0).round().max(1.0) as usize;
        HampelConfig {
            window_half_width: half,
            n_sigmas: self.n_sigmas,
            mad_scale: self.mad_scale,
            impute_quorum: self.impute_quorum,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct HampelOutput {
    pub values: Vec<f64>,
    pub replaced: usize,
    pub imputed: usize,
    pub still_missing: usize,
}

/// Present values of the current window, kept sorted.
struct SortedWindow {
    buf: Vec<f64>,
}

impl SortedWindow {
    fn with_capacity(n: usize) -> Self {
        SortedWindow {
            buf: Vec::with_capacity(n),
        }
    }

    fn insert(&mut self, v: f64) {
        let pos = self.buf.partition_point(|x| *x < v);
        self.buf.insert(pos, v);
    }

    fn remove(&mut self, v: f64) {
        let pos = self.buf.partition_point(|x| *x < v);
        debug_assert!(self.buf[pos] == v);
        self.buf.remove(pos);
    }

    fn len(&self) -> usize {
        self.buf.len()
    }

    fn median(&self) -> f64 {
        sorted_median(&self.buf)
    }

    /// Median absolute deviation around `med`, without materializing the
    /// deviations: they form two sorted runs (walking outward from `med`),
    /// so order statistics come from a two-array selection.
    fn mad(&self, med: f64) -> f64 {
        let n = self.buf.len();
        let split = self.buf.partition_point(|x| *x < med);
        let left = |i: usize| med - self.buf[split - 1 - i];
        let right = |j: usize| self.buf[split + j] - med;
        let (nl, nr) = (split, n - split);
        if n % 2 == 1 {
            kth_of_two(nl, &left, nr, &right, n / 2)
        } else {
            0.5 * (kth_of_two(nl, &left, nr, &right, n / 2 - 1)
                + kth_of_two(nl, &left, nr, &right, n / 2))
        }
    }
}

/// Median of an ascending slice; `NaN` when empty.
pub fn sorted_median(sorted: &[f64]) -> f64 {
    let n = sorted.len();
    if n == 0 {
        f64::NAN
    } else if n % 2 == 1 {
        sorted[n / 2]
    } else {
        0.5 * (sorted[n / 2 - 1] + sorted[n / 2])
    }
}

/// `k`-th smallest (0-based) element of the union of two ascending
/// sequences given by index functions.
fn kth_of_two(na: usize, a: &impl Fn(usize) -> f64, nb: usize, b: &impl Fn(usize) -> f64, k: usize) -> f64 {
    debug_assert!(k < na + nb);
    let take = k + 1;
    let mut lo = take.saturating_sub(nb);
    let mut hi = take.min(na);
    loop {
        let i = (lo + hi) / 2;
        let j = take - i;
        if i > 0 && j < nb && a(i - 1) > b(j) {
            hi = i - 1;
        } else if j > 0 && i < na && b(j - 1) > a(i) {
            lo = i + 1;
        } else {
            let from_a = if i > 0 { a(i - 1) } else { f64::NEG_INFINITY };
            let from_b = if j > 0 { b(j - 1) } else { f64::NEG_INFINITY };
            return from_a.max(from_b);
        }
    }
}

/// Hampel identifier with median imputation.
///
/// A present entry is replaced by its window median when
/// `|x - median| > n_sigmas * mad_scale * MAD`; when the window MAD is zero
/// any value other than the median is replaced. A missing entry takes the
/// window median if at least `impute_quorum` of the window is present.
pub fn hampel_filter(x: &[f64], cfg: &HampelConfig) -> HampelOutput {
    let n = x.len();
    let h = cfg.window_half_width;
    let mut values = Vec::with_capacity(n);
    let (mut replaced, mut imputed, mut still_missing) = (0, 0, 0);
    let mut window = SortedWindow::with_capacity((2 * h + 1).min(n));
    let present = |v: f64| v.is_finite();

    // Window for i = 0 is [0, h].
    for &v in x.iter().take((h + 1).min(n)) {
        if present(v) {
            window.insert(v);
        }
    }
    for i in 0..n {
        if i > 0 {
            let incoming = i + h;
            if incoming < n && present(x[incoming]) {
                window.insert(x[incoming]);
            }
            if i > h {
                let outgoing = x[i - h - 1];
                if present(outgoing) {
                    window.remove(outgoing);
                }
            }
        }
        let lo = i.saturating_sub(h);
        let hi = (i + h).min(n - 1);
        let span = hi - lo + 1;
        let xi = x[i];
        if present(xi) {
            let med = window.median();
            let mad = window.mad(med);
            let outlier = if mad == 0.0 {
                xi != med
            } else {
                (xi - med).abs() > cfg.n_sigmas * cfg.mad_scale * mad
            };
            if outlier {
                values.push(med);
                replaced += 1;
            } else {
                values.push(xi);
            }
        } else if window.len() > 0 && window.len() as f64 >= cfg.impute_quorum * span as f64 {
            values.push(window.median());
            imputed += 1;
        } else {
            values.push(f64::NAN);
            still_missing += 1;
        }
    }
    HampelOutput {
        values,
        replaced,
        imputed,
        still_missing,
    }
}

/// Per-channel filter statistics.
#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct ChannelReport {
    pub channel: String,
    pub samples: usize,
    pub half_width: usize,
    pub replaced: usize,
    pub imputed: usize,
    pub still_missing: usize,
    pub skipped: bool,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct PreprocessReport {
    pub channels: Vec<ChannelReport>,
}

impl PreprocessReport {
    pub fn channel(&self, name: &str) -> Option<&ChannelReport> {
        self.channels.iter().find(|c| c.channel == name)
    }
}

pub const MOTION_CHANNELS: [&str; 6] = ["ax", "ay", "az", "gx", "gy", "gz"];

/// Nominal sampling rate from the median spacing of timestamps.
pub fn estimate_rate(times: impl Iterator<Item = f64>) -> Option<f64> {
    let ts: Vec<f64> = times.collect();
    if ts.len() < 2 {
        return None;
    }
    let stride = (ts.len() / 10_000).max(1);
    let mut dts: Vec<f64> = ts
        .windows(2)
        .step_by(stride)
        .map(|w| w[1] - w[0])
        .filter(|d| *d > 0.0)
        .collect();
    if dts.is_empty() {
        return None;
    }
    dts.sort_by(f64::total_cmp);
    Some(1.0 / sorted_median(&dts))
}

fn filter_channel(
    name: &str,
    x: &[f64],
    rate: Option<f64>,
    settings: &HampelSettings,
) -> (Option<Vec<f64>>, ChannelReport) {
    let mut report = ChannelReport {
        channel: name.to_string(),
        samples: x.len(),
        ..Default::default()
    };
    let Some(rate) = rate else {
        report.skipped = true;
        return (None, report);
    };
    let cfg = settings.for_rate(rate);
    report.half_width = cfg.window_half_width;
    if x.len() < 2 * (2 * cfg.window_half_width + 1) {
        log::warn!("channel {name}: {} samples is under two windows; left unfiltered", x.len());
        report.skipped = true;
        return (None, report);
    }
    let out = hampel_filter(x, &cfg);
    report.replaced = out.replaced;
    report.imputed = out.imputed;
    report.still_missing = out.still_missing;
    (Some(out.values), report)
}

/// Filters ax..gz and rr independently; steps and sleep pass through.
/// Rates default to the median timestamp spacing of each stream.
pub fn preprocess_streams(
    streams: &SensorStreams,
    settings: &HampelSettings,
    motion_rate_hz: Option<f64>,
    rr_rate_hz: Option<f64>,
) -> Result<(SensorStreams, PreprocessReport)> {
    HampelSettings::for_rate(settings, 1.0).validate()?;
    let mut out = streams.clone();
    let mut report = PreprocessReport::default();

    let motion_rate = motion_rate_hz.or_else(|| estimate_rate(streams.motion.iter().map(|s| s.t)));
    let results: Vec<_> = (0..6)
        .map(|c| {
            let x: Vec<f64> = streams.motion.iter().map(|s| s.channel(c)).collect();
            filter_channel(MOTION_CHANNELS[c], &x, motion_rate, settings)
        })
        .collect();
    for (c, (values, ch)) in results.into_iter().enumerate() {
        if let Some(values) = values {
            for (s, v) in out.motion.iter_mut().zip(values) {
                s.set_channel(c, v);
            }
        }
        report.channels.push(ch);
    }

    let rr_rate = rr_rate_hz.or_else(|| estimate_rate(streams.rr.iter().map(|s| s.t)));
    let x: Vec<f64> = streams.rr.iter().map(|s| s.rr).collect();
    let (values, ch) = filter_channel("rr", &x, rr_rate, settings);
    if let Some(values) = values {
        for (s, v) in out.rr.iter_mut().zip(values) {
            s.rr = v;
        }
    }
    report.channels.push(ch);
    Ok((out, report))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    /// Direct recomputation of one output entry.
    fn naive_entry(x: &[f64], i: usize, cfg: &HampelConfig) -> f64 {
        let lo = i.saturating_sub(cfg.window_half_width);
        let hi = (i + cfg.window_half_width).min(x.len() - 1);
        let mut w: Vec<f64> = x[lo..=hi].iter().copied().filter(|v| v.is_finite()).collect();
        w.sort_by(f64::total_cmp);
        let med = sorted_median(&w);
        let mut dev: Vec<f64> = w.iter().map(|v| (v - med).abs()).collect();
        dev.sort_by(f64::total_cmp);
        let mad = sorted_median(&dev);
        if x[i].is_finite() {
            let out = if mad == 0.0 {
                x[i] != med
            } else {
                (x[i] - med).abs() > cfg.n_sigmas * cfg.mad_scale * mad
            };
            if out {
                med
            } else {
                x[i]
            }
        } else if !w.is_empty() && w.len() as f64 >= cfg.impute_quorum * (hi - lo + 1) as f64 {
            med
        } else {
            f64::NAN
        }
    }

    fn same(a: f64, b: f64) -> bool {
        (a.is_nan() && b.is_nan()) || a == b
    }

    #[test]
    fn spike_in_flat_sequence_replaced() {
        let x = [1.0, 1.0, 1.0, 100.0, 1.0, 1.0, 1.0];
        let out = hampel_filter(&x, &HampelConfig::new(3));
        assert_eq!(out.values, vec![1.0; 7]);
        assert_eq!(out.replaced, 1);
    }

    #[test]
    fn constant_sequence_unchanged() {
        let x = [5.0; 5];
        let out = hampel_filter(&x, &HampelConfig::new(2));
        assert_eq!(out.values, x.to_vec());
        assert_eq!(out.replaced, 0);
    }

    #[test]
    fn empty_sequence() {
        let out = hampel_filter(&[], &HampelConfig::new(3));
        assert!(out.values.is_empty());
    }

    #[test]
    fn all_missing_window_stays_missing() {
        let x = [f64::NAN; 4];
        let out = hampel_filter(&x, &HampelConfig::new(1));
        assert!(out.values.iter().all(|v| v.is_nan()));
        assert_eq!(out.still_missing, 4);
    }

    #[test]
    fn quorum_controls_imputation() {
        // Window of 5 around index 2 holds 1 present value: 20% < 25%.
        let x = [f64::NAN, f64::NAN, f64::NAN, f64::NAN, 7.0];
        let out = hampel_filter(&x, &HampelConfig::new(2));
        assert!(out.values[2].is_nan());
        // Index 3: window [1,4] holds 1 of 4 present -> 25%, imputed.
        assert_eq!(out.values[3], 7.0);
    }

    #[test]
    fn mad_selection_matches_sort() {
        let mut w = SortedWindow::with_capacity(16);
        let vals = [3.0, -1.0, 4.0, 1.5, 9.0, 2.6, 5.3, 5.0];
        for (k, v) in vals.iter().enumerate() {
            w.insert(*v);
            let med = w.median();
            let mut dev: Vec<f64> = vals[..=k].iter().map(|x| (x - med).abs()).collect();
            dev.sort_by(f64::total_cmp);
            assert_eq!(w.mad(med), sorted_median(&dev), "prefix {k}");
        }
    }

    #[test]
    fn rate_estimate() {
        let r = estimate_rate((0..100).map(|i| i as f64 * 0.2)).unwrap();
        assert!((r - 5.0).abs() < 1e-9);
        assert!(estimate_rate(std::iter::once(0.0)).is_none());
    }

    proptest! {
        #[test]
        fn rolling_matches_naive(
            x in prop::collection::vec(prop_oneof![4 => -50.0f64..50.0, 1 => Just(f64::NAN), 1 => Just(3.0)], 0..60),
            h in 1usize..6,
        ) {
            let cfg = HampelConfig::new(h);
            let out = hampel_filter(&x, &cfg);
            for i in 0..x.len() {
                prop_assert!(same(out.values[i], naive_entry(&x, i, &cfg)), "index {}", i);
            }
        }

        #[test]
        fn replaced_values_lie_within_window_range(
            x in prop::collection::vec(-1e3f64..1e3, 1..80),
            h in 1usize..8,
        ) {
            let cfg = HampelConfig::new(h);
            let out = hampel_filter(&x, &cfg);
            for i in 0..x.len() {
                let lo = i.saturating_sub(h);
                let hi = (i + h).min(x.len() - 1);
                let (mn, mx) = x[lo..=hi].iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), v| (a.min(*v), b.max(*v)));
                prop_assert!(out.values[i] >= mn && out.values[i] <= mx);
            }
        }

        #[test]
        fn single_spike_only_changes_its_position(
            noise in prop::collection::vec(-1.0f64..1.0, 200),
            pos in 20usize..180,
            h in 10usize..20,
        ) {
            // Small bounded jitter around a level; deviations stay well
            // under the threshold so the clean sequence passes through.
            let base: Vec<f64> = noise.iter().map(|e| 50.0 + 0.1 * e).collect();
            let cfg = HampelConfig { n_sigmas: 6.0, ..HampelConfig::new(h) };
            let clean = hampel_filter(&base, &cfg);
            prop_assume!(clean.values == base);
            let mut spiked = base.clone();
            spiked[pos] = 1e4;
            let out = hampel_filter(&spiked, &cfg);
            for i in 0..base.len() {
                if i != pos {
                    prop_assert_eq!(out.values[i], base[i]);
                }
            }
            prop_assert!(out.values[pos] < 100.0);
        }
    }
}
