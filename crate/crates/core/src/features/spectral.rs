//! Welch power spectral density and HRV band powers.

use std::sync::Arc;

use rustfft::num_complex::Complex;
use rustfft::{Fft, FftPlanner};
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WelchConfig {
    pub segment_len: usize,
    /// Fraction of a segment shared with the next one, in `[0, 1)`.
    pub overlap: f64,
}

impl Default for WelchConfig {
    fn default() -> Self {
        WelchConfig {
            segment_len: 256,
            overlap: 0.5,
        }
    }
}

/// One-sided power spectral density.
#[derive(Debug, Clone, PartialEq)]
pub struct PsdEstimate {
    /// `0, df, 2 df, ..., fs / 2`.
    pub freqs: Vec<f64>,
    pub power: Vec<f64>,
    pub resolution: f64,
    pub segments: usize,
    /// Input was shorter than one segment and was zero-padded.
    pub zero_padded: bool,
}

impl PsdEstimate {
    /// Rectangle-rule integral of the density over all bins.
    pub fn total_power(&self) -> f64 {
        self.power.iter().sum::<f64>() * self.resolution
    }

    pub fn peak_frequency(&self) -> f64 {
        let (i, _) = self
            .power
            .iter()
            .enumerate()
            .fold((0, f64::NEG_INFINITY), |(bi, bv), (i, &v)| if v > bv { (i, v) } else { (bi, bv) });
        self.freqs[i]
    }

    /// Trapezoidal integral of the piecewise-linear density over `[lo, hi)`.
    pub fn integrate(&self, lo: f64, hi: f64) -> f64 {
        let mut acc = 0.0;
        for k in 0..self.freqs.len().saturating_sub(1) {
            let (f0, f1) = (self.freqs[k], self.freqs[k + 1]);
            let a = f0.max(lo);
            let b = f1.min(hi);
            if b <= a {
                continue;
            }
            let slope = (self.power[k + 1] - self.power[k]) / (f1 - f0);
            let pa = self.power[k] + slope * (a - f0);
            let pb = self.power[k] + slope * (b - f0);
            acc += 0.5 * (pa + pb) * (b - a);
        }
        acc
    }
}

/// Periodic Hann window.
pub fn hann(n: usize) -> Vec<f64> {
    (0..n)
        .map(|i| 0.5 - 0.5 * (2.0 * std::f64::consts::PI * i as f64 / n as f64).cos())
        .collect()
}

/// Reusable Welch estimator for a fixed rate and segment length.
pub struct WelchEstimator {
    fs: f64,
    cfg: WelchConfig,
    window: Vec<f64>,
    window_power: f64,
    fft: Arc<dyn Fft<f64>>,
    buf: Vec<Complex<f64>>,
}

impl WelchEstimator {
    pub fn new(fs: f64, cfg: WelchConfig) -> Self {
        assert!(cfg.segment_len >= 2, "welch segment must hold at least 2 samples");
        assert!((0.0..1.0).contains(&cfg.overlap), "welch overlap must lie in [0, 1)");
        let fft = FftPlanner::new().plan_fft_forward(cfg.segment_len);
        let window = hann(cfg.segment_len);
        let window_power = window.iter().map(|w| w * w).sum();
        WelchEstimator {
            fs,
            cfg,
            window,
            window_power,
            fft,
            buf: vec![Complex::default(); cfg.segment_len],
        }
    }

    pub fn hop(&self) -> usize {
        ((self.cfg.segment_len as f64 * (1.0 - self.cfg.overlap)).round() as usize).max(1)
    }

    /// Averaged Hann-windowed periodograms of mean-detrended segments,
    /// normalized so the integrated density approximates the variance.
    pub fn estimate(&mut self, x: &[f64]) -> PsdEstimate {
        let n = self.cfg.segment_len;
        let bins = n / 2 + 1;
        let resolution = self.fs / n as f64;
        let freqs: Vec<f64> = (0..bins).map(|k| k as f64 * resolution).collect();
        let mut power = vec![0.0; bins];

        if x.len() < n {
            // Single zero-padded periodogram over the available samples.
            let m = x.len();
            if m >= 2 {
                let w = hann(m);
                let wp: f64 = w.iter().map(|v| v * v).sum();
                let mean = x.iter().sum::<f64>() / m as f64;
                for (k, c) in self.buf.iter_mut().enumerate() {
                    *c = if k < m {
                        Complex::new((x[k] - mean) * w[k], 0.0)
                    } else {
                        Complex::default()
                    };
                }
                self.fft.process(&mut self.buf);
                accumulate(&self.buf, &mut power, 1.0 / (self.fs * wp));
            }
            return PsdEstimate {
                freqs,
                power,
                resolution,
                segments: usize::from(m >= 2),
                zero_padded: true,
            };
        }

        let hop = self.hop();
        let scale = 1.0 / (self.fs * self.window_power);
        let mut segments = 0;
        let mut start = 0;
        while start + n <= x.len() {
            let seg = &x[start..start + n];
            let mean = seg.iter().sum::<f64>() / n as f64;
            for ((c, v), w) in self.buf.iter_mut().zip(seg).zip(&self.window) {
                *c = Complex::new((v - mean) * w, 0.0);
            }
            self.fft.process(&mut self.buf);
            accumulate(&self.buf, &mut power, scale);
            segments += 1;
            start += hop;
        }
        let inv = 1.0 / segments as f64;
        power.iter_mut().for_each(|p| *p *= inv);
        PsdEstimate {
            freqs,
            power,
            resolution,
            segments,
            zero_padded: false,
        }
    }

    pub fn sample_rate(&self) -> f64 {
        self.fs
    }
}

/// Adds the one-sided scaled magnitude-squared spectrum into `power`.
fn accumulate(spec: &[Complex<f64>], power: &mut [f64], scale: f64) {
    let n = spec.len();
    for (k, p) in power.iter_mut().enumerate() {
        let mut v = spec[k].norm_sqr() * scale;
        let nyquist = n % 2 == 0 && k == n / 2;
        if k != 0 && !nyquist {
            v *= 2.0;
        }
        *p += v;
    }
}

pub fn welch_psd(x: &[f64], fs: f64, cfg: WelchConfig) -> PsdEstimate {
    WelchEstimator::new(fs, cfg).estimate(x)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Bands {
    pub lf: (f64, f64),
    pub hf: (f64, f64),
}

impl Default for Bands {
    fn default() -> Self {
        Bands {
            lf: (0.04, 0.15),
            hf: (0.15, 0.40),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BandPowers {
    pub lf_power: f64,
    pub hf_power: f64,
    /// `(lf_fraction, hf_fraction)`; absent when `lf + hf == 0`.
    pub fractions: Option<(f64, f64)>,
}

pub fn band_powers(psd: &PsdEstimate, bands: &Bands) -> BandPowers {
    let lf = psd.integrate(bands.lf.0, bands.lf.1).max(0.0);
    let hf = psd.integrate(bands.hf.0, bands.hf.1).max(0.0);
    let total = lf + hf;
    let fractions = (total > 0.0).then(|| {
        let lf_fraction = lf / total;
        (lf_fraction, 1.0 - lf_fraction)
    });
    BandPowers {
        lf_power: lf,
        hf_power: hf,
        fractions,
    }
}
