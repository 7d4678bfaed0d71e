//! Waveforms, pulse compression and the analytic-signal machinery.
//!
//! Everything here is a pure function over value types. Real-valued
//! measurements live in [`TimeSeries`]; complex pre-envelopes produced by
//! [`analytic`] live in [`AnalyticSeries`], which is what the coherent
//! stages (backprojection, neural backprojection) consume.

mod drc;
mod filter;
mod hilbert;
mod noise;
mod waveform;

pub use drc::{drc, DynamicRange};
pub use filter::{convolve, correlate, matched_filter};
pub use hilbert::analytic;
pub use noise::add_noise;
pub use waveform::{make_lfm, range_resolution, taylor_window, tukey_window};

use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SignalError {
    #[error("sample rate {sample_rate_hz} Hz violates Nyquist for {max_freq_hz} Hz")]
    NyquistViolation { sample_rate_hz: f64, max_freq_hz: f64 },
    #[error("duration must be positive, got {0} s")]
    NonPositiveDuration(f64),
    #[error("bandwidth must be positive, got {0} Hz")]
    NonPositiveBandwidth(f64),
    #[error("sound speed must be positive, got {0} m/s")]
    NonPositiveSoundSpeed(f64),
    #[error("sample rates differ: {0} Hz vs {1} Hz")]
    SampleRateMismatch(f64, f64),
    #[error("series too short: {len} samples, need at least {min}")]
    TooShort { len: usize, min: usize },
    #[error("signal is all zero")]
    ZeroSignal,
    #[error("kappa must be in (0, 1], got {0}")]
    KappaOutOfRange(f64),
    #[error("invalid sample rate {0}")]
    InvalidSampleRate(f64),
    #[error("non-finite sample at index {0}")]
    NonFinite(usize),
    #[error("invalid window parameter: {0}")]
    InvalidWindow(String),
}

pub type Result<T> = std::result::Result<T, SignalError>;

/// Amplitude taper applied to a transmitted pulse.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Window {
    None,
    /// Cosine-tapered window; `ratio` is the tapered fraction of the pulse.
    Tukey {
        ratio: f64,
    },
    /// Taylor window with `nbar` nearly constant sidelobes at `sll_db`.
    Taylor {
        nbar: u32,
        sll_db: f64,
    },
}

impl Window {
    /// Default Taylor parameters used when a sonar only states "Taylor windowed".
    pub fn taylor_default() -> Self {
        Window::Taylor { nbar: 4, sll_db: -30.0 }
    }

    pub fn coefficients(&self, n: usize) -> Result<Vec<f64>> {
        match *self {
            Window::None => Ok(vec![1.0; n]),
            Window::Tukey { ratio } => tukey_window(n, ratio),
            Window::Taylor { nbar, sll_db } => taylor_window(n, nbar, sll_db),
        }
    }
}

/// A transmitted pulse, sampled at `sample_rate_hz` starting at t = 0.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Waveform {
    pub samples: Vec<f64>,
    pub sample_rate_hz: f64,
    pub f_start_hz: f64,
    pub f_stop_hz: f64,
    pub duration_s: f64,
    pub window: Window,
}

impl Waveform {
    /// Wrap arbitrary pulse samples (no chirp metadata).
    pub fn custom(samples: Vec<f64>, sample_rate_hz: f64) -> Self {
        let duration_s = samples.len() as f64 / sample_rate_hz;
        Waveform { samples, sample_rate_hz, f_start_hz: 0.0, f_stop_hz: 0.0, duration_s, window: Window::None }
    }

    /// Single-sample unit pulse; convolution with it is the identity.
    pub fn impulse(sample_rate_hz: f64) -> Self {
        Waveform::custom(vec![1.0], sample_rate_hz)
    }

    /// Rectangular pulse of `len` samples and amplitude `amplitude`.
    pub fn rect(len: usize, amplitude: f64, sample_rate_hz: f64) -> Self {
        Waveform::custom(vec![amplitude; len], sample_rate_hz)
    }

    pub fn bandwidth_hz(&self) -> f64 {
        (self.f_start_hz - self.f_stop_hz).abs()
    }

    pub fn center_frequency_hz(&self) -> f64 {
        0.5 * (self.f_start_hz + self.f_stop_hz)
    }

    pub fn max_frequency_hz(&self) -> f64 {
        self.f_start_hz.max(self.f_stop_hz)
    }

    pub fn min_frequency_hz(&self) -> f64 {
        self.f_start_hz.min(self.f_stop_hz)
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn energy(&self) -> f64 {
        self.samples.iter().map(|v| v * v).sum()
    }
}

/// Real-valued, uniformly sampled series. Sample `k` sits at `t0_s + k / sample_rate_hz`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TimeSeries {
    pub samples: Vec<f64>,
    pub sample_rate_hz: f64,
    pub t0_s: f64,
}

impl TimeSeries {
    pub fn new(samples: Vec<f64>, sample_rate_hz: f64, t0_s: f64) -> Result<Self> {
        check_rate(sample_rate_hz)?;
        if let Some(i) = samples.iter().position(|v| !v.is_finite()) {
            return Err(SignalError::NonFinite(i));
        }
        Ok(TimeSeries { samples, sample_rate_hz, t0_s })
    }

    pub fn zeros(len: usize, sample_rate_hz: f64, t0_s: f64) -> Self {
        TimeSeries { samples: vec![0.0; len], sample_rate_hz, t0_s }
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn time_of(&self, index: usize) -> f64 {
        self.t0_s + index as f64 / self.sample_rate_hz
    }

    pub fn power(&self) -> f64 {
        if self.samples.is_empty() {
            return 0.0;
        }
        self.samples.iter().map(|v| v * v).sum::<f64>() / self.samples.len() as f64
    }

    pub fn scale(&self, gain: f64) -> TimeSeries {
        TimeSeries { samples: self.samples.iter().map(|v| v * gain).collect(), ..self.clone() }
    }
}

/// Complex pre-envelope of a real series.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnalyticSeries {
    pub samples: Vec<Complex64>,
    pub sample_rate_hz: f64,
    pub t0_s: f64,
}

impl AnalyticSeries {
    pub fn new(samples: Vec<Complex64>, sample_rate_hz: f64, t0_s: f64) -> Result<Self> {
        check_rate(sample_rate_hz)?;
        if let Some(i) = samples.iter().position(|v| !(v.re.is_finite() && v.im.is_finite())) {
            return Err(SignalError::NonFinite(i));
        }
        Ok(AnalyticSeries { samples, sample_rate_hz, t0_s })
    }

    pub fn zeros(len: usize, sample_rate_hz: f64, t0_s: f64) -> Self {
        AnalyticSeries { samples: vec![Complex64::new(0.0, 0.0); len], sample_rate_hz, t0_s }
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn time_of(&self, index: usize) -> f64 {
        self.t0_s + index as f64 / self.sample_rate_hz
    }

    /// Magnitude of every sample.
    pub fn envelope(&self) -> Vec<f64> {
        self.samples.iter().map(|z| z.norm()).collect()
    }

    pub fn real_part(&self) -> TimeSeries {
        TimeSeries { samples: self.samples.iter().map(|z| z.re).collect(), sample_rate_hz: self.sample_rate_hz, t0_s: self.t0_s }
    }

    /// Linear interpolation at absolute time `t`; zero outside the record.
    #[inline]
    pub fn sample_at(&self, t: f64) -> Complex64 {
        let pos = (t - self.t0_s) * self.sample_rate_hz;
        if !(pos >= 0.0) {
            return Complex64::new(0.0, 0.0);
        }
        let i = pos.floor() as usize;
        if i + 1 >= self.samples.len() {
            if i + 1 == self.samples.len() && pos == i as f64 {
                return self.samples[i];
            }
            return Complex64::new(0.0, 0.0);
        }
        let frac = pos - i as f64;
        self.samples[i] * (1.0 - frac) + self.samples[i + 1] * frac
    }

    pub fn scale(&self, gain: f64) -> AnalyticSeries {
        AnalyticSeries { samples: self.samples.iter().map(|v| v * gain).collect(), ..self.clone() }
    }
}

fn check_rate(sample_rate_hz: f64) -> Result<()> {
    if sample_rate_hz > 0.0 && sample_rate_hz.is_finite() {
        Ok(())
    } else {
        Err(SignalError::InvalidSampleRate(sample_rate_hz))
    }
}

/// Width in samples of the region around `peak` where `env` stays above
/// `peak_value / sqrt(2)` (the -3 dB width), with linear interpolation of
/// both crossings.
pub fn half_power_width(env: &[f64], peak: usize) -> f64 {
    let level = env[peak] / std::f64::consts::SQRT_2;
    let mut left = 0.0;
    let mut i = peak;
    while i > 0 {
        if env[i - 1] < level {
            let frac = (env[i] - level) / (env[i] - env[i - 1]);
            left = i as f64 - frac;
            break;
        }
        i -= 1;
    }
    let mut right = (env.len() - 1) as f64;
    let mut j = peak;
    while j + 1 < env.len() {
        if env[j + 1] < level {
            let frac = (env[j] - level) / (env[j] - env[j + 1]);
            right = j as f64 + frac;
            break;
        }
        j += 1;
    }
    right - left
}

/// Index of the largest value (first one on ties).
pub fn argmax(values: &[f64]) -> usize {
    let mut best = 0;
    for (i, v) in values.iter().enumerate() {
        if *v > values[best] {
            best = i;
        }
    }
    best
}
