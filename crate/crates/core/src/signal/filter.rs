use super::{Result, SignalError, TimeSeries, Waveform};
use num_complex::Complex64;
use rustfft::FftPlanner;

/// Full linear convolution `a * b` (length `a.len() + b.len() - 1`) via FFT.
pub fn convolve(a: &[f64], b: &[f64]) -> Vec<f64> {
    if a.is_empty() || b.is_empty() {
        return Vec::new();
    }
    let out_len = a.len() + b.len() - 1;
    if a.len().min(b.len()) <= 8 {
        return convolve_direct(a, b);
    }
    let n = out_len.next_power_of_two();
    let mut planner = FftPlanner::<f64>::new();
    let fwd = planner.plan_fft_forward(n);
    let inv = planner.plan_fft_inverse(n);
    let mut fa = padded(a, n);
    let mut fb = padded(b, n);
    fwd.process(&mut fa);
    fwd.process(&mut fb);
    for (x, y) in fa.iter_mut().zip(&fb) {
        *x *= y;
    }
    inv.process(&mut fa);
    let scale = 1.0 / n as f64;
    fa.iter().take(out_len).map(|z| z.re * scale).collect()
}

fn convolve_direct(a: &[f64], b: &[f64]) -> Vec<f64> {
    let mut out = vec![0.0; a.len() + b.len() - 1];
    for (i, &x) in a.iter().enumerate() {
        if x == 0.0 {
            continue;
        }
        for (j, &y) in b.iter().enumerate() {
            out[i + j] += x * y;
        }
    }
    out
}

fn padded(x: &[f64], n: usize) -> Vec<Complex64> {
    let mut v = vec![Complex64::new(0.0, 0.0); n];
    for (dst, &src) in v.iter_mut().zip(x) {
        dst.re = src;
    }
    v
}

/// Full cross-correlation of `signal` against `kernel`.
///
/// Output index `k` holds lag `k - (kernel.len() - 1)`:
/// `out[k] = Σ_n signal[n + lag] · kernel[n]`.
pub fn correlate(signal: &[f64], kernel: &[f64]) -> Vec<f64> {
    let reversed: Vec<f64> = kernel.iter().rev().copied().collect();
    convolve(signal, &reversed)
}

/// Pulse compression `s(t) * p*(-t)`.
///
/// The output covers the full correlation; its time axis is shifted so an
/// echo `p(t - τ0)` peaks exactly at `t = τ0`.
pub fn matched_filter(measurement: &TimeSeries, pulse: &Waveform) -> Result<TimeSeries> {
    if measurement.sample_rate_hz != pulse.sample_rate_hz {
        return Err(SignalError::SampleRateMismatch(measurement.sample_rate_hz, pulse.sample_rate_hz));
    }
    let samples = correlate(&measurement.samples, &pulse.samples);
    let lead = pulse.len().saturating_sub(1) as f64 / pulse.sample_rate_hz;
    Ok(TimeSeries { samples, sample_rate_hz: measurement.sample_rate_hz, t0_s: measurement.t0_s - lead })
}

#[cfg(test)]
mod tests {
    use super::super::{analytic, argmax, make_lfm, Window};
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    /// Independent time-domain correlation, straight from the definition.
    fn correlate_oracle(s: &[f64], p: &[f64]) -> Vec<f64> {
        let m = s.len() as isize;
        let np = p.len() as isize;
        (0..(m + np - 1))
            .map(|k| {
                let lag = k - (np - 1);
                (0..np)
                    .map(|n| {
                        let i = n + lag;
                        if i >= 0 && i < m {
                            s[i as usize] * p[n as usize]
                        } else {
                            0.0
                        }
                    })
                    .sum()
            })
            .collect()
    }

    fn rel_l2(a: &[f64], b: &[f64]) -> f64 {
        let num: f64 = a.iter().zip(b).map(|(x, y)| (x - y).powi(2)).sum();
        let den: f64 = b.iter().map(|y| y * y).sum();
        (num / den.max(1e-300)).sqrt()
    }

    #[test]
    fn fft_matches_direct_correlation() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let s: Vec<f64> = (0..777).map(|_| rng.random_range(-1.0..1.0)).collect();
        let p = make_lfm(10e3, 30e3, 1e-3, 100e3, Window::Tukey { ratio: 0.1 }).unwrap();
        let fast = correlate(&s, &p.samples);
        let slow = correlate_oracle(&s, &p.samples);
        assert_eq!(fast.len(), slow.len());
        assert!(rel_l2(&fast, &slow) < 1e-9);
    }

    #[test]
    fn rect_autocorrelation_is_triangle() {
        let (n, amp, fs) = (50usize, 2.0, 1000.0);
        let p = Waveform::rect(n, amp, fs);
        let s = TimeSeries::new(p.samples.clone(), fs, 0.0).unwrap();
        let mf = matched_filter(&s, &p).unwrap();
        let peak = amp * amp * n as f64;
        for (k, v) in mf.samples.iter().enumerate() {
            let lag = k as f64 - (n as f64 - 1.0);
            let tri = peak * (1.0 - lag.abs() / n as f64);
            assert!((v - tri).abs() < 1e-9 * peak);
        }
        // A²·τ·fs at zero lag.
        assert!((mf.samples[n - 1] - amp * amp * (n as f64 / fs) * fs).abs() < 1e-9);
        assert_eq!(mf.time_of(n - 1), 0.0);
    }

    #[test]
    fn zero_in_zero_out() {
        let p = make_lfm(10e3, 30e3, 1e-3, 100e3, Window::None).unwrap();
        let s = TimeSeries::zeros(300, 100e3, 0.0);
        assert!(matched_filter(&s, &p).unwrap().samples.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn rate_mismatch_is_rejected() {
        let p = Waveform::impulse(10.0);
        let s = TimeSeries::zeros(4, 20.0, 0.0);
        assert_eq!(matched_filter(&s, &p).unwrap_err(), SignalError::SampleRateMismatch(20.0, 10.0));
    }

    #[test]
    fn noisy_echo_peaks_at_its_delay() {
        let fs = 100e3;
        let p = make_lfm(10e3, 30e3, 1e-3, fs, Window::Tukey { ratio: 0.1 }).unwrap();
        let delay = 437usize;
        let mut raw = vec![0.0; 1500];
        for (k, v) in p.samples.iter().enumerate() {
            raw[delay + k] += v;
        }
        let clean = TimeSeries::new(raw, fs, 0.0).unwrap();
        let noisy = super::super::add_noise(&clean, 20.0, 5).unwrap();
        let mf = matched_filter(&noisy, &p).unwrap();
        let env = analytic(&mf).unwrap().envelope();
        let peak_t = mf.time_of(argmax(&env));
        let truth = delay as f64 / fs;
        assert!((peak_t - truth).abs() <= 1.0 / fs + 1e-12);
        // Oracle agreement on the noisy record too.
        assert!(rel_l2(&mf.samples, &correlate_oracle(&noisy.samples, &p.samples)) < 1e-9);
    }

    #[test]
    fn matched_filter_is_linear() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let fs = 100e3;
        let p = make_lfm(10e3, 30e3, 1e-3, fs, Window::None).unwrap();
        let x: Vec<f64> = (0..400).map(|_| rng.random_range(-1.0..1.0)).collect();
        let y: Vec<f64> = (0..400).map(|_| rng.random_range(-1.0..1.0)).collect();
        let (a, b) = (1.7, -0.4);
        let mix: Vec<f64> = x.iter().zip(&y).map(|(u, v)| a * u + b * v).collect();
        let ts = |v: Vec<f64>| TimeSeries::new(v, fs, 0.0).unwrap();
        let lhs = matched_filter(&ts(mix), &p).unwrap().samples;
        let mx = matched_filter(&ts(x), &p).unwrap().samples;
        let my = matched_filter(&ts(y), &p).unwrap().samples;
        let rhs: Vec<f64> = mx.iter().zip(&my).map(|(u, v)| a * u + b * v).collect();
        assert!(rel_l2(&lhs, &rhs) < 1e-9);
    }
}
