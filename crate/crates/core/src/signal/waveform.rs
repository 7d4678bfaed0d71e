use super::{Result, SignalError, Waveform, Window};
use std::f64::consts::PI;

/// Linear frequency modulated chirp sweeping `f_start_hz -> f_stop_hz` over
/// `duration_s`, multiplied by `window`.
///
/// Sample `k` is taken at `t = k / fs` for `k < round(duration * fs)`.
pub fn make_lfm(f_start_hz: f64, f_stop_hz: f64, duration_s: f64, sample_rate_hz: f64, window: Window) -> Result<Waveform> {
    if !(duration_s > 0.0) || !duration_s.is_finite() {
        return Err(SignalError::NonPositiveDuration(duration_s));
    }
    if !(sample_rate_hz > 0.0) || !sample_rate_hz.is_finite() {
        return Err(SignalError::InvalidSampleRate(sample_rate_hz));
    }
    let bandwidth = (f_start_hz - f_stop_hz).abs();
    if !(bandwidth > 0.0) || f_start_hz < 0.0 || f_stop_hz < 0.0 {
        return Err(SignalError::NonPositiveBandwidth(bandwidth));
    }
    let f_max = f_start_hz.max(f_stop_hz);
    if sample_rate_hz < 2.0 * f_max {
        return Err(SignalError::NyquistViolation { sample_rate_hz, max_freq_hz: f_max });
    }
    let n = ((duration_s * sample_rate_hz).round() as usize).max(1);
    let w = window.coefficients(n)?;
    // Signed sweep rate so that down-chirps are handled too.
    let half_rate = (f_stop_hz - f_start_hz) / (2.0 * duration_s);
    let samples = (0..n)
        .map(|k| {
            let t = k as f64 / sample_rate_hz;
            w[k] * (2.0 * PI * (half_rate * t * t + f_start_hz * t)).cos()
        })
        .collect();
    Ok(Waveform { samples, sample_rate_hz, f_start_hz, f_stop_hz, duration_s, window })
}

/// Range resolution `c / (2 Δf)` of a pulse-compressed waveform.
pub fn range_resolution(bandwidth_hz: f64, sound_speed_mps: f64) -> Result<f64> {
    if !(bandwidth_hz > 0.0) {
        return Err(SignalError::NonPositiveBandwidth(bandwidth_hz));
    }
    if !(sound_speed_mps > 0.0) {
        return Err(SignalError::NonPositiveSoundSpeed(sound_speed_mps));
    }
    Ok(sound_speed_mps / (2.0 * bandwidth_hz))
}

/// Tukey (cosine-tapered) window of `n` points. `ratio = 0` is rectangular,
/// `ratio = 1` is a Hann window.
pub fn tukey_window(n: usize, ratio: f64) -> Result<Vec<f64>> {
    if !(0.0..=1.0).contains(&ratio) {
        return Err(SignalError::InvalidWindow(format!("tukey ratio {ratio} outside [0, 1]")));
    }
    if n <= 1 || ratio == 0.0 {
        return Ok(vec![1.0; n]);
    }
    let m = (n - 1) as f64;
    Ok((0..n)
        .map(|k| {
            let x = k as f64 / m;
            if x < ratio / 2.0 {
                0.5 * (1.0 + (2.0 * PI / ratio * (x - ratio / 2.0)).cos())
            } else if x > 1.0 - ratio / 2.0 {
                0.5 * (1.0 + (2.0 * PI / ratio * (x - 1.0 + ratio / 2.0)).cos())
            } else {
                1.0
            }
        })
        .collect())
}

/// Taylor window of `n` points with `nbar` constant-level sidelobes at
/// `sll_db` (sign ignored, so -30 and 30 both mean 30 dB down). Normalized to
/// unit gain at the centre.
pub fn taylor_window(n: usize, nbar: u32, sll_db: f64) -> Result<Vec<f64>> {
    if nbar < 1 {
        return Err(SignalError::InvalidWindow("taylor nbar must be >= 1".into()));
    }
    if !sll_db.is_finite() || sll_db == 0.0 {
        return Err(SignalError::InvalidWindow(format!("taylor sidelobe level {sll_db}")));
    }
    if n <= 1 {
        return Ok(vec![1.0; n]);
    }
    let b = 10f64.powf(sll_db.abs() / 20.0);
    let a = b.acosh() / PI;
    let nbar_f = nbar as f64;
    let s2 = nbar_f * nbar_f / (a * a + (nbar_f - 0.5).powi(2));
    let ms: Vec<f64> = (1..nbar).map(|m| m as f64).collect();
    let fm: Vec<f64> = ms
        .iter()
        .enumerate()
        .map(|(mi, &m)| {
            let sign = if mi % 2 == 0 { 1.0 } else { -1.0 };
            let numer: f64 = ms.iter().map(|&j| 1.0 - m * m / s2 / (a * a + (j - 0.5).powi(2))).product();
            let denom: f64 = ms.iter().filter(|&&j| j != m).map(|&j| 1.0 - m * m / (j * j)).product();
            sign * numer / (2.0 * denom)
        })
        .collect();
    let len = n as f64;
    let eval = |k: f64| -> f64 {
        1.0 + 2.0 * ms.iter().zip(&fm).map(|(&m, &f)| f * (2.0 * PI * m * (k - len / 2.0 + 0.5) / len).cos()).sum::<f64>()
    };
    let scale = 1.0 / eval((len - 1.0) / 2.0);
    Ok((0..n).map(|k| eval(k as f64) * scale).collect())
}
