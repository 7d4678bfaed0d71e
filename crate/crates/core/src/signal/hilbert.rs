use super::{AnalyticSeries, Result, SignalError, TimeSeries};
use num_complex::Complex64;
use rustfft::FftPlanner;

/// Analytic signal `x + jH(x)` via the DFT: negative-frequency bins are
/// zeroed and positive ones doubled, DC and Nyquist kept as is.
pub fn analytic(x: &TimeSeries) -> Result<AnalyticSeries> {
    let n = x.len();
    if n < 2 {
        return Err(SignalError::TooShort { len: n, min: 2 });
    }
    let mut buf: Vec<Complex64> = x.samples.iter().map(|&v| Complex64::new(v, 0.0)).collect();
    let mut planner = FftPlanner::<f64>::new();
    planner.plan_fft_forward(n).process(&mut buf);
    let half = n / 2;
    let positive_end = if n.is_multiple_of(2) { half } else { half + 1 };
    for z in buf.iter_mut().take(positive_end).skip(1) {
        *z *= 2.0;
    }
    for z in buf.iter_mut().skip(positive_end + usize::from(n.is_multiple_of(2))) {
        *z = Complex64::new(0.0, 0.0);
    }
    planner.plan_fft_inverse(n).process(&mut buf);
    let scale = 1.0 / n as f64;
    for z in buf.iter_mut() {
        *z *= scale;
    }
    Ok(AnalyticSeries { samples: buf, sample_rate_hz: x.sample_rate_hz, t0_s: x.t0_s })
}
