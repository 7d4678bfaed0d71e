use super::{Result, SignalError, TimeSeries};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

/// Add white Gaussian noise so that the record-wide SNR is `snr_db`.
///
/// `snr_db = +inf` returns the input unchanged. The same seed always
/// produces the same realization.
pub fn add_noise(x: &TimeSeries, snr_db: f64, seed: u64) -> Result<TimeSeries> {
    if snr_db == f64::INFINITY {
        return Ok(x.clone());
    }
    let p_signal = x.power();
    if p_signal == 0.0 {
        return Err(SignalError::ZeroSignal);
    }
    let sigma = (p_signal / 10f64.powf(snr_db / 10.0)).sqrt();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let samples = x
        .samples
        .iter()
        .map(|&v| {
            let n: f64 = StandardNormal.sample(&mut rng);
            v + sigma * n
        })
        .collect();
    Ok(TimeSeries { samples, ..x.clone() })
}
