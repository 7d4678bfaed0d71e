use super::{AnalyticSeries, Result, SignalError, TimeSeries};

/// Series whose magnitudes can be compressed elementwise as `sign(s)·|s|^κ`.
pub trait DynamicRange: Sized {
    fn compress(&self, kappa: f64) -> Self;
}

impl DynamicRange for TimeSeries {
    fn compress(&self, kappa: f64) -> Self {
        TimeSeries { samples: self.samples.iter().map(|&v| v.signum() * v.abs().powf(kappa)).collect(), ..self.clone() }
    }
}

impl DynamicRange for AnalyticSeries {
    fn compress(&self, kappa: f64) -> Self {
        AnalyticSeries {
            samples: self
                .samples
                .iter()
                .map(|z| {
                    let m = z.norm();
                    if m == 0.0 {
                        *z
                    } else {
                        z * (m.powf(kappa) / m)
                    }
                })
                .collect(),
            ..self.clone()
        }
    }
}

/// Dynamic-range compression with exponent `kappa ∈ (0, 1]`; smaller
/// `kappa` compresses harder. Phase (or sign) is preserved.
pub fn drc<T: DynamicRange>(x: &T, kappa: f64) -> Result<T> {
    if !(kappa > 0.0 && kappa <= 1.0) {
        return Err(SignalError::KappaOutOfRange(kappa));
    }
    Ok(x.compress(kappa))
}

#[cfg(test)]
mod tests {
    use super::*;
    use num_complex::Complex64;
    use std::f64::consts::FRAC_PI_4;

    #[test]
    fn kappa_one_is_identity() {
        let x = TimeSeries::new(vec![-3.0, 0.5, 2.0], 1.0, 0.0).unwrap();
        assert_eq!(drc(&x, 1.0).unwrap(), x);
    }

    #[test]
    fn square_root_of_reals() {
        let x = TimeSeries::new(vec![-4.0, 0.0, 9.0], 1.0, 0.0).unwrap();
        assert_eq!(drc(&x, 0.5).unwrap().samples, vec![-2.0, 0.0, 3.0]);
    }

    #[test]
    fn complex_phase_preserved() {
        let z = Complex64::from_polar(3.0, FRAC_PI_4);
        let a = AnalyticSeries::new(vec![z], 1.0, 0.0).unwrap();
        let out = drc(&a, 0.5).unwrap().samples[0];
        assert!((out - Complex64::from_polar(3f64.sqrt(), FRAC_PI_4)).norm() < 1e-12);
    }

    #[test]
    fn kappa_range_checked() {
        let x = TimeSeries::zeros(2, 1.0, 0.0);
        assert_eq!(drc(&x, 0.0).unwrap_err(), SignalError::KappaOutOfRange(0.0));
        assert!(drc(&x, 1.5).is_err());
    }
}
