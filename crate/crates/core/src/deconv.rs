//! Iterative pulse deconvolution.
//!
//! Each raw series `s_n` is explained by a complex bin sequence `x_n` whose
//! real part, convolved with the transmitted pulse, reproduces `s_n`. The
//! objective per sensor is
//!
//! ```text
//! ‖Re(x) ∗ p − s‖₂ + λ_sparse Σ √(|x|² + ε) + λ_phase Σ |wrap(∠x[k+1] − ∠x[k])|
//! ```
//!
//! summed over sensors. The returned series is the analytic signal of
//! `Re(x)` at the final iterate, on the raw time axis.

use crate::geometry::derive_seed;
use crate::optim::{Adam, AdamConfig};
use crate::scene::{HashConfig, HashMlp, SceneError};
use crate::signal::{analytic, AnalyticSeries, SignalError, TimeSeries, Waveform};
use crate::simulator::{MeasurementSet, Processing, SeriesData};
use num_complex::Complex64;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use rayon::prelude::*;
use rustfft::{Fft, FftPlanner};
use serde::{Deserialize, Serialize};
use std::f64::consts::{PI, TAU};
use std::sync::Arc;

/// Offset inside the smooth complex magnitude.
pub const SPARSITY_EPS: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum DeconvError {
    #[error("sample rates differ: measurement {0} Hz, pulse {1} Hz")]
    SampleRateMismatch(f64, f64),
    #[error("loss diverged at iteration {iteration}: {loss} > 10x initial {initial}")]
    DivergedLoss { iteration: usize, loss: f64, initial: f64 },
    #[error("invalid deconvolution input: {0}")]
    InvalidInput(String),
    #[error("invalid deconvolution config: {0}")]
    InvalidConfig(String),
    #[error(transparent)]
    Scene(#[from] SceneError),
    #[error(transparent)]
    Signal(#[from] SignalError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Parameterization {
    /// One free complex value per time bin per sensor.
    DirectBins,
    /// A hash-encoded network over (time, sensor index).
    SharedNetwork,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DeconvConfig {
    pub lambda_sparse: f64,
    pub lambda_tv_phase: f64,
    pub iterations: usize,
    pub learning_rate: f64,
    pub parameterization: Parameterization,
    pub seed: u64,
    /// Standard deviation of the complex Gaussian initialization (DirectBins).
    pub init_std: f64,
    /// The step size decays exponentially to this fraction of
    /// `learning_rate` by the last iteration.
    pub final_lr_fraction: f64,
    /// Network shape for `SharedNetwork`. The growth factor is replaced so
    /// that the finest level resolves single time bins.
    pub network: HashConfig,
}

impl Default for DeconvConfig {
    fn default() -> Self {
        DeconvConfig {
            lambda_sparse: 0.05,
            lambda_tv_phase: 0.001,
            iterations: 1000,
            learning_rate: 1e-2,
            parameterization: Parameterization::DirectBins,
            seed: 0,
            init_std: 1e-3,
            final_lr_fraction: 1e-3,
            network: HashConfig::default(),
        }
    }
}

impl DeconvConfig {
    pub fn validate(&self) -> Result<(), DeconvError> {
        let bad = |m: &str| Err(DeconvError::InvalidConfig(m.into()));
        if self.iterations < 1 {
            return bad("iterations must be at least 1");
        }
        if !(self.learning_rate > 0.0) {
            return bad("learning_rate must be positive");
        }
        if !(self.lambda_sparse >= 0.0) || !(self.lambda_tv_phase >= 0.0) {
            return bad("regularization weights must be non-negative");
        }
        if !(self.final_lr_fraction > 0.0 && self.final_lr_fraction <= 1.0) {
            return bad("final_lr_fraction must be in (0, 1]");
        }
        if !(self.init_std >= 0.0) {
            return bad("init_std must be non-negative");
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DeconvResult {
    pub s_pd: Vec<AnalyticSeries>,
    /// Total objective per iteration, in units of the peak-normalized data.
    pub loss_history: Vec<f64>,
}

/// Linear convolution with a fixed kernel, truncated to the input length,
/// with cached FFT plans and kernel spectrum.
#[derive(Clone)]
struct Convolver {
    len: usize,
    fwd: Arc<dyn Fft<f64>>,
    inv: Arc<dyn Fft<f64>>,
    kernel: Vec<Complex64>,
}

impl Convolver {
    fn new(len: usize, kernel: &[f64]) -> Self {
        let n = (len + kernel.len()).next_power_of_two();
        let mut planner = FftPlanner::new();
        let fwd = planner.plan_fft_forward(n);
        let inv = planner.plan_fft_inverse(n);
        let mut spec = vec![Complex64::new(0.0, 0.0); n];
        for (s, &k) in spec.iter_mut().zip(kernel) {
            s.re = k / n as f64;
        }
        fwd.process(&mut spec);
        Convolver { len, fwd, inv, kernel: spec }
    }

    fn apply(&self, a: &[f64], conj: bool) -> Vec<f64> {
        let mut buf = vec![Complex64::new(0.0, 0.0); self.kernel.len()];
        for (b, &v) in buf.iter_mut().zip(a) {
            b.re = v;
        }
        self.fwd.process(&mut buf);
        for (b, k) in buf.iter_mut().zip(&self.kernel) {
            *b *= if conj { k.conj() } else { *k };
        }
        self.inv.process(&mut buf);
        buf[..self.len].iter().map(|z| z.re).collect()
    }

    /// `(a ∗ k)[0..len]`.
    fn forward(&self, a: &[f64]) -> Vec<f64> {
        self.apply(a, false)
    }

    /// Adjoint of [`forward`](Self::forward): correlation with the kernel.
    fn adjoint(&self, g: &[f64]) -> Vec<f64> {
        self.apply(g, true)
    }
}

fn wrap_phase(d: f64) -> f64 {
    let w = d.rem_euclid(TAU);
    if w > PI {
        w - TAU
    } else {
        w
    }
}

/// Per-sensor objective over one complex bin sequence. Writes the gradient
/// (as `∂L/∂Re + i·∂L/∂Im`) into `grad` when given.
fn sensor_objective(
    conv: &Convolver,
    target: &[f64],
    x: &[Complex64],
    lambda_sparse: f64,
    lambda_phase: f64,
    grad: Option<&mut [Complex64]>,
) -> f64 {
    let re: Vec<f64> = x.iter().map(|z| z.re).collect();
    let mut r = conv.forward(&re);
    for (ri, si) in r.iter_mut().zip(target) {
        *ri -= si;
    }
    let norm = r.iter().map(|v| v * v).sum::<f64>().sqrt();
    let mut loss = norm;
    let sparse: f64 = x.iter().map(|z| (z.norm_sqr() + SPARSITY_EPS).sqrt()).sum();
    loss += lambda_sparse * sparse;
    let phase: Vec<f64> = x.iter().map(|z| z.im.atan2(z.re)).collect();
    let diffs: Vec<f64> = phase.windows(2).map(|w| wrap_phase(w[1] - w[0])).collect();
    loss += lambda_phase * diffs.iter().map(|d| d.abs()).sum::<f64>();

    if let Some(grad) = grad {
        grad.fill(Complex64::new(0.0, 0.0));
        if norm > 0.0 {
            let scaled: Vec<f64> = r.iter().map(|v| v / norm).collect();
            for (g, v) in grad.iter_mut().zip(conv.adjoint(&scaled)) {
                g.re += v;
            }
        }
        if lambda_sparse > 0.0 {
            for (g, z) in grad.iter_mut().zip(x) {
                *g += z * (lambda_sparse / (z.norm_sqr() + SPARSITY_EPS).sqrt());
            }
        }
        if lambda_phase > 0.0 {
            // ∂∠x/∂Re + i·∂∠x/∂Im = i·x / |x|².
            let dphase = |z: Complex64| Complex64::new(-z.im, z.re) / (z.norm_sqr() + SPARSITY_EPS);
            for (k, d) in diffs.iter().enumerate() {
                let s = lambda_phase * d.signum() * f64::from(u8::from(*d != 0.0));
                grad[k + 1] += dphase(x[k + 1]) * s;
                grad[k] -= dphase(x[k]) * s;
            }
        }
    }
    loss
}

/// The batch deconvolution objective over flat parameters: per sensor, the
/// bins as interleaved `(re, im)` pairs.
pub struct DeconvObjective {
    conv: Convolver,
    targets: Vec<Vec<f64>>,
    pub lambda_sparse: f64,
    pub lambda_tv_phase: f64,
}

impl DeconvObjective {
    /// Build from raw series (used as is, no normalization).
    pub fn new(raw: &[TimeSeries], pulse: &Waveform, lambda_sparse: f64, lambda_tv_phase: f64) -> Result<Self, DeconvError> {
        let first = raw.first().ok_or_else(|| DeconvError::InvalidInput("no series".into()))?;
        for s in raw {
            if s.sample_rate_hz != pulse.sample_rate_hz {
                return Err(DeconvError::SampleRateMismatch(s.sample_rate_hz, pulse.sample_rate_hz));
            }
            if s.len() != first.len() {
                return Err(DeconvError::InvalidInput("series lengths differ".into()));
            }
        }
        if pulse.is_empty() {
            return Err(DeconvError::InvalidInput("empty pulse".into()));
        }
        Ok(DeconvObjective {
            conv: Convolver::new(first.len(), &pulse.samples),
            targets: raw.iter().map(|s| s.samples.clone()).collect(),
            lambda_sparse,
            lambda_tv_phase,
        })
    }

    pub fn n_sensors(&self) -> usize {
        self.targets.len()
    }

    pub fn bins(&self) -> usize {
        self.conv.len
    }

    pub fn n_params(&self) -> usize {
        2 * self.bins() * self.n_sensors()
    }

    fn sensor(&self, n: usize, params: &[f64], grad: Option<&mut [f64]>) -> f64 {
        let x = to_complex(params);
        let mut g = vec![Complex64::new(0.0, 0.0); x.len()];
        let want = grad.is_some();
        let loss = sensor_objective(
            &self.conv,
            &self.targets[n],
            &x,
            self.lambda_sparse,
            self.lambda_tv_phase,
            want.then_some(&mut g[..]),
        );
        if let Some(out) = grad {
            for (o, z) in out.chunks_exact_mut(2).zip(&g) {
                o[0] = z.re;
                o[1] = z.im;
            }
        }
        loss
    }

    pub fn loss(&self, params: &[f64]) -> f64 {
        let m = 2 * self.bins();
        params.chunks_exact(m).enumerate().map(|(n, p)| self.sensor(n, p, None)).sum()
    }

    pub fn loss_and_gradient(&self, params: &[f64]) -> (f64, Vec<f64>) {
        let m = 2 * self.bins();
        let mut grad = vec![0.0; params.len()];
        let loss =
            params.chunks_exact(m).zip(grad.chunks_exact_mut(m)).enumerate().map(|(n, (p, g))| self.sensor(n, p, Some(g))).sum();
        (loss, grad)
    }

    /// Loss of a [`HashMlp`] over `(t, n)` mapped to `[0,1]²`, and its
    /// gradient with respect to the network parameters.
    pub fn network_loss_and_gradient(&self, net: &HashMlp<2>) -> (f64, Vec<f64>) {
        let bins = self.bins();
        let sensors = self.n_sensors();
        // Fixed chunking keeps the reduction order independent of threads.
        let parts: Vec<(f64, Vec<f64>)> = (0..sensors)
            .collect::<Vec<_>>()
            .par_chunks(4)
            .map(|chunk| {
                let mut grad = vec![0.0; net.n_params()];
                let mut loss = 0.0;
                for &n in chunk {
                    let coords: Vec<[f64; 2]> = (0..bins).map(|k| network_coords(k, bins, n, sensors)).collect();
                    let x: Vec<Complex64> = coords
                        .iter()
                        .map(|u| {
                            let [a, b] = net.forward(u);
                            Complex64::new(a, b)
                        })
                        .collect();
                    let mut g = vec![Complex64::new(0.0, 0.0); bins];
                    loss += sensor_objective(
                        &self.conv,
                        &self.targets[n],
                        &x,
                        self.lambda_sparse,
                        self.lambda_tv_phase,
                        Some(&mut g),
                    );
                    for (u, gk) in coords.iter().zip(&g) {
                        net.backward(u, [gk.re, gk.im], &mut grad);
                    }
                }
                (loss, grad)
            })
            .collect();
        let mut grad = vec![0.0; net.n_params()];
        let mut loss = 0.0;
        for (l, g) in parts {
            loss += l;
            for (a, b) in grad.iter_mut().zip(&g) {
                *a += b;
            }
        }
        (loss, grad)
    }
}

fn network_coords(k: usize, bins: usize, n: usize, sensors: usize) -> [f64; 2] {
    let t = if bins > 1 { k as f64 / (bins - 1) as f64 } else { 0.0 };
    let s = if sensors > 1 { n as f64 / (sensors - 1) as f64 } else { 0.0 };
    [t, s]
}

fn to_complex(params: &[f64]) -> Vec<Complex64> {
    params.chunks_exact(2).map(|p| Complex64::new(p[0], p[1])).collect()
}

/// Re-convolve a deconvolved series with the pulse: `Re(s_pd) ∗ p`,
/// truncated to the series length on the same time axis.
pub fn reconvolve(s_pd: &AnalyticSeries, pulse: &Waveform) -> Result<TimeSeries, DeconvError> {
    if s_pd.sample_rate_hz != pulse.sample_rate_hz {
        return Err(DeconvError::SampleRateMismatch(s_pd.sample_rate_hz, pulse.sample_rate_hz));
    }
    let re: Vec<f64> = s_pd.samples.iter().map(|z| z.re).collect();
    let samples = Convolver::new(re.len(), &pulse.samples).forward(&re);
    Ok(TimeSeries { samples, sample_rate_hz: s_pd.sample_rate_hz, t0_s: s_pd.t0_s })
}

/// Deconvolve every raw series of `raw` against `pulse`.
pub fn deconvolve(raw: &MeasurementSet, pulse: &Waveform, cfg: &DeconvConfig) -> Result<DeconvResult, DeconvError> {
    cfg.validate()?;
    let series = raw.real().ok_or_else(|| DeconvError::InvalidInput("deconvolution needs raw (real) series".into()))?;
    if series.is_empty() {
        return Err(DeconvError::InvalidInput("no measurements".into()));
    }
    let peak = series.iter().flat_map(|s| s.samples.iter()).fold(0.0f64, |m, v| m.max(v.abs()));
    let gain = if peak > 0.0 { peak } else { 1.0 };
    let normalized: Vec<TimeSeries> = series.iter().map(|s| s.scale(1.0 / gain)).collect();
    let objective = DeconvObjective::new(&normalized, pulse, cfg.lambda_sparse, cfg.lambda_tv_phase)?;

    let (re_parts, loss_history) = match cfg.parameterization {
        Parameterization::DirectBins => optimize_direct(&objective, cfg)?,
        Parameterization::SharedNetwork => optimize_network(&objective, cfg)?,
    };
    let s_pd = re_parts
        .into_iter()
        .zip(series)
        .map(|(re, s)| {
            let ts = TimeSeries {
                samples: re.into_iter().map(|v| v * gain).collect(),
                sample_rate_hz: s.sample_rate_hz,
                t0_s: s.t0_s,
            };
            analytic(&ts)
        })
        .collect::<Result<Vec<_>, _>>()?;
    Ok(DeconvResult { s_pd, loss_history })
}

/// Deconvolve a raw set against its own waveform, returning a set tagged
/// `Deconvolved` alongside the optimization record.
pub fn deconvolve_set(raw: &MeasurementSet, cfg: &DeconvConfig) -> Result<(MeasurementSet, DeconvResult), DeconvError> {
    let result = deconvolve(raw, &raw.waveform, cfg)?;
    let set =
        MeasurementSet { series: SeriesData::Analytic(result.s_pd.clone()), processing: Processing::Deconvolved, ..raw.clone() };
    Ok((set, result))
}

/// The reference is the larger of the first iterate's loss and the loss of
/// the all-zero solution. Only the second half of the run is checked, so
/// Adam's warm-up transient from a tiny initialization does not count.
fn check_divergence(obj: &DeconvObjective, history: &[f64]) -> Result<(), DeconvError> {
    let initial = history[0].max(obj.loss(&vec![0.0; obj.n_params()]));
    for (iteration, &loss) in history.iter().enumerate() {
        if !loss.is_finite() || (iteration >= history.len() / 2 && loss > 10.0 * initial) {
            return Err(DeconvError::DivergedLoss { iteration, loss, initial });
        }
    }
    Ok(())
}

impl DeconvConfig {
    fn lr_at(&self, iteration: usize) -> f64 {
        let frac = if self.iterations > 1 { iteration as f64 / (self.iterations - 1) as f64 } else { 0.0 };
        self.learning_rate * self.final_lr_fraction.powf(frac)
    }
}

type Optimized = (Vec<Vec<f64>>, Vec<f64>);

fn optimize_direct(obj: &DeconvObjective, cfg: &DeconvConfig) -> Result<Optimized, DeconvError> {
    let m = 2 * obj.bins();
    let adam_cfg = AdamConfig::with_lr(cfg.learning_rate);
    let normal = Normal::new(0.0, cfg.init_std).map_err(|e| DeconvError::InvalidConfig(e.to_string()))?;
    // Sensors share no parameters and Adam is elementwise, so each sensor
    // can run its own loop; the summed history equals the joint one.
    let per_sensor: Vec<(Vec<f64>, Vec<f64>)> = (0..obj.n_sensors())
        .into_par_iter()
        .map(|n| {
            let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(cfg.seed, n as u64));
            let mut params: Vec<f64> = (0..m).map(|_| normal.sample(&mut rng)).collect();
            let mut adam = Adam::new(m, adam_cfg);
            let mut grad = vec![0.0; m];
            let mut history = Vec::with_capacity(cfg.iterations);
            for it in 0..cfg.iterations {
                let loss = obj.sensor(n, &params, Some(&mut grad));
                history.push(loss);
                adam.config.learning_rate = cfg.lr_at(it);
                adam.step(&mut params, &grad);
            }
            (params.chunks_exact(2).map(|p| p[0]).collect(), history)
        })
        .collect();
    let mut history = vec![0.0; cfg.iterations];
    for (_, h) in &per_sensor {
        for (a, b) in history.iter_mut().zip(h) {
            *a += b;
        }
    }
    check_divergence(obj, &history)?;
    Ok((per_sensor.into_iter().map(|(re, _)| re).collect(), history))
}

fn optimize_network(obj: &DeconvObjective, cfg: &DeconvConfig) -> Result<Optimized, DeconvError> {
    let mut hash = cfg.network;
    let levels = hash.levels.max(2) as f64;
    hash.growth = ((obj.bins() as f64 / hash.base_resolution).max(1.0)).powf(1.0 / (levels - 1.0));
    let mut net = HashMlp::<2>::new(hash, cfg.seed)?;
    let mut adam = Adam::new(net.n_params(), AdamConfig::with_lr(cfg.learning_rate));
    let mut history = Vec::with_capacity(cfg.iterations);
    for it in 0..cfg.iterations {
        let (loss, grad) = obj.network_loss_and_gradient(&net);
        history.push(loss);
        adam.config.learning_rate = cfg.lr_at(it);
        adam.step(net.params_mut(), &grad);
    }
    check_divergence(obj, &history)?;
    let (bins, sensors) = (obj.bins(), obj.n_sensors());
    let re = (0..sensors).map(|n| (0..bins).map(|k| net.forward(&network_coords(k, bins, n, sensors))[0]).collect()).collect();
    Ok((re, history))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{Aabb, Vec3};
    use crate::signal::{argmax, convolve, half_power_width, make_lfm, matched_filter, Window};
    use crate::simulator::SensorPose;
    use rand::Rng;

    const FS: f64 = 100e3;

    fn lfm(bw: f64) -> Waveform {
        make_lfm(20e3 - bw / 2.0, 20e3 + bw / 2.0, 1e-3, FS, Window::Tukey { ratio: 0.1 }).unwrap()
    }

    fn echo(pulse: &Waveform, delays: &[usize], len: usize) -> TimeSeries {
        let mut s = vec![0.0; len];
        for &d in delays {
            for (i, &p) in pulse.samples.iter().enumerate() {
                if d + i < len {
                    s[d + i] += p;
                }
            }
        }
        TimeSeries::new(s, FS, 0.0).unwrap()
    }

    fn set_of(series: Vec<TimeSeries>, pulse: &Waveform) -> MeasurementSet {
        let poses = vec![SensorPose::monostatic(Vec3::ZERO, Vec3::X, 0.5).unwrap(); series.len()];
        MeasurementSet::new(poses, SeriesData::Real(series), pulse.clone(), 343.0, Aabb::cube(Vec3::X, 0.5), Processing::Raw)
            .unwrap()
    }

    #[test]
    fn convolver_matches_direct_and_adjoint() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let k: Vec<f64> = (0..13).map(|_| rng.random_range(-1.0..1.0)).collect();
        let a: Vec<f64> = (0..40).map(|_| rng.random_range(-1.0..1.0)).collect();
        let g: Vec<f64> = (0..40).map(|_| rng.random_range(-1.0..1.0)).collect();
        let c = Convolver::new(40, &k);
        let full = convolve(&a, &k);
        for (x, y) in c.forward(&a).iter().zip(&full[..40]) {
            assert!((x - y).abs() < 1e-12);
        }
        let lhs: f64 = c.forward(&a).iter().zip(&g).map(|(x, y)| x * y).sum();
        let rhs: f64 = a.iter().zip(c.adjoint(&g)).map(|(x, y)| x * y).sum();
        assert!((lhs - rhs).abs() < 1e-10);
    }

    #[test]
    fn wrap_is_half_open() {
        assert!((wrap_phase(PI) - PI).abs() < 1e-15);
        assert!((wrap_phase(-PI) - PI).abs() < 1e-15);
        assert!((wrap_phase(3.0 * PI / 2.0) + PI / 2.0).abs() < 1e-12);
    }

    #[test]
    fn gradient_matches_fd() {
        let pulse = Waveform::custom(vec![0.3, -1.0, 0.7, 0.2], FS);
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let raw: Vec<TimeSeries> =
            (0..2).map(|_| TimeSeries::new((0..12).map(|_| rng.random_range(-1.0..1.0)).collect(), FS, 0.0).unwrap()).collect();
        let obj = DeconvObjective::new(&raw, &pulse, 0.07, 0.03).unwrap();
        let params: Vec<f64> = (0..obj.n_params()).map(|_| rng.random_range(-1.0..1.0)).collect();
        let (_, grad) = obj.loss_and_gradient(&params);
        for _ in 0..10 {
            let i = rng.random_range(0..params.len());
            let h = 1e-5;
            let (mut a, mut b) = (params.clone(), params.clone());
            a[i] += h;
            b[i] -= h;
            let fd = (obj.loss(&a) - obj.loss(&b)) / (2.0 * h);
            assert!((fd - grad[i]).abs() <= 1e-4 * fd.abs().max(grad[i].abs()).max(1e-3), "{i}: {fd} vs {}", grad[i]);
        }
    }

    #[test]
    fn network_gradient_matches_fd() {
        let pulse = Waveform::custom(vec![1.0, -0.5, 0.25], FS);
        let raw = vec![echo(&pulse, &[3], 10), echo(&pulse, &[5], 10)];
        let obj = DeconvObjective::new(&raw, &pulse, 0.05, 0.0).unwrap();
        let cfg = HashConfig {
            levels: 2,
            base_resolution: 4.0,
            growth: 2.0,
            log2_table_size: 6,
            features: 2,
            hidden_width: 6,
            hidden_layers: 1,
            leaky_slope: 0.01,
        };
        let mut net = HashMlp::<2>::new(cfg, 3).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        for p in net.params_mut() {
            *p = rng.random_range(-0.5..0.5);
        }
        let (_, grad) = obj.network_loss_and_gradient(&net);
        for _ in 0..10 {
            let i = rng.random_range(0..net.n_params());
            let h = 1e-6;
            let orig = net.params()[i];
            net.params_mut()[i] = orig + h;
            let lp = obj.network_loss_and_gradient(&net).0;
            net.params_mut()[i] = orig - h;
            let lm = obj.network_loss_and_gradient(&net).0;
            net.params_mut()[i] = orig;
            let fd = (lp - lm) / (2.0 * h);
            assert!((fd - grad[i]).abs() <= 1e-4 * fd.abs().max(grad[i].abs()).max(1e-3), "{i}: {fd} vs {}", grad[i]);
        }
    }

    #[test]
    fn reconvolve_impulse_is_shifted_pulse() {
        let mut s = vec![Complex64::new(0.0, 0.0); 20];
        s[4] = Complex64::new(2.0, 1.0);
        let out = reconvolve(&AnalyticSeries::new(s, FS, 0.0).unwrap(), &Waveform::rect(5, 1.0, FS)).unwrap();
        for (i, v) in out.samples.iter().enumerate() {
            assert!((v - if (4..9).contains(&i) { 2.0 } else { 0.0 }).abs() < 1e-12);
        }
        let zero = AnalyticSeries::zeros(20, FS, 0.0);
        assert!(reconvolve(&zero, &lfm(5e3)).unwrap().samples.iter().all(|v| *v == 0.0));
        assert!(matches!(reconvolve(&zero, &Waveform::impulse(2.0 * FS)), Err(DeconvError::SampleRateMismatch(..))));
    }

    #[test]
    fn single_echo_compresses_beyond_matched_filter() {
        let pulse = lfm(5e3);
        let tau = 300;
        let raw = echo(&pulse, &[tau], 700);
        let cfg = DeconvConfig { iterations: 1500, ..Default::default() };
        let result = deconvolve(&set_of(vec![raw.clone()], &pulse), &pulse, &cfg).unwrap();
        let env = result.s_pd[0].envelope();
        let peak = argmax(&env);
        assert!((peak as i64 - tau as i64).abs() <= 1, "peak {peak}");
        let mf = analytic(&matched_filter(&raw, &pulse).unwrap()).unwrap().envelope();
        let mf_width = half_power_width(&mf, argmax(&mf));
        let width = half_power_width(&env, peak);
        assert!(width <= 0.5 * mf_width, "{width} vs {mf_width}");
        let recon = reconvolve(&result.s_pd[0], &pulse).unwrap();
        let num: f64 = recon.samples.iter().zip(&raw.samples).map(|(a, b)| (a - b).powi(2)).sum();
        let den: f64 = raw.samples.iter().map(|b| b * b).sum();
        assert!((num / den).sqrt() < 0.1, "residual {}", (num / den).sqrt());
        let tail = &result.loss_history[result.loss_history.len() - 100..];
        assert!(tail.windows(2).all(|w| w[1] <= w[0] * 1.05));
    }

    #[test]
    fn zero_measurement_decays() {
        let pulse = lfm(20e3);
        let raw = TimeSeries::zeros(300, FS, 0.0);
        let cfg = DeconvConfig { lambda_sparse: 0.1, lambda_tv_phase: 0.0, iterations: 1000, ..Default::default() };
        let result = deconvolve(&set_of(vec![raw], &pulse), &pulse, &cfg).unwrap();
        let l2 = result.s_pd[0].samples.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
        assert!(l2 <= 1e-3, "l2 {l2}");
    }

    #[test]
    fn two_close_echoes_resolved() {
        let pulse = lfm(5e3);
        // Two range cells at 5 kHz: 2·c/(2Δf) is 2·(fs/Δf)/2 = 20 samples of delay.
        let raw = echo(&pulse, &[300, 320], 700);
        let cfg = DeconvConfig { iterations: 1500, ..Default::default() };
        let env = deconvolve(&set_of(vec![raw], &pulse), &pulse, &cfg).unwrap().s_pd[0].envelope();
        let a = env[298..303].iter().cloned().fold(0.0, f64::max);
        let b = env[318..323].iter().cloned().fold(0.0, f64::max);
        let dip = env[306..315].iter().cloned().fold(f64::MAX, f64::min);
        assert!(dip < 0.5 * a.min(b), "peaks {a} {b}, dip {dip}");
    }

    #[test]
    fn shift_equivariant() {
        let pulse = lfm(10e3);
        let cfg = DeconvConfig { lambda_tv_phase: 0.0, iterations: 800, ..Default::default() };
        let peak_at = |d: usize| {
            let raw = echo(&pulse, &[d], 500);
            argmax(&deconvolve(&set_of(vec![raw], &pulse), &pulse, &cfg).unwrap().s_pd[0].envelope())
        };
        let base = peak_at(150);
        for k in [1usize, 7, 40] {
            assert!((peak_at(150 + k) as i64 - (base + k) as i64).abs() <= 1);
        }
    }

    #[test]
    fn l1_norm_non_increasing_in_lambda() {
        let pulse = lfm(10e3);
        let raw = echo(&pulse, &[120, 180], 400);
        let l1 = |lambda: f64| {
            let cfg = DeconvConfig { lambda_sparse: lambda, lambda_tv_phase: 0.0, iterations: 800, ..Default::default() };
            let r = deconvolve(&set_of(vec![raw.clone()], &pulse), &pulse, &cfg).unwrap();
            r.s_pd[0].samples.iter().map(|z| z.re.abs()).sum::<f64>()
        };
        let (a, b, c) = (l1(0.01), l1(0.1), l1(0.5));
        assert!(b <= a * 1.001 && c <= b * 1.001, "{a} {b} {c}");
    }

    #[test]
    fn rejects_bad_input() {
        let pulse = lfm(20e3);
        let set = set_of(vec![TimeSeries::zeros(50, FS, 0.0)], &pulse);
        let other = Waveform::impulse(2.0 * FS);
        assert!(matches!(deconvolve(&set, &other, &DeconvConfig::default()), Err(DeconvError::SampleRateMismatch(..))));
        let bad = DeconvConfig { iterations: 0, ..Default::default() };
        assert!(matches!(deconvolve(&set, &pulse, &bad), Err(DeconvError::InvalidConfig(_))));
        let diverging = DeconvConfig {
            learning_rate: 50.0,
            lambda_sparse: 0.0,
            iterations: 50,
            final_lr_fraction: 1.0,
            ..Default::default()
        };
        let raw = set_of(vec![echo(&pulse, &[10], 300)], &pulse);
        assert!(matches!(deconvolve(&raw, &pulse, &diverging), Err(DeconvError::DivergedLoss { .. })));
    }
}
