//! Differentiable acoustic rendering and analysis-by-synthesis
//! reconstruction.
//!
//! A measurement value at time `t` is modelled as a surface integral of the
//! scene over the ellipsoid of points whose two-way path is `c·t`. The
//! integral is estimated by casting transmit rays and intersecting them
//! with the ellipsoids of a set of sampled ranges. Each intersection
//! contributes its scatterer value weighted by transmittance on the way in
//! and out and by a Lambertian factor.

mod ellipsoid;
mod forward;
mod sampling;

pub use ellipsoid::{ray_ellipsoid_depth, semi_axes, EllipsoidFrame};
pub use forward::{
    bp_loss, expected_point, sensor_loss, synthesize, transmittance, ForwardSettings, LossTerms, SensorProblem, PRIOR_EPS,
};
pub use sampling::{sample_directions, sample_ranges, DirectionSamples, RangeSamples};

use crate::geometry::derive_seed;
use crate::optim::{Adam, AdamConfig};
use crate::scene::SceneModel;
use crate::simulator::{MeasurementSet, Processing, SensorPose};
use num_complex::Complex64;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum RenderError {
    #[error("ellipsoid with semi-major axis {r} cannot contain foci {d} apart")]
    DegenerateEllipsoid { r: f64, d: f64 },
    #[error("ray does not intersect the ellipsoid")]
    NoIntersection,
    #[error("sample depths are not strictly increasing")]
    NonMonotoneDepths,
    #[error("{synth} synthesized samples against {target} targets")]
    MisalignedSamples { synth: usize, target: usize },
    #[error("loss diverged at iteration {iteration}: {loss} (initial {initial})")]
    DivergedLoss { iteration: usize, loss: f64, initial: f64 },
    #[error("reconstruction needs matched or deconvolved analytic measurements")]
    NonAnalyticInput,
    #[error("invalid render configuration: {0}")]
    InvalidConfig(String),
}

/// Knobs of the forward model and the reconstruction loop.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RenderConfig {
    /// Dense transmit rays per sensor.
    pub n_rays: usize,
    /// Coarse rays for direction priority sampling; 0 samples uniformly.
    pub n_coarse_rays: usize,
    /// Range draws per sensor (duplicates are merged).
    pub n_depth_samples: usize,
    /// Share of dense rays drawn uniformly over the beam.
    pub uniform_direction_fraction: f64,
    /// Extra uniform range draws, as a fraction of `n_depth_samples`, over
    /// ranges whose ellipsoids reach the scene.
    pub uniform_range_fraction: f64,
    /// Transmission falloff. It multiplies `|σ|·Δl`, so it only bites once
    /// it is comparable to `1/(|σ|·pitch)`; with peak-normalized targets
    /// `|σ|` settles around 5e-3 on a 5 mm grid.
    pub zeta: f64,
    pub lambertian_enabled: bool,
    pub occlusion_enabled: bool,
    pub coherent: bool,
    pub lambda_sparse: f64,
    pub lambda_tv_space: f64,
    pub lambda_tv_phase: f64,
    /// Companion offset of the spatial priors; defaults to the model's
    /// feature size.
    pub d_reg: Option<f64>,
    /// Finite-difference step for normals; defaults to half the feature size.
    pub fd_step: Option<f64>,
    /// Solid angle that counts as unit surface measure; defaults to the
    /// angle one feature subtends from the mean sensor distance.
    pub unit_solid_angle: Option<f64>,
    pub accumulate_sensors: usize,
    /// Sensor visits; an optimizer step happens every `accumulate_sensors`.
    pub iterations: usize,
    pub learning_rate: f64,
    /// Learning rate at the end as a fraction of the start (exponential decay).
    pub final_lr_fraction: f64,
    /// Adam's denominator offset. Gradients well below it take plain
    /// momentum steps of size `learning_rate · m / adam_eps`.
    pub adam_eps: f64,
    pub seed: u64,
}

impl Default for RenderConfig {
    fn default() -> Self {
        RenderConfig {
            n_rays: 1000,
            n_coarse_rays: 400,
            n_depth_samples: 200,
            uniform_direction_fraction: 0.05,
            uniform_range_fraction: 0.1,
            zeta: 3e4,
            lambertian_enabled: true,
            occlusion_enabled: true,
            coherent: true,
            lambda_sparse: 0.0,
            lambda_tv_space: 0.0,
            lambda_tv_phase: 0.0,
            d_reg: None,
            fd_step: None,
            unit_solid_angle: None,
            accumulate_sensors: 5,
            iterations: 8000,
            learning_rate: 1e-3,
            final_lr_fraction: 0.1,
            adam_eps: 1.0,
            seed: 0,
        }
    }
}

impl RenderConfig {
    pub fn validate(&self) -> Result<(), RenderError> {
        let bad = |m: &str| Err(RenderError::InvalidConfig(m.to_string()));
        if self.n_rays == 0 || self.n_depth_samples == 0 {
            return bad("n_rays and n_depth_samples must be at least 1");
        }
        if self.accumulate_sensors == 0 {
            return bad("accumulate_sensors must be at least 1");
        }
        if !(self.zeta >= 0.0) {
            return bad("zeta must be non-negative");
        }
        for (name, v) in [
            ("lambda_sparse", self.lambda_sparse),
            ("lambda_tv_space", self.lambda_tv_space),
            ("lambda_tv_phase", self.lambda_tv_phase),
        ] {
            if !(v >= 0.0) {
                return Err(RenderError::InvalidConfig(format!("{name} must be non-negative")));
            }
        }
        for (name, v) in [
            ("uniform_direction_fraction", self.uniform_direction_fraction),
            ("uniform_range_fraction", self.uniform_range_fraction),
        ] {
            if !(0.0..=1.0).contains(&v) {
                return Err(RenderError::InvalidConfig(format!("{name} must lie in [0, 1]")));
            }
        }
        for (name, v) in [("d_reg", self.d_reg), ("fd_step", self.fd_step), ("unit_solid_angle", self.unit_solid_angle)] {
            if let Some(v) = v {
                if !(v > 0.0 && v.is_finite()) {
                    return Err(RenderError::InvalidConfig(format!("{name} must be positive")));
                }
            }
        }
        if !(self.adam_eps > 0.0) {
            return bad("adam_eps must be positive");
        }
        if !(self.learning_rate > 0.0) || !(self.final_lr_fraction > 0.0 && self.final_lr_fraction <= 1.0) {
            return bad("learning rate must be positive and final_lr_fraction in (0, 1]");
        }
        Ok(())
    }

    /// Resolve the model-dependent defaults. `reference_range` is the
    /// typical sensor-to-scene distance.
    pub fn settings(&self, model: &dyn SceneModel, reference_range: f64) -> ForwardSettings {
        let feature = model.feature_size();
        ForwardSettings {
            zeta: if self.occlusion_enabled { self.zeta } else { 0.0 },
            lambertian: self.lambertian_enabled,
            coherent: self.coherent,
            lambda_sparse: self.lambda_sparse,
            lambda_tv_space: self.lambda_tv_space,
            lambda_tv_phase: self.lambda_tv_phase,
            d_reg: self.d_reg.unwrap_or(feature),
            fd_step: self.fd_step.unwrap_or(feature / 2.0),
            unit_solid_angle: self.unit_solid_angle.unwrap_or_else(|| (feature / reference_range.max(feature)).powi(2)),
        }
    }

    fn lr_at(&self, step: usize, total_steps: usize) -> f64 {
        if total_steps <= 1 {
            return self.learning_rate;
        }
        self.learning_rate * self.final_lr_fraction.powf(step as f64 / (total_steps - 1) as f64)
    }
}

/// Mean distance from the transmitters to the centre of the scene bounds.
pub fn reference_range(measurements: &MeasurementSet) -> f64 {
    let c = measurements.scene_bounds.center();
    if measurements.is_empty() {
        return 1.0;
    }
    measurements.poses.iter().map(|p| p.tx_origin.distance(c)).sum::<f64>() / measurements.len() as f64
}

/// Semi-major axes whose ellipsoids can touch the scene bounds.
fn range_window(pose: &SensorPose, measurements: &MeasurementSet) -> (f64, f64) {
    let b = &measurements.scene_bounds;
    let near = |p| b.clamp(p).distance(p);
    let lo = ((near(pose.tx_origin) + near(pose.rx_origin)) / 2.0).max(pose.baseline() / 2.0);
    let hi = (b.max_distance_from(pose.tx_origin) + b.max_distance_from(pose.rx_origin)) / 2.0;
    (lo, hi)
}

/// Sorted, de-duplicated bins for one sensor: magnitude-weighted draws plus
/// a uniform share over bins that can see the scene.
fn sensor_bins(
    series: &crate::signal::AnalyticSeries,
    pose: &SensorPose,
    measurements: &MeasurementSet,
    cfg: &RenderConfig,
    seed: u64,
) -> Vec<usize> {
    let c = measurements.sound_speed_mps;
    let mut bins = sample_ranges(series, cfg.n_depth_samples, c, seed).bins;
    let n_uniform = (cfg.uniform_range_fraction * cfg.n_depth_samples as f64).round() as usize;
    if n_uniform > 0 {
        let (lo, hi) = range_window(pose, measurements);
        let to_bin = |r: f64| (2.0 * r / c - series.t0_s) * series.sample_rate_hz;
        let first = to_bin(lo).ceil().max(0.0) as usize;
        let last = (to_bin(hi).floor().max(0.0) as usize).min(series.len().saturating_sub(1));
        if first <= last {
            let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, 1));
            bins.extend((0..n_uniform).map(|_| rng.random_range(first..=last)));
        }
    }
    bins.sort_unstable();
    bins.dedup();
    bins
}

/// Loss of every step and the number of optimizer steps taken.
#[derive(Debug, Clone, PartialEq)]
pub struct ReconstructReport {
    /// Total loss of each sensor visit.
    pub loss_history: Vec<f64>,
    pub optimizer_steps: usize,
}

/// Fit `model` to analytic (deconvolved or matched-filtered) measurements.
///
/// Sensors are visited round-robin in a seeded order; gradients of
/// `accumulate_sensors` consecutive visits are averaged before each Adam
/// step. Targets are normalized by the global peak magnitude.
pub fn reconstruct(
    measurements: &MeasurementSet,
    model: &mut dyn SceneModel,
    cfg: &RenderConfig,
) -> Result<ReconstructReport, RenderError> {
    cfg.validate()?;
    if measurements.processing == Processing::Raw {
        return Err(RenderError::NonAnalyticInput);
    }
    let series = measurements.analytic().ok_or(RenderError::NonAnalyticInput)?;
    if series.is_empty() {
        return Err(RenderError::InvalidConfig("no measurements".into()));
    }
    let peak = series.iter().flat_map(|s| s.samples.iter().map(|z| z.norm())).fold(0.0, f64::max);
    let gain = if peak > 0.0 { 1.0 / peak } else { 1.0 };
    let settings = cfg.settings(model, reference_range(measurements));

    let mut order: Vec<usize> = (0..series.len()).collect();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(derive_seed(cfg.seed, 0x5e45)));

    let total_steps = cfg.iterations.div_ceil(cfg.accumulate_sensors);
    let mut adam = Adam::new(model.n_params(), AdamConfig { eps: cfg.adam_eps, ..AdamConfig::with_lr(cfg.learning_rate) });
    let mut grad = vec![0.0; model.n_params()];
    let mut pending = 0usize;
    let mut history = Vec::with_capacity(cfg.iterations);
    let window = (cfg.accumulate_sensors * 10).max(20);

    for it in 0..cfg.iterations {
        let sensor = order[it % order.len()];
        let pose = &measurements.poses[sensor];
        let s = &series[sensor];
        let iter_seed = derive_seed(cfg.seed, it as u64);
        let bins = sensor_bins(s, pose, measurements, cfg, derive_seed(iter_seed, 1));
        let half_d = pose.baseline() / 2.0;
        let (ranges, targets): (Vec<f64>, Vec<Complex64>) = bins
            .iter()
            .map(|&k| (measurements.sound_speed_mps * s.time_of(k) / 2.0, s.samples[k] * gain))
            .filter(|(r, _)| *r > half_d)
            .unzip();
        let dirs = sample_directions(
            pose,
            &*model,
            cfg.n_coarse_rays,
            cfg.n_rays,
            cfg.uniform_direction_fraction,
            derive_seed(iter_seed, 2),
        );
        let problem =
            SensorProblem { pose, ranges: &ranges, targets: &targets, directions: &dirs, reg_seed: derive_seed(iter_seed, 3) };
        let terms = sensor_loss(&*model, &problem, &settings, Some(&mut grad))?;
        let loss = terms.total;
        history.push(loss);
        if !loss.is_finite() {
            return Err(RenderError::DivergedLoss { iteration: it, loss, initial: history[0] });
        }
        if history.len() >= 2 * window {
            let first = history[..window].iter().sum::<f64>() / window as f64;
            let recent = history[history.len() - window..].iter().sum::<f64>() / window as f64;
            if recent > 10.0 * first {
                return Err(RenderError::DivergedLoss { iteration: it, loss: recent, initial: first });
            }
        }
        pending += 1;
        if pending == cfg.accumulate_sensors || it + 1 == cfg.iterations {
            for g in grad.iter_mut() {
                *g /= pending as f64;
            }
            adam.config.learning_rate = cfg.lr_at(adam.steps(), total_steps);
            adam.step(model.params_mut(), &grad);
            grad.iter_mut().for_each(|g| *g = 0.0);
            pending = 0;
        }
        if it % 100 == 0 {
            log::debug!("iteration {it}: loss {loss:.4e} (data {:.4e})", terms.data);
        }
    }
    Ok(ReconstructReport { loss_history: history, optimizer_steps: adam.steps() })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn config_defaults_and_validation() {
        let cfg = RenderConfig::default();
        cfg.validate().unwrap();
        assert_eq!(cfg.accumulate_sensors, 5);
        for bad in [
            RenderConfig { n_rays: 0, ..cfg.clone() },
            RenderConfig { zeta: -1.0, ..cfg.clone() },
            RenderConfig { d_reg: Some(0.0), ..cfg.clone() },
            RenderConfig { lambda_tv_phase: f64::NAN, ..cfg.clone() },
        ] {
            assert!(matches!(bad.validate(), Err(RenderError::InvalidConfig(_))));
        }
        let parsed: RenderConfig = toml::from_str("zeta = 2.0\ncoherent = false").unwrap();
        assert_eq!(parsed.zeta, 2.0);
        assert!(!parsed.coherent && parsed.n_rays == cfg.n_rays);
        assert!(toml::from_str::<RenderConfig>("zeta_typo = 1.0").is_err());
    }

    #[test]
    fn lr_schedule_endpoints() {
        let cfg = RenderConfig { learning_rate: 0.1, final_lr_fraction: 0.01, ..Default::default() };
        assert!((cfg.lr_at(0, 11) - 0.1).abs() < 1e-15);
        assert!((cfg.lr_at(10, 11) - 0.001).abs() < 1e-15);
    }
}
