use super::{Bvh, MeasurementSet, Mesh, Processing, SensorPose, SeriesData, SimError};
use crate::geometry::{derive_seed, Vec3};
use crate::signal::{add_noise, convolve, SignalError, TimeSeries, Waveform};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

/// Fractional part of the golden ratio; drives the azimuth lattice.
const GOLDEN: f64 = 0.618_033_988_749_894_8;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
#[derive(Default)]
pub struct RenderOptions {
    /// Scale each return by `1/(R_T·R_R)`.
    pub spreading: bool,
    /// Add a large upward-facing plane at this height under the mesh.
    pub ground_plane_z: Option<f64>,
}

/// Transient `h(t)` for one pose, `n_bins` long starting at `t = 0`.
pub fn render_transient(
    mesh: &Mesh,
    pose: &SensorPose,
    sound_speed: f64,
    fs: f64,
    n_bins: usize,
    rays_per_pose: usize,
    seed: u64,
) -> Result<TimeSeries, SimError> {
    if mesh.is_empty() {
        return Err(SimError::EmptyMesh);
    }
    let bvh = Bvh::build(mesh);
    trace_pose(&bvh, pose, 0, sound_speed, fs, n_bins, rays_per_pose, seed, &RenderOptions::default())
}

#[allow(clippy::too_many_arguments)]
fn trace_pose(
    bvh: &Bvh,
    pose: &SensorPose,
    pose_index: usize,
    sound_speed: f64,
    fs: f64,
    n_bins: usize,
    rays: usize,
    seed: u64,
    opts: &RenderOptions,
) -> Result<TimeSeries, SimError> {
    if !(sound_speed > 0.0) {
        return Err(SignalError::NonPositiveSoundSpeed(sound_speed).into());
    }
    if rays == 0 {
        return Err(SimError::InvalidCounts("rays_per_pose=0".into()));
    }
    let mut h = TimeSeries::new(vec![0.0; n_bins], fs, 0.0)?;
    let weight = pose.solid_angle() / rays as f64;
    let bistatic = !pose.is_monostatic();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (shift_u, shift_v): (f64, f64) = (rng.random(), rng.random());
    for k in 0..rays {
        // Randomly shifted rank-1 lattice: stratified in cos(angle), well
        // spread in azimuth.
        let u = ((k as f64 + 0.5) / rays as f64 + shift_u).fract();
        let v = (k as f64 * GOLDEN + shift_v).fract();
        let dir = pose.cone_direction(u, v);
        let Some(hit) = bvh.first_hit(pose.tx_origin, dir, 1e-9, f64::INFINITY) else {
            continue;
        };
        let cosine = -hit.normal.dot(dir);
        if cosine <= 0.0 {
            continue;
        }
        let r_t = hit.distance;
        let r_r = hit.point.distance(pose.rx_origin);
        if bistatic {
            let back = (pose.rx_origin - hit.point) / r_r.max(1e-300);
            let lift = hit.point + hit.normal * 1e-9;
            if back.dot(hit.normal) <= 0.0 || bvh.occluded(lift, back, 1e-9, r_r - 1e-9) {
                continue;
            }
        }
        let bin = ((r_t + r_r) / sound_speed * fs).round() as usize;
        if bin >= n_bins {
            return Err(SimError::SceneOutOfRange { pose: pose_index, bin, n_bins });
        }
        let spread = if opts.spreading { 1.0 / (r_t * r_r) } else { 1.0 };
        h.samples[bin] += cosine * weight * spread;
    }
    Ok(h)
}

fn ground_plane(mesh: &Mesh, z: f64) -> Mesh {
    let b = mesh.bounds();
    let c = b.center();
    let half = 10.0 * b.extent().x.max(b.extent().y).max(1e-3);
    let v = vec![
        Vec3::new(c.x - half, c.y - half, z),
        Vec3::new(c.x + half, c.y - half, z),
        Vec3::new(c.x + half, c.y + half, z),
        Vec3::new(c.x - half, c.y + half, z),
    ];
    Mesh::new(v, vec![[0, 1, 2], [0, 2, 3]]).expect("plane is well formed")
}

/// Render every pose, convolve with the pulse (truncated to `n_bins`) and
/// add noise at `snr_db`. Poses that see nothing stay exactly zero.
#[allow(clippy::too_many_arguments)]
pub fn simulate_measurements(
    mesh: &Mesh,
    poses: &[SensorPose],
    waveform: &Waveform,
    sound_speed: f64,
    fs: f64,
    n_bins: usize,
    rays_per_pose: usize,
    snr_db: f64,
    seed: u64,
    opts: &RenderOptions,
) -> Result<MeasurementSet, SimError> {
    if mesh.is_empty() {
        return Err(SimError::EmptyMesh);
    }
    if waveform.sample_rate_hz != fs {
        return Err(SignalError::SampleRateMismatch(waveform.sample_rate_hz, fs).into());
    }
    let scene_bounds = mesh.bounds();
    let scene = match opts.ground_plane_z {
        Some(z) => mesh.merged(&ground_plane(mesh, z)),
        None => mesh.clone(),
    };
    let bvh = Bvh::build(&scene);
    let series = poses
        .par_iter()
        .enumerate()
        .map(|(i, pose)| {
            let ray_seed = derive_seed(seed, 2 * i as u64);
            let h = trace_pose(&bvh, pose, i, sound_speed, fs, n_bins, rays_per_pose, ray_seed, opts)?;
            let mut samples = convolve(&h.samples, &waveform.samples);
            samples.truncate(n_bins);
            let s = TimeSeries::new(samples, fs, 0.0)?;
            if s.power() == 0.0 {
                return Ok(s);
            }
            Ok(add_noise(&s, snr_db, derive_seed(seed, 2 * i as u64 + 1))?)
        })
        .collect::<Result<Vec<_>, SimError>>()?;
    MeasurementSet::new(poses.to_vec(), SeriesData::Real(series), waveform.clone(), sound_speed, scene_bounds, Processing::Raw)
}
