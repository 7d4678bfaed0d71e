use crate::geometry::Vec3;
use crate::scene::SceneModel;
use crate::signal::AnalyticSeries;
use crate::simulator::SensorPose;
use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Range draws from a measurement's magnitude.
#[derive(Debug, Clone, PartialEq)]
pub struct RangeSamples {
    pub bins: Vec<usize>,
    /// Semi-major axis `c·t/2` of each drawn bin.
    pub ranges: Vec<f64>,
    /// Set when every magnitude was zero and bins were drawn uniformly.
    pub uniform_fallback: bool,
}

/// Draw `n` bins i.i.d. with probability proportional to `|s_pd|`.
pub fn sample_ranges(s_pd: &AnalyticSeries, n: usize, sound_speed: f64, seed: u64) -> RangeSamples {
    let mags = s_pd.envelope();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (bins, uniform_fallback) = match WeightedIndex::new(&mags) {
        Ok(dist) => ((0..n).map(|_| dist.sample(&mut rng)).collect::<Vec<usize>>(), false),
        Err(_) => ((0..n).map(|_| rng.random_range(0..mags.len())).collect(), true),
    };
    let ranges = bins.iter().map(|&k: &usize| sound_speed * s_pd.time_of(k) / 2.0).collect();
    RangeSamples { bins, ranges, uniform_fallback }
}

/// Transmit directions with Monte Carlo weights in steradians: summing
/// `weight · f(dir)` estimates the integral of `f` over the beam cone.
#[derive(Debug, Clone, PartialEq)]
pub struct DirectionSamples {
    pub dirs: Vec<Vec3>,
    pub weights: Vec<f64>,
    pub uniform_fallback: bool,
}

impl DirectionSamples {
    pub fn uniform(pose: &SensorPose, n: usize, rng: &mut impl Rng) -> Self {
        let dirs = (0..n).map(|_| pose.cone_direction(rng.random(), rng.random())).collect();
        DirectionSamples { dirs, weights: vec![pose.solid_angle() / n as f64; n], uniform_fallback: true }
    }

    pub fn len(&self) -> usize {
        self.dirs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.dirs.is_empty()
    }
}

/// Equal-solid-angle cells over the beam cone: `nu` bands in cos θ by `nv`
/// azimuth sectors.
#[derive(Debug, Clone, Copy)]
struct ConeCells {
    nu: usize,
    nv: usize,
}

impl ConeCells {
    fn new(n: usize) -> Self {
        let nu = ((n as f64).sqrt().round() as usize).max(1);
        ConeCells { nu, nv: (n / nu).max(1) }
    }

    fn len(&self) -> usize {
        self.nu * self.nv
    }

    fn coords(&self, cell: usize, du: f64, dv: f64) -> (f64, f64) {
        let (a, b) = (cell / self.nv, cell % self.nv);
        ((a as f64 + du) / self.nu as f64, (b as f64 + dv) / self.nv as f64)
    }

    /// One 3×3 box pass, clamped in u and periodic in azimuth.
    fn smooth(&self, w: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; w.len()];
        for a in 0..self.nu {
            for b in 0..self.nv {
                let mut cells = Vec::with_capacity(9);
                for da in -1i64..=1 {
                    let aa = a as i64 + da;
                    if aa < 0 || aa >= self.nu as i64 {
                        continue;
                    }
                    for db in -1i64..=1 {
                        let bb = (b as i64 + db).rem_euclid(self.nv as i64) as usize;
                        let idx = aa as usize * self.nv + bb;
                        if !cells.contains(&idx) {
                            cells.push(idx);
                        }
                    }
                }
                out[a * self.nv + b] = cells.iter().map(|&i| w[i]).sum::<f64>() / cells.len() as f64;
            }
        }
        out
    }
}

/// Integral of `|σ|` along a ray across the scene bounds.
fn ray_magnitude(model: &dyn SceneModel, origin: Vec3, dir: Vec3, steps: usize) -> f64 {
    let inv = Vec3::new(1.0 / dir.x, 1.0 / dir.y, 1.0 / dir.z);
    let Some((t0, t1)) = model.bounds().intersect_ray(origin, inv) else {
        return 0.0;
    };
    let t0 = t0.max(0.0);
    if t1 <= t0 {
        return 0.0;
    }
    let dt = (t1 - t0) / steps as f64;
    (0..steps).map(|i| model.query(origin + dir * (t0 + (i as f64 + 0.5) * dt)).norm()).sum::<f64>() * dt
}

/// Priority direction sampling. Coarse rays through the centres of
/// `n_coarse` equal-solid-angle cells measure the integrated scene
/// magnitude; after one smoothing pass, dense rays pick cells in proportion
/// to it, mixed with a `uniform_fraction` share of uniform cell choices,
/// and land uniformly inside the chosen cell.
pub fn sample_directions(
    pose: &SensorPose,
    model: &dyn SceneModel,
    n_coarse: usize,
    n_dense: usize,
    uniform_fraction: f64,
    seed: u64,
) -> DirectionSamples {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    if n_coarse == 0 {
        return DirectionSamples::uniform(pose, n_dense, &mut rng);
    }
    let cells = ConeCells::new(n_coarse);
    let coarse: Vec<f64> = (0..cells.len())
        .map(|c| {
            let (u, v) = cells.coords(c, 0.5, 0.5);
            ray_magnitude(model, pose.tx_origin, pose.cone_direction(u, v), 32)
        })
        .collect();
    let smooth = cells.smooth(&coarse);
    let total: f64 = smooth.iter().sum();
    if !(total > 0.0) || !total.is_finite() {
        return DirectionSamples::uniform(pose, n_dense, &mut rng);
    }
    let n_cells = cells.len() as f64;
    let f = uniform_fraction.clamp(0.0, 1.0);
    let probs: Vec<f64> = smooth.iter().map(|w| (1.0 - f) * w / total + f / n_cells).collect();
    let dist = WeightedIndex::new(&probs).expect("probabilities are positive");
    let omega = pose.solid_angle();
    let mut dirs = Vec::with_capacity(n_dense);
    let mut weights = Vec::with_capacity(n_dense);
    for _ in 0..n_dense {
        let c = dist.sample(&mut rng);
        let (u, v) = cells.coords(c, rng.random(), rng.random());
        dirs.push(pose.cone_direction(u, v));
        weights.push(omega / (n_cells * n_dense as f64 * probs[c]));
    }
    DirectionSamples { dirs, weights, uniform_fallback: false }
}
