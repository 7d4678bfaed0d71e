use super::{read_obj, IoError};
use crate::deconv::DeconvConfig;
use crate::geometry::{derive_seed, Aabb, Grid, Vec3};
use crate::metrics::EvalConfig;
use crate::render::RenderConfig;
use crate::scene::HashConfig;
use crate::signal::{make_lfm, Waveform, Window};
use crate::simulator::{
    airsas_trajectory, bistatic_trajectory, elevated_circle, shapes, Mesh, RenderOptions, SensorPose, TrajectoryKind,
};
use serde::{Deserialize, Serialize};
use std::path::Path;

/// Every knob of an experiment, read from TOML. Unknown keys are errors.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub simulation: SimulationConfig,
    pub deconv: DeconvConfig,
    pub reconstruction: ReconstructionConfig,
    pub render: RenderConfig,
    pub eval: EvalConfig,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct WaveformConfig {
    pub f_start_hz: f64,
    pub f_stop_hz: f64,
    pub duration_s: f64,
    pub sample_rate_hz: f64,
    pub window: Window,
}

impl Default for WaveformConfig {
    fn default() -> Self {
        WaveformConfig {
            f_start_hz: 10e3,
            f_stop_hz: 30e3,
            duration_s: 1e-3,
            sample_rate_hz: 100e3,
            window: Window::Tukey { ratio: 0.1 },
        }
    }
}

impl WaveformConfig {
    pub fn build(&self) -> Result<Waveform, IoError> {
        make_lfm(self.f_start_hz, self.f_stop_hz, self.duration_s, self.sample_rate_hz, self.window)
            .map_err(|e| IoError::Config(format!("waveform: {e}")))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum MeshSource {
    Sphere {
        center: Vec3,
        radius: f64,
        subdivisions: u32,
    },
    NotchedSphere {
        center: Vec3,
        radius: f64,
        notch_depth: f64,
        resolution: usize,
    },
    Box {
        min: Vec3,
        max: Vec3,
    },
    /// ASCII OBJ file, relative paths resolved against the config file.
    Obj {
        path: String,
    },
}

impl MeshSource {
    pub fn build(&self, base: &Path) -> Result<Mesh, IoError> {
        let mesh = match self {
            MeshSource::Sphere { center, radius, subdivisions } => shapes::icosphere(*center, *radius, *subdivisions),
            MeshSource::NotchedSphere { center, radius, notch_depth, resolution } => {
                shapes::sphere_with_notch(*center, *radius, *notch_depth, *resolution)
            }
            MeshSource::Box { min, max } => shapes::box_mesh(Aabb::new(*min, *max)),
            MeshSource::Obj { path } => return read_obj(&base.join(path)),
        };
        Ok(mesh)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum TrajectoryConfig {
    /// Turntable cylinder; see `airsas_trajectory`.
    Cylinder {
        pattern: TrajectoryKind,
        radius_m: f64,
        z_step_m: f64,
        n_angles: usize,
        n_heights: usize,
        beamwidth_rad: f64,
        keep_fraction: f64,
    },
    ElevatedCircle {
        radius_m: f64,
        height_m: f64,
        n_poses: usize,
        beamwidth_rad: f64,
    },
    Bistatic {
        start: Vec3,
        end: Vec3,
        n_poses: usize,
        tx_rx_offset_m: f64,
        depth_m: f64,
        beamwidth_rad: f64,
    },
}

impl TrajectoryConfig {
    pub fn build(&self) -> Result<Vec<SensorPose>, IoError> {
        let poses = match *self {
            TrajectoryConfig::Cylinder { pattern, radius_m, z_step_m, n_angles, n_heights, beamwidth_rad, keep_fraction } => {
                airsas_trajectory(pattern, radius_m, z_step_m, n_angles, n_heights, beamwidth_rad, keep_fraction)
            }
            TrajectoryConfig::ElevatedCircle { radius_m, height_m, n_poses, beamwidth_rad } => {
                elevated_circle(radius_m, height_m, n_poses, beamwidth_rad)
            }
            TrajectoryConfig::Bistatic { start, end, n_poses, tx_rx_offset_m, depth_m, beamwidth_rad } => {
                bistatic_trajectory(start, end, n_poses, tx_rx_offset_m, depth_m, beamwidth_rad)
            }
        };
        poses.map_err(|e| IoError::Config(format!("trajectory: {e}")))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SimulationConfig {
    pub mesh: MeshSource,
    pub trajectory: TrajectoryConfig,
    pub waveform: WaveformConfig,
    pub sound_speed_mps: f64,
    pub n_bins: usize,
    pub rays_per_pose: usize,
    pub snr_db: f64,
    pub seed: u64,
    pub options: RenderOptions,
}

impl Default for SimulationConfig {
    fn default() -> Self {
        SimulationConfig {
            mesh: MeshSource::NotchedSphere { center: Vec3::ZERO, radius: 0.1, notch_depth: 0.4, resolution: 64 },
            trajectory: TrajectoryConfig::Cylinder {
                pattern: TrajectoryKind::Circular,
                radius_m: 0.6,
                z_step_m: 0.08,
                n_angles: 72,
                n_heights: 5,
                beamwidth_rad: 0.8,
                keep_fraction: 1.0,
            },
            waveform: WaveformConfig::default(),
            sound_speed_mps: 343.0,
            n_bins: 1000,
            rays_per_pose: 50_000,
            snr_db: 20.0,
            seed: 1,
            options: RenderOptions::default(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ModelKind {
    Voxel,
    Hash,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BoundsConfig {
    pub min: Vec3,
    pub max: Vec3,
}

/// Volume shared by backprojection, the scene model and evaluation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ReconstructionConfig {
    pub bounds: BoundsConfig,
    pub grid_dims: [usize; 3],
    pub model: ModelKind,
    /// Standard deviation of the voxel model's complex Gaussian start.
    pub init_std: f64,
    pub init_seed: u64,
    pub hash: HashConfig,
}

impl Default for ReconstructionConfig {
    fn default() -> Self {
        ReconstructionConfig {
            bounds: BoundsConfig { min: Vec3::splat(-0.16), max: Vec3::splat(0.16) },
            grid_dims: [64; 3],
            model: ModelKind::Voxel,
            init_std: 1e-5,
            init_seed: 2,
            hash: HashConfig::default(),
        }
    }
}

impl ReconstructionConfig {
    pub fn aabb(&self) -> Aabb {
        Aabb::new(self.bounds.min, self.bounds.max)
    }

    pub fn grid(&self) -> Result<Grid, IoError> {
        Grid::new(self.grid_dims, self.aabb())
            .ok_or_else(|| IoError::Config(format!("bad grid {:?} over {:?}", self.grid_dims, self.bounds)))
    }
}

impl ExperimentConfig {
    pub fn from_toml(text: &str) -> Result<Self, IoError> {
        toml::from_str(text).map_err(|e| IoError::Config(e.to_string()))
    }

    pub fn load(path: &Path) -> Result<Self, IoError> {
        let text = std::fs::read_to_string(path).map_err(|e| IoError::io(path, e))?;
        Self::from_toml(&text)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    /// Replace every stage seed with one derived from `master`.
    pub fn override_seeds(&mut self, master: u64) {
        self.simulation.seed = derive_seed(master, 0);
        self.deconv.seed = derive_seed(master, 1);
        self.reconstruction.init_seed = derive_seed(master, 2);
        self.render.seed = derive_seed(master, 3);
        self.eval.seed = derive_seed(master, 4);
    }

    pub fn seeds(&self) -> Vec<(&'static str, u64)> {
        vec![
            ("simulation", self.simulation.seed),
            ("deconv", self.deconv.seed),
            ("init", self.reconstruction.init_seed),
            ("render", self.render.seed),
            ("eval", self.eval.seed),
        ]
    }

    pub fn validate(&self) -> Result<(), IoError> {
        self.render.validate().map_err(|e| IoError::Config(e.to_string()))?;
        self.reconstruction.grid()?;
        Ok(())
    }
}
