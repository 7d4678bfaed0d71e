//! Coherent time-domain backprojection.
//!
//! Each voxel sums, over every pose whose beam contains it, the analytic
//! measurement sampled at the voxel's two-way travel time.

use crate::geometry::{Grid, Vec3};
use crate::simulator::MeasurementSet;
use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum BeamformError {
    #[error("backprojection needs analytic (complex) series")]
    NonAnalyticInput,
    #[error("voxel {voxel} needs time {time_s} s from pose {pose}, past the end of the record")]
    VoxelOutOfRange { voxel: usize, pose: usize, time_s: f64 },
    #[error("volume has {got} voxels but the grid needs {want}")]
    SizeMismatch { got: usize, want: usize },
}

/// Complex voxel volume, x fastest.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReconVolume {
    pub grid: Grid,
    pub voxels: Vec<Complex64>,
}

impl ReconVolume {
    pub fn new(grid: Grid, voxels: Vec<Complex64>) -> Result<Self, BeamformError> {
        if voxels.len() != grid.len() {
            return Err(BeamformError::SizeMismatch { got: voxels.len(), want: grid.len() });
        }
        Ok(ReconVolume { grid, voxels })
    }

    pub fn zeros(grid: Grid) -> Self {
        ReconVolume { grid, voxels: vec![Complex64::new(0.0, 0.0); grid.len()] }
    }

    pub fn magnitudes(&self) -> Vec<f64> {
        self.voxels.iter().map(|v| v.norm()).collect()
    }

    /// Magnitudes scaled into [0, 1] by the peak (all zero stays zero).
    pub fn normalized_magnitudes(&self) -> Vec<f64> {
        let m = self.magnitudes();
        let peak = m.iter().cloned().fold(0.0, f64::max);
        if peak > 0.0 {
            m.into_iter().map(|v| v / peak).collect()
        } else {
            m
        }
    }

    /// Index and centre of the voxel with the largest magnitude.
    pub fn argmax(&self) -> (usize, Vec3) {
        let mut best = 0;
        for (i, v) in self.voxels.iter().enumerate() {
            if v.norm() > self.voxels[best].norm() {
                best = i;
            }
        }
        (best, self.grid.center_of(best))
    }
}

/// Backproject analytic measurements onto the voxel centres of `grid`.
///
/// Samples are linearly interpolated in time. Poses whose beam does not
/// contain a voxel skip it.
pub fn backproject(measurements: &MeasurementSet, grid: &Grid) -> Result<ReconVolume, BeamformError> {
    let series = measurements.analytic().ok_or(BeamformError::NonAnalyticInput)?;
    let c = measurements.sound_speed_mps;
    let cos_half: Vec<f64> = measurements.poses.iter().map(|p| p.cos_half_angle() - 1e-12).collect();
    let voxels = (0..grid.len())
        .into_par_iter()
        .map(|v| {
            let x = grid.center_of(v);
            let mut acc = Complex64::new(0.0, 0.0);
            for (n, (pose, s)) in measurements.poses.iter().zip(series).enumerate() {
                let to_x = x - pose.tx_origin;
                let r_t = to_x.norm();
                if !(to_x.dot(pose.boresight) >= cos_half[n] * r_t) || r_t == 0.0 {
                    continue;
                }
                let t = (r_t + x.distance(pose.rx_origin)) / c;
                let pos = (t - s.t0_s) * s.sample_rate_hz;
                if pos > (s.len() - 1) as f64 {
                    return Err(BeamformError::VoxelOutOfRange { voxel: v, pose: n, time_s: t });
                }
                acc += s.sample_at(t);
            }
            Ok(acc)
        })
        .collect::<Result<Vec<_>, _>>()?;
    Ok(ReconVolume { grid: *grid, voxels })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::Aabb;
    use crate::signal::{AnalyticSeries, Waveform};
    use crate::simulator::{Processing, SensorPose, SeriesData};

    fn single_pose_set(samples: Vec<Complex64>) -> MeasurementSet {
        let fs = 1e5;
        let pose = SensorPose::monostatic(Vec3::new(-1.0, 0.0, 0.0), Vec3::X, std::f64::consts::PI).unwrap();
        MeasurementSet::new(
            vec![pose],
            SeriesData::Analytic(vec![AnalyticSeries::new(samples, fs, 0.0).unwrap()]),
            Waveform::impulse(fs),
            343.0,
            Aabb::cube(Vec3::ZERO, 0.5),
            Processing::Matched,
        )
        .unwrap()
    }

    #[test]
    fn impulse_projects_onto_sphere() {
        let k = 583; // r ≈ 1.0 m
        let mut s = vec![Complex64::new(0.0, 0.0); 1024];
        s[k] = Complex64::new(1.0, 0.0);
        let set = single_pose_set(s);
        let grid = Grid::new([32; 3], Aabb::cube(Vec3::ZERO, 0.5)).unwrap();
        let vol = backproject(&set, &grid).unwrap();
        let r0 = 343.0 * k as f64 / 1e5 / 2.0;
        let diag = grid.pitch().norm();
        let mut count = 0;
        for (i, v) in vol.voxels.iter().enumerate() {
            if v.norm() > 0.0 {
                count += 1;
                let r = grid.center_of(i).distance(Vec3::new(-1.0, 0.0, 0.0));
                assert!((r - r0).abs() <= diag, "voxel at {r} vs shell {r0}");
            }
        }
        assert!(count > 0);
    }

    #[test]
    fn zero_in_zero_out() {
        let set = single_pose_set(vec![Complex64::new(0.0, 0.0); 1024]);
        let grid = Grid::new([8; 3], Aabb::cube(Vec3::ZERO, 0.5)).unwrap();
        assert!(backproject(&set, &grid).unwrap().voxels.iter().all(|v| v.norm() == 0.0));
    }

    #[test]
    fn real_input_rejected() {
        let mut set = single_pose_set(vec![Complex64::new(0.0, 0.0); 16]);
        set.series = SeriesData::Real(vec![crate::signal::TimeSeries::zeros(16, 1e5, 0.0)]);
        let grid = Grid::new([2; 3], Aabb::cube(Vec3::ZERO, 0.5)).unwrap();
        assert_eq!(backproject(&set, &grid).unwrap_err(), BeamformError::NonAnalyticInput);
    }

    #[test]
    fn short_record_reports_range() {
        let set = single_pose_set(vec![Complex64::new(0.0, 0.0); 16]);
        let grid = Grid::new([2; 3], Aabb::cube(Vec3::ZERO, 0.5)).unwrap();
        assert!(matches!(backproject(&set, &grid).unwrap_err(), BeamformError::VoxelOutOfRange { .. }));
    }
}
