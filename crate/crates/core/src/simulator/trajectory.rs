use super::{SensorPose, SimError};
use crate::geometry::Vec3;
use serde::{Deserialize, Serialize};
use std::f64::consts::TAU;

/// Collection geometry on the AirSAS-style turntable cylinder.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TrajectoryKind {
    /// Every angle at every height.
    Circular,
    /// A single ramp: angle advances each pose while height climbs through
    /// all levels over the retained poses.
    Helical,
    /// Every k-th angle (k = round(1/keep_fraction)) at all heights.
    SparseAngles,
}

/// Monostatic poses on a cylinder around the z axis, boresight horizontal
/// and pointing at the axis. Heights are centred on z = 0.
///
/// `keep_fraction` applies to `Helical` and `SparseAngles`; `Circular`
/// always returns the dense `n_angles × n_heights` grid.
pub fn airsas_trajectory(
    kind: TrajectoryKind,
    radius_m: f64,
    z_step_m: f64,
    n_angles: usize,
    n_heights: usize,
    beamwidth_rad: f64,
    keep_fraction: f64,
) -> Result<Vec<SensorPose>, SimError> {
    if n_angles == 0 || n_heights == 0 {
        return Err(SimError::InvalidCounts(format!("n_angles={n_angles}, n_heights={n_heights}")));
    }
    if !(keep_fraction > 0.0 && keep_fraction <= 1.0) {
        return Err(SimError::InvalidCounts(format!("keep_fraction={keep_fraction}")));
    }
    if !(radius_m > 0.0) {
        return Err(SimError::InvalidCounts(format!("radius_m={radius_m}")));
    }
    let z_mid = (n_heights as f64 - 1.0) / 2.0;
    let pose = |a: usize, h: f64| {
        let theta = TAU * a as f64 / n_angles as f64;
        let (s, c) = theta.sin_cos();
        let origin = Vec3::new(radius_m * c, radius_m * s, (h - z_mid) * z_step_m);
        SensorPose::monostatic(origin, Vec3::new(-c, -s, 0.0), beamwidth_rad)
    };
    let poses = match kind {
        TrajectoryKind::Circular => (0..n_heights)
            .flat_map(|h| (0..n_angles).map(move |a| (a, h)))
            .map(|(a, h)| pose(a, h as f64))
            .collect::<Result<Vec<_>, _>>()?,
        TrajectoryKind::Helical => {
            let total = n_angles * n_heights;
            let k = ((keep_fraction * total as f64).round() as usize).max(1);
            (0..k)
                .map(|i| {
                    let h = (i * n_heights / k) as f64;
                    pose(i % n_angles, h)
                })
                .collect::<Result<Vec<_>, _>>()?
        }
        TrajectoryKind::SparseAngles => {
            let step = ((1.0 / keep_fraction).round() as usize).max(1);
            (0..n_heights)
                .flat_map(|h| (0..n_angles).step_by(step).map(move |a| (a, h)))
                .map(|(a, h)| pose(a, h as f64))
                .collect::<Result<Vec<_>, _>>()?
        }
    };
    Ok(poses)
}

/// Monostatic poses on a horizontal circle of `radius_m` at `height_m`
/// above the origin, each looking at the origin.
pub fn elevated_circle(radius_m: f64, height_m: f64, n_poses: usize, beamwidth_rad: f64) -> Result<Vec<SensorPose>, SimError> {
    if n_poses == 0 || !(radius_m > 0.0) {
        return Err(SimError::InvalidCounts(format!("n_poses={n_poses}, radius_m={radius_m}")));
    }
    (0..n_poses)
        .map(|k| {
            let (s, c) = (TAU * k as f64 / n_poses as f64).sin_cos();
            let origin = Vec3::new(radius_m * c, radius_m * s, height_m);
            SensorPose::monostatic(origin, -origin, beamwidth_rad)
        })
        .collect()
}

/// Spatial sampling check of `spacing_m` against half the shortest wavelength.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SpacingCheck {
    pub spacing_m: f64,
    pub limit_m: f64,
    pub satisfied: bool,
}

pub fn spacing_check(spacing_m: f64, max_frequency_hz: f64, sound_speed_mps: f64) -> SpacingCheck {
    let limit_m = sound_speed_mps / max_frequency_hz / 2.0;
    SpacingCheck { spacing_m, limit_m, satisfied: spacing_m <= limit_m }
}

/// Straight track from `start` to `end`. The transmitter runs along the
/// track at height `depth_m` above the `z = 0` scene plane (the track's own
/// z values are ignored), looking straight down. The receiver trails
/// `tx_rx_offset_m` ahead of the transmitter along the track direction.
pub fn bistatic_trajectory(
    start: Vec3,
    end: Vec3,
    n_poses: usize,
    tx_rx_offset_m: f64,
    depth_m: f64,
    beamwidth_rad: f64,
) -> Result<Vec<SensorPose>, SimError> {
    if n_poses == 0 {
        return Err(SimError::InvalidCounts("n_poses=0".into()));
    }
    if !(tx_rx_offset_m >= 0.0) {
        return Err(SimError::InvalidCounts(format!("tx_rx_offset_m={tx_rx_offset_m}")));
    }
    let a = Vec3::new(start.x, start.y, depth_m);
    let b = Vec3::new(end.x, end.y, depth_m);
    let along = (b - a).try_normalize().unwrap_or(Vec3::X);
    (0..n_poses)
        .map(|i| {
            let f = if n_poses == 1 { 0.0 } else { i as f64 / (n_poses - 1) as f64 };
            let tx = a + (b - a) * f;
            SensorPose::new(tx, tx + along * tx_rx_offset_m, -Vec3::Z, beamwidth_rad)
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn elevated_circle_looks_at_origin() {
        let poses = elevated_circle(0.8, 0.8, 8, 0.5).unwrap();
        assert_eq!(poses.len(), 8);
        for p in &poses {
            assert!((p.tx_origin.z - 0.8).abs() < 1e-12);
            assert!((p.boresight + p.tx_origin.normalize()).norm() < 1e-12);
        }
        assert!(elevated_circle(0.8, 0.0, 0, 0.5).is_err());
    }

    #[test]
    fn circular_grid() {
        let p = airsas_trajectory(TrajectoryKind::Circular, 1.0, 0.005, 360, 10, 0.5, 1.0).unwrap();
        assert_eq!(p.len(), 3600);
        let angle = p[1].tx_origin.y.atan2(p[1].tx_origin.x) - p[0].tx_origin.y.atan2(p[0].tx_origin.x);
        assert!((angle.to_degrees() - 1.0).abs() < 1e-9);
        assert!((p[360].tx_origin.z - p[0].tx_origin.z - 0.005).abs() < 1e-12);
        for q in &p {
            assert!((q.tx_origin.x.hypot(q.tx_origin.y) - 1.0).abs() < 1e-12);
            assert!(q.boresight.dot(Vec3::new(q.tx_origin.x, q.tx_origin.y, 0.0)) < 0.0);
        }
    }

    #[test]
    fn helical_and_sparse_counts() {
        let h = airsas_trajectory(TrajectoryKind::Helical, 1.0, 0.005, 360, 10, 0.5, 0.1).unwrap();
        assert_eq!(h.len(), 360);
        // Heights never decrease along the helix and cover all levels.
        assert!(h.windows(2).all(|w| w[1].tx_origin.z >= w[0].tx_origin.z));
        assert!((h[359].tx_origin.z - h[0].tx_origin.z - 9.0 * 0.005).abs() < 1e-12);
        let s = airsas_trajectory(TrajectoryKind::SparseAngles, 1.0, 0.005, 360, 10, 0.5, 0.1).unwrap();
        assert_eq!(s.len(), 360);
    }

    #[test]
    fn invalid_counts() {
        assert!(airsas_trajectory(TrajectoryKind::Circular, 1.0, 0.005, 0, 10, 0.5, 1.0).is_err());
        assert!(airsas_trajectory(TrajectoryKind::Circular, 1.0, 0.005, 10, 10, 0.5, 0.0).is_err());
        assert!(bistatic_trajectory(Vec3::ZERO, Vec3::X, 0, 0.1, 1.0, 0.5).is_err());
    }

    #[test]
    fn air_spacing_limit() {
        let c = spacing_check(0.005, 30e3, 343.0);
        assert!((c.limit_m - 0.0057166).abs() < 1e-6);
        assert!(c.satisfied);
        assert!(!spacing_check(0.006, 30e3, 343.0).satisfied);
    }

    #[test]
    fn bistatic_offsets() {
        let p = bistatic_trajectory(Vec3::ZERO, Vec3::new(10.0, 0.0, 0.0), 100, 0.2, 1.5, 0.5).unwrap();
        assert!(p.iter().all(|q| (q.baseline() - 0.2).abs() < 1e-12));
        let mono = bistatic_trajectory(Vec3::ZERO, Vec3::new(10.0, 0.0, 0.0), 5, 0.0, 1.5, 0.5).unwrap();
        assert!(mono.iter().all(|q| q.is_monostatic()));
        let one = bistatic_trajectory(Vec3::ZERO, Vec3::Y, 1, 0.3, 1.5, std::f64::consts::FRAC_PI_6).unwrap();
        assert_eq!(one.len(), 1);
        assert!((one[0].baseline() - 0.3).abs() < 1e-12);
    }
}
