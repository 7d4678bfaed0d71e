//! Single-bounce transient time-of-flight simulation over triangle meshes.
//!
//! A pose fires stratified rays uniformly (in solid angle) through its beam
//! cone, keeps the first front-facing triangle each ray hits, and deposits
//! a Lambertian weight into the time bin of the two-way path. Convolving the
//! transient with the transmitted pulse gives a raw measurement.

mod bvh;
mod mesh;
pub mod shapes;
mod trajectory;
mod transient;

pub use bvh::{intersect_triangle, Bvh, Hit};
pub use mesh::{Mesh, MeshError};
pub use trajectory::{airsas_trajectory, bistatic_trajectory, elevated_circle, spacing_check, SpacingCheck, TrajectoryKind};
pub use transient::{render_transient, simulate_measurements, RenderOptions};

use crate::geometry::{Aabb, Vec3};
use crate::signal::{AnalyticSeries, SignalError, TimeSeries, Waveform};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::f64::consts::{PI, TAU};

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum SimError {
    #[error("mesh has no triangles")]
    EmptyMesh,
    #[error("pose {pose}: return at bin {bin} exceeds the {n_bins}-bin record")]
    SceneOutOfRange { pose: usize, bin: usize, n_bins: usize },
    #[error("invalid counts: {0}")]
    InvalidCounts(String),
    #[error("invalid pose: {0}")]
    InvalidPose(String),
    #[error("invalid measurement set: {0}")]
    InvalidMeasurements(String),
    #[error(transparent)]
    Mesh(#[from] MeshError),
    #[error(transparent)]
    Signal(#[from] SignalError),
}

/// Transmitter/receiver positions plus the transmit beam cone.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SensorPose {
    pub tx_origin: Vec3,
    pub rx_origin: Vec3,
    pub boresight: Vec3,
    /// Full cone angle; points within half of it from boresight are lit.
    pub beamwidth_rad: f64,
}

impl SensorPose {
    pub fn new(tx_origin: Vec3, rx_origin: Vec3, boresight: Vec3, beamwidth_rad: f64) -> Result<Self, SimError> {
        let boresight = boresight.try_normalize().ok_or_else(|| SimError::InvalidPose("zero boresight".into()))?;
        if !(beamwidth_rad > 0.0 && beamwidth_rad <= PI) {
            return Err(SimError::InvalidPose(format!("beamwidth {beamwidth_rad} rad")));
        }
        if !tx_origin.is_finite() || !rx_origin.is_finite() {
            return Err(SimError::InvalidPose("non-finite origin".into()));
        }
        Ok(SensorPose { tx_origin, rx_origin, boresight, beamwidth_rad })
    }

    pub fn monostatic(origin: Vec3, boresight: Vec3, beamwidth_rad: f64) -> Result<Self, SimError> {
        Self::new(origin, origin, boresight, beamwidth_rad)
    }

    /// Transmitter to receiver distance `d`.
    pub fn baseline(&self) -> f64 {
        self.tx_origin.distance(self.rx_origin)
    }

    pub fn is_monostatic(&self) -> bool {
        self.baseline() < 1e-12
    }

    pub fn cos_half_angle(&self) -> f64 {
        (self.beamwidth_rad / 2.0).cos()
    }

    /// Solid angle of the beam cone in steradians.
    pub fn solid_angle(&self) -> f64 {
        TAU * (1.0 - self.cos_half_angle())
    }

    /// Rectangular transmit directivity.
    pub fn in_beam(&self, x: Vec3) -> bool {
        match (x - self.tx_origin).try_normalize() {
            Some(d) => d.dot(self.boresight) >= self.cos_half_angle() - 1e-12,
            None => false,
        }
    }

    /// Two-way path length `|x - o_T| + |x - o_R|`.
    pub fn path_length(&self, x: Vec3) -> f64 {
        x.distance(self.tx_origin) + x.distance(self.rx_origin)
    }

    /// Map `(u, v) ∈ [0,1)²` to a direction in the beam cone, uniform in
    /// solid angle: `u` sets the cosine to boresight, `v` the azimuth.
    pub fn cone_direction(&self, u: f64, v: f64) -> Vec3 {
        let cos_t = 1.0 - u * (1.0 - self.cos_half_angle());
        let sin_t = (1.0 - cos_t * cos_t).max(0.0).sqrt();
        let (s, c) = (TAU * v).sin_cos();
        let (e1, e2) = self.boresight.orthonormal_basis();
        (e1 * (sin_t * c) + e2 * (sin_t * s) + self.boresight * cos_t).normalize()
    }

    /// Inverse of [`cone_direction`](Self::cone_direction) for in-cone directions.
    pub fn cone_coordinates(&self, dir: Vec3) -> (f64, f64) {
        let (e1, e2) = self.boresight.orthonormal_basis();
        let cos_t = dir.dot(self.boresight).clamp(-1.0, 1.0);
        let u = ((1.0 - cos_t) / (1.0 - self.cos_half_angle())).clamp(0.0, 1.0);
        let v = dir.dot(e2).atan2(dir.dot(e1)).rem_euclid(TAU) / TAU;
        (u, v)
    }
}

/// What stage of processing a measurement set has been through.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Processing {
    Raw,
    Matched,
    Deconvolved,
    Drc,
}

/// One series per pose, either real (raw) or analytic (processed).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum SeriesData {
    Real(Vec<TimeSeries>),
    Analytic(Vec<AnalyticSeries>),
}

impl SeriesData {
    pub fn len(&self) -> usize {
        match self {
            SeriesData::Real(v) => v.len(),
            SeriesData::Analytic(v) => v.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// `(sample_rate_hz, t0_s, length)` of series `i`.
    pub fn layout(&self, i: usize) -> (f64, f64, usize) {
        match self {
            SeriesData::Real(v) => (v[i].sample_rate_hz, v[i].t0_s, v[i].len()),
            SeriesData::Analytic(v) => (v[i].sample_rate_hz, v[i].t0_s, v[i].len()),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MeasurementSet {
    pub poses: Vec<SensorPose>,
    pub series: SeriesData,
    pub waveform: Waveform,
    pub sound_speed_mps: f64,
    pub scene_bounds: Aabb,
    pub processing: Processing,
}

impl MeasurementSet {
    pub fn new(
        poses: Vec<SensorPose>,
        series: SeriesData,
        waveform: Waveform,
        sound_speed_mps: f64,
        scene_bounds: Aabb,
        processing: Processing,
    ) -> Result<Self, SimError> {
        let set = MeasurementSet { poses, series, waveform, sound_speed_mps, scene_bounds, processing };
        set.validate()?;
        Ok(set)
    }

    pub fn validate(&self) -> Result<(), SimError> {
        let bad = |m: String| Err(SimError::InvalidMeasurements(m));
        if self.poses.len() != self.series.len() {
            return bad(format!("{} poses but {} series", self.poses.len(), self.series.len()));
        }
        if !(self.sound_speed_mps > 0.0) {
            return bad(format!("sound speed {}", self.sound_speed_mps));
        }
        if !self.series.is_empty() {
            let (fs0, _, n0) = self.series.layout(0);
            for i in 1..self.series.len() {
                let (fs, _, n) = self.series.layout(i);
                if fs != fs0 || n != n0 {
                    return bad(format!("series {i} has fs={fs}, len={n}; series 0 has fs={fs0}, len={n0}"));
                }
            }
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.poses.len()
    }

    pub fn is_empty(&self) -> bool {
        self.poses.is_empty()
    }

    pub fn sample_rate_hz(&self) -> f64 {
        if self.series.is_empty() {
            self.waveform.sample_rate_hz
        } else {
            self.series.layout(0).0
        }
    }

    pub fn real(&self) -> Option<&[TimeSeries]> {
        match &self.series {
            SeriesData::Real(v) => Some(v),
            SeriesData::Analytic(_) => None,
        }
    }

    pub fn analytic(&self) -> Option<&[AnalyticSeries]> {
        match &self.series {
            SeriesData::Analytic(v) => Some(v),
            SeriesData::Real(_) => None,
        }
    }

    /// Matched filter every raw series against the set's waveform and take
    /// the analytic signal.
    pub fn matched_filtered(&self) -> Result<MeasurementSet, SimError> {
        let raw = self.real().ok_or_else(|| SimError::InvalidMeasurements("matched filtering needs raw series".into()))?;
        let series = raw
            .par_iter()
            .map(|s| crate::signal::matched_filter(s, &self.waveform).and_then(|m| crate::signal::analytic(&m)))
            .collect::<Result<Vec<_>, _>>()?;
        Ok(MeasurementSet { series: SeriesData::Analytic(series), processing: Processing::Matched, ..self.clone() })
    }

    /// Keep only the poses at `indices`, in that order.
    pub fn subset(&self, indices: &[usize]) -> MeasurementSet {
        let series = match &self.series {
            SeriesData::Real(v) => SeriesData::Real(indices.iter().map(|&i| v[i].clone()).collect()),
            SeriesData::Analytic(v) => SeriesData::Analytic(indices.iter().map(|&i| v[i].clone()).collect()),
        };
        MeasurementSet { poses: indices.iter().map(|&i| self.poses[i]).collect(), series, ..self.clone() }
    }
}
