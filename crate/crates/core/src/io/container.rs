//! Little-endian binary containers for measurements, volumes and scene
//! models.
//!
//! Layout: magic `SASV`, `u16` version, 4-byte kind, then chunks of
//! `tag [4] | u64 length | payload`. Readers skip tags they do not know.
//! Metadata is stored as `f64`, sample arrays as `f32` (complex values as
//! interleaved re/im pairs).

use super::IoError;
use crate::beamform::ReconVolume;
use crate::geometry::{Aabb, Grid, Vec3};
use crate::scene::{HashConfig, HashMlpSceneModel, SceneModel, VoxelSceneModel};
use crate::signal::{AnalyticSeries, TimeSeries, Waveform, Window};
use crate::simulator::{MeasurementSet, Processing, SensorPose, SeriesData};
use num_complex::Complex64;
use std::path::Path;

pub const MAGIC: [u8; 4] = *b"SASV";
pub const VERSION: u16 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ContainerKind {
    Measurements,
    Volume,
    Scene,
}

impl ContainerKind {
    fn tag(self) -> [u8; 4] {
        match self {
            ContainerKind::Measurements => *b"MEAS",
            ContainerKind::Volume => *b"VOLU",
            ContainerKind::Scene => *b"SCEN",
        }
    }

    fn from_tag(tag: [u8; 4]) -> Option<Self> {
        [ContainerKind::Measurements, ContainerKind::Volume, ContainerKind::Scene].into_iter().find(|k| k.tag() == tag)
    }
}

/// A scene model as stored on disk.
#[derive(Debug, Clone, PartialEq)]
pub enum StoredScene {
    Voxel(VoxelSceneModel),
    Hash(HashMlpSceneModel),
}

impl StoredScene {
    pub fn model(&self) -> &dyn SceneModel {
        match self {
            StoredScene::Voxel(m) => m,
            StoredScene::Hash(m) => m,
        }
    }

    pub fn model_mut(&mut self) -> &mut dyn SceneModel {
        match self {
            StoredScene::Voxel(m) => m,
            StoredScene::Hash(m) => m,
        }
    }
}

#[derive(Default)]
struct Buf(Vec<u8>);

impl Buf {
    fn u8(&mut self, v: u8) {
        self.0.push(v);
    }
    fn u32(&mut self, v: usize) {
        self.0.extend_from_slice(&(v as u32).to_le_bytes());
    }
    fn f64(&mut self, v: f64) {
        self.0.extend_from_slice(&v.to_le_bytes());
    }
    fn vec3(&mut self, v: Vec3) {
        v.to_array().into_iter().for_each(|x| self.f64(x));
    }
    fn aabb(&mut self, b: Aabb) {
        self.vec3(b.min);
        self.vec3(b.max);
    }
    fn f32s(&mut self, v: impl ExactSizeIterator<Item = f64>) {
        self.u32(v.len());
        for x in v {
            self.0.extend_from_slice(&(x as f32).to_le_bytes());
        }
    }
    fn complex(&mut self, v: &[Complex64]) {
        self.u32(v.len());
        for z in v {
            self.0.extend_from_slice(&(z.re as f32).to_le_bytes());
            self.0.extend_from_slice(&(z.im as f32).to_le_bytes());
        }
    }
    fn bytes(&mut self, b: &[u8]) {
        self.u32(b.len());
        self.0.extend_from_slice(b);
    }
}

struct Cursor<'a> {
    data: &'a [u8],
    what: &'static str,
}

impl<'a> Cursor<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8], IoError> {
        if self.data.len() < n {
            return Err(IoError::Malformed(format!("truncated {} chunk", self.what)));
        }
        let (head, rest) = self.data.split_at(n);
        self.data = rest;
        Ok(head)
    }
    fn array<const N: usize>(&mut self) -> Result<[u8; N], IoError> {
        Ok(self.take(N)?.try_into().expect("length checked"))
    }
    fn u8(&mut self) -> Result<u8, IoError> {
        Ok(self.take(1)?[0])
    }
    fn u32(&mut self) -> Result<usize, IoError> {
        Ok(u32::from_le_bytes(self.array()?) as usize)
    }
    fn f64(&mut self) -> Result<f64, IoError> {
        Ok(f64::from_le_bytes(self.array()?))
    }
    fn f32(&mut self) -> Result<f64, IoError> {
        Ok(f32::from_le_bytes(self.array()?) as f64)
    }
    fn vec3(&mut self) -> Result<Vec3, IoError> {
        Ok(Vec3::new(self.f64()?, self.f64()?, self.f64()?))
    }
    fn aabb(&mut self) -> Result<Aabb, IoError> {
        Ok(Aabb::new(self.vec3()?, self.vec3()?))
    }
    fn f32s(&mut self) -> Result<Vec<f64>, IoError> {
        let n = self.u32()?;
        if self.data.len() < 4 * n {
            return Err(IoError::Malformed(format!("truncated {} array", self.what)));
        }
        (0..n).map(|_| self.f32()).collect()
    }
    fn complex(&mut self) -> Result<Vec<Complex64>, IoError> {
        let n = self.u32()?;
        if self.data.len() < 8 * n {
            return Err(IoError::Malformed(format!("truncated {} array", self.what)));
        }
        (0..n).map(|_| Ok(Complex64::new(self.f32()?, self.f32()?))).collect()
    }
    fn bytes(&mut self) -> Result<&'a [u8], IoError> {
        let n = self.u32()?;
        self.take(n)
    }
}

fn assemble(kind: ContainerKind, chunks: &[([u8; 4], Buf)]) -> Vec<u8> {
    let mut out = Vec::new();
    out.extend_from_slice(&MAGIC);
    out.extend_from_slice(&VERSION.to_le_bytes());
    out.extend_from_slice(&kind.tag());
    for (tag, buf) in chunks {
        out.extend_from_slice(tag);
        out.extend_from_slice(&(buf.0.len() as u64).to_le_bytes());
        out.extend_from_slice(&buf.0);
    }
    out
}

/// Kind of a container, after checking magic and version.
pub fn peek_kind(bytes: &[u8]) -> Result<ContainerKind, IoError> {
    if bytes.len() < 10 || bytes[..4] != MAGIC {
        return Err(IoError::BadMagic);
    }
    let version = u16::from_le_bytes([bytes[4], bytes[5]]);
    if version != VERSION {
        return Err(IoError::UnsupportedVersion(version));
    }
    let tag: [u8; 4] = bytes[6..10].try_into().expect("length checked");
    ContainerKind::from_tag(tag).ok_or_else(|| IoError::Malformed(format!("unknown kind {:?}", String::from_utf8_lossy(&tag))))
}

type Chunk<'a> = ([u8; 4], &'a [u8]);

/// Known chunks of a container of the expected kind, in file order.
fn split(bytes: &[u8], expected: ContainerKind) -> Result<Vec<Chunk<'_>>, IoError> {
    let kind = peek_kind(bytes)?;
    if kind != expected {
        return Err(IoError::WrongKind { expected: format!("{expected:?}"), found: format!("{kind:?}") });
    }
    let mut rest = &bytes[10..];
    let mut chunks = Vec::new();
    while !rest.is_empty() {
        if rest.len() < 12 {
            return Err(IoError::Malformed("truncated chunk header".into()));
        }
        let tag: [u8; 4] = rest[..4].try_into().expect("length checked");
        let len = u64::from_le_bytes(rest[4..12].try_into().expect("length checked"));
        let len = usize::try_from(len)
            .ok()
            .filter(|&l| l <= rest.len() - 12)
            .ok_or_else(|| IoError::Malformed("chunk overruns file".into()))?;
        chunks.push((tag, &rest[12..12 + len]));
        rest = &rest[12 + len..];
    }
    Ok(chunks)
}

fn chunk<'a>(chunks: &[([u8; 4], &'a [u8])], tag: &[u8; 4], what: &'static str) -> Result<Cursor<'a>, IoError> {
    chunks.iter().find(|(t, _)| t == tag).map(|(_, data)| Cursor { data, what }).ok_or(IoError::MissingChunk(what))
}

fn processing_code(p: Processing) -> u8 {
    match p {
        Processing::Raw => 0,
        Processing::Matched => 1,
        Processing::Deconvolved => 2,
        Processing::Drc => 3,
    }
}

fn processing_from(code: u8) -> Result<Processing, IoError> {
    Ok(match code {
        0 => Processing::Raw,
        1 => Processing::Matched,
        2 => Processing::Deconvolved,
        3 => Processing::Drc,
        _ => return Err(IoError::Malformed(format!("processing tag {code}"))),
    })
}

fn write_window(b: &mut Buf, w: Window) {
    let (code, a, c) = match w {
        Window::None => (0, 0.0, 0.0),
        Window::Tukey { ratio } => (1, ratio, 0.0),
        Window::Taylor { nbar, sll_db } => (2, nbar as f64, sll_db),
    };
    b.u8(code);
    b.f64(a);
    b.f64(c);
}

fn read_window(c: &mut Cursor) -> Result<Window, IoError> {
    let (code, a, b) = (c.u8()?, c.f64()?, c.f64()?);
    Ok(match code {
        0 => Window::None,
        1 => Window::Tukey { ratio: a },
        2 => Window::Taylor { nbar: a as u32, sll_db: b },
        _ => return Err(IoError::Malformed(format!("window tag {code}"))),
    })
}

pub fn measurements_to_bytes(ms: &MeasurementSet) -> Vec<u8> {
    let mut head = Buf::default();
    head.f64(ms.sound_speed_mps);
    head.u8(processing_code(ms.processing));
    head.u8(matches!(ms.series, SeriesData::Analytic(_)) as u8);
    head.u32(ms.poses.len());
    head.aabb(ms.scene_bounds);

    let w = &ms.waveform;
    let mut wave = Buf::default();
    for v in [w.sample_rate_hz, w.f_start_hz, w.f_stop_hz, w.duration_s] {
        wave.f64(v);
    }
    write_window(&mut wave, w.window);
    wave.f32s(w.samples.iter().copied());

    let mut pose = Buf::default();
    for p in &ms.poses {
        pose.vec3(p.tx_origin);
        pose.vec3(p.rx_origin);
        pose.vec3(p.boresight);
        pose.f64(p.beamwidth_rad);
    }

    let mut seri = Buf::default();
    for i in 0..ms.series.len() {
        let (fs, t0, _) = ms.series.layout(i);
        seri.f64(fs);
        seri.f64(t0);
        match &ms.series {
            SeriesData::Real(v) => seri.f32s(v[i].samples.iter().copied()),
            SeriesData::Analytic(v) => seri.complex(&v[i].samples),
        }
    }
    assemble(ContainerKind::Measurements, &[(*b"HEAD", head), (*b"WAVE", wave), (*b"POSE", pose), (*b"SERI", seri)])
}

pub fn measurements_from_bytes(bytes: &[u8]) -> Result<MeasurementSet, IoError> {
    let chunks = split(bytes, ContainerKind::Measurements)?;
    let mut h = chunk(&chunks, b"HEAD", "HEAD")?;
    let c = h.f64()?;
    let processing = processing_from(h.u8()?)?;
    let analytic = h.u8()? == 1;
    let n = h.u32()?;
    let scene_bounds = h.aabb()?;

    let mut w = chunk(&chunks, b"WAVE", "WAVE")?;
    let (fs, f0, f1, dur) = (w.f64()?, w.f64()?, w.f64()?, w.f64()?);
    let window = read_window(&mut w)?;
    let waveform = Waveform { samples: w.f32s()?, sample_rate_hz: fs, f_start_hz: f0, f_stop_hz: f1, duration_s: dur, window };

    let mut p = chunk(&chunks, b"POSE", "POSE")?;
    let poses = (0..n)
        .map(|_| Ok(SensorPose { tx_origin: p.vec3()?, rx_origin: p.vec3()?, boresight: p.vec3()?, beamwidth_rad: p.f64()? }))
        .collect::<Result<Vec<_>, IoError>>()?;

    let mut s = chunk(&chunks, b"SERI", "SERI")?;
    let series = if analytic {
        SeriesData::Analytic(
            (0..n)
                .map(|_| {
                    let (fs, t0) = (s.f64()?, s.f64()?);
                    AnalyticSeries::new(s.complex()?, fs, t0).map_err(|e| IoError::Malformed(e.to_string()))
                })
                .collect::<Result<_, _>>()?,
        )
    } else {
        SeriesData::Real(
            (0..n)
                .map(|_| {
                    let (fs, t0) = (s.f64()?, s.f64()?);
                    TimeSeries::new(s.f32s()?, fs, t0).map_err(|e| IoError::Malformed(e.to_string()))
                })
                .collect::<Result<_, _>>()?,
        )
    };
    MeasurementSet::new(poses, series, waveform, c, scene_bounds, processing).map_err(|e| IoError::Malformed(e.to_string()))
}

fn write_grid(b: &mut Buf, g: &Grid) {
    g.dims.iter().for_each(|&d| b.u32(d));
    b.aabb(g.bounds);
}

fn read_grid(c: &mut Cursor) -> Result<Grid, IoError> {
    let dims = [c.u32()?, c.u32()?, c.u32()?];
    let bounds = c.aabb()?;
    Grid::new(dims, bounds).ok_or_else(|| IoError::Malformed(format!("grid {dims:?}")))
}

pub fn volume_to_bytes(v: &ReconVolume) -> Vec<u8> {
    let mut grid = Buf::default();
    write_grid(&mut grid, &v.grid);
    let mut vox = Buf::default();
    vox.complex(&v.voxels);
    assemble(ContainerKind::Volume, &[(*b"GRID", grid), (*b"VOXL", vox)])
}

pub fn volume_from_bytes(bytes: &[u8]) -> Result<ReconVolume, IoError> {
    let chunks = split(bytes, ContainerKind::Volume)?;
    let grid = read_grid(&mut chunk(&chunks, b"GRID", "GRID")?)?;
    let voxels = chunk(&chunks, b"VOXL", "VOXL")?.complex()?;
    ReconVolume::new(grid, voxels).map_err(|e| IoError::Malformed(e.to_string()))
}

pub fn scene_to_bytes(scene: &StoredScene) -> Vec<u8> {
    let mut modl = Buf::default();
    match scene {
        StoredScene::Voxel(m) => {
            modl.u8(0);
            write_grid(&mut modl, &m.grid);
        }
        StoredScene::Hash(m) => {
            modl.u8(1);
            modl.aabb(m.bounds());
            modl.bytes(serde_json::to_string(&m.net.config).expect("plain struct").as_bytes());
        }
    }
    let mut parm = Buf::default();
    parm.f32s(scene.model().params().iter().copied());
    assemble(ContainerKind::Scene, &[(*b"MODL", modl), (*b"PARM", parm)])
}

pub fn scene_from_bytes(bytes: &[u8]) -> Result<StoredScene, IoError> {
    let chunks = split(bytes, ContainerKind::Scene)?;
    let mut m = chunk(&chunks, b"MODL", "MODL")?;
    let mut scene = match m.u8()? {
        0 => StoredScene::Voxel(VoxelSceneModel::zeros(read_grid(&mut m)?)),
        1 => {
            let bounds = m.aabb()?;
            let cfg: HashConfig = serde_json::from_slice(m.bytes()?).map_err(|e| IoError::Malformed(e.to_string()))?;
            StoredScene::Hash(HashMlpSceneModel::new(bounds, cfg, 0).map_err(|e| IoError::Malformed(e.to_string()))?)
        }
        k => return Err(IoError::Malformed(format!("scene model tag {k}"))),
    };
    let params = chunk(&chunks, b"PARM", "PARM")?.f32s()?;
    let dst = scene.model_mut().params_mut();
    if dst.len() != params.len() {
        return Err(IoError::Malformed(format!("{} parameters stored, model has {}", params.len(), dst.len())));
    }
    dst.copy_from_slice(&params);
    Ok(scene)
}

fn read_file(path: &Path) -> Result<Vec<u8>, IoError> {
    std::fs::read(path).map_err(|e| IoError::io(path, e))
}

pub fn write_file(path: &Path, bytes: &[u8]) -> Result<(), IoError> {
    std::fs::write(path, bytes).map_err(|e| IoError::io(path, e))
}

pub fn load_measurements(path: &Path) -> Result<MeasurementSet, IoError> {
    measurements_from_bytes(&read_file(path)?)
}

pub fn save_measurements(path: &Path, ms: &MeasurementSet) -> Result<(), IoError> {
    write_file(path, &measurements_to_bytes(ms))
}

pub fn load_volume(path: &Path) -> Result<ReconVolume, IoError> {
    volume_from_bytes(&read_file(path)?)
}

pub fn save_volume(path: &Path, v: &ReconVolume) -> Result<(), IoError> {
    write_file(path, &volume_to_bytes(v))
}

pub fn load_scene(path: &Path) -> Result<StoredScene, IoError> {
    scene_from_bytes(&read_file(path)?)
}

pub fn save_scene(path: &Path, s: &StoredScene) -> Result<(), IoError> {
    write_file(path, &scene_to_bytes(s))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small_volume() -> ReconVolume {
        let grid = Grid::new([2, 3, 1], Aabb::cube(Vec3::ZERO, 1.0)).unwrap();
        ReconVolume::new(grid, (0..6).map(|i| Complex64::new(i as f64 * 0.5, -1.0)).collect()).unwrap()
    }

    #[test]
    fn volume_round_trip_is_exact() {
        let v = small_volume();
        let bytes = volume_to_bytes(&v);
        assert_eq!(&bytes[..4], b"SASV");
        assert_eq!(volume_from_bytes(&bytes).unwrap(), v);
    }

    #[test]
    fn unknown_chunks_are_skipped() {
        let v = small_volume();
        let mut bytes = volume_to_bytes(&v);
        bytes.extend_from_slice(b"XTRA");
        bytes.extend_from_slice(&3u64.to_le_bytes());
        bytes.extend_from_slice(&[1, 2, 3]);
        assert_eq!(volume_from_bytes(&bytes).unwrap(), v);
    }

    #[test]
    fn rejects_bad_input() {
        let bytes = volume_to_bytes(&small_volume());
        assert_eq!(volume_from_bytes(b"NOPE").unwrap_err(), IoError::BadMagic);
        assert!(matches!(measurements_from_bytes(&bytes), Err(IoError::WrongKind { .. })));
        assert!(matches!(volume_from_bytes(&bytes[..bytes.len() - 3]), Err(IoError::Malformed(_))));
        let mut v2 = bytes.clone();
        v2[4] = 9;
        assert_eq!(volume_from_bytes(&v2).unwrap_err(), IoError::UnsupportedVersion(9));
    }

    #[test]
    fn scene_round_trip() {
        let grid = Grid::new([3, 2, 2], Aabb::cube(Vec3::ZERO, 0.5)).unwrap();
        let vox = StoredScene::Voxel(VoxelSceneModel::random(grid, 0.25, 4));
        let back = scene_from_bytes(&scene_to_bytes(&vox)).unwrap();
        assert_eq!(scene_to_bytes(&back), scene_to_bytes(&vox));
        let cfg = HashConfig { levels: 2, log2_table_size: 6, hidden_width: 8, hidden_layers: 1, ..Default::default() };
        let hash = StoredScene::Hash(HashMlpSceneModel::new(Aabb::cube(Vec3::ZERO, 1.0), cfg, 3).unwrap());
        let back = scene_from_bytes(&scene_to_bytes(&hash)).unwrap();
        assert_eq!(scene_to_bytes(&back), scene_to_bytes(&hash));
        let x = Vec3::new(0.1, -0.2, 0.3);
        assert!((back.model().query(x) - hash.model().query(x)).norm() < 1e-5);
    }
}
