//! File formats, experiment configuration and run manifests.

mod config;
mod container;
mod export;
mod manifest;

pub use config::{
    BoundsConfig, ExperimentConfig, MeshSource, ModelKind, ReconstructionConfig, SimulationConfig, TrajectoryConfig,
    WaveformConfig,
};
pub use container::{
    load_measurements, load_scene, load_volume, measurements_from_bytes, measurements_to_bytes, peek_kind, save_measurements,
    save_scene, save_volume, scene_from_bytes, scene_to_bytes, volume_from_bytes, volume_to_bytes, write_file, ContainerKind,
    StoredScene, MAGIC, VERSION,
};
pub use export::{parse_obj, read_obj, write_obj, write_pgm};
pub use manifest::{sha256_hex, FileHash, Manifest};

use std::path::Path;

#[derive(Debug, thiserror::Error)]
pub enum IoError {
    #[error("{path}: {source}")]
    File { path: String, source: std::io::Error },
    #[error("not a container (bad magic)")]
    BadMagic,
    #[error("unsupported container version {0}")]
    UnsupportedVersion(u16),
    #[error("expected a {expected} container, found {found}")]
    WrongKind { expected: String, found: String },
    #[error("missing {0} chunk")]
    MissingChunk(&'static str),
    #[error("malformed data: {0}")]
    Malformed(String),
    #[error("config error: {0}")]
    Config(String),
}

impl IoError {
    pub(crate) fn io(path: &Path, source: std::io::Error) -> Self {
        IoError::File { path: path.display().to_string(), source }
    }
}

impl PartialEq for IoError {
    fn eq(&self, other: &Self) -> bool {
        match (self, other) {
            (IoError::File { path: a, source: x }, IoError::File { path: b, source: y }) => a == b && x.kind() == y.kind(),
            (IoError::BadMagic, IoError::BadMagic) => true,
            (IoError::UnsupportedVersion(a), IoError::UnsupportedVersion(b)) => a == b,
            (IoError::WrongKind { expected: a, found: x }, IoError::WrongKind { expected: b, found: y }) => a == b && x == y,
            (IoError::MissingChunk(a), IoError::MissingChunk(b)) => a == b,
            (IoError::Malformed(a), IoError::Malformed(b)) | (IoError::Config(a), IoError::Config(b)) => a == b,
            _ => false,
        }
    }
}
