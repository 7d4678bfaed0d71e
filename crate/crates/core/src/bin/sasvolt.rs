//! Command-line front end for the simulation and reconstruction pipeline.

use clap::{Parser, Subcommand, ValueEnum};
use sasvolt::beamform::{backproject, ReconVolume};
use sasvolt::deconv::{deconvolve_set, DeconvError};
use sasvolt::io::{
    load_measurements, load_volume, read_obj, save_measurements, save_scene, save_volume, write_obj, write_pgm, ExperimentConfig,
    IoError, Manifest, ModelKind, StoredScene,
};
use sasvolt::metrics::{mip, threshold_sweep, GroundTruth};
use sasvolt::render::{reconstruct, RenderError};
use sasvolt::scene::{extract_mesh, sample_model, HashMlpSceneModel, VoxelSceneModel};
use sasvolt::simulator::simulate_measurements;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

#[derive(Parser)]
#[command(name = "sasvolt", version, about = "Sonar simulation and volumetric reconstruction")]
struct Cli {
    /// Worker threads (default: all cores).
    #[arg(long, global = true)]
    threads: Option<usize>,
    /// Experiment configuration (TOML). Built-in defaults when omitted.
    #[arg(long, short, global = true)]
    config: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Render a mesh into raw measurements.
    Simulate {
        #[arg(long, short)]
        out: PathBuf,
        /// Override the configured mesh with an OBJ file.
        #[arg(long)]
        mesh: Option<PathBuf>,
    },
    /// Matched-filter raw measurements into analytic series.
    Matchfilter {
        #[arg(long, short)]
        input: PathBuf,
        #[arg(long, short)]
        out: PathBuf,
    },
    /// Pulse-deconvolve raw measurements.
    Deconvolve {
        #[arg(long, short)]
        input: PathBuf,
        #[arg(long, short)]
        out: PathBuf,
    },
    /// Delay-and-sum backprojection onto the configured grid.
    Backproject {
        #[arg(long, short)]
        input: PathBuf,
        #[arg(long, short)]
        out: PathBuf,
    },
    /// Fit a scene model to deconvolved measurements.
    Reconstruct {
        #[arg(long, short)]
        input: PathBuf,
        /// Scene model container.
        #[arg(long, short)]
        out: PathBuf,
        /// Also write the model sampled on the configured grid.
        #[arg(long)]
        volume: Option<PathBuf>,
        /// Disable occlusion (transmission falloff 0).
        #[arg(long)]
        ablate_occlusion: bool,
        /// Disable the Lambertian weighting.
        #[arg(long)]
        ablate_lambertian: bool,
        /// Compare magnitudes only.
        #[arg(long)]
        incoherent: bool,
        /// Override the configured iteration count.
        #[arg(long)]
        iterations: Option<usize>,
    },
    /// Marching-cubes mesh of a volume at a normalized threshold.
    ExportMesh {
        #[arg(long, short)]
        input: PathBuf,
        #[arg(long, short)]
        out: PathBuf,
        /// Fraction of the peak magnitude.
        #[arg(long, default_value_t = 0.5)]
        threshold: f64,
    },
    /// Threshold sweep of a volume against a ground-truth surface.
    Evaluate {
        #[arg(long, short)]
        input: PathBuf,
        /// JSON report.
        #[arg(long, short)]
        out: PathBuf,
        /// Ground-truth OBJ; defaults to the configured simulation mesh.
        #[arg(long, conflicts_with = "reference_volume")]
        mesh: Option<PathBuf>,
        /// Use the isosurface of another volume as ground truth.
        #[arg(long)]
        reference_volume: Option<PathBuf>,
        #[arg(long, default_value_t = 0.5)]
        reference_threshold: f64,
    },
    /// Maximum-intensity projection as a PGM image.
    Mip {
        #[arg(long, short)]
        input: PathBuf,
        #[arg(long, short)]
        out: PathBuf,
        #[arg(long, value_enum, default_value_t = Axis::Z)]
        axis: Axis,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum Axis {
    X,
    Y,
    Z,
}

enum CliError {
    Config(String),
    Io(String),
    Diverged(String),
}

impl CliError {
    fn code(&self) -> u8 {
        match self {
            CliError::Config(_) => 2,
            CliError::Io(_) => 3,
            CliError::Diverged(_) => 4,
        }
    }
}

impl std::fmt::Display for CliError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            CliError::Config(m) => write!(f, "configuration or input error: {m}"),
            CliError::Io(m) => write!(f, "i/o error: {m}"),
            CliError::Diverged(m) => write!(f, "numerical divergence: {m}"),
        }
    }
}

impl From<IoError> for CliError {
    fn from(e: IoError) -> Self {
        match e {
            IoError::File { .. } => CliError::Io(e.to_string()),
            IoError::Config(_) => CliError::Config(e.to_string()),
            _ => CliError::Io(e.to_string()),
        }
    }
}

impl From<RenderError> for CliError {
    fn from(e: RenderError) -> Self {
        match e {
            RenderError::DivergedLoss { .. } => CliError::Diverged(e.to_string()),
            _ => CliError::Config(e.to_string()),
        }
    }
}

impl From<DeconvError> for CliError {
    fn from(e: DeconvError) -> Self {
        match e {
            DeconvError::DivergedLoss { .. } => CliError::Diverged(e.to_string()),
            _ => CliError::Config(e.to_string()),
        }
    }
}

fn input_err(e: impl std::fmt::Display) -> CliError {
    CliError::Config(e.to_string())
}

/// Timings and file hashes for the manifest of one run.
struct Run {
    manifest: Manifest,
    clock: Instant,
}

impl Run {
    fn new(name: &str, cfg: &ExperimentConfig) -> Self {
        let seeds = cfg.seeds().into_iter().map(|(k, v)| (k.to_string(), v)).collect();
        Run { manifest: Manifest::new(name, &cfg.to_toml(), seeds), clock: Instant::now() }
    }

    fn input(&mut self, path: &Path) -> Result<(), CliError> {
        Ok(Manifest::add_file(&mut self.manifest.inputs, path)?)
    }

    fn lap(&mut self, stage: &str) {
        self.manifest.timings.push((stage.to_string(), self.clock.elapsed().as_secs_f64()));
        self.clock = Instant::now();
    }

    fn finish(mut self, outputs: &[&Path]) -> Result<(), CliError> {
        for p in outputs {
            Manifest::add_file(&mut self.manifest.outputs, p)?;
        }
        self.manifest.write(outputs[0])?;
        Ok(())
    }
}

fn load_config(path: Option<&Path>) -> Result<(ExperimentConfig, PathBuf), CliError> {
    let (mut cfg, base) = match path {
        Some(p) => (ExperimentConfig::load(p)?, p.parent().map(Path::to_path_buf).unwrap_or_default()),
        None => (ExperimentConfig::default(), PathBuf::from(".")),
    };
    if let Ok(s) = std::env::var("SASVOLT_SEED") {
        let seed = s.trim().parse().map_err(|_| CliError::Config(format!("SASVOLT_SEED={s:?} is not an integer")))?;
        cfg.override_seeds(seed);
    }
    cfg.validate()?;
    Ok((cfg, base))
}

fn run(cli: Cli) -> Result<(), CliError> {
    if let Some(n) = cli.threads {
        rayon::ThreadPoolBuilder::new().num_threads(n).build_global().map_err(input_err)?;
    }
    let (mut cfg, base) = load_config(cli.config.as_deref())?;
    match cli.command {
        Command::Simulate { out, mesh } => {
            let mut r = Run::new("simulate", &cfg);
            let mesh = match &mesh {
                Some(p) => {
                    r.input(p)?;
                    read_obj(p)?
                }
                None => cfg.simulation.mesh.build(&base)?,
            };
            let s = &cfg.simulation;
            let poses = s.trajectory.build()?;
            let waveform = s.waveform.build()?;
            let ms = simulate_measurements(
                &mesh,
                &poses,
                &waveform,
                s.sound_speed_mps,
                s.waveform.sample_rate_hz,
                s.n_bins,
                s.rays_per_pose,
                s.snr_db,
                s.seed,
                &s.options,
            )
            .map_err(input_err)?;
            r.lap("simulate");
            save_measurements(&out, &ms)?;
            log::info!("{} poses, {} bins", ms.poses.len(), s.n_bins);
            r.finish(&[&out])
        }
        Command::Matchfilter { input, out } => {
            let mut r = Run::new("matchfilter", &cfg);
            r.input(&input)?;
            let ms = load_measurements(&input)?.matched_filtered().map_err(input_err)?;
            r.lap("matchfilter");
            save_measurements(&out, &ms)?;
            r.finish(&[&out])
        }
        Command::Deconvolve { input, out } => {
            let mut r = Run::new("deconvolve", &cfg);
            r.input(&input)?;
            let raw = load_measurements(&input)?;
            let (ms, res) = deconvolve_set(&raw, &cfg.deconv)?;
            r.lap("deconvolve");
            if let Some(l) = res.loss_history.last() {
                r.manifest.notes.push(format!("final deconvolution loss {l:.6e}"));
            }
            save_measurements(&out, &ms)?;
            r.finish(&[&out])
        }
        Command::Backproject { input, out } => {
            let mut r = Run::new("backproject", &cfg);
            r.input(&input)?;
            let ms = load_measurements(&input)?;
            let vol = backproject(&ms, &cfg.reconstruction.grid()?).map_err(input_err)?;
            r.lap("backproject");
            save_volume(&out, &vol)?;
            r.finish(&[&out])
        }
        Command::Reconstruct { input, out, volume, ablate_occlusion, ablate_lambertian, incoherent, iterations } => {
            if ablate_occlusion {
                cfg.render.occlusion_enabled = false;
                cfg.render.zeta = 0.0;
            }
            cfg.render.lambertian_enabled &= !ablate_lambertian;
            cfg.render.coherent &= !incoherent;
            if let Some(n) = iterations {
                cfg.render.iterations = n;
            }
            cfg.validate()?;
            let mut r = Run::new("reconstruct", &cfg);
            r.input(&input)?;
            let mut ms = load_measurements(&input)?;
            ms.scene_bounds = cfg.reconstruction.aabb();
            let rc = &cfg.reconstruction;
            let grid = rc.grid()?;
            let mut scene = match rc.model {
                ModelKind::Voxel => StoredScene::Voxel(VoxelSceneModel::random(grid, rc.init_std, rc.init_seed)),
                ModelKind::Hash => {
                    StoredScene::Hash(HashMlpSceneModel::new(rc.aabb(), rc.hash, rc.init_seed).map_err(input_err)?)
                }
            };
            let report = reconstruct(&ms, scene.model_mut(), &cfg.render)?;
            r.lap("reconstruct");
            let h = &report.loss_history;
            let tail = &h[h.len().saturating_sub(50)..];
            r.manifest.notes.push(format!(
                "{} optimizer steps; loss first {:.6e}, mean of last {} {:.6e}",
                report.optimizer_steps,
                h.first().copied().unwrap_or(f64::NAN),
                tail.len(),
                tail.iter().sum::<f64>() / tail.len().max(1) as f64
            ));
            save_scene(&out, &scene)?;
            let mut outs = vec![out.as_path()];
            if let Some(v) = &volume {
                save_volume(v, &sample_model(scene.model(), &grid))?;
                outs.push(v);
            }
            r.finish(&outs)
        }
        Command::ExportMesh { input, out, threshold } => {
            let mut r = Run::new("export-mesh", &cfg);
            r.input(&input)?;
            let mesh = extract_mesh(&load_volume(&input)?, threshold).map_err(input_err)?;
            write_obj(&out, &mesh)?;
            r.manifest.notes.push(format!("threshold {threshold}, {} triangles", mesh.triangles.len()));
            r.finish(&[&out])
        }
        Command::Evaluate { input, out, mesh, reference_volume, reference_threshold } => {
            let mut r = Run::new("evaluate", &cfg);
            r.input(&input)?;
            let vol = load_volume(&input)?;
            let gt_mesh = if let Some(p) = &mesh {
                r.input(p)?;
                read_obj(p)?
            } else if let Some(p) = &reference_volume {
                r.input(p)?;
                extract_mesh(&load_volume(p)?, reference_threshold).map_err(input_err)?
            } else {
                cfg.simulation.mesh.build(&base)?
            };
            let gt = GroundTruth::new(&gt_mesh, vol.grid.bounds, &cfg.eval).map_err(input_err)?;
            let report = threshold_sweep(&vol, &gt, &cfg.eval).map_err(input_err)?;
            r.lap("evaluate");
            print!("{}", report.table());
            let json = serde_json::to_string_pretty(&report).map_err(input_err)?;
            std::fs::write(&out, json).map_err(|e| CliError::Io(format!("{}: {e}", out.display())))?;
            r.finish(&[&out])
        }
        Command::Mip { input, out, axis } => {
            let mut r = Run::new("mip", &cfg);
            r.input(&input)?;
            let vol: ReconVolume = load_volume(&input)?;
            let img = mip(&vol, axis as usize).map_err(input_err)?;
            write_pgm(&out, &img)?;
            r.finish(&[&out])
        }
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.code())
        }
    }
}
