//! Geometry and image metrics for comparing reconstructions with a
//! ground-truth mesh.

use crate::beamform::ReconVolume;
use crate::geometry::{Aabb, Grid, Vec3};
use crate::scene::{extract_mesh, SceneError};
use crate::simulator::{Bvh, Mesh};
use kiddo::{ImmutableKdTree, SquaredEuclidean};
use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::collections::VecDeque;
use std::f64::consts::TAU;

/// PSNR reported for identical images.
pub const PSNR_CAP_DB: f64 = 99.0;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum MetricsError {
    #[error("point set is empty")]
    EmptySet,
    #[error("grid dimensions differ: {0:?} vs {1:?}")]
    DimsMismatch([usize; 3], [usize; 3]),
    #[error("mesh has no triangles")]
    EmptyMesh,
    #[error("no threshold produced a surface")]
    AllEmptyIsosurfaces,
    #[error("invalid metric arguments: {0}")]
    Invalid(String),
}

fn tree(points: &[Vec3]) -> ImmutableKdTree<f64, 3> {
    let arr: Vec<[f64; 3]> = points.iter().map(|p| p.to_array()).collect();
    ImmutableKdTree::new_from_slice(&arr)
}

fn mean_nearest_sq(from: &[Vec3], to: &ImmutableKdTree<f64, 3>) -> f64 {
    let total: f64 = from.par_iter().map(|p| to.nearest_one::<SquaredEuclidean>(&p.to_array()).distance).sum();
    total / from.len() as f64
}

/// Mean squared nearest-neighbour distance from `a` to `b` plus from `b`
/// to `a`.
pub fn chamfer(a: &[Vec3], b: &[Vec3]) -> Result<f64, MetricsError> {
    if a.is_empty() || b.is_empty() {
        return Err(MetricsError::EmptySet);
    }
    Ok(mean_nearest_sq(a, &tree(b)) + mean_nearest_sq(b, &tree(a)))
}

/// Intersection over union of two occupancy grids; 1 when both are empty.
pub fn iou(a: &Occupancy, b: &Occupancy) -> Result<f64, MetricsError> {
    if a.dims != b.dims {
        return Err(MetricsError::DimsMismatch(a.dims, b.dims));
    }
    let (mut inter, mut union) = (0usize, 0usize);
    for (&x, &y) in a.cells.iter().zip(&b.cells) {
        inter += usize::from(x && y);
        union += usize::from(x || y);
    }
    Ok(if union == 0 { 1.0 } else { inter as f64 / union as f64 })
}

/// Points drawn uniformly over a mesh surface with their face normals.
pub fn sample_surface(mesh: &Mesh, n: usize, seed: u64) -> Result<Vec<(Vec3, Vec3)>, MetricsError> {
    let areas: Vec<f64> = (0..mesh.triangles.len()).map(|i| mesh.triangle_area(i)).collect();
    let dist = WeightedIndex::new(&areas).map_err(|_| MetricsError::EmptyMesh)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    Ok((0..n)
        .map(|_| {
            let t = dist.sample(&mut rng);
            let [a, b, c] = mesh.triangle(t);
            let (mut u, mut v): (f64, f64) = (rng.random(), rng.random());
            if u + v > 1.0 {
                u = 1.0 - u;
                v = 1.0 - v;
            }
            (a + (b - a) * u + (c - a) * v, mesh.normals[t])
        })
        .collect())
}

/// Boolean voxel occupancy, x fastest.
#[derive(Debug, Clone, PartialEq)]
pub struct Occupancy {
    pub dims: [usize; 3],
    pub cells: Vec<bool>,
}

impl Occupancy {
    pub fn count(&self) -> usize {
        self.cells.iter().filter(|&&c| c).count()
    }
}

/// Solid voxelization: voxels touched by the surface, plus every voxel the
/// outside cannot reach through 6-connected empty voxels.
pub fn voxelize(mesh: &Mesh, grid: &Grid) -> Occupancy {
    let mut surface = vec![false; grid.len()];
    let step = grid.min_pitch() / 2.0;
    for t in 0..mesh.triangles.len() {
        let [a, b, c] = mesh.triangle(t);
        let edge = (b - a).norm().max((c - a).norm()).max((c - b).norm());
        let n = ((edge / step).ceil() as usize).max(1);
        for i in 0..=n {
            for j in 0..=(n - i) {
                let p = a + (b - a) * (i as f64 / n as f64) + (c - a) * (j as f64 / n as f64);
                if let Some(v) = grid.voxel_of(p) {
                    surface[v] = true;
                }
            }
        }
    }
    let [nx, ny, nz] = grid.dims;
    let mut outside = vec![false; grid.len()];
    let mut queue = VecDeque::new();
    for k in 0..nz {
        for j in 0..ny {
            for i in 0..nx {
                let border = i == 0 || j == 0 || k == 0 || i + 1 == nx || j + 1 == ny || k + 1 == nz;
                let idx = grid.index(i, j, k);
                if border && !surface[idx] {
                    outside[idx] = true;
                    queue.push_back([i, j, k]);
                }
            }
        }
    }
    while let Some([i, j, k]) = queue.pop_front() {
        let mut visit = |ii: usize, jj: usize, kk: usize| {
            let idx = grid.index(ii, jj, kk);
            if !surface[idx] && !outside[idx] {
                outside[idx] = true;
                queue.push_back([ii, jj, kk]);
            }
        };
        if i > 0 {
            visit(i - 1, j, k);
        }
        if i + 1 < nx {
            visit(i + 1, j, k);
        }
        if j > 0 {
            visit(i, j - 1, k);
        }
        if j + 1 < ny {
            visit(i, j + 1, k);
        }
        if k > 0 {
            visit(i, j, k - 1);
        }
        if k + 1 < nz {
            visit(i, j, k + 1);
        }
    }
    Occupancy { dims: grid.dims, cells: outside.iter().map(|o| !o).collect() }
}

/// Orthographic depth image; `background` marks pixels that see nothing.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DepthImage {
    pub azimuth_rad: f64,
    pub width: usize,
    pub height: usize,
    /// Row-major depths in metres from the image plane, top row first.
    pub depth: Vec<f64>,
    pub background: f64,
}

impl DepthImage {
    /// Depths mapped to [0, 1] over the viewing slab, background at 1.
    pub fn normalized(&self, view: &Aabb) -> Vec<f64> {
        let diag = view.diagonal();
        self.depth.iter().map(|d| ((d - diag / 2.0) / diag).clamp(0.0, 1.0)).collect()
    }
}

/// Depth images from `n_views` azimuths spread evenly around the z axis.
/// Each camera sits one diagonal of `view` from its centre, looks at it
/// horizontally and covers a square one diagonal wide.
pub fn depth_render(
    mesh: &Mesh,
    view: &Aabb,
    n_views: usize,
    width: usize,
    height: usize,
) -> Result<Vec<DepthImage>, MetricsError> {
    if mesh.is_empty() {
        return Err(MetricsError::EmptyMesh);
    }
    let bvh = Bvh::build(mesh);
    let diag = view.diagonal();
    let center = view.center();
    let background = 1.5 * diag;
    Ok((0..n_views)
        .map(|v| {
            let az = TAU * v as f64 / n_views as f64;
            let (s, c) = az.sin_cos();
            let forward = Vec3::new(-c, -s, 0.0);
            let right = Vec3::new(-s, c, 0.0);
            let eye = center - forward * diag;
            let mut depth = vec![background; width * height];
            for row in 0..height {
                for col in 0..width {
                    let x = ((col as f64 + 0.5) / width as f64 - 0.5) * diag;
                    let z = (0.5 - (row as f64 + 0.5) / height as f64) * diag;
                    let origin = eye + right * x + Vec3::Z * z;
                    if let Some(hit) = bvh.first_hit(origin, forward, 0.0, background) {
                        depth[row * width + col] = hit.distance;
                    }
                }
            }
            DepthImage { azimuth_rad: az, width, height, depth, background }
        })
        .collect())
}

/// Mean squared error and PSNR of two [0, 1] images; PSNR is capped.
pub fn psnr(a: &[f64], b: &[f64]) -> Result<(f64, f64), MetricsError> {
    if a.len() != b.len() || a.is_empty() {
        return Err(MetricsError::Invalid(format!("image sizes {} and {}", a.len(), b.len())));
    }
    let mse = a.iter().zip(b).map(|(x, y)| (x - y).powi(2)).sum::<f64>() / a.len() as f64;
    let db = if mse > 0.0 { (-10.0 * mse.log10()).min(PSNR_CAP_DB) } else { PSNR_CAP_DB };
    Ok((mse, db))
}

/// Maximum-intensity projection of `|σ|` along `axis` (0 = x, 1 = y,
/// 2 = z). Image columns follow the lower remaining axis, rows the higher.
#[derive(Debug, Clone, PartialEq)]
pub struct Image {
    pub width: usize,
    pub height: usize,
    pub pixels: Vec<f64>,
}

pub fn mip(volume: &ReconVolume, axis: usize) -> Result<Image, MetricsError> {
    if axis > 2 {
        return Err(MetricsError::Invalid(format!("axis {axis}")));
    }
    let dims = volume.grid.dims;
    let (ua, va) = match axis {
        0 => (1, 2),
        1 => (0, 2),
        _ => (0, 1),
    };
    let (width, height) = (dims[ua], dims[va]);
    let mut pixels = vec![0.0f64; width * height];
    for (idx, v) in volume.voxels.iter().enumerate() {
        let c = volume.grid.coords(idx);
        let p = &mut pixels[c[va] * width + c[ua]];
        *p = p.max(v.norm());
    }
    Ok(Image { width, height, pixels })
}

/// Mean `|n_pred · n_gt|` over points sampled on `pred`, pairing each with
/// the nearest sample of `gt`.
pub fn normal_agreement(pred: &Mesh, gt: &Mesh, n: usize, seed: u64) -> Result<f64, MetricsError> {
    let p = sample_surface(pred, n, seed)?;
    let g = sample_surface(gt, n, seed ^ 1)?;
    let t = tree(&g.iter().map(|s| s.0).collect::<Vec<_>>());
    let sum: f64 = p
        .iter()
        .map(|(x, nx)| {
            let nn = t.nearest_one::<SquaredEuclidean>(&x.to_array());
            nx.dot(g[nn.item as usize].1).abs()
        })
        .sum();
    Ok(sum / n as f64)
}

/// Voxels of `grid` whose centres lie within `radius` of the surface.
pub fn surface_band(mesh: &Mesh, grid: &Grid, radius: f64, seed: u64) -> Result<Occupancy, MetricsError> {
    let n = ((mesh.surface_area() / (radius * radius / 4.0)).ceil() as usize).clamp(1000, 2_000_000);
    let pts: Vec<Vec3> = sample_surface(mesh, n, seed)?.into_iter().map(|s| s.0).collect();
    let t = tree(&pts);
    let r2 = radius * radius;
    let cells = (0..grid.len())
        .into_par_iter()
        .map(|i| t.nearest_one::<SquaredEuclidean>(&grid.center_of(i).to_array()).distance <= r2)
        .collect();
    Ok(Occupancy { dims: grid.dims, cells })
}

/// Peak magnitude inside `mask` over the RMS magnitude outside it.
pub fn peak_to_background(volume: &ReconVolume, mask: &Occupancy) -> Result<f64, MetricsError> {
    if mask.dims != volume.grid.dims {
        return Err(MetricsError::DimsMismatch(mask.dims, volume.grid.dims));
    }
    let (mut peak, mut sq, mut n) = (0.0f64, 0.0, 0usize);
    for (v, &m) in volume.voxels.iter().zip(&mask.cells) {
        if m {
            peak = peak.max(v.norm());
        } else {
            sq += v.norm_sqr();
            n += 1;
        }
    }
    if n == 0 || sq == 0.0 {
        return Err(MetricsError::Invalid("background is empty or zero".into()));
    }
    Ok(peak / (sq / n as f64).sqrt())
}

/// Knobs for comparing volumes against a ground-truth mesh.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvalConfig {
    pub thresholds: Vec<f64>,
    /// Cells per axis of the IOU voxelization over the volume bounds.
    pub iou_resolution: usize,
    pub chamfer_points: usize,
    pub views: usize,
    pub image_size: usize,
    pub seed: u64,
}

impl Default for EvalConfig {
    fn default() -> Self {
        EvalConfig {
            thresholds: (1..20).map(|i| i as f64 * 0.05).collect(),
            iou_resolution: 128,
            chamfer_points: 10_000,
            views: 10,
            image_size: 64,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ViewScore {
    pub azimuth_deg: f64,
    pub mse: f64,
    pub psnr_db: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepEntry {
    pub threshold: f64,
    pub iou: f64,
    pub chamfer: f64,
    pub psnr_db: f64,
    pub mse: f64,
}

/// Metrics at the IOU-selected threshold, the best value of each metric
/// over the sweep, and the whole sweep.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub best_threshold: f64,
    pub iou: f64,
    /// Squared-distance Chamfer (mean both ways).
    pub chamfer: f64,
    pub psnr_db: f64,
    pub mse: f64,
    pub views: Vec<ViewScore>,
    pub best_iou: SweepEntry,
    pub best_chamfer: SweepEntry,
    pub sweep: Vec<SweepEntry>,
}

impl EvalReport {
    /// Aligned text table of the sweep.
    pub fn table(&self) -> String {
        let mut out = String::from("threshold       iou       chamfer   psnr_db\n");
        for e in &self.sweep {
            out += &format!("{:9.3} {:9.4} {:13.4e} {:9.2}\n", e.threshold, e.iou, e.chamfer, e.psnr_db);
        }
        out += &format!(
            "selected threshold {:.3}: iou {:.4}, chamfer {:.4e}, psnr {:.2} dB\n",
            self.best_threshold, self.iou, self.chamfer, self.psnr_db
        );
        out
    }
}

/// Reference data shared by every threshold of a sweep.
pub struct GroundTruth {
    pub mesh: Mesh,
    pub eval_grid: Grid,
    pub occupancy: Occupancy,
    pub points: Vec<Vec3>,
    pub depth: Vec<Vec<f64>>,
    view: Aabb,
}

impl GroundTruth {
    pub fn new(mesh: &Mesh, view: Aabb, cfg: &EvalConfig) -> Result<Self, MetricsError> {
        let n = cfg.iou_resolution;
        let eval_grid = Grid::new([n; 3], view).ok_or_else(|| MetricsError::Invalid("bad evaluation grid".into()))?;
        let depth =
            depth_render(mesh, &view, cfg.views, cfg.image_size, cfg.image_size)?.iter().map(|d| d.normalized(&view)).collect();
        Ok(GroundTruth {
            mesh: mesh.clone(),
            eval_grid,
            occupancy: voxelize(mesh, &eval_grid),
            points: sample_surface(mesh, cfg.chamfer_points, cfg.seed)?.into_iter().map(|s| s.0).collect(),
            depth,
            view,
        })
    }

    /// IOU, Chamfer and per-view depth scores of one predicted mesh. Both
    /// surfaces are sampled with the same seed, so a mesh scored against
    /// itself has Chamfer exactly 0.
    pub fn score(&self, pred: &Mesh, cfg: &EvalConfig) -> Result<(SweepEntry, Vec<ViewScore>), MetricsError> {
        let occ = voxelize(pred, &self.eval_grid);
        let pts: Vec<Vec3> = sample_surface(pred, cfg.chamfer_points, cfg.seed)?.into_iter().map(|s| s.0).collect();
        let renders = depth_render(pred, &self.view, cfg.views, cfg.image_size, cfg.image_size)?;
        let mut views = Vec::with_capacity(renders.len());
        for (r, gt) in renders.iter().zip(&self.depth) {
            let (mse, db) = psnr(&r.normalized(&self.view), gt)?;
            views.push(ViewScore { azimuth_deg: r.azimuth_rad.to_degrees(), mse, psnr_db: db });
        }
        let mse = views.iter().map(|v| v.mse).sum::<f64>() / views.len().max(1) as f64;
        let psnr_db = if mse > 0.0 { (-10.0 * mse.log10()).min(PSNR_CAP_DB) } else { PSNR_CAP_DB };
        let entry = SweepEntry {
            threshold: f64::NAN,
            iou: iou(&occ, &self.occupancy)?,
            chamfer: chamfer(&pts, &self.points)?,
            psnr_db,
            mse,
        };
        Ok((entry, views))
    }
}

/// Extract a mesh at every threshold of the normalized magnitude, score it
/// and keep the threshold with the best IOU (ties go to lower Chamfer).
pub fn threshold_sweep(volume: &ReconVolume, gt: &GroundTruth, cfg: &EvalConfig) -> Result<EvalReport, MetricsError> {
    if cfg.thresholds.len() < 2 {
        return Err(MetricsError::Invalid("need at least two thresholds".into()));
    }
    let mut sweep = Vec::new();
    let mut best: Option<(SweepEntry, Vec<ViewScore>)> = None;
    for &t in &cfg.thresholds {
        let mesh = match extract_mesh(volume, t) {
            Ok(m) if !m.is_empty() => m,
            Ok(_) | Err(SceneError::EmptyIsosurface(_)) => continue,
            Err(e) => return Err(MetricsError::Invalid(e.to_string())),
        };
        let (mut entry, views) = gt.score(&mesh, cfg)?;
        entry.threshold = t;
        if best.as_ref().is_none_or(|b| entry.iou > b.0.iou || (entry.iou == b.0.iou && entry.chamfer < b.0.chamfer)) {
            best = Some((entry.clone(), views));
        }
        sweep.push(entry);
    }
    let (sel, views) = best.ok_or(MetricsError::AllEmptyIsosurfaces)?;
    let best_chamfer = sweep.iter().min_by(|a, b| a.chamfer.total_cmp(&b.chamfer)).cloned().expect("non-empty sweep");
    Ok(EvalReport {
        best_threshold: sel.threshold,
        iou: sel.iou,
        chamfer: sel.chamfer,
        psnr_db: sel.psnr_db,
        mse: sel.mse,
        views,
        best_iou: sel,
        best_chamfer,
        sweep,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::simulator::shapes::{box_mesh, icosphere};
    use num_complex::Complex64;

    fn random_cloud(n: usize, seed: u64) -> Vec<Vec3> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        (0..n).map(|_| Vec3::new(rng.random(), rng.random(), rng.random())).collect()
    }

    #[test]
    fn chamfer_cases() {
        let a = random_cloud(200, 1);
        assert_eq!(chamfer(&a, &a).unwrap(), 0.0);
        assert_eq!(chamfer(&[Vec3::ZERO], &[Vec3::X]).unwrap(), 2.0);
        assert_eq!(chamfer(&[], &a).unwrap_err(), MetricsError::EmptySet);
    }

    #[test]
    fn chamfer_matches_brute_force() {
        let a = random_cloud(1000, 2);
        let b = random_cloud(1000, 3);
        let brute = |x: &[Vec3], y: &[Vec3]| {
            x.iter().map(|p| y.iter().map(|q| (*p - *q).norm_squared()).fold(f64::INFINITY, f64::min)).sum::<f64>()
                / x.len() as f64
        };
        let want = brute(&a, &b) + brute(&b, &a);
        assert!((chamfer(&a, &b).unwrap() - want).abs() < 1e-12);
    }

    #[test]
    fn iou_cases() {
        let occ = |cells: Vec<bool>| Occupancy { dims: [cells.len(), 1, 1], cells };
        assert_eq!(iou(&occ(vec![true, false, true]), &occ(vec![true, false, true])).unwrap(), 1.0);
        assert_eq!(iou(&occ(vec![true, false]), &occ(vec![false, true])).unwrap(), 0.0);
        assert_eq!(iou(&occ(vec![false; 3]), &occ(vec![false; 3])).unwrap(), 1.0);
        assert!(matches!(iou(&occ(vec![true]), &occ(vec![true, true])), Err(MetricsError::DimsMismatch(..))));
    }

    #[test]
    fn half_overlapping_cubes() {
        let grid = Grid::new([128; 3], Aabb::new(Vec3::splat(-0.1), Vec3::new(1.6, 1.1, 1.1))).unwrap();
        let a = voxelize(&box_mesh(Aabb::new(Vec3::ZERO, Vec3::splat(1.0))), &grid);
        let b = voxelize(&box_mesh(Aabb::new(Vec3::new(0.5, 0.0, 0.0), Vec3::new(1.5, 1.0, 1.0))), &grid);
        let v = iou(&a, &b).unwrap();
        assert!((v - 1.0 / 3.0).abs() < 0.02, "{v}");
    }

    #[test]
    fn voxelized_sphere_volume() {
        let grid = Grid::new([64; 3], Aabb::cube(Vec3::ZERO, 1.2)).unwrap();
        let occ = voxelize(&icosphere(Vec3::ZERO, 1.0, 4), &grid);
        let vol = occ.count() as f64 * grid.pitch().x.powi(3);
        let want = 4.0 / 3.0 * std::f64::consts::PI;
        assert!((vol / want - 1.0).abs() < 0.1, "{vol}");
    }

    #[test]
    fn sphere_depth_at_centre() {
        let view = Aabb::cube(Vec3::ZERO, 1.0);
        let imgs = depth_render(&icosphere(Vec3::ZERO, 1.0, 4), &view, 10, 65, 65).unwrap();
        let diag = view.diagonal();
        let pixel = diag / 65.0;
        for img in &imgs {
            assert!(
                (img.depth[32 * 65 + 32] - (diag - 1.0)).abs() < pixel,
                "{} {} {}",
                img.depth[32 * 65 + 32],
                diag - 1.0,
                img.azimuth_rad
            );
        }
        // Shuffled triangles render the same.
        let mut m = icosphere(Vec3::ZERO, 1.0, 3);
        let plain = depth_render(&m, &view, 3, 32, 32).unwrap();
        m.triangles.reverse();
        m.normals.reverse();
        assert_eq!(plain, depth_render(&m, &view, 3, 32, 32).unwrap());
    }

    #[test]
    fn off_screen_mesh_is_background() {
        let view = Aabb::cube(Vec3::ZERO, 0.5);
        let imgs = depth_render(&icosphere(Vec3::new(0.0, 0.0, 50.0), 0.5, 1), &view, 4, 16, 16).unwrap();
        assert!(imgs.iter().all(|i| i.depth.iter().all(|&d| d == i.background)));
        assert!(imgs[0].normalized(&view).iter().all(|&d| d == 1.0));
    }

    #[test]
    fn psnr_identical_is_capped() {
        let a = vec![0.3; 10];
        assert_eq!(psnr(&a, &a).unwrap(), (0.0, PSNR_CAP_DB));
        let (mse, db) = psnr(&[0.0, 0.0], &[0.1, 0.1]).unwrap();
        assert!((mse - 0.01).abs() < 1e-15 && (db - 20.0).abs() < 1e-9);
    }

    fn volume_from(grid: Grid, f: impl Fn(Vec3) -> f64) -> ReconVolume {
        let voxels = (0..grid.len()).map(|i| Complex64::new(f(grid.center_of(i)), 0.0)).collect();
        ReconVolume::new(grid, voxels).unwrap()
    }

    #[test]
    fn mip_cases() {
        let grid = Grid::new([4, 5, 6], Aabb::cube(Vec3::ZERO, 1.0)).unwrap();
        let zero = ReconVolume::zeros(grid);
        assert!(mip(&zero, 2).unwrap().pixels.iter().all(|&p| p == 0.0));
        let mut one = ReconVolume::zeros(grid);
        one.voxels[grid.index(1, 3, 2)] = Complex64::new(0.0, 2.0);
        let img = mip(&one, 1).unwrap();
        assert_eq!((img.width, img.height), (4, 6));
        let lit: Vec<usize> = (0..img.pixels.len()).filter(|&i| img.pixels[i] > 0.0).collect();
        assert_eq!(lit, vec![2 * 4 + 1]);
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let rand_vol =
            ReconVolume::new(grid, (0..grid.len()).map(|_| Complex64::new(rng.random(), rng.random())).collect()).unwrap();
        let img = mip(&rand_vol, 0).unwrap();
        for k in 0..6 {
            for j in 0..5 {
                let want = (0..4).map(|i| rand_vol.voxels[grid.index(i, j, k)].norm()).fold(0.0, f64::max);
                assert_eq!(img.pixels[k * 5 + j], want);
            }
        }
        assert!(mip(&zero, 3).is_err());
    }

    #[test]
    fn sweep_picks_indicator_edge() {
        let grid = Grid::new([40; 3], Aabb::cube(Vec3::ZERO, 1.0)).unwrap();
        let sphere = icosphere(Vec3::ZERO, 0.6, 4);
        let cfg = EvalConfig { iou_resolution: 64, chamfer_points: 2000, views: 4, image_size: 24, ..Default::default() };
        let gt = GroundTruth::new(&sphere, grid.bounds, &cfg).unwrap();
        let vol = volume_from(grid, |p| if p.norm() < 0.6 { 1.0 } else { 0.0 });
        let report = threshold_sweep(&vol, &gt, &cfg).unwrap();
        assert!((report.best_threshold - 0.5).abs() <= 0.1 + 1e-9, "{}", report.best_threshold);
        assert!(report.iou > 0.9 && report.chamfer < grid.min_pitch().powi(2), "{}", report.table());
        // Thresholds act on the normalized volume, so scaling changes nothing.
        let scaled = volume_from(grid, |p| if p.norm() < 0.6 { 7.0 } else { 0.0 });
        assert_eq!(threshold_sweep(&scaled, &gt, &cfg).unwrap(), report);
        assert_eq!(threshold_sweep(&ReconVolume::zeros(grid), &gt, &cfg).unwrap_err(), MetricsError::AllEmptyIsosurfaces);
    }

    #[test]
    fn normal_agreement_and_band() {
        let s = icosphere(Vec3::ZERO, 0.5, 3);
        assert!(normal_agreement(&s, &s, 2000, 1).unwrap() > 0.97);
        let grid = Grid::new([20; 3], Aabb::cube(Vec3::ZERO, 1.0)).unwrap();
        let band = surface_band(&s, &grid, 0.1, 2).unwrap();
        assert!(band.count() > 0);
        for i in 0..grid.len() {
            let d = (grid.center_of(i).norm() - 0.5).abs();
            if d < 0.08 {
                assert!(band.cells[i]);
            } else if d > 0.12 {
                assert!(!band.cells[i]);
            }
        }
        let voxels = band.cells.iter().map(|&b| Complex64::new(if b { 1.0 } else { 0.1 }, 0.0)).collect();
        let vol = ReconVolume::new(grid, voxels).unwrap();
        assert!((peak_to_background(&vol, &band).unwrap() - 10.0).abs() < 1e-9);
    }
}
