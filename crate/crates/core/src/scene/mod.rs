//! Differentiable complex scatterer fields.
//!
//! A [`SceneModel`] maps a point to a complex scatterer value and can push a
//! cotangent on that value back into its flat parameter vector. Gradients
//! follow one convention throughout: for a real loss `L` and output
//! `z = a + ib`, the cotangent is `∂L/∂a + i·∂L/∂b`.

mod hash;
mod marching;
mod mc_tables;
mod voxel;

pub use hash::{HashConfig, HashGrid, HashMlp, HashMlpSceneModel, Mlp};
pub use marching::{centroid, marching_cubes};
pub use voxel::VoxelSceneModel;

use crate::beamform::ReconVolume;
use crate::geometry::{Aabb, Grid, Vec3};
use crate::simulator::Mesh;
use num_complex::Complex64;
use rayon::prelude::*;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum SceneError {
    #[error("isosurface at threshold {0} is empty")]
    EmptyIsosurface(f64),
    #[error("invalid scene configuration: {0}")]
    InvalidConfig(String),
}

/// A queryable, differentiable complex field over a bounding box.
pub trait SceneModel: Send + Sync {
    fn bounds(&self) -> Aabb;
    fn n_params(&self) -> usize;
    fn params(&self) -> &[f64];
    fn params_mut(&mut self) -> &mut [f64];

    /// Field value at `x`; points outside the bounds are clamped onto them.
    fn query(&self, x: Vec3) -> Complex64;

    /// Accumulate `cot` (a cotangent on `query(x)`) into `grad`.
    fn backward(&self, x: Vec3, cot: Complex64, grad: &mut [f64]);

    /// Length scale of the finest detail the model can represent. Used as
    /// the default finite-difference step (halved) and regularizer offset.
    fn feature_size(&self) -> f64;

    /// Value and spatial derivatives `∂σ/∂x_k`. The default uses central
    /// differences with step `h`.
    fn query_jacobian(&self, x: Vec3, h: f64) -> (Complex64, [Complex64; 3]) {
        let mut jac = [Complex64::new(0.0, 0.0); 3];
        for (k, j) in jac.iter_mut().enumerate() {
            let e = axis(k) * h;
            *j = (self.query(x + e) - self.query(x - e)) / (2.0 * h);
        }
        (self.query(x), jac)
    }

    /// Adjoint of [`query_jacobian`](Self::query_jacobian) for cotangents on
    /// the value and on each derivative.
    fn backward_jacobian(&self, x: Vec3, h: f64, cot_value: Complex64, cot_jac: [Complex64; 3], grad: &mut [f64]) {
        self.backward(x, cot_value, grad);
        for (k, c) in cot_jac.iter().enumerate() {
            if c.norm_sqr() == 0.0 {
                continue;
            }
            let e = axis(k) * h;
            self.backward(x + e, c / (2.0 * h), grad);
            self.backward(x - e, -c / (2.0 * h), grad);
        }
    }

    /// Value plus a flag telling whether `x` was inside the bounds.
    fn query_checked(&self, x: Vec3) -> (Complex64, bool) {
        (self.query(x), self.bounds().contains(x))
    }
}

fn axis(k: usize) -> Vec3 {
    match k {
        0 => Vec3::X,
        1 => Vec3::Y,
        _ => Vec3::Z,
    }
}

/// `∇|σ|` at `x`, from the model's value and Jacobian. Returns the gradient,
/// the value and the Jacobian so callers can reuse them.
pub fn magnitude_gradient(value: Complex64, jac: &[Complex64; 3]) -> Option<Vec3> {
    let m = value.norm();
    if m == 0.0 {
        return None;
    }
    let g = |j: Complex64| (value.conj() * j).re / m;
    Some(Vec3::new(g(jac[0]), g(jac[1]), g(jac[2])))
}

/// Gradient norms below this leave the normal undefined.
pub const NORMAL_EPS: f64 = 1e-8;

/// Unit normal `∇|σ| / ‖∇|σ|‖`, or `None` where the gradient vanishes.
pub fn normal(model: &dyn SceneModel, x: Vec3, fd_step: f64) -> Option<Vec3> {
    let (v, jac) = model.query_jacobian(x, fd_step);
    let g = magnitude_gradient(v, &jac)?;
    let n = g.norm();
    (n >= NORMAL_EPS).then(|| g / n)
}

/// Sample the model at every voxel centre of `grid`.
pub fn sample_model(model: &dyn SceneModel, grid: &Grid) -> ReconVolume {
    let voxels = (0..grid.len()).into_par_iter().map(|i| model.query(grid.center_of(i))).collect();
    ReconVolume { grid: *grid, voxels }
}

/// Marching-cubes mesh of the peak-normalized magnitude at `threshold`.
///
/// The volume is padded with one layer of zeros so that surfaces touching
/// the grid boundary still close.
pub fn extract_mesh(volume: &ReconVolume, threshold: f64) -> Result<Mesh, SceneError> {
    if !(threshold > 0.0 && threshold < 1.0) {
        return Err(SceneError::EmptyIsosurface(threshold));
    }
    let norm = volume.normalized_magnitudes();
    let grid = volume.grid;
    let padded = grid.padded(1);
    let mut values = vec![0.0; padded.len()];
    for k in 0..grid.dims[2] {
        for j in 0..grid.dims[1] {
            for i in 0..grid.dims[0] {
                values[padded.index(i + 1, j + 1, k + 1)] = norm[grid.index(i, j, k)];
            }
        }
    }
    let mesh = marching_cubes(&values, &padded, threshold);
    if mesh.is_empty() {
        return Err(SceneError::EmptyIsosurface(threshold));
    }
    Ok(mesh)
}

#[cfg(test)]
mod tests {
    use super::*;

    /// Analytic field for oracle tests: no parameters.
    struct Field<F: Fn(Vec3) -> Complex64 + Send + Sync>(F);

    impl<F: Fn(Vec3) -> Complex64 + Send + Sync> SceneModel for Field<F> {
        fn bounds(&self) -> Aabb {
            Aabb::cube(Vec3::ZERO, 10.0)
        }
        fn n_params(&self) -> usize {
            0
        }
        fn params(&self) -> &[f64] {
            &[]
        }
        fn params_mut(&mut self) -> &mut [f64] {
            &mut []
        }
        fn query(&self, x: Vec3) -> Complex64 {
            (self.0)(x)
        }
        fn backward(&self, _: Vec3, _: Complex64, _: &mut [f64]) {}
        fn feature_size(&self) -> f64 {
            0.01
        }
    }

    #[test]
    fn ramp_normal_is_x() {
        let f = Field(|x: Vec3| Complex64::new(x.x + 5.0, 0.0));
        for p in [Vec3::new(0.1, 0.2, 0.3), Vec3::new(-1.0, 3.0, 0.5)] {
            let n = normal(&f, p, 1e-4).unwrap();
            assert!((n - Vec3::X).norm() < 1e-9);
        }
    }

    #[test]
    fn blob_normal_is_radial() {
        // |σ| decreases outward, so the gradient points toward the centre.
        let f = Field(|x: Vec3| Complex64::from_polar((-x.norm_squared() / 0.5).exp(), 0.7 * x.x));
        for p in [Vec3::new(0.3, 0.1, -0.2), Vec3::new(-0.5, 0.5, 0.5), Vec3::new(0.0, 0.0, 0.9)] {
            let n = normal(&f, p, 1e-5).unwrap();
            assert!(n.dot(-p.normalize()) >= 0.99);
        }
    }

    #[test]
    fn constant_normal_undefined() {
        let f = Field(|_| Complex64::new(1.0, 1.0));
        assert!(normal(&f, Vec3::new(0.2, 0.2, 0.2), 1e-3).is_none());
    }

    #[test]
    fn sphere_indicator_mesh() {
        let grid = Grid::new([48; 3], Aabb::cube(Vec3::ZERO, 1.0)).unwrap();
        let r0 = 0.6;
        let voxels =
            (0..grid.len()).map(|i| Complex64::new(if grid.center_of(i).norm() <= r0 { 1.0 } else { 0.0 }, 0.0)).collect();
        let vol = ReconVolume { grid, voxels };
        let mesh = extract_mesh(&vol, 0.5).unwrap();
        let tol = 1.5 * grid.pitch().norm();
        assert!(mesh.vertices.iter().all(|v| (v.norm() - r0).abs() <= tol));
        assert_eq!(mesh.boundary_edge_count(), 0);
        assert_eq!(extract_mesh(&vol, 1.5).unwrap_err(), SceneError::EmptyIsosurface(1.5));
    }

    #[test]
    fn boundary_touching_surface_closes() {
        let grid = Grid::new([6; 3], Aabb::cube(Vec3::ZERO, 1.0)).unwrap();
        let vol = ReconVolume { grid, voxels: vec![Complex64::new(1.0, 0.0); grid.len()] };
        let mesh = extract_mesh(&vol, 0.5).unwrap();
        assert_eq!(mesh.boundary_edge_count(), 0);
    }
}
