use super::SceneModel;
use crate::geometry::{Aabb, Grid, Vec3};
use num_complex::Complex64;

/// Complex voxel grid blended trilinearly between voxel centres.
///
/// Parameters are stored as interleaved `(re, im)` pairs, x fastest.
#[derive(Debug, Clone, PartialEq)]
pub struct VoxelSceneModel {
    pub grid: Grid,
    params: Vec<f64>,
}

/// One of the eight blend corners: voxel index, weight and weight gradient.
#[derive(Debug, Clone, Copy)]
struct Corner {
    index: usize,
    weight: f64,
    dweight: [f64; 3],
}

impl VoxelSceneModel {
    pub fn zeros(grid: Grid) -> Self {
        VoxelSceneModel { grid, params: vec![0.0; 2 * grid.len()] }
    }

    pub fn from_values(grid: Grid, values: &[Complex64]) -> Self {
        assert_eq!(values.len(), grid.len(), "one value per voxel");
        let params = values.iter().flat_map(|v| [v.re, v.im]).collect();
        VoxelSceneModel { grid, params }
    }

    /// Small complex Gaussian values, so that magnitude gradients are defined
    /// from the first step.
    pub fn random(grid: Grid, std: f64, seed: u64) -> Self {
        use rand::SeedableRng;
        use rand_distr::{Distribution, Normal};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        let normal = Normal::new(0.0, std.abs()).expect("finite std");
        let params = (0..2 * grid.len()).map(|_| normal.sample(&mut rng)).collect();
        VoxelSceneModel { grid, params }
    }

    pub fn voxel(&self, index: usize) -> Complex64 {
        Complex64::new(self.params[2 * index], self.params[2 * index + 1])
    }

    pub fn values(&self) -> Vec<Complex64> {
        (0..self.grid.len()).map(|i| self.voxel(i)).collect()
    }

    fn corners(&self, x: Vec3) -> [Corner; 8] {
        let c = self.grid.continuous(x);
        let pitch = self.grid.pitch();
        let mut base = [0usize; 3];
        let mut frac = [0.0; 3];
        let mut slope = [0.0; 3];
        for a in 0..3 {
            let n = self.grid.dims[a];
            let inv_pitch = 1.0 / pitch[a];
            if n == 1 {
                continue;
            }
            let hi = (n - 1) as f64;
            let v = c[a];
            let clamped = v.clamp(0.0, hi);
            let i0 = (clamped.floor() as usize).min(n - 2);
            base[a] = i0;
            frac[a] = clamped - i0 as f64;
            // Outside the centre lattice the blend is flat.
            slope[a] = if (0.0..=hi).contains(&v) { inv_pitch } else { 0.0 };
        }
        let mut out = [Corner { index: 0, weight: 0.0, dweight: [0.0; 3] }; 8];
        for (bits, corner) in out.iter_mut().enumerate() {
            let mut idx = [0usize; 3];
            let mut w = [0.0; 3];
            let mut dw = [0.0; 3];
            for a in 0..3 {
                let up = (bits >> a) & 1 == 1 && self.grid.dims[a] > 1;
                idx[a] = base[a] + usize::from(up);
                if self.grid.dims[a] == 1 {
                    w[a] = if (bits >> a) & 1 == 0 { 1.0 } else { 0.0 };
                    dw[a] = 0.0;
                } else if up {
                    w[a] = frac[a];
                    dw[a] = slope[a];
                } else {
                    w[a] = 1.0 - frac[a];
                    dw[a] = -slope[a];
                }
            }
            *corner = Corner {
                index: self.grid.index(idx[0], idx[1], idx[2]),
                weight: w[0] * w[1] * w[2],
                dweight: [dw[0] * w[1] * w[2], w[0] * dw[1] * w[2], w[0] * w[1] * dw[2]],
            };
        }
        out
    }
}

impl SceneModel for VoxelSceneModel {
    fn bounds(&self) -> Aabb {
        self.grid.bounds
    }

    fn n_params(&self) -> usize {
        self.params.len()
    }

    fn params(&self) -> &[f64] {
        &self.params
    }

    fn params_mut(&mut self) -> &mut [f64] {
        &mut self.params
    }

    fn query(&self, x: Vec3) -> Complex64 {
        self.corners(x).iter().filter(|c| c.weight != 0.0).map(|c| self.voxel(c.index) * c.weight).sum()
    }

    fn backward(&self, x: Vec3, cot: Complex64, grad: &mut [f64]) {
        for c in self.corners(x) {
            if c.weight != 0.0 {
                grad[2 * c.index] += cot.re * c.weight;
                grad[2 * c.index + 1] += cot.im * c.weight;
            }
        }
    }

    fn feature_size(&self) -> f64 {
        self.grid.min_pitch()
    }

    fn query_jacobian(&self, x: Vec3, _h: f64) -> (Complex64, [Complex64; 3]) {
        let mut v = Complex64::new(0.0, 0.0);
        let mut j = [Complex64::new(0.0, 0.0); 3];
        for c in self.corners(x) {
            let s = self.voxel(c.index);
            v += s * c.weight;
            for (ja, dw) in j.iter_mut().zip(c.dweight) {
                *ja += s * dw;
            }
        }
        (v, j)
    }

    fn backward_jacobian(&self, x: Vec3, _h: f64, cot_value: Complex64, cot_jac: [Complex64; 3], grad: &mut [f64]) {
        for c in self.corners(x) {
            let mut g = cot_value * c.weight;
            for (cj, dw) in cot_jac.iter().zip(c.dweight) {
                g += cj * dw;
            }
            grad[2 * c.index] += g.re;
            grad[2 * c.index + 1] += g.im;
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_model(dims: [usize; 3], seed: u64) -> VoxelSceneModel {
        let grid = Grid::new(dims, Aabb::new(Vec3::new(-0.3, 0.1, -0.2), Vec3::new(0.5, 0.4, 0.6))).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let vals: Vec<Complex64> =
            (0..grid.len()).map(|_| Complex64::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0))).collect();
        VoxelSceneModel::from_values(grid, &vals)
    }

    /// Dense trilinear oracle written from scratch over continuous coordinates.
    fn oracle(m: &VoxelSceneModel, x: Vec3) -> Complex64 {
        let c = m.grid.continuous(x);
        let mut acc = Complex64::new(0.0, 0.0);
        for k in 0..m.grid.dims[2] {
            for j in 0..m.grid.dims[1] {
                for i in 0..m.grid.dims[0] {
                    let hat = |v: f64, idx: usize, n: usize| {
                        let v = v.clamp(0.0, (n - 1) as f64);
                        (1.0 - (v - idx as f64).abs()).max(0.0)
                    };
                    let w = hat(c.x, i, m.grid.dims[0]) * hat(c.y, j, m.grid.dims[1]) * hat(c.z, k, m.grid.dims[2]);
                    acc += m.voxel(m.grid.index(i, j, k)) * w;
                }
            }
        }
        acc
    }

    #[test]
    fn constant_field() {
        let grid = Grid::new([4, 5, 6], Aabb::cube(Vec3::ZERO, 1.0)).unwrap();
        let m = VoxelSceneModel::from_values(grid, &vec![Complex64::new(1.0, 0.0); grid.len()]);
        for p in [Vec3::ZERO, Vec3::new(0.9, -0.9, 0.3), Vec3::new(-1.0, 1.0, 1.0)] {
            assert!((m.query(p) - Complex64::new(1.0, 0.0)).norm() < 1e-12);
        }
    }

    #[test]
    fn exact_at_centres_and_midpoints() {
        let m = random_model([5, 4, 3], 3);
        for idx in 0..m.grid.len() {
            assert!((m.query(m.grid.center_of(idx)) - m.voxel(idx)).norm() < 1e-12);
        }
        let (a, b) = (m.grid.index(1, 2, 1), m.grid.index(2, 2, 1));
        let mid = (m.grid.center_of(a) + m.grid.center_of(b)) * 0.5;
        assert!((m.query(mid) - (m.voxel(a) + m.voxel(b)) * 0.5).norm() < 1e-12);
    }

    #[test]
    fn matches_dense_oracle() {
        let m = random_model([6, 5, 4], 9);
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let b = m.grid.bounds;
        for _ in 0..1000 {
            let p = Vec3::new(
                rng.random_range(b.min.x..b.max.x),
                rng.random_range(b.min.y..b.max.y),
                rng.random_range(b.min.z..b.max.z),
            );
            assert!((m.query(p) - oracle(&m, p)).norm() < 1e-12);
        }
    }

    #[test]
    fn parameter_gradient_matches_fd() {
        let m = random_model([4, 4, 4], 5);
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let target = Complex64::new(0.3, -0.2);
        for _ in 0..5 {
            let b = m.grid.bounds;
            let x = b.min + b.extent().mul_elem(Vec3::new(rng.random(), rng.random(), rng.random()));
            let loss = |mm: &VoxelSceneModel| (mm.query(x) - target).norm_sqr();
            let mut grad = vec![0.0; m.n_params()];
            m.backward(x, (m.query(x) - target) * 2.0, &mut grad);
            for _ in 0..10 {
                let p = rng.random_range(0..m.n_params());
                let h = 1e-6;
                let (mut a, mut bm) = (m.clone(), m.clone());
                a.params_mut()[p] += h;
                bm.params_mut()[p] -= h;
                let fd = (loss(&a) - loss(&bm)) / (2.0 * h);
                assert!((fd - grad[p]).abs() <= 1e-4 * fd.abs().max(1e-8) + 1e-10, "{fd} vs {}", grad[p]);
            }
        }
    }

    #[test]
    fn jacobian_matches_fd_and_its_adjoint() {
        let m = random_model([5, 5, 5], 11);
        let x = Vec3::new(0.11, 0.23, 0.17);
        let (_, j) = m.query_jacobian(x, 0.0);
        let h = 1e-6;
        for (a, e) in [Vec3::X, Vec3::Y, Vec3::Z].iter().enumerate() {
            let fd = (m.query(x + *e * h) - m.query(x - *e * h)) / (2.0 * h);
            assert!((fd - j[a]).norm() < 1e-6);
        }
        // Adjoint: <cot, J(θ)> is linear in θ, so its gradient is exact.
        let cot = [Complex64::new(0.4, -1.0), Complex64::new(2.0, 0.5), Complex64::new(-0.3, 0.2)];
        let mut grad = vec![0.0; m.n_params()];
        m.backward_jacobian(x, 0.0, Complex64::new(0.0, 0.0), cot, &mut grad);
        let dot = |mm: &VoxelSceneModel| {
            let (_, jj) = mm.query_jacobian(x, 0.0);
            (0..3).map(|a| cot[a].re * jj[a].re + cot[a].im * jj[a].im).sum::<f64>()
        };
        let base = dot(&m);
        for p in (0..m.n_params()).step_by(7) {
            let mut mm = m.clone();
            mm.params_mut()[p] += 1.0;
            assert!((dot(&mm) - base - grad[p]).abs() < 1e-9);
        }
    }
}
