//! Small 3-vector and bounding-box types shared by every stage.

use serde::{Deserialize, Serialize};
use std::ops::{Add, AddAssign, Div, Index, Mul, Neg, Sub, SubAssign};

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Vec3 {
    pub x: f64,
    pub y: f64,
    pub z: f64,
}

impl Vec3 {
    pub const ZERO: Vec3 = Vec3 { x: 0.0, y: 0.0, z: 0.0 };
    pub const X: Vec3 = Vec3 { x: 1.0, y: 0.0, z: 0.0 };
    pub const Y: Vec3 = Vec3 { x: 0.0, y: 1.0, z: 0.0 };
    pub const Z: Vec3 = Vec3 { x: 0.0, y: 0.0, z: 1.0 };

    #[inline]
    pub const fn new(x: f64, y: f64, z: f64) -> Self {
        Vec3 { x, y, z }
    }

    #[inline]
    pub fn splat(v: f64) -> Self {
        Vec3::new(v, v, v)
    }

    #[inline]
    pub fn dot(self, o: Vec3) -> f64 {
        self.x * o.x + self.y * o.y + self.z * o.z
    }

    #[inline]
    pub fn cross(self, o: Vec3) -> Vec3 {
        Vec3::new(self.y * o.z - self.z * o.y, self.z * o.x - self.x * o.z, self.x * o.y - self.y * o.x)
    }

    #[inline]
    pub fn norm_squared(self) -> f64 {
        self.dot(self)
    }

    #[inline]
    pub fn norm(self) -> f64 {
        self.norm_squared().sqrt()
    }

    /// Unit vector in the same direction. Returns `None` for (near) zero vectors.
    #[inline]
    pub fn try_normalize(self) -> Option<Vec3> {
        let n = self.norm();
        if n > 1e-300 && n.is_finite() {
            Some(self / n)
        } else {
            None
        }
    }

    #[inline]
    pub fn normalize(self) -> Vec3 {
        self / self.norm()
    }

    #[inline]
    pub fn distance(self, o: Vec3) -> f64 {
        (self - o).norm()
    }

    #[inline]
    pub fn min(self, o: Vec3) -> Vec3 {
        Vec3::new(self.x.min(o.x), self.y.min(o.y), self.z.min(o.z))
    }

    #[inline]
    pub fn max(self, o: Vec3) -> Vec3 {
        Vec3::new(self.x.max(o.x), self.y.max(o.y), self.z.max(o.z))
    }

    #[inline]
    pub fn mul_elem(self, o: Vec3) -> Vec3 {
        Vec3::new(self.x * o.x, self.y * o.y, self.z * o.z)
    }

    #[inline]
    pub fn to_array(self) -> [f64; 3] {
        [self.x, self.y, self.z]
    }

    #[inline]
    pub fn from_array(a: [f64; 3]) -> Vec3 {
        Vec3::new(a[0], a[1], a[2])
    }

    pub fn is_finite(self) -> bool {
        self.x.is_finite() && self.y.is_finite() && self.z.is_finite()
    }

    /// Two unit vectors completing `self` (assumed unit) to a right-handed
    /// orthonormal frame.
    pub fn orthonormal_basis(self) -> (Vec3, Vec3) {
        // Frisvad / Duff et al. branchless construction.
        let sign = if self.z >= 0.0 { 1.0 } else { -1.0 };
        let a = -1.0 / (sign + self.z);
        let b = self.x * self.y * a;
        let u = Vec3::new(1.0 + sign * self.x * self.x * a, sign * b, -sign * self.x);
        let v = Vec3::new(b, sign + self.y * self.y * a, -self.y);
        (u, v)
    }
}

impl Add for Vec3 {
    type Output = Vec3;
    #[inline]
    fn add(self, o: Vec3) -> Vec3 {
        Vec3::new(self.x + o.x, self.y + o.y, self.z + o.z)
    }
}

impl AddAssign for Vec3 {
    #[inline]
    fn add_assign(&mut self, o: Vec3) {
        *self = *self + o;
    }
}

impl Sub for Vec3 {
    type Output = Vec3;
    #[inline]
    fn sub(self, o: Vec3) -> Vec3 {
        Vec3::new(self.x - o.x, self.y - o.y, self.z - o.z)
    }
}

impl SubAssign for Vec3 {
    #[inline]
    fn sub_assign(&mut self, o: Vec3) {
        *self = *self - o;
    }
}

impl Mul<f64> for Vec3 {
    type Output = Vec3;
    #[inline]
    fn mul(self, s: f64) -> Vec3 {
        Vec3::new(self.x * s, self.y * s, self.z * s)
    }
}

impl Mul<Vec3> for f64 {
    type Output = Vec3;
    #[inline]
    fn mul(self, v: Vec3) -> Vec3 {
        v * self
    }
}

impl Div<f64> for Vec3 {
    type Output = Vec3;
    #[inline]
    fn div(self, s: f64) -> Vec3 {
        Vec3::new(self.x / s, self.y / s, self.z / s)
    }
}

impl Neg for Vec3 {
    type Output = Vec3;
    #[inline]
    fn neg(self) -> Vec3 {
        Vec3::new(-self.x, -self.y, -self.z)
    }
}

impl Index<usize> for Vec3 {
    type Output = f64;
    #[inline]
    fn index(&self, i: usize) -> &f64 {
        match i {
            0 => &self.x,
            1 => &self.y,
            2 => &self.z,
            _ => panic!("Vec3 index {i} out of range"),
        }
    }
}

/// Axis-aligned box in meters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Aabb {
    pub min: Vec3,
    pub max: Vec3,
}

impl Aabb {
    pub fn new(min: Vec3, max: Vec3) -> Self {
        Aabb { min, max }
    }

    /// Cube of side `2 * half` centred on `center`.
    pub fn cube(center: Vec3, half: f64) -> Self {
        Aabb::new(center - Vec3::splat(half), center + Vec3::splat(half))
    }

    pub fn empty() -> Self {
        Aabb::new(Vec3::splat(f64::INFINITY), Vec3::splat(f64::NEG_INFINITY))
    }

    pub fn grow(&mut self, p: Vec3) {
        self.min = self.min.min(p);
        self.max = self.max.max(p);
    }

    pub fn union(&self, o: &Aabb) -> Aabb {
        Aabb::new(self.min.min(o.min), self.max.max(o.max))
    }

    pub fn extent(&self) -> Vec3 {
        self.max - self.min
    }

    pub fn center(&self) -> Vec3 {
        (self.min + self.max) * 0.5
    }

    pub fn diagonal(&self) -> f64 {
        self.extent().norm()
    }

    pub fn is_valid(&self) -> bool {
        self.min.is_finite()
            && self.max.is_finite()
            && self.max.x > self.min.x
            && self.max.y > self.min.y
            && self.max.z > self.min.z
    }

    pub fn contains(&self, p: Vec3) -> bool {
        p.x >= self.min.x && p.x <= self.max.x && p.y >= self.min.y && p.y <= self.max.y && p.z >= self.min.z && p.z <= self.max.z
    }

    pub fn clamp(&self, p: Vec3) -> Vec3 {
        p.max(self.min).min(self.max)
    }

    /// Slab test. Returns the parametric entry/exit distances of the ray, if any.
    pub fn intersect_ray(&self, origin: Vec3, inv_dir: Vec3) -> Option<(f64, f64)> {
        let mut t0 = f64::NEG_INFINITY;
        let mut t1 = f64::INFINITY;
        for axis in 0..3 {
            let lo = (self.min[axis] - origin[axis]) * inv_dir[axis];
            let hi = (self.max[axis] - origin[axis]) * inv_dir[axis];
            // NaN arises for a zero direction component with the origin on a
            // slab plane; such a ray grazes the box and that axis imposes nothing.
            if lo.is_nan() || hi.is_nan() {
                continue;
            }
            let (lo, hi) = if lo <= hi { (lo, hi) } else { (hi, lo) };
            t0 = t0.max(lo);
            t1 = t1.min(hi);
        }
        (t1 >= t0.max(0.0)).then_some((t0, t1))
    }

    /// Largest distance from `p` to any corner of the box.
    pub fn max_distance_from(&self, p: Vec3) -> f64 {
        let mut best: f64 = 0.0;
        for i in 0..8 {
            let c = Vec3::new(
                if i & 1 == 0 { self.min.x } else { self.max.x },
                if i & 2 == 0 { self.min.y } else { self.max.y },
                if i & 4 == 0 { self.min.z } else { self.max.z },
            );
            best = best.max(c.distance(p));
        }
        best
    }
}

/// Regular grid of voxel centres filling `bounds`, x fastest.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Grid {
    pub dims: [usize; 3],
    pub bounds: Aabb,
}

impl Grid {
    pub fn new(dims: [usize; 3], bounds: Aabb) -> Option<Self> {
        (dims.iter().all(|&n| n > 0) && bounds.is_valid()).then_some(Grid { dims, bounds })
    }

    pub fn len(&self) -> usize {
        self.dims[0] * self.dims[1] * self.dims[2]
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Voxel edge lengths.
    pub fn pitch(&self) -> Vec3 {
        let e = self.bounds.extent();
        Vec3::new(e.x / self.dims[0] as f64, e.y / self.dims[1] as f64, e.z / self.dims[2] as f64)
    }

    /// Smallest voxel edge.
    pub fn min_pitch(&self) -> f64 {
        let p = self.pitch();
        p.x.min(p.y).min(p.z)
    }

    pub fn index(&self, i: usize, j: usize, k: usize) -> usize {
        i + self.dims[0] * (j + self.dims[1] * k)
    }

    pub fn coords(&self, index: usize) -> [usize; 3] {
        let i = index % self.dims[0];
        let j = (index / self.dims[0]) % self.dims[1];
        [i, j, index / (self.dims[0] * self.dims[1])]
    }

    pub fn center(&self, i: usize, j: usize, k: usize) -> Vec3 {
        let p = self.pitch();
        self.bounds.min + Vec3::new((i as f64 + 0.5) * p.x, (j as f64 + 0.5) * p.y, (k as f64 + 0.5) * p.z)
    }

    pub fn center_of(&self, index: usize) -> Vec3 {
        let [i, j, k] = self.coords(index);
        self.center(i, j, k)
    }

    /// Continuous index coordinates of `x`: voxel centres sit at integers.
    pub fn continuous(&self, x: Vec3) -> Vec3 {
        let p = self.pitch();
        let r = x - self.bounds.min;
        Vec3::new(r.x / p.x - 0.5, r.y / p.y - 0.5, r.z / p.z - 0.5)
    }

    /// Index of the voxel containing `x`, if inside the bounds.
    pub fn voxel_of(&self, x: Vec3) -> Option<usize> {
        if !self.bounds.contains(x) {
            return None;
        }
        let c = self.continuous(x);
        let f = |v: f64, n: usize| ((v + 0.5).floor().max(0.0) as usize).min(n - 1);
        Some(self.index(f(c.x, self.dims[0]), f(c.y, self.dims[1]), f(c.z, self.dims[2])))
    }

    /// Same bounds grown by `n` voxels on every side.
    pub fn padded(&self, n: usize) -> Grid {
        let grow = self.pitch() * n as f64;
        Grid { dims: self.dims.map(|d| d + 2 * n), bounds: Aabb::new(self.bounds.min - grow, self.bounds.max + grow) }
    }
}

/// Derive an independent stream seed for item `index` of a run seeded with `seed`.
///
/// SplitMix64 finalizer; keeps per-pose and per-sensor streams stable no matter
/// how work is scheduled.
pub fn derive_seed(seed: u64, index: u64) -> u64 {
    let mut z = seed.wrapping_add(0x9E37_79B9_7F4A_7C15).wrapping_add(index.wrapping_mul(0xBF58_476D_1CE4_E5B9));
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}
