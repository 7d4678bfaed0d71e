//! Bounding volume hierarchy for first-hit ray queries against a [`Mesh`].

use super::Mesh;
use crate::geometry::{Aabb, Vec3};

const LEAF_SIZE: usize = 4;

#[derive(Debug, Clone)]
struct Node {
    bounds: Aabb,
    /// Leaf: `count > 0`, triangles `order[start..start + count]`.
    /// Interior: children at `start` and `start + 1`.
    start: u32,
    count: u32,
}

/// Closest intersection along a ray.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Hit {
    pub distance: f64,
    pub triangle: usize,
    pub point: Vec3,
    pub normal: Vec3,
}

#[derive(Debug, Clone)]
pub struct Bvh {
    nodes: Vec<Node>,
    order: Vec<u32>,
    tris: Vec<[Vec3; 3]>,
    normals: Vec<Vec3>,
}

impl Bvh {
    pub fn build(mesh: &Mesh) -> Self {
        let tris: Vec<[Vec3; 3]> = (0..mesh.triangles.len()).map(|i| mesh.triangle(i)).collect();
        let centroids: Vec<Vec3> = tris.iter().map(|t| (t[0] + t[1] + t[2]) / 3.0).collect();
        let mut order: Vec<u32> = (0..tris.len() as u32).collect();
        let mut nodes = vec![Node { bounds: Aabb::empty(), start: 0, count: 0 }];
        if !tris.is_empty() {
            build_node(&mut nodes, 0, &mut order, 0, tris.len(), &tris, &centroids);
        }
        Bvh { nodes, order, tris, normals: mesh.normals.clone() }
    }

    pub fn is_empty(&self) -> bool {
        self.tris.is_empty()
    }

    /// First intersection with `t in (t_min, t_max)`. `dir` must be unit length.
    pub fn first_hit(&self, origin: Vec3, dir: Vec3, t_min: f64, t_max: f64) -> Option<Hit> {
        if self.tris.is_empty() {
            return None;
        }
        let inv = Vec3::new(1.0 / dir.x, 1.0 / dir.y, 1.0 / dir.z);
        let mut best_t = t_max;
        let mut best_tri = usize::MAX;
        let mut stack = [0u32; 64];
        let mut sp = 1;
        while sp > 0 {
            sp -= 1;
            let node = &self.nodes[stack[sp] as usize];
            match node.bounds.intersect_ray(origin, inv) {
                Some((t0, _)) if t0 <= best_t => {}
                _ => continue,
            }
            if node.count > 0 {
                for &ti in &self.order[node.start as usize..(node.start + node.count) as usize] {
                    if let Some(t) = intersect_triangle(origin, dir, &self.tris[ti as usize]) {
                        if t > t_min && t < best_t {
                            best_t = t;
                            best_tri = ti as usize;
                        }
                    }
                }
            } else {
                stack[sp] = node.start;
                stack[sp + 1] = node.start + 1;
                sp += 2;
            }
        }
        (best_tri != usize::MAX).then(|| Hit {
            distance: best_t,
            triangle: best_tri,
            point: origin + dir * best_t,
            normal: self.normals[best_tri],
        })
    }

    /// Whether anything blocks the open segment `(t_min, t_max)` along the ray.
    pub fn occluded(&self, origin: Vec3, dir: Vec3, t_min: f64, t_max: f64) -> bool {
        self.first_hit(origin, dir, t_min, t_max).is_some()
    }
}

fn build_node(
    nodes: &mut Vec<Node>,
    index: usize,
    order: &mut [u32],
    start: usize,
    end: usize,
    tris: &[[Vec3; 3]],
    centroids: &[Vec3],
) {
    let mut bounds = Aabb::empty();
    let mut cbounds = Aabb::empty();
    for &ti in &order[start..end] {
        for v in tris[ti as usize] {
            bounds.grow(v);
        }
        cbounds.grow(centroids[ti as usize]);
    }
    let count = end - start;
    if count <= LEAF_SIZE {
        nodes[index] = Node { bounds, start: start as u32, count: count as u32 };
        return;
    }
    let ext = cbounds.extent();
    let axis = if ext.x >= ext.y && ext.x >= ext.z {
        0
    } else if ext.y >= ext.z {
        1
    } else {
        2
    };
    let mid = start + count / 2;
    order[start..end].select_nth_unstable_by(count / 2, |a, b| {
        centroids[*a as usize][axis].partial_cmp(&centroids[*b as usize][axis]).unwrap_or(std::cmp::Ordering::Equal)
    });
    let left = nodes.len();
    nodes.push(Node { bounds: Aabb::empty(), start: 0, count: 0 });
    nodes.push(Node { bounds: Aabb::empty(), start: 0, count: 0 });
    nodes[index] = Node { bounds, start: left as u32, count: 0 };
    build_node(nodes, left, order, start, mid, tris, centroids);
    build_node(nodes, left + 1, order, mid, end, tris, centroids);
}

/// Möller–Trumbore; returns the ray parameter of a hit, either side facing.
#[inline]
pub fn intersect_triangle(origin: Vec3, dir: Vec3, tri: &[Vec3; 3]) -> Option<f64> {
    let e1 = tri[1] - tri[0];
    let e2 = tri[2] - tri[0];
    let p = dir.cross(e2);
    let det = e1.dot(p);
    if det.abs() < 1e-300 {
        return None;
    }
    let inv = 1.0 / det;
    let s = origin - tri[0];
    let u = s.dot(p) * inv;
    if !(0.0..=1.0).contains(&u) {
        return None;
    }
    let q = s.cross(e1);
    let v = dir.dot(q) * inv;
    if v < 0.0 || u + v > 1.0 {
        return None;
    }
    Some(e2.dot(q) * inv)
}

#[cfg(test)]
mod tests {
    use super::super::shapes;
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn bvh_agrees_with_brute_force() {
        let mesh = shapes::icosphere(Vec3::new(0.1, -0.2, 0.05), 0.3, 3);
        let bvh = Bvh::build(&mesh);
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for _ in 0..500 {
            let o = Vec3::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0));
            let d = Vec3::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)).normalize();
            let brute = (0..mesh.triangles.len())
                .filter_map(|i| intersect_triangle(o, d, &mesh.triangle(i)).filter(|&t| t > 1e-9))
                .fold(f64::INFINITY, f64::min);
            let fast = bvh.first_hit(o, d, 1e-9, f64::INFINITY).map(|h| h.distance).unwrap_or(f64::INFINITY);
            assert!(brute == fast || (brute - fast).abs() < 1e-12);
        }
    }

    #[test]
    fn empty_bvh_never_hits() {
        let bvh = Bvh::build(&Mesh::new(vec![], vec![]).unwrap());
        assert!(bvh.first_hit(Vec3::ZERO, Vec3::X, 0.0, 1e9).is_none());
    }
}
