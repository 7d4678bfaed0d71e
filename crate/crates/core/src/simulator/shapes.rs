//! Procedural test meshes. All are closed with outward normals except the plate.

use super::Mesh;
use crate::geometry::{Aabb, Grid, Vec3};
use crate::scene::marching_cubes;
use std::collections::HashMap;

/// Geodesic sphere from a subdivided icosahedron (20·4^subdivisions faces).
pub fn icosphere(center: Vec3, radius: f64, subdivisions: u32) -> Mesh {
    let t = (1.0 + 5f64.sqrt()) / 2.0;
    let mut verts: Vec<Vec3> = [
        (-1.0, t, 0.0),
        (1.0, t, 0.0),
        (-1.0, -t, 0.0),
        (1.0, -t, 0.0),
        (0.0, -1.0, t),
        (0.0, 1.0, t),
        (0.0, -1.0, -t),
        (0.0, 1.0, -t),
        (t, 0.0, -1.0),
        (t, 0.0, 1.0),
        (-t, 0.0, -1.0),
        (-t, 0.0, 1.0),
    ]
    .iter()
    .map(|&(x, y, z)| Vec3::new(x, y, z).normalize())
    .collect();
    let mut faces: Vec<[u32; 3]> = vec![
        [0, 11, 5],
        [0, 5, 1],
        [0, 1, 7],
        [0, 7, 10],
        [0, 10, 11],
        [1, 5, 9],
        [5, 11, 4],
        [11, 10, 2],
        [10, 7, 6],
        [7, 1, 8],
        [3, 9, 4],
        [3, 4, 2],
        [3, 2, 6],
        [3, 6, 8],
        [3, 8, 9],
        [4, 9, 5],
        [2, 4, 11],
        [6, 2, 10],
        [8, 6, 7],
        [9, 8, 1],
    ];
    for _ in 0..subdivisions {
        let mut mid: HashMap<(u32, u32), u32> = HashMap::new();
        let mut split = |a: u32, b: u32, verts: &mut Vec<Vec3>| {
            *mid.entry((a.min(b), a.max(b))).or_insert_with(|| {
                verts.push(((verts[a as usize] + verts[b as usize]) * 0.5).normalize());
                (verts.len() - 1) as u32
            })
        };
        let mut next = Vec::with_capacity(faces.len() * 4);
        for [a, b, c] in faces {
            let ab = split(a, b, &mut verts);
            let bc = split(b, c, &mut verts);
            let ca = split(c, a, &mut verts);
            next.extend([[a, ab, ca], [b, bc, ab], [c, ca, bc], [ab, bc, ca]]);
        }
        faces = next;
    }
    let verts = verts.into_iter().map(|v| center + v * radius).collect();
    Mesh::new(verts, faces).expect("icosphere is well formed")
}

/// Axis-aligned box.
pub fn box_mesh(bounds: Aabb) -> Mesh {
    let (a, b) = (bounds.min, bounds.max);
    let v: Vec<Vec3> = (0..8)
        .map(|i| {
            Vec3::new(if i & 1 == 0 { a.x } else { b.x }, if i & 2 == 0 { a.y } else { b.y }, if i & 4 == 0 { a.z } else { b.z })
        })
        .collect();
    let quads = [
        [0, 2, 3, 1], // z-
        [4, 5, 7, 6], // z+
        [0, 1, 5, 4], // y-
        [2, 6, 7, 3], // y+
        [0, 4, 6, 2], // x-
        [1, 3, 7, 5], // x+
    ];
    let tris = quads.iter().flat_map(|q| [[q[0], q[1], q[2]], [q[0], q[2], q[3]]]).collect();
    Mesh::new(v, tris).expect("box is well formed")
}

/// Single-sided square of side `2 * half` facing along `normal`.
pub fn plate(center: Vec3, normal: Vec3, half: f64) -> Mesh {
    let n = normal.normalize();
    let (e1, e2) = n.orthonormal_basis();
    let v = vec![center + (-e1 - e2) * half, center + (e1 - e2) * half, center + (e1 + e2) * half, center + (-e1 + e2) * half];
    let mut m = Mesh::new(v, vec![[0, 1, 2], [0, 2, 3]]).expect("plate is well formed");
    if m.normals[0].dot(n) < 0.0 {
        m = Mesh::new(m.vertices, vec![[0, 2, 1], [0, 3, 2]]).expect("plate is well formed");
    }
    m
}

/// Signed distance to a sphere with a rectangular slot cut into its +x side.
///
/// The slot spans `x > center.x + radius·(1 − notch_depth)` and
/// `|y − center.y| < notch_half_width·radius`, through all z.
pub fn notched_sphere_sdf(center: Vec3, radius: f64, notch_depth: f64, notch_half_width: f64) -> impl Fn(Vec3) -> f64 {
    move |p: Vec3| {
        let q = p - center;
        let sphere = q.norm() - radius;
        let x0 = radius * (1.0 - notch_depth);
        let slot_half = Vec3::new((2.0 * radius - x0) / 2.0, notch_half_width * radius, 2.0 * radius);
        let slot_center = Vec3::new((x0 + 2.0 * radius) / 2.0, 0.0, 0.0);
        let d = q - slot_center;
        let o = Vec3::new(d.x.abs() - slot_half.x, d.y.abs() - slot_half.y, d.z.abs() - slot_half.z);
        let outside = o.max(Vec3::ZERO).norm();
        let inside = o.x.max(o.y).max(o.z).min(0.0);
        let slot = outside + inside;
        sphere.max(-slot)
    }
}

/// Sphere with a slot cut into its +x side, meshed by marching cubes with
/// `resolution` samples across the bounding cube.
pub fn sphere_with_notch(center: Vec3, radius: f64, notch_depth: f64, resolution: usize) -> Mesh {
    let sdf = notched_sphere_sdf(center, radius, notch_depth, 0.3);
    let grid = Grid::new([resolution; 3], Aabb::cube(center, radius * 1.15)).expect("positive resolution");
    let values: Vec<f64> = (0..grid.len()).map(|i| -sdf(grid.center_of(i))).collect();
    marching_cubes(&values, &grid, 0.0)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn enclosed_volume(m: &Mesh) -> f64 {
        (0..m.triangles.len())
            .map(|t| {
                let [a, b, c] = m.triangle(t);
                a.dot(b.cross(c)) / 6.0
            })
            .sum()
    }

    #[test]
    fn icosphere_closed_outward() {
        let m = icosphere(Vec3::new(1.0, 2.0, 3.0), 0.5, 2);
        assert_eq!(m.triangles.len(), 320);
        assert_eq!(m.boundary_edge_count(), 0);
        for t in 0..m.triangles.len() {
            let [a, b, c] = m.triangle(t);
            assert!(m.normals[t].dot((a + b + c) / 3.0 - Vec3::new(1.0, 2.0, 3.0)) > 0.0);
        }
    }

    #[test]
    fn box_volume_and_orientation() {
        let m = box_mesh(Aabb::new(Vec3::ZERO, Vec3::new(1.0, 2.0, 3.0)));
        assert_eq!(m.boundary_edge_count(), 0);
        assert!((enclosed_volume(&m) - 6.0).abs() < 1e-12);
    }

    #[test]
    fn plate_faces_requested_way() {
        let n = Vec3::new(0.2, -1.0, 0.3).normalize();
        let m = plate(Vec3::ZERO, n, 0.5);
        assert!(m.normals.iter().all(|&k| (k - n).norm() < 1e-12));
        assert!((m.surface_area() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn notched_sphere_is_closed_and_smaller() {
        let m = sphere_with_notch(Vec3::ZERO, 0.1, 0.5, 40);
        assert_eq!(m.boundary_edge_count(), 0);
        let v = enclosed_volume(&m);
        let full = 4.0 / 3.0 * std::f64::consts::PI * 0.1f64.powi(3);
        assert!(v > 0.7 * full && v < 0.98 * full, "{v} vs {full}");
    }
}
