use super::mc_tables::TRIANGLES;
use crate::geometry::{Grid, Vec3};
use crate::simulator::Mesh;
use std::collections::HashMap;

const CORNERS: [[usize; 3]; 8] = [[0, 0, 0], [1, 0, 0], [1, 1, 0], [0, 1, 0], [0, 0, 1], [1, 0, 1], [1, 1, 1], [0, 1, 1]];

/// Each cube edge as (lower corner offset, axis).
const EDGES: [([usize; 3], usize); 12] = [
    ([0, 0, 0], 0),
    ([1, 0, 0], 1),
    ([0, 1, 0], 0),
    ([0, 0, 0], 1),
    ([0, 0, 1], 0),
    ([1, 0, 1], 1),
    ([0, 1, 1], 0),
    ([0, 0, 1], 1),
    ([0, 0, 0], 2),
    ([1, 0, 0], 2),
    ([1, 1, 0], 2),
    ([0, 1, 0], 2),
];

/// Isosurface of `values` (sampled at the voxel centres of `grid`) at `iso`.
///
/// The region `value > iso` is treated as the inside; triangles wind so that
/// face normals point out of it. Vertices on a shared grid edge are shared,
/// so a surface that does not touch the grid boundary comes out closed.
pub fn marching_cubes(values: &[f64], grid: &Grid, iso: f64) -> Mesh {
    assert_eq!(values.len(), grid.len(), "value count must match the grid");
    let [nx, ny, nz] = grid.dims;
    let mut vertices = Vec::new();
    let mut triangles = Vec::new();
    let mut edge_vertex: HashMap<(usize, usize), u32> = HashMap::new();
    if nx < 2 || ny < 2 || nz < 2 {
        return Mesh::new(vertices, triangles).expect("empty mesh is valid");
    }
    for k in 0..nz - 1 {
        for j in 0..ny - 1 {
            for i in 0..nx - 1 {
                let mut case = 0usize;
                for (c, off) in CORNERS.iter().enumerate() {
                    let v = values[grid.index(i + off[0], j + off[1], k + off[2])];
                    if v <= iso {
                        case |= 1 << c;
                    }
                }
                if case == 0 || case == 255 {
                    continue;
                }
                let row = &TRIANGLES[case];
                let mut t = 0;
                while t < 15 && row[t] >= 0 {
                    let mut tri = [0u32; 3];
                    for (slot, &e) in tri.iter_mut().zip(&row[t..t + 3]) {
                        let (off, axis) = EDGES[e as usize];
                        let a = [i + off[0], j + off[1], k + off[2]];
                        let key = (grid.index(a[0], a[1], a[2]), axis);
                        *slot = *edge_vertex.entry(key).or_insert_with(|| {
                            let mut b = a;
                            b[axis] += 1;
                            let va = values[key.0];
                            let vb = values[grid.index(b[0], b[1], b[2])];
                            let pa = grid.center(a[0], a[1], a[2]);
                            let pb = grid.center(b[0], b[1], b[2]);
                            let s = if (vb - va).abs() > 0.0 { ((iso - va) / (vb - va)).clamp(0.0, 1.0) } else { 0.5 };
                            vertices.push(pa + (pb - pa) * s);
                            (vertices.len() - 1) as u32
                        });
                    }
                    triangles.push(tri);
                    t += 3;
                }
            }
        }
    }
    Mesh::new(vertices, triangles).expect("marching cubes emits valid indices")
}

/// Mean vertex position.
pub fn centroid(mesh: &Mesh) -> Vec3 {
    if mesh.vertices.is_empty() {
        return Vec3::ZERO;
    }
    mesh.vertices.iter().fold(Vec3::ZERO, |a, &v| a + v) / mesh.vertices.len() as f64
}
