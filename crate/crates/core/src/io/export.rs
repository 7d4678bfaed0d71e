use super::IoError;
use crate::geometry::Vec3;
use crate::metrics::Image;
use crate::simulator::Mesh;
use std::fmt::Write as _;
use std::path::Path;

/// Binary 8-bit PGM, scaled so the brightest pixel is 255. Row 0 of the
/// image is written last so that the higher axis points up.
pub fn write_pgm(path: &Path, img: &Image) -> Result<(), IoError> {
    let peak = img.pixels.iter().copied().fold(0.0f64, f64::max);
    let mut out = format!("P5\n{} {}\n255\n", img.width, img.height).into_bytes();
    for row in (0..img.height).rev() {
        for &p in &img.pixels[row * img.width..(row + 1) * img.width] {
            let v = if peak > 0.0 { (p / peak * 255.0).round() } else { 0.0 };
            out.push(v.clamp(0.0, 255.0) as u8);
        }
    }
    std::fs::write(path, out).map_err(|e| IoError::io(path, e))
}

pub fn write_obj(path: &Path, mesh: &Mesh) -> Result<(), IoError> {
    let mut s = String::new();
    for v in &mesh.vertices {
        writeln!(s, "v {} {} {}", v.x, v.y, v.z).expect("string write");
    }
    for t in &mesh.triangles {
        writeln!(s, "f {} {} {}", t[0] + 1, t[1] + 1, t[2] + 1).expect("string write");
    }
    std::fs::write(path, s).map_err(|e| IoError::io(path, e))
}

pub fn read_obj(path: &Path) -> Result<Mesh, IoError> {
    let text = std::fs::read_to_string(path).map_err(|e| IoError::io(path, e))?;
    parse_obj(&text)
}

/// Vertices and faces of an OBJ file. Polygons are fanned into triangles;
/// texture and normal indices and all other statements are ignored.
pub fn parse_obj(text: &str) -> Result<Mesh, IoError> {
    let bad = |line: usize, what: &str| IoError::Malformed(format!("obj line {}: {what}", line + 1));
    let mut vertices = Vec::new();
    let mut triangles = Vec::new();
    for (ln, line) in text.lines().enumerate() {
        let mut it = line.split_whitespace();
        match it.next() {
            Some("v") => {
                let c: Vec<f64> = it.take(3).map(str::parse).collect::<Result<_, _>>().map_err(|_| bad(ln, "bad vertex"))?;
                if c.len() != 3 {
                    return Err(bad(ln, "vertex needs three coordinates"));
                }
                vertices.push(Vec3::new(c[0], c[1], c[2]));
            }
            Some("f") => {
                let idx = it
                    .map(|tok| {
                        let i: i64 = tok.split('/').next().unwrap_or("").parse().map_err(|_| bad(ln, "bad face index"))?;
                        let n = vertices.len() as i64;
                        let zero_based = if i < 0 { n + i } else { i - 1 };
                        if !(0..n).contains(&zero_based) {
                            return Err(bad(ln, "face index out of range"));
                        }
                        Ok(zero_based as u32)
                    })
                    .collect::<Result<Vec<u32>, _>>()?;
                if idx.len() < 3 {
                    return Err(bad(ln, "face needs three vertices"));
                }
                for k in 1..idx.len() - 1 {
                    triangles.push([idx[0], idx[k], idx[k + 1]]);
                }
            }
            _ => {}
        }
    }
    Mesh::new(vertices, triangles).map_err(|e| IoError::Malformed(e.to_string()))
}
