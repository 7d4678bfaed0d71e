use super::RenderError;
use crate::geometry::Vec3;

/// Frame of the constant time-of-flight ellipsoids of one pose: centred on
/// the baseline midpoint with its x axis pointing from transmitter to
/// receiver. Collocated poses use the world axes.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EllipsoidFrame {
    pub center: Vec3,
    pub axes: [Vec3; 3],
    /// Transmitter to receiver distance.
    pub d: f64,
}

impl EllipsoidFrame {
    pub fn new(tx: Vec3, rx: Vec3) -> Self {
        let center = (tx + rx) * 0.5;
        let d = tx.distance(rx);
        let axes = if d < 1e-12 {
            [Vec3::X, Vec3::Y, Vec3::Z]
        } else {
            let x = (rx - tx) / d;
            let (y, z) = x.orthonormal_basis();
            [x, y, z]
        };
        EllipsoidFrame { center, axes, d: if d < 1e-12 { 0.0 } else { d } }
    }

    pub fn to_local(&self, p: Vec3) -> Vec3 {
        self.dir_to_local(p - self.center)
    }

    pub fn dir_to_local(&self, v: Vec3) -> Vec3 {
        Vec3::new(v.dot(self.axes[0]), v.dot(self.axes[1]), v.dot(self.axes[2]))
    }

    pub fn to_world(&self, p: Vec3) -> Vec3 {
        self.center + self.axes[0] * p.x + self.axes[1] * p.y + self.axes[2] * p.z
    }

    /// Far root of a world-space ray against the ellipsoid of semi-major
    /// axis `r`.
    pub fn depth(&self, origin: Vec3, dir: Vec3, r: f64) -> Result<f64, RenderError> {
        ray_ellipsoid_depth(self.to_local(origin), self.dir_to_local(dir), r, self.d).map(|(_, far)| far)
    }

    /// Implicit function `x²/a² + y²/b² + z²/c² − 1` at a world point.
    pub fn implicit(&self, p: Vec3, r: f64) -> Result<f64, RenderError> {
        let (a, b, c) = semi_axes(r, self.d)?;
        let q = self.to_local(p);
        Ok(q.x * q.x / (a * a) + q.y * q.y / (b * b) + q.z * q.z / (c * c) - 1.0)
    }
}

/// Semi-axes `(a, b, c)` of the ellipsoid with foci `d` apart and
/// semi-major axis `r`.
pub fn semi_axes(r: f64, d: f64) -> Result<(f64, f64, f64), RenderError> {
    if !(r > d / 2.0) {
        return Err(RenderError::DegenerateEllipsoid { r, d });
    }
    let b = (r * r - d * d / 4.0).sqrt();
    Ok((r, b, b))
}

/// Both roots `(near, far)` of the ray `origin + l·dir` (ellipsoid frame)
/// against the ellipsoid. `far` is the positive intersection; `near` is the
/// one behind a ray that starts inside.
pub fn ray_ellipsoid_depth(origin: Vec3, dir: Vec3, r: f64, d: f64) -> Result<(f64, f64), RenderError> {
    let (a, b, c) = semi_axes(r, d)?;
    let inv = [1.0 / (a * a), 1.0 / (b * b), 1.0 / (c * c)];
    let (o, v) = (origin.to_array(), dir.to_array());
    let mut a0 = 0.0;
    let mut b0 = 0.0;
    let mut c0 = -1.0;
    for k in 0..3 {
        a0 += v[k] * v[k] * inv[k];
        b0 += 2.0 * o[k] * v[k] * inv[k];
        c0 += o[k] * o[k] * inv[k];
    }
    let disc = b0 * b0 - 4.0 * a0 * c0;
    if !(disc >= 0.0) || a0 == 0.0 {
        return Err(RenderError::NoIntersection);
    }
    // Cancellation-free pair of roots.
    let q = -0.5 * (b0 + b0.signum() * disc.sqrt());
    let (r1, r2) = if q == 0.0 { (0.0, 0.0) } else { (q / a0, c0 / q) };
    let (near, far) = if r1 <= r2 { (r1, r2) } else { (r2, r1) };
    if !(far > 0.0) {
        return Err(RenderError::NoIntersection);
    }
    Ok((near, far))
}
