//! Rigid poses, the 6D rotation encoding, and analytic signed distance
//! fields for the peg and the plate-with-hole.

use nalgebra::{Matrix3, Rotation3, Unit, Vector2, Vector3};
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;

use crate::error::GeometryError;

pub type Vec3 = Vector3<f64>;
pub type Mat3 = Matrix3<f64>;

/// Number of rim points sampled around the tip and around the lateral ring.
pub const RIM_SAMPLES: usize = 16;
/// Height of the lateral sample ring above the peg tip (m).
pub const LATERAL_RING_HEIGHT: f64 = 0.005;

/// World-from-body rigid transform.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Pose {
    pub position: Vec3,
    pub rotation: Mat3,
}

impl Pose {
    pub fn identity() -> Self {
        Self { position: Vec3::zeros(), rotation: Mat3::identity() }
    }

    pub fn new(position: Vec3, rotation: Mat3) -> Self {
        Self { position, rotation }
    }

    pub fn from_translation(position: Vec3) -> Self {
        Self { position, rotation: Mat3::identity() }
    }

    /// Rotation of `angle` radians about `axis` (normalized internally) with
    /// no translation.
    pub fn from_axis_angle(axis: Vec3, angle: f64) -> Self {
        let rot = Rotation3::from_axis_angle(&Unit::new_normalize(axis), angle);
        Self { position: Vec3::zeros(), rotation: *rot.matrix() }
    }

    pub fn transform_point(&self, p: &Vec3) -> Vec3 {
        self.rotation * p + self.position
    }

    pub fn transform_vector(&self, v: &Vec3) -> Vec3 {
        self.rotation * v
    }

    /// `self * other`: maps `other`'s body frame into `self`'s parent frame.
    pub fn compose(&self, other: &Pose) -> Pose {
        Pose {
            position: self.rotation * other.position + self.position,
            rotation: self.rotation * other.rotation,
        }
    }

    /// True when the rotation is orthonormal with determinant +1 within `tol`.
    pub fn is_valid(&self, tol: f64) -> bool {
        let r = &self.rotation;
        let err = (r * r.transpose() - Mat3::identity()).abs().max();
        err <= tol && (r.determinant() - 1.0).abs() <= tol && self.position.iter().all(|v| v.is_finite())
    }
}

/// First two columns of a rotation matrix, stacked column-major.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Rotation6D(pub [f64; 6]);

impl Rotation6D {
    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    /// Gram-Schmidt reconstruction of the full rotation matrix. Exact for
    /// encodings produced from valid rotations.
    pub fn to_rotation(&self) -> Mat3 {
        let a = Vec3::new(self.0[0], self.0[1], self.0[2]);
        let b = Vec3::new(self.0[3], self.0[4], self.0[5]);
        let c1 = a.normalize();
        let c2 = (b - c1 * c1.dot(&b)).normalize();
        let c3 = c1.cross(&c2);
        Mat3::from_columns(&[c1, c2, c3])
    }
}

pub fn rotation_to_6d(r: &Mat3) -> Rotation6D {
    Rotation6D([r[(0, 0)], r[(1, 0)], r[(2, 0)], r[(0, 1)], r[(1, 1)], r[(2, 1)]])
}

/// Planar cross-section shared by pegs and holes. Sizes in meters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "shape", rename_all = "snake_case", deny_unknown_fields)]
pub enum CrossSection {
    Circle { radius: f64 },
    Square { half_side: f64 },
    Triangle { circumradius: f64 },
    Hexagon { circumradius: f64 },
}

/// Shape identifier without dimensions.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ShapeKind {
    Circle,
    Square,
    Triangle,
    Hexagon,
}

impl ShapeKind {
    pub const ALL: [ShapeKind; 4] =
        [ShapeKind::Circle, ShapeKind::Square, ShapeKind::Triangle, ShapeKind::Hexagon];

    /// Cross-section of this shape whose characteristic size (radius,
    /// half-side or circumradius) is `size`.
    pub fn with_size(self, size: f64) -> CrossSection {
        match self {
            ShapeKind::Circle => CrossSection::Circle { radius: size },
            ShapeKind::Square => CrossSection::Square { half_side: size },
            ShapeKind::Triangle => CrossSection::Triangle { circumradius: size },
            ShapeKind::Hexagon => CrossSection::Hexagon { circumradius: size },
        }
    }

    /// Inscribed radius divided by the size parameter of `with_size`.
    pub fn inradius_ratio(self) -> f64 {
        match self {
            ShapeKind::Circle | ShapeKind::Square => 1.0,
            ShapeKind::Triangle => (std::f64::consts::PI / 3.0).cos(),
            ShapeKind::Hexagon => (std::f64::consts::PI / 6.0).cos(),
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            ShapeKind::Circle => "circle",
            ShapeKind::Square => "square",
            ShapeKind::Triangle => "triangle",
            ShapeKind::Hexagon => "hexagon",
        }
    }
}

impl std::fmt::Display for ShapeKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

impl std::str::FromStr for ShapeKind {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "circle" => Ok(ShapeKind::Circle),
            "square" => Ok(ShapeKind::Square),
            "triangle" => Ok(ShapeKind::Triangle),
            "hexagon" => Ok(ShapeKind::Hexagon),
            other => Err(format!("unknown shape '{other}'")),
        }
    }
}

impl CrossSection {
    pub fn kind(&self) -> ShapeKind {
        match self {
            CrossSection::Circle { .. } => ShapeKind::Circle,
            CrossSection::Square { .. } => ShapeKind::Square,
            CrossSection::Triangle { .. } => ShapeKind::Triangle,
            CrossSection::Hexagon { .. } => ShapeKind::Hexagon,
        }
    }

    fn size(&self) -> f64 {
        match *self {
            CrossSection::Circle { radius } => radius,
            CrossSection::Square { half_side } => half_side,
            CrossSection::Triangle { circumradius } | CrossSection::Hexagon { circumradius } => {
                circumradius
            }
        }
    }

    /// Largest distance from the center to the boundary.
    pub fn max_extent(&self) -> f64 {
        match *self {
            CrossSection::Square { half_side } => half_side * 2f64.sqrt(),
            _ => self.size(),
        }
    }

    pub fn validate(&self) -> Result<(), GeometryError> {
        let s = self.size();
        if !(s.is_finite() && s > 0.0) {
            return Err(GeometryError::Invalid(format!("cross-section size must be > 0, got {s}")));
        }
        Ok(())
    }

    fn polygon_vertices(&self) -> Vec<Vector2<f64>> {
        let (n, r) = match *self {
            CrossSection::Triangle { circumradius } => (3, circumradius),
            CrossSection::Hexagon { circumradius } => (6, circumradius),
            CrossSection::Square { half_side } => {
                return vec![
                    Vector2::new(half_side, -half_side),
                    Vector2::new(half_side, half_side),
                    Vector2::new(-half_side, half_side),
                    Vector2::new(-half_side, -half_side),
                ];
            }
            CrossSection::Circle { .. } => return Vec::new(),
        };
        (0..n)
            .map(|k| {
                let a = PI / 2.0 + 2.0 * PI * k as f64 / n as f64;
                Vector2::new(r * a.cos(), r * a.sin())
            })
            .collect()
    }

    /// Signed distance of the planar point `p` to the boundary (negative
    /// inside) and its gradient. The gradient is zero where it is undefined
    /// (the center of a circle).
    pub fn sdf(&self, p: Vector2<f64>) -> (f64, Vector2<f64>) {
        match *self {
            CrossSection::Circle { radius } => {
                let n = p.norm();
                let g = if n > 0.0 { p / n } else { Vector2::zeros() };
                (n - radius, g)
            }
            CrossSection::Square { half_side } => {
                let q = Vector2::new(p.x.abs() - half_side, p.y.abs() - half_side);
                let sx = if p.x < 0.0 { -1.0 } else { 1.0 };
                let sy = if p.y < 0.0 { -1.0 } else { 1.0 };
                let outside = Vector2::new(q.x.max(0.0), q.y.max(0.0));
                let on = outside.norm();
                if on > 0.0 {
                    (on, Vector2::new(sx * outside.x / on, sy * outside.y / on))
                } else if q.x >= q.y {
                    (q.x, Vector2::new(sx, 0.0))
                } else {
                    (q.y, Vector2::new(0.0, sy))
                }
            }
            CrossSection::Triangle { .. } | CrossSection::Hexagon { .. } => {
                polygon_sdf(&self.polygon_vertices(), p)
            }
        }
    }

    /// Point on the boundary at normalized arc-length parameter `s` in
    /// [0, 1).
    pub fn boundary_point(&self, s: f64) -> Vector2<f64> {
        if let CrossSection::Circle { radius } = *self {
            let a = 2.0 * PI * s;
            return Vector2::new(radius * a.cos(), radius * a.sin());
        }
        let verts = self.polygon_vertices();
        let n = verts.len();
        let lens: Vec<f64> = (0..n).map(|i| (verts[(i + 1) % n] - verts[i]).norm()).collect();
        let total: f64 = lens.iter().sum();
        let mut target = s.rem_euclid(1.0) * total;
        for i in 0..n {
            if target <= lens[i] || i == n - 1 {
                let t = (target / lens[i]).min(1.0);
                return verts[i] + (verts[(i + 1) % n] - verts[i]) * t;
            }
            target -= lens[i];
        }
        unreachable!()
    }
}

/// Exact signed distance to a convex polygon with counter-clockwise
/// vertices.
fn polygon_sdf(verts: &[Vector2<f64>], p: Vector2<f64>) -> (f64, Vector2<f64>) {
    let n = verts.len();
    let mut best = f64::INFINITY;
    let mut closest = verts[0];
    let mut edge_normal = Vector2::zeros();
    let mut inside = true;
    for i in 0..n {
        let a = verts[i];
        let b = verts[(i + 1) % n];
        let e = b - a;
        let t = ((p - a).dot(&e) / e.dot(&e)).clamp(0.0, 1.0);
        let c = a + e * t;
        let d = (p - c).norm();
        // outward normal of a CCW edge
        let normal = Vector2::new(e.y, -e.x).normalize();
        if (p - a).dot(&normal) > 0.0 {
            inside = false;
        }
        if d < best {
            best = d;
            closest = c;
            edge_normal = normal;
        }
    }
    let sign = if inside { -1.0 } else { 1.0 };
    let grad = if best > 0.0 { (p - closest) * (sign / best) } else { edge_normal };
    (sign * best, grad)
}

/// A flat plate occupying `z <= top_z` with a prismatic hole cut into it.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HoleGeometry {
    pub cross_section: CrossSection,
    /// Hole axis location in the world x-y plane (m).
    pub center: [f64; 2],
    pub top_z: f64,
    pub depth: f64,
    pub plate_extent: f64,
}

impl HoleGeometry {
    pub fn validate(&self) -> Result<(), GeometryError> {
        self.cross_section.validate()?;
        if !(self.depth > 0.0) {
            return Err(GeometryError::Invalid(format!("hole depth must be > 0, got {}", self.depth)));
        }
        if !(self.plate_extent > 4.0 * self.cross_section.max_extent()) {
            return Err(GeometryError::Invalid(format!(
                "plate extent {} must exceed 4x the hole extent {}",
                self.plate_extent,
                self.cross_section.max_extent()
            )));
        }
        Ok(())
    }

    pub fn bottom_z(&self) -> f64 {
        self.top_z - self.depth
    }

    /// Point on the hole axis `depth_below_top` meters under the hole top.
    pub fn axis_point(&self, depth_below_top: f64) -> Vec3 {
        Vec3::new(self.center[0], self.center[1], self.top_z - depth_below_top)
    }
}

/// Signed distance to the prism that is removed from the plate. The prism
/// is open at the top: only its side walls and its floor bound it.
fn hole_prism_sdf(p: &Vec3, hole: &HoleGeometry) -> (f64, Vec3) {
    let local = Vector2::new(p.x - hole.center[0], p.y - hole.center[1]);
    let (d2, g2) = hole.cross_section.sdf(local);
    let dz = hole.bottom_z() - p.z;
    let g2 = Vec3::new(g2.x, g2.y, 0.0);
    let gz = Vec3::new(0.0, 0.0, -1.0);
    if d2 > 0.0 && dz > 0.0 {
        let n = (d2 * d2 + dz * dz).sqrt();
        (n, (g2 * d2 + gz * dz) / n)
    } else if d2 > 0.0 {
        (d2, g2)
    } else if dz > 0.0 {
        (dz, gz)
    } else if d2 >= dz {
        (d2, g2)
    } else {
        (dz, gz)
    }
}

/// Signed distance from `p` to the plate-with-hole solid, and its unit
/// (sub)gradient. Positive in free space.
///
/// Combined as `max(z - top_z, -prism)`, which is exact near the top face
/// and the hole walls and conservative elsewhere. On the hole axis, where
/// the wall direction is undefined, the gradient is `+z`.
pub fn sdf_plate_with_hole(p: &Vec3, hole: &HoleGeometry) -> (f64, Vec3) {
    let half = p.z - hole.top_z;
    let (prism, prism_grad) = hole_prism_sdf(p, hole);
    let carved = -prism;
    if half >= carved {
        (half, Vec3::z())
    } else {
        let g = -prism_grad;
        let n = g.norm();
        if n > 1e-12 {
            (carved, g / n)
        } else {
            (carved, Vec3::z())
        }
    }
}

/// Rigid peg. The peg frame origin is the grasp point; the peg extends
/// along -z to its tip.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PegGeometry {
    pub cross_section: CrossSection,
    pub length: f64,
    pub sample_points: Vec<Vec3>,
}

impl PegGeometry {
    /// Peg with the default contact samples: the tip center, a rim of 16
    /// points around the tip and a ring of 16 points 5 mm above it.
    pub fn new(cross_section: CrossSection, length: f64) -> Self {
        let tip_z = -length;
        let ring_z = (tip_z + LATERAL_RING_HEIGHT).min(0.0);
        let mut pts = vec![Vec3::new(0.0, 0.0, tip_z)];
        for z in [tip_z, ring_z] {
            for k in 0..RIM_SAMPLES {
                let b = cross_section.boundary_point(k as f64 / RIM_SAMPLES as f64);
                pts.push(Vec3::new(b.x, b.y, z));
            }
        }
        Self { cross_section, length, sample_points: pts }
    }

    pub fn validate(&self) -> Result<(), GeometryError> {
        self.cross_section.validate()?;
        if !(self.length > 0.0) {
            return Err(GeometryError::Invalid(format!("peg length must be > 0, got {}", self.length)));
        }
        if self.sample_points.is_empty() {
            return Err(GeometryError::Invalid("peg has no sample points".into()));
        }
        let r = self.cross_section.max_extent() * (1.0 + 1e-9);
        for p in &self.sample_points {
            let radial = (p.x * p.x + p.y * p.y).sqrt();
            if radial > r || p.z < -self.length * (1.0 + 1e-9) || p.z > 1e-12 {
                return Err(GeometryError::Invalid(format!(
                    "sample point {:?} outside the peg bounding cylinder",
                    p.as_slice()
                )));
            }
        }
        Ok(())
    }

    /// Peg-frame position of the tip center.
    pub fn tip_local(&self) -> Vec3 {
        Vec3::new(0.0, 0.0, -self.length)
    }

    /// Peg-frame position of the peg's centroid.
    pub fn centroid_local(&self) -> Vec3 {
        Vec3::new(0.0, 0.0, -0.5 * self.length)
    }
}

/// World position of the peg tip center for a peg at `pose`.
pub fn peg_tip(pose: &Pose, peg: &PegGeometry) -> Vec3 {
    pose.transform_point(&peg.tip_local())
}
