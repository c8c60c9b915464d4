// SPDX-License-Identifier: Apache-2.0

//! Eye-centered 3D primitives, the vertical image projection and shadow casting.
//!
//! All 3D quantities are millimeters in a frame whose origin is the eye center
//! and whose +z axis points toward the microscope. The image is an orthographic
//! view along -z: two points that differ only in z land on the same pixel.

use std::ops::{Add, Mul, Neg, Sub};

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Rays shorter than this are rejected.
pub const MIN_RAY_LENGTH: f64 = 1e-9;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GeometryError {
    #[error("degenerate ray: origin and through-point coincide")]
    DegenerateRay,
    #[error("ray does not reach the eye sphere")]
    NoIntersection,
    #[error("too few points to fit a line ({0})")]
    TooFewPoints(usize),
    #[error("invalid eye model: {0}")]
    InvalidEye(&'static str),
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Vec3 {
    pub x: f64,
    pub y: f64,
    pub z: f64,
}

impl Vec3 {
    pub const ZERO: Vec3 = Vec3 { x: 0.0, y: 0.0, z: 0.0 };

    pub const fn new(x: f64, y: f64, z: f64) -> Self {
        Self { x, y, z }
    }

    pub fn dot(self, o: Vec3) -> f64 {
        self.x * o.x + self.y * o.y + self.z * o.z
    }

    pub fn cross(self, o: Vec3) -> Vec3 {
        Vec3::new(self.y * o.z - self.z * o.y, self.z * o.x - self.x * o.z, self.x * o.y - self.y * o.x)
    }

    pub fn norm(self) -> f64 {
        self.dot(self).sqrt()
    }

    pub fn distance(self, o: Vec3) -> f64 {
        (self - o).norm()
    }

    /// Distance in the x-y plane only.
    pub fn xy_distance(self, o: Vec3) -> f64 {
        (self.x - o.x).hypot(self.y - o.y)
    }

    pub fn is_finite(self) -> bool {
        self.x.is_finite() && self.y.is_finite() && self.z.is_finite()
    }

    pub fn lerp(self, o: Vec3, t: f64) -> Vec3 {
        self + (o - self) * t
    }
}

impl Add for Vec3 {
    type Output = Vec3;
    fn add(self, o: Vec3) -> Vec3 {
        Vec3::new(self.x + o.x, self.y + o.y, self.z + o.z)
    }
}

impl Sub for Vec3 {
    type Output = Vec3;
    fn sub(self, o: Vec3) -> Vec3 {
        Vec3::new(self.x - o.x, self.y - o.y, self.z - o.z)
    }
}

impl Mul<f64> for Vec3 {
    type Output = Vec3;
    fn mul(self, s: f64) -> Vec3 {
        Vec3::new(self.x * s, self.y * s, self.z * s)
    }
}

impl Neg for Vec3 {
    type Output = Vec3;
    fn neg(self) -> Vec3 {
        Vec3::new(-self.x, -self.y, -self.z)
    }
}

/// Image position in pixels. Continuous-valued; `u` grows right, `v` grows down.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Pixel {
    pub u: f64,
    pub v: f64,
}

impl Pixel {
    pub const fn new(u: f64, v: f64) -> Self {
        Self { u, v }
    }

    pub fn distance(self, o: Pixel) -> f64 {
        (self.u - o.u).hypot(self.v - o.v)
    }

    pub fn sub(self, o: Pixel) -> (f64, f64) {
        (self.u - o.u, self.v - o.v)
    }

    pub fn offset(self, du: f64, dv: f64) -> Pixel {
        Pixel::new(self.u + du, self.v + dv)
    }

    /// Rotates this pixel about `center` by `angle` radians in the (u, v) frame.
    pub fn rotated_about(self, center: Pixel, angle: f64) -> Pixel {
        let (du, dv) = self.sub(center);
        let (s, c) = angle.sin_cos();
        Pixel::new(center.u + c * du - s * dv, center.v + s * du + c * dv)
    }
}

/// Infinite 2D line with a unit direction.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Line2 {
    pub point: Pixel,
    pub direction: (f64, f64),
}

impl Line2 {
    /// Builds a line, normalizing `direction`. Returns `None` for a zero direction.
    pub fn new(point: Pixel, direction: (f64, f64)) -> Option<Self> {
        let n = direction.0.hypot(direction.1);
        if !(n > 1e-12) || !n.is_finite() {
            return None;
        }
        Some(Self { point, direction: (direction.0 / n, direction.1 / n) })
    }

    pub fn through(a: Pixel, b: Pixel) -> Option<Self> {
        Self::new(a, b.sub(a))
    }

    /// Unit normal (direction rotated by +90 degrees).
    pub fn normal(&self) -> (f64, f64) {
        (-self.direction.1, self.direction.0)
    }

    pub fn distance_to(&self, p: Pixel) -> f64 {
        let (du, dv) = p.sub(self.point);
        let (nu, nv) = self.normal();
        (du * nu + dv * nv).abs()
    }

    pub fn at(&self, t: f64) -> Pixel {
        self.point.offset(t * self.direction.0, t * self.direction.1)
    }

    /// Same line anchored at another point (its own projection is not required).
    pub fn anchored_at(&self, p: Pixel) -> Line2 {
        Line2 { point: p, direction: self.direction }
    }

    /// Unsigned angle between the two lines in degrees, in [0, 90].
    pub fn angle_to_deg(&self, o: &Line2) -> f64 {
        let c = (self.direction.0 * o.direction.0 + self.direction.1 * o.direction.1).abs();
        c.min(1.0).acos().to_degrees()
    }

    /// Intersection point, or `None` when the lines are within `min_angle_deg` of parallel.
    pub fn intersect(&self, o: &Line2, min_angle_deg: f64) -> Option<Pixel> {
        if self.angle_to_deg(o) <= min_angle_deg {
            return None;
        }
        let (a, b) = self.direction;
        let (c, d) = o.direction;
        let det = a * -d - b * -c;
        let (ru, rv) = o.point.sub(self.point);
        let t = (ru * -d - rv * -c) / det;
        Some(self.at(t))
    }

    /// Total-least-squares fit: the line through the centroid along the principal axis.
    pub fn fit(points: &[Pixel]) -> Result<Line2, GeometryError> {
        if points.len() < 2 {
            return Err(GeometryError::TooFewPoints(points.len()));
        }
        let n = points.len() as f64;
        let cu = points.iter().map(|p| p.u).sum::<f64>() / n;
        let cv = points.iter().map(|p| p.v).sum::<f64>() / n;
        let (mut suu, mut svv, mut suv) = (0.0, 0.0, 0.0);
        for p in points {
            let (du, dv) = (p.u - cu, p.v - cv);
            suu += du * du;
            svv += dv * dv;
            suv += du * dv;
        }
        if suu + svv < 1e-24 {
            return Err(GeometryError::TooFewPoints(1));
        }
        // Major axis of the 2x2 scatter matrix.
        let theta = 0.5 * (2.0 * suv).atan2(suu - svv);
        let line = Line2::new(Pixel::new(cu, cv), (theta.cos(), theta.sin())).ok_or(GeometryError::TooFewPoints(1))?;
        Ok(line)
    }
}

/// Spherical eye and the image it is viewed through.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EyeModel {
    pub radius_mm: f64,
    pub limbus_radius_mm: f64,
    pub image_size_px: f64,
    pub px_per_mm: f64,
}

impl Default for EyeModel {
    fn default() -> Self {
        Self { radius_mm: 12.0, limbus_radius_mm: 6.0, image_size_px: 1024.0, px_per_mm: 1024.0 / 12.0 }
    }
}

impl EyeModel {
    pub fn validate(&self) -> Result<(), GeometryError> {
        if !(self.limbus_radius_mm > 0.0 && self.limbus_radius_mm < self.radius_mm) {
            return Err(GeometryError::InvalidEye("limbus radius must lie in (0, radius)"));
        }
        if !(self.image_size_px > 0.0) || !(self.px_per_mm > 0.0) {
            return Err(GeometryError::InvalidEye("image size and scale must be positive"));
        }
        if self.limbus_radius_mm * self.px_per_mm > self.image_size_px / 2.0 + 1e-9 {
            return Err(GeometryError::InvalidEye("limbus disc does not fit in the image"));
        }
        Ok(())
    }

    pub fn image_center(&self) -> Pixel {
        Pixel::new(self.image_size_px / 2.0, self.image_size_px / 2.0)
    }

    /// Height of the limbus circle above the eye center.
    pub fn limbus_height(&self) -> f64 {
        (self.radius_mm.powi(2) - self.limbus_radius_mm.powi(2)).sqrt()
    }

    /// Point on the limbus circle at the given azimuth (degrees from +x).
    pub fn limbus_point(&self, azimuth_deg: f64) -> Vec3 {
        let a = azimuth_deg.to_radians();
        Vec3::new(self.limbus_radius_mm * a.cos(), self.limbus_radius_mm * a.sin(), self.limbus_height())
    }

    /// Point on the sphere at the given azimuth and height; `None` height means the limbus circle.
    pub fn scleral_point(&self, azimuth_deg: f64, z: Option<f64>) -> Vec3 {
        let Some(z) = z else { return self.limbus_point(azimuth_deg) };
        let a = azimuth_deg.to_radians();
        let rho = (self.radius_mm.powi(2) - z * z).max(0.0).sqrt();
        Vec3::new(rho * a.cos(), rho * a.sin(), z)
    }

    /// z of the lower retinal surface under (x, y), if (x, y) lies within the sphere.
    pub fn retina_z_below(&self, x: f64, y: f64) -> Option<f64> {
        let rr = self.radius_mm.powi(2) - x * x - y * y;
        (rr >= 0.0).then(|| -rr.sqrt())
    }

    /// Whether a pixel falls inside the projected limbus disc.
    pub fn in_limbus_disc(&self, p: Pixel) -> bool {
        p.distance(self.image_center()) < self.limbus_radius_mm * self.px_per_mm
    }

    pub fn in_image(&self, p: Pixel) -> bool {
        (0.0..=self.image_size_px).contains(&p.u) && (0.0..=self.image_size_px).contains(&p.v)
    }

    /// Pixel back to the (x, y) plane in millimeters.
    pub fn unproject_xy(&self, p: Pixel) -> (f64, f64) {
        let c = self.image_center();
        ((p.u - c.u) / self.px_per_mm, (c.v - p.v) / self.px_per_mm)
    }
}

/// Vertical projection onto the image plane.
pub fn project(p: Vec3, eye: &EyeModel) -> Pixel {
    let c = eye.image_center();
    Pixel::new(c.u + eye.px_per_mm * p.x, c.v - eye.px_per_mm * p.y)
}

/// Intersection of the ray `origin -> through` with the eye sphere having the
/// larger ray parameter. With `origin` inside the sphere this is the only hit
/// ahead of the origin.
pub fn ray_sphere_far_intersection(origin: Vec3, through: Vec3, eye: &EyeModel) -> Result<Vec3, GeometryError> {
    let d = through - origin;
    let a = d.dot(d);
    if a.sqrt() < MIN_RAY_LENGTH {
        return Err(GeometryError::DegenerateRay);
    }
    let b = 2.0 * origin.dot(d);
    let c = origin.dot(origin) - eye.radius_mm * eye.radius_mm;
    let disc = b * b - 4.0 * a * c;
    if disc < 0.0 {
        return Err(GeometryError::NoIntersection);
    }
    // Numerically stable pair of roots.
    let q = -0.5 * (b + b.signum() * disc.sqrt());
    let (t0, t1) = if q == 0.0 { (0.0, 0.0) } else { (q / a, c / q) };
    let t = t0.max(t1);
    Ok(origin + d * t)
}

/// Shadow of `obj` on the retina under a point light at `light_tip`.
pub fn cast_shadow(light_tip: Vec3, obj: Vec3, eye: &EyeModel) -> Result<Vec3, GeometryError> {
    ray_sphere_far_intersection(light_tip, obj, eye)
}

/// Radial clearance to the retina; negative means the point is outside the eye.
pub fn retina_clearance(p: Vec3, eye: &EyeModel) -> f64 {
    eye.radius_mm - p.norm()
}
