//! Rigid-body and projective geometry.
//!
//! Poses are `RigidTransform`s mapping points of a child frame into a parent
//! frame (`p_parent = R * p_child + t`). A camera pose in the world therefore
//! has the camera axes as the columns of its rotation. The camera looks along
//! its +z axis, image x to the right and image y downward.

use nalgebra::{Matrix2, Matrix3, Vector2, Vector3, Vector6};
use serde::{Deserialize, Serialize};
use std::f64::consts::{FRAC_PI_2, PI};
use thiserror::Error;

/// Relative axis difference below which an ellipse is treated as a circle and
/// its orientation pinned to zero.
pub const CIRCLE_TOLERANCE: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq, Error)]
pub enum GeometryError {
    #[error("camera is inside or on the sphere (K = {k})")]
    CameraInsideSphere { k: f64 },
    #[error("sphere limb is not entirely in front of the camera (Z0 = {z}, R = {radius})")]
    BehindCamera { z: f64, radius: f64 },
    #[error("inspection point coincides with the sphere center")]
    DegenerateNormal,
    #[error("conic is not a real ellipse")]
    NotAnEllipse,
}

/// Pose of one frame expressed in another.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RigidTransform {
    pub rotation: Matrix3<f64>,
    pub translation: Vector3<f64>,
}

impl Default for RigidTransform {
    fn default() -> Self {
        Self::identity()
    }
}

impl RigidTransform {
    pub fn identity() -> Self {
        Self {
            rotation: Matrix3::identity(),
            translation: Vector3::zeros(),
        }
    }

    pub fn new(rotation: Matrix3<f64>, translation: Vector3<f64>) -> Self {
        Self {
            rotation,
            translation,
        }
    }

    pub fn from_translation(translation: Vector3<f64>) -> Self {
        Self::new(Matrix3::identity(), translation)
    }

    /// Rotation from roll/pitch/yaw about the fixed x, y, z axes (radians).
    pub fn from_rpy(roll: f64, pitch: f64, yaw: f64, translation: Vector3<f64>) -> Self {
        let r = nalgebra::Rotation3::from_euler_angles(roll, pitch, yaw);
        Self::new(*r.matrix(), translation)
    }

    /// `self ∘ other`: maps points of `other`'s child frame into `self`'s parent.
    pub fn compose(&self, other: &RigidTransform) -> RigidTransform {
        RigidTransform {
            rotation: self.rotation * other.rotation,
            translation: self.rotation * other.translation + self.translation,
        }
    }

    pub fn inverse(&self) -> RigidTransform {
        let rt = self.rotation.transpose();
        RigidTransform {
            rotation: rt,
            translation: -(rt * self.translation),
        }
    }

    pub fn transform_point(&self, p: &Vector3<f64>) -> Vector3<f64> {
        self.rotation * p + self.translation
    }

    pub fn transform_vector(&self, v: &Vector3<f64>) -> Vector3<f64> {
        self.rotation * v
    }

    /// Orthonormality residual `‖RᵀR − I‖` and determinant check.
    pub fn is_valid(&self, tol: f64) -> bool {
        let err = (self.rotation.transpose() * self.rotation - Matrix3::identity()).norm();
        err < tol
            && (self.rotation.determinant() - 1.0).abs() < tol
            && self.translation.iter().all(|v| v.is_finite())
    }
}

/// Linear and angular velocity of a rigid body.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct Twist {
    pub linear: Vector3<f64>,
    pub angular: Vector3<f64>,
}

impl Twist {
    pub fn new(linear: Vector3<f64>, angular: Vector3<f64>) -> Self {
        Self { linear, angular }
    }

    pub fn zero() -> Self {
        Self::default()
    }

    pub fn from_vector(v: &Vector6<f64>) -> Self {
        Self {
            linear: Vector3::new(v[0], v[1], v[2]),
            angular: Vector3::new(v[3], v[4], v[5]),
        }
    }

    /// `(vx, vy, vz, wx, wy, wz)`.
    pub fn to_vector(&self) -> Vector6<f64> {
        Vector6::new(
            self.linear.x,
            self.linear.y,
            self.linear.z,
            self.angular.x,
            self.angular.y,
            self.angular.z,
        )
    }

    pub fn scaled(&self, s: f64) -> Twist {
        Twist::new(self.linear * s, self.angular * s)
    }

    pub fn is_finite(&self) -> bool {
        self.linear
            .iter()
            .chain(self.angular.iter())
            .all(|v| v.is_finite())
    }
}

/// Spherical fruit model: `(X − X0)² + (Y − Y0)² + (Z − Z0)² = R²`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Sphere {
    pub center: Vector3<f64>,
    pub radius: f64,
}

impl Sphere {
    pub fn new(center: Vector3<f64>, radius: f64) -> Self {
        Self { center, radius }
    }

    /// The same sphere seen from the child frame of `pose`.
    pub fn expressed_in(&self, pose: &RigidTransform) -> Sphere {
        Sphere::new(pose.inverse().transform_point(&self.center), self.radius)
    }
}

/// Pinhole camera with square pixels and no distortion.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct CameraIntrinsics {
    /// Focal length in millimeters.
    pub focal_length: f64,
    /// Pixel pitch in millimeters per pixel.
    pub pixel_size: f64,
    /// Principal point in pixels (pixel centers sit on integer coordinates).
    pub principal_point: [f64; 2],
    pub width: usize,
    pub height: usize,
}

impl Default for CameraIntrinsics {
    /// 640×480 RGB-D class sensor, roughly 57°×44° field of view.
    fn default() -> Self {
        Self {
            focal_length: 4.0,
            pixel_size: 0.0068,
            principal_point: [319.5, 239.5],
            width: 640,
            height: 480,
        }
    }
}

impl CameraIntrinsics {
    /// Focal length in pixels.
    pub fn focal_px(&self) -> f64 {
        self.focal_length / self.pixel_size
    }

    pub fn is_valid(&self) -> bool {
        let [cx, cy] = self.principal_point;
        self.focal_length > 0.0
            && self.pixel_size > 0.0
            && self.width > 0
            && self.height > 0
            && (0.0..self.width as f64).contains(&cx)
            && (0.0..self.height as f64).contains(&cy)
    }

    pub fn pixel_to_normalized(&self, p: Vector2<f64>) -> Vector2<f64> {
        let f = self.focal_px();
        Vector2::new(
            (p.x - self.principal_point[0]) / f,
            (p.y - self.principal_point[1]) / f,
        )
    }

    pub fn normalized_to_pixel(&self, n: Vector2<f64>) -> Vector2<f64> {
        let f = self.focal_px();
        Vector2::new(
            n.x * f + self.principal_point[0],
            n.y * f + self.principal_point[1],
        )
    }

    pub fn ellipse_to_normalized(&self, e: &EllipseParams) -> EllipseParams {
        let f = self.focal_px();
        EllipseParams {
            center: self.pixel_to_normalized(e.center),
            a: e.a / f,
            b: e.b / f,
            alpha: e.alpha,
        }
    }

    pub fn ellipse_to_pixel(&self, e: &EllipseParams) -> EllipseParams {
        let f = self.focal_px();
        EllipseParams {
            center: self.normalized_to_pixel(e.center),
            a: e.a * f,
            b: e.b * f,
            alpha: e.alpha,
        }
    }

    /// Horizontal and vertical full field of view in radians.
    pub fn field_of_view(&self) -> (f64, f64) {
        let f = self.focal_px();
        (
            2.0 * (self.width as f64 / 2.0 / f).atan(),
            2.0 * (self.height as f64 / 2.0 / f).atan(),
        )
    }
}

/// Ellipse `(x0, y0, a, b, α)`: semi-axes `a ≥ b > 0`, `α ∈ (−π/2, π/2]` the
/// angle from the image x-axis to the major axis.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EllipseParams {
    pub center: Vector2<f64>,
    pub a: f64,
    pub b: f64,
    pub alpha: f64,
}

impl EllipseParams {
    /// Builds an ellipse, swapping axes and wrapping the angle as needed.
    pub fn new(center: Vector2<f64>, a: f64, b: f64, alpha: f64) -> Self {
        let (a, b, alpha) = if b > a {
            (b, a, alpha + FRAC_PI_2)
        } else {
            (a, b, alpha)
        };
        let alpha = if (a - b) / a < CIRCLE_TOLERANCE {
            0.0
        } else {
            wrap_half_turn(alpha)
        };
        Self {
            center,
            a,
            b,
            alpha,
        }
    }

    pub fn is_valid(&self) -> bool {
        self.a >= self.b && self.b > 0.0 && self.center.iter().all(|v| v.is_finite())
    }

    /// Point on the boundary at parametric angle `t`.
    pub fn point_at(&self, t: f64) -> Vector2<f64> {
        let (s, c) = self.alpha.sin_cos();
        let (u, v) = (self.a * t.cos(), self.b * t.sin());
        self.center + Vector2::new(u * c - v * s, u * s + v * c)
    }

    /// Mean of the full axes, the "observed diameter" of the projection.
    pub fn mean_diameter(&self) -> f64 {
        self.a + self.b
    }
}

/// Wraps an angle into `(−π/2, π/2]`.
pub fn wrap_half_turn(alpha: f64) -> f64 {
    let mut a = alpha % PI;
    if a <= -FRAC_PI_2 {
        a += PI;
    } else if a > FRAC_PI_2 {
        a -= PI;
    }
    a
}

/// General conic `A x² + B xy + C y² + D x + E y + F = 0`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Conic {
    pub coeffs: [f64; 6],
}

impl Conic {
    pub fn new(coeffs: [f64; 6]) -> Self {
        Self { coeffs }
    }

    pub fn from_ellipse(e: &EllipseParams) -> Conic {
        let (s, c) = e.alpha.sin_cos();
        let (a2, b2) = (e.a * e.a, e.b * e.b);
        let qa = c * c / a2 + s * s / b2;
        let qb = 2.0 * s * c * (1.0 / a2 - 1.0 / b2);
        let qc = s * s / a2 + c * c / b2;
        let (x0, y0) = (e.center.x, e.center.y);
        Conic::new([
            qa,
            qb,
            qc,
            -2.0 * qa * x0 - qb * y0,
            -qb * x0 - 2.0 * qc * y0,
            qa * x0 * x0 + qb * x0 * y0 + qc * y0 * y0 - 1.0,
        ])
    }

    pub fn eval(&self, x: f64, y: f64) -> f64 {
        let [a, b, c, d, e, f] = self.coeffs;
        a * x * x + b * x * y + c * y * y + d * x + e * y + f
    }

    pub fn gradient(&self, x: f64, y: f64) -> Vector2<f64> {
        let [a, b, c, d, e, _] = self.coeffs;
        Vector2::new(2.0 * a * x + b * y + d, b * x + 2.0 * c * y + e)
    }

    /// First-order geometric distance `|Q(p)| / ‖∇Q(p)‖`.
    pub fn sampson_distance(&self, x: f64, y: f64) -> f64 {
        let g = self.gradient(x, y).norm();
        if g <= f64::MIN_POSITIVE {
            return f64::INFINITY;
        }
        self.eval(x, y).abs() / g
    }

    pub fn is_ellipse(&self) -> bool {
        let [a, b, c, ..] = self.coeffs;
        4.0 * a * c - b * b > 0.0
    }

    /// Ellipse parameters from the eigen-decomposition of the 2×2 quadratic block.
    pub fn to_ellipse(&self) -> Result<EllipseParams, GeometryError> {
        let [a, b, c, d, e, f] = self.coeffs;
        let q = Matrix2::new(a, b / 2.0, b / 2.0, c);
        let det = q.determinant();
        if !(det > 0.0) {
            return Err(GeometryError::NotAnEllipse);
        }
        let lin = Vector2::new(d / 2.0, e / 2.0);
        let center = -(q.try_inverse().ok_or(GeometryError::NotAnEllipse)? * lin);
        let f_c = f + lin.dot(&center);
        // Normalize the sign so the quadratic block is positive definite.
        let (qa, qh, qc, f_c) = if a > 0.0 {
            (a, b / 2.0, c, f_c)
        } else {
            (-a, -b / 2.0, -c, -f_c)
        };
        if !(f_c < 0.0) {
            return Err(GeometryError::NotAnEllipse);
        }
        let mean = 0.5 * (qa + qc);
        let root = (0.25 * (qa - qc) * (qa - qc) + qh * qh).sqrt();
        let (l_small, l_large) = (mean - root, mean + root);
        if !(l_small > 0.0) {
            return Err(GeometryError::NotAnEllipse);
        }
        let semi_major = (-f_c / l_small).sqrt();
        let semi_minor = (-f_c / l_large).sqrt();
        // Eigenvector of the larger eigenvalue lies along the minor axis.
        let minor_dir = 0.5 * (2.0 * qh).atan2(qa - qc);
        Ok(EllipseParams::new(
            center,
            semi_major,
            semi_minor,
            minor_dir + FRAC_PI_2,
        ))
    }
}

/// Limb conic of a sphere in normalized image coordinates.
///
/// A viewing ray `d = (x, y, 1)` grazes the sphere when
/// `(d·O)² = K‖d‖²` with `K = ‖O‖² − R²`, i.e. `dᵀ(OOᵀ − K·I)d = 0`.
pub fn sphere_limb_conic(sphere: &Sphere) -> Result<Conic, GeometryError> {
    let o = sphere.center;
    let k = o.norm_squared() - sphere.radius * sphere.radius;
    if !(k > 0.0) {
        return Err(GeometryError::CameraInsideSphere { k });
    }
    if !(o.z > sphere.radius) {
        return Err(GeometryError::BehindCamera {
            z: o.z,
            radius: sphere.radius,
        });
    }
    let (x, y, z) = (o.x, o.y, o.z);
    Ok(Conic::new([
        x * x - k,
        2.0 * x * y,
        y * y - k,
        2.0 * x * z,
        2.0 * y * z,
        z * z - k,
    ]))
}

/// Exact image ellipse (normalized coordinates) of a sphere given in the camera frame.
pub fn project_sphere(sphere_in_camera: &Sphere) -> Result<EllipseParams, GeometryError> {
    sphere_limb_conic(sphere_in_camera)?.to_ellipse()
}

/// Camera pose on the normal through `inspect_point`, `standoff` meters out,
/// looking back at the sphere. The camera x-axis is kept horizontal (world
/// z is up); looking straight up or down falls back to the world x-axis.
pub fn initial_view_pose(
    sphere: &Sphere,
    inspect_point: &Vector3<f64>,
    standoff: f64,
) -> Result<RigidTransform, GeometryError> {
    let offset = inspect_point - sphere.center;
    let len = offset.norm();
    if len < 1e-9 {
        return Err(GeometryError::DegenerateNormal);
    }
    let normal = offset / len;
    let position = inspect_point + normal * standoff;
    Ok(RigidTransform::new(look_rotation(&(-normal)), position))
}

/// Rotation whose z column is `forward` and whose x column is horizontal.
pub fn look_rotation(forward: &Vector3<f64>) -> Matrix3<f64> {
    let z = forward.normalize();
    let up = Vector3::z();
    let horizontal = z.cross(&up);
    let x = if horizontal.norm() < 1e-9 {
        Vector3::x()
    } else {
        horizontal.normalize()
    };
    let x = (x - z * z.dot(&x)).normalize();
    let y = z.cross(&x);
    Matrix3::from_columns(&[x, y, z])
}

pub fn skew(v: &Vector3<f64>) -> Matrix3<f64> {
    Matrix3::new(0.0, -v.z, v.y, v.z, 0.0, -v.x, -v.y, v.x, 0.0)
}

/// Velocity twist transform `[[R, S(T)R], [0, R]]` from the camera frame to
/// the robot frame, where `hand_eye` holds `(ʳR_c, ʳT_c)`.
pub fn twist_camera_to_robot(v_c: &Twist, hand_eye: &RigidTransform) -> Twist {
    let r = hand_eye.rotation;
    let angular = r * v_c.angular;
    let linear = r * v_c.linear + skew(&hand_eye.translation) * angular;
    Twist::new(linear, angular)
}

/// Closed-form SE(3) exponential of a body twist applied for unit time.
pub fn se3_exp(v: &Twist) -> RigidTransform {
    let w = v.angular;
    let theta2 = w.norm_squared();
    let theta = theta2.sqrt();
    let wx = skew(&w);
    let wx2 = wx * wx;
    let (a, b, c) = if theta < 1e-6 {
        // Taylor expansions of sinθ/θ, (1−cosθ)/θ², (θ−sinθ)/θ³.
        (
            1.0 - theta2 / 6.0,
            0.5 - theta2 / 24.0,
            1.0 / 6.0 - theta2 / 120.0,
        )
    } else {
        let (s, co) = theta.sin_cos();
        (
            s / theta,
            (1.0 - co) / theta2,
            (theta - s) / (theta2 * theta),
        )
    };
    let rotation = Matrix3::identity() + wx * a + wx2 * b;
    let jac = Matrix3::identity() + wx * b + wx2 * c;
    RigidTransform::new(rotation, jac * v.linear)
}

/// Gram–Schmidt re-orthonormalization of a nearly orthonormal rotation.
pub fn orthonormalize(m: &Matrix3<f64>) -> Matrix3<f64> {
    let x = m.column(0).normalize();
    let y = m.column(1) - x * x.dot(&m.column(1));
    let y = y.normalize();
    let z = x.cross(&y);
    Matrix3::from_columns(&[x, y, z])
}

/// Advances `pose` by the body-frame twist `v` held for `dt` seconds.
pub fn integrate_twist(pose: &RigidTransform, v: &Twist, dt: f64) -> RigidTransform {
    let step = se3_exp(&v.scaled(dt));
    let mut next = pose.compose(&step);
    next.rotation = orthonormalize(&next.rotation);
    next
}
