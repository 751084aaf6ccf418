//! Ellipse moment features, feature error, depth estimate and the
//! finite-difference interaction matrix.

use crate::geometry::{
    project_sphere, se3_exp, CameraIntrinsics, EllipseParams, GeometryError, Sphere, Twist,
};
use nalgebra::{Matrix5, SMatrix, Vector5, Vector6};
use thiserror::Error;

/// Default central-difference step for the interaction matrix.
pub const FD_STEP: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq, Error)]
pub enum FeaturesError {
    #[error("observed diameter {0} px is below one pixel")]
    ZeroObservedDiameter(f64),
    #[error("sphere not in view: {0}")]
    NotInView(#[from] GeometryError),
}

/// `s = (x_g, y_g, μ20, μ11, μ02)` in normalized image coordinates, with
/// area-normalized central moments.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FeatureVector {
    pub xg: f64,
    pub yg: f64,
    pub mu20: f64,
    pub mu11: f64,
    pub mu02: f64,
}

impl FeatureVector {
    pub fn from_vector(v: &Vector5<f64>) -> Self {
        Self {
            xg: v[0],
            yg: v[1],
            mu20: v[2],
            mu11: v[3],
            mu02: v[4],
        }
    }

    pub fn to_vector(&self) -> Vector5<f64> {
        Vector5::new(self.xg, self.yg, self.mu20, self.mu11, self.mu02)
    }

    /// The moments form a positive definite covariance.
    pub fn is_valid(&self) -> bool {
        self.mu20 > 0.0 && self.mu02 > 0.0 && self.mu20 * self.mu02 - self.mu11 * self.mu11 > 0.0
    }
}

/// `e = s − s*` and its sum of squares.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FeatureError {
    pub delta: Vector5<f64>,
    pub squared_sum: f64,
}

impl FeatureError {
    pub fn from_delta(delta: Vector5<f64>) -> Self {
        Self {
            delta,
            squared_sum: delta.iter().map(|d| d * d).sum(),
        }
    }

    pub fn norm(&self) -> f64 {
        self.squared_sum.sqrt()
    }
}

/// Feature rates per unit camera twist `(vx, vy, vz, ωx, ωy, ωz)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct InteractionMatrix {
    pub rows: SMatrix<f64, 5, 6>,
    /// `rows` with the ωz column removed.
    pub reduced: Matrix5<f64>,
}

impl InteractionMatrix {
    pub fn new(rows: SMatrix<f64, 5, 6>) -> Self {
        let reduced = rows.fixed_columns::<5>(0).into_owned();
        Self { rows, reduced }
    }
}

/// Closed-form centroid and area-normalized second moments of a filled ellipse.
pub fn features_from_ellipse(e: &EllipseParams) -> FeatureVector {
    let (s, c) = e.alpha.sin_cos();
    let (a2, b2) = (e.a * e.a, e.b * e.b);
    FeatureVector {
        xg: e.center.x,
        yg: e.center.y,
        mu20: (a2 * c * c + b2 * s * s) / 4.0,
        mu11: (a2 - b2) * s * c / 4.0,
        mu02: (a2 * s * s + b2 * c * c) / 4.0,
    }
}

pub fn feature_error(observed: &FeatureVector, desired: &FeatureVector) -> FeatureError {
    FeatureError::from_delta(observed.to_vector() - desired.to_vector())
}

/// Depth (meters, positive along the optical axis) from the known fruit
/// diameter `apple_diameter` (mm) and its observed image diameter (px).
pub fn depth_estimate(
    intr: &CameraIntrinsics,
    apple_diameter: f64,
    observed_diameter: f64,
) -> Result<f64, FeaturesError> {
    if !(observed_diameter >= 1.0) {
        return Err(FeaturesError::ZeroObservedDiameter(observed_diameter));
    }
    let depth_mm = intr.focal_length * apple_diameter / (observed_diameter * intr.pixel_size);
    Ok(depth_mm.abs() / 1000.0)
}

/// Features of a sphere given in the camera frame.
pub fn sphere_features(sphere_in_camera: &Sphere) -> Result<FeatureVector, FeaturesError> {
    Ok(features_from_ellipse(&project_sphere(sphere_in_camera)?))
}

fn perturbed_features(
    sphere: &Sphere,
    twist: &Vector6<f64>,
) -> Result<Vector5<f64>, FeaturesError> {
    // Camera moves by exp(ξ); the sphere is re-expressed in the moved frame.
    let motion = se3_exp(&Twist::from_vector(twist));
    Ok(sphere_features(&sphere.expressed_in(&motion))?.to_vector())
}

/// Central finite-difference interaction matrix of the map
/// twist → project_sphere → features_from_ellipse.
pub fn interaction_matrix(sphere_in_camera: &Sphere) -> Result<InteractionMatrix, FeaturesError> {
    interaction_matrix_with_step(sphere_in_camera, FD_STEP)
}

pub fn interaction_matrix_with_step(
    sphere_in_camera: &Sphere,
    h: f64,
) -> Result<InteractionMatrix, FeaturesError> {
    sphere_features(sphere_in_camera)?;
    let mut rows = SMatrix::<f64, 5, 6>::zeros();
    for j in 0..6 {
        let mut step = Vector6::zeros();
        step[j] = h;
        let plus = perturbed_features(sphere_in_camera, &step)?;
        let minus = perturbed_features(sphere_in_camera, &(-step))?;
        rows.set_column(j, &((plus - minus) / (2.0 * h)));
    }
    Ok(InteractionMatrix::new(rows))
}
