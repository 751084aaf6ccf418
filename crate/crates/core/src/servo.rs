//! IBVS control law, convergence test and the simulated eye-in-hand robot.

use crate::features::{FeatureError, InteractionMatrix};
use crate::geometry::{integrate_twist, twist_camera_to_robot, RigidTransform, Twist};
use nalgebra::{Matrix5, Vector3, Vector5};
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Largest condition number of the damped normal matrix still solved.
pub const MAX_CONDITION: f64 = 1e12;

#[derive(Debug, Clone, Copy, PartialEq, Error)]
pub enum ServoError {
    #[error("interaction matrix is numerically singular (condition {0:e})")]
    SingularInteraction(f64),
    #[error("invalid gain: {0}")]
    InvalidGain(&'static str),
}

/// Error-dependent gain `λ(x) = (λ0 − λ∞)·exp(−λ0′·x / (λ0 − λ∞)) + λ∞`.
///
/// The gain is largest at zero error, which keeps commanded velocities above
/// the robot's deadband near convergence.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AdaptiveGain {
    pub gain_at_zero: f64,
    pub gain_at_infinity: f64,
    pub slope_at_zero: f64,
}

impl Default for AdaptiveGain {
    fn default() -> Self {
        Self {
            gain_at_zero: 4.0,
            gain_at_infinity: 0.4,
            slope_at_zero: 30.0,
        }
    }
}

impl AdaptiveGain {
    pub fn new(
        gain_at_zero: f64,
        gain_at_infinity: f64,
        slope_at_zero: f64,
    ) -> Result<Self, ServoError> {
        let g = Self {
            gain_at_zero,
            gain_at_infinity,
            slope_at_zero,
        };
        g.validate()?;
        Ok(g)
    }

    /// A flat schedule `λ(x) = lambda`.
    pub fn constant(lambda: f64) -> Self {
        Self {
            gain_at_zero: lambda,
            gain_at_infinity: lambda,
            slope_at_zero: 0.0,
        }
    }

    pub fn is_constant(&self) -> bool {
        self.gain_at_zero == self.gain_at_infinity
    }

    pub fn validate(&self) -> Result<(), ServoError> {
        if self.is_constant() {
            return if self.gain_at_zero > 0.0 {
                Ok(())
            } else {
                Err(ServoError::InvalidGain("constant gain must be positive"))
            };
        }
        if !(self.gain_at_infinity > 0.0) {
            return Err(ServoError::InvalidGain("gain at infinity must be positive"));
        }
        if !(self.gain_at_zero > self.gain_at_infinity) {
            return Err(ServoError::InvalidGain(
                "gain at zero must exceed gain at infinity",
            ));
        }
        if !(self.slope_at_zero > 0.0) {
            return Err(ServoError::InvalidGain("slope at zero must be positive"));
        }
        Ok(())
    }

    pub fn value(&self, error_norm: f64) -> f64 {
        let span = self.gain_at_zero - self.gain_at_infinity;
        if span == 0.0 {
            return self.gain_at_infinity;
        }
        span * (-self.slope_at_zero * error_norm / span).exp() + self.gain_at_infinity
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ServoConfig {
    /// Strict upper bound on the squared feature error.
    pub convergence_threshold: f64,
    pub max_linear_speed: f64,
    pub max_angular_speed: f64,
    /// Damping `μ` of the least-squares solve.
    pub damping: f64,
    pub max_iterations: usize,
}

impl Default for ServoConfig {
    fn default() -> Self {
        Self {
            convergence_threshold: 1e-4,
            max_linear_speed: 0.3,
            max_angular_speed: 0.8,
            damping: 1e-3,
            max_iterations: 600,
        }
    }
}

impl ServoConfig {
    pub fn is_valid(&self) -> bool {
        self.convergence_threshold > 0.0
            && self.max_linear_speed > 0.0
            && self.max_angular_speed > 0.0
            && self.damping >= 0.0
            && self.max_iterations > 0
    }
}

/// Low-level controller model of the simulated robot.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RobotSimConfig {
    /// Linear velocity components below this (m/s) are dropped.
    pub deadband_linear: f64,
    /// Angular velocity components below this (rad/s) are dropped.
    pub deadband_angular: f64,
    /// Control period in seconds.
    pub dt: f64,
}

impl Default for RobotSimConfig {
    fn default() -> Self {
        Self {
            deadband_linear: 0.002,
            deadband_angular: 0.01,
            dt: 1.0 / 30.0,
        }
    }
}

impl RobotSimConfig {
    pub fn is_valid(&self) -> bool {
        self.deadband_linear >= 0.0 && self.deadband_angular >= 0.0 && self.dt > 0.0
    }
}

fn clamp_norm(v: Vector3<f64>, max: f64) -> Vector3<f64> {
    let n = v.norm();
    if n > max {
        v * (max / n)
    } else {
        v
    }
}

/// `v = −λ(‖e‖)·(LᵀL + μ²I)⁻¹Lᵀe` on the five non-roll axes, then norm-clamped.
pub fn compute_camera_twist(
    e: &FeatureError,
    l: &InteractionMatrix,
    gain: &AdaptiveGain,
    cfg: &ServoConfig,
) -> Result<Twist, ServoError> {
    let lambda = gain.value(e.norm());
    let lt = l.reduced.transpose();
    let normal = lt * l.reduced + Matrix5::identity() * (cfg.damping * cfg.damping);
    let sv = normal.singular_values();
    let (smax, smin) = (sv.max(), sv.min());
    let cond = if smin > 0.0 {
        smax / smin
    } else {
        f64::INFINITY
    };
    if !(cond <= MAX_CONDITION) {
        return Err(ServoError::SingularInteraction(cond));
    }
    let rhs: Vector5<f64> = lt * e.delta;
    let v5 = normal
        .lu()
        .solve(&rhs)
        .ok_or(ServoError::SingularInteraction(cond))?
        * (-lambda);
    let linear = clamp_norm(Vector3::new(v5[0], v5[1], v5[2]), cfg.max_linear_speed);
    let angular = clamp_norm(Vector3::new(v5[3], v5[4], 0.0), cfg.max_angular_speed);
    Ok(Twist::new(linear, angular))
}

/// Strict test `Σe² < threshold`.
pub fn check_convergence(e: &FeatureError, cfg: &ServoConfig) -> bool {
    e.squared_sum < cfg.convergence_threshold
}

/// Zeroes every component whose magnitude is below its deadband.
pub fn apply_deadband(v: &Twist, sim: &RobotSimConfig) -> Twist {
    let cut = |x: f64, band: f64| if x.abs() < band { 0.0 } else { x };
    Twist::new(
        v.linear.map(|x| cut(x, sim.deadband_linear)),
        v.angular.map(|x| cut(x, sim.deadband_angular)),
    )
}

/// Outcome of one robot control period.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepResult {
    pub pose: RigidTransform,
    /// Robot-frame twist that survived the deadband.
    pub applied: Twist,
}

/// One control period where the controller converts with `assumed_hand_eye`
/// but the camera is really mounted at `actual_hand_eye`.
pub fn robot_step_miscalibrated(
    pose: &RigidTransform,
    commanded: &Twist,
    assumed_hand_eye: &RigidTransform,
    actual_hand_eye: &RigidTransform,
    sim: &RobotSimConfig,
) -> StepResult {
    let robot = twist_camera_to_robot(commanded, assumed_hand_eye);
    let applied = apply_deadband(&robot, sim);
    if applied == Twist::zero() {
        // A robot that does not move keeps its pose bit-for-bit.
        return StepResult {
            pose: *pose,
            applied,
        };
    }
    let camera = twist_camera_to_robot(&applied, &actual_hand_eye.inverse());
    StepResult {
        pose: integrate_twist(pose, &camera, sim.dt),
        applied,
    }
}

/// Camera twist → robot frame → deadband → camera frame → integrate over `dt`.
pub fn robot_step(
    pose: &RigidTransform,
    commanded: &Twist,
    hand_eye: &RigidTransform,
    sim: &RobotSimConfig,
) -> RigidTransform {
    robot_step_miscalibrated(pose, commanded, hand_eye, hand_eye, sim).pose
}

/// Free-flying eye-in-hand camera; sole owner of its pose.
#[derive(Debug, Clone)]
pub struct SimulatedRobot {
    pose: RigidTransform,
    assumed_hand_eye: RigidTransform,
    actual_hand_eye: RigidTransform,
    sim: RobotSimConfig,
}

impl SimulatedRobot {
    pub fn new(camera_pose: RigidTransform, hand_eye: RigidTransform, sim: RobotSimConfig) -> Self {
        Self {
            pose: camera_pose,
            assumed_hand_eye: hand_eye,
            actual_hand_eye: hand_eye,
            sim,
        }
    }

    /// Mounts the camera at `actual` while the controller keeps the calibrated value.
    pub fn with_actual_hand_eye(mut self, actual: RigidTransform) -> Self {
        self.actual_hand_eye = actual;
        self
    }

    pub fn camera_pose(&self) -> &RigidTransform {
        &self.pose
    }

    pub fn config(&self) -> &RobotSimConfig {
        &self.sim
    }

    /// Executes one control period and returns the applied robot twist.
    pub fn step(&mut self, commanded: &Twist) -> Twist {
        let r = robot_step_miscalibrated(
            &self.pose,
            commanded,
            &self.assumed_hand_eye,
            &self.actual_hand_eye,
            &self.sim,
        );
        self.pose = r.pose;
        r.applied
    }
}
