//! Closed-loop image-based visual servoing (IBVS) for close-up fruit inspection.
//!
//! The crate simulates an eye-in-hand camera servoing onto a spherical fruit:
//!
//! 1. [`imaging`] renders deterministic synthetic frames (shading, disease
//!    patches, specular highlights, clutter, occluders, wind, sensor noise).
//! 2. [`tracker`] detects the fruit with an adaptive Hough search, selects it
//!    through a decision matrix, then tracks it with chain-code boundary
//!    extraction and RANSAC ellipse fitting.
//! 3. [`features`] turns the fitted ellipse into the 5-vector of centroid and
//!    normalized second-order moments and builds the interaction matrix.
//! 4. [`servo`] computes the camera twist with an adaptive gain and simulates
//!    the robot's low-level velocity deadband.
//! 5. [`harness`] wires everything into a 30 Hz loop and writes traces.
//!
//! Normalized image coordinates (`x = X/Z`, `y = Y/Z`) are the canonical
//! feature space; pixels only appear at the imaging/tracker boundary.

// `!(x > 0.0)` is used on purpose so NaN inputs are rejected too.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod features;
pub mod geometry;
pub mod harness;
pub mod imaging;
pub mod par;
pub mod servo;
pub mod tracker;

pub use features::{FeatureError, FeatureVector, InteractionMatrix};
pub use geometry::{CameraIntrinsics, EllipseParams, RigidTransform, Sphere, Twist};
pub use harness::{run_scenario, Outcome, Scenario, TraceRecord};
pub use imaging::{render, Frame, SceneConfig};
pub use servo::{AdaptiveGain, RobotSimConfig, ServoConfig};
pub use tracker::{DecisionMatrix, TrackerPhase, TrackerState};
