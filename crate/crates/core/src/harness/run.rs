use super::scenario::{Plant, Scenario};
use super::trace::{RunSummary, TraceRecord};
use super::{HarnessError, Outcome};
use crate::features::{
    depth_estimate, feature_error, interaction_matrix, sphere_features, FeatureVector,
};
use crate::geometry::{project_sphere, CameraIntrinsics, Sphere, Twist};
use crate::imaging::{render, splitmix, Frame, SceneConfig};
use crate::par;
use crate::servo::{check_convergence, compute_camera_twist, SimulatedRobot};
use crate::tracker::{StepReport, Tracker, TrackerPhase};
use nalgebra::Vector3;
use std::time::Instant;

#[derive(Debug, Clone)]
pub struct RunResult {
    pub scenario: String,
    pub seed: u64,
    pub outcome: Outcome,
    pub trace: Vec<TraceRecord>,
    pub wall_time_s: f64,
    /// Iteration at which the criterion was first met, if ever.
    pub first_converged: Option<usize>,
}

impl RunResult {
    pub fn iterations(&self) -> usize {
        self.trace.len()
    }

    pub fn final_error(&self) -> Option<f64> {
        self.trace.iter().rev().find_map(|r| r.error_squared)
    }

    pub fn summary(&self) -> RunSummary {
        RunSummary {
            scenario: self.scenario.clone(),
            outcome: self.outcome,
            iterations: self.iterations(),
            final_error: self.final_error(),
            wall_time_s: self.wall_time_s,
            seed: self.seed,
        }
    }
}

/// What a caller may inspect after each rendered frame.
pub struct FrameView<'a> {
    pub iteration: usize,
    pub frame: &'a Frame,
    pub tracker: &'a Tracker,
    pub report: &'a StepReport,
}

/// Overrides applied on top of a scenario file.
#[derive(Debug, Clone, Copy, Default)]
pub struct RunOptions {
    pub max_iterations: Option<usize>,
}

/// Projected radius (pixels) of the target seen from `pose`.
fn expected_radius(
    target: &Sphere,
    pose: &crate::geometry::RigidTransform,
    intr: &CameraIntrinsics,
) -> f64 {
    project_sphere(&target.expressed_in(pose))
        .map(|e| 0.5 * intr.ellipse_to_pixel(&e).mean_diameter())
        .unwrap_or(20.0)
}

/// Sphere the controller linearizes about: observed centroid pushed out to
/// the estimated depth, with the model radius.
fn proxy_sphere(obs: &FeatureVector, observed_diameter_px: f64, s: &Scenario) -> Option<Sphere> {
    let z = depth_estimate(&s.intrinsics, s.apple_diameter(), observed_diameter_px).ok()?;
    let radius = s.apple_diameter() / 2000.0;
    // The estimate measures the distance to the limb; recover the center distance.
    let dist = (z * z + radius * radius).sqrt();
    let ray = Vector3::new(obs.xg, obs.yg, 1.0).normalize();
    Some(Sphere::new(ray * dist, radius))
}

pub fn run_scenario(s: &Scenario) -> Result<RunResult, HarnessError> {
    run_scenario_with(s, RunOptions::default(), |_| {})
}

/// Runs the closed loop, calling `observe` after every tracked frame.
pub fn run_scenario_with(
    s: &Scenario,
    opts: RunOptions,
    mut observe: impl FnMut(&FrameView),
) -> Result<RunResult, HarnessError> {
    s.validate()?;
    let started = Instant::now();
    let scene: SceneConfig = s.resolved_scene()?;
    let intr = s.intrinsics;
    let desired = s.desired_features()?;
    let start = s.initial_pose()?;
    let hand_eye = s.hand_eye.to_transform();
    let actual = hand_eye.compose(&s.hand_eye_error.to_transform());
    let mut robot = SimulatedRobot::new(start, hand_eye, s.robot).with_actual_hand_eye(actual);
    let ransac = crate::tracker::RansacConfig {
        rng_seed: splitmix(s.ransac.rng_seed ^ splitmix(s.rng_seed)),
        ..s.ransac
    };
    let mut tracker = Tracker::new(
        intr,
        s.tracker.clone(),
        ransac,
        expected_radius(&scene.target, &start, &intr),
    );
    let dt = s.robot.dt;
    let limit = opts.max_iterations.unwrap_or(s.servo.max_iterations);
    let duration_iters = (s.max_duration / dt).round() as usize;
    let max_iters = limit.min(duration_iters).max(1);

    let mut trace = Vec::new();
    let mut unlocked = 0usize;
    let mut first_converged = None;
    let mut outcome = Outcome::Timeout;
    for iteration in 0..max_iters {
        let t = iteration as f64 * dt;
        let pose = *robot.camera_pose();
        let (observed, diameter_px, phase, inlier_ratio) = match s.plant {
            Plant::Analytic => {
                let mut target = scene.target;
                target.center += scene.wind.displacement(t);
                let seen = target.expressed_in(&pose);
                match project_sphere(&seen) {
                    Ok(e) => (
                        sphere_features(&seen).ok(),
                        intr.ellipse_to_pixel(&e).mean_diameter(),
                        TrackerPhase::Tracking,
                        None,
                    ),
                    Err(_) => (None, 0.0, TrackerPhase::Lost, None),
                }
            }
            Plant::Rendered => {
                let frame = render(
                    &scene,
                    &pose,
                    &intr,
                    t,
                    splitmix(s.rng_seed ^ splitmix(iteration as u64)),
                );
                if tracker.state.phase != TrackerPhase::Tracking {
                    // Re-detection expects the fruit at the size the model predicts.
                    tracker.decision.set_expected_radius(expected_radius(
                        &scene.target,
                        &pose,
                        &intr,
                    ));
                }
                let report = tracker.step(&frame);
                observe(&FrameView {
                    iteration,
                    frame: &frame,
                    tracker: &tracker,
                    report: &report,
                });
                let obs = report.observation.as_ref();
                (
                    obs.map(|o| o.feature),
                    obs.map_or(0.0, |o| o.ellipse_px.mean_diameter()),
                    report.phase,
                    obs.map(|o| o.inlier_ratio),
                )
            }
        };

        let mut commanded = Twist::zero();
        let mut error_squared = None;
        let mut converged = false;
        if let Some(obs) = &observed {
            let e = feature_error(obs, &desired);
            error_squared = Some(e.squared_sum);
            converged = check_convergence(&e, &s.servo);
            if !converged || s.continue_after_convergence {
                if let Some(l) =
                    proxy_sphere(obs, diameter_px, s).and_then(|p| interaction_matrix(&p).ok())
                {
                    commanded = compute_camera_twist(&e, &l, &s.gain, &s.servo)
                        .unwrap_or_else(|_| Twist::zero());
                }
            }
        }
        if converged && first_converged.is_none() {
            first_converged = Some(iteration);
        }
        let applied = robot.step(&commanded);
        trace.push(TraceRecord {
            iteration,
            time: t,
            observed,
            desired,
            error_squared,
            commanded,
            applied,
            camera_pose: pose,
            phase,
            inlier_ratio,
        });
        if converged && !s.continue_after_convergence {
            outcome = Outcome::Converged;
            break;
        }
        unlocked = if phase == TrackerPhase::Tracking {
            0
        } else {
            unlocked + 1
        };
        if unlocked > s.lost_frame_limit {
            outcome = Outcome::TrackLostUnrecovered;
            break;
        }
    }
    if s.continue_after_convergence && outcome == Outcome::Timeout && first_converged.is_some() {
        outcome = Outcome::Converged;
    }
    Ok(RunResult {
        scenario: s.name.clone(),
        seed: s.rng_seed,
        outcome,
        trace,
        wall_time_s: started.elapsed().as_secs_f64(),
        first_converged,
    })
}

/// Independent runs of one scenario over several seeds, in seed order.
pub fn run_seeds(s: &Scenario, seeds: &[u64]) -> Result<Vec<RunResult>, HarnessError> {
    par::map(seeds, |&seed| run_scenario(&s.clone().with_seed(seed)))
        .into_iter()
        .collect()
}
