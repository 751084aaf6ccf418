use super::HarnessError;
use crate::features::{sphere_features, FeatureVector};
use crate::geometry::{initial_view_pose, project_sphere, CameraIntrinsics, RigidTransform};
use crate::imaging::{splitmix, Occluder, SceneConfig};
use crate::servo::{AdaptiveGain, RobotSimConfig, ServoConfig};
use crate::tracker::{RansacConfig, TrackerConfig};
use nalgebra::Vector3;
use serde::{Deserialize, Serialize};
use std::path::Path;

/// Translation plus roll/pitch/yaw in degrees.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(default)]
pub struct PoseSpec {
    pub translation: [f64; 3],
    pub rpy_deg: [f64; 3],
}

impl PoseSpec {
    pub fn to_transform(&self) -> RigidTransform {
        let [r, p, y] = self.rpy_deg.map(f64::to_radians);
        RigidTransform::from_rpy(r, p, y, Vector3::from(self.translation))
    }
}

/// World-fixed sheet hiding part of the target outline as seen from the goal.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OcclusionSpec {
    /// Fraction of the silhouette boundary hidden.
    pub fraction: f64,
    /// Image direction of the hidden side; drawn from the seed when absent.
    #[serde(default)]
    pub angle_deg: Option<f64>,
    /// Distance between the sheet and the fruit surface, meters.
    #[serde(default = "default_gap")]
    pub gap: f64,
}

fn default_gap() -> f64 {
    0.005
}

/// Where the observed features come from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Plant {
    /// Rendered frames through the full tracker.
    #[default]
    Rendered,
    /// Exact projection of the target; the tracker is bypassed.
    Analytic,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Scenario {
    pub name: String,
    #[serde(default)]
    pub description: String,
    #[serde(default)]
    pub scene: SceneConfig,
    #[serde(default)]
    pub intrinsics: CameraIntrinsics,
    /// Unit direction from the fruit center toward the goal camera position.
    #[serde(default = "default_view_direction")]
    pub view_direction: [f64; 3],
    /// Goal distance from the camera to the fruit center, meters.
    pub goal_standoff: f64,
    /// Start position relative to the goal, world frame, meters.
    pub initial_offset: [f64; 3],
    /// Extra start rotation in the camera frame, roll/pitch/yaw degrees.
    #[serde(default)]
    pub initial_rotation_deg: [f64; 3],
    #[serde(default)]
    pub servo: ServoConfig,
    #[serde(default)]
    pub robot: RobotSimConfig,
    #[serde(default)]
    pub gain: AdaptiveGain,
    #[serde(default)]
    pub ransac: RansacConfig,
    #[serde(default)]
    pub tracker: TrackerConfig,
    /// Calibrated camera mount used by the controller.
    #[serde(default = "default_hand_eye")]
    pub hand_eye: PoseSpec,
    /// Mount error: the real mount is `hand_eye ∘ hand_eye_error`.
    #[serde(default)]
    pub hand_eye_error: PoseSpec,
    #[serde(default)]
    pub occlusion: Option<OcclusionSpec>,
    /// Fruit diameter assumed by the depth estimate, millimeters; defaults
    /// to the true diameter.
    #[serde(default)]
    pub apple_diameter_mm: Option<f64>,
    #[serde(default)]
    pub plant: Plant,
    #[serde(default)]
    pub rng_seed: u64,
    /// Simulated seconds before giving up.
    pub max_duration: f64,
    /// Consecutive frames without a lock tolerated before giving up.
    #[serde(default = "default_lost_limit")]
    pub lost_frame_limit: usize,
    /// Keep servoing after the criterion is met (disturbance studies).
    #[serde(default)]
    pub continue_after_convergence: bool,
}

fn default_view_direction() -> [f64; 3] {
    [0.0, -1.0, 0.0]
}

fn default_hand_eye() -> PoseSpec {
    PoseSpec {
        translation: [0.0, 0.06, 0.08],
        rpy_deg: [0.0, 0.0, 90.0],
    }
}

fn default_lost_limit() -> usize {
    60
}

macro_rules! builtin {
    ($($name:literal),* $(,)?) => {
        &[$(($name, include_str!(concat!("../../scenarios/", $name, ".json")))),*]
    };
}

/// Scenario files shipped with the crate.
pub const BUILTIN_SCENARIOS: &[(&str, &str)] = builtin!(
    "indoor_nominal",
    "disease",
    "lower_left_corner",
    "upper_right_corner",
    "wind_light",
    "bottom_up",
    "occlusion_30pct",
    "occlusion_60pct",
    "clutter_two_apples",
);

impl Scenario {
    pub fn from_json(text: &str) -> Result<Self, HarnessError> {
        let s: Scenario =
            serde_json::from_str(text).map_err(|e| HarnessError::Config(e.to_string()))?;
        s.validate()?;
        Ok(s)
    }

    pub fn from_file(path: impl AsRef<Path>) -> Result<Self, HarnessError> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path)
            .map_err(|e| HarnessError::Config(format!("{}: {e}", path.display())))?;
        Self::from_json(&text)
    }

    pub fn builtin(name: &str) -> Option<Self> {
        BUILTIN_SCENARIOS
            .iter()
            .find(|(n, _)| *n == name)
            .map(|(_, text)| Self::from_json(text).expect("shipped scenario is valid"))
    }

    pub fn builtin_names() -> impl Iterator<Item = &'static str> {
        BUILTIN_SCENARIOS.iter().map(|(n, _)| *n)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("scenario serializes")
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.rng_seed = seed;
        self
    }

    pub fn goal_pose(&self) -> Result<RigidTransform, HarnessError> {
        let t = &self.scene.target;
        let dir = Vector3::from(self.view_direction);
        if dir.norm() < 1e-9 {
            return Err(HarnessError::Config(
                "view direction must be non-zero".into(),
            ));
        }
        let inspect = t.center + dir.normalize() * t.radius;
        initial_view_pose(t, &inspect, self.goal_standoff - t.radius)
            .map_err(|e| HarnessError::Config(e.to_string()))
    }

    pub fn initial_pose(&self) -> Result<RigidTransform, HarnessError> {
        let goal = self.goal_pose()?;
        let [r, p, y] = self.initial_rotation_deg.map(f64::to_radians);
        let turn = RigidTransform::from_rpy(r, p, y, Vector3::zeros());
        let shifted = RigidTransform::new(
            goal.rotation,
            goal.translation + Vector3::from(self.initial_offset),
        );
        Ok(shifted.compose(&turn))
    }

    /// Features of the target seen from the goal pose.
    pub fn desired_features(&self) -> Result<FeatureVector, HarnessError> {
        let goal = self.goal_pose()?;
        sphere_features(&self.scene.target.expressed_in(&goal))
            .map_err(|e| HarnessError::Config(e.to_string()))
    }

    pub fn apple_diameter(&self) -> f64 {
        self.apple_diameter_mm
            .unwrap_or(self.scene.target.radius * 2000.0)
    }

    /// Scene with seed-dependent parts (gusts, occluder placement) resolved.
    pub fn resolved_scene(&self) -> Result<SceneConfig, HarnessError> {
        let mut scene = self.scene.clone();
        scene.wind.gust_seed = splitmix(scene.wind.gust_seed ^ splitmix(self.rng_seed));
        if let Some(occ) = &self.occlusion {
            let angle = match occ.angle_deg {
                Some(a) => a.to_radians(),
                None => {
                    let u = splitmix(self.rng_seed ^ 0x6F63_636C) >> 11;
                    u as f64 / (1u64 << 53) as f64 * std::f64::consts::TAU
                }
            };
            let goal = self.goal_pose()?;
            scene.occluders.push(Occluder::covering_boundary_fraction(
                &scene.target,
                &goal,
                occ.fraction,
                angle,
                occ.gap,
            ));
        }
        Ok(scene)
    }

    pub fn validate(&self) -> Result<(), HarnessError> {
        let bad = |m: &str| Err(HarnessError::Config(format!("{}: {m}", self.name)));
        if self.name.is_empty() {
            return bad("name must be non-empty");
        }
        self.scene
            .validate()
            .map_err(|m| HarnessError::Config(format!("{}: {m}", self.name)))?;
        if !self.intrinsics.is_valid() {
            return bad("invalid intrinsics");
        }
        if !(self.goal_standoff > self.scene.target.radius) {
            return bad("goal standoff must exceed the target radius");
        }
        if !self.servo.is_valid() || !self.robot.is_valid() {
            return bad("invalid servo or robot configuration");
        }
        if let Err(e) = self.gain.validate() {
            return bad(&e.to_string());
        }
        if !self.ransac.is_valid() {
            return bad("invalid RANSAC configuration");
        }
        if let Err(m) = self.tracker.validate() {
            return bad(&m);
        }
        if !(self.max_duration > 0.0) {
            return bad("max duration must be positive");
        }
        if self.apple_diameter_mm.is_some_and(|d| !(d > 0.0)) {
            return bad("apple diameter must be positive");
        }
        if let Some(o) = &self.occlusion {
            if !(0.0..1.0).contains(&o.fraction) || !(o.gap >= 0.0) {
                return bad("occlusion fraction must be in [0, 1) and gap non-negative");
            }
        }
        // The fruit must start inside the view.
        let start = self.initial_pose()?;
        let seen = self.scene.target.expressed_in(&start);
        let e = project_sphere(&seen)
            .map_err(|e| HarnessError::Config(format!("{}: {e}", self.name)))?;
        let c = self.intrinsics.normalized_to_pixel(e.center);
        if !(c.x >= 0.0
            && c.y >= 0.0
            && c.x < self.intrinsics.width as f64
            && c.y < self.intrinsics.height as f64)
        {
            return bad("target starts outside the field of view");
        }
        Ok(())
    }
}
