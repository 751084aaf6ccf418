use crate::geometry::{RigidTransform, Sphere};
use nalgebra::Vector3;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;

/// Everything the synthetic camera can see.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SceneConfig {
    pub target: Sphere,
    pub target_albedo: f64,
    pub clutter: Vec<Sphere>,
    pub clutter_albedo: f64,
    pub occluders: Vec<Occluder>,
    pub illumination: IlluminationSchedule,
    pub specular: SpecularConfig,
    pub disease: DiseaseConfig,
    /// Standard deviation of additive sensor noise, in intensity levels.
    pub noise_sigma: f64,
    pub wind: WindConfig,
    pub light: LightConfig,
    pub background: BackgroundConfig,
}

impl Default for SceneConfig {
    fn default() -> Self {
        Self {
            target: Sphere::new(Vector3::zeros(), 0.04),
            target_albedo: 0.85,
            clutter: Vec::new(),
            clutter_albedo: 0.8,
            occluders: Vec::new(),
            illumination: IlluminationSchedule::default(),
            specular: SpecularConfig::default(),
            disease: DiseaseConfig::default(),
            noise_sigma: 0.0,
            wind: WindConfig::default(),
            light: LightConfig::default(),
            background: BackgroundConfig::default(),
        }
    }
}

impl SceneConfig {
    pub fn validate(&self) -> Result<(), String> {
        if !(self.target.radius > 0.0) {
            return Err("target radius must be positive".into());
        }
        if self.clutter.iter().any(|s| !(s.radius > 0.0)) {
            return Err("clutter radius must be positive".into());
        }
        if self.illumination.keyframes.iter().any(|k| !(k[1] > 0.0)) {
            return Err("illumination gain must be positive".into());
        }
        if self.noise_sigma < 0.0 {
            return Err("noise sigma must be non-negative".into());
        }
        if self.occluders.iter().any(|o| o.vertices.len() < 3) {
            return Err("occluder polygons need at least three vertices".into());
        }
        Ok(())
    }
}

/// Directional light plus ambient term; `direction` points toward the light.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct LightConfig {
    pub direction: [f64; 3],
    pub ambient: f64,
}

impl Default for LightConfig {
    fn default() -> Self {
        Self {
            direction: [0.3, -1.0, 0.8],
            ambient: 0.55,
        }
    }
}

/// Dark textured backdrop (foliage stand-in).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct BackgroundConfig {
    pub level: f64,
    pub texture: f64,
    /// Texture cell size in pixels.
    pub cell: usize,
}

impl Default for BackgroundConfig {
    fn default() -> Self {
        Self {
            level: 45.0,
            texture: 12.0,
            cell: 24,
        }
    }
}

/// Piecewise-linear multiplicative gain over time; `[time_s, gain]` pairs.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default)]
pub struct IlluminationSchedule {
    pub keyframes: Vec<[f64; 2]>,
}

impl IlluminationSchedule {
    pub fn constant(gain: f64) -> Self {
        Self {
            keyframes: vec![[0.0, gain]],
        }
    }

    pub fn gain_at(&self, t: f64) -> f64 {
        let k = &self.keyframes;
        match k.len() {
            0 => 1.0,
            _ if t <= k[0][0] => k[0][1],
            n if t >= k[n - 1][0] => k[n - 1][1],
            _ => {
                let i = k.windows(2).position(|w| t < w[1][0]).unwrap_or(0);
                let ([t0, g0], [t1, g1]) = (k[i], k[i + 1]);
                g0 + (g1 - g0) * (t - t0) / (t1 - t0)
            }
        }
    }
}

/// Saturated highlight around the mirror direction of the light.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SpecularConfig {
    pub enabled: bool,
    /// Half-angle of the highlight cone around the half vector, degrees.
    pub half_angle_deg: f64,
}

impl Default for SpecularConfig {
    fn default() -> Self {
        Self {
            enabled: false,
            half_angle_deg: 15.0,
        }
    }
}

/// Dark circular patches on the target surface.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct DiseaseConfig {
    pub count: usize,
    /// Intensity multiplier inside a patch.
    pub darkness: f64,
    pub angular_radius_deg: f64,
    pub seed: u64,
}

impl Default for DiseaseConfig {
    fn default() -> Self {
        Self {
            count: 0,
            darkness: 0.3,
            angular_radius_deg: 12.0,
            seed: 7,
        }
    }
}

impl DiseaseConfig {
    /// Unit patch directions in the world frame.
    pub fn patch_directions(&self) -> Vec<Vector3<f64>> {
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        (0..self.count)
            .map(|_| loop {
                let v = Vector3::new(
                    rng.random_range(-1.0..1.0),
                    rng.random_range(-1.0..1.0),
                    rng.random_range(-1.0..1.0),
                );
                let n = v.norm();
                if n > 0.05 && n <= 1.0 {
                    break v / n;
                }
            })
            .collect()
    }
}

/// Sinusoidal sway of every sphere center plus smooth random gusts.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct WindConfig {
    /// Sway amplitude in meters.
    pub amplitude: f64,
    pub frequency_hz: f64,
    pub direction: [f64; 3],
    /// Per-axis standard deviation of the gust displacement, meters.
    pub gust_sigma: f64,
    pub gust_seed: u64,
}

impl Default for WindConfig {
    fn default() -> Self {
        Self {
            amplitude: 0.0,
            frequency_hz: 0.8,
            direction: [1.0, 0.0, 0.0],
            gust_sigma: 0.0,
            gust_seed: 11,
        }
    }
}

const GUST_COMPONENTS: usize = 3;

impl WindConfig {
    pub fn is_calm(&self) -> bool {
        self.amplitude == 0.0 && self.gust_sigma == 0.0
    }

    /// Center displacement at time `t`.
    pub fn displacement(&self, t: f64) -> Vector3<f64> {
        if self.is_calm() {
            return Vector3::zeros();
        }
        let dir = Vector3::from(self.direction);
        let dir = if dir.norm() > 0.0 {
            dir.normalize()
        } else {
            dir
        };
        let mut d = dir * (self.amplitude * (2.0 * PI * self.frequency_hz * t).sin());
        if self.gust_sigma > 0.0 {
            // Sum of random sinusoids; each axis gets variance gust_sigma².
            let mut rng = ChaCha8Rng::seed_from_u64(self.gust_seed);
            let amp = self.gust_sigma * (2.0 / GUST_COMPONENTS as f64).sqrt();
            for _ in 0..GUST_COMPONENTS {
                let f = rng.random_range(0.2..1.5);
                let phase = Vector3::new(
                    rng.random_range(0.0..2.0 * PI),
                    rng.random_range(0.0..2.0 * PI),
                    rng.random_range(0.0..2.0 * PI),
                );
                d += phase.map(|p| amp * (2.0 * PI * f * t + p).sin());
            }
        }
        d
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OccluderFrame {
    #[default]
    World,
    Camera,
}

/// Planar convex polygon drawn with a flat intensity.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Occluder {
    #[serde(default)]
    pub frame: OccluderFrame,
    /// Coplanar vertices in order, meters.
    pub vertices: Vec<Vector3<f64>>,
    #[serde(default = "default_occluder_intensity")]
    pub intensity: f64,
}

fn default_occluder_intensity() -> f64 {
    35.0
}

impl Occluder {
    /// World-fixed sheet just in front of `target` that hides `fraction` of
    /// its silhouette boundary as seen from `camera`. `angle` is the image
    /// direction (radians from camera x toward camera y) of the hidden side.
    pub fn covering_boundary_fraction(
        target: &Sphere,
        camera: &RigidTransform,
        fraction: f64,
        angle: f64,
        gap: f64,
    ) -> Occluder {
        let cam = camera.translation;
        let to_center = target.center - cam;
        let dist = to_center.norm();
        let u = to_center / dist;
        let plane_point = target.center - u * (target.radius + gap);
        let plane_dist = (plane_point - cam).dot(&u);
        // Silhouette cone radius where it crosses the sheet.
        let rho = target.radius / (dist * dist - target.radius * target.radius).sqrt() * plane_dist;
        let cx = camera.rotation.column(0).into_owned();
        let cy = camera.rotation.column(1).into_owned();
        let hidden = (cx * angle.cos() + cy * angle.sin()).normalize();
        let e1 = (hidden - u * u.dot(&hidden)).normalize();
        let e2 = u.cross(&e1);
        // Boundary points with cos θ > c/ρ are hidden; their share is `fraction`.
        let cut = rho * (PI * fraction.clamp(0.0, 1.0)).cos();
        let far = 4.0 * target.radius + rho;
        let corners = [(cut, -far), (far, -far), (far, far), (cut, far)];
        Occluder {
            frame: OccluderFrame::World,
            vertices: corners
                .iter()
                .map(|&(s, t)| plane_point + e1 * s + e2 * t)
                .collect(),
            intensity: default_occluder_intensity(),
        }
    }
}
