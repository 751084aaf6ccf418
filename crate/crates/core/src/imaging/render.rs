use super::frame::Frame;
use super::scene::{OccluderFrame, SceneConfig};
use crate::geometry::{CameraIntrinsics, RigidTransform};
use crate::par;
use nalgebra::{Vector2, Vector3};
use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// What a pixel shows.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Label {
    #[default]
    Background,
    Target,
    Clutter(u16),
    Occluder(u16),
}

#[derive(Debug, Clone)]
pub struct RenderOutput {
    pub frame: Frame,
    pub labels: Vec<Label>,
}

struct ShadedSphere {
    center: Vector3<f64>,
    radius: f64,
    albedo: f64,
    patches: Vec<Vector3<f64>>,
    label: Label,
}

struct Polygon {
    normal: Vector3<f64>,
    offset: f64,
    origin: Vector3<f64>,
    axes: [Vector3<f64>; 2],
    /// Vertices in plane coordinates, counter-clockwise.
    vertices: Vec<Vector2<f64>>,
    intensity: f64,
    label: Label,
}

impl Polygon {
    fn contains(&self, p: &Vector3<f64>) -> bool {
        let d = p - self.origin;
        let q = Vector2::new(d.dot(&self.axes[0]), d.dot(&self.axes[1]));
        let n = self.vertices.len();
        (0..n).all(|i| {
            let a = self.vertices[i];
            let b = self.vertices[(i + 1) % n];
            let e = b - a;
            let r = q - a;
            e.x * r.y - e.y * r.x >= 0.0
        })
    }
}

struct Prepared {
    spheres: Vec<ShadedSphere>,
    polygons: Vec<Polygon>,
    light: Vector3<f64>,
    ambient: f64,
    cos_patch: f64,
    darkness: f64,
    cos_specular: Option<f64>,
}

fn prepare(scene: &SceneConfig, camera_pose: &RigidTransform, t: f64) -> Prepared {
    let world_to_cam = camera_pose.inverse();
    let sway = scene.wind.displacement(t);
    let patches: Vec<Vector3<f64>> = scene
        .disease
        .patch_directions()
        .iter()
        .map(|d| world_to_cam.transform_vector(d))
        .collect();
    let mut spheres = vec![ShadedSphere {
        center: world_to_cam.transform_point(&(scene.target.center + sway)),
        radius: scene.target.radius,
        albedo: scene.target_albedo,
        patches,
        label: Label::Target,
    }];
    spheres.extend(scene.clutter.iter().enumerate().map(|(i, s)| ShadedSphere {
        center: world_to_cam.transform_point(&(s.center + sway)),
        radius: s.radius,
        albedo: scene.clutter_albedo,
        patches: Vec::new(),
        label: Label::Clutter(i as u16),
    }));

    let polygons = scene
        .occluders
        .iter()
        .enumerate()
        .filter_map(|(i, o)| {
            let verts: Vec<Vector3<f64>> = match o.frame {
                OccluderFrame::World => o
                    .vertices
                    .iter()
                    .map(|v| world_to_cam.transform_point(v))
                    .collect(),
                OccluderFrame::Camera => o.vertices.clone(),
            };
            let origin = verts[0];
            let normal = (verts[1] - verts[0]).cross(&(verts[2] - verts[0]));
            if normal.norm() < 1e-15 {
                return None;
            }
            let normal = normal.normalize();
            let ax0 = (verts[1] - verts[0]).normalize();
            let ax1 = normal.cross(&ax0);
            let vertices = verts
                .iter()
                .map(|v| {
                    let d = v - origin;
                    Vector2::new(d.dot(&ax0), d.dot(&ax1))
                })
                .collect();
            Some(Polygon {
                normal,
                offset: normal.dot(&origin),
                origin,
                axes: [ax0, ax1],
                vertices,
                intensity: o.intensity,
                label: Label::Occluder(i as u16),
            })
        })
        .collect();

    let light = world_to_cam.transform_vector(&Vector3::from(scene.light.direction));
    let light = if light.norm() > 0.0 {
        light.normalize()
    } else {
        Vector3::z()
    };
    Prepared {
        spheres,
        polygons,
        light,
        ambient: scene.light.ambient,
        cos_patch: scene.disease.angular_radius_deg.to_radians().cos(),
        darkness: scene.disease.darkness,
        cos_specular: scene
            .specular
            .enabled
            .then(|| scene.specular.half_angle_deg.to_radians().cos()),
    }
}

/// Nearest positive ray parameter of a ray `t·d` hitting the sphere.
#[inline]
fn ray_sphere(d: &Vector3<f64>, center: &Vector3<f64>, radius: f64) -> Option<f64> {
    let a = d.norm_squared();
    let b = d.dot(center);
    let c = center.norm_squared() - radius * radius;
    if c <= 0.0 {
        return None;
    }
    let disc = b * b - a * c;
    if disc < 0.0 {
        return None;
    }
    let t = (b - disc.sqrt()) / a;
    (t > 0.0).then_some(t)
}

fn shade_sphere(p: &Prepared, s: &ShadedSphere, d: &Vector3<f64>, t: f64) -> f64 {
    let hit = d * t;
    let n = (hit - s.center) / s.radius;
    let diffuse = n.dot(&p.light).max(0.0);
    let mut i = 255.0 * s.albedo * (p.ambient + (1.0 - p.ambient) * diffuse);
    if s.patches.iter().any(|c| n.dot(c) > p.cos_patch) {
        i *= p.darkness;
    }
    if let Some(cos_spec) = p.cos_specular {
        let view = -d.normalize();
        let h = (view + p.light).normalize();
        let c = n.dot(&h);
        if c > cos_spec {
            let w = ((c - cos_spec) / (1.0 - cos_spec) * 3.0).min(1.0);
            i += (255.0 - i) * w;
        }
    }
    i
}

fn hash2(x: i64, y: i64) -> u64 {
    let mut h = (x as u64).wrapping_mul(0x9E37_79B9_7F4A_7C15)
        ^ (y as u64).wrapping_mul(0xC2B2_AE3D_27D4_EB4F);
    h ^= h >> 29;
    h = h.wrapping_mul(0xBF58_476D_1CE4_E5B9);
    h ^ (h >> 32)
}

/// SplitMix64 finalizer, used to derive independent seeds.
pub fn splitmix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Bilinear value noise in `[-1, 1]`.
fn background_texture(x: usize, y: usize, cell: usize) -> f64 {
    let cell = cell.max(1);
    let (gx, gy) = ((x / cell) as i64, (y / cell) as i64);
    let fx = (x % cell) as f64 / cell as f64;
    let fy = (y % cell) as f64 / cell as f64;
    let v = |i: i64, j: i64| (hash2(i, j) & 0xFFFF) as f64 / 32767.5 - 1.0;
    let top = v(gx, gy) * (1.0 - fx) + v(gx + 1, gy) * fx;
    let bottom = v(gx, gy + 1) * (1.0 - fx) + v(gx + 1, gy + 1) * fx;
    top * (1.0 - fy) + bottom * fy
}

/// Approximately standard-normal sample from four uniforms (Irwin–Hall).
#[inline]
fn gaussianish(rng: &mut ChaCha8Rng) -> f64 {
    let s: f64 = (0..4)
        .map(|_| rng.next_u32() as f64 / 4_294_967_296.0)
        .sum();
    (s - 2.0) * 3.0f64.sqrt()
}

/// Renders the scene seen from `camera_pose` at time `t`.
///
/// Deterministic in all arguments; `rng_seed` only drives the sensor noise.
pub fn render(
    scene: &SceneConfig,
    camera_pose: &RigidTransform,
    intr: &CameraIntrinsics,
    t: f64,
    rng_seed: u64,
) -> Frame {
    render_impl(scene, camera_pose, intr, t, rng_seed, false).frame
}

/// Like [`render`], also reporting which object each pixel shows.
pub fn render_labeled(
    scene: &SceneConfig,
    camera_pose: &RigidTransform,
    intr: &CameraIntrinsics,
    t: f64,
    rng_seed: u64,
) -> RenderOutput {
    render_impl(scene, camera_pose, intr, t, rng_seed, true)
}

fn render_impl(
    scene: &SceneConfig,
    camera_pose: &RigidTransform,
    intr: &CameraIntrinsics,
    t: f64,
    rng_seed: u64,
    with_labels: bool,
) -> RenderOutput {
    let prep = prepare(scene, camera_pose, t);
    let (w, h) = (intr.width, intr.height);
    let f = intr.focal_px();
    let [cx, cy] = intr.principal_point;
    let gain = scene.illumination.gain_at(t);
    let sigma = scene.noise_sigma;
    let bg = scene.background;

    let mut rows: Vec<(u8, Label)> = vec![(0, Label::Background); w * h];
    par::for_each_row(&mut rows, w, |y, row| {
        let mut rng = ChaCha8Rng::seed_from_u64(splitmix(rng_seed ^ splitmix(y as u64)));
        for (x, out) in row.iter_mut().enumerate() {
            let d = Vector3::new((x as f64 - cx) / f, (y as f64 - cy) / f, 1.0);
            let mut best = f64::INFINITY;
            let mut value = bg.level + bg.texture * background_texture(x, y, bg.cell);
            let mut label = Label::Background;
            for s in &prep.spheres {
                if let Some(t_hit) = ray_sphere(&d, &s.center, s.radius) {
                    if t_hit < best {
                        best = t_hit;
                        value = shade_sphere(&prep, s, &d, t_hit);
                        label = s.label;
                    }
                }
            }
            for poly in &prep.polygons {
                let denom = poly.normal.dot(&d);
                if denom.abs() < 1e-12 {
                    continue;
                }
                let t_hit = poly.offset / denom;
                if t_hit > 0.0 && t_hit < best && poly.contains(&(d * t_hit)) {
                    best = t_hit;
                    value = poly.intensity;
                    label = poly.label;
                }
            }
            let mut v = value * gain;
            if sigma > 0.0 {
                v += sigma * gaussianish(&mut rng);
            }
            *out = (v.round().clamp(0.0, 255.0) as u8, label);
        }
    });

    let pixels = rows.iter().map(|p| p.0).collect();
    let labels = if with_labels {
        rows.iter().map(|p| p.1).collect()
    } else {
        Vec::new()
    };
    RenderOutput {
        frame: Frame::from_pixels(w, h, pixels),
        labels,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{project_sphere, Sphere};
    use crate::imaging::scene::IlluminationSchedule;

    fn centered_scene() -> (SceneConfig, RigidTransform) {
        let scene = SceneConfig {
            target: Sphere::new(Vector3::new(0.0, 0.0, 0.5), 0.04),
            ..Default::default()
        };
        (scene, RigidTransform::identity())
    }

    #[test]
    fn centered_disk_matches_projection() {
        let (scene, pose) = centered_scene();
        let intr = CameraIntrinsics::default();
        let out = render_labeled(&scene, &pose, &intr, 0.0, 1);
        let e = intr.ellipse_to_pixel(&project_sphere(&scene.target).unwrap());
        // Radius from pixel extent along the row and column through the center.
        let row = (intr.principal_point[1]).floor() as usize;
        let in_row: Vec<usize> = (0..intr.width)
            .filter(|&x| out.labels[row * intr.width + x] == Label::Target)
            .collect();
        let width = (in_row.last().unwrap() - in_row.first().unwrap() + 1) as f64;
        assert!(
            (width / 2.0 - e.a).abs() < 1.0,
            "{} vs {}",
            width / 2.0,
            e.a
        );
        let area = out.labels.iter().filter(|&&l| l == Label::Target).count() as f64;
        let r_area = (area / std::f64::consts::PI).sqrt();
        assert!((r_area - e.a).abs() < 1.0);
    }

    #[test]
    fn same_seed_same_frame() {
        let (mut scene, pose) = centered_scene();
        scene.noise_sigma = 4.0;
        let intr = CameraIntrinsics::default();
        let a = render(&scene, &pose, &intr, 0.1, 42);
        let b = render(&scene, &pose, &intr, 0.1, 42);
        assert_eq!(a, b);
        let c = render(&scene, &pose, &intr, 0.1, 43);
        assert_ne!(a, c);
    }

    #[test]
    fn illumination_gain_halves_intensity() {
        let (mut scene, pose) = centered_scene();
        let intr = CameraIntrinsics::default();
        let full = render(&scene, &pose, &intr, 0.0, 1);
        scene.illumination = IlluminationSchedule::constant(0.5);
        let half = render(&scene, &pose, &intr, 0.0, 1);
        for (a, b) in full.pixels.iter().zip(&half.pixels) {
            assert!((*a as f64 / 2.0 - *b as f64).abs() <= 1.0);
        }
    }

    #[test]
    fn empty_scene_is_background_only() {
        let scene = SceneConfig {
            target: Sphere::new(Vector3::new(0.0, 0.0, -1.0), 0.04),
            ..Default::default()
        };
        let out = render_labeled(
            &scene,
            &RigidTransform::identity(),
            &CameraIntrinsics::default(),
            0.0,
            0,
        );
        assert!(out.labels.iter().all(|&l| l == Label::Background));
        assert!(out.frame.pixels.iter().all(|&p| p < 70));
    }
}
