use ibvs_core::features::{
    depth_estimate, features_from_ellipse, interaction_matrix, sphere_features, FeatureError,
};
use ibvs_core::geometry::{
    initial_view_pose, integrate_twist, project_sphere, twist_camera_to_robot, CameraIntrinsics,
    RigidTransform, Sphere, Twist,
};
use ibvs_core::imaging::{
    ellipse_from_moments, region_moments_oracle, render_labeled, Label, SceneConfig,
};
use ibvs_core::servo::{compute_camera_twist, AdaptiveGain, ServoConfig};
use nalgebra::{Vector2, Vector3, Vector5};
use proptest::prelude::*;

fn target_mask(
    scene: &SceneConfig,
    pose: &RigidTransform,
    intr: &CameraIntrinsics,
) -> ibvs_core::imaging::BinaryMask {
    let out = render_labeled(scene, pose, intr, 0.0, 0);
    let mut m = ibvs_core::imaging::BinaryMask::new(intr.width, intr.height);
    for (b, l) in m.bits.iter_mut().zip(&out.labels) {
        *b = *l == Label::Target;
    }
    m
}

#[test]
fn projection_matches_rendered_mask() {
    let intr = CameraIntrinsics::default();
    let scene = SceneConfig::default();
    // Camera looking along +y at assorted offsets so the fruit lands all over the image.
    for (dx, dz, dist) in [
        (0.0, 0.0, 0.3),
        (0.05, -0.03, 0.4),
        (-0.08, 0.05, 0.5),
        (0.08, 0.06, 0.6),
        (-0.04, -0.05, 0.35),
    ] {
        let base = initial_view_pose(&scene.target, &Vector3::new(0.0, -0.04, 0.0), dist).unwrap();
        let pose = RigidTransform::new(base.rotation, base.translation + Vector3::new(dx, 0.0, dz));
        let truth =
            intr.ellipse_to_pixel(&project_sphere(&scene.target.expressed_in(&pose)).unwrap());
        let fit = ellipse_from_moments(
            &region_moments_oracle(&target_mask(&scene, &pose, &intr)).unwrap(),
        );
        assert!(
            (fit.center - truth.center).norm() < 0.5,
            "{fit:?} vs {truth:?}"
        );
        assert!(((fit.a - truth.a) / truth.a).abs() < 0.01);
        assert!(((fit.b - truth.b) / truth.b).abs() < 0.01);
    }
}

#[test]
fn depth_estimate_within_two_percent_from_rendered_diameter() {
    let intr = CameraIntrinsics::default();
    let scene = SceneConfig::default();
    let r = scene.target.radius;
    for standoff in [0.25, 0.3, 0.4, 0.6, 0.8, 1.0] {
        let pose =
            initial_view_pose(&scene.target, &Vector3::new(0.0, -r, 0.0), standoff - r).unwrap();
        let fit = ellipse_from_moments(
            &region_moments_oracle(&target_mask(&scene, &pose, &intr)).unwrap(),
        );
        let z = depth_estimate(&intr, 2000.0 * r, fit.mean_diameter()).unwrap();
        assert!(
            ((z - standoff) / standoff).abs() < 0.02,
            "standoff {standoff}: estimate {z}"
        );
    }
}

#[test]
fn axial_motion_creates_no_orientation() {
    let l = interaction_matrix(&Sphere::new(Vector3::new(0.0, 0.0, 0.5), 0.04)).unwrap();
    assert!(l.rows[(3, 2)].abs() < 1e-6);
    assert!(l.rows[(0, 2)].abs() < 1e-6 && l.rows[(1, 2)].abs() < 1e-6);
}

#[test]
fn centered_view_structure_and_damped_solve() {
    let l = interaction_matrix(&Sphere::new(Vector3::new(0.0, 0.0, 0.5), 0.04)).unwrap();
    let sv = l.reduced.singular_values();
    let mut sorted: Vec<f64> = sv.iter().copied().collect();
    sorted.sort_by(|a, b| b.total_cmp(a));
    // Centered, the mu11 row vanishes and the mu20/mu02 rows coincide:
    // only three independent directions remain.
    assert!(sorted[2] > 1e-3 && sorted[3] < 1e-6, "{sorted:?}");
    assert!(l.reduced.row(3).norm() < 1e-6);
    assert!((l.reduced.row(2) - l.reduced.row(4)).norm() < 1e-6);
    // Damping keeps the solve finite and bounded all the same.
    let e = FeatureError::from_delta(Vector5::new(0.01, -0.02, 0.003, 0.001, 0.003));
    let v =
        compute_camera_twist(&e, &l, &AdaptiveGain::default(), &ServoConfig::default()).unwrap();
    assert!(v.is_finite() && v.angular.z == 0.0);
}

#[test]
fn rotated_camera_sees_rotated_moments() {
    // Rolling the camera about its axis rotates the ellipse, leaving the
    // moment invariants (trace, determinant) unchanged.
    let s = Sphere::new(Vector3::new(0.1, 0.05, 0.5), 0.04);
    let f0 = sphere_features(&s).unwrap();
    let roll = RigidTransform::from_rpy(0.0, 0.0, 0.4, Vector3::zeros());
    let f1 = sphere_features(&s.expressed_in(&roll)).unwrap();
    assert!(((f0.mu20 + f0.mu02) - (f1.mu20 + f1.mu02)).abs() < 1e-12);
    let det = |f: &ibvs_core::FeatureVector| f.mu20 * f.mu02 - f.mu11 * f.mu11;
    assert!((det(&f0) - det(&f1)).abs() < 1e-14);
}

#[test]
fn pixel_normalized_roundtrip() {
    let intr = CameraIntrinsics::default();
    for p in [
        Vector2::new(0.0, 0.0),
        Vector2::new(639.0, 479.0),
        Vector2::new(123.25, 301.5),
    ] {
        assert!((intr.normalized_to_pixel(intr.pixel_to_normalized(p)) - p).norm() < 1e-9);
    }
    let e = project_sphere(&Sphere::new(Vector3::new(0.02, -0.01, 0.4), 0.04)).unwrap();
    let back = intr.ellipse_to_normalized(&intr.ellipse_to_pixel(&e));
    let (f, g) = (features_from_ellipse(&e), features_from_ellipse(&back));
    assert!((f.to_vector() - g.to_vector()).norm() < 1e-12);
}

fn arb_twist() -> impl Strategy<Value = Twist> {
    prop::array::uniform6(-1.0f64..1.0).prop_map(|v| {
        Twist::new(
            Vector3::new(v[0], v[1], v[2]),
            Vector3::new(v[3], v[4], v[5]),
        )
    })
}

proptest! {
    #[test]
    fn twist_transform_is_linear(u in arb_twist(), w in arb_twist(), a in -3.0f64..3.0, b in -3.0f64..3.0,
                                 rpy in prop::array::uniform3(-3.0f64..3.0), t in prop::array::uniform3(-0.5f64..0.5)) {
        let he = RigidTransform::from_rpy(rpy[0], rpy[1], rpy[2], Vector3::from(t));
        let combo = Twist::from_vector(&(u.to_vector() * a + w.to_vector() * b));
        let lhs = twist_camera_to_robot(&combo, &he).to_vector();
        let rhs = twist_camera_to_robot(&u, &he).to_vector() * a + twist_camera_to_robot(&w, &he).to_vector() * b;
        prop_assert!((lhs - rhs).norm() < 1e-12);
    }

    #[test]
    fn view_pose_centers_any_sphere(cx in -1.0f64..1.0, cy in -1.0f64..1.0, cz in -1.0f64..1.0,
                                    r in 0.02f64..0.08, theta in 0.0f64..std::f64::consts::TAU, phi in -1.5f64..1.5, standoff in 0.05f64..1.0) {
        let s = Sphere::new(Vector3::new(cx, cy, cz), r);
        let n = Vector3::new(phi.cos() * theta.cos(), phi.cos() * theta.sin(), phi.sin());
        let pose = initial_view_pose(&s, &(s.center + n * r), standoff).unwrap();
        let e = project_sphere(&s.expressed_in(&pose)).unwrap();
        prop_assert!(e.center.norm() < 1e-9);
        prop_assert!((e.a - e.b).abs() / e.a < 1e-9);
    }
}

#[test]
fn long_integration_stays_orthonormal() {
    let v = Twist::new(Vector3::new(0.1, -0.05, 0.2), Vector3::new(0.3, -0.7, 0.5));
    let mut pose = RigidTransform::identity();
    for _ in 0..100_000 {
        pose = integrate_twist(&pose, &v, 1.0 / 30.0);
    }
    let drift = (pose.rotation.transpose() * pose.rotation - nalgebra::Matrix3::identity()).norm();
    assert!(drift < 1e-6, "{drift}");
    assert!((pose.rotation.determinant() - 1.0).abs() < 1e-6);
}
