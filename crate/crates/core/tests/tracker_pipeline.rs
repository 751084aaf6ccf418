use ibvs_core::features::sphere_features;
use ibvs_core::geometry::{initial_view_pose, project_sphere};
use ibvs_core::imaging::{render, Occluder};
use ibvs_core::tracker::{RansacConfig, StepReport, TrackError, Tracker, TrackerConfig};
use ibvs_core::{
    CameraIntrinsics, EllipseParams, Frame, RigidTransform, SceneConfig, TrackerPhase,
};
use nalgebra::Vector3;

fn view(dist: f64, shift: [f64; 2]) -> (SceneConfig, RigidTransform) {
    let scene = SceneConfig::default();
    let r = scene.target.radius;
    let base = initial_view_pose(&scene.target, &Vector3::new(0.0, -r, 0.0), dist - r).unwrap();
    let pose = RigidTransform::new(
        base.rotation,
        base.translation + Vector3::new(shift[0], 0.0, shift[1]),
    );
    (scene, pose)
}

fn truth(scene: &SceneConfig, pose: &RigidTransform, intr: &CameraIntrinsics) -> EllipseParams {
    intr.ellipse_to_pixel(&project_sphere(&scene.target.expressed_in(pose)).unwrap())
}

fn tracker_for(
    scene: &SceneConfig,
    pose: &RigidTransform,
    intr: &CameraIntrinsics,
    seed: u64,
) -> Tracker {
    let ransac = RansacConfig {
        rng_seed: seed,
        ..RansacConfig::default()
    };
    Tracker::new(
        *intr,
        TrackerConfig::default(),
        ransac,
        truth(scene, pose, intr).mean_diameter() / 2.0,
    )
}

/// Steps until the tracker locks, at most ten frames.
fn lock(t: &mut Tracker, frame: &Frame) {
    for _ in 0..10 {
        if t.step(frame).observation.is_some() {
            return;
        }
    }
    panic!("never locked");
}

#[test]
fn emitted_features_match_ground_truth() {
    let intr = CameraIntrinsics::default();
    for (dist, shift) in [
        (0.3, [0.0, 0.0]),
        (0.45, [0.04, -0.03]),
        (0.6, [-0.06, 0.05]),
        (0.2, [0.01, 0.02]),
    ] {
        let (scene, pose) = view(dist, shift);
        let gt = sphere_features(&scene.target.expressed_in(&pose)).unwrap();
        let gt_px = truth(&scene, &pose, &intr).center;
        for sigma in [0.0, 2.0, 4.0] {
            let noisy = SceneConfig {
                noise_sigma: sigma,
                ..scene.clone()
            };
            let mut t = tracker_for(&noisy, &pose, &intr, 7);
            let mut emitted = 0;
            for i in 0..12u64 {
                let frame = render(&noisy, &pose, &intr, 0.0, i);
                let Some(o) = t.step(&frame).observation else {
                    continue;
                };
                emitted += 1;
                let f = o.feature;
                assert!(
                    (o.ellipse_px.center - gt_px).norm() < 1.5,
                    "dist {dist} sigma {sigma}: {:?}",
                    o.ellipse_px
                );
                let scale = gt.mu20.max(gt.mu02);
                for (got, want) in [(f.mu20, gt.mu20), (f.mu02, gt.mu02), (f.mu11, gt.mu11)] {
                    assert!(
                        (got - want).abs() < 0.02 * scale,
                        "dist {dist} sigma {sigma}: {got} vs {want}"
                    );
                }
            }
            assert!(emitted >= 8, "dist {dist} sigma {sigma}: {emitted}");
        }
    }
}

fn occluded(scene: &SceneConfig, pose: &RigidTransform, q: f64, angle: f64) -> SceneConfig {
    let mut s = scene.clone();
    s.occluders.push(Occluder::covering_boundary_fraction(
        &s.target, pose, q, angle, 0.005,
    ));
    s
}

#[test]
fn moderate_occlusion_keeps_emitting() {
    let intr = CameraIntrinsics::default();
    let (scene, pose) = view(0.3, [0.0, 0.0]);
    for q in [0.2, 0.3, 0.4] {
        for angle in [0.0, 1.3, 2.9, 4.4] {
            let mut t = tracker_for(&scene, &pose, &intr, 3);
            lock(&mut t, &render(&scene, &pose, &intr, 0.0, 0));
            let hidden = occluded(&scene, &pose, q, angle);
            for i in 0..15u64 {
                let r = t.step(&render(&hidden, &pose, &intr, 0.0, i));
                assert!(
                    r.observation.is_some(),
                    "q {q} angle {angle} frame {i}: {:?}",
                    r.failure
                );
            }
        }
    }
}

#[test]
fn heavy_occlusion_fails_and_grows_roi() {
    let intr = CameraIntrinsics::default();
    let (scene, pose) = view(0.3, [0.0, 0.0]);
    for q in [0.55, 0.6, 0.7] {
        for angle in [0.0, 2.0, 4.0] {
            let mut t = tracker_for(&scene, &pose, &intr, 5);
            lock(&mut t, &render(&scene, &pose, &intr, 0.0, 0));
            let roi_before = t.state.roi.radius;
            let hidden = occluded(&scene, &pose, q, angle);
            let mut failed_at = None;
            for i in 0..10u64 {
                let r = t.step(&render(&hidden, &pose, &intr, 0.0, i));
                if let Some(e) = &r.failure {
                    assert!(
                        matches!(
                            e,
                            TrackError::NoConsensus { .. } | TrackError::PartialOutline { .. }
                        ),
                        "q {q}: {e:?}"
                    );
                    failed_at = Some(i);
                    break;
                }
            }
            assert!(failed_at.is_some(), "q {q} angle {angle}: kept tracking");
            let grown = t.state.roi.radius > roi_before || t.state.phase == TrackerPhase::Lost;
            assert!(
                grown,
                "q {q} angle {angle}: roi {} -> {}",
                roi_before, t.state.roi.radius
            );
        }
    }
}

fn replay(frames: &[Frame], seed: u64) -> Vec<StepReport> {
    let intr = CameraIntrinsics::default();
    let (scene, pose) = view(0.35, [0.02, 0.0]);
    let mut t = tracker_for(&scene, &pose, &intr, seed);
    frames.iter().map(|f| t.step(f)).collect()
}

#[test]
fn tracker_is_deterministic() {
    let intr = CameraIntrinsics::default();
    let (scene, pose) = view(0.35, [0.02, 0.0]);
    let noisy = SceneConfig {
        noise_sigma: 3.0,
        ..occluded(&scene, &pose, 0.3, 1.0)
    };
    let frames: Vec<Frame> = (0..10)
        .map(|i| render(&noisy, &pose, &intr, 0.0, i))
        .collect();
    let (a, b) = (replay(&frames, 11), replay(&frames, 11));
    for (x, y) in a.iter().zip(&b) {
        assert_eq!(x.phase, y.phase);
        assert_eq!(x.observation, y.observation);
        assert_eq!(x.failure, y.failure);
    }
    assert!(a.iter().any(|r| r.observation.is_some()));
}
