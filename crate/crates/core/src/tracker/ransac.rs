//! Robust ellipse fitting to boundary points.

use super::TrackError;
use crate::geometry::{Conic, EllipseParams};
use nalgebra::{Matrix3, Matrix6, Vector2, Vector3, Vector6};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RansacConfig {
    pub iterations: usize,
    /// Inlier band on the gradient-normalized algebraic distance, pixels.
    pub inlier_threshold: f64,
    pub min_inlier_ratio: f64,
    pub rng_seed: u64,
}

impl Default for RansacConfig {
    fn default() -> Self {
        Self {
            iterations: 200,
            inlier_threshold: 1.5,
            min_inlier_ratio: 0.5,
            rng_seed: 0,
        }
    }
}

impl RansacConfig {
    pub fn is_valid(&self) -> bool {
        self.iterations > 0
            && self.inlier_threshold > 0.0
            && self.min_inlier_ratio > 0.0
            && self.min_inlier_ratio <= 1.0
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RansacFit {
    pub ellipse: EllipseParams,
    pub inliers: Vec<bool>,
    pub inlier_ratio: f64,
}

/// Similarity that maps the points to zero mean and unit RMS radius / √2.
#[derive(Debug, Clone, Copy)]
struct Normalizer {
    mean: Vector2<f64>,
    scale: f64,
}

impl Normalizer {
    fn of(points: &[Vector2<f64>]) -> Self {
        let n = points.len() as f64;
        let mean = points.iter().sum::<Vector2<f64>>() / n;
        let rms = (points
            .iter()
            .map(|p| (p - mean).norm_squared())
            .sum::<f64>()
            / n)
            .sqrt();
        let scale = if rms > 0.0 {
            std::f64::consts::SQRT_2 / rms
        } else {
            1.0
        };
        Self { mean, scale }
    }

    fn apply(&self, p: &Vector2<f64>) -> Vector2<f64> {
        (p - self.mean) * self.scale
    }

    fn unapply(&self, e: &EllipseParams) -> EllipseParams {
        EllipseParams {
            center: e.center / self.scale + self.mean,
            a: e.a / self.scale,
            b: e.b / self.scale,
            alpha: e.alpha,
        }
    }
}

fn design_row(p: &Vector2<f64>) -> Vector6<f64> {
    Vector6::new(p.x * p.x, p.x * p.y, p.y * p.y, p.x, p.y, 1.0)
}

/// Conic through five points (null vector of the 5×6 design matrix).
pub fn conic_through_five(points: &[Vector2<f64>; 5]) -> Option<Conic> {
    let mut m = Matrix6::zeros();
    for (i, p) in points.iter().enumerate() {
        m.set_row(i, &design_row(p).transpose());
    }
    let svd = m.svd(false, true);
    let vt = svd.v_t?;
    let k = svd.singular_values.imin();
    let v = vt.row(k);
    let conic = Conic::new([v[0], v[1], v[2], v[3], v[4], v[5]]);
    conic.coeffs.iter().all(|c| c.is_finite()).then_some(conic)
}

/// Direct least-squares ellipse fit with the `4ac − b² = 1` constraint,
/// using the numerically stable block formulation.
pub fn fit_ellipse_direct(points: &[Vector2<f64>]) -> Option<EllipseParams> {
    if points.len() < 5 {
        return None;
    }
    let norm = Normalizer::of(points);
    let (mut s1, mut s2, mut s3) = (Matrix3::zeros(), Matrix3::zeros(), Matrix3::zeros());
    for p in points {
        let q = norm.apply(p);
        let d1 = Vector3::new(q.x * q.x, q.x * q.y, q.y * q.y);
        let d2 = Vector3::new(q.x, q.y, 1.0);
        s1 += d1 * d1.transpose();
        s2 += d1 * d2.transpose();
        s3 += d2 * d2.transpose();
    }
    let t = -(s3.try_inverse()? * s2.transpose());
    let m = s1 + s2 * t;
    let reduced = Matrix3::from_rows(&[m.row(2) / 2.0, -m.row(1), m.row(0) / 2.0]);
    let mut best: Option<Vector3<f64>> = None;
    for ev in reduced.complex_eigenvalues().iter() {
        if ev.im.abs() > 1e-9 * (1.0 + ev.re.abs()) {
            continue;
        }
        let shifted = reduced - Matrix3::identity() * ev.re;
        let svd = shifted.svd(false, true);
        let Some(vt) = svd.v_t else { continue };
        let v: Vector3<f64> = vt.row(svd.singular_values.imin()).transpose();
        if 4.0 * v[0] * v[2] - v[1] * v[1] > 0.0 {
            best = Some(v);
            break;
        }
    }
    let a1 = best?;
    let a2 = t * a1;
    let conic = Conic::new([a1[0], a1[1], a1[2], a2[0], a2[1], a2[2]]);
    conic.to_ellipse().ok().map(|e| norm.unapply(&e))
}

/// Fraction of `bins` angular sectors (about the ellipse center, measured
/// in the ellipse's own parameterization) holding at least one inlier.
pub fn angular_coverage(
    e: &EllipseParams,
    points: &[Vector2<f64>],
    inliers: &[bool],
    bins: usize,
) -> f64 {
    let bins = bins.max(1);
    let (s, c) = e.alpha.sin_cos();
    let mut hit = vec![false; bins];
    for (p, _) in points.iter().zip(inliers).filter(|(_, &i)| i) {
        let d = p - e.center;
        let u = (d.x * c + d.y * s) / e.a;
        let v = (-d.x * s + d.y * c) / e.b;
        let t = v.atan2(u) + std::f64::consts::PI;
        hit[((t / (2.0 * std::f64::consts::PI)) * bins as f64) as usize % bins] = true;
    }
    hit.iter().filter(|&&h| h).count() as f64 / bins as f64
}

fn inlier_mask(conic: &Conic, points: &[Vector2<f64>], threshold: f64) -> Vec<bool> {
    points
        .iter()
        .map(|p| conic.sampson_distance(p.x, p.y) < threshold)
        .collect()
}

/// Consensus fit: minimal-sample conic hypotheses scored by inlier count,
/// then a direct least-squares refit on the best consensus set.
pub fn ransac_ellipse(
    points: &[Vector2<f64>],
    cfg: &RansacConfig,
) -> Result<RansacFit, TrackError> {
    if points.len() < 5 {
        return Err(TrackError::TooFewPoints(points.len()));
    }
    let norm = Normalizer::of(points);
    let normalized: Vec<Vector2<f64>> = points.iter().map(|p| norm.apply(p)).collect();
    let (lo, hi) = points.iter().fold(
        (
            Vector2::repeat(f64::INFINITY),
            Vector2::repeat(f64::NEG_INFINITY),
        ),
        |(lo, hi), p| (lo.inf(p), hi.sup(p)),
    );
    let extent = (hi - lo).max().max(1.0);
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.rng_seed);
    let mut best: Option<(usize, Vec<bool>, EllipseParams)> = None;
    for _ in 0..cfg.iterations {
        let idx = rand::seq::index::sample(&mut rng, points.len(), 5);
        let sample: [Vector2<f64>; 5] = std::array::from_fn(|k| normalized[idx.index(k)]);
        let Some(conic) = conic_through_five(&sample) else {
            continue;
        };
        if !conic.is_ellipse() {
            continue;
        }
        let Ok(e) = conic.to_ellipse() else { continue };
        let e = norm.unapply(&e);
        if !(e.b >= 2.0 && e.a <= 4.0 * extent) {
            continue;
        }
        let mask = inlier_mask(&Conic::from_ellipse(&e), points, cfg.inlier_threshold);
        let count = mask.iter().filter(|&&b| b).count();
        if best.as_ref().is_none_or(|b| count > b.0) {
            best = Some((count, mask, e));
        }
    }
    let Some((_, mask, hypothesis)) = best else {
        return Err(TrackError::NoConsensus { ratio: 0.0 });
    };
    let consensus: Vec<Vector2<f64>> = points
        .iter()
        .zip(&mask)
        .filter(|(_, &m)| m)
        .map(|(p, _)| *p)
        .collect();
    let ellipse = fit_ellipse_direct(&consensus).unwrap_or(hypothesis);
    let mut inliers = inlier_mask(&Conic::from_ellipse(&ellipse), points, cfg.inlier_threshold);
    let (mut ellipse, mut count) = (ellipse, inliers.iter().filter(|&&b| b).count());
    // The refit should not lose support; fall back to the hypothesis if it did.
    if count < consensus.len() {
        ellipse = hypothesis;
        inliers = mask;
        count = consensus.len();
    }
    let inlier_ratio = count as f64 / points.len() as f64;
    if inlier_ratio < cfg.min_inlier_ratio {
        return Err(TrackError::NoConsensus {
            ratio: inlier_ratio,
        });
    }
    Ok(RansacFit {
        ellipse,
        inliers,
        inlier_ratio,
    })
}
