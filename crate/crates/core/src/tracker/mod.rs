//! Detection and tracking of the target fruit.
//!
//! Until a target is selected, every frame runs the adaptive Hough search and
//! feeds its candidates into the [`DecisionMatrix`]. Once the accumulated
//! belief at a candidate exceeds the threshold, the tracker locks on and from
//! then on only searches a circular ROI: segment, trace boundaries, fit an
//! ellipse robustly and emit features. A failed search grows the ROI; once
//! the ROI spans the whole image the belief is reset and detection restarts.

pub mod boundary;
pub mod decision;
pub mod hough;
pub mod ransac;

pub use boundary::{extract_boundary, Boundary, Roi};
pub use decision::{
    calibrated_threshold, candidate_weights, confidence_score, DecisionMatrix, Ideal,
};
pub use hough::{adaptive_hough, adaptive_hough_with, CircleCandidate, HoughConfig};
pub use ransac::{angular_coverage, fit_ellipse_direct, ransac_ellipse, RansacConfig, RansacFit};

use crate::features::{features_from_ellipse, FeatureVector};
use crate::geometry::{CameraIntrinsics, EllipseParams};
use crate::imaging::Frame;
use nalgebra::Vector2;
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Clone, Copy, PartialEq, Error)]
pub enum TrackError {
    #[error("no boundary with enough points inside the ROI")]
    NoBoundary,
    #[error("{0} boundary points, need at least 5")]
    TooFewPoints(usize),
    #[error("inlier ratio {ratio:.3} below the consensus minimum")]
    NoConsensus { ratio: f64 },
    #[error("inliers cover only {coverage:.3} of the fitted outline")]
    PartialOutline { coverage: f64 },
    #[error("fitted ellipse is implausible relative to the previous lock")]
    Implausible,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TrackerPhase {
    Initializing,
    Tracking,
    Lost,
}

impl TrackerPhase {
    pub fn as_str(&self) -> &'static str {
        match self {
            TrackerPhase::Initializing => "initializing",
            TrackerPhase::Tracking => "tracking",
            TrackerPhase::Lost => "lost",
        }
    }
}

/// Locked target projection `(x_s, y_s, r_s)`, pixels.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SelectedTarget {
    pub center: Vector2<f64>,
    pub radius: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrackerState {
    pub phase: TrackerPhase,
    pub roi: Roi,
    pub selected_target: Option<SelectedTarget>,
    pub last_feature: Option<FeatureVector>,
}

impl TrackerState {
    pub fn new(intr: &CameraIntrinsics) -> Self {
        Self {
            phase: TrackerPhase::Initializing,
            roi: Roi::full_image(intr.width, intr.height),
            selected_target: None,
            last_feature: None,
        }
    }

    pub fn is_consistent(&self, intr: &CameraIntrinsics) -> bool {
        let diag = ((intr.width * intr.width + intr.height * intr.height) as f64).sqrt();
        self.roi.radius <= diag
            && (self.selected_target.is_some() == (self.phase == TrackerPhase::Tracking))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrackerConfig {
    pub hough: HoughConfig,
    /// Fixed selection threshold; `None` uses the calibrated rule.
    pub threshold: Option<f64>,
    /// Candidate count the calibrated threshold assumes.
    pub nominal_candidates: usize,
    /// ROI radius as a multiple of the locked radius, plus a margin in px.
    pub roi_scale: f64,
    pub roi_margin: f64,
    pub roi_growth: f64,
    /// Minimum fraction of the fitted outline that inliers must cover.
    pub min_outline_coverage: f64,
    pub coverage_bins: usize,
    /// Added to the fitted semi-axes: traced boundary pixels sit half a
    /// pixel inside the true edge.
    pub boundary_offset: f64,
    /// Smallest accepted minor/major axis ratio; sphere outlines are nearly round.
    pub min_axis_ratio: f64,
    /// Largest accepted radius ratio between consecutive locks.
    pub max_radius_ratio: f64,
    /// Hough radius range as multiples of the expected radius.
    pub radius_span: [f64; 2],
}

impl Default for TrackerConfig {
    fn default() -> Self {
        Self {
            hough: HoughConfig::default(),
            threshold: None,
            nominal_candidates: 1,
            roi_scale: 1.3,
            roi_margin: 8.0,
            roi_growth: 1.5,
            min_outline_coverage: 0.5,
            coverage_bins: 36,
            boundary_offset: 0.5,
            min_axis_ratio: 0.6,
            max_radius_ratio: 1.6,
            radius_span: [0.5, 2.0],
        }
    }
}

impl TrackerConfig {
    pub fn selection_threshold(&self) -> f64 {
        self.threshold
            .unwrap_or_else(|| calibrated_threshold(self.nominal_candidates))
    }

    pub fn radius_range(&self, expected_radius: f64, intr: &CameraIntrinsics) -> (f64, f64) {
        let max = (intr.width.min(intr.height) / 2) as f64;
        let lo = (self.radius_span[0] * expected_radius).clamp(4.0, max);
        let hi = (self.radius_span[1] * expected_radius).clamp(lo, max);
        (lo, hi)
    }

    pub fn validate(&self) -> Result<(), String> {
        if self.roi_growth <= 1.0 {
            return Err("roi growth must exceed 1".into());
        }
        if !(self.min_outline_coverage > 0.0 && self.min_outline_coverage <= 1.0) {
            return Err("outline coverage must be in (0, 1]".into());
        }
        if self.max_radius_ratio <= 1.0 || self.roi_scale <= 1.0 {
            return Err("radius ratio and roi scale must exceed 1".into());
        }
        if !(self.radius_span[0] > 0.0 && self.radius_span[1] >= self.radius_span[0]) {
            return Err("bad hough radius span".into());
        }
        Ok(())
    }
}

/// A successful ROI search.
#[derive(Debug, Clone, PartialEq)]
pub struct Observation {
    pub feature: FeatureVector,
    pub ellipse_px: EllipseParams,
    pub inlier_ratio: f64,
    pub coverage: f64,
}

fn roi_for(target: &SelectedTarget, cfg: &TrackerConfig, intr: &CameraIntrinsics) -> Roi {
    let diag = ((intr.width * intr.width + intr.height * intr.height) as f64).sqrt();
    Roi::new(
        target.center,
        (cfg.roi_scale * target.radius + cfg.roi_margin).min(diag),
    )
}

/// Searches the ROI for the target outline.
pub fn locate(
    state: &TrackerState,
    frame: &Frame,
    cfg: &TrackerConfig,
    ransac: &RansacConfig,
) -> Result<(EllipseParams, f64, f64), TrackError> {
    let boundaries = extract_boundary(frame, &state.roi)?;
    // Edges created by the ROI or image border are not target outline.
    let inner = state.roi.radius - 1.5;
    let (w, h) = (frame.width as f64 - 1.0, frame.height as f64 - 1.0);
    let points: Vec<Vector2<f64>> = boundaries[0]
        .to_points()
        .into_iter()
        .filter(|p| {
            (p - state.roi.center_vec()).norm() < inner
                && p.x > 0.0
                && p.y > 0.0
                && p.x < w
                && p.y < h
        })
        .collect();
    let fit = ransac_ellipse(&points, ransac)?;
    let coverage = angular_coverage(&fit.ellipse, &points, &fit.inliers, cfg.coverage_bins);
    if coverage < cfg.min_outline_coverage {
        return Err(TrackError::PartialOutline { coverage });
    }
    let e = fit.ellipse;
    let e = EllipseParams::new(
        e.center,
        e.a + cfg.boundary_offset,
        e.b + cfg.boundary_offset,
        e.alpha,
    );
    let radius = 0.5 * e.mean_diameter();
    let plausible = state.roi.contains(e.center)
        && e.b / e.a >= cfg.min_axis_ratio
        && state.selected_target.as_ref().is_none_or(|prev| {
            let ratio = radius / prev.radius;
            ratio < cfg.max_radius_ratio && ratio > 1.0 / cfg.max_radius_ratio
        });
    if !plausible {
        return Err(TrackError::Implausible);
    }
    Ok((e, fit.inlier_ratio, coverage))
}

/// One tracking iteration on a locked target.
///
/// On success the belief and ROI follow the new lock and features are
/// emitted in normalized coordinates. On failure the ROI grows; once it
/// already spanned the image, the belief is reset and the phase becomes
/// [`TrackerPhase::Lost`].
pub fn track_step(
    state: &TrackerState,
    frame: &Frame,
    d: &mut DecisionMatrix,
    intr: &CameraIntrinsics,
    cfg: &TrackerConfig,
    ransac: &RansacConfig,
) -> (TrackerState, Result<Observation, TrackError>) {
    match locate(state, frame, cfg, ransac) {
        Ok((e, inlier_ratio, coverage)) => {
            let target = SelectedTarget {
                center: e.center,
                radius: 0.5 * e.mean_diameter(),
            };
            d.add_kernel(target.center, target.radius, 1.0);
            let feature = features_from_ellipse(&intr.ellipse_to_normalized(&e));
            let next = TrackerState {
                phase: TrackerPhase::Tracking,
                roi: roi_for(&target, cfg, intr),
                selected_target: Some(target),
                last_feature: Some(feature),
            };
            let obs = Observation {
                feature,
                ellipse_px: e,
                inlier_ratio,
                coverage,
            };
            (next, Ok(obs))
        }
        Err(err) => {
            let mut next = state.clone();
            if state.roi.covers_image(intr.width, intr.height) {
                d.reset();
                next = TrackerState {
                    phase: TrackerPhase::Lost,
                    roi: Roi::full_image(intr.width, intr.height),
                    selected_target: None,
                    last_feature: state.last_feature,
                };
            } else {
                let full = Roi::full_image(intr.width, intr.height).radius;
                next.roi.radius = (state.roi.radius * cfg.roi_growth).min(full);
                if next.roi.covers_image(intr.width, intr.height) {
                    next.roi = Roi::full_image(intr.width, intr.height);
                }
            }
            (next, Err(err))
        }
    }
}

/// One detection cycle: Hough search, belief update and selection attempt.
pub fn initialization_step(
    state: &TrackerState,
    frame: &Frame,
    d: &mut DecisionMatrix,
    intr: &CameraIntrinsics,
    cfg: &TrackerConfig,
) -> (TrackerState, Vec<CircleCandidate>) {
    let candidates =
        adaptive_hough_with(frame, cfg.radius_range(d.expected_radius, intr), &cfg.hough);
    let ideal = d.ideal();
    d.update(&candidates, &ideal);
    let mut next = state.clone();
    if let Some(c) = d.try_select(&candidates) {
        let target = SelectedTarget {
            center: c.center,
            radius: c.radius,
        };
        d.add_kernel(target.center, target.radius, 1.0);
        next.phase = TrackerPhase::Tracking;
        next.roi = roi_for(&target, cfg, intr);
        next.selected_target = Some(target);
    }
    (next, candidates)
}

/// What one frame did.
#[derive(Debug, Clone, PartialEq)]
pub struct StepReport {
    pub phase: TrackerPhase,
    pub candidates: Vec<CircleCandidate>,
    pub observation: Option<Observation>,
    pub failure: Option<TrackError>,
}

/// A single tracking session owning its state and belief.
#[derive(Debug, Clone)]
pub struct Tracker {
    pub state: TrackerState,
    pub decision: DecisionMatrix,
    pub cfg: TrackerConfig,
    pub ransac: RansacConfig,
    intr: CameraIntrinsics,
    frames: u64,
}

impl Tracker {
    pub fn new(
        intr: CameraIntrinsics,
        cfg: TrackerConfig,
        ransac: RansacConfig,
        expected_radius: f64,
    ) -> Self {
        let decision = DecisionMatrix::new(&intr, expected_radius, cfg.selection_threshold());
        Self {
            state: TrackerState::new(&intr),
            decision,
            cfg,
            ransac,
            intr,
            frames: 0,
        }
    }

    pub fn intrinsics(&self) -> &CameraIntrinsics {
        &self.intr
    }

    /// Processes one frame. A frame that completes selection is also
    /// tracked, so features are available as early as possible.
    pub fn step(&mut self, frame: &Frame) -> StepReport {
        let ransac = RansacConfig {
            rng_seed: self
                .ransac
                .rng_seed
                .wrapping_add(self.frames.wrapping_mul(0x9E37_79B9_7F4A_7C15)),
            ..self.ransac
        };
        self.frames += 1;
        let mut candidates = Vec::new();
        if self.state.phase != TrackerPhase::Tracking {
            let (next, c) = initialization_step(
                &self.state,
                frame,
                &mut self.decision,
                &self.intr,
                &self.cfg,
            );
            self.state = next;
            candidates = c;
            if self.state.phase != TrackerPhase::Tracking {
                return StepReport {
                    phase: self.state.phase,
                    candidates,
                    observation: None,
                    failure: None,
                };
            }
        }
        let (next, result) = track_step(
            &self.state,
            frame,
            &mut self.decision,
            &self.intr,
            &self.cfg,
            &ransac,
        );
        self.state = next;
        let (observation, failure) = match result {
            Ok(o) => (Some(o), None),
            Err(e) => (None, Some(e)),
        };
        StepReport {
            phase: self.state.phase,
            candidates,
            observation,
            failure,
        }
    }
}
