//! Adaptive gradient Hough search for bright circular blobs.
//!
//! Edges come from a Sobel operator. Each edge pixel votes for centers along
//! its gradient direction over the whole radius range; accumulator peaks are
//! then verified by the angular support of edges at a consistent radius. The
//! edge threshold is swept over a fixed coarse-to-fine schedule and the
//! candidates of all accepting levels are merged.

use crate::imaging::Frame;
use crate::par;
use nalgebra::Vector2;
use serde::{Deserialize, Serialize};

/// A possible target projection in pixel coordinates.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CircleCandidate {
    pub center: Vector2<f64>,
    pub radius: f64,
    /// Fraction of the circle's angular bins supported by edges, in `[0, 1]`.
    pub accumulator_score: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct HoughConfig {
    /// Edge thresholds as fractions of the strongest gradient, coarse to fine.
    pub levels: [f64; 4],
    /// Absolute Sobel magnitude floor.
    pub min_gradient: f64,
    /// Minimum angular support for a peak to become a candidate.
    pub min_coverage: f64,
    pub max_candidates: usize,
    /// Accumulator peaks examined per level.
    pub peaks_per_level: usize,
    pub angular_bins: usize,
}

impl Default for HoughConfig {
    fn default() -> Self {
        Self {
            levels: [0.5, 0.3, 0.18, 0.1],
            min_gradient: 60.0,
            min_coverage: 0.55,
            max_candidates: 32,
            peaks_per_level: 48,
            angular_bins: 72,
        }
    }
}

#[derive(Debug, Clone, Copy)]
struct Edge {
    x: f64,
    y: f64,
    ux: f64,
    uy: f64,
    mag: f64,
}

fn sobel_edges(frame: &Frame) -> Vec<Edge> {
    let (w, h) = (frame.width, frame.height);
    if w < 3 || h < 3 {
        return Vec::new();
    }
    let rows: Vec<usize> = (1..h - 1).collect();
    let per_row = par::map(&rows, |&y| {
        let p = |x: usize, y: usize| frame.get(x, y) as i32;
        let mut out = Vec::new();
        for x in 1..w - 1 {
            let gx = (p(x + 1, y - 1) + 2 * p(x + 1, y) + p(x + 1, y + 1))
                - (p(x - 1, y - 1) + 2 * p(x - 1, y) + p(x - 1, y + 1));
            let gy = (p(x - 1, y + 1) + 2 * p(x, y + 1) + p(x + 1, y + 1))
                - (p(x - 1, y - 1) + 2 * p(x, y - 1) + p(x + 1, y - 1));
            if gx == 0 && gy == 0 {
                continue;
            }
            let mag = ((gx * gx + gy * gy) as f64).sqrt();
            out.push(Edge {
                x: x as f64,
                y: y as f64,
                ux: gx as f64 / mag,
                uy: gy as f64 / mag,
                mag,
            });
        }
        out
    });
    per_row.into_iter().flatten().collect()
}

fn vote(edges: &[Edge], w: usize, h: usize, rmin: usize, rmax: usize) -> Vec<u32> {
    par::fold_merge(
        edges,
        || vec![0u32; w * h],
        |mut acc, e| {
            // Gradients point from dark to bright, i.e. into a bright blob.
            for r in rmin..=rmax {
                let cx = (e.x + e.ux * r as f64).round();
                let cy = (e.y + e.uy * r as f64).round();
                if cx < 0.0 || cy < 0.0 || cx >= w as f64 || cy >= h as f64 {
                    break;
                }
                acc[cy as usize * w + cx as usize] += 1;
            }
            acc
        },
        |mut a, b| {
            a.iter_mut().zip(b).for_each(|(x, y)| *x += y);
            a
        },
    )
}

fn box3(acc: &[u32], w: usize, h: usize) -> Vec<u32> {
    let mut out = vec![0u32; w * h];
    for y in 1..h.saturating_sub(1) {
        for x in 1..w - 1 {
            let mut s = 0;
            for dy in 0..3 {
                let row = (y + dy - 1) * w;
                s += acc[row + x - 1] + acc[row + x] + acc[row + x + 1];
            }
            out[y * w + x] = s;
        }
    }
    out
}

/// Local maxima (strict in raster order on ties) within a square window.
fn peaks(
    acc: &[u32],
    w: usize,
    h: usize,
    window: usize,
    min_votes: u32,
    limit: usize,
) -> Vec<(usize, usize, u32)> {
    let mut found = Vec::new();
    for y in 0..h {
        for x in 0..w {
            let v = acc[y * w + x];
            if v < min_votes {
                continue;
            }
            let (x0, x1) = (x.saturating_sub(window), (x + window).min(w - 1));
            let (y0, y1) = (y.saturating_sub(window), (y + window).min(h - 1));
            let mut is_max = true;
            'scan: for yy in y0..=y1 {
                for xx in x0..=x1 {
                    let o = acc[yy * w + xx];
                    if o > v || (o == v && (yy, xx) < (y, x)) {
                        is_max = false;
                        break 'scan;
                    }
                }
            }
            if is_max {
                found.push((x, y, v));
            }
        }
    }
    found.sort_by(|a, b| b.2.cmp(&a.2).then((a.1, a.0).cmp(&(b.1, b.0))));
    found.truncate(limit);
    found
}

/// Algebraic (Kåsa) circle fit.
fn fit_circle(points: &[(f64, f64)]) -> Option<(Vector2<f64>, f64)> {
    if points.len() < 3 {
        return None;
    }
    let n = points.len() as f64;
    let (mx, my) = points
        .iter()
        .fold((0.0, 0.0), |a, p| (a.0 + p.0, a.1 + p.1));
    let (mx, my) = (mx / n, my / n);
    let (mut suu, mut svv, mut suv, mut suuu, mut svvv, mut suvv, mut svuu) =
        (0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0);
    for &(x, y) in points {
        let (u, v) = (x - mx, y - my);
        suu += u * u;
        svv += v * v;
        suv += u * v;
        suuu += u * u * u;
        svvv += v * v * v;
        suvv += u * v * v;
        svuu += v * u * u;
    }
    let det = suu * svv - suv * suv;
    if det.abs() < 1e-9 {
        return None;
    }
    let b1 = 0.5 * (suuu + suvv);
    let b2 = 0.5 * (svvv + svuu);
    let uc = (b1 * svv - b2 * suv) / det;
    let vc = (suu * b2 - suv * b1) / det;
    let r = (uc * uc + vc * vc + (suu + svv) / n).sqrt();
    Some((Vector2::new(uc + mx, vc + my), r))
}

fn verify_peak(
    edges: &[Edge],
    cx: f64,
    cy: f64,
    rmin: usize,
    rmax: usize,
    cfg: &HoughConfig,
) -> Option<CircleCandidate> {
    // Radius histogram of edges whose gradient points at the peak.
    let nb = rmax + 2;
    let mut hist = vec![0u32; nb + 1];
    let consistent = |e: &Edge| -> Option<f64> {
        let (dx, dy) = (cx - e.x, cy - e.y);
        let d = (dx * dx + dy * dy).sqrt();
        if d < rmin as f64 - 1.5 || d > rmax as f64 + 1.5 || d == 0.0 {
            return None;
        }
        ((dx * e.ux + dy * e.uy) / d > 0.9).then_some(d)
    };
    for e in edges {
        if let Some(d) = consistent(e) {
            let b = d.round() as usize;
            if b <= nb {
                hist[b] += 1;
            }
        }
    }
    // Normalize by circumference so small and large circles compete fairly.
    let best = (rmin..=rmax)
        .map(|r| {
            let s = hist[r - 1] + 2 * hist[r] + hist[r + 1];
            (r, s as f64 / r as f64)
        })
        .fold((0usize, 0.0f64), |acc, x| if x.1 > acc.1 { x } else { acc });
    if best.0 == 0 {
        return None;
    }
    let r0 = best.0 as f64;
    let band = (0.04 * r0).max(1.5);
    let support: Vec<(f64, f64)> = edges
        .iter()
        .filter(|e| consistent(e).is_some_and(|d| (d - r0).abs() <= band))
        .map(|e| (e.x, e.y))
        .collect();
    let (center, radius) = fit_circle(&support)?;
    if !(radius >= rmin as f64 * 0.8 && radius <= rmax as f64 * 1.2) {
        return None;
    }
    let bins = cfg.angular_bins.max(8);
    let mut hit = vec![false; bins];
    let band = (0.04 * radius).max(1.5);
    for e in edges {
        let (dx, dy) = (e.x - center.x, e.y - center.y);
        let d = (dx * dx + dy * dy).sqrt();
        if d == 0.0 || (d - radius).abs() > band || (-(dx * e.ux + dy * e.uy) / d) < 0.9 {
            continue;
        }
        let a = dy.atan2(dx) + std::f64::consts::PI;
        let k = ((a / (2.0 * std::f64::consts::PI)) * bins as f64) as usize % bins;
        hit[k] = true;
    }
    let coverage = hit.iter().filter(|&&b| b).count() as f64 / bins as f64;
    (coverage >= cfg.min_coverage).then_some(CircleCandidate {
        center,
        radius,
        accumulator_score: coverage,
    })
}

fn same_circle(a: &CircleCandidate, b: &CircleCandidate) -> bool {
    let r = a.radius.max(b.radius);
    (a.center - b.center).norm() < 0.35 * r && (a.radius - b.radius).abs() < 0.25 * r
}

/// Coarse-to-fine circle search with the default configuration.
pub fn adaptive_hough(frame: &Frame, radius_range: (f64, f64)) -> Vec<CircleCandidate> {
    adaptive_hough_with(frame, radius_range, &HoughConfig::default())
}

pub fn adaptive_hough_with(
    frame: &Frame,
    radius_range: (f64, f64),
    cfg: &HoughConfig,
) -> Vec<CircleCandidate> {
    let (w, h) = (frame.width, frame.height);
    let max_r = (w.min(h) / 2) as f64;
    let rmin = radius_range.0.max(4.0).min(max_r).floor() as usize;
    let rmax = radius_range.1.min(max_r).max(rmin as f64).ceil() as usize;
    let all_edges = sobel_edges(frame);
    let strongest = all_edges.iter().map(|e| e.mag).fold(0.0, f64::max);
    if strongest < cfg.min_gradient {
        return Vec::new();
    }
    let mut merged: Vec<CircleCandidate> = Vec::new();
    for level in cfg.levels {
        let cut = (level * strongest).max(cfg.min_gradient);
        let edges: Vec<Edge> = all_edges.iter().copied().filter(|e| e.mag >= cut).collect();
        if edges.len() < 8 {
            continue;
        }
        let acc = box3(&vote(&edges, w, h, rmin, rmax), w, h);
        let min_votes = ((std::f64::consts::PI * rmin as f64) as u32).max(12);
        let window = (rmin / 2).max(2);
        for (px, py, _) in peaks(&acc, w, h, window, min_votes, cfg.peaks_per_level) {
            let Some(c) = verify_peak(&edges, px as f64, py as f64, rmin, rmax, cfg) else {
                continue;
            };
            match merged.iter_mut().find(|m| same_circle(m, &c)) {
                Some(m) if c.accumulator_score > m.accumulator_score => *m = c,
                Some(_) => {}
                None => merged.push(c),
            }
        }
    }
    merged.sort_by(|a, b| {
        b.accumulator_score
            .total_cmp(&a.accumulator_score)
            .then(a.center.y.total_cmp(&b.center.y))
            .then(a.center.x.total_cmp(&b.center.x))
    });
    merged.truncate(cfg.max_candidates);
    merged
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::EllipseParams;
    use crate::imaging::rasterize_ellipse;

    fn disks(specs: &[(f64, f64, f64)]) -> Frame {
        let mut f = Frame::new(640, 480);
        f.pixels.iter_mut().for_each(|p| *p = 40);
        for &(x, y, r) in specs {
            let m = rasterize_ellipse(640, 480, &EllipseParams::new(Vector2::new(x, y), r, r, 0.0));
            for (p, &b) in f.pixels.iter_mut().zip(&m.bits) {
                if b {
                    *p = 180;
                }
            }
        }
        f
    }

    #[test]
    fn single_disk() {
        let c = adaptive_hough(&disks(&[(320.0, 240.0, 50.0)]), (20.0, 120.0));
        assert_eq!(c.len(), 1, "{c:?}");
        assert!((c[0].center - Vector2::new(320.0, 240.0)).norm() < 2.0);
        assert!((c[0].radius - 50.0).abs() < 3.0);
    }

    #[test]
    fn blank_frame() {
        assert!(adaptive_hough(&Frame::new(640, 480), (10.0, 100.0)).is_empty());
    }

    #[test]
    fn three_disks() {
        let truth = [
            (150.0, 150.0, 40.0),
            (420.0, 130.0, 55.0),
            (300.0, 360.0, 35.0),
        ];
        let c = adaptive_hough(&disks(&truth), (20.0, 100.0));
        assert!(c.len() >= 3);
        for (x, y, r) in truth {
            assert!(
                c.iter()
                    .any(|k| (k.center - Vector2::new(x, y)).norm() < 2.0
                        && (k.radius - r).abs() < 3.0),
                "missing {x},{y},{r}: {c:?}"
            );
        }
    }

    #[test]
    fn kasa_fit_exact_circle() {
        let pts: Vec<(f64, f64)> = (0..40)
            .map(|i| {
                let a = i as f64 * 0.157;
                (10.0 + 7.0 * a.cos(), -3.0 + 7.0 * a.sin())
            })
            .collect();
        let (c, r) = fit_circle(&pts).unwrap();
        assert!((c - Vector2::new(10.0, -3.0)).norm() < 1e-9 && (r - 7.0).abs() < 1e-9);
    }
}
