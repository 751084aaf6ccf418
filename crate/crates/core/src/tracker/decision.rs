//! Cross-frame belief about where the target sits and how large it is.

use super::hough::CircleCandidate;
use crate::geometry::CameraIntrinsics;
use crate::imaging::Frame;
use nalgebra::Vector2;

/// Expected projection used to rank candidates: center and radius in pixels.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Ideal {
    pub x: f64,
    pub y: f64,
    pub r: f64,
}

/// Relative deviation of a candidate from the expected projection; lower is
/// better.
pub fn confidence_score(c: &CircleCandidate, ideal: &Ideal) -> f64 {
    (c.center.x - ideal.x).abs() / ideal.x
        + (c.center.y - ideal.y).abs() / ideal.y
        + (c.radius - ideal.r).abs() / ideal.r
}

/// Linearly increasing normalized weights `i / Σk`, `i = 1..=n`.
pub fn candidate_weights(n: usize) -> Vec<f64> {
    let total = (n * (n + 1)) as f64 / 2.0;
    (1..=n).map(|i| i as f64 / total).collect()
}

/// Threshold such that a persistent candidate needs a few accumulation
/// cycles before it is selected: `1 + 1.5 · w_max(n)`.
pub fn calibrated_threshold(nominal_candidates: usize) -> f64 {
    let n = nominal_candidates.max(1);
    1.0 + 1.5 * candidate_weights(n)[n - 1]
}

#[derive(Debug, Clone, PartialEq)]
pub struct DecisionMatrix {
    pub width: usize,
    pub height: usize,
    pub grid: Vec<f64>,
    pub expected_radius: f64,
    pub threshold: f64,
    pub cycles_since_reset: usize,
    principal_point: [f64; 2],
}

impl DecisionMatrix {
    /// Unit Gaussian of width `expected_radius` at the principal point.
    pub fn new(intr: &CameraIntrinsics, expected_radius: f64, threshold: f64) -> Self {
        let mut d = Self {
            width: intr.width,
            height: intr.height,
            grid: vec![0.0; intr.width * intr.height],
            expected_radius,
            threshold,
            cycles_since_reset: 0,
            principal_point: intr.principal_point,
        };
        d.reset();
        d
    }

    /// Back to the prior; the expected radius may have changed meanwhile.
    pub fn reset(&mut self) {
        self.grid.iter_mut().for_each(|v| *v = 0.0);
        self.cycles_since_reset = 0;
        let [px, py] = self.principal_point;
        let r = self.expected_radius;
        for y in 0..self.height {
            for x in 0..self.width {
                let d2 = (x as f64 - px).powi(2) + (y as f64 - py).powi(2);
                self.grid[y * self.width + x] = (-d2 / (2.0 * r * r)).exp();
            }
        }
    }

    pub fn set_expected_radius(&mut self, r: f64) {
        self.expected_radius = r;
    }

    pub fn ideal(&self) -> Ideal {
        Ideal {
            x: self.principal_point[0],
            y: self.principal_point[1],
            r: self.expected_radius,
        }
    }

    /// Value at the nearest grid cell; zero outside.
    pub fn at(&self, p: Vector2<f64>) -> f64 {
        let (x, y) = (p.x.round(), p.y.round());
        if x < 0.0 || y < 0.0 || x >= self.width as f64 || y >= self.height as f64 {
            return 0.0;
        }
        self.grid[y as usize * self.width + x as usize]
    }

    /// Adds `amplitude · exp(−d²/2σ²)` truncated at `3σ`.
    pub fn add_kernel(&mut self, center: Vector2<f64>, sigma: f64, amplitude: f64) {
        let reach = 3.0 * sigma;
        let x0 = (center.x - reach).floor().max(0.0) as usize;
        let y0 = (center.y - reach).floor().max(0.0) as usize;
        let x1 = ((center.x + reach).ceil().max(-1.0) as i64).min(self.width as i64 - 1);
        let y1 = ((center.y + reach).ceil().max(-1.0) as i64).min(self.height as i64 - 1);
        for y in y0 as i64..=y1 {
            for x in x0 as i64..=x1 {
                let d2 = (x as f64 - center.x).powi(2) + (y as f64 - center.y).powi(2);
                if d2 <= reach * reach {
                    self.grid[y as usize * self.width + x as usize] +=
                        amplitude * (-d2 / (2.0 * sigma * sigma)).exp();
                }
            }
        }
    }

    /// One accumulation cycle: rank candidates, weight them (best gets the
    /// largest weight) and add their kernels.
    pub fn update(&mut self, candidates: &[CircleCandidate], ideal: &Ideal) {
        if candidates.is_empty() {
            return;
        }
        let ranked = rank(candidates, ideal);
        let weights = candidate_weights(ranked.len());
        for (c, w) in ranked.iter().zip(weights.iter().rev()) {
            self.add_kernel(c.center, c.radius, *w);
        }
        self.cycles_since_reset += 1;
    }

    /// Candidate whose center carries the most accumulated belief, if that
    /// belief exceeds the threshold.
    pub fn try_select(&self, candidates: &[CircleCandidate]) -> Option<CircleCandidate> {
        let ideal = self.ideal();
        let mut best: Option<(f64, f64, CircleCandidate)> = None;
        for c in candidates {
            let v = self.at(c.center);
            let s = confidence_score(c, &ideal);
            let better = match best {
                None => true,
                Some((bv, bs, _)) => v > bv || (v == bv && s < bs),
            };
            if better {
                best = Some((v, s, *c));
            }
        }
        best.filter(|b| b.0 > self.threshold).map(|b| b.2)
    }

    /// 8-bit rendering scaled to the grid maximum.
    pub fn to_frame(&self) -> Frame {
        let max = self.grid.iter().copied().fold(0.0, f64::max);
        let scale = if max > 0.0 { 255.0 / max } else { 0.0 };
        Frame::from_pixels(
            self.width,
            self.height,
            self.grid
                .iter()
                .map(|v| (v * scale).round() as u8)
                .collect(),
        )
    }

    pub fn is_valid(&self) -> bool {
        self.grid.iter().all(|v| v.is_finite() && *v >= 0.0)
    }
}

/// Candidates sorted by ascending confidence score (stable).
pub fn rank(candidates: &[CircleCandidate], ideal: &Ideal) -> Vec<CircleCandidate> {
    let mut v = candidates.to_vec();
    v.sort_by(|a, b| confidence_score(a, ideal).total_cmp(&confidence_score(b, ideal)));
    v
}
