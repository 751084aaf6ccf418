//! Region segmentation and 8-connected boundary tracing inside the ROI.

use super::TrackError;
use crate::imaging::{BinaryMask, Frame};
use nalgebra::Vector2;
use serde::{Deserialize, Serialize};

/// Circular image region, pixels.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Roi {
    pub center: [f64; 2],
    pub radius: f64,
}

impl Roi {
    pub fn new(center: Vector2<f64>, radius: f64) -> Self {
        Self {
            center: [center.x, center.y],
            radius,
        }
    }

    /// Circle around the image center reaching every corner.
    pub fn full_image(width: usize, height: usize) -> Self {
        let c = Vector2::new((width as f64 - 1.0) / 2.0, (height as f64 - 1.0) / 2.0);
        Self::new(c, c.norm() + 1.0)
    }

    pub fn center_vec(&self) -> Vector2<f64> {
        Vector2::new(self.center[0], self.center[1])
    }

    pub fn contains(&self, p: Vector2<f64>) -> bool {
        (p - self.center_vec()).norm() <= self.radius
    }

    /// True when no image pixel lies outside the circle.
    pub fn covers_image(&self, width: usize, height: usize) -> bool {
        let (w, h) = (width as f64 - 1.0, height as f64 - 1.0);
        [(0.0, 0.0), (w, 0.0), (0.0, h), (w, h)]
            .iter()
            .all(|&(x, y)| self.contains(Vector2::new(x, y)))
    }

    pub fn intersects_image(&self, width: usize, height: usize) -> bool {
        let c = self.center_vec();
        let nx = c.x.clamp(0.0, width as f64 - 1.0);
        let ny = c.y.clamp(0.0, height as f64 - 1.0);
        self.radius > 0.0 && (Vector2::new(nx, ny) - c).norm() <= self.radius
    }
}

/// Freeman directions: 0 = E, then counter-clockwise on screen (N is −y).
pub const FREEMAN_DX: [i64; 8] = [1, 1, 0, -1, -1, -1, 0, 1];
pub const FREEMAN_DY: [i64; 8] = [0, -1, -1, -1, 0, 1, 1, 1];

/// Closed outer boundary of one connected component.
#[derive(Debug, Clone, PartialEq)]
pub struct Boundary {
    /// Pixel positions in tracing order; the start is not repeated at the end.
    pub points: Vec<[i64; 2]>,
    /// Step codes between consecutive points, closing back to the start.
    pub chain: Vec<u8>,
}

impl Boundary {
    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn to_points(&self) -> Vec<Vector2<f64>> {
        self.points
            .iter()
            .map(|p| Vector2::new(p[0] as f64, p[1] as f64))
            .collect()
    }
}

/// Between-class-variance maximizing threshold; pixels `> t` are foreground.
pub fn otsu_threshold(hist: &[u64; 256]) -> u8 {
    let total: u64 = hist.iter().sum();
    if total == 0 {
        return 0;
    }
    let sum_all: f64 = hist
        .iter()
        .enumerate()
        .map(|(i, &h)| i as f64 * h as f64)
        .sum();
    let (mut w0, mut sum0) = (0.0f64, 0.0f64);
    let (mut best_t, mut best_var) = (0u8, -1.0f64);
    for (t, &h) in hist.iter().enumerate() {
        w0 += h as f64;
        sum0 += t as f64 * h as f64;
        let w1 = total as f64 - w0;
        if w0 == 0.0 || w1 == 0.0 {
            continue;
        }
        let (m0, m1) = (sum0 / w0, (sum_all - sum0) / w1);
        let var = w0 * w1 * (m0 - m1) * (m0 - m1);
        if var > best_var {
            best_var = var;
            best_t = t as u8;
        }
    }
    best_t
}

fn erode(m: &BinaryMask) -> BinaryMask {
    let mut out = BinaryMask::new(m.width, m.height);
    for y in 0..m.height {
        for x in 0..m.width {
            let all =
                (-1..=1).all(|dy| (-1..=1).all(|dx| m.get_signed(x as i64 + dx, y as i64 + dy)));
            out.set(x, y, all);
        }
    }
    out
}

fn dilate(m: &BinaryMask) -> BinaryMask {
    let mut out = BinaryMask::new(m.width, m.height);
    for y in 0..m.height {
        for x in 0..m.width {
            let any =
                (-1..=1).any(|dy| (-1..=1).any(|dx| m.get_signed(x as i64 + dx, y as i64 + dy)));
            out.set(x, y, any);
        }
    }
    out
}

/// 3×3 opening (erosion then dilation).
pub fn open3(m: &BinaryMask) -> BinaryMask {
    dilate(&erode(m))
}

/// Moore-neighbour trace starting at the component's first pixel in raster
/// order. Stops when the walk re-enters the start with its initial move.
pub fn trace_from(m: &BinaryMask, start: [i64; 2]) -> Boundary {
    let set = |p: [i64; 2]| m.get_signed(p[0], p[1]);
    let mut points = vec![start];
    let mut chain = Vec::new();
    let mut p = start;
    let mut dir = 7usize;
    let mut first_move: Option<usize> = None;
    // Hard cap: a boundary visits each pixel at most 4 times.
    let cap = 4 * m.width * m.height + 8;
    loop {
        let search = if dir.is_multiple_of(2) {
            (dir + 7) % 8
        } else {
            (dir + 6) % 8
        };
        let next = (0..8)
            .map(|k| (search + k) % 8)
            .find(|&d| set([p[0] + FREEMAN_DX[d], p[1] + FREEMAN_DY[d]]));
        let Some(d) = next else {
            break; // isolated pixel
        };
        if p == start && first_move == Some(d) {
            break;
        }
        first_move.get_or_insert(d);
        p = [p[0] + FREEMAN_DX[d], p[1] + FREEMAN_DY[d]];
        chain.push(d as u8);
        dir = d;
        if p != start {
            points.push(p);
        }
        if chain.len() > cap {
            break;
        }
    }
    Boundary { points, chain }
}

/// Outer boundaries of all 8-connected components, longest first.
pub fn trace_boundaries(m: &BinaryMask) -> Vec<Boundary> {
    let mut labeled = vec![false; m.width * m.height];
    let mut out = Vec::new();
    let mut stack = Vec::new();
    for y in 0..m.height {
        for x in 0..m.width {
            let i = y * m.width + x;
            if !m.bits[i] || labeled[i] {
                continue;
            }
            labeled[i] = true;
            stack.push((x, y));
            while let Some((cx, cy)) = stack.pop() {
                for d in 0..8 {
                    let (nx, ny) = (cx as i64 + FREEMAN_DX[d], cy as i64 + FREEMAN_DY[d]);
                    if m.get_signed(nx, ny) {
                        let j = ny as usize * m.width + nx as usize;
                        if !labeled[j] {
                            labeled[j] = true;
                            stack.push((nx as usize, ny as usize));
                        }
                    }
                }
            }
            out.push(trace_from(m, [x as i64, y as i64]));
        }
    }
    out.sort_by_key(|b| std::cmp::Reverse(b.len()));
    out
}

pub const MIN_BOUNDARY_POINTS: usize = 16;

/// Segments the ROI interior and returns its component boundaries in image
/// coordinates, longest first.
pub fn extract_boundary(frame: &Frame, roi: &Roi) -> Result<Vec<Boundary>, TrackError> {
    if !roi.intersects_image(frame.width, frame.height) {
        return Err(TrackError::NoBoundary);
    }
    let c = roi.center_vec();
    let x0 = (c.x - roi.radius).floor().max(0.0) as usize;
    let y0 = (c.y - roi.radius).floor().max(0.0) as usize;
    let x1 = ((c.x + roi.radius).ceil() as i64).clamp(0, frame.width as i64 - 1) as usize;
    let y1 = ((c.y + roi.radius).ceil() as i64).clamp(0, frame.height as i64 - 1) as usize;
    let (w, h) = (x1 - x0 + 1, y1 - y0 + 1);
    let r2 = roi.radius * roi.radius;
    let inside = |x: usize, y: usize| (x as f64 - c.x).powi(2) + (y as f64 - c.y).powi(2) <= r2;

    // 3×3 median: suppresses sensor noise without moving straight edges.
    let px = |x: i64, y: i64| {
        frame.get(
            x.clamp(0, frame.width as i64 - 1) as usize,
            y.clamp(0, frame.height as i64 - 1) as usize,
        )
    };
    let mut smooth = vec![0u8; w * h];
    for y in y0..=y1 {
        for x in x0..=x1 {
            let mut win = [0u8; 9];
            for (k, v) in win.iter_mut().enumerate() {
                *v = px(x as i64 + k as i64 % 3 - 1, y as i64 + k as i64 / 3 - 1);
            }
            win.sort_unstable();
            smooth[(y - y0) * w + (x - x0)] = win[4];
        }
    }
    let mut hist = [0u64; 256];
    for y in y0..=y1 {
        for x in x0..=x1 {
            if inside(x, y) {
                hist[smooth[(y - y0) * w + (x - x0)] as usize] += 1;
            }
        }
    }
    let t = otsu_threshold(&hist);
    let mut mask = BinaryMask::new(w, h);
    for y in y0..=y1 {
        for x in x0..=x1 {
            if inside(x, y) && smooth[(y - y0) * w + (x - x0)] > t {
                mask.set(x - x0, y - y0, true);
            }
        }
    }
    let mut boundaries = trace_boundaries(&open3(&mask));
    boundaries.retain(|b| b.len() >= MIN_BOUNDARY_POINTS);
    if boundaries.is_empty() {
        return Err(TrackError::NoBoundary);
    }
    for b in &mut boundaries {
        for p in &mut b.points {
            p[0] += x0 as i64;
            p[1] += y0 as i64;
        }
    }
    Ok(boundaries)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::EllipseParams;
    use crate::imaging::rasterize_ellipse;

    fn frame_from(mask: &BinaryMask) -> Frame {
        let mut f = mask.to_frame();
        f.pixels
            .iter_mut()
            .for_each(|p| *p = if *p > 0 { 200 } else { 30 });
        f
    }

    #[test]
    fn square_perimeter() {
        let mut m = BinaryMask::new(200, 200);
        for y in 50..150 {
            for x in 50..150 {
                m.set(x, y, true);
            }
        }
        let b = trace_boundaries(&m);
        assert_eq!(b[0].len(), 396);
        assert_eq!(b[0].chain.len(), 396);
        // Chain codes reproduce the point sequence.
        let mut p = b[0].points[0];
        for (i, &d) in b[0].chain.iter().enumerate() {
            p = [p[0] + FREEMAN_DX[d as usize], p[1] + FREEMAN_DY[d as usize]];
            assert_eq!(p, b[0].points[(i + 1) % 396]);
        }
        // The median filter only trims the four corner pixels.
        let roi = Roi::new(Vector2::new(99.5, 99.5), 90.0);
        let e = extract_boundary(&frame_from(&m), &roi).unwrap();
        assert_eq!(e[0].len(), 392);
    }

    #[test]
    fn blank_roi() {
        let f = Frame::new(100, 100);
        let r = extract_boundary(&f, &Roi::new(Vector2::new(50.0, 50.0), 30.0));
        assert!(matches!(r, Err(TrackError::NoBoundary)));
    }

    #[test]
    fn disk_perimeter_matches_oracle() {
        for r in [20.0, 45.0, 80.0] {
            let e = EllipseParams::new(Vector2::new(150.0, 140.0), r, r, 0.0);
            let m = rasterize_ellipse(300, 300, &e);
            // Oracle: set pixels with at least one unset 4-neighbour.
            let oracle = (0..300i64)
                .flat_map(|y| (0..300i64).map(move |x| (x, y)))
                .filter(|&(x, y)| {
                    m.get_signed(x, y)
                        && [(1, 0), (-1, 0), (0, 1), (0, -1)]
                            .iter()
                            .any(|&(dx, dy)| !m.get_signed(x + dx, y + dy))
                })
                .count();
            let b = extract_boundary(&frame_from(&m), &Roi::new(e.center, r + 10.0)).unwrap();
            let rel = (b[0].len() as f64 - oracle as f64).abs() / oracle as f64;
            assert!(rel < 0.1, "r={r} traced {} oracle {oracle}", b[0].len());
        }
    }

    #[test]
    fn components_longest_first_and_speckle_removed() {
        let mut m = BinaryMask::new(120, 60);
        for y in 10..30 {
            for x in 10..30 {
                m.set(x, y, true);
            }
            for x in 60..100 {
                m.set(x, y, true);
            }
        }
        m.set(5, 50, true);
        let b = trace_boundaries(&open3(&m));
        assert_eq!(b.len(), 2);
        assert!(b[0].len() > b[1].len());
    }

    #[test]
    fn otsu_splits_bimodal() {
        let mut h = [0u64; 256];
        h[40] = 500;
        h[200] = 300;
        let t = otsu_threshold(&h);
        assert!((40..200).contains(&t));
    }

    #[test]
    fn single_pixel_trace() {
        let mut m = BinaryMask::new(5, 5);
        m.set(2, 2, true);
        let b = trace_from(&m, [2, 2]);
        assert_eq!(b.points, vec![[2, 2]]);
        assert!(b.chain.is_empty());
    }
}
