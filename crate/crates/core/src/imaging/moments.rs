use super::frame::BinaryMask;
use super::ImagingError;
use crate::geometry::EllipseParams;
use nalgebra::Vector2;

/// Discrete region statistics in pixel units; moments are area-normalized.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RegionMoments {
    pub area: f64,
    pub centroid: [f64; 2],
    pub mu20: f64,
    pub mu11: f64,
    pub mu02: f64,
}

/// Exact sums `Σ(x−x̄)^i (y−ȳ)^j / area` over set pixels (pixel centers at
/// integer coordinates).
pub fn region_moments_oracle(mask: &BinaryMask) -> Result<RegionMoments, ImagingError> {
    let mut n = 0u64;
    let (mut sx, mut sy) = (0.0f64, 0.0f64);
    for y in 0..mask.height {
        for x in 0..mask.width {
            if mask.get(x, y) {
                n += 1;
                sx += x as f64;
                sy += y as f64;
            }
        }
    }
    if n == 0 {
        return Err(ImagingError::EmptyMask);
    }
    let area = n as f64;
    let (cx, cy) = (sx / area, sy / area);
    let (mut m20, mut m11, mut m02) = (0.0, 0.0, 0.0);
    for y in 0..mask.height {
        for x in 0..mask.width {
            if mask.get(x, y) {
                let (dx, dy) = (x as f64 - cx, y as f64 - cy);
                m20 += dx * dx;
                m11 += dx * dy;
                m02 += dy * dy;
            }
        }
    }
    Ok(RegionMoments {
        area,
        centroid: [cx, cy],
        mu20: m20 / area,
        mu11: m11 / area,
        mu02: m02 / area,
    })
}

/// Filled ellipse whose area-normalized covariance equals the moments
/// (a uniform ellipse has covariance `diag(a², b²)/4` in its own axes).
pub fn ellipse_from_moments(m: &RegionMoments) -> EllipseParams {
    let mean = 0.5 * (m.mu20 + m.mu02);
    let root = (0.25 * (m.mu20 - m.mu02).powi(2) + m.mu11 * m.mu11).sqrt();
    let (l1, l2) = (mean + root, (mean - root).max(0.0));
    let alpha = 0.5 * (2.0 * m.mu11).atan2(m.mu20 - m.mu02);
    EllipseParams::new(
        Vector2::new(m.centroid[0], m.centroid[1]),
        2.0 * l1.sqrt(),
        2.0 * l2.sqrt(),
        alpha,
    )
}

/// Sets every pixel whose center lies inside `e` (pixel units).
pub fn rasterize_ellipse(width: usize, height: usize, e: &EllipseParams) -> BinaryMask {
    let mut mask = BinaryMask::new(width, height);
    let (s, c) = e.alpha.sin_cos();
    for y in 0..height {
        for x in 0..width {
            let (dx, dy) = (x as f64 - e.center.x, y as f64 - e.center.y);
            let u = dx * c + dy * s;
            let v = -dx * s + dy * c;
            if (u / e.a).powi(2) + (v / e.b).powi(2) <= 1.0 {
                mask.set(x, y, true);
            }
        }
    }
    mask
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn single_pixel() {
        let mut m = BinaryMask::new(4, 4);
        m.set(2, 1, true);
        let r = region_moments_oracle(&m).unwrap();
        assert_eq!(r.area, 1.0);
        assert_eq!(r.centroid, [2.0, 1.0]);
        assert_eq!((r.mu20, r.mu11, r.mu02), (0.0, 0.0, 0.0));
    }

    #[test]
    fn empty_mask() {
        assert!(matches!(
            region_moments_oracle(&BinaryMask::new(3, 3)),
            Err(ImagingError::EmptyMask)
        ));
    }

    #[test]
    fn rectangle_matches_discrete_uniform_variance() {
        let (w, h) = (37usize, 12usize);
        let mut m = BinaryMask::new(60, 40);
        for y in 5..5 + h {
            for x in 3..3 + w {
                m.set(x, y, true);
            }
        }
        let r = region_moments_oracle(&m).unwrap();
        // Brute-force variance of {0..w-1}.
        let mean = (w - 1) as f64 / 2.0;
        let brute: f64 = (0..w).map(|i| (i as f64 - mean).powi(2)).sum::<f64>() / w as f64;
        let closed = ((w * w) as f64 - 1.0) / 12.0;
        assert!((brute - closed).abs() < 1e-12);
        assert!((r.mu20 - closed).abs() < 1e-9);
        assert!((r.mu02 - ((h * h) as f64 - 1.0) / 12.0).abs() < 1e-9);
        assert!(r.mu11.abs() < 1e-9);
    }

    #[test]
    fn disk_moments() {
        let e = EllipseParams::new(Vector2::new(150.0, 140.0), 100.0, 100.0, 0.0);
        let r = region_moments_oracle(&rasterize_ellipse(300, 280, &e)).unwrap();
        assert!((r.mu20 - 2500.0).abs() / 2500.0 < 0.01);
        assert!((r.mu02 - 2500.0).abs() / 2500.0 < 0.01);
        assert!(r.mu11.abs() < 1e-6);
        let back = ellipse_from_moments(&r);
        assert!((back.a - 100.0).abs() < 0.5);
    }
}
