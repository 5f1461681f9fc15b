use crate::mser::Region;

/// Eccentricity of the ellipse with the same normalized central second
/// moments as the region, treating each pixel as a unit square (hence the
/// `1/12` term). Always in `[0, 1)`.
pub fn eccentricity(r: &Region) -> f64 {
    let n = r.area() as f64;
    let (cy, cx) = r.centroid();
    let (mut syy, mut sxx, mut sxy) = (0.0, 0.0, 0.0);
    for &(y, x) in &r.pixels {
        let dy = y as f64 - cy;
        let dx = x as f64 - cx;
        syy += dy * dy;
        sxx += dx * dx;
        sxy += dx * dy;
    }
    let uxx = sxx / n + 1.0 / 12.0;
    let uyy = syy / n + 1.0 / 12.0;
    let uxy = sxy / n;
    let mean = (uxx + uyy) / 2.0;
    let spread = (((uxx - uyy) / 2.0).powi(2) + uxy * uxy).sqrt();
    let major = mean + spread;
    let minor = (mean - spread).max(0.0);
    (1.0 - minor / major)
        .max(0.0)
        .sqrt()
        .min(1.0 - f64::EPSILON)
}

/// Twice the area of the convex hull of the pixel squares' corners.
fn hull_area_x2(r: &Region) -> i64 {
    // leftmost and rightmost pixel of each row are enough to span the hull
    let mut pts: Vec<(i64, i64)> = Vec::new();
    let mut i = 0;
    while i < r.pixels.len() {
        let row = r.pixels[i].0;
        let first = r.pixels[i].1 as i64;
        let mut last = first;
        while i < r.pixels.len() && r.pixels[i].0 == row {
            last = r.pixels[i].1 as i64;
            i += 1;
        }
        let y = row as i64;
        pts.extend([(first, y), (first, y + 1), (last + 1, y), (last + 1, y + 1)]);
    }
    let hull = convex_hull(pts);
    let mut acc = 0i64;
    for k in 0..hull.len() {
        let (x0, y0) = hull[k];
        let (x1, y1) = hull[(k + 1) % hull.len()];
        acc += x0 * y1 - x1 * y0;
    }
    acc.abs()
}

/// Andrew's monotone chain; returns hull vertices counter-clockwise.
fn convex_hull(mut pts: Vec<(i64, i64)>) -> Vec<(i64, i64)> {
    pts.sort_unstable();
    pts.dedup();
    if pts.len() < 3 {
        return pts;
    }
    let cross = |o: (i64, i64), a: (i64, i64), b: (i64, i64)| {
        (a.0 - o.0) * (b.1 - o.1) - (a.1 - o.1) * (b.0 - o.0)
    };
    let mut hull: Vec<(i64, i64)> = Vec::with_capacity(pts.len() * 2);
    for &p in &pts {
        while hull.len() >= 2 && cross(hull[hull.len() - 2], hull[hull.len() - 1], p) <= 0 {
            hull.pop();
        }
        hull.push(p);
    }
    let lower = hull.len() + 1;
    for &p in pts.iter().rev().skip(1) {
        while hull.len() >= lower && cross(hull[hull.len() - 2], hull[hull.len() - 1], p) <= 0 {
            hull.pop();
        }
        hull.push(p);
    }
    hull.pop();
    hull
}

/// Region area over convex hull area.
pub fn solidity(r: &Region) -> f64 {
    (2 * r.area()) as f64 / hull_area_x2(r) as f64
}

/// Region area over bounding-box area.
pub fn extent(r: &Region) -> f64 {
    r.area() as f64 / r.bbox.area() as f64
}

pub fn aspect_ratio(r: &Region) -> f64 {
    r.bbox.width as f64 / r.bbox.height as f64
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rect_region(h: usize, w: usize) -> Region {
        Region::from_mask(&vec![true; h * w], h, w, 3, 5).unwrap()
    }

    #[test]
    fn filled_square() {
        let r = rect_region(10, 10);
        assert_eq!(aspect_ratio(&r), 1.0);
        assert_eq!(extent(&r), 1.0);
        assert_eq!(solidity(&r), 1.0);
        assert!(eccentricity(&r).abs() < 1e-12);
    }

    #[test]
    fn wide_rectangle_aspect() {
        assert_eq!(aspect_ratio(&rect_region(10, 20)), 2.0);
    }

    #[test]
    fn thin_line_is_nearly_degenerate_ellipse() {
        // moments of a 1x20 row: var_x = (20^2 - 1)/12 + 1/12, var_y = 1/12
        let e = eccentricity(&rect_region(1, 20));
        let analytic = (1.0f64 - 1.0 / 400.0).sqrt();
        assert!((e - analytic).abs() < 1e-12);
        assert!(e > 0.99 && e < 1.0);
    }

    #[test]
    fn l_shape_solidity() {
        // 3x3 L: column 0 plus bottom row; hull is the triangle-ish pentagon
        let mask = [true, false, false, true, false, false, true, true, true];
        let r = Region::from_mask(&mask, 3, 3, 0, 0).unwrap();
        // hull corners (0,0),(1,0),(3,2),(3,3),(0,3): area = 9 - 2 = 7
        assert!((solidity(&r) - 5.0 / 7.0).abs() < 1e-12);
        assert!((extent(&r) - 5.0 / 9.0).abs() < 1e-12);
    }
}
