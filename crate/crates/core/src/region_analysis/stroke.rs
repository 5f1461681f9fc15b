//! Stroke width estimation: exact Euclidean distance transform sampled along
//! a morphological skeleton.

use crate::mser::Region;

const INF: f64 = 1e20;

/// One-dimensional squared distance transform of a sampled function
/// (lower envelope of parabolas).
fn sq_dt_1d(f: &[f64], out: &mut [f64], v: &mut [usize], z: &mut [f64]) {
    let n = f.len();
    let intersect = |q: usize, p: usize| {
        ((f[q] + (q * q) as f64) - (f[p] + (p * p) as f64)) / (2.0 * (q as f64 - p as f64))
    };
    let mut k = 0usize;
    v[0] = 0;
    z[0] = f64::NEG_INFINITY;
    z[1] = f64::INFINITY;
    for q in 1..n {
        let mut s = intersect(q, v[k]);
        while s <= z[k] {
            k -= 1;
            s = intersect(q, v[k]);
        }
        k += 1;
        v[k] = q;
        z[k] = s;
        z[k + 1] = f64::INFINITY;
    }
    k = 0;
    for (q, o) in out.iter_mut().enumerate() {
        while z[k + 1] < q as f64 {
            k += 1;
        }
        let d = q as f64 - v[k] as f64;
        *o = d * d + f[v[k]];
    }
}

/// Exact Euclidean distance from every foreground cell to the nearest
/// background cell centre. Cells outside the grid count as background.
pub fn distance_transform(mask: &[bool], height: usize, width: usize) -> Vec<f64> {
    // pad by one background cell on each side
    let (ph, pw) = (height + 2, width + 2);
    let mut grid = vec![0.0f64; ph * pw];
    for r in 0..height {
        for c in 0..width {
            if mask[r * width + c] {
                grid[(r + 1) * pw + c + 1] = INF;
            }
        }
    }
    let maxn = ph.max(pw);
    let mut f = vec![0.0; maxn];
    let mut out = vec![0.0; maxn];
    let mut v = vec![0usize; maxn];
    let mut z = vec![0.0; maxn + 1];
    for c in 0..pw {
        for r in 0..ph {
            f[r] = grid[r * pw + c];
        }
        sq_dt_1d(&f[..ph], &mut out[..ph], &mut v, &mut z);
        for r in 0..ph {
            grid[r * pw + c] = out[r];
        }
    }
    for r in 0..ph {
        f[..pw].copy_from_slice(&grid[r * pw..(r + 1) * pw]);
        sq_dt_1d(&f[..pw], &mut out[..pw], &mut v, &mut z);
        grid[r * pw..(r + 1) * pw].copy_from_slice(&out[..pw]);
    }
    let mut dist = vec![0.0; height * width];
    for r in 0..height {
        for c in 0..width {
            dist[r * width + c] = grid[(r + 1) * pw + c + 1].sqrt();
        }
    }
    dist
}

/// Zhang-Suen thinning. Returns the skeleton as a mask of the same shape.
pub fn thin(mask: &[bool], height: usize, width: usize) -> Vec<bool> {
    let (ph, pw) = (height + 2, width + 2);
    let mut img = vec![false; ph * pw];
    for r in 0..height {
        for c in 0..width {
            img[(r + 1) * pw + c + 1] = mask[r * width + c];
        }
    }
    let mut to_clear = Vec::new();
    loop {
        let mut changed = false;
        for step in 0..2 {
            to_clear.clear();
            for r in 1..ph - 1 {
                for c in 1..pw - 1 {
                    if !img[r * pw + c] {
                        continue;
                    }
                    // P2..P9 clockwise from north
                    let n = [
                        img[(r - 1) * pw + c],
                        img[(r - 1) * pw + c + 1],
                        img[r * pw + c + 1],
                        img[(r + 1) * pw + c + 1],
                        img[(r + 1) * pw + c],
                        img[(r + 1) * pw + c - 1],
                        img[r * pw + c - 1],
                        img[(r - 1) * pw + c - 1],
                    ];
                    let b = n.iter().filter(|&&x| x).count();
                    if !(2..=6).contains(&b) {
                        continue;
                    }
                    let a = (0..8).filter(|&i| !n[i] && n[(i + 1) % 8]).count();
                    if a != 1 {
                        continue;
                    }
                    let (p2, p4, p6, p8) = (n[0], n[2], n[4], n[6]);
                    let ok = if step == 0 {
                        !(p2 && p4 && p6) && !(p4 && p6 && p8)
                    } else {
                        !(p2 && p4 && p8) && !(p2 && p6 && p8)
                    };
                    if ok {
                        to_clear.push(r * pw + c);
                    }
                }
            }
            if !to_clear.is_empty() {
                changed = true;
                for &i in &to_clear {
                    img[i] = false;
                }
            }
        }
        if !changed {
            break;
        }
    }
    let mut out = vec![false; height * width];
    for r in 0..height {
        for c in 0..width {
            out[r * width + c] = img[(r + 1) * pw + c + 1];
        }
    }
    out
}

/// Stroke width samples of a mask: `2 * (dt - 0.5)` at each skeleton cell,
/// where `dt` is the distance to the nearest background cell centre. The
/// half-pixel correction makes a bar of odd width `w` sample exactly `w`.
pub fn stroke_width_samples(mask: &[bool], height: usize, width: usize) -> Vec<f64> {
    let dist = distance_transform(mask, height, width);
    let skeleton = thin(mask, height, width);
    let mut samples: Vec<f64> = skeleton
        .iter()
        .zip(&dist)
        .filter(|(&s, _)| s)
        .map(|(_, &d)| 2.0 * (d - 0.5))
        .collect();
    if samples.is_empty() {
        if let Some(d) = dist
            .iter()
            .zip(mask)
            .filter(|(_, &m)| m)
            .map(|(&d, _)| d)
            .max_by(f64::total_cmp)
        {
            samples.push(2.0 * (d - 0.5));
        }
    }
    samples
}

/// Mean and population standard deviation of the stroke width.
pub fn stroke_width_stats(r: &Region) -> (f64, f64) {
    let samples = stroke_width_samples(&r.mask(), r.bbox.height as usize, r.bbox.width as usize);
    mean_std(&samples)
}

pub(crate) fn mean_std(samples: &[f64]) -> (f64, f64) {
    let n = samples.len() as f64;
    let mean = samples.iter().sum::<f64>() / n;
    let var = samples.iter().map(|s| (s - mean).powi(2)).sum::<f64>() / n;
    (mean, var.sqrt())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn brute_dt(mask: &[bool], h: usize, w: usize) -> Vec<f64> {
        let mut bg = Vec::new();
        for r in -1..=h as i64 {
            for c in -1..=w as i64 {
                let inside = r >= 0 && c >= 0 && (r as usize) < h && (c as usize) < w;
                if !inside || !mask[r as usize * w + c as usize] {
                    bg.push((r, c));
                }
            }
        }
        (0..h * w)
            .map(|i| {
                if !mask[i] {
                    return 0.0;
                }
                let (r, c) = ((i / w) as i64, (i % w) as i64);
                bg.iter()
                    .map(|&(br, bc)| (((br - r).pow(2) + (bc - c).pow(2)) as f64).sqrt())
                    .fold(f64::INFINITY, f64::min)
            })
            .collect()
    }

    #[test]
    fn dt_matches_brute_force() {
        let (h, w) = (13, 17);
        let mut state = 12345u64;
        let mask: Vec<bool> = (0..h * w)
            .map(|_| {
                state = state
                    .wrapping_mul(6364136223846793005)
                    .wrapping_add(1442695040888963407);
                (state >> 33) % 5 != 0
            })
            .collect();
        let fast = distance_transform(&mask, h, w);
        let slow = brute_dt(&mask, h, w);
        for (a, b) in fast.iter().zip(&slow) {
            assert!((a - b).abs() < 1e-9, "{a} vs {b}");
        }
    }

    #[test]
    fn horizontal_bar_width() {
        let (h, w) = (5, 30);
        let samples = stroke_width_samples(&vec![true; h * w], h, w);
        let (mean, std) = mean_std(&samples);
        assert!((mean - 5.0).abs() <= 1.0, "mean {mean}");
        assert!(std < 0.25, "std {std}");
    }

    #[test]
    fn solid_square_width() {
        let samples = stroke_width_samples(&[true; 121], 11, 11);
        let (mean, _) = mean_std(&samples);
        // the skeleton of a square reaches into its corners where widths shrink
        assert!(mean > 5.0 && mean <= 11.0, "mean {mean}");
        assert!(samples.iter().any(|&s| (s - 11.0).abs() < 1e-9));
    }

    #[test]
    fn wedge_varies() {
        // width grows linearly from 1 to 15 along 40 columns
        let (h, w) = (15, 40);
        let mask: Vec<bool> = (0..h * w)
            .map(|i| {
                let (r, c) = (i / w, i % w);
                let half = (c as f64 * 14.0 / 39.0 + 1.0) / 2.0;
                (r as f64 + 0.5 - 7.5).abs() <= half
            })
            .collect();
        let (mean, std) = mean_std(&stroke_width_samples(&mask, h, w));
        assert!(std / mean > 0.2, "variation {}", std / mean);
    }

    #[test]
    fn single_pixel_has_zero_spread() {
        let samples = stroke_width_samples(&[true], 1, 1);
        assert_eq!(samples, vec![1.0]);
    }
}
