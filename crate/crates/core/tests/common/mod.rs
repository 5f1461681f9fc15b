//! Brute-force reference implementations shared by the integration tests
//! and the acceptance suite. Each one recomputes a result from its
//! definition, sharing no code with the library.

#![allow(dead_code, clippy::needless_range_loop)]

use std::collections::{BTreeMap, VecDeque};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use stp_core::mser::Polarity;
use stp_core::{GrayImage, MserParams, Rect, Region};

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Labels of the 4- or 8-connected components of `mask`; `usize::MAX`
/// outside it. Returns the labels and the component count.
pub fn label_components(mask: &[bool], h: usize, w: usize, eight: bool) -> (Vec<usize>, usize) {
    let mut label = vec![usize::MAX; h * w];
    let mut n = 0;
    for start in 0..h * w {
        if !mask[start] || label[start] != usize::MAX {
            continue;
        }
        label[start] = n;
        let mut queue = VecDeque::from([start]);
        while let Some(p) = queue.pop_front() {
            let (r, c) = ((p / w) as i64, (p % w) as i64);
            for dr in -1..=1i64 {
                for dc in -1..=1i64 {
                    if (dr == 0 && dc == 0) || (!eight && dr != 0 && dc != 0) {
                        continue;
                    }
                    let (rr, cc) = (r + dr, c + dc);
                    if rr < 0 || cc < 0 || rr >= h as i64 || cc >= w as i64 {
                        continue;
                    }
                    let q = rr as usize * w + cc as usize;
                    if mask[q] && label[q] == usize::MAX {
                        label[q] = n;
                        queue.push_back(q);
                    }
                }
            }
        }
        n += 1;
    }
    (label, n)
}

/// One maximally stable region found by [`mser_oracle`].
#[derive(Debug, Clone, PartialEq)]
pub struct OracleRegion {
    pub pixels: Vec<(u32, u32)>,
    pub level: u8,
    pub stability: f64,
}

/// MSER by enumerating the 4-connected components of every threshold set.
///
/// A region is a distinct pixel set that is a component of `{v <= t}` for a
/// range of thresholds `t`. Its score at `t` is
/// `(|C(t + delta)| - |largest component inside it at t - delta|) / |S|`,
/// with the upper level clamped to 255 and an empty set below level 0. The
/// score sequence continues into the largest child below the region and the
/// enclosing component above it; a region is selected at the lowest-scoring
/// level that is a non-strict local minimum with score at most
/// `max_variation`. The full-image component is never selected.
pub fn mser_oracle(img: &GrayImage, params: &MserParams, polarity: Polarity) -> Vec<OracleRegion> {
    let (h, w) = (img.height(), img.width());
    let n = h * w;
    let v: Vec<u8> = img
        .as_slice()
        .iter()
        .map(|&x| {
            if polarity == Polarity::DarkOnLight {
                x
            } else {
                255 - x
            }
        })
        .collect();
    // labels[t][p] and sizes[t][label]
    let mut labels = Vec::with_capacity(256);
    let mut sizes = Vec::with_capacity(256);
    for t in 0..256usize {
        let mask: Vec<bool> = v.iter().map(|&x| x as usize <= t).collect();
        let (lab, k) = label_components(&mask, h, w, false);
        let mut sz = vec![0usize; k];
        for &l in &lab {
            if l != usize::MAX {
                sz[l] += 1;
            }
        }
        labels.push(lab);
        sizes.push(sz);
    }
    // a component is identified by (smallest pixel, size); collect lifetimes
    struct Comp {
        pixels: Vec<usize>,
        first: usize,
        last: usize,
    }
    let mut comps: BTreeMap<(usize, usize), Comp> = BTreeMap::new();
    for t in 0..256usize {
        let mut min_pixel = vec![usize::MAX; sizes[t].len()];
        for p in 0..n {
            let l = labels[t][p];
            if l != usize::MAX && min_pixel[l] == usize::MAX {
                min_pixel[l] = p;
            }
        }
        for (l, &mp) in min_pixel.iter().enumerate() {
            let key = (mp, sizes[t][l]);
            comps
                .entry(key)
                .and_modify(|c| c.last = t)
                .or_insert_with(|| Comp {
                    pixels: (0..n).filter(|&p| labels[t][p] == l).collect(),
                    first: t,
                    last: t,
                });
        }
    }
    let delta = params.delta as usize;
    let comp_at = |t: usize, p: usize| -> usize { sizes[t][labels[t][p]] };
    // minus[t][l]: largest component at t - delta inside component l of level t
    let minus: Vec<Vec<usize>> = (0..256usize)
        .map(|t| {
            let mut m = vec![0usize; sizes[t].len()];
            if t >= delta {
                let s = t - delta;
                for p in 0..n {
                    let (l, ls) = (labels[t][p], labels[s][p]);
                    if l != usize::MAX && ls != usize::MAX {
                        m[l] = m[l].max(sizes[s][ls]);
                    }
                }
            }
            m
        })
        .collect();
    // score of the component containing pixel p at level t
    let score_at = |t: usize, p: usize| -> f64 {
        let area = comp_at(t, p);
        let plus = comp_at((t + delta).min(255), p);
        (plus - minus[t][labels[t][p]]) as f64 / area as f64
    };
    let max_area = params.max_area_fraction * n as f64;
    let mut out = Vec::new();
    for c in comps.values() {
        let area = c.pixels.len();
        if area == n || area < params.min_area || area as f64 > max_area {
            continue;
        }
        let p0 = c.pixels[0];
        // largest child at first - 1, ties to the smallest pixel index
        let child_pixel = if c.first == 0 {
            None
        } else {
            let below = c.first - 1;
            c.pixels
                .iter()
                .copied()
                .filter(|&q| labels[below][q] != usize::MAX)
                .max_by(|&a, &b| comp_at(below, a).cmp(&comp_at(below, b)).then(b.cmp(&a)))
        };
        let mut best: Option<(f64, usize)> = None;
        for t in c.first..=c.last {
            let q = score_at(t, p0);
            if q > params.max_variation {
                continue;
            }
            let prev = if t > c.first {
                Some(score_at(t - 1, p0))
            } else {
                child_pixel.map(|cp| score_at(t - 1, cp))
            };
            let next = if t < 255 {
                Some(score_at(t + 1, p0))
            } else {
                None
            };
            if prev.is_some_and(|x| q > x) || next.is_some_and(|x| q > x) {
                continue;
            }
            if best.is_none_or(|(bq, _)| q < bq) {
                best = Some((q, t));
            }
        }
        if let Some((q, t)) = best {
            out.push(OracleRegion {
                pixels: c
                    .pixels
                    .iter()
                    .map(|&p| ((p / w) as u32, (p % w) as u32))
                    .collect(),
                level: t as u8,
                stability: q,
            });
        }
    }
    out.sort_by(|a, b| a.pixels.cmp(&b.pixels).then(a.level.cmp(&b.level)));
    out
}

/// Library regions in the oracle's form and order.
pub fn as_oracle(regions: &[Region]) -> Vec<OracleRegion> {
    let mut out: Vec<OracleRegion> = regions
        .iter()
        .map(|r| OracleRegion {
            pixels: r.pixels.clone(),
            level: r.level,
            stability: r.stability,
        })
        .collect();
    out.sort_by(|a, b| a.pixels.cmp(&b.pixels).then(a.level.cmp(&b.level)));
    out
}

/// Pixel sets and levels equal; stabilities equal to rounding.
pub fn same_regions(a: &[OracleRegion], b: &[OracleRegion]) -> bool {
    a.len() == b.len()
        && a.iter().zip(b).all(|(x, y)| {
            x.pixels == y.pixels && x.level == y.level && (x.stability - y.stability).abs() <= 1e-12
        })
}

/// Random image with a few gray levels and some spatial structure.
pub fn random_image(rng: &mut ChaCha8Rng, max_side: usize) -> GrayImage {
    let h = rng.random_range(2..=max_side);
    let w = rng.random_range(2..=max_side);
    let levels = rng.random_range(2..=12u32);
    let step = 255 / levels;
    let smooth = rng.random_bool(0.5);
    let base: Vec<u8> = (0..h * w)
        .map(|_| (rng.random_range(0..=levels) * step) as u8)
        .collect();
    GrayImage::from_fn(h, w, |r, c| {
        if smooth {
            // 2x2 block averaging keeps the image piecewise constant
            let (rr, cc) = (r & !1, c & !1);
            base[rr * w + cc]
        } else {
            base[r * w + c]
        }
    })
    .unwrap()
}

/// Euler number of a mask by flood fill: 4-connected foreground components
/// minus 8-connected background components that do not touch the border.
pub fn euler_oracle(mask: &[bool], h: usize, w: usize) -> i64 {
    let (_, fg) = label_components(mask, h, w, false);
    // pad by one so the outside background is a single component
    let (ph, pw) = (h + 2, w + 2);
    let mut bg = vec![true; ph * pw];
    for r in 0..h {
        for c in 0..w {
            bg[(r + 1) * pw + c + 1] = !mask[r * w + c];
        }
    }
    let (_, nbg) = label_components(&bg, ph, pw, true);
    fg as i64 - (nbg as i64 - 1)
}

/// Overlap ratio by counting pixels on a raster.
pub fn raster_iou(a: &Rect, b: &Rect) -> f64 {
    let top = a.top.min(b.top);
    let left = a.left.min(b.left);
    let bottom = (a.top + a.height).max(b.top + b.height);
    let right = (a.left + a.width).max(b.left + b.width);
    let inside = |r: &Rect, y: i64, x: i64| {
        y >= r.top && y < r.top + r.height && x >= r.left && x < r.left + r.width
    };
    let (mut inter, mut union) = (0u64, 0u64);
    for y in top..bottom {
        for x in left..right {
            let (ia, ib) = (inside(a, y, x), inside(b, y, x));
            inter += (ia && ib) as u64;
            union += (ia || ib) as u64;
        }
    }
    if union == 0 {
        0.0
    } else {
        inter as f64 / union as f64
    }
}

/// `sum(alpha) - 1/2 sum_ij alpha_i alpha_j y_i y_j K_ij`.
pub fn dual_objective(alpha: &[f64], y: &[f64], k: &[f64]) -> f64 {
    let n = alpha.len();
    let mut quad = 0.0;
    for i in 0..n {
        for j in 0..n {
            quad += alpha[i] * alpha[j] * y[i] * y[j] * k[i * n + j];
        }
    }
    alpha.iter().sum::<f64>() - 0.5 * quad
}

/// Euclidean projection onto `{0 <= a_i <= c_i, sum a_i y_i = 0}`, by
/// bisection on the multiplier of the equality constraint.
pub fn project(v: &[f64], y: &[f64], c: &[f64]) -> Vec<f64> {
    let at = |lambda: f64| -> Vec<f64> {
        v.iter()
            .zip(y)
            .zip(c)
            .map(|((&vi, &yi), &ci)| (vi - lambda * yi).clamp(0.0, ci))
            .collect()
    };
    let g = |lambda: f64| -> f64 { at(lambda).iter().zip(y).map(|(a, yi)| a * yi).sum() };
    // g is non-increasing in lambda
    let span = v.iter().map(|x| x.abs()).fold(0.0, f64::max)
        + c.iter().fold(0.0, |m: f64, &x| m.max(x))
        + 1.0;
    let (mut lo, mut hi) = (-span, span);
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if g(mid) > 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    at(0.5 * (lo + hi))
}

/// Maximize the soft-margin dual by accelerated projected gradient ascent.
/// Returns the multipliers and the objective.
pub fn qp_oracle(k: &[f64], y: &[f64], c: &[f64]) -> (Vec<f64>, f64) {
    let n = y.len();
    // Lipschitz bound of the gradient: largest absolute row sum of Q
    let lip = (0..n)
        .map(|i| (0..n).map(|j| k[i * n + j].abs()).sum::<f64>())
        .fold(0.0, f64::max)
        .max(1e-12);
    let step = 1.0 / lip;
    let grad = |a: &[f64]| -> Vec<f64> {
        (0..n)
            .map(|i| 1.0 - y[i] * (0..n).map(|j| a[j] * y[j] * k[i * n + j]).sum::<f64>())
            .collect()
    };
    let mut alpha = project(&vec![0.0; n], y, c);
    let mut z = alpha.clone();
    let mut t = 1.0f64;
    let mut best = dual_objective(&alpha, y, k);
    let mut best_alpha = alpha.clone();
    for _ in 0..30_000 {
        let g = grad(&z);
        let v: Vec<f64> = z.iter().zip(&g).map(|(zi, gi)| zi + step * gi).collect();
        let next = project(&v, y, c);
        let t_next = 0.5 * (1.0 + (1.0 + 4.0 * t * t).sqrt());
        let obj = dual_objective(&next, y, k);
        if obj < best - 1e-15 {
            // restart momentum when the objective drops
            z = best_alpha.clone();
            t = 1.0;
            continue;
        }
        z = next
            .iter()
            .zip(&alpha)
            .map(|(x, xp)| x + (t - 1.0) / t_next * (x - xp))
            .collect();
        let change: f64 = next.iter().zip(&alpha).map(|(a, b)| (a - b).abs()).sum();
        alpha = next;
        t = t_next;
        if obj > best {
            best = obj;
            best_alpha = alpha.clone();
        }
        if change < 1e-13 {
            break;
        }
    }
    (best_alpha, best)
}

/// Linking by explicit transitive closure of the pairwise rule, using
/// bounding-box heights and mass centroids.
pub fn closure_groups(regions: &[Region], keep_singletons: bool) -> Vec<Vec<usize>> {
    let n = regions.len();
    let centroid = |r: &Region| {
        let m = r.pixels.len() as f64;
        let sy: f64 = r.pixels.iter().map(|p| p.0 as f64).sum();
        let sx: f64 = r.pixels.iter().map(|p| p.1 as f64).sum();
        (sy / m, sx / m)
    };
    let mut reach = vec![false; n * n];
    for i in 0..n {
        for j in 0..n {
            let (a, b) = (&regions[i], &regions[j]);
            let ((ay, ax), (by, bx)) = (centroid(a), centroid(b));
            let (ha, hb) = (a.bbox.height as f64, b.bbox.height as f64);
            reach[i * n + j] =
                i == j || ((ay - by).abs() <= ha.min(hb) && (ax - bx).abs() <= 2.0 * ha.max(hb));
        }
    }
    for k in 0..n {
        for i in 0..n {
            for j in 0..n {
                if reach[i * n + k] && reach[k * n + j] {
                    reach[i * n + j] = true;
                }
            }
        }
    }
    let mut seen = vec![false; n];
    let mut groups = Vec::new();
    for i in 0..n {
        if seen[i] {
            continue;
        }
        let g: Vec<usize> = (0..n).filter(|&j| reach[i * n + j]).collect();
        for &j in &g {
            seen[j] = true;
        }
        if keep_singletons || g.len() >= 2 {
            groups.push(g);
        }
    }
    groups
}

/// A solid rectangle region.
pub fn block(top: u32, left: u32, h: usize, w: usize) -> Region {
    Region::from_mask(&vec![true; h * w], h, w, top, left).unwrap()
}

/// Up to `max_n` random blobs of varied height, clustered so that links occur.
pub fn random_regions(r: &mut ChaCha8Rng, max_n: usize) -> Vec<Region> {
    let n = r.random_range(0..=max_n);
    (0..n)
        .map(|_| {
            let (h, w) = (r.random_range(2..=24usize), r.random_range(2..=16usize));
            let mut mask: Vec<bool> = (0..h * w).map(|_| r.random_bool(0.6)).collect();
            mask[0] = true;
            mask[h * w - 1] = true;
            Region::from_mask(&mask, h, w, r.random_range(0..80), r.random_range(0..200)).unwrap()
        })
        .collect()
}

/// HOG length written out: cells per side padded to at least one 2x2 block,
/// blocks stepping one cell, 9 bins per cell.
pub fn hog_len(height: usize, width: usize, cell: usize) -> usize {
    let cy = height.div_ceil(cell).max(2);
    let cx = width.div_ceil(cell).max(2);
    (cy - 1) * (cx - 1) * 4 * 9
}

/// Scores and serialized outputs of one synthetic corpus to detection run.
pub struct EndToEnd {
    pub patch_test_accuracy: f64,
    pub report: stp_core::EvalReport,
    /// Every file and model written, for byte comparison between runs.
    pub artifacts: Vec<(String, Vec<u8>)>,
}

pub fn end_to_end(
    dir: &std::path::Path,
    synth: &stp_core::corpus::SynthConfig,
    cfg: &stp_core::PipelineConfig,
) -> stp_core::Result<EndToEnd> {
    use rayon::prelude::*;
    use stp_core::corpus::{generate_synthetic, Split};
    use stp_core::evaluation::Averaging;
    use stp_core::imaging::load_image;
    use stp_core::pipeline::{
        build_line_set, build_patch_set, evaluate_detections, evaluate_patch_model,
        train_line_model, train_patch_model, ImageDetections,
    };
    use stp_core::svm::model_to_json;
    use stp_core::Detector;

    let m = generate_synthetic(synth, dir)?;
    let mut artifacts = Vec::new();
    for e in &m.entries {
        artifacts.push((
            e.image.clone(),
            std::fs::read(m.image_path(e)).expect("image written"),
        ));
    }
    artifacts.push((
        "manifest".into(),
        std::fs::read(dir.join("manifest.jsonl")).expect("manifest written"),
    ));

    let train = build_patch_set(&m, Some(Split::Train), cfg)?;
    let test = build_patch_set(&m, Some(Split::Test), cfg)?;
    let patch_model = train_patch_model(&train, cfg)?;
    let patch_test_accuracy = evaluate_patch_model(&patch_model, &test)?.accuracy;
    let lines = build_line_set(&m, Some(Split::Train), cfg, &patch_model)?;
    let line_model = train_line_model(&lines, cfg)?;
    artifacts.push((
        "patch model".into(),
        model_to_json(&patch_model)?.into_bytes(),
    ));
    artifacts.push((
        "line model".into(),
        model_to_json(&line_model)?.into_bytes(),
    ));

    let det = Detector::new(cfg.clone(), patch_model, line_model)?;
    let entries: Vec<_> = m.split(Some(Split::Test)).collect();
    let dets = entries
        .par_iter()
        .map(|e| {
            let img = load_image(&m.image_path(e))?;
            Ok(ImageDetections {
                image: e.image.clone(),
                lines: det.detect(&img)?.iter().map(|l| l.summary()).collect(),
            })
        })
        .collect::<stp_core::Result<Vec<_>>>()?;
    let report = evaluate_detections(&dets, &m, Some(Split::Test), Averaging::Micro)?;
    artifacts.push(("detections".into(), serde_json::to_vec(&dets).unwrap()));
    artifacts.push(("report".into(), serde_json::to_vec(&report).unwrap()));
    Ok(EndToEnd {
        patch_test_accuracy,
        report,
        artifacts,
    })
}

/// Name of the first artifact that differs between two runs.
pub fn first_difference(a: &[(String, Vec<u8>)], b: &[(String, Vec<u8>)]) -> Option<String> {
    if a.len() != b.len() {
        return Some(format!("{} vs {} artifacts", a.len(), b.len()));
    }
    a.iter()
        .zip(b)
        .find(|(x, y)| x != y)
        .map(|(x, _)| x.0.clone())
}

pub fn random_params(r: &mut ChaCha8Rng) -> MserParams {
    MserParams {
        delta: r.random_range(1..=6),
        min_area: r.random_range(1..=12),
        max_area_fraction: r.random_range(0.2..=1.0),
        max_variation: r.random_range(0.1..=2.0),
        both_polarities: true,
    }
}

pub fn fv(values: Vec<f64>) -> stp_core::FeatureVector {
    stp_core::FeatureVector {
        values,
        descriptor_id: "test".into(),
    }
}

/// Kernel written out from its formula.
pub fn gram(kernel: &stp_core::KernelSpec, x: &[Vec<f64>]) -> Vec<f64> {
    let n = x.len();
    let mut k = vec![0.0; n * n];
    for i in 0..n {
        for j in 0..n {
            let dot: f64 = x[i].iter().zip(&x[j]).map(|(a, b)| a * b).sum();
            let sq: f64 = x[i].iter().zip(&x[j]).map(|(a, b)| (a - b).powi(2)).sum();
            k[i * n + j] = match kernel.kind {
                stp_core::svm::KernelKind::Linear => dot,
                stp_core::svm::KernelKind::Rbf => (-kernel.gamma * sq).exp(),
                stp_core::svm::KernelKind::Polynomial => {
                    (kernel.gamma * dot + kernel.coef0).powi(kernel.degree as i32)
                }
            };
        }
    }
    k
}

pub struct Dataset {
    pub x: Vec<Vec<f64>>,
    pub y: Vec<i8>,
}

pub fn random_dataset(r: &mut ChaCha8Rng) -> Dataset {
    let n = r.random_range(6..=50);
    let dim = r.random_range(2..=5);
    let overlap = r.random_range(0.0..2.0);
    let mut x = Vec::new();
    let mut y = Vec::new();
    for i in 0..n {
        let label: i8 = if i % 2 == 0 { 1 } else { -1 };
        let shift = label as f64 * (2.0 - overlap);
        x.push(
            (0..dim)
                .map(|d| r.random_range(-1.0..1.0) + if d == 0 { shift } else { 0.0 })
                .collect(),
        );
        y.push(label);
    }
    Dataset { x, y }
}

pub fn kernels(dim: usize) -> [stp_core::KernelSpec; 3] {
    let g = 1.0 / dim as f64;
    [
        stp_core::KernelSpec::linear(),
        stp_core::KernelSpec::rbf(g),
        stp_core::KernelSpec::polynomial(3, g, 1.0),
    ]
}
