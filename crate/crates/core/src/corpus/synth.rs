//! Synthetic scenes with cursive-looking pseudo-text lines, clutter, noise
//! and uneven illumination.

use std::path::{Path, PathBuf};

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::patches::image_rng;
use super::{write_manifest, CorpusManifest, ManifestEntry, Split};
use crate::error::{Error, Result};
use crate::imaging::{load_image, to_grayscale, Dims, Image};
use crate::rect::Rect;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SynthConfig {
    pub seed: u64,
    pub count: usize,
    pub canvas: Dims,
    /// Leading fraction of images tagged `train`; the rest are `test`.
    pub train_fraction: f64,
    pub min_lines: usize,
    pub max_lines: usize,
    /// Range of text line heights in pixels.
    pub min_line_height: usize,
    pub max_line_height: usize,
    /// Scales the number of clutter shapes per image (0 disables clutter).
    pub distractor_density: f64,
    /// Standard deviation of additive Gaussian noise, in gray levels.
    pub noise_sigma: f64,
    /// Largest relative brightness change across the image.
    pub illumination: f64,
    /// Optional directory of glyph PNGs (dark ink on light paper) used in
    /// place of generated pseudo-glyphs.
    pub glyph_dir: Option<PathBuf>,
}

impl Default for SynthConfig {
    fn default() -> Self {
        SynthConfig {
            seed: 0,
            count: 100,
            canvas: Dims::new(240, 320),
            train_fraction: 2.0 / 3.0,
            min_lines: 1,
            max_lines: 3,
            min_line_height: 18,
            max_line_height: 30,
            distractor_density: 0.5,
            noise_sigma: 6.0,
            illumination: 0.25,
            glyph_dir: None,
        }
    }
}

/// Most distractors placed in one image at full density.
const MAX_DISTRACTORS: f64 = 8.0;

impl SynthConfig {
    pub fn validate(&self) -> Result<()> {
        let fail = |m: &str| Err(Error::Config(format!("synth: {m}")));
        if self.count == 0 {
            return fail("count must be at least 1");
        }
        if !(0.0..=1.0).contains(&self.distractor_density) {
            return fail("distractor_density must be in [0, 1]");
        }
        if !(0.0..=1.0).contains(&self.train_fraction) {
            return fail("train_fraction must be in [0, 1]");
        }
        if !(0.0..1.0).contains(&self.illumination) || self.noise_sigma < 0.0 {
            return fail("illumination must be in [0, 1) and noise_sigma non-negative");
        }
        if self.min_lines == 0 || self.min_lines > self.max_lines {
            return fail("need 1 <= min_lines <= max_lines");
        }
        if self.min_line_height < 8 || self.min_line_height > self.max_line_height {
            return fail("need 8 <= min_line_height <= max_line_height");
        }
        if self.canvas.height < 4 * self.max_line_height
            || self.canvas.width < 8 * self.max_line_height
        {
            return fail("canvas too small for the line height range");
        }
        Ok(())
    }

    pub fn train_count(&self) -> usize {
        ((self.count as f64 * self.train_fraction) + 1e-9).floor() as usize
    }
}

/// Binary ink raster.
#[derive(Debug, Clone)]
struct Mask {
    h: usize,
    w: usize,
    data: Vec<bool>,
}

impl Mask {
    fn new(h: usize, w: usize) -> Self {
        Mask {
            h,
            w,
            data: vec![false; h * w],
        }
    }

    fn get(&self, r: i64, c: i64) -> bool {
        r >= 0
            && c >= 0
            && (r as usize) < self.h
            && (c as usize) < self.w
            && self.data[r as usize * self.w + c as usize]
    }

    fn set(&mut self, r: i64, c: i64) {
        if r >= 0 && c >= 0 && (r as usize) < self.h && (c as usize) < self.w {
            self.data[r as usize * self.w + c as usize] = true;
        }
    }

    /// Round-capped segment: every cell whose centre lies within `radius`
    /// of the segment.
    fn stroke(&mut self, (y0, x0): (f64, f64), (y1, x1): (f64, f64), radius: f64) {
        let (dy, dx) = (y1 - y0, x1 - x0);
        let len2 = dy * dy + dx * dx;
        let rmin = (y0.min(y1) - radius).floor() as i64;
        let rmax = (y0.max(y1) + radius).ceil() as i64;
        let cmin = (x0.min(x1) - radius).floor() as i64;
        let cmax = (x0.max(x1) + radius).ceil() as i64;
        for r in rmin..=rmax {
            for c in cmin..=cmax {
                let (py, px) = (r as f64 + 0.5, c as f64 + 0.5);
                let t = if len2 > 0.0 {
                    (((py - y0) * dy + (px - x0) * dx) / len2).clamp(0.0, 1.0)
                } else {
                    0.0
                };
                let (qy, qx) = (y0 + t * dy - py, x0 + t * dx - px);
                if qy * qy + qx * qx <= radius * radius {
                    self.set(r, c);
                }
            }
        }
    }

    fn disc(&mut self, (cy, cx): (f64, f64), radius: f64) {
        self.stroke((cy, cx), (cy, cx), radius);
    }

    /// Tight bounds `(top, left, bottom, right)` (exclusive ends).
    fn bounds(&self) -> Option<(usize, usize, usize, usize)> {
        let mut b: Option<(usize, usize, usize, usize)> = None;
        for r in 0..self.h {
            for c in 0..self.w {
                if self.data[r * self.w + c] {
                    b = Some(match b {
                        None => (r, c, r + 1, c + 1),
                        Some((t, l, bo, ri)) => (t.min(r), l.min(c), bo.max(r + 1), ri.max(c + 1)),
                    });
                }
            }
        }
        b
    }

    fn crop_tight(&self) -> Option<Mask> {
        let (t, l, b, r) = self.bounds()?;
        let mut out = Mask::new(b - t, r - l);
        for y in t..b {
            for x in l..r {
                out.data[(y - t) * out.w + x - l] = self.data[y * self.w + x];
            }
        }
        Some(out)
    }

    /// True if any ink lies within `gap` cells of the disc footprint.
    fn near(&self, (cy, cx): (f64, f64), radius: f64, gap: f64) -> bool {
        let reach = radius + gap;
        let rmin = (cy - reach).floor() as i64;
        let rmax = (cy + reach).ceil() as i64;
        let cmin = (cx - reach).floor() as i64;
        let cmax = (cx + reach).ceil() as i64;
        (rmin..=rmax).any(|r| {
            (cmin..=cmax).any(|c| {
                let (py, px) = (r as f64 + 0.5 - cy, c as f64 + 0.5 - cx);
                py * py + px * px <= reach * reach && self.get(r, c)
            })
        })
    }
}

/// One connected pseudo-ligature: a baseline stroke with risers and an
/// optional descending tail, height about `hl`.
fn pseudo_ligature(rng: &mut ChaCha8Rng, hl: f64, radius: f64) -> Mask {
    let wl = hl * rng.random_range(0.4..0.8);
    let pad = 2.0;
    let mut m = Mask::new(
        (hl + 2.0 * pad).ceil() as usize + 1,
        (wl + 2.0 * pad).ceil() as usize + 1,
    );
    let yb = pad + 0.72 * hl;
    let (x0, x1) = (pad + radius, pad + wl - radius);
    m.stroke((yb, x0), (yb, x1), radius);
    let risers = if wl > 6.0 * radius {
        rng.random_range(1..=3)
    } else {
        1
    };
    for k in 0..risers {
        let x = if k == 0 {
            if rng.random_bool(0.5) {
                x0
            } else {
                x1
            }
        } else {
            rng.random_range(x0..=x1)
        };
        let top = if k == 0 {
            pad + radius
        } else {
            pad + hl * rng.random_range(0.2..0.5)
        };
        m.stroke((yb, x), (top, x), radius);
    }
    if rng.random_bool(0.45) {
        let bottom = pad + hl - radius;
        let mid = (bottom, x1 - 0.45 * wl);
        m.stroke((yb, x1), mid, radius);
        m.stroke(mid, (bottom - 0.15 * hl, x0), radius);
    } else if rng.random_bool(0.3) {
        m.stroke((yb - 0.3 * hl, x0), (yb - 0.05 * hl, x1), radius);
    }
    m
}

/// A glyph bitmap scaled (nearest neighbour) to height `hl`.
fn scaled_glyph(glyph: &Mask, hl: f64) -> Mask {
    let scale = hl / glyph.h as f64;
    let (h, w) = (
        (glyph.h as f64 * scale).round().max(1.0) as usize,
        (glyph.w as f64 * scale).round().max(1.0) as usize,
    );
    let mut m = Mask::new(h, w);
    for r in 0..h {
        for c in 0..w {
            let sr = ((r as f64 + 0.5) / scale) as usize;
            let sc = ((c as f64 + 0.5) / scale) as usize;
            m.data[r * w + c] = glyph.data[sr.min(glyph.h - 1) * glyph.w + sc.min(glyph.w - 1)];
        }
    }
    m
}

fn load_glyphs(dir: &Path) -> Result<Vec<Mask>> {
    let mut paths: Vec<PathBuf> = std::fs::read_dir(dir)
        .map_err(|e| Error::io(dir, e))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|x| x.eq_ignore_ascii_case("png")))
        .collect();
    paths.sort();
    let mut out = Vec::new();
    for p in paths {
        let gray = to_grayscale(&load_image(&p)?);
        let mut m = Mask::new(gray.height(), gray.width());
        for (d, &v) in m.data.iter_mut().zip(gray.as_slice()) {
            *d = v < 128;
        }
        if let Some(m) = m.crop_tight() {
            out.push(m);
        }
    }
    if out.is_empty() {
        return Err(Error::InsufficientSamples(format!(
            "no glyph PNGs in {}",
            dir.display()
        )));
    }
    Ok(out)
}

/// A text line laid out at the origin: ink mask plus line height.
fn layout_line(rng: &mut ChaCha8Rng, height: usize, max_width: usize, glyphs: &[Mask]) -> Mask {
    let h = height as f64;
    let radius = (h / 12.0).max(1.5);
    let n_target = rng.random_range(3..=7);
    let pad = (h * 0.5).ceil() as usize;
    let mut line = Mask::new(height + 2 * pad, max_width);
    let baseline = pad as f64 + 0.72 * h;
    let mut x = 0.0f64;
    for _ in 0..n_target {
        let hl = h * rng.random_range(0.85..1.0);
        let glyph = if glyphs.is_empty() {
            pseudo_ligature(rng, hl, radius)
        } else {
            scaled_glyph(&glyphs[rng.random_range(0..glyphs.len())], hl)
        };
        let Some(glyph) = glyph.crop_tight() else {
            continue;
        };
        if x as usize + glyph.w >= max_width {
            break;
        }
        // align the glyph baseline (0.72 of its nominal height) with the line's
        let top = (baseline - 0.72 * hl - 2.0 + radius).round().max(0.0) as i64;
        let top = top.min((line.h - glyph.h) as i64);
        let left = x.round() as i64;
        for r in 0..glyph.h {
            for c in 0..glyph.w {
                if glyph.data[r * glyph.w + c] {
                    line.set(top + r as i64, left + c as i64);
                }
            }
        }
        // detached diacritic dot below the baseline or above the body
        if rng.random_bool(0.5) {
            let dot_r = (radius + 0.5).min(2.5);
            let cx = left as f64 + glyph.w as f64 * rng.random_range(0.25..0.75);
            let cy = if rng.random_bool(0.5) {
                baseline + radius + dot_r + 2.5
            } else {
                top as f64 + glyph.h as f64 * 0.35
            };
            if !line.near((cy, cx), dot_r, 2.0) {
                line.disc((cy, cx), dot_r);
            }
        }
        x += glyph.w as f64 + h * rng.random_range(0.1..0.25);
    }
    line.crop_tight().unwrap_or_else(|| Mask::new(0, 0))
}

#[derive(Debug, Clone, Copy)]
enum Shape {
    Rect {
        top: f64,
        left: f64,
        h: f64,
        w: f64,
    },
    Disc {
        cy: f64,
        cx: f64,
        r: f64,
    },
    Ring {
        cy: f64,
        cx: f64,
        r: f64,
        t: f64,
    },
    Bricks {
        top: f64,
        left: f64,
        h: f64,
        w: f64,
        brick_h: f64,
        brick_w: f64,
    },
    Bar {
        y0: f64,
        x0: f64,
        y1: f64,
        x1: f64,
        t: f64,
    },
}

impl Shape {
    fn random(rng: &mut ChaCha8Rng, canvas: Dims) -> Shape {
        let (ch, cw) = (canvas.height as f64, canvas.width as f64);
        match rng.random_range(0..5) {
            0 => Shape::Rect {
                top: rng.random_range(0.0..ch - 12.0),
                left: rng.random_range(0.0..cw - 12.0),
                h: rng.random_range(10.0..60.0),
                w: rng.random_range(10.0..60.0),
            },
            1 => Shape::Disc {
                cy: rng.random_range(0.0..ch),
                cx: rng.random_range(0.0..cw),
                r: rng.random_range(6.0..25.0),
            },
            2 => Shape::Ring {
                cy: rng.random_range(0.0..ch),
                cx: rng.random_range(0.0..cw),
                r: rng.random_range(8.0..25.0),
                t: rng.random_range(2.0..4.0),
            },
            3 => Shape::Bricks {
                top: rng.random_range(0.0..ch - 30.0),
                left: rng.random_range(0.0..cw - 30.0),
                h: rng.random_range(30.0..80.0),
                w: rng.random_range(30.0..80.0),
                brick_h: rng.random_range(6.0..12.0),
                brick_w: rng.random_range(12.0..24.0),
            },
            _ => {
                let (y0, x0) = (rng.random_range(0.0..ch), rng.random_range(0.0..cw));
                let len = rng.random_range(40.0..150.0);
                let angle: f64 = [0.0, 90.0, rng.random_range(0.0..180.0)][rng.random_range(0..3)];
                let (s, c) = angle.to_radians().sin_cos();
                Shape::Bar {
                    y0,
                    x0,
                    y1: y0 + len * s,
                    x1: x0 + len * c,
                    t: rng.random_range(2.0..4.0),
                }
            }
        }
    }

    /// Bounding box, unclamped.
    fn bounds(&self) -> Rect {
        let rect = |t: f64, l: f64, b: f64, r: f64| {
            let (t, l) = (t.floor() as i64, l.floor() as i64);
            Rect::new(t, l, b.ceil() as i64 - t, r.ceil() as i64 - l)
        };
        match *self {
            Shape::Rect { top, left, h, w }
            | Shape::Bricks {
                top, left, h, w, ..
            } => rect(top, left, top + h, left + w),
            Shape::Disc { cy, cx, r } | Shape::Ring { cy, cx, r, .. } => {
                rect(cy - r, cx - r, cy + r, cx + r)
            }
            Shape::Bar { y0, x0, y1, x1, t } => rect(
                y0.min(y1) - t,
                x0.min(x1) - t,
                y0.max(y1) + t,
                x0.max(x1) + t,
            ),
        }
    }

    /// Paint value at a pixel centre: `Some(true)` primary colour,
    /// `Some(false)` secondary (brick mortar), `None` untouched.
    fn paint(&self, py: f64, px: f64) -> Option<bool> {
        match *self {
            Shape::Rect { top, left, h, w } => {
                (py >= top && py < top + h && px >= left && px < left + w).then_some(true)
            }
            Shape::Disc { cy, cx, r } => {
                ((py - cy).powi(2) + (px - cx).powi(2) <= r * r).then_some(true)
            }
            Shape::Ring { cy, cx, r, t } => {
                let d = ((py - cy).powi(2) + (px - cx).powi(2)).sqrt();
                (d <= r && d >= r - t).then_some(true)
            }
            Shape::Bricks {
                top,
                left,
                h,
                w,
                brick_h,
                brick_w,
            } => {
                if !(py >= top && py < top + h && px >= left && px < left + w) {
                    return None;
                }
                let row = ((py - top) / brick_h).floor();
                let shift = if row as i64 % 2 == 0 {
                    0.0
                } else {
                    brick_w / 2.0
                };
                let in_row = (py - top) - row * brick_h;
                let in_col = (px - left + shift).rem_euclid(brick_w);
                Some(in_row >= 2.0 && in_col >= 2.0)
            }
            Shape::Bar { y0, x0, y1, x1, t } => {
                let (dy, dx) = (y1 - y0, x1 - x0);
                let len2 = dy * dy + dx * dx;
                let s = (((py - y0) * dy + (px - x0) * dx) / len2).clamp(0.0, 1.0);
                let (qy, qx) = (y0 + s * dy - py, x0 + s * dx - px);
                (qy * qy + qx * qx <= t * t / 4.0).then_some(true)
            }
        }
    }
}

fn random_color(rng: &mut ChaCha8Rng, lo: f64, hi: f64) -> [f64; 3] {
    let base = rng.random_range(lo..hi);
    [0, 1, 2].map(|_| (base + rng.random_range(-25.0..25.0)).clamp(0.0, 255.0))
}

/// Render scene `index` of the corpus. Returns the image and one tight
/// rectangle per text line.
pub fn render_scene(cfg: &SynthConfig, index: usize) -> Result<(Image, Vec<Rect>)> {
    let glyphs = match &cfg.glyph_dir {
        Some(dir) => load_glyphs(dir)?,
        None => Vec::new(),
    };
    Ok(render_with(cfg, index, &glyphs))
}

fn render_with(cfg: &SynthConfig, index: usize, glyphs: &[Mask]) -> (Image, Vec<Rect>) {
    let mut rng = image_rng(cfg.seed, index);
    let (h, w) = (cfg.canvas.height, cfg.canvas.width);
    let dark_text = rng.random_bool(0.7);
    let (bg, text_range) = if dark_text {
        (random_color(&mut rng, 160.0, 230.0), (15.0, 80.0))
    } else {
        (random_color(&mut rng, 25.0, 90.0), (175.0, 240.0))
    };
    let mut canvas: Vec<[f64; 3]> = vec![bg; h * w];

    // text lines: placed first so clutter can keep clear of them
    let n_lines = rng.random_range(cfg.min_lines..=cfg.max_lines);
    let mut placed: Vec<(Rect, Mask, [f64; 3], usize)> = Vec::new();
    for _ in 0..n_lines {
        let height = rng.random_range(cfg.min_line_height..=cfg.max_line_height);
        let margin = height;
        let line = layout_line(&mut rng, height, w - 2 * margin, glyphs);
        if line.h == 0 || line.h + 2 * margin > h {
            continue;
        }
        let color = random_color(&mut rng, text_range.0, text_range.1);
        for _ in 0..50 {
            let top = rng.random_range(margin..=h - margin - line.h) as i64;
            let left = rng.random_range(margin..=w - margin - line.w) as i64;
            let rect = Rect::new(top, left, line.h as i64, line.w as i64);
            // keep at least a line height of clear space between lines
            let clear = placed.iter().all(|(other, _, _, oh)| {
                let pad = height.max(*oh) as i64;
                rect.intersection(&Rect::new(
                    other.top - pad,
                    other.left - pad,
                    other.height + 2 * pad,
                    other.width + 2 * pad,
                ))
                .is_none()
            });
            if clear {
                placed.push((rect, line, color, height));
                break;
            }
        }
    }

    let n_shapes = (cfg.distractor_density * MAX_DISTRACTORS).round() as usize;
    for _ in 0..n_shapes {
        let color = random_color(&mut rng, 0.0, 255.0);
        let mortar = random_color(&mut rng, 0.0, 255.0);
        for _ in 0..30 {
            let shape = Shape::random(&mut rng, cfg.canvas);
            let b = shape.bounds();
            let clear = placed.iter().all(|(r, _, _, lh)| {
                let pad = 2 * *lh as i64;
                b.intersection(&Rect::new(
                    r.top - pad / 2,
                    r.left - pad,
                    r.height + pad,
                    r.width + 2 * pad,
                ))
                .is_none()
            });
            if !clear {
                continue;
            }
            if let Some(area) = b.clamp_to(h, w) {
                for r in area.top..area.bottom() {
                    for c in area.left..area.right() {
                        match shape.paint(r as f64 + 0.5, c as f64 + 0.5) {
                            Some(true) => canvas[r as usize * w + c as usize] = color,
                            Some(false) => canvas[r as usize * w + c as usize] = mortar,
                            None => {}
                        }
                    }
                }
            }
            break;
        }
    }

    let mut rects = Vec::new();
    for (rect, line, color, _) in &placed {
        for r in 0..line.h {
            for c in 0..line.w {
                if line.data[r * line.w + c] {
                    canvas[(rect.top as usize + r) * w + rect.left as usize + c] = *color;
                }
            }
        }
        rects.push(*rect);
    }
    rects.sort();

    let strength = rng.random_range(0.0..=cfg.illumination);
    let angle = rng.random_range(0.0..std::f64::consts::TAU);
    let (ay, ax) = angle.sin_cos();
    let noise = Normal::new(0.0, cfg.noise_sigma.max(f64::MIN_POSITIVE)).expect("valid sigma");
    let mut pixels = Vec::with_capacity(h * w);
    for r in 0..h {
        for c in 0..w {
            let gain = 1.0
                + strength * (ay * (r as f64 / h as f64 - 0.5) + ax * (c as f64 / w as f64 - 0.5));
            let px = canvas[r * w + c].map(|v| {
                let n = if cfg.noise_sigma > 0.0 {
                    noise.sample(&mut rng)
                } else {
                    0.0
                };
                (v * gain + n).round().clamp(0.0, 255.0) as u8
            });
            pixels.push(px);
        }
    }
    let img = Image::from_fn(h, w, |r, c| pixels[r * w + c]).expect("canvas is nonempty");
    (img, rects)
}

/// Render the corpus into `out_dir/images/NNNN.png` and write
/// `out_dir/manifest.jsonl`.
pub fn generate_synthetic(cfg: &SynthConfig, out_dir: &Path) -> Result<CorpusManifest> {
    cfg.validate()?;
    let glyphs = match &cfg.glyph_dir {
        Some(dir) => load_glyphs(dir)?,
        None => Vec::new(),
    };
    let images = out_dir.join("images");
    std::fs::create_dir_all(&images).map_err(|e| Error::io(&images, e))?;
    let digits = cfg.count.saturating_sub(1).to_string().len().max(4);
    let n_train = cfg.train_count();
    let entries = (0..cfg.count)
        .into_par_iter()
        .map(|i| {
            let (img, rects) = render_with(cfg, i, &glyphs);
            let rel = format!("images/{i:0digits$}.png");
            img.save_png(&out_dir.join(&rel))?;
            Ok(ManifestEntry {
                image: rel,
                split: Some(if i < n_train {
                    Split::Train
                } else {
                    Split::Test
                }),
                rects,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let m = CorpusManifest {
        root: out_dir.to_path_buf(),
        entries,
    };
    write_manifest(&m, &out_dir.join("manifest.jsonl"))?;
    Ok(m)
}
