use std::io::Write;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use super::{CorpusManifest, Split};
use crate::error::{Error, Result};
use crate::imaging::{load_image, resize_patch, Dims, Image, Patch};
use crate::rect::{iou_unchecked, Rect};
use crate::svm::{NON_TEXT, TEXT};

/// Negatives overlap every ground-truth rectangle by less than this.
pub const NEGATIVE_MAX_OVERLAP: f64 = 0.1;
const NEGATIVE_ATTEMPTS: usize = 1000;

#[derive(Debug, Clone, PartialEq)]
pub struct LabeledPatch {
    pub patch: Patch,
    /// `+1` text, `-1` non-text.
    pub label: i8,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct PatchSet {
    pub items: Vec<LabeledPatch>,
    /// Negative samples abandoned because no free location was found.
    pub skipped: usize,
}

impl PatchSet {
    pub fn count(&self, label: i8) -> usize {
        self.items.iter().filter(|p| p.label == label).count()
    }

    pub fn extend(&mut self, other: PatchSet) {
        self.items.extend(other.items);
        self.skipped += other.skipped;
    }

    /// Write PNGs under `text/` and `nontext/` plus a `labels.csv` index.
    pub fn write(&self, dir: &Path) -> Result<()> {
        for sub in ["text", "nontext"] {
            std::fs::create_dir_all(dir.join(sub)).map_err(|e| Error::io(dir.join(sub), e))?;
        }
        let mut index = String::from("path,label\n");
        for (i, item) in self.items.iter().enumerate() {
            let class = if item.label == TEXT {
                "text"
            } else {
                "nontext"
            };
            let rel = format!("{class}/{i:06}.png");
            item.patch.save_png(&dir.join(&rel))?;
            index.push_str(&format!("{rel},{class}\n"));
        }
        let path = dir.join("labels.csv");
        let mut f = std::fs::File::create(&path).map_err(|e| Error::io(&path, e))?;
        f.write_all(index.as_bytes())
            .map_err(|e| Error::io(&path, e))
    }

    pub fn read(dir: &Path) -> Result<PatchSet> {
        let path = dir.join("labels.csv");
        let text = std::fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
        let bad = |line: usize, message: String| Error::Manifest {
            path: path.clone(),
            line,
            message,
        };
        let rows: Vec<(usize, &str, i8)> = text
            .lines()
            .enumerate()
            .skip(1)
            .filter(|(_, l)| !l.trim().is_empty())
            .map(|(i, l)| {
                let (rel, class) = l
                    .rsplit_once(',')
                    .ok_or_else(|| bad(i + 1, "expected `path,label`".into()))?;
                let label = match class.trim() {
                    "text" => TEXT,
                    "nontext" => NON_TEXT,
                    other => return Err(bad(i + 1, format!("unknown label `{other}`"))),
                };
                Ok((i + 1, rel, label))
            })
            .collect::<Result<_>>()?;
        let items = rows
            .par_iter()
            .map(|&(_, rel, label)| {
                let img = load_image(&dir.join(rel))?;
                Ok(LabeledPatch {
                    patch: Patch::from_image(&img),
                    label,
                })
            })
            .collect::<Result<Vec<_>>>()?;
        if let Some(first) = items.first() {
            let dims = first.patch.dims();
            if let Some((pos, p)) = items
                .iter()
                .enumerate()
                .find(|(_, p)| p.patch.dims() != dims)
            {
                return Err(bad(
                    rows[pos].0,
                    format!("patch is {} but the set is {}", p.patch.dims(), dims),
                ));
            }
        }
        Ok(PatchSet { items, skipped: 0 })
    }
}

/// Resized crop of `rect` (clamped to the image); `None` if nothing is left.
pub fn crop_resized(img: &Image, rect: &Rect, dims: Dims) -> Result<Option<Patch>> {
    match rect.clamp_to(img.height(), img.width()) {
        Some(r) if !r.is_degenerate() => Ok(Some(resize_patch(
            &Patch::from_image(&img.crop(&r)?),
            dims,
        )?)),
        _ => Ok(None),
    }
}

/// Per-image random stream derived from a seed and the image index.
pub(crate) fn image_rng(seed: u64, index: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(index as u64);
    rng
}

/// Random rectangle shaped roughly like `dims`, inside an `h x w` image.
pub(crate) fn random_rect(rng: &mut ChaCha8Rng, h: usize, w: usize, dims: Dims) -> Rect {
    let max_h = (3 * dims.height).min(h).max(1);
    let min_h = (dims.height / 2).clamp(1, max_h);
    let rh = rng.random_range(min_h..=max_h);
    let aspect = dims.width as f64 / dims.height as f64 * rng.random_range(0.6..1.6);
    let rw = ((rh as f64 * aspect).round() as usize).clamp(1, w);
    let top = rng.random_range(0..=h - rh);
    let left = rng.random_range(0..=w - rw);
    Rect::new(top as i64, left as i64, rh as i64, rw as i64)
}

/// Ground-truth crops (when `include_gt`) and `neg_per_image` random
/// background crops of one image, resized to `dims`.
pub(crate) fn crop_image_patches(
    img: &Image,
    gt: &[Rect],
    dims: Dims,
    include_gt: bool,
    neg_per_image: usize,
    rng: &mut ChaCha8Rng,
) -> Result<PatchSet> {
    let mut set = PatchSet::default();
    if include_gt {
        for r in gt {
            match crop_resized(img, r, dims)? {
                Some(patch) => set.items.push(LabeledPatch { patch, label: TEXT }),
                None => set.skipped += 1,
            }
        }
    }
    for _ in 0..neg_per_image {
        match random_background(rng, img, gt, dims) {
            Some(r) => {
                let patch = crop_resized(img, &r, dims)?.expect("rect lies inside the image");
                set.items.push(LabeledPatch {
                    patch,
                    label: NON_TEXT,
                });
            }
            None => set.skipped += 1,
        }
    }
    Ok(set)
}

/// Random rectangle shaped like `shape` overlapping no ground truth by
/// [`NEGATIVE_MAX_OVERLAP`] or more.
pub(crate) fn random_background(
    rng: &mut ChaCha8Rng,
    img: &Image,
    gt: &[Rect],
    shape: Dims,
) -> Option<Rect> {
    (0..NEGATIVE_ATTEMPTS).find_map(|_| {
        let r = random_rect(rng, img.height(), img.width(), shape);
        gt.iter()
            .all(|g| iou_unchecked(&r, g) < NEGATIVE_MAX_OVERLAP)
            .then_some(r)
    })
}

/// Ground-truth crops of one split as positives plus `neg_per_image` random
/// crops per image overlapping no ground truth by [`NEGATIVE_MAX_OVERLAP`] or
/// more as negatives, all resized to `dims`.
pub fn crop_patches(
    m: &CorpusManifest,
    split: Option<Split>,
    dims: Dims,
    neg_per_image: usize,
    seed: u64,
) -> Result<PatchSet> {
    let entries: Vec<_> = m.split(split).collect();
    if entries.is_empty() {
        return Err(Error::EmptyInput("manifest split"));
    }
    let per_image = entries
        .par_iter()
        .enumerate()
        .map(|(index, entry)| {
            let img = load_image(&m.image_path(entry))?;
            crop_image_patches(
                &img,
                &entry.rects,
                dims,
                true,
                neg_per_image,
                &mut image_rng(seed, index),
            )
        })
        .collect::<Result<Vec<_>>>()?;
    let mut out = PatchSet::default();
    for set in per_image {
        out.extend(set);
    }
    Ok(out)
}
