use serde::{Deserialize, Serialize};

use super::FeatureVector;
use crate::error::{Error, Result};
use crate::imaging::{resize_gray, Dims, GrayImage, Patch};

/// Canvas every text line is normalized to before line-level HOG.
pub const LINE_CANVAS: Dims = Dims {
    height: 32,
    width: 128,
};

const L2HYS_CLIP: f64 = 0.2;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct HogParams {
    pub cell_size: usize,
    /// Cells per block side; blocks advance one cell at a time.
    pub block_size: usize,
    pub bins: usize,
    /// Orientation over 0..360 instead of 0..180.
    pub signed: bool,
}

impl Default for HogParams {
    fn default() -> Self {
        HogParams {
            cell_size: 4,
            block_size: 2,
            bins: 9,
            signed: false,
        }
    }
}

impl HogParams {
    pub fn with_cell(cell_size: usize) -> Self {
        HogParams {
            cell_size,
            ..HogParams::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.cell_size == 0 || self.block_size == 0 || self.bins == 0 {
            return Err(Error::Config(
                "hog cell_size, block_size and bins must be positive".into(),
            ));
        }
        Ok(())
    }

    /// Cells along one side after padding.
    fn cells(&self, len: usize) -> usize {
        len.div_ceil(self.cell_size).max(self.block_size)
    }

    /// Descriptor length for a patch of the given size.
    pub fn descriptor_len(&self, dims: Dims) -> usize {
        let by = self.cells(dims.height) + 1 - self.block_size;
        let bx = self.cells(dims.width) + 1 - self.block_size;
        by * bx * self.block_size * self.block_size * self.bins
    }

    pub fn descriptor_id(&self, dims: Dims) -> String {
        let mut id = format!("hog:c{}:{}", self.cell_size, dims);
        if (self.block_size, self.bins, self.signed) != (2, 9, false) {
            id.push_str(&format!(
                ":b{}:o{}{}",
                self.block_size,
                self.bins,
                if self.signed { "s" } else { "" }
            ));
        }
        id
    }
}

/// HOG descriptor of a patch (RGB patches are converted to luma first).
///
/// The patch is padded by edge replication on the bottom and right to a whole
/// number of cells, and to at least one block.
pub fn hog(p: &Patch, params: &HogParams) -> Result<FeatureVector> {
    params.validate()?;
    let gray = p.to_gray();
    let values = hog_values(&gray, params);
    Ok(FeatureVector {
        values,
        descriptor_id: params.descriptor_id(p.dims()),
    })
}

fn hog_values(img: &GrayImage, params: &HogParams) -> Vec<f64> {
    let cs = params.cell_size;
    let (cy, cx) = (params.cells(img.height()), params.cells(img.width()));
    let (h, w) = (cy * cs, cx * cs);
    let src = img.as_slice();
    let iw = img.width();
    let px =
        |r: usize, c: usize| -> f64 { src[r.min(img.height() - 1) * iw + c.min(iw - 1)] as f64 };

    let range = if params.signed { 360.0 } else { 180.0 };
    let bin_width = range / params.bins as f64;
    let mut hist = vec![0.0f64; cy * cx * params.bins];
    for r in 0..h {
        for c in 0..w {
            let gx = px(r, c + 1) - px(r, c.saturating_sub(1));
            let gy = px(r + 1, c) - px(r.saturating_sub(1), c);
            if gx == 0.0 && gy == 0.0 {
                continue;
            }
            let mag = gx.hypot(gy);
            let angle = gy.atan2(gx).to_degrees().rem_euclid(range);
            let pos = angle / bin_width;
            let lo = pos.floor();
            let frac = pos - lo;
            let lo = (lo as usize) % params.bins;
            let hi = (lo + 1) % params.bins;
            let cell = &mut hist[((r / cs) * cx + c / cs) * params.bins..][..params.bins];
            cell[lo] += mag * (1.0 - frac);
            cell[hi] += mag * frac;
        }
    }

    let bs = params.block_size;
    let block_len = bs * bs * params.bins;
    let mut out = Vec::with_capacity(params.descriptor_len(img.dims()));
    let mut block = vec![0.0; block_len];
    for by in 0..=cy - bs {
        for bx in 0..=cx - bs {
            let mut k = 0;
            for dy in 0..bs {
                for dx in 0..bs {
                    let at = ((by + dy) * cx + bx + dx) * params.bins;
                    block[k..k + params.bins].copy_from_slice(&hist[at..at + params.bins]);
                    k += params.bins;
                }
            }
            l2_hys(&mut block);
            out.extend_from_slice(&block);
        }
    }
    out
}

fn normalize(v: &mut [f64]) {
    let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    if norm > 0.0 {
        v.iter_mut().for_each(|x| *x /= norm);
    }
}

fn l2_hys(v: &mut [f64]) {
    normalize(v);
    v.iter_mut().for_each(|x| *x = x.min(L2HYS_CLIP));
    normalize(v);
}

/// Resize a line crop to the fixed line canvas: height 32, width scaled
/// proportionally, then centre-cropped or right-padded (edge replication) to
/// width 128.
pub fn line_canvas(p: &Patch) -> Result<GrayImage> {
    let gray = p.to_gray();
    let scaled_w =
        ((gray.width() as f64 * LINE_CANVAS.height as f64 / gray.height() as f64).round() as usize)
            .max(1);
    let scaled = resize_gray(&gray, Dims::new(LINE_CANVAS.height, scaled_w))?;
    let offset = scaled_w.saturating_sub(LINE_CANVAS.width) / 2;
    GrayImage::from_fn(LINE_CANVAS.height, LINE_CANVAS.width, |r, c| {
        scaled.get(r, (c + offset).min(scaled_w - 1))
    })
}

/// HOG of a text-line crop normalized onto the line canvas.
pub fn line_hog(p: &Patch, params: &HogParams) -> Result<FeatureVector> {
    params.validate()?;
    let canvas = line_canvas(p)?;
    Ok(FeatureVector {
        values: hog_values(&canvas, params),
        descriptor_id: line_descriptor_id(params),
    })
}

pub fn line_descriptor_id(params: &HogParams) -> String {
    format!("hog-line{}", &params.descriptor_id(LINE_CANVAS)[3..])
}

#[cfg(test)]
mod tests {
    use super::*;

    fn gray_patch(h: usize, w: usize, f: impl FnMut(usize, usize) -> u8) -> Patch {
        Patch::from_gray(&GrayImage::from_fn(h, w, f).unwrap())
    }

    #[test]
    fn constant_patch_is_all_zero() {
        let f = hog(&gray_patch(40, 36, |_, _| 77), &HogParams::default()).unwrap();
        assert_eq!(f.values.len(), 9 * 8 * 36);
        assert!(f.values.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn vertical_edge_votes_only_bin_zero() {
        let p = gray_patch(16, 16, |_, c| if c < 8 { 0 } else { 255 });
        let params = HogParams::default();
        let f = hog(&p, &params).unwrap();
        for (i, v) in f.values.iter().enumerate() {
            if i % 9 != 0 {
                assert_eq!(*v, 0.0, "index {i}");
            }
        }
        // cells straddling the edge column carry energy, all identical
        let nonzero: Vec<f64> = f.values.iter().copied().filter(|&v| v > 0.0).collect();
        assert!(!nonzero.is_empty());
    }

    #[test]
    fn id_and_length() {
        let params = HogParams::with_cell(8);
        let dims = Dims::new(46, 42);
        let f = hog(&gray_patch(46, 42, |r, c| (r * 5 + c * 3) as u8), &params).unwrap();
        assert_eq!(f.values.len(), params.descriptor_len(dims));
        assert_eq!(f.descriptor_id, "hog:c8:46x42");
        assert_eq!(
            line_descriptor_id(&HogParams::default()),
            "hog-line:c4:32x128"
        );
    }

    #[test]
    fn tiny_patch_is_padded_to_a_block() {
        let params = HogParams::with_cell(12);
        let f = hog(&gray_patch(5, 7, |r, c| (r * c) as u8), &params).unwrap();
        assert_eq!(f.values.len(), 36);
    }

    #[test]
    fn line_canvas_shapes() {
        let wide = gray_patch(16, 200, |_, c| c as u8);
        let canvas = line_canvas(&wide).unwrap();
        assert_eq!(canvas.dims(), LINE_CANVAS);
        let narrow = gray_patch(64, 64, |_, c| (c * 4) as u8);
        let canvas = line_canvas(&narrow).unwrap();
        // scaled to 32x32, replicated rightwards
        assert_eq!(canvas.get(5, 127), canvas.get(5, 31));
        let f = line_hog(&narrow, &HogParams::default()).unwrap();
        assert_eq!(f.values.len(), 7 * 31 * 36);
    }
}
