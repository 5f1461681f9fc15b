//! Maximally stable extremal regions.
//!
//! [`build_component_tree`] produces the full nesting of extremal regions,
//! [`extract_mser`] selects the stable ones from a single plane, and
//! [`channel_enhanced_mser`] runs the extraction on every color plane and
//! merges near-duplicate detections across planes.

mod channel;
mod extract;
mod tree;

use std::path::Path;

use serde::{Deserialize, Serialize};

pub use channel::{channel_enhanced_mser, is_near_duplicate};
pub use extract::{extract_mser, stable_nodes, MserParams, Stability, StableNode};
pub use tree::{build_component_tree, ComponentTree, Polarity, TreeNode};

use crate::error::{Error, Result};
use crate::imaging::{Channel, GrayImage};
use crate::rect::Rect;

/// A connected set of pixels proposed as a character candidate.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Region {
    /// `(row, col)` coordinates in row-major order.
    pub pixels: Vec<(u32, u32)>,
    pub bbox: Rect,
    pub source_channel: Channel,
    pub polarity: Polarity,
    /// Threshold (in the polarity's working space) where the region was most stable.
    pub level: u8,
    pub stability: f64,
}

/// Lightweight description of a region for JSON export.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegionSummary {
    pub bbox: Rect,
    pub area: usize,
    pub source_channel: Channel,
    pub polarity: Polarity,
}

impl Region {
    /// Build a region from an arbitrary pixel list; sorts and deduplicates.
    pub fn from_pixels(
        mut pixels: Vec<(u32, u32)>,
        source_channel: Channel,
        polarity: Polarity,
    ) -> Result<Region> {
        if pixels.is_empty() {
            return Err(Error::EmptyRegion);
        }
        pixels.sort_unstable();
        pixels.dedup();
        Ok(Region::from_sorted_pixels(
            pixels,
            source_channel,
            polarity,
            0,
            0.0,
        ))
    }

    pub(crate) fn from_sorted_pixels(
        pixels: Vec<(u32, u32)>,
        source_channel: Channel,
        polarity: Polarity,
        level: u8,
        stability: f64,
    ) -> Region {
        let bbox = bounding_rect(&pixels);
        Region {
            pixels,
            bbox,
            source_channel,
            polarity,
            level,
            stability,
        }
    }

    /// Region covering every `true` cell of a row-major mask placed at `(top, left)`.
    pub fn from_mask(
        mask: &[bool],
        height: usize,
        width: usize,
        top: u32,
        left: u32,
    ) -> Result<Region> {
        let pixels = (0..height * width)
            .filter(|&i| mask[i])
            .map(|i| (top + (i / width) as u32, left + (i % width) as u32))
            .collect();
        Region::from_pixels(pixels, Channel::Gray, Polarity::DarkOnLight)
    }

    pub fn area(&self) -> usize {
        self.pixels.len()
    }

    /// Pixel-mass centroid `(row, col)`.
    pub fn centroid(&self) -> (f64, f64) {
        let n = self.pixels.len() as f64;
        let (sr, sc) = self
            .pixels
            .iter()
            .fold((0.0, 0.0), |(a, b), &(r, c)| (a + r as f64, b + c as f64));
        (sr / n, sc / n)
    }

    /// Row-major boolean mask over the bounding box.
    pub fn mask(&self) -> Vec<bool> {
        let (h, w) = (self.bbox.height as usize, self.bbox.width as usize);
        let mut m = vec![false; h * w];
        for &(r, c) in &self.pixels {
            let y = r as usize - self.bbox.top as usize;
            let x = c as usize - self.bbox.left as usize;
            m[y * w + x] = true;
        }
        m
    }

    /// Shifted copy; the shifted pixels must stay at nonnegative coordinates.
    pub fn translate(&self, dy: i64, dx: i64) -> Region {
        debug_assert!(self.bbox.top + dy >= 0 && self.bbox.left + dx >= 0);
        let pixels = self
            .pixels
            .iter()
            .map(|&(r, c)| ((r as i64 + dy) as u32, (c as i64 + dx) as u32))
            .collect();
        Region {
            pixels,
            bbox: self.bbox.translate(dy, dx),
            ..self.clone()
        }
    }

    pub fn summary(&self) -> RegionSummary {
        RegionSummary {
            bbox: self.bbox,
            area: self.area(),
            source_channel: self.source_channel,
            polarity: self.polarity,
        }
    }

    /// Binary mask of the bounding box as an 8-bit PNG (255 = region).
    pub fn save_mask_png(&self, path: &Path) -> Result<()> {
        let (h, w) = (self.bbox.height as usize, self.bbox.width as usize);
        let data = self
            .mask()
            .into_iter()
            .map(|b| if b { 255 } else { 0 })
            .collect();
        GrayImage::new(h, w, data)?.save_png(path)
    }
}

fn bounding_rect(pixels: &[(u32, u32)]) -> Rect {
    let (mut top, mut left, mut bottom, mut right) = (u32::MAX, u32::MAX, 0, 0);
    for &(r, c) in pixels {
        top = top.min(r);
        bottom = bottom.max(r);
        left = left.min(c);
        right = right.max(c);
    }
    Rect::from_corners(top as i64, left as i64, bottom as i64, right as i64)
}
