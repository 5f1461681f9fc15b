//! Axis-aligned integer rectangles and the overlap ratio used for duplicate
//! suppression, matching, and negative sampling.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Axis-aligned rectangle in pixel units, stored height-first like every
/// other dimension pair in this crate.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Rect {
    pub top: i64,
    pub left: i64,
    pub height: i64,
    pub width: i64,
}

impl Rect {
    pub const fn new(top: i64, left: i64, height: i64, width: i64) -> Self {
        Rect {
            top,
            left,
            height,
            width,
        }
    }

    /// Smallest rectangle covering the inclusive corner coordinates.
    pub fn from_corners(top: i64, left: i64, bottom_incl: i64, right_incl: i64) -> Self {
        Rect::new(top, left, bottom_incl - top + 1, right_incl - left + 1)
    }

    #[inline]
    pub fn bottom(&self) -> i64 {
        self.top + self.height
    }

    #[inline]
    pub fn right(&self) -> i64 {
        self.left + self.width
    }

    #[inline]
    pub fn area(&self) -> i64 {
        self.height.max(0) * self.width.max(0)
    }

    pub fn is_degenerate(&self) -> bool {
        self.height <= 0 || self.width <= 0
    }

    pub fn intersection(&self, other: &Rect) -> Option<Rect> {
        let top = self.top.max(other.top);
        let left = self.left.max(other.left);
        let bottom = self.bottom().min(other.bottom());
        let right = self.right().min(other.right());
        (bottom > top && right > left).then(|| Rect::new(top, left, bottom - top, right - left))
    }

    pub fn intersection_area(&self, other: &Rect) -> i64 {
        self.intersection(other).map_or(0, |r| r.area())
    }

    pub fn union_bbox(&self, other: &Rect) -> Rect {
        let top = self.top.min(other.top);
        let left = self.left.min(other.left);
        let bottom = self.bottom().max(other.bottom());
        let right = self.right().max(other.right());
        Rect::new(top, left, bottom - top, right - left)
    }

    /// True when `other` lies entirely inside `self`.
    pub fn contains(&self, other: &Rect) -> bool {
        other.top >= self.top
            && other.left >= self.left
            && other.bottom() <= self.bottom()
            && other.right() <= self.right()
    }

    pub fn translate(&self, dy: i64, dx: i64) -> Rect {
        Rect::new(self.top + dy, self.left + dx, self.height, self.width)
    }

    /// Clip to `[0, height) x [0, width)`; `None` if nothing remains.
    pub fn clamp_to(&self, height: usize, width: usize) -> Option<Rect> {
        self.intersection(&Rect::new(0, 0, height as i64, width as i64))
    }

    pub fn center(&self) -> (f64, f64) {
        (
            self.top as f64 + self.height as f64 / 2.0,
            self.left as f64 + self.width as f64 / 2.0,
        )
    }
}

/// Intersection over union of two rectangles.
///
/// Zero when the rectangles are disjoint; errors on a non-positive side.
pub fn overlap_ratio(a: &Rect, b: &Rect) -> Result<f64> {
    if a.is_degenerate() {
        return Err(Error::DegenerateRect(*a));
    }
    if b.is_degenerate() {
        return Err(Error::DegenerateRect(*b));
    }
    Ok(iou_unchecked(a, b))
}

pub(crate) fn iou_unchecked(a: &Rect, b: &Rect) -> f64 {
    let inter = a.intersection_area(b);
    let union = a.area() + b.area() - inter;
    inter as f64 / union as f64
}
