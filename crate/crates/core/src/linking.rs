//! Grouping of character candidates into horizontal text lines, and
//! line-level verification.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::features::{line_hog, Extractor, FeatureVector, HogParams};
use crate::imaging::{to_grayscale, Image, Patch};
use crate::mser::Region;
use crate::rect::Rect;
use crate::svm::{predict, SvmModel, TEXT};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TextLine {
    /// Member regions ordered left to right.
    pub members: Vec<Region>,
    pub bbox: Rect,
    pub verified: bool,
    /// Line classifier margin, set by verification.
    pub score: f64,
}

/// Compact form of a line for JSON output.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LineSummary {
    pub bbox: Rect,
    pub n_members: usize,
    pub verified: bool,
    pub score: f64,
}

impl TextLine {
    pub fn summary(&self) -> LineSummary {
        LineSummary {
            bbox: self.bbox,
            n_members: self.members.len(),
            verified: self.verified,
            score: self.score,
        }
    }
}

/// Two characters belong together when their centroids differ vertically by
/// at most the smaller height and horizontally by at most twice the larger
/// height.
pub fn link_pair(a: &Region, b: &Region) -> bool {
    linked(a.centroid(), a.bbox.height, b.centroid(), b.bbox.height)
}

fn linked((ay, ax): (f64, f64), ha: i64, (by, bx): (f64, f64), hb: i64) -> bool {
    let (ha, hb) = (ha as f64, hb as f64);
    (ay - by).abs() <= ha.min(hb) && (ax - bx).abs() <= 2.0 * ha.max(hb)
}

fn find(parent: &mut [usize], mut i: usize) -> usize {
    while parent[i] != i {
        parent[i] = parent[parent[i]];
        i = parent[i];
    }
    i
}

/// Connected components of the link graph as index lists. Each group is
/// ascending and groups are ordered by their smallest index.
pub fn link_groups(regions: &[Region], keep_singletons: bool) -> Vec<Vec<usize>> {
    let n = regions.len();
    let centroids: Vec<(f64, f64)> = regions.iter().map(Region::centroid).collect();
    let mut parent: Vec<usize> = (0..n).collect();
    for i in 0..n {
        for j in i + 1..n {
            if linked(
                centroids[i],
                regions[i].bbox.height,
                centroids[j],
                regions[j].bbox.height,
            ) {
                let (ri, rj) = (find(&mut parent, i), find(&mut parent, j));
                if ri != rj {
                    parent[ri.max(rj)] = ri.min(rj);
                }
            }
        }
    }
    let mut groups: Vec<Vec<usize>> = Vec::new();
    let mut slot = vec![usize::MAX; n];
    for i in 0..n {
        let root = find(&mut parent, i);
        if slot[root] == usize::MAX {
            slot[root] = groups.len();
            groups.push(Vec::new());
        }
        groups[slot[root]].push(i);
    }
    groups.retain(|g| keep_singletons || g.len() >= 2);
    groups
}

/// Lines from the transitive closure of [`link_pair`]; unlinked regions are
/// dropped. Output is sorted by bounding box (top, then left).
pub fn link_characters(regions: &[Region]) -> Vec<TextLine> {
    link_characters_with(regions, false)
}

pub fn link_characters_with(regions: &[Region], keep_singletons: bool) -> Vec<TextLine> {
    let mut lines: Vec<TextLine> = link_groups(regions, keep_singletons)
        .into_iter()
        .map(|mut g| {
            g.sort_by_key(|&i| (regions[i].bbox.left, regions[i].bbox.top, i));
            let bbox = g
                .iter()
                .map(|&i| regions[i].bbox)
                .reduce(|a, b| a.union_bbox(&b))
                .expect("group is nonempty");
            TextLine {
                members: g.iter().map(|&i| regions[i].clone()).collect(),
                bbox,
                verified: false,
                score: 0.0,
            }
        })
        .collect();
    lines.sort_by_key(|l| (l.bbox.top, l.bbox.left));
    lines
}

/// Line descriptor for a crop, using the model's extractor when it has one.
fn line_features(model: &SvmModel, crop: &Patch) -> Result<FeatureVector> {
    match &model.extractor {
        Some(ex @ Extractor::LineHog { .. }) => ex.extract(crop),
        Some(other) => Err(Error::DescriptorMismatch {
            expected: "hog-line".into(),
            got: other.descriptor_id(),
        }),
        None => line_hog(crop, &HogParams::default()),
    }
}

/// Grayscale crop of a rectangle clamped to the image.
pub fn crop_line(gray: &crate::imaging::GrayImage, bbox: &Rect) -> Result<Patch> {
    let clamped = bbox.clamp_to(gray.height(), gray.width());
    match clamped {
        Some(r) if !r.is_degenerate() => Ok(Patch::from_gray(&gray.crop(&r)?)),
        _ => Err(Error::DegenerateRect(*bbox)),
    }
}

/// Keep the lines the line classifier labels as text, marking them verified
/// with their margin.
pub fn verify_lines(
    lines: &[TextLine],
    img: &Image,
    line_model: &SvmModel,
) -> Result<Vec<TextLine>> {
    let gray = to_grayscale(img);
    let scored = lines
        .par_iter()
        .map(|line| {
            let crop = crop_line(&gray, &line.bbox)?;
            let f = line_features(line_model, &crop)?;
            predict(line_model, &f)
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(lines
        .iter()
        .zip(scored)
        .filter(|(_, (label, _))| *label == TEXT)
        .map(|(line, (_, score))| TextLine {
            verified: true,
            score,
            ..line.clone()
        })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn block(top: u32, left: u32, h: usize, w: usize) -> Region {
        Region::from_mask(&vec![true; h * w], h, w, top, left).unwrap()
    }

    #[test]
    fn rule_arithmetic() {
        // centroids on the same row; heights 20 and 30, so the x limit is 60
        let a = block(10, 0, 20, 10);
        let b50 = block(5, 50, 30, 10);
        let b60 = block(5, 60, 30, 10);
        let b70 = block(5, 70, 30, 10);
        assert_eq!(a.centroid().0, b50.centroid().0);
        assert!(link_pair(&a, &b50));
        assert!(link_pair(&a, &b60));
        assert!(!link_pair(&a, &b70));
        assert!(link_pair(&a, &a));
    }

    #[test]
    fn collinear_glyphs_form_one_line() {
        let rs = vec![block(0, 0, 10, 6), block(0, 15, 10, 6), block(0, 30, 10, 6)];
        let lines = link_characters(&rs);
        assert_eq!(lines.len(), 1);
        assert_eq!(lines[0].members.len(), 3);
        assert_eq!(lines[0].bbox, Rect::new(0, 0, 10, 36));
    }

    #[test]
    fn rows_stay_apart_and_singletons_drop() {
        let rs = vec![
            block(50, 0, 10, 6),
            block(0, 0, 10, 6),
            block(0, 12, 10, 6),
            block(50, 12, 10, 6),
            block(100, 200, 10, 6),
        ];
        let lines = link_characters(&rs);
        assert_eq!(lines.len(), 2);
        assert_eq!(lines[0].bbox.top, 0);
        assert_eq!(lines[1].bbox.top, 50);
        assert_eq!(link_characters_with(&rs, true).len(), 3);
        assert!(link_characters(&[]).is_empty());
    }

    #[test]
    fn members_left_to_right() {
        let rs = vec![block(0, 20, 10, 6), block(0, 0, 10, 6), block(0, 10, 10, 6)];
        let line = &link_characters(&rs)[0];
        let lefts: Vec<i64> = line.members.iter().map(|m| m.bbox.left).collect();
        assert_eq!(lefts, vec![0, 10, 20]);
    }
}
