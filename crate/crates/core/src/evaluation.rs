//! Detection scoring by overlap ratio: one-to-one matching with fallbacks
//! for fragmented and merged detections, then precision, recall and
//! F-measure over a set of images.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rect::{iou_unchecked, Rect};
use crate::svm::f_measure;

/// Minimum overlap ratio (exclusive) for a true positive.
pub const MATCH_THRESHOLD: f64 = 0.5;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum MatchKind {
    OneToOne,
    /// Several detections jointly covering one ground-truth rectangle.
    Fragment,
    /// One detection covering several ground-truth rectangles.
    Merge,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Match {
    pub kind: MatchKind,
    pub detections: Vec<usize>,
    pub ground_truth: Vec<usize>,
    pub overlap: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ImageMatch {
    pub tp: usize,
    pub matches: Vec<Match>,
}

/// Overlap ratio of the union of `a` with the union of `b`, by exact area
/// counting on the compressed grid of rectangle edges.
pub fn union_overlap(a: &[Rect], b: &[Rect]) -> f64 {
    let mut ys: Vec<i64> = a
        .iter()
        .chain(b)
        .flat_map(|r| [r.top, r.bottom()])
        .collect();
    let mut xs: Vec<i64> = a
        .iter()
        .chain(b)
        .flat_map(|r| [r.left, r.right()])
        .collect();
    ys.sort_unstable();
    ys.dedup();
    xs.sort_unstable();
    xs.dedup();
    let covered = |set: &[Rect], y: i64, x: i64| {
        set.iter()
            .any(|r| y >= r.top && y < r.bottom() && x >= r.left && x < r.right())
    };
    let (mut inter, mut union) = (0i64, 0i64);
    for yw in ys.windows(2) {
        for xw in xs.windows(2) {
            let (ina, inb) = (covered(a, yw[0], xw[0]), covered(b, yw[0], xw[0]));
            let cell = (yw[1] - yw[0]) * (xw[1] - xw[0]);
            if ina && inb {
                inter += cell;
            }
            if ina || inb {
                union += cell;
            }
        }
    }
    if union == 0 {
        0.0
    } else {
        inter as f64 / union as f64
    }
}

fn check(rects: &[Rect]) -> Result<()> {
    match rects.iter().find(|r| r.is_degenerate()) {
        Some(r) => Err(Error::DegenerateRect(*r)),
        None => Ok(()),
    }
}

/// Match detections to ground truth for one image.
///
/// 1. Greedy one-to-one: pairs with overlap above the threshold, taken in
///    descending overlap (ties by ground-truth index, then detection
///    rectangle, then detection index).
/// 2. Fragment pass: each unmatched ground-truth rectangle whose unmatched
///    intersecting detections jointly overlap it above the threshold counts
///    one true positive and consumes them.
/// 3. Merge pass: each unmatched detection whose unmatched intersecting
///    ground-truth rectangles jointly overlap it above the threshold counts
///    one true positive per consumed rectangle.
pub fn match_image(detections: &[Rect], gt: &[Rect]) -> Result<ImageMatch> {
    check(detections)?;
    check(gt)?;
    let mut candidates: Vec<(f64, usize, usize)> = Vec::new();
    for (g, gr) in gt.iter().enumerate() {
        for (d, dr) in detections.iter().enumerate() {
            let o = iou_unchecked(dr, gr);
            if o > MATCH_THRESHOLD {
                candidates.push((o, g, d));
            }
        }
    }
    candidates.sort_by(|a, b| {
        b.0.total_cmp(&a.0)
            .then(a.1.cmp(&b.1))
            .then(detections[a.2].cmp(&detections[b.2]))
            .then(a.2.cmp(&b.2))
    });
    let mut det_used = vec![false; detections.len()];
    let mut gt_used = vec![false; gt.len()];
    let mut matches = Vec::new();
    let mut tp = 0;
    for (o, g, d) in candidates {
        if det_used[d] || gt_used[g] {
            continue;
        }
        det_used[d] = true;
        gt_used[g] = true;
        tp += 1;
        matches.push(Match {
            kind: MatchKind::OneToOne,
            detections: vec![d],
            ground_truth: vec![g],
            overlap: o,
        });
    }

    for g in 0..gt.len() {
        if gt_used[g] {
            continue;
        }
        let parts: Vec<usize> = (0..detections.len())
            .filter(|&d| !det_used[d] && detections[d].intersection_area(&gt[g]) > 0)
            .collect();
        if parts.is_empty() {
            continue;
        }
        let rects: Vec<Rect> = parts.iter().map(|&d| detections[d]).collect();
        let o = union_overlap(&rects, &gt[g..=g]);
        if o > MATCH_THRESHOLD {
            parts.iter().for_each(|&d| det_used[d] = true);
            gt_used[g] = true;
            tp += 1;
            matches.push(Match {
                kind: MatchKind::Fragment,
                detections: parts,
                ground_truth: vec![g],
                overlap: o,
            });
        }
    }

    let mut det_order: Vec<usize> = (0..detections.len()).filter(|&d| !det_used[d]).collect();
    det_order.sort_by_key(|&d| (detections[d], d));
    for d in det_order {
        let parts: Vec<usize> = (0..gt.len())
            .filter(|&g| !gt_used[g] && gt[g].intersection_area(&detections[d]) > 0)
            .collect();
        if parts.is_empty() {
            continue;
        }
        let rects: Vec<Rect> = parts.iter().map(|&g| gt[g]).collect();
        let o = union_overlap(&detections[d..=d], &rects);
        if o > MATCH_THRESHOLD {
            parts.iter().for_each(|&g| gt_used[g] = true);
            det_used[d] = true;
            tp += parts.len();
            matches.push(Match {
                kind: MatchKind::Merge,
                detections: vec![d],
                ground_truth: parts,
                overlap: o,
            });
        }
    }

    Ok(ImageMatch { tp, matches })
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ImageEval {
    pub image_id: String,
    pub tp: usize,
    pub n_detections: usize,
    pub n_gt: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Totals {
    pub tp: usize,
    /// Estimated (detected) rectangles.
    pub e: usize,
    /// Ground-truth rectangles.
    pub t: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Averaging {
    /// Formulas applied once to set totals.
    #[default]
    Micro,
    /// Per-image precision and recall averaged, F from the averages.
    Macro,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub per_image: Vec<ImageEval>,
    pub totals: Totals,
    pub averaging: Averaging,
    pub precision: f64,
    pub recall: f64,
    pub f_measure: f64,
}

fn ratio(a: usize, b: usize) -> f64 {
    if b == 0 {
        0.0
    } else {
        a as f64 / b as f64
    }
}

/// Precision, recall and F-measure from per-image counts.
pub fn score(per_image: Vec<ImageEval>, averaging: Averaging) -> EvalReport {
    let totals = per_image
        .iter()
        .fold(Totals { tp: 0, e: 0, t: 0 }, |acc, im| Totals {
            tp: acc.tp + im.tp,
            e: acc.e + im.n_detections,
            t: acc.t + im.n_gt,
        });
    let (precision, recall) = match averaging {
        Averaging::Micro => (ratio(totals.tp, totals.e), ratio(totals.tp, totals.t)),
        Averaging::Macro if per_image.is_empty() => (0.0, 0.0),
        Averaging::Macro => {
            let n = per_image.len() as f64;
            (
                per_image
                    .iter()
                    .map(|im| ratio(im.tp, im.n_detections))
                    .sum::<f64>()
                    / n,
                per_image
                    .iter()
                    .map(|im| ratio(im.tp, im.n_gt))
                    .sum::<f64>()
                    / n,
            )
        }
    };
    EvalReport {
        per_image,
        totals,
        averaging,
        precision,
        recall,
        f_measure: f_measure(precision, recall),
    }
}

/// Aligned text table with one row per labelled report.
pub fn render_table(rows: &[(&str, &EvalReport)]) -> String {
    let headers = ["Features", "Precision (p)", "Recall (r)", "F-measure"];
    let cells: Vec<[String; 4]> = rows
        .iter()
        .map(|(name, r)| {
            [
                name.to_string(),
                format!("{:.4}", r.precision),
                format!("{:.4}", r.recall),
                format!("{:.4}", r.f_measure),
            ]
        })
        .collect();
    let mut widths = headers.map(str::len);
    for row in &cells {
        for (w, c) in widths.iter_mut().zip(row) {
            *w = (*w).max(c.len());
        }
    }
    let line = |row: [&str; 4]| {
        let mut s = String::new();
        for (i, (c, w)) in row.iter().zip(widths).enumerate() {
            if i > 0 {
                s.push_str(" | ");
            }
            if i == 0 {
                s.push_str(&format!("{c:<w$}"));
            } else {
                s.push_str(&format!("{c:>w$}"));
            }
        }
        s.trim_end().to_string()
    };
    let mut out = line(headers);
    out.push('\n');
    out.push_str(
        &widths
            .iter()
            .map(|w| "-".repeat(*w))
            .collect::<Vec<_>>()
            .join("-|-"),
    );
    out.push('\n');
    for row in &cells {
        out.push_str(&line([&row[0], &row[1], &row[2], &row[3]]));
        out.push('\n');
    }
    out
}
