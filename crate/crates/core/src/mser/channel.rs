use rayon::prelude::*;

use super::extract::{extract_mser_tagged, MserParams};
use super::Region;
use crate::imaging::{Channel, Image};
use crate::rect::iou_unchecked;

const DEDUP_MIN_IOU: f64 = 0.9;
const DEDUP_AREA_RATIO: (f64, f64) = (0.9, 1.1);

/// Two regions describe the same structure: bbox IoU above 0.9 and areas
/// within 10% of each other.
pub fn is_near_duplicate(a: &Region, b: &Region) -> bool {
    let ratio = a.area() as f64 / b.area() as f64;
    ratio >= DEDUP_AREA_RATIO.0
        && ratio <= DEDUP_AREA_RATIO.1
        && iou_unchecked(&a.bbox, &b.bbox) > DEDUP_MIN_IOU
}

/// Run MSER on the red, green and blue planes (and both polarities when
/// configured) and merge the results.
///
/// Regions from different planes that are near-duplicates collapse to the
/// most stable one; regions from the same plane are never merged here.
/// Output order follows (channel, polarity, extraction order).
pub fn channel_enhanced_mser(img: &Image, params: &MserParams) -> Vec<Region> {
    let runs: Vec<_> = [Channel::Red, Channel::Green, Channel::Blue]
        .into_iter()
        .flat_map(|ch| params.polarities().iter().map(move |&p| (ch, p)))
        .collect();
    let candidates: Vec<Region> = runs
        .par_iter()
        .map(|&(ch, pol)| extract_mser_tagged(img.plane(ch).expect("rgb plane"), params, pol, ch))
        .collect::<Vec<_>>()
        .into_iter()
        .flatten()
        .collect();

    let mut order: Vec<usize> = (0..candidates.len()).collect();
    order.sort_by(|&a, &b| {
        candidates[a]
            .stability
            .total_cmp(&candidates[b].stability)
            .then(a.cmp(&b))
    });
    let mut kept: Vec<usize> = Vec::new();
    for idx in order {
        let c = &candidates[idx];
        let dup = kept.iter().any(|&k| {
            let a = &candidates[k];
            a.source_channel != c.source_channel && is_near_duplicate(a, c)
        });
        if !dup {
            kept.push(idx);
        }
    }
    kept.sort_unstable();
    let mut slots: Vec<Option<Region>> = candidates.into_iter().map(Some).collect();
    kept.into_iter().map(|i| slots[i].take().unwrap()).collect()
}
