use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{compute_features, RegionFeatures};
use crate::error::{Error, Result};
use crate::mser::Region;
use crate::rect::iou_unchecked;

/// Thresholds for the heuristic filter. Every gate can be opened fully by
/// using infinite bounds.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GeomThresholds {
    pub min_aspect_ratio: f64,
    pub max_aspect_ratio: f64,
    pub max_eccentricity: f64,
    pub min_solidity: f64,
    pub min_extent: f64,
    pub max_extent: f64,
    pub min_euler_number: i64,
    pub max_stroke_width_variation: f64,
    /// The stroke-width gate rejects too many cursive candidates, so it is
    /// off unless asked for.
    pub swv_enabled: bool,
    /// Pairs overlapping by more than this lose their less uniform member.
    pub overlap_discard: f64,
    /// A region containing more than this many smaller candidates is
    /// dropped; `None` disables the rule.
    pub containment_count: Option<usize>,
}

impl Default for GeomThresholds {
    fn default() -> Self {
        GeomThresholds::urdu()
    }
}

impl GeomThresholds {
    /// Preset tuned for horizontal cursive text.
    pub fn urdu() -> Self {
        GeomThresholds {
            min_aspect_ratio: 0.1,
            max_aspect_ratio: 10.0,
            max_eccentricity: 0.995,
            min_solidity: 0.2,
            min_extent: 0.1,
            max_extent: 0.95,
            min_euler_number: -4,
            max_stroke_width_variation: 0.6,
            swv_enabled: false,
            overlap_discard: 0.8,
            containment_count: Some(3),
        }
    }

    /// Every gate open; the filter becomes the identity.
    pub fn permissive() -> Self {
        GeomThresholds {
            min_aspect_ratio: f64::NEG_INFINITY,
            max_aspect_ratio: f64::INFINITY,
            max_eccentricity: f64::INFINITY,
            min_solidity: f64::NEG_INFINITY,
            min_extent: f64::NEG_INFINITY,
            max_extent: f64::INFINITY,
            min_euler_number: i64::MIN,
            max_stroke_width_variation: f64::INFINITY,
            swv_enabled: false,
            overlap_discard: 1.0,
            containment_count: None,
        }
    }

    pub fn profile(name: &str) -> Result<Self> {
        match name {
            "urdu" | "default" => Ok(GeomThresholds::urdu()),
            "permissive" | "off" => Ok(GeomThresholds::permissive()),
            other => Err(Error::Config(format!("unknown geometry profile `{other}`"))),
        }
    }

    pub fn validate(&self) -> Result<()> {
        let pairs = [
            ("aspect_ratio", self.min_aspect_ratio, self.max_aspect_ratio),
            ("extent", self.min_extent, self.max_extent),
        ];
        for (name, lo, hi) in pairs {
            if lo > hi {
                return Err(Error::Config(format!("geometry: min {name} exceeds max")));
            }
        }
        if !(self.overlap_discard > 0.0 && self.overlap_discard <= 1.0) {
            return Err(Error::Config(
                "geometry.overlap_discard must be in (0, 1]".into(),
            ));
        }
        Ok(())
    }

    fn passes_gates(&self, f: &RegionFeatures) -> bool {
        let gates = f.aspect_ratio >= self.min_aspect_ratio
            && f.aspect_ratio <= self.max_aspect_ratio
            && f.eccentricity <= self.max_eccentricity
            && f.solidity >= self.min_solidity
            && f.extent >= self.min_extent
            && f.extent <= self.max_extent
            && f.euler_number >= self.min_euler_number;
        gates && (!self.swv_enabled || f.stroke_width_variation <= self.max_stroke_width_variation)
    }
}

/// Indices (ascending) of the regions that survive the heuristic rules:
///
/// 1. of two regions overlapping by more than `overlap_discard`, the one with
///    the larger stroke-width variation is dropped (the later one on ties);
/// 2. a region whose box contains more than `containment_count` boxes of
///    smaller surviving regions is dropped;
/// 3. per-feature range gates;
/// 4. the stroke-width-variation gate when enabled.
pub fn geometric_filter_indices(regions: &[Region], t: &GeomThresholds) -> Vec<usize> {
    let features: Vec<RegionFeatures> = regions
        .par_iter()
        .map(|r| compute_features(r).expect("regions are nonempty"))
        .collect();

    let n = regions.len();
    let mut alive = vec![true; n];
    for i in 0..n {
        for j in i + 1..n {
            if !alive[i] {
                break;
            }
            if !alive[j] || iou_unchecked(&regions[i].bbox, &regions[j].bbox) <= t.overlap_discard {
                continue;
            }
            if features[i].stroke_width_variation > features[j].stroke_width_variation {
                alive[i] = false;
            } else {
                alive[j] = false;
            }
        }
    }

    if let Some(limit) = t.containment_count {
        let survivors: Vec<usize> = (0..n).filter(|&i| alive[i]).collect();
        let crowded: Vec<usize> = survivors
            .iter()
            .copied()
            .filter(|&i| {
                let outer = &regions[i];
                let inside = survivors
                    .iter()
                    .filter(|&&j| {
                        j != i
                            && regions[j].area() < outer.area()
                            && outer.bbox.contains(&regions[j].bbox)
                    })
                    .count();
                inside > limit
            })
            .collect();
        for i in crowded {
            alive[i] = false;
        }
    }

    (0..n)
        .filter(|&i| alive[i] && t.passes_gates(&features[i]))
        .collect()
}

/// Surviving regions, in input order.
pub fn geometric_filter(regions: &[Region], t: &GeomThresholds) -> Vec<Region> {
    geometric_filter_indices(regions, t)
        .into_iter()
        .map(|i| regions[i].clone())
        .collect()
}
