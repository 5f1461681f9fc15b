//! Geometric description of candidate regions and the heuristic first-stage
//! filter that removes obvious non-text candidates.

mod euler;
mod filter;
mod shape;
mod stroke;

use serde::{Deserialize, Serialize};

pub use euler::{euler_number, euler_number_of_mask};
pub use filter::{geometric_filter, geometric_filter_indices, GeomThresholds};
pub use shape::{aspect_ratio, eccentricity, extent, solidity};
pub use stroke::{distance_transform, stroke_width_samples, stroke_width_stats, thin};

pub use crate::rect::overlap_ratio;

use crate::error::{Error, Result};
use crate::mser::Region;

/// Shape measurements of one region.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegionFeatures {
    /// Bounding-box width over height.
    pub aspect_ratio: f64,
    pub eccentricity: f64,
    pub solidity: f64,
    pub extent: f64,
    pub euler_number: i64,
    pub stroke_width_mean: f64,
    pub stroke_width_std: f64,
    /// `stroke_width_std / stroke_width_mean`.
    pub stroke_width_variation: f64,
}

pub fn compute_features(r: &Region) -> Result<RegionFeatures> {
    if r.pixels.is_empty() {
        return Err(Error::EmptyRegion);
    }
    let (mean, std) = stroke_width_stats(r);
    Ok(RegionFeatures {
        aspect_ratio: aspect_ratio(r),
        eccentricity: eccentricity(r),
        solidity: solidity(r),
        extent: extent(r),
        euler_number: euler_number(r),
        stroke_width_mean: mean,
        stroke_width_std: std,
        stroke_width_variation: std / mean,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn square_features() {
        let r = Region::from_mask(&[true; 100], 10, 10, 0, 0).unwrap();
        let f = compute_features(&r).unwrap();
        assert_eq!(f.aspect_ratio, 1.0);
        assert_eq!(f.extent, 1.0);
        assert_eq!(f.solidity, 1.0);
        assert!(f.eccentricity.abs() < 1e-12);
        assert_eq!(f.euler_number, 1);
        assert!(f.stroke_width_mean > 0.0);
    }

    #[test]
    fn invariants_hold_on_a_ring() {
        let mask: Vec<bool> = (0..144)
            .map(|i| {
                let (r, c) = (i / 12, i % 12);
                !((3..9).contains(&r) && (3..9).contains(&c))
            })
            .collect();
        let f = compute_features(&Region::from_mask(&mask, 12, 12, 0, 0).unwrap()).unwrap();
        assert_eq!(f.euler_number, 0);
        assert!(f.solidity > 0.0 && f.solidity <= 1.0);
        assert!(f.extent > 0.0 && f.extent <= 1.0);
        assert!((0.0..1.0).contains(&f.eccentricity));
    }
}
