mod common;

use common::{euler_oracle, raster_iou, rng};
use rand::Rng;
use stp_core::region_analysis::{euler_number_of_mask, stroke_width_stats};
use stp_core::{compute_features, overlap_ratio, Rect, Region};

#[test]
fn euler_number_matches_flood_fill() {
    let mut r = rng(3);
    for _ in 0..200 {
        let density = r.random_range(0.2..0.8);
        let mask: Vec<bool> = (0..256).map(|_| r.random_bool(density)).collect();
        assert_eq!(
            euler_number_of_mask(&mask, 16, 16),
            euler_oracle(&mask, 16, 16)
        );
    }
}

#[test]
fn euler_of_known_shapes() {
    // a ring has one hole; a diagonal pair is two 4-connected components
    let ring: Vec<bool> = (0..25).map(|i| i != 12).collect();
    assert_eq!(euler_number_of_mask(&ring, 5, 5), 0);
    assert_eq!(euler_oracle(&ring, 5, 5), 0);
    let diag = [true, false, false, true];
    assert_eq!(euler_number_of_mask(&diag, 2, 2), 2);
    assert_eq!(euler_oracle(&diag, 2, 2), 2);
}

fn random_rect(r: &mut rand_chacha::ChaCha8Rng) -> Rect {
    Rect::new(
        r.random_range(-20..40),
        r.random_range(-20..40),
        r.random_range(1..30),
        r.random_range(1..30),
    )
}

#[test]
fn overlap_matches_pixel_count_exactly() {
    let mut r = rng(4);
    for _ in 0..300 {
        let (a, b) = (random_rect(&mut r), random_rect(&mut r));
        assert_eq!(
            overlap_ratio(&a, &b).unwrap(),
            raster_iou(&a, &b),
            "{a:?} {b:?}"
        );
    }
}

#[test]
fn bar_stroke_width_is_its_thickness() {
    for thickness in [3usize, 5, 8] {
        let (h, w) = (thickness, 60);
        let bar = Region::from_mask(&vec![true; h * w], h, w, 10, 10).unwrap();
        let (mean, std) = stroke_width_stats(&bar);
        assert!(
            (mean - thickness as f64).abs() <= 1.0,
            "width {thickness}: mean {mean}"
        );
        assert!(
            std / mean < 0.05,
            "width {thickness}: variation {}",
            std / mean
        );
        let f = compute_features(&bar).unwrap();
        assert_eq!(f.euler_number, 1);
        assert_eq!(f.extent, 1.0);
    }
}
