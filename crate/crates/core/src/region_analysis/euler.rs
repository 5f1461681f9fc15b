use crate::mser::Region;

/// Euler number of a binary mask: 4-connected foreground components minus
/// holes (8-connected background components not reaching the border).
///
/// Computed by bit-quad counting over the zero-padded mask.
pub fn euler_number_of_mask(mask: &[bool], height: usize, width: usize) -> i64 {
    let at = |r: isize, c: isize| -> bool {
        r >= 0
            && c >= 0
            && (r as usize) < height
            && (c as usize) < width
            && mask[r as usize * width + c as usize]
    };
    let (mut q1, mut q3, mut qd) = (0i64, 0i64, 0i64);
    for r in -1..height as isize {
        for c in -1..width as isize {
            let a = at(r, c);
            let b = at(r, c + 1);
            let d = at(r + 1, c);
            let e = at(r + 1, c + 1);
            match a as u8 + b as u8 + d as u8 + e as u8 {
                1 => q1 += 1,
                3 => q3 += 1,
                2 if a == e => qd += 1,
                _ => {}
            }
        }
    }
    (q1 - q3 + 2 * qd) / 4
}

/// Euler number of the region's mask over its bounding box.
pub fn euler_number(r: &Region) -> i64 {
    euler_number_of_mask(&r.mask(), r.bbox.height as usize, r.bbox.width as usize)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn parse(rows: &[&str]) -> (Vec<bool>, usize, usize) {
        let h = rows.len();
        let w = rows[0].len();
        let m = rows
            .iter()
            .flat_map(|r| r.chars().map(|c| c == '#'))
            .collect();
        (m, h, w)
    }

    #[test]
    fn solid_ring_and_figure_eight() {
        let (m, h, w) = parse(&["###", "###", "###"]);
        assert_eq!(euler_number_of_mask(&m, h, w), 1);
        let (m, h, w) = parse(&["###", "#.#", "###"]);
        assert_eq!(euler_number_of_mask(&m, h, w), 0);
        let (m, h, w) = parse(&["###", "#.#", "###", "#.#", "###"]);
        assert_eq!(euler_number_of_mask(&m, h, w), -1);
    }

    #[test]
    fn diagonal_pixels_are_separate_components() {
        let (m, h, w) = parse(&["#.", ".#"]);
        assert_eq!(euler_number_of_mask(&m, h, w), 2);
    }

    #[test]
    fn diagonal_gap_in_ring_wall_still_encloses_hole() {
        // background cell at centre touches outside only diagonally through
        // foreground corners; with 8-connected background it leaks out
        let (m, h, w) = parse(&[".##", "#.#", "###"]);
        assert_eq!(euler_number_of_mask(&m, h, w), 1);
    }
}
