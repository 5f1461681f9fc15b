use serde::{Deserialize, Serialize};

use super::tree::{build_component_tree, ComponentTree, Polarity};
use super::Region;
use crate::error::{Error, Result};
use crate::imaging::{Channel, GrayImage};

/// Parameters controlling which extremal regions count as stable.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MserParams {
    /// Half-width of the threshold window used for the stability score.
    pub delta: u8,
    pub min_area: usize,
    /// Upper area bound as a fraction of the image area.
    pub max_area_fraction: f64,
    pub max_variation: f64,
    pub both_polarities: bool,
}

impl Default for MserParams {
    fn default() -> Self {
        MserParams {
            delta: 5,
            min_area: 30,
            max_area_fraction: 0.2,
            max_variation: 0.5,
            both_polarities: true,
        }
    }
}

impl MserParams {
    pub fn validate(&self) -> Result<()> {
        if self.delta < 1 {
            return Err(Error::Config("mser.delta must be >= 1".into()));
        }
        if self.min_area == 0 {
            return Err(Error::Config("mser.min_area must be > 0".into()));
        }
        if !(self.max_area_fraction > 0.0 && self.max_area_fraction <= 1.0) {
            return Err(Error::Config(
                "mser.max_area_fraction must be in (0, 1]".into(),
            ));
        }
        if !(self.max_variation > 0.0) {
            return Err(Error::Config("mser.max_variation must be > 0".into()));
        }
        Ok(())
    }

    pub fn polarities(&self) -> &'static [Polarity] {
        if self.both_polarities {
            &Polarity::BOTH
        } else {
            &Polarity::BOTH[..1]
        }
    }
}

/// Stability scores of every (node, level) pair in a component tree.
///
/// For a node alive at level `t` the score is
/// `(area(t + delta) - area(t - delta)) / area(t)` where `area(t + delta)` is
/// the enclosing component at the higher threshold (clamped to 255) and
/// `area(t - delta)` is the largest component inside the node at the lower
/// threshold (zero below level 0).
pub struct Stability<'a> {
    tree: &'a ComponentTree,
    delta: usize,
    /// `below[id * delta + k - 1]`: largest descendant area at `level - k`.
    below: Vec<usize>,
}

impl<'a> Stability<'a> {
    pub fn new(tree: &'a ComponentTree, delta: u8) -> Self {
        let delta = delta as usize;
        let nodes = tree.nodes();
        let mut below = vec![0usize; nodes.len() * delta];
        for (id, node) in nodes.iter().enumerate() {
            let b = node.level as isize;
            for k in 1..=delta {
                let s = b - k as isize;
                let mut best = 0usize;
                for &c in &node.children {
                    let cl = nodes[c].level as isize;
                    let v = if cl <= s {
                        nodes[c].area
                    } else {
                        below[c * delta + (cl - s) as usize - 1]
                    };
                    best = best.max(v);
                }
                below[id * delta + k - 1] = best;
            }
        }
        Stability { tree, delta, below }
    }

    fn area_minus(&self, id: usize, t: usize) -> usize {
        let node = &self.tree.nodes()[id];
        let b = node.level as usize;
        if t >= b + self.delta {
            node.area
        } else {
            let k = b + self.delta - t;
            self.below[id * self.delta + k - 1]
        }
    }

    fn area_plus_from(&self, mut anc: usize, t: usize) -> (usize, usize) {
        let target = (t + self.delta).min(255);
        let nodes = self.tree.nodes();
        while let Some(p) = nodes[anc].parent {
            if nodes[p].level as usize <= target {
                anc = p;
            } else {
                break;
            }
        }
        (anc, nodes[anc].area)
    }

    /// Score of node `id` at threshold `t`, which must lie in its lifetime.
    pub fn score(&self, id: usize, t: usize) -> f64 {
        let (_, plus) = self.area_plus_from(id, t);
        let minus = self.area_minus(id, t);
        (plus - minus) as f64 / self.tree.nodes()[id].area as f64
    }

    /// Scores for every level of the node's lifetime, ascending.
    pub fn scores(&self, id: usize) -> Vec<f64> {
        let b = self.tree.nodes()[id].level as usize;
        let e = self.tree.end_level(id) as usize;
        let area = self.tree.nodes()[id].area as f64;
        let mut anc = id;
        (b..=e)
            .map(|t| {
                let (a, plus) = self.area_plus_from(anc, t);
                anc = a;
                (plus - self.area_minus(id, t)) as f64 / area
            })
            .collect()
    }

    /// Child that continues the chain one level below the node's birth: the
    /// largest child, ties broken by smallest pixel index.
    pub fn chain_child(&self, id: usize) -> Option<usize> {
        let nodes = self.tree.nodes();
        nodes[id].children.iter().copied().max_by(|&a, &b| {
            nodes[a]
                .area
                .cmp(&nodes[b].area)
                .then(nodes[b].min_pixel.cmp(&nodes[a].min_pixel))
        })
    }
}

/// A node that passed every MSER criterion.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StableNode {
    pub node: usize,
    pub level: u8,
    pub stability: f64,
}

/// Select stable nodes: some level of the node's lifetime must be a local
/// minimum (non-strict) of the score along the chain of nested regions, with
/// score at most `max_variation`. The root is never a proper region.
pub fn stable_nodes(tree: &ComponentTree, params: &MserParams) -> Vec<StableNode> {
    let stab = Stability::new(tree, params.delta);
    let nodes = tree.nodes();
    let total = (tree.height() * tree.width()) as f64;
    let max_area = params.max_area_fraction * total;

    // first and last score of every node, needed across node boundaries
    let ends: Vec<(f64, f64)> = (0..nodes.len())
        .map(|id| {
            let b = nodes[id].level as usize;
            let e = tree.end_level(id) as usize;
            (stab.score(id, b), stab.score(id, e))
        })
        .collect();

    let mut out = Vec::new();
    for (id, node) in nodes.iter().enumerate() {
        if node.parent.is_none() {
            continue;
        }
        if node.area < params.min_area || node.area as f64 > max_area {
            continue;
        }
        let scores = stab.scores(id);
        let prev_boundary = stab.chain_child(id).map(|c| ends[c].1);
        let next_boundary = node.parent.map(|p| ends[p].0);
        let mut best: Option<(f64, usize)> = None;
        for (i, &q) in scores.iter().enumerate() {
            if q > params.max_variation {
                continue;
            }
            let prev = if i == 0 {
                prev_boundary
            } else {
                Some(scores[i - 1])
            };
            let next = if i + 1 == scores.len() {
                next_boundary
            } else {
                Some(scores[i + 1])
            };
            if prev.is_some_and(|p| q > p) || next.is_some_and(|n| q > n) {
                continue;
            }
            if best.is_none_or(|(bq, _)| q < bq) {
                best = Some((q, i));
            }
        }
        if let Some((q, i)) = best {
            out.push(StableNode {
                node: id,
                level: node.level + i as u8,
                stability: q,
            });
        }
    }
    out
}

/// Maximally stable extremal regions of one plane for one polarity.
pub fn extract_mser(img: &GrayImage, params: &MserParams, polarity: Polarity) -> Vec<Region> {
    extract_mser_tagged(img, params, polarity, Channel::Gray)
}

pub(crate) fn extract_mser_tagged(
    img: &GrayImage,
    params: &MserParams,
    polarity: Polarity,
    channel: Channel,
) -> Vec<Region> {
    let tree = build_component_tree(img, polarity);
    let w = img.width();
    stable_nodes(&tree, params)
        .into_iter()
        .map(|s| {
            let pixels = tree
                .pixels(s.node)
                .into_iter()
                .map(|p| ((p / w) as u32, (p % w) as u32))
                .collect();
            Region::from_sorted_pixels(pixels, channel, polarity, s.level, s.stability)
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn square_on_background(size: usize, lo: usize, hi: usize, fg: u8, bg: u8) -> GrayImage {
        GrayImage::from_fn(size, size, |r, c| {
            if (lo..hi).contains(&r) && (lo..hi).contains(&c) {
                fg
            } else {
                bg
            }
        })
        .unwrap()
    }

    #[test]
    fn constant_image_has_no_regions() {
        let img = GrayImage::filled(20, 20, 77).unwrap();
        for p in Polarity::BOTH {
            assert!(extract_mser(&img, &MserParams::default(), p).is_empty());
        }
    }

    #[test]
    fn single_blob_is_recovered_exactly() {
        let img = square_on_background(32, 10, 18, 10, 200);
        let regions = extract_mser(&img, &MserParams::default(), Polarity::DarkOnLight);
        assert_eq!(regions.len(), 1);
        let r = &regions[0];
        assert_eq!(r.area(), 64);
        assert!(r
            .pixels
            .iter()
            .all(|&(y, x)| (10..18).contains(&y) && (10..18).contains(&x)));
        assert_eq!(r.stability, 0.0);
    }

    #[test]
    fn small_blob_is_gated_by_area() {
        let img = square_on_background(32, 10, 13, 10, 200);
        assert!(extract_mser(&img, &MserParams::default(), Polarity::DarkOnLight).is_empty());
    }

    #[test]
    fn polarity_duality() {
        let img = GrayImage::from_fn(24, 24, |r, c| ((r * 37 + c * 11) % 97 + (r / 6) * 40) as u8)
            .unwrap();
        let params = MserParams {
            min_area: 3,
            max_area_fraction: 0.9,
            ..MserParams::default()
        };
        let a = extract_mser(&img, &params, Polarity::DarkOnLight);
        let b = extract_mser(&img.inverted(), &params, Polarity::LightOnDark);
        let key = |rs: &[Region]| {
            rs.iter()
                .map(|r| (r.pixels.clone(), r.level))
                .collect::<Vec<_>>()
        };
        assert_eq!(key(&a), key(&b));
    }

    #[test]
    fn invalid_params_are_rejected() {
        let bad = MserParams {
            max_area_fraction: 0.0,
            ..MserParams::default()
        };
        assert!(bad.validate().is_err());
        assert!(MserParams::default().validate().is_ok());
    }
}
