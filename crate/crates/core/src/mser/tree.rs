use serde::{Deserialize, Serialize};

use crate::imaging::GrayImage;

const NONE: u32 = u32::MAX;

/// Which side of the threshold a region lives on.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Polarity {
    /// Components of `{v <= t}`: dark structures on a brighter surround.
    DarkOnLight,
    /// Components of `{255 - v <= t}`: bright structures on a darker surround.
    LightOnDark,
}

impl Polarity {
    pub const BOTH: [Polarity; 2] = [Polarity::DarkOnLight, Polarity::LightOnDark];
}

/// One extremal region: a connected component of a threshold set that first
/// appears at `level` and persists until its parent's level.
#[derive(Debug, Clone, PartialEq)]
pub struct TreeNode {
    pub level: u8,
    pub area: usize,
    pub parent: Option<usize>,
    pub children: Vec<usize>,
    /// Smallest row-major pixel index in the region, used as a stable tie-break.
    pub min_pixel: usize,
}

/// Nesting hierarchy of extremal regions over all 256 thresholds.
///
/// Node ids are topologically ordered: every child id is smaller than its
/// parent's, and the last node is the root covering the whole image.
/// Levels are expressed in the polarity's working space, i.e. on the
/// inverted image for [`Polarity::LightOnDark`].
#[derive(Debug, Clone)]
pub struct ComponentTree {
    height: usize,
    width: usize,
    polarity: Polarity,
    nodes: Vec<TreeNode>,
    /// CSR layout of the pixels first absorbed by each node.
    own_start: Vec<u32>,
    own_pixels: Vec<u32>,
}

struct DisjointSet {
    parent: Vec<u32>,
    size: Vec<u32>,
}

impl DisjointSet {
    fn find(&mut self, mut x: u32) -> u32 {
        let mut root = x;
        while self.parent[root as usize] != root {
            root = self.parent[root as usize];
        }
        while self.parent[x as usize] != root {
            let next = self.parent[x as usize];
            self.parent[x as usize] = root;
            x = next;
        }
        root
    }
}

/// Build the component tree of `img` for the given polarity.
pub fn build_component_tree(img: &GrayImage, polarity: Polarity) -> ComponentTree {
    let (h, w) = (img.height(), img.width());
    let n = h * w;
    let values: Vec<u8> = match polarity {
        Polarity::DarkOnLight => img.as_slice().to_vec(),
        Polarity::LightOnDark => img.as_slice().iter().map(|v| 255 - v).collect(),
    };

    // counting sort by level, stable in pixel index
    let mut level_start = [0usize; 257];
    for &v in &values {
        level_start[v as usize + 1] += 1;
    }
    for i in 0..256 {
        level_start[i + 1] += level_start[i];
    }
    let mut order = vec![0u32; n];
    let mut cursor = level_start;
    for (i, &v) in values.iter().enumerate() {
        order[cursor[v as usize]] = i as u32;
        cursor[v as usize] += 1;
    }

    let mut ds = DisjointSet {
        parent: (0..n as u32).collect(),
        size: vec![1; n],
    };
    let mut processed = vec![false; n];
    // per disjoint-set root
    let mut node_of = vec![NONE; n];
    let mut open_level = vec![-1i16; n];
    let mut pending: Vec<Vec<u32>> = vec![Vec::new(); n];
    let mut min_pix: Vec<u32> = (0..n as u32).collect();

    let mut nodes: Vec<TreeNode> = Vec::new();
    let mut pixel_node = vec![NONE; n];

    for level in 0..256usize {
        let batch = &order[level_start[level]..level_start[level + 1]];
        if batch.is_empty() {
            continue;
        }
        let stamp = level as i16;
        for &p in batch {
            processed[p as usize] = true;
            open_level[p as usize] = stamp;
            let (r, c) = (p as usize / w, p as usize % w);
            let mut neighbors = [NONE; 4];
            if r > 0 {
                neighbors[0] = p - w as u32;
            }
            if r + 1 < h {
                neighbors[1] = p + w as u32;
            }
            if c > 0 {
                neighbors[2] = p - 1;
            }
            if c + 1 < w {
                neighbors[3] = p + 1;
            }
            for q in neighbors {
                if q == NONE || !processed[q as usize] {
                    continue;
                }
                let rp = ds.find(p);
                let rq = ds.find(q);
                if rp == rq {
                    continue;
                }
                if open_level[rq as usize] != stamp {
                    // first touch this level: the component's current node becomes a child
                    open_level[rq as usize] = stamp;
                    let prev = node_of[rq as usize];
                    debug_assert_ne!(prev, NONE);
                    pending[rq as usize] = vec![prev];
                }
                let (big, small) = if ds.size[rp as usize] >= ds.size[rq as usize] {
                    (rp, rq)
                } else {
                    (rq, rp)
                };
                ds.parent[small as usize] = big;
                ds.size[big as usize] += ds.size[small as usize];
                let moved = std::mem::take(&mut pending[small as usize]);
                pending[big as usize].extend(moved);
                min_pix[big as usize] = min_pix[big as usize].min(min_pix[small as usize]);
            }
        }
        for &p in batch {
            let root = ds.find(p);
            if open_level[root as usize] == stamp {
                let id = nodes.len();
                let mut children: Vec<usize> = std::mem::take(&mut pending[root as usize])
                    .into_iter()
                    .map(|c| c as usize)
                    .collect();
                children.sort_unstable();
                for &c in &children {
                    nodes[c].parent = Some(id);
                }
                nodes.push(TreeNode {
                    level: level as u8,
                    area: ds.size[root as usize] as usize,
                    parent: None,
                    children,
                    min_pixel: min_pix[root as usize] as usize,
                });
                node_of[root as usize] = id as u32;
                // closed for this level
                open_level[root as usize] = -2;
            }
            pixel_node[p as usize] = node_of[root as usize];
        }
    }

    let mut own_start = vec![0u32; nodes.len() + 1];
    for &nd in &pixel_node {
        own_start[nd as usize + 1] += 1;
    }
    for i in 0..nodes.len() {
        own_start[i + 1] += own_start[i];
    }
    let mut own_pixels = vec![0u32; n];
    let mut fill = own_start.clone();
    for (p, &nd) in pixel_node.iter().enumerate() {
        own_pixels[fill[nd as usize] as usize] = p as u32;
        fill[nd as usize] += 1;
    }

    ComponentTree {
        height: h,
        width: w,
        polarity,
        nodes,
        own_start,
        own_pixels,
    }
}

impl ComponentTree {
    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn polarity(&self) -> Polarity {
        self.polarity
    }

    pub fn nodes(&self) -> &[TreeNode] {
        &self.nodes
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn root(&self) -> usize {
        self.nodes.len() - 1
    }

    /// Last threshold at which the node's pixel set is still a component.
    pub fn end_level(&self, id: usize) -> u8 {
        match self.nodes[id].parent {
            Some(p) => self.nodes[p].level - 1,
            None => 255,
        }
    }

    /// Row-major pixel indices of the node's region, ascending.
    pub fn pixels(&self, id: usize) -> Vec<usize> {
        let mut out = Vec::with_capacity(self.nodes[id].area);
        let mut stack = vec![id];
        while let Some(nd) = stack.pop() {
            let (s, e) = (self.own_start[nd] as usize, self.own_start[nd + 1] as usize);
            out.extend(self.own_pixels[s..e].iter().map(|&p| p as usize));
            stack.extend(&self.nodes[nd].children);
        }
        out.sort_unstable();
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn constant_image_is_a_single_node() {
        let img = GrayImage::filled(5, 7, 42).unwrap();
        let tree = build_component_tree(&img, Polarity::DarkOnLight);
        assert_eq!(tree.len(), 1);
        assert_eq!(tree.nodes()[0].level, 42);
        assert_eq!(tree.nodes()[0].area, 35);
        assert_eq!(tree.end_level(0), 255);
    }

    #[test]
    fn dark_square_persists_until_background() {
        let img = GrayImage::from_fn(9, 9, |r, c| {
            if (3..6).contains(&r) && (3..6).contains(&c) {
                10
            } else {
                200
            }
        })
        .unwrap();
        let tree = build_component_tree(&img, Polarity::DarkOnLight);
        assert_eq!(tree.len(), 2);
        let sq = &tree.nodes()[0];
        assert_eq!((sq.level, sq.area, sq.parent), (10, 9, Some(1)));
        assert_eq!(tree.end_level(0), 199);
        assert_eq!(tree.nodes()[1].area, 81);
        assert_eq!(tree.pixels(1).len(), 81);
    }

    #[test]
    fn light_polarity_works_on_inverted_levels() {
        let img = GrayImage::from_fn(4, 4, |r, _| if r == 0 { 250 } else { 5 }).unwrap();
        let tree = build_component_tree(&img, Polarity::LightOnDark);
        assert_eq!(tree.nodes()[0].level, 5);
        assert_eq!(tree.pixels(0), vec![0, 1, 2, 3]);
    }

    #[test]
    fn two_blobs_are_siblings() {
        let img = GrayImage::from_fn(
            5,
            9,
            |r, c| {
                if r == 2 && (c == 1 || c == 7) {
                    0
                } else {
                    100
                }
            },
        )
        .unwrap();
        let tree = build_component_tree(&img, Polarity::DarkOnLight);
        let root = tree.root();
        assert_eq!(tree.nodes()[root].children.len(), 2);
        assert_eq!(tree.nodes()[root].level, 100);
    }
}
