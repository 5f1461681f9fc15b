use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::FeatureVector;
use crate::error::{Error, Result};
use crate::imaging::{GrayImage, Patch};

pub const SUBPATCH_SIZE: usize = 8;
pub const SUBPATCH_STRIDE: usize = 4;
/// Subpatches whose centred L2 norm is below this (roughly one gray level of
/// standard deviation over 64 pixels) carry no texture and are skipped.
const FLAT_NORM: f64 = 8.0;

/// Learned subpatch dictionary.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Codebook {
    pub k: usize,
    pub subpatch_size: usize,
    pub stride: usize,
    pub seed: u64,
    /// `k * subpatch_size^2` values, one centroid after another.
    #[serde(with = "crate::blob")]
    pub centroids: Vec<f64>,
}

impl Codebook {
    pub fn dim(&self) -> usize {
        self.subpatch_size * self.subpatch_size
    }

    pub fn centroid(&self, j: usize) -> &[f64] {
        &self.centroids[j * self.dim()..(j + 1) * self.dim()]
    }

    pub fn validate(&self) -> Result<()> {
        if self.k == 0 || self.subpatch_size == 0 || self.stride == 0 {
            return Err(Error::CorruptModel("codebook has a zero size".into()));
        }
        if self.centroids.len() != self.k * self.dim() {
            return Err(Error::DimensionMismatch {
                expected: self.k * self.dim(),
                got: self.centroids.len(),
            });
        }
        if self.centroids.iter().any(|v| !v.is_finite()) {
            return Err(Error::CorruptModel(
                "codebook has non-finite centroids".into(),
            ));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct KmeansConfig {
    pub k: usize,
    pub seed: u64,
    pub max_iter: usize,
    /// Stop once no centroid moves farther than this.
    pub tol: f64,
    /// Subsample this many subpatches (seeded) before clustering.
    pub max_samples: Option<usize>,
}

impl Default for KmeansConfig {
    fn default() -> Self {
        KmeansConfig {
            k: 64,
            seed: 0,
            max_iter: 300,
            tol: 1e-4,
            max_samples: Some(20_000),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct KmeansResult {
    /// `k * dim` values.
    pub centroids: Vec<f64>,
    pub assignments: Vec<usize>,
    /// Within-cluster sum of squared distances after every assignment step.
    pub objective_history: Vec<f64>,
    pub iterations: usize,
    pub converged: bool,
}

fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

/// Lloyd's algorithm with k-means++ seeding. `samples` holds `n * dim`
/// values. Empty clusters keep their previous centroid.
pub fn kmeans(samples: &[f64], dim: usize, cfg: &KmeansConfig) -> Result<KmeansResult> {
    if dim == 0 || cfg.k == 0 {
        return Err(Error::Config(
            "k-means needs k >= 1 and a nonzero dimension".into(),
        ));
    }
    let n = samples.len() / dim;
    let k = cfg.k;
    if n < k {
        return Err(Error::InsufficientSamples(format!(
            "{n} samples for k = {k}"
        )));
    }
    let row = |i: usize| &samples[i * dim..(i + 1) * dim];
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);

    let mut centroids = Vec::with_capacity(k * dim);
    centroids.extend_from_slice(row(rng.random_range(0..n)));
    let mut nearest: Vec<f64> = (0..n).map(|i| sq_dist(row(i), &centroids[..dim])).collect();
    for _ in 1..k {
        let total: f64 = nearest.iter().sum();
        if total <= 0.0 {
            return Err(Error::InsufficientSamples(format!(
                "fewer than {k} distinct samples"
            )));
        }
        let mut target = rng.random::<f64>() * total;
        let mut pick = n - 1;
        for (i, d) in nearest.iter().enumerate() {
            if *d > 0.0 && target < *d {
                pick = i;
                break;
            }
            target -= d;
        }
        // rounding can run off the end; fall back to the last sample with mass
        if nearest[pick] <= 0.0 {
            pick = nearest.iter().rposition(|&d| d > 0.0).expect("total > 0");
        }
        let c = row(pick).to_vec();
        for (i, d) in nearest.iter_mut().enumerate() {
            *d = d.min(sq_dist(row(i), &c));
        }
        centroids.extend_from_slice(&c);
    }

    let mut assignments = vec![0usize; n];
    let mut history = Vec::new();
    let mut iterations = 0;
    let mut converged = false;
    let mut sums = vec![0.0; k * dim];
    let mut counts = vec![0usize; k];
    while iterations < cfg.max_iter {
        iterations += 1;
        let mut objective = 0.0;
        for (i, a) in assignments.iter_mut().enumerate() {
            let x = row(i);
            let (mut best, mut best_d) = (0, f64::INFINITY);
            for j in 0..k {
                let d = sq_dist(x, &centroids[j * dim..(j + 1) * dim]);
                if d < best_d {
                    best = j;
                    best_d = d;
                }
            }
            *a = best;
            objective += best_d;
        }
        history.push(objective);

        sums.iter_mut().for_each(|s| *s = 0.0);
        counts.iter_mut().for_each(|c| *c = 0);
        for (i, &a) in assignments.iter().enumerate() {
            counts[a] += 1;
            for (s, x) in sums[a * dim..(a + 1) * dim].iter_mut().zip(row(i)) {
                *s += x;
            }
        }
        let mut shift = 0.0f64;
        for j in 0..k {
            if counts[j] == 0 {
                continue;
            }
            let inv = 1.0 / counts[j] as f64;
            let mut moved = 0.0;
            for (c, s) in centroids[j * dim..(j + 1) * dim]
                .iter_mut()
                .zip(&sums[j * dim..])
            {
                let next = s * inv;
                moved += (next - *c) * (next - *c);
                *c = next;
            }
            shift = shift.max(moved.sqrt());
        }
        if shift < cfg.tol {
            converged = true;
            break;
        }
    }

    Ok(KmeansResult {
        centroids,
        assignments,
        objective_history: history,
        iterations,
        converged,
    })
}

/// Top-left corner of a subpatch and its normalized values (`None` if flat).
pub(crate) type Subpatch = ((usize, usize), Option<Vec<f64>>);

/// Normalized `size x size` subpatches on the stride grid.
pub(crate) fn subpatches(img: &GrayImage, size: usize, stride: usize) -> Vec<Subpatch> {
    let mut out = Vec::new();
    if img.height() < size || img.width() < size {
        return out;
    }
    for r in (0..=img.height() - size).step_by(stride) {
        for c in (0..=img.width() - size).step_by(stride) {
            let mut v: Vec<f64> = (0..size * size)
                .map(|i| img.get(r + i / size, c + i % size) as f64)
                .collect();
            let mean = v.iter().sum::<f64>() / v.len() as f64;
            v.iter_mut().for_each(|x| *x -= mean);
            let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
            let v = (norm >= FLAT_NORM).then(|| {
                v.iter_mut().for_each(|x| *x /= norm);
                v
            });
            out.push(((r, c), v));
        }
    }
    out
}

/// Learn a subpatch codebook from training patches with the default
/// clustering settings.
pub fn learn_codebook(patches: &[Patch], k: usize, seed: u64) -> Result<Codebook> {
    let cfg = KmeansConfig {
        k,
        seed,
        ..KmeansConfig::default()
    };
    Ok(learn_codebook_with(patches, &cfg)?.0)
}

pub fn learn_codebook_with(
    patches: &[Patch],
    cfg: &KmeansConfig,
) -> Result<(Codebook, KmeansResult)> {
    let dim = SUBPATCH_SIZE * SUBPATCH_SIZE;
    let mut samples: Vec<f64> = Vec::new();
    for p in patches {
        for (_, v) in subpatches(&p.to_gray(), SUBPATCH_SIZE, SUBPATCH_STRIDE) {
            if let Some(v) = v {
                samples.extend_from_slice(&v);
            }
        }
    }
    let n = samples.len() / dim;
    if let Some(cap) = cfg.max_samples.filter(|&cap| n > cap) {
        // partial Fisher-Yates over rows
        let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed ^ 0x5eed_5a3b_1e5a_3b1e);
        for i in 0..cap {
            let j = rng.random_range(i..n);
            if i != j {
                for t in 0..dim {
                    samples.swap(i * dim + t, j * dim + t);
                }
            }
        }
        samples.truncate(cap * dim);
    }
    let result = kmeans(&samples, dim, cfg)?;
    let cb = Codebook {
        k: cfg.k,
        subpatch_size: SUBPATCH_SIZE,
        stride: SUBPATCH_STRIDE,
        seed: cfg.seed,
        centroids: result.centroids.clone(),
    };
    Ok((cb, result))
}

/// Triangle-activation encoding sum-pooled over the four quadrants of the
/// patch. Output layout is quadrant-major: `[q * k + j]` with quadrants
/// ordered top-left, top-right, bottom-left, bottom-right.
pub fn encode_unsupervised(p: &Patch, cb: &Codebook) -> Result<FeatureVector> {
    let size = cb.subpatch_size;
    if cb.centroids.len() != cb.k * size * size {
        return Err(Error::DimensionMismatch {
            expected: cb.k * size * size,
            got: cb.centroids.len(),
        });
    }
    let gray = p.to_gray();
    let k = cb.k;
    let mut out = vec![0.0; 4 * k];
    let mut dist = vec![0.0; k];
    for ((r, c), v) in subpatches(&gray, size, cb.stride) {
        let Some(v) = v else { continue };
        for (j, d) in dist.iter_mut().enumerate() {
            *d = sq_dist(&v, cb.centroid(j)).sqrt();
        }
        let mu = dist.iter().sum::<f64>() / k as f64;
        let bottom = 2 * r + size >= gray.height();
        let right = 2 * c + size >= gray.width();
        let q = 2 * bottom as usize + right as usize;
        for (o, d) in out[q * k..(q + 1) * k].iter_mut().zip(&dist) {
            *o += (mu - d).max(0.0);
        }
    }
    Ok(FeatureVector {
        values: out,
        descriptor_id: format!("kmeans:k{}:{}", k, p.dims()),
    })
}
