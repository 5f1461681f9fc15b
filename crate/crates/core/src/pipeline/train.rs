use rand::seq::SliceRandom;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{candidate_patch, classify_candidates, KernelConfig, PatchFeatures, PipelineConfig};
use crate::corpus::{
    crop_image_patches, image_rng, random_background, CorpusManifest, LabeledPatch, PatchSet,
    Split, NEGATIVE_MAX_OVERLAP,
};
use crate::error::{Error, Result};
use crate::evaluation::MATCH_THRESHOLD;
use crate::features::{learn_codebook, Extractor, FeatureVector, HogParams};
use crate::imaging::{load_image, to_grayscale, Dims, Image, Patch};
use crate::linking::{crop_line, link_characters_with};
use crate::mser::{channel_enhanced_mser, Region};
use crate::rect::{iou_unchecked, Rect};
use crate::region_analysis::geometric_filter;
use crate::svm::{
    evaluate_classifier, train_classifier, ClassifierMetrics, SvmModel, TrainConfig, NON_TEXT, TEXT,
};

/// Shape of the random background crops offered to the line classifier.
const LINE_NEGATIVE_SHAPE: Dims = Dims::new(24, 96);

/// Features of every patch, in order.
pub fn features_of(ex: &Extractor, patches: &[&Patch]) -> Result<Vec<FeatureVector>> {
    patches.par_iter().map(|p| ex.extract(p)).collect()
}

/// Candidates of one image after the geometric rules, split into those lying
/// mostly inside one ground-truth rectangle and those touching none.
/// Candidates that straddle a rectangle are left out.
pub fn mine_candidates(
    img: &Image,
    gt: &[Rect],
    cfg: &PipelineConfig,
) -> (Vec<Region>, Vec<Region>) {
    let kept = geometric_filter(&channel_enhanced_mser(img, &cfg.mser), &cfg.geometry);
    let mut text = Vec::new();
    let mut background = Vec::new();
    for r in kept {
        let area = r.bbox.area() as f64;
        let inside = gt
            .iter()
            .map(|g| r.bbox.intersection_area(g) as f64 / area)
            .fold(0.0, f64::max);
        if inside >= cfg.sampling.mined_inside_fraction {
            text.push(r);
        } else if inside == 0.0 {
            background.push(r);
        }
    }
    (text, background)
}

fn sample<T>(mut items: Vec<T>, cap: usize, rng: &mut ChaCha8Rng) -> Vec<T> {
    if items.len() > cap {
        items.partial_shuffle(rng, cap);
        items.truncate(cap);
    }
    items
}

fn split_entries(
    m: &CorpusManifest,
    split: Option<Split>,
) -> Result<Vec<&crate::corpus::ManifestEntry>> {
    let entries: Vec<_> = m.split(split).collect();
    if entries.is_empty() {
        return Err(Error::EmptyInput("manifest split"));
    }
    Ok(entries)
}

/// Patch classifier training set for one split: ground-truth crops and random
/// background crops, plus MSER candidates labelled by where they fall
/// relative to the ground truth. All patches are resized to `patch_dims`.
pub fn build_patch_set(
    m: &CorpusManifest,
    split: Option<Split>,
    cfg: &PipelineConfig,
) -> Result<PatchSet> {
    cfg.validate()?;
    let s = &cfg.sampling;
    let per_image = split_entries(m, split)?
        .par_iter()
        .enumerate()
        .map(|(index, entry)| {
            let img = load_image(&m.image_path(entry))?;
            let mut rng = image_rng(cfg.seed, index);
            let mut set = crop_image_patches(
                &img,
                &entry.rects,
                cfg.patch_dims,
                s.include_gt,
                s.neg_per_image,
                &mut rng,
            )?;
            let (text, background) = mine_candidates(&img, &entry.rects, cfg);
            for (regions, label) in [(text, TEXT), (background, NON_TEXT)] {
                for r in sample(regions, s.mined_per_image, &mut rng) {
                    set.items.push(LabeledPatch {
                        patch: candidate_patch(&img, &r, cfg.candidate_margin, cfg.patch_dims)?,
                        label,
                    });
                }
            }
            Ok(set)
        })
        .collect::<Result<Vec<_>>>()?;
    let mut out = PatchSet::default();
    for set in per_image {
        out.extend(set);
    }
    Ok(out)
}

fn check_classes(labels: &[i8]) -> Result<()> {
    let pos = labels.iter().filter(|&&l| l == TEXT).count();
    let neg = labels.len() - pos;
    if pos < 2 || neg < 2 {
        return Err(Error::InsufficientSamples(format!(
            "need at least 2 samples per class, got {pos} text and {neg} non-text"
        )));
    }
    Ok(())
}

fn patch_extractor(
    set: &PatchSet,
    features: &PatchFeatures,
    dims: Dims,
    seed: u64,
) -> Result<Extractor> {
    Ok(match *features {
        PatchFeatures::Hog { cell_size } => Extractor::Hog {
            params: HogParams::with_cell(cell_size),
            dims,
        },
        PatchFeatures::Kmeans { k } => {
            let resized = set
                .items
                .par_iter()
                .map(|i| crate::imaging::resize_patch(&i.patch.to_gray_patch(), dims))
                .collect::<Result<Vec<_>>>()?;
            Extractor::Unsupervised {
                codebook: learn_codebook(&resized, k, seed)?,
                dims,
            }
        }
    })
}

fn train_on_set(
    set: &PatchSet,
    features: &PatchFeatures,
    dims: Dims,
    kernel: &KernelConfig,
    train: &TrainConfig,
    seed: u64,
) -> Result<SvmModel> {
    let labels: Vec<i8> = set.items.iter().map(|i| i.label).collect();
    check_classes(&labels)?;
    let ex = patch_extractor(set, features, dims, seed)?;
    let patches: Vec<&Patch> = set.items.iter().map(|i| &i.patch).collect();
    let fv = features_of(&ex, &patches)?;
    let spec = kernel.resolve(ex.dim())?;
    train_classifier(&fv, &labels, &spec, train, Some(ex))
}

/// Train the candidate classifier with the configured descriptor and kernel.
pub fn train_patch_model(set: &PatchSet, cfg: &PipelineConfig) -> Result<SvmModel> {
    cfg.validate()?;
    train_on_set(
        set,
        &cfg.patch_features,
        cfg.patch_dims,
        &cfg.patch_kernel,
        &cfg.train,
        cfg.seed,
    )
}

/// Accuracy, precision, recall and F of a patch model on a labelled set.
pub fn evaluate_patch_model(model: &SvmModel, set: &PatchSet) -> Result<ClassifierMetrics> {
    let ex = model
        .extractor
        .as_ref()
        .ok_or_else(|| Error::DescriptorMismatch {
            expected: "a model with an embedded extractor".into(),
            got: model.descriptor_id.clone(),
        })?;
    let patches: Vec<&Patch> = set.items.iter().map(|i| &i.patch).collect();
    let labels: Vec<i8> = set.items.iter().map(|i| i.label).collect();
    evaluate_classifier(model, &features_of(ex, &patches)?, &labels)
}

/// Grayscale line crops at native size with their labels.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct LineSet {
    pub crops: Vec<Patch>,
    pub labels: Vec<i8>,
}

impl LineSet {
    pub fn count(&self, label: i8) -> usize {
        self.labels.iter().filter(|&&l| l == label).count()
    }
}

/// Line classifier training set: ground-truth lines and candidate lines that
/// match one are text; candidate lines clear of all ground truth and random
/// line-shaped background crops are not. Candidate lines come from stages 1
/// to 3 with `patch_model` as the candidate classifier.
pub fn build_line_set(
    m: &CorpusManifest,
    split: Option<Split>,
    cfg: &PipelineConfig,
    patch_model: &SvmModel,
) -> Result<LineSet> {
    cfg.validate()?;
    let per_image = split_entries(m, split)?
        .par_iter()
        .enumerate()
        .map(|(index, entry)| {
            let img = load_image(&m.image_path(entry))?;
            let gray = to_grayscale(&img);
            let mut rng = image_rng(cfg.seed, index);
            let mut out = LineSet::default();
            let push = |out: &mut LineSet, rect: &Rect, label: i8| -> Result<()> {
                out.crops.push(crop_line(&gray, rect)?);
                out.labels.push(label);
                Ok(())
            };
            for r in &entry.rects {
                if r.clamp_to(img.height(), img.width()).is_some() {
                    push(&mut out, r, TEXT)?;
                }
            }
            let kept = geometric_filter(&channel_enhanced_mser(&img, &cfg.mser), &cfg.geometry);
            let scores = classify_candidates(&img, &kept, patch_model, cfg.candidate_margin)?;
            let text: Vec<Region> = kept
                .into_iter()
                .zip(scores)
                .filter(|(_, (l, _))| *l == TEXT)
                .map(|(r, _)| r)
                .collect();
            for line in link_characters_with(&text, cfg.keep_singletons) {
                let best = entry
                    .rects
                    .iter()
                    .map(|g| iou_unchecked(&line.bbox, g))
                    .fold(0.0, f64::max);
                if best >= MATCH_THRESHOLD {
                    push(&mut out, &line.bbox, TEXT)?;
                } else if best < NEGATIVE_MAX_OVERLAP {
                    push(&mut out, &line.bbox, NON_TEXT)?;
                }
            }
            for _ in 0..cfg.sampling.line_neg_per_image {
                if let Some(r) =
                    random_background(&mut rng, &img, &entry.rects, LINE_NEGATIVE_SHAPE)
                {
                    push(&mut out, &r, NON_TEXT)?;
                }
            }
            Ok(out)
        })
        .collect::<Result<Vec<_>>>()?;
    let mut out = LineSet::default();
    for set in per_image {
        out.crops.extend(set.crops);
        out.labels.extend(set.labels);
    }
    Ok(out)
}

/// Train the line verifier on line HOG descriptors.
pub fn train_line_model(set: &LineSet, cfg: &PipelineConfig) -> Result<SvmModel> {
    cfg.validate()?;
    check_classes(&set.labels)?;
    let ex = Extractor::LineHog {
        params: cfg.line_hog,
    };
    let crops: Vec<&Patch> = set.crops.iter().collect();
    let fv = features_of(&ex, &crops)?;
    let spec = cfg.line_kernel.resolve(ex.dim())?;
    train_classifier(&fv, &set.labels, &spec, &cfg.train, Some(ex))
}

/// One configuration of the patch classifier grid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepCell {
    /// Which table of the sweep the cell belongs to.
    #[serde(default)]
    pub group: String,
    pub dims: Dims,
    pub kernel: KernelConfig,
    #[serde(default = "default_cell_size")]
    pub cell_size: usize,
}

fn default_cell_size() -> usize {
    4
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub group: String,
    pub dims: Dims,
    pub kernel: String,
    pub cell_size: usize,
    pub descriptor_id: String,
    pub n_support: usize,
    pub converged: bool,
    pub metrics: ClassifierMetrics,
}

/// Patch dimensions × {linear, rbf, poly3}; polynomial degrees 3 to 6; HOG
/// cell sizes 2, 4, 8 and 12 with the degree-5 kernel.
pub fn standard_grid() -> Vec<SweepCell> {
    use crate::svm::KernelKind;
    let base = Dims::new(40, 36);
    let mut cells = Vec::new();
    for dims in [base, Dims::new(46, 42), Dims::new(54, 50)] {
        for kind in [KernelKind::Linear, KernelKind::Rbf, KernelKind::Polynomial] {
            cells.push(SweepCell {
                group: "kernel".into(),
                dims,
                kernel: KernelConfig::of_kind(kind),
                cell_size: 4,
            });
        }
    }
    for degree in 3..=6 {
        cells.push(SweepCell {
            group: "degree".into(),
            dims: base,
            kernel: KernelConfig::poly(degree),
            cell_size: 4,
        });
    }
    for cell_size in [2, 4, 8, 12] {
        cells.push(SweepCell {
            group: "cell".into(),
            dims: base,
            kernel: KernelConfig::poly(5),
            cell_size,
        });
    }
    cells
}

/// Train and test a HOG patch classifier for every cell. Cells run in
/// parallel; each result depends only on its cell, the sets and `train`.
pub fn sweep(
    train_set: &PatchSet,
    test_set: &PatchSet,
    cells: &[SweepCell],
    train: &TrainConfig,
) -> Result<Vec<SweepRow>> {
    train.validate()?;
    for c in cells {
        c.kernel.resolve(1)?;
        HogParams::with_cell(c.cell_size).validate()?;
    }
    check_classes(&train_set.items.iter().map(|i| i.label).collect::<Vec<_>>())?;
    if test_set.items.is_empty() {
        return Err(Error::EmptyInput("sweep test set"));
    }
    cells
        .par_iter()
        .map(|c| {
            let features = PatchFeatures::Hog {
                cell_size: c.cell_size,
            };
            let model = train_on_set(train_set, &features, c.dims, &c.kernel, train, train.seed)?;
            Ok(SweepRow {
                group: c.group.clone(),
                dims: c.dims,
                kernel: c.kernel.label(),
                cell_size: c.cell_size,
                descriptor_id: model.descriptor_id.clone(),
                n_support: model.n_support(),
                converged: model.metadata.converged,
                metrics: evaluate_patch_model(&model, test_set)?,
            })
        })
        .collect()
}

/// Aligned text table of sweep rows.
pub fn render_sweep(rows: &[SweepRow]) -> String {
    let mut out = format!(
        "{:<8} {:<7} {:<7} {:>4} {:>9} {:>9} {:>9} {:>9}\n",
        "group", "dims", "kernel", "cell", "accuracy", "precision", "recall", "F"
    );
    for r in rows {
        out.push_str(&format!(
            "{:<8} {:<7} {:<7} {:>4} {:>9.4} {:>9.4} {:>9.4} {:>9.4}\n",
            r.group,
            r.dims.to_string(),
            r.kernel,
            r.cell_size,
            r.metrics.accuracy,
            r.metrics.precision,
            r.metrics.recall,
            r.metrics.f_measure
        ));
    }
    out
}
