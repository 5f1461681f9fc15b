//! The four detection stages wired together, their configuration, stage
//! dumps for resuming a run, and the training-set builders around them.

mod train;

use std::path::Path;
use std::time::{Duration, Instant};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

pub use train::{
    build_line_set, build_patch_set, evaluate_patch_model, features_of, mine_candidates,
    render_sweep, standard_grid, sweep, train_line_model, train_patch_model, LineSet, SweepCell,
    SweepRow,
};

use crate::corpus::{read_jsonl, CorpusManifest, Split};
use crate::error::{Error, Result};
use crate::evaluation::{match_image, score, Averaging, EvalReport, ImageEval};
use crate::features::{Extractor, HogParams};
use crate::imaging::{resize_patch, Dims, Image, Patch};
use crate::linking::{link_characters_with, verify_lines, LineSummary, TextLine};
use crate::mser::{channel_enhanced_mser, MserParams, Region};
use crate::rect::Rect;
use crate::region_analysis::{geometric_filter, GeomThresholds};
use crate::svm::{predict, KernelKind, KernelSpec, SvmModel, TrainConfig, TEXT};

/// Format tag of stage dump records.
pub const STAGE_FORMAT: &str = "stp-stage/v1";

/// How candidate patches are described for the patch classifier.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum PatchFeatures {
    Hog { cell_size: usize },
    Kmeans { k: usize },
}

impl Default for PatchFeatures {
    fn default() -> Self {
        PatchFeatures::Hog { cell_size: 4 }
    }
}

/// Kernel choice with the scale left open until the feature length is known.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct KernelConfig {
    pub kind: KernelKind,
    pub degree: u32,
    /// Defaults to `1 / dimension`.
    pub gamma: Option<f64>,
    pub coef0: f64,
}

impl Default for KernelConfig {
    fn default() -> Self {
        KernelConfig::poly(5)
    }
}

impl KernelConfig {
    pub fn poly(degree: u32) -> Self {
        KernelConfig {
            kind: KernelKind::Polynomial,
            degree,
            gamma: None,
            coef0: 1.0,
        }
    }

    pub fn of_kind(kind: KernelKind) -> Self {
        KernelConfig {
            kind,
            ..KernelConfig::poly(3)
        }
    }

    pub fn resolve(&self, dim: usize) -> Result<KernelSpec> {
        let gamma = self.gamma.unwrap_or(1.0 / dim.max(1) as f64);
        let spec = match self.kind {
            KernelKind::Linear => KernelSpec::linear(),
            KernelKind::Rbf => KernelSpec::rbf(gamma),
            KernelKind::Polynomial => KernelSpec::polynomial(self.degree, gamma, self.coef0),
        };
        spec.validate()?;
        Ok(spec)
    }

    pub fn label(&self) -> String {
        match self.kind {
            KernelKind::Linear => "linear".into(),
            KernelKind::Rbf => "rbf".into(),
            KernelKind::Polynomial => format!("poly{}", self.degree),
        }
    }
}

/// Sample counts used when building training sets from a manifest.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SamplingConfig {
    /// Use ground-truth rectangles themselves as text patches.
    pub include_gt: bool,
    /// Random background crops per image.
    pub neg_per_image: usize,
    /// Cap on mined candidates per image and class.
    pub mined_per_image: usize,
    /// A candidate is text when this fraction of its box lies in one
    /// ground-truth rectangle.
    pub mined_inside_fraction: f64,
    /// Random line-shaped background crops per image for the line classifier.
    pub line_neg_per_image: usize,
}

impl Default for SamplingConfig {
    fn default() -> Self {
        SamplingConfig {
            include_gt: true,
            neg_per_image: 10,
            mined_per_image: 40,
            mined_inside_fraction: 0.8,
            line_neg_per_image: 6,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PipelineConfig {
    pub seed: u64,
    pub mser: MserParams,
    pub geometry: GeomThresholds,
    pub patch_dims: Dims,
    pub patch_features: PatchFeatures,
    pub patch_kernel: KernelConfig,
    pub line_hog: HogParams,
    pub line_kernel: KernelConfig,
    pub train: TrainConfig,
    /// Keep unlinked candidates as one-member lines.
    pub keep_singletons: bool,
    /// Context added around a candidate box before cropping, as a fraction
    /// of its height.
    pub candidate_margin: f64,
    pub sampling: SamplingConfig,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        PipelineConfig {
            seed: 0,
            mser: MserParams::default(),
            geometry: GeomThresholds::default(),
            patch_dims: Dims::new(40, 36),
            patch_features: PatchFeatures::default(),
            patch_kernel: KernelConfig::default(),
            line_hog: HogParams::default(),
            line_kernel: KernelConfig::default(),
            train: TrainConfig::default(),
            keep_singletons: false,
            candidate_margin: 0.0,
            sampling: SamplingConfig::default(),
        }
    }
}

impl PipelineConfig {
    pub fn validate(&self) -> Result<()> {
        self.mser.validate()?;
        self.geometry.validate()?;
        self.line_hog.validate()?;
        self.train.validate()?;
        if self.patch_dims.height < 8 || self.patch_dims.width < 8 {
            return Err(Error::Config(format!(
                "patch_dims {} is below 8x8",
                self.patch_dims
            )));
        }
        match self.patch_features {
            PatchFeatures::Hog { cell_size } => HogParams::with_cell(cell_size).validate()?,
            PatchFeatures::Kmeans { k: 0 } => {
                return Err(Error::Config("patch_features.k must be at least 1".into()))
            }
            PatchFeatures::Kmeans { .. } => {}
        }
        self.patch_kernel.resolve(1)?;
        self.line_kernel.resolve(1)?;
        if !(self.candidate_margin >= 0.0 && self.candidate_margin <= 2.0) {
            return Err(Error::Config("candidate_margin must be in [0, 2]".into()));
        }
        let s = &self.sampling;
        if !(s.mined_inside_fraction > 0.0 && s.mined_inside_fraction <= 1.0) {
            return Err(Error::Config(
                "sampling.mined_inside_fraction must be in (0, 1]".into(),
            ));
        }
        Ok(())
    }

    pub fn from_toml_str(text: &str) -> Result<Self> {
        let cfg: PipelineConfig = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn from_json_str(text: &str) -> Result<Self> {
        let cfg: PipelineConfig =
            serde_json::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    /// Load TOML, or JSON when the file name ends in `.json`.
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        if path
            .extension()
            .is_some_and(|e| e.eq_ignore_ascii_case("json"))
        {
            Self::from_json_str(&text)
        } else {
            Self::from_toml_str(&text)
        }
    }
}

/// Pipeline stages in execution order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(try_from = "u8", into = "u8")]
pub enum Stage {
    Extract = 1,
    Filter = 2,
    Link = 3,
    Verify = 4,
}

impl Stage {
    pub const ALL: [Stage; 4] = [Stage::Extract, Stage::Filter, Stage::Link, Stage::Verify];

    pub fn name(self) -> &'static str {
        match self {
            Stage::Extract => "extract",
            Stage::Filter => "filter",
            Stage::Link => "link",
            Stage::Verify => "verify",
        }
    }

    pub fn next(self) -> Option<Stage> {
        Stage::ALL.get(self as usize).copied()
    }
}

impl TryFrom<u8> for Stage {
    type Error = Error;

    fn try_from(n: u8) -> Result<Stage> {
        Stage::ALL
            .get((n as usize).wrapping_sub(1))
            .copied()
            .ok_or_else(|| Error::Config(format!("stage must be 1 to 4, got {n}")))
    }
}

impl From<Stage> for u8 {
    fn from(s: Stage) -> u8 {
        s as u8
    }
}

/// Output of a stage: candidate regions after stages 1 and 2, lines after 3
/// and 4.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum StageData {
    Regions(Vec<Region>),
    Lines(Vec<TextLine>),
}

impl StageData {
    /// Lines of a completed run.
    pub fn lines(&self) -> &[TextLine] {
        match self {
            StageData::Lines(l) => l,
            StageData::Regions(_) => &[],
        }
    }
}

/// One image's intermediate result, written by `--dump-stage`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StageDump {
    pub format: String,
    pub image: String,
    /// The stage that produced `data`.
    pub stage: Stage,
    pub data: StageData,
}

/// Final detections for one image.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ImageDetections {
    pub image: String,
    pub lines: Vec<LineSummary>,
}

impl ImageDetections {
    pub fn rects(&self) -> Vec<Rect> {
        self.lines.iter().map(|l| l.bbox).collect()
    }
}

/// Wall time spent in each stage.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct StageTimings(pub [Duration; 4]);

impl StageTimings {
    pub fn add(&mut self, other: &StageTimings) {
        for (a, b) in self.0.iter_mut().zip(other.0) {
            *a += b;
        }
    }
}

/// Candidate box grown by `margin` times its height on every side.
pub fn candidate_rect(r: &Region, margin: f64) -> Rect {
    let pad = (margin * r.bbox.height as f64).round() as i64;
    Rect::new(
        r.bbox.top - pad,
        r.bbox.left - pad,
        r.bbox.height + 2 * pad,
        r.bbox.width + 2 * pad,
    )
}

/// Crop a candidate's box (clamped to the image) and resize it to `dims`.
pub fn candidate_patch(img: &Image, r: &Region, margin: f64, dims: Dims) -> Result<Patch> {
    let rect = candidate_rect(r, margin);
    let clamped = rect
        .clamp_to(img.height(), img.width())
        .ok_or(Error::DegenerateRect(rect))?;
    resize_patch(&Patch::from_image(&img.crop(&clamped)?), dims)
}

/// Patch classifier label and margin for each candidate. The model must
/// carry a patch extractor.
pub fn classify_candidates(
    img: &Image,
    regions: &[Region],
    model: &SvmModel,
    margin: f64,
) -> Result<Vec<(i8, f64)>> {
    let (ex, dims) = match &model.extractor {
        Some(ex @ (Extractor::Hog { dims, .. } | Extractor::Unsupervised { dims, .. })) => {
            (ex, *dims)
        }
        _ => {
            return Err(Error::DescriptorMismatch {
                expected: "a patch descriptor (hog or kmeans)".into(),
                got: model.descriptor_id.clone(),
            })
        }
    };
    regions
        .par_iter()
        .map(|r| {
            let p = candidate_patch(img, r, margin, dims)?;
            predict(model, &ex.extract(&p)?)
        })
        .collect()
}

/// Trained pipeline: configuration plus the patch and line classifiers.
#[derive(Debug, Clone)]
pub struct Detector {
    pub config: PipelineConfig,
    pub patch_model: SvmModel,
    pub line_model: SvmModel,
}

fn is_line_descriptor(id: &str) -> bool {
    id.starts_with("hog-line:")
}

impl Detector {
    /// Refuses models whose descriptors do not fit their role.
    pub fn new(
        config: PipelineConfig,
        patch_model: SvmModel,
        line_model: SvmModel,
    ) -> Result<Self> {
        config.validate()?;
        match &patch_model.extractor {
            Some(Extractor::Hog { .. } | Extractor::Unsupervised { .. }) => {}
            _ => {
                return Err(Error::DescriptorMismatch {
                    expected: "a patch descriptor (hog or kmeans)".into(),
                    got: patch_model.descriptor_id.clone(),
                })
            }
        }
        if !is_line_descriptor(&line_model.descriptor_id) {
            return Err(Error::DescriptorMismatch {
                expected: "a line descriptor (hog-line)".into(),
                got: line_model.descriptor_id.clone(),
            });
        }
        Ok(Detector {
            config,
            patch_model,
            line_model,
        })
    }

    /// Stage 1: channel-enhanced MSER.
    pub fn extract(&self, img: &Image) -> Vec<Region> {
        channel_enhanced_mser(img, &self.config.mser)
    }

    /// Stage 2: geometric rules, then the patch classifier.
    pub fn filter(&self, img: &Image, regions: &[Region]) -> Result<Vec<Region>> {
        let kept = geometric_filter(regions, &self.config.geometry);
        let labels =
            classify_candidates(img, &kept, &self.patch_model, self.config.candidate_margin)?;
        Ok(kept
            .into_iter()
            .zip(labels)
            .filter(|(_, (l, _))| *l == TEXT)
            .map(|(r, _)| r)
            .collect())
    }

    /// Stage 3: centroid-rule linking.
    pub fn link(&self, regions: &[Region]) -> Vec<TextLine> {
        link_characters_with(regions, self.config.keep_singletons)
    }

    /// Stage 4: line classifier.
    pub fn verify(&self, img: &Image, lines: &[TextLine]) -> Result<Vec<TextLine>> {
        verify_lines(lines, img, &self.line_model)
    }

    /// Run stages `from..=to` on `input`, which must be the output of the
    /// stage before `from` (ignored when `from` is stage 1).
    pub fn run_stages(
        &self,
        img: &Image,
        from: Stage,
        to: Stage,
        input: Option<StageData>,
        timings: &mut StageTimings,
    ) -> Result<StageData> {
        if from > to {
            return Err(Error::Config(format!(
                "cannot run from stage {} to stage {}",
                from as u8, to as u8
            )));
        }
        let mut data = match (from, input) {
            (Stage::Extract, _) => StageData::Regions(Vec::new()),
            (Stage::Filter | Stage::Link, Some(d @ StageData::Regions(_))) => d,
            (Stage::Verify, Some(d @ StageData::Lines(_))) => d,
            (_, _) => {
                return Err(Error::Config(format!(
                    "stage {} needs the output of stage {}",
                    from as u8,
                    from as u8 - 1
                )))
            }
        };
        for stage in Stage::ALL.into_iter().filter(|s| (from..=to).contains(s)) {
            let start = Instant::now();
            data = match (stage, data) {
                (Stage::Extract, _) => StageData::Regions(self.extract(img)),
                (Stage::Filter, StageData::Regions(r)) => StageData::Regions(self.filter(img, &r)?),
                (Stage::Link, StageData::Regions(r)) => StageData::Lines(self.link(&r)),
                (Stage::Verify, StageData::Lines(l)) => StageData::Lines(self.verify(img, &l)?),
                (s, _) => {
                    return Err(Error::Invariant(format!(
                        "stage {} got the wrong input",
                        s.name()
                    )))
                }
            };
            timings.0[stage as usize - 1] += start.elapsed();
        }
        Ok(data)
    }

    /// All four stages.
    pub fn detect(&self, img: &Image) -> Result<Vec<TextLine>> {
        let mut t = StageTimings::default();
        match self.run_stages(img, Stage::Extract, Stage::Verify, None, &mut t)? {
            StageData::Lines(l) => Ok(l),
            StageData::Regions(_) => Err(Error::Invariant("detection ended with regions".into())),
        }
    }
}

/// Score detections against a manifest split. Images without a record count
/// as having no detections; a record naming an image outside the split is an
/// error.
pub fn evaluate_detections(
    detections: &[ImageDetections],
    m: &CorpusManifest,
    split: Option<Split>,
    averaging: Averaging,
) -> Result<EvalReport> {
    let mut by_id = std::collections::BTreeMap::new();
    for d in detections {
        if by_id.insert(d.image.as_str(), d).is_some() {
            return Err(Error::IdMismatch(format!(
                "duplicate detections for `{}`",
                d.image
            )));
        }
    }
    let entries: Vec<_> = m.split(split).collect();
    let known: std::collections::BTreeSet<&str> =
        entries.iter().map(|e| e.image.as_str()).collect();
    if let Some(extra) = by_id.keys().find(|id| !known.contains(*id)) {
        return Err(Error::IdMismatch(format!(
            "`{extra}` is not in the manifest"
        )));
    }
    let per_image = entries
        .iter()
        .map(|e| {
            let rects = by_id
                .get(e.image.as_str())
                .map(|d| d.rects())
                .unwrap_or_default();
            Ok(ImageEval {
                image_id: e.image.clone(),
                tp: match_image(&rects, &e.rects)?.tp,
                n_detections: rects.len(),
                n_gt: e.rects.len(),
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(score(per_image, averaging))
}

pub fn read_detections(path: &Path) -> Result<Vec<ImageDetections>> {
    read_jsonl(path)
}

pub fn read_stage_dumps(path: &Path) -> Result<Vec<StageDump>> {
    let dumps: Vec<StageDump> = read_jsonl(path)?;
    if let Some(d) = dumps.iter().find(|d| d.format != STAGE_FORMAT) {
        return Err(Error::ModelVersion {
            found: d.format.clone(),
            expected: STAGE_FORMAT.into(),
        });
    }
    Ok(dumps)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn config_round_trips_through_toml_and_json() {
        let cfg = PipelineConfig::default();
        let toml_text = toml::to_string(&cfg).unwrap();
        assert_eq!(PipelineConfig::from_toml_str(&toml_text).unwrap(), cfg);
        let json = serde_json::to_string(&cfg).unwrap();
        assert_eq!(PipelineConfig::from_json_str(&json).unwrap(), cfg);
    }

    #[test]
    fn partial_config_fills_defaults() {
        let cfg = PipelineConfig::from_toml_str(
            "seed = 7\npatch_dims = \"46x42\"\n[patch_kernel]\nkind = \"rbf\"\n[geometry]\nswv_enabled = true\n",
        )
        .unwrap();
        assert_eq!(cfg.seed, 7);
        assert_eq!(cfg.patch_dims, Dims::new(46, 42));
        assert_eq!(cfg.patch_kernel.kind, KernelKind::Rbf);
        assert!(cfg.geometry.swv_enabled);
        assert_eq!(cfg.mser, MserParams::default());
    }

    #[test]
    fn bad_config_is_rejected() {
        assert!(PipelineConfig::from_toml_str("bogus = 1").is_err());
        assert!(PipelineConfig::from_toml_str("patch_dims = \"4x4\"").is_err());
        assert!(
            PipelineConfig::from_toml_str("[patch_features]\nkind = \"hog\"\ncell_size = 0")
                .is_err()
        );
        assert!(PipelineConfig::from_toml_str("[patch_kernel]\nkind = \"sigmoid\"").is_err());
    }

    #[test]
    fn stage_numbers() {
        assert_eq!(Stage::try_from(3).unwrap(), Stage::Link);
        assert!(Stage::try_from(0).is_err());
        assert!(Stage::try_from(5).is_err());
        assert_eq!(Stage::Link.next(), Some(Stage::Verify));
        assert_eq!(Stage::Verify.next(), None);
    }

    #[test]
    fn kernel_gamma_defaults_to_inverse_dimension() {
        let k = KernelConfig::poly(5).resolve(200).unwrap();
        assert_eq!(k.gamma, 1.0 / 200.0);
        assert_eq!(k.degree, 5);
        assert_eq!(KernelConfig::of_kind(KernelKind::Linear).label(), "linear");
    }

    #[test]
    fn candidate_rect_margin() {
        let r = Region::from_mask(&[true; 20], 10, 2, 5, 5).unwrap();
        assert_eq!(candidate_rect(&r, 0.0), r.bbox);
        assert_eq!(candidate_rect(&r, 0.2), Rect::new(3, 3, 14, 6));
    }
}
