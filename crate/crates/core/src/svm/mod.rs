//! Two-class kernel SVM: SMO training, prediction, classifier metrics and a
//! versioned model file.

mod kernel;
mod smo;

use std::collections::BTreeMap;
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

pub use kernel::{kernel_eval, KernelKind, KernelSpec};

use crate::error::{Error, Result};
use crate::features::{Extractor, FeatureScaler, FeatureVector};

pub const MODEL_FORMAT: &str = "svm-model/v1";

/// Label of the text class; non-text is `-1`.
pub const TEXT: i8 = 1;
pub const NON_TEXT: i8 = -1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    #[serde(rename = "C")]
    pub c: f64,
    /// KKT tolerance.
    pub tol: f64,
    /// Cap on SMO sweeps over the training set.
    pub max_passes: usize,
    pub seed: u64,
    /// Scale the positive-class bound by `n_neg / n_pos`.
    pub class_weighted: bool,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            c: 1.0,
            tol: 1e-3,
            max_passes: 10_000,
            seed: 0,
            class_weighted: false,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.c > 0.0 && self.c.is_finite()) {
            return Err(Error::Config(format!("C must be positive, got {}", self.c)));
        }
        if !(self.tol > 0.0) {
            return Err(Error::Config(format!(
                "tol must be positive, got {}",
                self.tol
            )));
        }
        if self.max_passes == 0 {
            return Err(Error::Config("max_passes must be at least 1".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainMetadata {
    pub seed: u64,
    #[serde(rename = "C")]
    pub c: f64,
    pub tol: f64,
    pub class_weighted: bool,
    pub converged: bool,
    pub passes: usize,
    pub n_train: usize,
    pub n_positive: usize,
}

/// Raw dual solution of a training run.
#[derive(Debug, Clone, PartialEq)]
pub struct DualSolution {
    /// One multiplier per training sample, in `[0, C_i]`.
    pub alpha: Vec<f64>,
    /// Per-sample box bound actually used.
    pub bounds: Vec<f64>,
    pub bias: f64,
    pub passes: usize,
    pub converged: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SvmModel {
    pub kernel: KernelSpec,
    pub dim: usize,
    /// Support vectors in scaled feature space, one after another.
    #[serde(with = "crate::blob")]
    pub support_vectors: Vec<f64>,
    /// `alpha_i * y_i` per support vector.
    #[serde(with = "crate::blob")]
    pub coef: Vec<f64>,
    pub bias: f64,
    pub scaler: FeatureScaler,
    pub descriptor_id: String,
    /// Extractor that produced the training features, when known.
    pub extractor: Option<Extractor>,
    pub metadata: TrainMetadata,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ClassifierMetrics {
    pub precision: f64,
    pub recall: f64,
    pub f_measure: f64,
    pub accuracy: f64,
    pub true_positives: usize,
    pub false_positives: usize,
    pub true_negatives: usize,
    pub false_negatives: usize,
}

impl ClassifierMetrics {
    /// Metrics with text (`+1`) as the positive class.
    pub fn from_predictions(predicted: &[i8], truth: &[i8]) -> Result<Self> {
        if predicted.is_empty() {
            return Err(Error::EmptyInput("evaluation set"));
        }
        if predicted.len() != truth.len() {
            return Err(Error::DimensionMismatch {
                expected: truth.len(),
                got: predicted.len(),
            });
        }
        let (mut tp, mut fp, mut tn, mut fn_) = (0, 0, 0, 0);
        for (&p, &t) in predicted.iter().zip(truth) {
            match (p == TEXT, t == TEXT) {
                (true, true) => tp += 1,
                (true, false) => fp += 1,
                (false, false) => tn += 1,
                (false, true) => fn_ += 1,
            }
        }
        let ratio = |a: usize, b: usize| if b == 0 { 0.0 } else { a as f64 / b as f64 };
        let precision = ratio(tp, tp + fp);
        let recall = ratio(tp, tp + fn_);
        Ok(ClassifierMetrics {
            precision,
            recall,
            f_measure: f_measure(precision, recall),
            accuracy: ratio(tp + tn, predicted.len()),
            true_positives: tp,
            false_positives: fp,
            true_negatives: tn,
            false_negatives: fn_,
        })
    }
}

/// Harmonic mean, 0 when both inputs are 0.
pub fn f_measure(p: f64, r: f64) -> f64 {
    if p + r > 0.0 {
        2.0 * p * r / (p + r)
    } else {
        0.0
    }
}

fn check_training_set(features: &[FeatureVector], labels: &[i8]) -> Result<(usize, usize)> {
    if features.is_empty() {
        return Err(Error::EmptyInput("training set"));
    }
    if features.len() != labels.len() {
        return Err(Error::DimensionMismatch {
            expected: features.len(),
            got: labels.len(),
        });
    }
    let dim = features[0].values.len();
    if dim == 0 {
        return Err(Error::EmptyInput("feature vectors"));
    }
    for f in features {
        if f.values.len() != dim {
            return Err(Error::DimensionMismatch {
                expected: dim,
                got: f.values.len(),
            });
        }
        if f.descriptor_id != features[0].descriptor_id {
            return Err(Error::DescriptorMismatch {
                expected: features[0].descriptor_id.clone(),
                got: f.descriptor_id.clone(),
            });
        }
    }
    if let Some(bad) = labels.iter().find(|&&l| l != TEXT && l != NON_TEXT) {
        return Err(Error::Config(format!("labels must be +1 or -1, got {bad}")));
    }
    let n_pos = labels.iter().filter(|&&l| l == TEXT).count();
    if n_pos == 0 || n_pos == labels.len() {
        return Err(Error::SingleClass);
    }
    Ok((dim, n_pos))
}

/// Solve the soft-margin dual on already scaled features.
pub fn train_dual(
    features: &[FeatureVector],
    labels: &[i8],
    kernel: &KernelSpec,
    cfg: &TrainConfig,
) -> Result<DualSolution> {
    kernel.validate()?;
    cfg.validate()?;
    let (dim, n_pos) = check_training_set(features, labels)?;
    let n_neg = labels.len() - n_pos;
    let x: Vec<f64> = features
        .iter()
        .flat_map(|f| f.values.iter().copied())
        .collect();
    let y: Vec<f64> = labels.iter().map(|&l| l as f64).collect();
    let c_pos = if cfg.class_weighted {
        cfg.c * n_neg as f64 / n_pos as f64
    } else {
        cfg.c
    };
    let bounds: Vec<f64> = labels
        .iter()
        .map(|&l| if l == TEXT { c_pos } else { cfg.c })
        .collect();
    let sol = smo::solve(&smo::SmoProblem {
        x: &x,
        dim,
        y: &y,
        c: &bounds,
        kernel: *kernel,
        tol: cfg.tol,
        max_passes: cfg.max_passes,
        seed: cfg.seed,
    });
    Ok(DualSolution {
        alpha: sol.alpha,
        bounds,
        bias: sol.bias,
        passes: sol.passes,
        converged: sol.converged,
    })
}

/// Train on scaled features. The returned model carries an identity scaler;
/// use [`train_classifier`] to fit and embed a scaler as well.
pub fn train_svm(
    features: &[FeatureVector],
    labels: &[i8],
    kernel: &KernelSpec,
    cfg: &TrainConfig,
) -> Result<SvmModel> {
    let sol = train_dual(features, labels, kernel, cfg)?;
    let dim = features[0].values.len();
    let mut support_vectors = Vec::new();
    let mut coef = Vec::new();
    for (i, &a) in sol.alpha.iter().enumerate() {
        if a > 0.0 {
            support_vectors.extend_from_slice(&features[i].values);
            coef.push(a * labels[i] as f64);
        }
    }
    if coef.is_empty() {
        return Err(Error::Invariant(
            "training produced no support vectors".into(),
        ));
    }
    Ok(SvmModel {
        kernel: *kernel,
        dim,
        support_vectors,
        coef,
        bias: sol.bias,
        scaler: FeatureScaler::identity(dim),
        descriptor_id: features[0].descriptor_id.clone(),
        extractor: None,
        metadata: TrainMetadata {
            seed: cfg.seed,
            c: cfg.c,
            tol: cfg.tol,
            class_weighted: cfg.class_weighted,
            converged: sol.converged,
            passes: sol.passes,
            n_train: labels.len(),
            n_positive: labels.iter().filter(|&&l| l == TEXT).count(),
        },
    })
}

/// Fit a scaler on raw features, train on the scaled set and embed both the
/// scaler and the extractor in the model.
pub fn train_classifier(
    features: &[FeatureVector],
    labels: &[i8],
    kernel: &KernelSpec,
    cfg: &TrainConfig,
    extractor: Option<Extractor>,
) -> Result<SvmModel> {
    let scaler = crate::features::fit_scaler(features)?;
    let scaled = features
        .iter()
        .map(|f| crate::features::apply_scaler(&scaler, f))
        .collect::<Result<Vec<_>>>()?;
    let mut model = train_svm(&scaled, labels, kernel, cfg)?;
    model.scaler = scaler;
    model.extractor = extractor;
    Ok(model)
}

impl SvmModel {
    pub fn n_support(&self) -> usize {
        self.coef.len()
    }

    pub fn support_vector(&self, i: usize) -> &[f64] {
        &self.support_vectors[i * self.dim..(i + 1) * self.dim]
    }

    /// Decision value for a vector already in scaled space.
    pub fn decision_scaled(&self, x: &[f64]) -> f64 {
        let mut s = 0.0;
        for (i, c) in self.coef.iter().enumerate() {
            s += c * self.kernel.eval(self.support_vector(i), x);
        }
        s + self.bias
    }

    /// Label and decision value for raw (unscaled) feature values.
    pub fn predict_values(&self, values: &[f64]) -> Result<(i8, f64)> {
        let scaled = self.scaler.apply_values(values)?;
        let score = self.decision_scaled(&scaled);
        Ok((if score >= 0.0 { TEXT } else { NON_TEXT }, score))
    }

    fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::CorruptModel(m));
        if self.dim == 0 || self.coef.is_empty() {
            return bad("model has no support vectors".into());
        }
        if self.support_vectors.len() != self.coef.len() * self.dim {
            return bad(format!(
                "{} support vector values for {} vectors of width {}",
                self.support_vectors.len(),
                self.coef.len(),
                self.dim
            ));
        }
        if self.scaler.mean.len() != self.dim || self.scaler.std.len() != self.dim {
            return bad("scaler width does not match the model".into());
        }
        let finite = self
            .support_vectors
            .iter()
            .chain(&self.coef)
            .all(|v| v.is_finite());
        if !finite || !self.bias.is_finite() || self.scaler.std.iter().any(|s| !(*s > 0.0)) {
            return bad("model contains non-finite values".into());
        }
        if let Some(ex) = &self.extractor {
            if ex.descriptor_id() != self.descriptor_id || ex.dim() != self.dim {
                return bad("extractor does not match the descriptor".into());
            }
            if let Extractor::Unsupervised { codebook, .. } = ex {
                codebook.validate()?;
            }
        }
        self.kernel
            .validate()
            .map_err(|e| Error::CorruptModel(e.to_string()))
    }
}

/// Label (`+1` text / `-1` non-text) and decision value. A score of exactly
/// zero counts as text.
pub fn predict(m: &SvmModel, v: &FeatureVector) -> Result<(i8, f64)> {
    if v.descriptor_id != m.descriptor_id {
        return Err(Error::DescriptorMismatch {
            expected: m.descriptor_id.clone(),
            got: v.descriptor_id.clone(),
        });
    }
    m.predict_values(&v.values)
}

pub fn evaluate_classifier(
    m: &SvmModel,
    features: &[FeatureVector],
    labels: &[i8],
) -> Result<ClassifierMetrics> {
    if features.is_empty() {
        return Err(Error::EmptyInput("evaluation set"));
    }
    let predicted = features
        .par_iter()
        .map(|f| predict(m, f).map(|(l, _)| l))
        .collect::<Result<Vec<_>>>()?;
    ClassifierMetrics::from_predictions(&predicted, labels)
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ModelFile {
    format: String,
    label_map: BTreeMap<String, String>,
    model: SvmModel,
}

fn label_map() -> BTreeMap<String, String> {
    BTreeMap::from([
        ("+1".to_string(), "text".to_string()),
        ("-1".to_string(), "non-text".to_string()),
    ])
}

pub fn model_to_json(m: &SvmModel) -> Result<String> {
    let file = ModelFile {
        format: MODEL_FORMAT.to_string(),
        label_map: label_map(),
        model: m.clone(),
    };
    Ok(serde_json::to_string_pretty(&file)?)
}

pub fn model_from_json(text: &str) -> Result<SvmModel> {
    let value: serde_json::Value =
        serde_json::from_str(text).map_err(|e| Error::CorruptModel(e.to_string()))?;
    match value.get("format").and_then(|f| f.as_str()) {
        Some(MODEL_FORMAT) => {}
        Some(other) => {
            return Err(Error::ModelVersion {
                found: other.to_string(),
                expected: MODEL_FORMAT.to_string(),
            })
        }
        None => return Err(Error::CorruptModel("missing `format` field".into())),
    }
    let file: ModelFile =
        serde_json::from_value(value).map_err(|e| Error::CorruptModel(e.to_string()))?;
    if file.label_map != label_map() {
        return Err(Error::CorruptModel("unexpected label map".into()));
    }
    file.model.validate()?;
    Ok(file.model)
}

pub fn save_model(m: &SvmModel, path: &Path) -> Result<()> {
    crate::error::create_parent(path)?;
    std::fs::write(path, model_to_json(m)?).map_err(|e| Error::io(path, e))
}

pub fn load_model(path: &Path) -> Result<SvmModel> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    model_from_json(&text)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn fv(v: &[f64]) -> FeatureVector {
        FeatureVector {
            values: v.to_vec(),
            descriptor_id: "t".into(),
        }
    }

    fn two_point() -> SvmModel {
        let cfg = TrainConfig {
            c: 1e6,
            ..TrainConfig::default()
        };
        train_svm(
            &[fv(&[-1.0]), fv(&[1.0])],
            &[-1, 1],
            &KernelSpec::linear(),
            &cfg,
        )
        .unwrap()
    }

    #[test]
    fn symmetric_two_point_problem() {
        let m = two_point();
        assert!(m.bias.abs() < 1e-6);
        assert_eq!(predict(&m, &fv(&[1.0])).unwrap().0, TEXT);
        assert_eq!(predict(&m, &fv(&[-1.0])).unwrap().0, NON_TEXT);
        let (label, score) = predict(&m, &fv(&[0.0])).unwrap();
        assert!(score.abs() < 1e-6);
        assert_eq!(label, TEXT);
        let mut prev = f64::NEG_INFINITY;
        for t in 1..10 {
            let s = predict(&m, &fv(&[t as f64])).unwrap().1;
            assert!(s > prev);
            prev = s;
        }
    }

    #[test]
    fn xor_with_cubic_kernel() {
        let x = [
            fv(&[0.0, 0.0]),
            fv(&[1.0, 1.0]),
            fv(&[0.0, 1.0]),
            fv(&[1.0, 0.0]),
        ];
        let y = [-1, -1, 1, 1];
        let cfg = TrainConfig {
            c: 100.0,
            ..TrainConfig::default()
        };
        let m = train_svm(&x, &y, &KernelSpec::polynomial(3, 1.0, 1.0), &cfg).unwrap();
        let metrics = evaluate_classifier(&m, &x, &y).unwrap();
        assert_eq!(metrics.accuracy, 1.0);
        assert!(m.metadata.converged);
    }

    #[test]
    fn rejects_bad_training_sets() {
        let k = KernelSpec::linear();
        let cfg = TrainConfig::default();
        assert!(matches!(
            train_svm(&[], &[], &k, &cfg),
            Err(Error::EmptyInput(_))
        ));
        assert!(matches!(
            train_svm(&[fv(&[1.0]), fv(&[2.0])], &[1, 1], &k, &cfg),
            Err(Error::SingleClass)
        ));
    }

    #[test]
    fn all_positive_predictor_metrics() {
        let pred = [1i8; 10];
        let truth: Vec<i8> = (0..10).map(|i| if i < 5 { 1 } else { -1 }).collect();
        let m = ClassifierMetrics::from_predictions(&pred, &truth).unwrap();
        assert_eq!((m.precision, m.recall, m.accuracy), (0.5, 1.0, 0.5));
        assert!((m.f_measure - 2.0 / 3.0).abs() < 1e-12);
        assert!(ClassifierMetrics::from_predictions(&[], &[]).is_err());
    }

    #[test]
    fn descriptor_mismatch_is_rejected() {
        let m = two_point();
        let v = FeatureVector {
            values: vec![1.0],
            descriptor_id: "other".into(),
        };
        assert!(matches!(
            predict(&m, &v),
            Err(Error::DescriptorMismatch { .. })
        ));
        assert!(matches!(
            predict(&m, &fv(&[1.0, 2.0])),
            Err(Error::DimensionMismatch { .. })
        ));
    }

    #[test]
    fn model_file_round_trip_and_errors() {
        let m = two_point();
        let text = model_to_json(&m).unwrap();
        let back = model_from_json(&text).unwrap();
        assert_eq!(back, m);
        let altered = text.replace(MODEL_FORMAT, "svm-model/v0");
        assert!(matches!(
            model_from_json(&altered),
            Err(Error::ModelVersion { .. })
        ));
        assert!(matches!(
            model_from_json(&text[..text.len() / 2]),
            Err(Error::CorruptModel(_))
        ));
    }
}
