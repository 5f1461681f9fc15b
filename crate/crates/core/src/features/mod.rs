//! Feature extraction for the two classifiers: HOG descriptors for patches
//! and text lines, k-means codebook encodings, and standardization.

mod codebook;
mod hog;
mod scaler;

use serde::{Deserialize, Serialize};

pub use codebook::{
    encode_unsupervised, kmeans, learn_codebook, learn_codebook_with, Codebook, KmeansConfig,
    KmeansResult, SUBPATCH_SIZE, SUBPATCH_STRIDE,
};
pub use hog::{hog, line_canvas, line_descriptor_id, line_hog, HogParams, LINE_CANVAS};
pub use scaler::{apply_scaler, fit_scaler, FeatureScaler};

use crate::error::Result;
use crate::imaging::{resize_patch, Dims, Patch};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureVector {
    pub values: Vec<f64>,
    /// Identifies the extractor and its parameters, e.g. `hog:c4:40x36`.
    pub descriptor_id: String,
}

impl FeatureVector {
    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }
}

/// A configured feature extractor: resizes its input to a fixed canvas and
/// produces fixed-length vectors.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum Extractor {
    Hog { params: HogParams, dims: Dims },
    Unsupervised { codebook: Codebook, dims: Dims },
    LineHog { params: HogParams },
}

impl Extractor {
    pub fn descriptor_id(&self) -> String {
        match self {
            Extractor::Hog { params, dims } => params.descriptor_id(*dims),
            Extractor::Unsupervised { codebook, dims } => {
                format!("kmeans:k{}:{}", codebook.k, dims)
            }
            Extractor::LineHog { params } => line_descriptor_id(params),
        }
    }

    pub fn dim(&self) -> usize {
        match self {
            Extractor::Hog { params, dims } => params.descriptor_len(*dims),
            Extractor::Unsupervised { codebook, .. } => 4 * codebook.k,
            Extractor::LineHog { params } => params.descriptor_len(LINE_CANVAS),
        }
    }

    pub fn extract(&self, p: &Patch) -> Result<FeatureVector> {
        match self {
            Extractor::Hog { params, dims } => {
                hog(&resize_patch(&p.to_gray_patch(), *dims)?, params)
            }
            Extractor::Unsupervised { codebook, dims } => {
                encode_unsupervised(&resize_patch(&p.to_gray_patch(), *dims)?, codebook)
            }
            Extractor::LineHog { params } => line_hog(p, params),
        }
    }
}
