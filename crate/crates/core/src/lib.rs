//! Scene-text detection for cursive scripts.
//!
//! The pipeline proposes character candidates with channel-enhanced MSER,
//! drops non-text candidates with geometric heuristics and a kernel SVM,
//! links the survivors into horizontal lines and verifies each line with a
//! HOG-based classifier. Training tooling (patch cropping, feature
//! extraction, SMO training) and overlap-ratio evaluation are included.

// `!(x > 0.0)` in validation is meant to reject NaN as well
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub(crate) mod blob;
pub mod corpus;
pub mod error;
pub mod evaluation;
pub mod features;
pub mod imaging;
pub mod linking;
pub mod mser;
pub mod pipeline;
pub mod rect;
pub mod region_analysis;
pub mod svm;

pub use error::{Error, Result};
pub use evaluation::{match_image, score, EvalReport};
pub use features::{Extractor, FeatureScaler, FeatureVector, HogParams};
pub use imaging::{Channel, Dims, GrayImage, Image, Patch};
pub use linking::{link_characters, TextLine};
pub use mser::{MserParams, Polarity, Region};
pub use pipeline::{Detector, PipelineConfig, Stage};
pub use rect::{overlap_ratio, Rect};
pub use region_analysis::{compute_features, geometric_filter, GeomThresholds, RegionFeatures};
pub use svm::{KernelSpec, SvmModel, TrainConfig};
