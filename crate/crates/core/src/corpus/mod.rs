//! Annotated image sets: manifest files, training patch extraction and a
//! deterministic synthetic scene generator.

mod manifest;
mod patches;
mod synth;

pub use manifest::{
    read_jsonl, read_manifest, write_jsonl, write_manifest, CorpusManifest, ManifestEntry, Split,
};
pub use patches::{crop_patches, crop_resized, LabeledPatch, PatchSet, NEGATIVE_MAX_OVERLAP};
pub use synth::{generate_synthetic, render_scene, SynthConfig};

pub(crate) use patches::{crop_image_patches, image_rng, random_background};
