//! Shot feature matrices, ground-truth labelling, the synthetic corpus
//! generator and the on-disk formats for features and corpus manifests.

mod features;
mod manifest;
mod shots;
mod synth;

pub use features::{load_features, read_features, save_features, write_features, FEATURE_MAGIC, FEATURE_VERSION};
pub use manifest::{load_corpus, Manifest, ManifestEntry};
pub(crate) use shots::argmax;
pub use shots::{cosine_sim, ground_truth, GroundTruth, MovieTrailerPair, ShotMatrix};
pub use synth::{synth_pair, write_synthetic_corpus, SynthConfig, SyntheticPair, TrailerOrder};
