//! Cached feature maps, caption manifests, vocabularies, and the synthetic
//! dataset generator. Encoders are out of the picture: features arrive as
//! pre-computed cache files.

pub mod dataset;
pub mod features;
pub mod vocab;

pub use dataset::{gen_synthetic, read_manifest, resolve_feature_path, write_manifest, CaptionRecord};
pub use features::{read_feature_file, write_feature_file, FeatureMap};
pub use vocab::{build_vocab, tokenize, Vocabulary, BOS, EOS, PAD, UNK};
