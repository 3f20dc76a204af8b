//! Construction of the hidden-region restoration dataset.

mod corpus;
mod hidden;
mod sample;
mod split;
mod synth;

pub use corpus::{write_corpus, CorpusImage, Manifest, ManifestRecord, PatientScoped};
pub use hidden::{
    generate_hidden_mask, generate_hidden_mask_variant, import_annotation_mask, validate_hidden_mask,
    HiddenRegionPolicy, ShapeFamily,
};
pub use sample::{build_sample, Sample};
pub use split::{split_corpus, CorpusSplit, SplitRole, SplitSpec};
pub use synth::synth_corpus;
