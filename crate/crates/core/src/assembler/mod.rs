//! Mixture assembly, dedupe, validation split and output emission.

mod config;
mod dataset;
mod manifest;
mod mixture;

pub use config::{emit_training_config, TrainingConfigPreset, TrainingPaths};
pub use dataset::{dedupe_records, read_dataset, split_validation, write_dataset};
pub use manifest::{
    build_dataset, verify_output, BuildOptions, ComponentCounts, CurationManifest, FileDigest,
    DIGEST_ALGORITHM, MANIFEST_FILE, TRAINING_CONFIG_FILE, TRAIN_FILE, VALIDATION_FILE,
};
pub use mixture::{assemble_mixture, Mixture, MixtureComponent, MixtureSpec, KNOWN_PRESETS};

use std::path::PathBuf;

#[derive(Debug, thiserror::Error)]
pub enum AssembleError {
    #[error("unknown mixture preset {name:?}; known presets: {}", KNOWN_PRESETS.join(", "))]
    UnknownPreset { name: String },
    #[error("no record stream for mixture component(s): {}", .0.join(", "))]
    MissingSources(Vec<String>),
    #[error("validation split of {requested} exceeds the {available} available records")]
    ValidationTooLarge { requested: usize, available: usize },
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}:{line}: {problem}")]
    Format {
        path: PathBuf,
        line: usize,
        problem: String,
    },
}

impl AssembleError {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        AssembleError::Io {
            path: path.into(),
            source,
        }
    }
}
