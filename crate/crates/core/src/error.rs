use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("io error at {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("unknown class directory `{name}` under {root}")]
    UnknownClassDirectory { name: String, root: PathBuf },

    #[error("unreadable or unsupported image files: {}", list_paths(.0))]
    UnreadableImages(Vec<PathBuf>),

    #[error("unmapped class: {0}")]
    UnmappedClass(String),

    #[error("class map sends {from} to {to}, only Normal and Cancer are valid targets")]
    InvalidMapTarget { from: String, to: String },

    #[error("duplicate sample id `{0}`")]
    DuplicateSampleId(String),

    #[error("duplicate path {0}")]
    DuplicatePath(PathBuf),

    #[error("invalid split ratios: {0}")]
    InvalidRatios(String),

    #[error("class {class} has {count} samples, fewer than the {splits} requested splits")]
    TooFewSamples {
        class: String,
        count: usize,
        splits: usize,
    },

    #[error("record `{0}` has no mapped class")]
    MissingMappedClass(String),

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("dimension mismatch: image is {image:?}, mask is {mask:?}")]
    DimensionMismatch {
        image: (u32, u32),
        mask: (u32, u32),
    },

    #[error("augmentation entry {index} ({kind}): {message}")]
    Augmentation {
        index: usize,
        kind: String,
        message: String,
    },

    #[error("{0}")]
    InvalidArgument(String),

    #[error("mosaic requires four images of one class, got labels {0:?}")]
    MixedMosaicLabels(Vec<String>),

    #[error("unknown backend `{0}`")]
    UnknownBackend(String),

    #[error("backend unavailable: {name} ({reason})")]
    BackendUnavailable { name: String, reason: String },

    #[error("empty split: {0}")]
    EmptySplit(String),

    #[error("epoch {epoch}: {message}")]
    Training { epoch: usize, message: String },

    #[error("cannot decode image {path}: {message}")]
    CorruptImage { path: PathBuf, message: String },

    #[error("sample `{sample_id}`: {source}")]
    Sample {
        sample_id: String,
        #[source]
        source: Box<Error>,
    },

    #[error("label {0} is not in the class set")]
    UnknownLabel(String),

    #[error("missing artifact {path}; run `{command}` first")]
    MissingArtifact { path: PathBuf, command: String },

    #[error("output directory is locked by another run ({0})")]
    Locked(PathBuf),

    #[error("malformed {what}: {message}")]
    Format { what: String, message: String },
}

fn list_paths(paths: &[PathBuf]) -> String {
    paths
        .iter()
        .map(|p| p.display().to_string())
        .collect::<Vec<_>>()
        .join(", ")
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn format(what: impl Into<String>, message: impl ToString) -> Self {
        Error::Format {
            what: what.into(),
            message: message.to_string(),
        }
    }
}
