use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("i/o error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("parse error: {0}")]
    Parse(String),
    #[error("duplicate item id `{0}`")]
    DuplicateId(String),
    #[error("unknown item id `{0}`")]
    UnknownItem(String),
    #[error("missing feature record for item `{0}`")]
    MissingFeatures(String),
    #[error("dimension mismatch: {0}")]
    Dimension(String),
    #[error("non-finite value in {0}")]
    NonFinite(String),
    #[error("token `{0}` is not in the vocabulary")]
    UnknownToken(String),
    #[error("invalid input: {0}")]
    Invalid(String),
    #[error("decoder for pair type {0} is not loaded")]
    MissingDecoder(String),
    #[error("pair type mismatch: decoder is {expected}, got {got}")]
    PairTypeMismatch { expected: String, got: String },
    #[error("instance too large for exhaustive search: {0} outfits (limit {1})")]
    InstanceTooLarge(usize, usize),
    #[error("decantation did not reach a fixpoint within {0} passes")]
    DecantationDiverged(usize),
}

impl Error {
    pub(crate) fn io(path: &std::path::Path, source: std::io::Error) -> Self {
        Error::Io {
            path: path.display().to_string(),
            source,
        }
    }
}
