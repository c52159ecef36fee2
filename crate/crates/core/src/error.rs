use alloc::string::String;
use alloc::vec::Vec;

pub type Result<T, E = Error> = core::result::Result<T, E>;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum Error {
    #[error("shape mismatch in {op}: {detail}")]
    ShapeMismatch { op: &'static str, detail: String },
    #[error("label {label} out of range for {classes} classes")]
    LabelOutOfRange { label: usize, classes: usize },
    #[error("backward needs a scalar loss node, got shape {0:?}")]
    NotScalar(Vec<usize>),
    #[error("clip has {len} samples, fewer than the FFT size {fft_size}")]
    ClipTooShort { len: usize, fft_size: usize },
    #[error("spectrogram has {found} bins, expected {expected}")]
    WrongBinCount { found: usize, expected: usize },
    #[error("genre {genre} has {count} tracks, at least {required} needed")]
    GenreTooSmall { genre: usize, count: usize, required: usize },
    #[error("no signatures for genre {0}")]
    EmptyGenre(usize),
    #[error("need at least {required} vectors, got {found}")]
    TooFewVectors { found: usize, required: usize },
    #[error("need at least {required} genres, got {found}")]
    TooFewGenres { found: usize, required: usize },
    #[error("corpus of {found} tracks is too small for k = {k}")]
    CorpusTooSmall { found: usize, k: usize },
    #[error("missing cached sample: {0}")]
    MissingCache(String),
    #[error("non-finite loss in fold {fold}, epoch {epoch}")]
    NonFiniteLoss { fold: usize, epoch: usize },
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
}

impl Error {
    pub(crate) fn shape(op: &'static str, detail: String) -> Self {
        Error::ShapeMismatch { op, detail }
    }
}
