//! Error type shared by every pipeline stage.

use std::io;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("I/O error: {0}")]
    Io(#[from] io::Error),

    // NIfTI decoding / encoding
    #[error("not a NIfTI-1 file (sizeof_hdr={sizeof_hdr}, magic={magic:?})")]
    BadMagic { sizeof_hdr: i32, magic: [u8; 4] },
    #[error("header/image pair form (magic \"ni1\") is not supported; use single-file .nii")]
    PairFormUnsupported,
    #[error("NIfTI-2 files are not supported")]
    Nifti2Unsupported,
    #[error("unsupported NIfTI datatype code {0}")]
    UnsupportedDatatype(i16),
    #[error("invalid NIfTI header: {0}")]
    InvalidHeader(String),
    #[error("truncated voxel data: expected {expected} bytes, found {found}")]
    TruncatedData { expected: usize, found: usize },
    #[error("corrupt gzip stream: {0}")]
    GzipCorrupt(String),
    #[error("header inconsistent with volume: {0}")]
    InconsistentHeader(String),

    // preprocessing
    #[error("degenerate intensity range: lo={lo} must be below hi={hi}")]
    DegenerateRange { lo: f64, hi: f64 },
    #[error("every z-slice is uninformative (constant at the global minimum)")]
    AllUninformative,
    #[error("augmentation parameter out of range: {0}")]
    SpecOutOfRange(String),
    #[error("empty volume")]
    EmptyVolume,

    // patching
    #[error("patch {patch:?} larger than volume {volume:?}")]
    PatchLargerThanVolume { patch: [usize; 3], volume: [usize; 3] },
    #[error("invalid stride {0:?}: each component must be between 1 and the patch edge")]
    InvalidStride([usize; 3]),
    #[error("patch at {origin:?} with shape {patch:?} exceeds volume {volume:?}")]
    OutOfBounds {
        origin: [usize; 3],
        patch: [usize; 3],
        volume: [usize; 3],
    },
    #[error("missing patch: grid has {expected} origins, got {found} patches")]
    MissingPatch { expected: usize, found: usize },

    // ensemble
    #[error("no model scores given")]
    EmptyScores,
    #[error("model score {index} is not positive ({value})")]
    NonPositiveScore { index: usize, value: f64 },
    #[error("invalid ensemble weights: {0}")]
    InvalidWeights(String),
    #[error("{scores} model scores but {predictions} prediction maps")]
    CountMismatch { scores: usize, predictions: usize },
    #[error("shape mismatch: {0:?} vs {1:?}")]
    ShapeMismatch([usize; 3], [usize; 3]),
    #[error("non-finite value at voxel {0}")]
    NonFiniteValue(usize),

    // morphology
    #[error("mask has no foreground voxels")]
    EmptyMask,
    #[error("mask has {0} connected components; exactly one required")]
    NotSingleComponent(usize),
    #[error("skeleton is empty")]
    EmptySkeleton,
    #[error("connectivity must be 6, 18 or 26, got {0}")]
    InvalidConnectivity(u32),
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    // metrics
    #[error("region map does not partition the ground truth: {0}")]
    RegionNotPartition(String),
    #[error("branch weight {0} outside (0.5, 1)")]
    WeightOutOfRange(f64),
    #[error("no reports to average")]
    EmptyList,

    // synthetic phantoms
    #[error("tube leaves the volume: {0}")]
    TubeOutOfBounds(String),
    #[error("invalid phantom spec: {0}")]
    InvalidPhantom(String),

    // command line / configuration
    #[error("{0}")]
    Usage(String),
    #[error("config error: {0}")]
    Config(String),
}

impl Error {
    /// Process exit status for the command line: 2 for I/O and file-format
    /// failures, 1 for everything the caller can fix by changing arguments.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Io(_)
            | Error::BadMagic { .. }
            | Error::PairFormUnsupported
            | Error::Nifti2Unsupported
            | Error::UnsupportedDatatype(_)
            | Error::InvalidHeader(_)
            | Error::TruncatedData { .. }
            | Error::GzipCorrupt(_)
            | Error::InconsistentHeader(_) => 2,
            _ => 1,
        }
    }
}
