use alloc::string::String;

use crate::scorer::Dimension;

pub type Result<T, E = Error> = core::result::Result<T, E>;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum Error {
    #[error("audio clip has no samples")]
    EmptyClip,
    #[error("sample {index} is not finite")]
    NonFiniteSample { index: usize },
    #[error("sample {index} = {value} lies outside [-1, 1]")]
    SampleOutOfRange { index: usize, value: f64 },
    #[error("sample rate must be positive")]
    InvalidSampleRate,
    #[error("clip lasts {actual_s:.3} s but at least {needed_s:.3} s are required")]
    ClipTooShort { needed_s: f64, actual_s: f64 },
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error("pitch contour has no voiced frames")]
    Unvoiced,
    #[error("DTW band of {band} frames cannot reach the end cell (needs {required})")]
    BandTooNarrow { band: usize, required: usize },
    #[error("reference onset sequence is empty")]
    EmptyReference,
    #[error("alignment frame ({user}, {reference}) is outside the mel matrices")]
    AlignmentOutOfRange { user: usize, reference: usize },
    #[error("unknown encoder `{0}`")]
    UnknownEncoder(String),
    #[error("encoder parameters do not belong to encoder `{0}`")]
    EncoderMismatch(String),
    #[error("dimension mismatch: expected {expected}, got {actual}")]
    DimensionMismatch { expected: usize, actual: usize },
    #[error("training set is empty")]
    EmptyDataset,
    #[error("label {0} is outside 1..=5")]
    InvalidLabel(u8),
    #[error("training diverged at epoch {epoch}: loss is not finite")]
    Diverged { epoch: usize },
    #[error("validation set is empty")]
    EmptyValidation,
    #[error("no candidate or entry for dimension {0}")]
    MissingDimension(Dimension),
    #[error("at least 3 clips are needed for tiering, got {0}")]
    TooFewClips(usize),
    #[error("a tier is empty")]
    EmptyTier,
    #[error("no judgments recorded")]
    NoJudgments,
    #[error("length mismatch: {left} vs {right}")]
    LengthMismatch { left: usize, right: usize },
    #[error("input is empty")]
    EmptyInput,
    #[error("evaluator `{evaluator}` already judged triplet `{triplet}`")]
    DuplicateJudgment { triplet: String, evaluator: String },
    #[error("unknown triplet `{0}`")]
    UnknownTriplet(String),
    #[error("judgment contradicts its perceived order")]
    InconsistentJudgment,
    #[error("score {0} is outside 1..=5")]
    ScoreOutOfRange(u8),
    #[error("critiques belong to different clips")]
    MixedClipIds,
    #[error("segment index gap: expected {expected}, found {found}")]
    SegmentGap { expected: usize, found: usize },
    #[error("unknown critic `{0}`")]
    UnknownCritic(String),
    #[error("features missing or inconsistent for segment: {0}")]
    MissingFeatures(String),
    #[error("segment lasts {actual_s:.1} s, longer than the {max_s:.1} s critic limit")]
    SegmentTooLong { max_s: f64, actual_s: f64 },
}
