use alloc::string::String;
use alloc::vec::Vec;

use crate::alphabet::Zone;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum Error {
    #[error("invalid image dimensions {width}x{height} for {len} samples")]
    InvalidDimensions {
        width: usize,
        height: usize,
        len: usize,
    },
    #[error("image contains no ink")]
    BlankImage,
    #[error("empty image region")]
    EmptyRegion,
    #[error("empty component")]
    EmptyComponent,
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("unknown character {0:?}")]
    UnknownChar(char),
    #[error("empty word")]
    EmptyWord,
    #[error("no training data: {0}")]
    NoData(String),
    #[error("{frames} frames cannot be aligned to a model with {states} states")]
    TooFewFrames { frames: usize, states: usize },
    #[error("no lexicon entry is decodable")]
    NoFeasibleEntry,
    #[error("empty lexicon")]
    EmptyLexicon,
    #[error("training data contains a single class")]
    SingleClass,
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("characters without a mapping: {0:?}")]
    Unmapped(Vec<char>),
    #[error("characters without samples: {0:?}")]
    MissingCoverage(Vec<char>),
    #[error("weights sum to {0}, expected 1")]
    WeightSum(f64),
    #[error("value {0} out of range")]
    OutOfRange(f64),
    #[error("zero denominator")]
    ZeroDenominator,
    #[error("length mismatch: {left} vs {right}")]
    LengthMismatch { left: usize, right: usize },
    #[error("zone {0:?} is not valid here")]
    InvalidZone(Zone),
}

pub type Result<T> = core::result::Result<T, Error>;
