use alloc::string::String;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum Error {
    #[error("vector is not tangent at the base point (normal component {defect:e})")]
    NotTangent { defect: f64 },

    #[error("points are at distance {dist} >= injectivity radius {radius} (cut locus)")]
    CutLocus { dist: f64, radius: f64 },

    #[error("segment {segment} has |db| = {norm} >= injectivity radius {radius}")]
    DevelopmentRange { segment: usize, norm: f64, radius: f64 },

    #[error("invalid partition: {0}")]
    InvalidPartition(String),

    #[error("dimension mismatch: expected {expected}, got {got}")]
    Dimension { expected: usize, got: usize },

    #[error("domain error: {0}")]
    Domain(String),

    #[error("capability not available: {0}")]
    Capability(String),

    #[error("numerical failure: {0}")]
    Numerical(String),
}

pub type Result<T> = core::result::Result<T, Error>;
