//! Error type shared across the crate.

use thiserror::Error;

/// Crate-wide result alias.
pub type Result<T> = std::result::Result<T, PixinfoError>;

#[derive(Debug, Error)]
pub enum PixinfoError {
    /// Intensity clipping range is empty or inverted.
    #[error("invalid intensity range: clip_lo ({lo}) must be < clip_hi ({hi})")]
    InvalidRange { lo: f64, hi: f64 },

    /// A patch window or landmark falls outside the valid image interior.
    #[error("border violation: center ({row}, {col}) with side {side} exceeds {width}x{height} image")]
    Border {
        row: usize,
        col: usize,
        side: usize,
        width: usize,
        height: usize,
    },

    /// Mismatched dimensions between two containers that must agree.
    #[error("shape mismatch: {context} ({left} vs {right})")]
    Shape {
        context: &'static str,
        left: String,
        right: String,
    },

    /// Category thresholds are inverted or otherwise unusable.
    #[error("invalid thresholds: t_lm ({t_lm}) must be < t_mh ({t_mh}) and both >= 0")]
    Threshold { t_lm: f64, t_mh: f64 },

    /// A scalar parameter is outside its documented domain.
    #[error("invalid parameter: {0}")]
    Parameter(String),

    /// A weight map with zero total weight cannot be sampled from.
    #[error("empty sampling support: all weights are zero")]
    EmptySupport,

    /// A key point could not be resolved to a corresponding pixel.
    #[error("correspondence failure for key point ({row}, {col}) in image {image}")]
    Correspondence {
        row: usize,
        col: usize,
        image: usize,
    },

    /// Image smaller than the requested window.
    #[error("image too small: {width}x{height} cannot host a {side}x{side} window")]
    TooSmall {
        width: usize,
        height: usize,
        side: usize,
    },

    /// Malformed or self-inconsistent input data (files, corpora, rasters).
    #[error("data error: {0}")]
    Data(String),

    /// Configuration rejected during validation.
    #[error("config error: {0}")]
    Config(String),

    /// A numerical failure such as a NaN loss during training.
    #[error("numerical failure: {0}")]
    Numerical(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

impl PixinfoError {
    /// Process exit code for the CLI: 2 config, 3 data, 4 numerical.
    pub fn exit_code(&self) -> i32 {
        use PixinfoError::*;
        match self {
            InvalidRange { .. } | Threshold { .. } | Parameter(_) | Config(_) => 2,
            Border { .. } | Shape { .. } | EmptySupport | Correspondence { .. }
            | TooSmall { .. } | Data(_) | Io(_) | Json(_) => 3,
            Numerical(_) => 4,
        }
    }
}
