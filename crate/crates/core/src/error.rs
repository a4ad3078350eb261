use std::io;

use thiserror::Error;

/// Errors produced across the mapping, planning and simulation pipeline.
#[derive(Debug, Error)]
pub enum NavError {
    #[error("point ({x:.3}, {y:.3}, {z:.3}) is outside the map bounds")]
    OutOfBounds { x: f64, y: f64, z: f64 },

    #[error("invalid environment: {0}")]
    InvalidEnvironment(String),

    #[error("invalid parameter `{field}`: {reason}")]
    InvalidParameter { field: String, reason: String },

    #[error("waypoint {index} is {reason}")]
    InvalidWaypoint { index: usize, reason: String },

    #[error("layer stack needs at least 2 layers, got {0}")]
    TooFewLayers(usize),

    #[error("{what} point ({x:.3}, {y:.3}) is not in free space")]
    NotFree { what: &'static str, x: f64, y: f64 },

    #[error("tree is empty")]
    EmptyTree,

    #[error("scenario error at `{path}`: {reason}")]
    Scenario { path: String, reason: String },

    #[error("malformed {format} data: {reason}")]
    Format { format: &'static str, reason: String },

    #[error(transparent)]
    Io(#[from] io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T, E = NavError> = std::result::Result<T, E>;

impl NavError {
    pub fn param(field: impl Into<String>, reason: impl Into<String>) -> Self {
        NavError::InvalidParameter { field: field.into(), reason: reason.into() }
    }

    pub(crate) fn format(format: &'static str, reason: impl Into<String>) -> Self {
        NavError::Format { format, reason: reason.into() }
    }
}
