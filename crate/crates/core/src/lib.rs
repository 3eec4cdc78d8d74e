//! Telugu OCR engine: page preprocessing, word and glyph segmentation,
//! synthetic dataset construction, dual-network glyph classification and
//! the end-to-end page pipeline.
//!
//! The network framework lives in `tocr-nn`; everything image-shaped lives
//! here.

pub mod dataset;
pub mod duoclf;
pub mod imgcore;
pub mod pipeline;
pub mod segment;
pub mod synth;
pub mod taxonomy;

pub use tocr_nn as nn;

#[derive(Debug, thiserror::Error)]
pub enum CoreError {
    #[error("dimension error: {0}")]
    Dimension(String),
    #[error("parameter error: {0}")]
    Param(String),
    #[error("no content: {0}")]
    NoContent(String),
    #[error("undecodable image: {0}")]
    Decode(String),
    #[error("taxonomy error: {0}")]
    Taxonomy(String),
    #[error("configuration error: {0}")]
    Config(String),
    #[error("ingestion error in row {row}: expected {expected} glyphs, found {found}")]
    Ingest {
        row: usize,
        expected: usize,
        found: usize,
    },
    #[error("manifest error: {0}")]
    Manifest(String),
    #[error(transparent)]
    Nn(#[from] tocr_nn::NnError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T, E = CoreError> = std::result::Result<T, E>;
