//! Dual encoders with projection heads into a shared embedding space.
//!
//! The encoder interface is pluggable; the concrete implementations here
//! are small reference networks sized so desk-scale pretraining finishes
//! in minutes on a CPU. Real backbones attach behind the same traits.
//! Evaluation-mode encoding is pure and deterministic (nothing here uses
//! dropout or batch statistics); parameter updates are owned by a single
//! training loop.

pub mod pair;
pub mod projection;
pub mod text;
pub mod vision;

pub use pair::{BatchEmbeddings, EncoderPair, EncoderPairConfig, PairCache, FULL_SCALE_PROJ_DIM};
pub use projection::{project_and_normalize, ProjectionHead, NORM_EPSILON};
pub use text::{MeanPoolTextEncoder, Vocabulary, UNK_TOKEN};
pub use vision::{ConvVisionConfig, ConvVisionEncoder};

use crate::error::Result;
use crate::records::Image;

/// Spatial shape an image encoder accepts.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ImageShape {
    pub channels: usize,
    pub height: usize,
    pub width: usize,
}

impl std::fmt::Display for ImageShape {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}x{}x{}", self.channels, self.height, self.width)
    }
}

/// Maps images to raw D-dimensional embeddings.
pub trait VisionEncoder {
    fn output_dim(&self) -> usize;
    fn input_shape(&self) -> ImageShape;
    fn encode_image(&self, image: &Image) -> Result<Vec<f64>>;
}

/// Maps sentences to raw M-dimensional embeddings.
pub trait TextEncoder {
    fn output_dim(&self) -> usize;
    fn encode_text(&self, text: &str) -> Result<Vec<f64>>;
}

/// Anything that places both modalities in the shared unit-norm space.
/// Evaluation protocols are written against this trait.
pub trait EmbeddingModel {
    fn embed_dim(&self) -> usize;
    /// Normalized P-dimensional image embedding.
    fn embed_image(&self, image: &Image) -> Result<Vec<f64>>;
    /// Normalized P-dimensional text embedding.
    fn embed_text(&self, text: &str) -> Result<Vec<f64>>;
}

/// Projected and normalized embeddings for one (image, text) pair.
#[derive(Debug, Clone)]
pub struct EmbeddingPair {
    pub v_p: Vec<f64>,
    pub t_p: Vec<f64>,
    pub v_tilde: Vec<f64>,
    pub t_tilde: Vec<f64>,
}
