//! The trainable dual-encoder model: both encoders, both projection
//! heads, and the learnable temperature, with a hand-derived backward
//! pass over the whole stack.
//!
//! Parameters live in one flattened order (vision conv, vision dense,
//! vision head, text embeddings, text head, log tau) so the optimizer
//! and finite-difference checks can treat the model as a single vector.

use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::loss::{LossGradients, Temperature};
use crate::mat::Mat;
use crate::records::Image;

use super::projection::{normalize_rows, normalize_rows_backward, ProjectionHead};
use super::text::{MeanPoolTextEncoder, TextCache, Vocabulary};
use super::vision::{ConvVisionConfig, ConvVisionEncoder, VisionCache};
use super::{EmbeddingModel, EmbeddingPair, TextEncoder, VisionEncoder};

/// Projection width used at full scale; desk-scale runs default to 32.
pub const FULL_SCALE_PROJ_DIM: usize = 512;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EncoderPairConfig {
    pub image_channels: usize,
    pub image_size: usize,
    pub conv_channels: usize,
    /// Vision embedding dimension D; the text dimension M matches it.
    pub embed_dim: usize,
    /// Shared projected dimension P.
    pub proj_dim: usize,
    pub tau_init: f64,
}

impl EncoderPairConfig {
    /// Desk-scale defaults: D = M = 64, P = 32 on 32x32 single-channel
    /// images. The documented full-scale projection width is 512.
    pub fn desk_scale() -> EncoderPairConfig {
        EncoderPairConfig {
            image_channels: 1,
            image_size: 32,
            conv_channels: 8,
            embed_dim: 64,
            proj_dim: 32,
            tau_init: crate::loss::DEFAULT_TAU_INIT,
        }
    }

    pub fn vision_config(&self) -> ConvVisionConfig {
        ConvVisionConfig {
            channels: self.image_channels,
            height: self.image_size,
            width: self.image_size,
            conv_channels: self.conv_channels,
            output_dim: self.embed_dim,
        }
    }
}

/// Normalized and raw projected embeddings for one batch.
#[derive(Debug, Clone)]
pub struct BatchEmbeddings {
    pub v_p: Mat,
    pub t_p: Mat,
    pub v_tilde: Mat,
    pub t_tilde: Mat,
}

/// Everything the backward pass needs from one forward pass.
pub struct PairCache {
    vision: VisionCache,
    text: TextCache,
    v_raw: Mat,
    t_raw: Mat,
    v_p: Mat,
    t_p: Mat,
    v_norms: Vec<f64>,
    t_norms: Vec<f64>,
}

#[derive(Debug, Clone)]
pub struct EncoderPair {
    pub vision: ConvVisionEncoder,
    pub vision_head: ProjectionHead,
    pub text: MeanPoolTextEncoder,
    pub text_head: ProjectionHead,
    pub temperature: Temperature,
}

impl EncoderPair {
    pub fn new(config: &EncoderPairConfig, vocab: Vocabulary, seed: u64) -> Result<EncoderPair> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let vision = ConvVisionEncoder::new(config.vision_config(), &mut rng)?;
        let vision_head = ProjectionHead::new(config.embed_dim, config.proj_dim, &mut rng)?;
        let text = MeanPoolTextEncoder::new(vocab, config.embed_dim, &mut rng)?;
        let text_head = ProjectionHead::new(config.embed_dim, config.proj_dim, &mut rng)?;
        Ok(EncoderPair {
            vision,
            vision_head,
            text,
            text_head,
            temperature: Temperature::new(config.tau_init)?,
        })
    }

    pub fn proj_dim(&self) -> usize {
        self.vision_head.out_dim()
    }

    /// Projected and normalized embeddings for one (image, text) pair.
    pub fn embed_pair(&self, image: &Image, text: &str) -> Result<EmbeddingPair> {
        let v = self.vision.encode_image(image)?;
        let t = self.text.encode_text(text)?;
        let (v_p, v_tilde) = super::project_and_normalize(&v, &self.vision_head)?;
        let (t_p, t_tilde) = super::project_and_normalize(&t, &self.text_head)?;
        Ok(EmbeddingPair {
            v_p,
            t_p,
            v_tilde,
            t_tilde,
        })
    }

    /// Batch forward retaining activations for [`Self::backward`].
    pub fn forward_batch(
        &self,
        images: &[Image],
        texts: &[&str],
    ) -> Result<(BatchEmbeddings, PairCache)> {
        if images.len() != texts.len() {
            return Err(Error::ShapeMismatch {
                expected: format!("{} texts", images.len()),
                got: format!("{} texts", texts.len()),
            });
        }
        let (v_raw, vision_cache) = self.vision.forward_cache(images)?;
        let (t_raw, text_cache) = self.text.forward_cache(texts)?;
        let v_p = self.vision_head.project_batch(&v_raw)?;
        let t_p = self.text_head.project_batch(&t_raw)?;
        let (v_tilde, v_norms) = normalize_rows(&v_p);
        let (t_tilde, t_norms) = normalize_rows(&t_p);
        Ok((
            BatchEmbeddings {
                v_p: v_p.clone(),
                t_p: t_p.clone(),
                v_tilde,
                t_tilde,
            },
            PairCache {
                vision: vision_cache,
                text: text_cache,
                v_raw,
                t_raw,
                v_p,
                t_p,
                v_norms,
                t_norms,
            },
        ))
    }

    /// Backpropagate loss gradients (w.r.t. the normalized embeddings and
    /// log tau) into a flat parameter-gradient vector.
    pub fn backward(&self, cache: &PairCache, loss_grads: &LossGradients) -> Vec<f64> {
        let mut grads = vec![0.0; self.n_params()];
        let (layout, tau_idx) = self.layout();

        let d_v_p = normalize_rows_backward(&cache.v_p, &cache.v_norms, &loss_grads.d_v_tilde);
        let d_t_p = normalize_rows_backward(&cache.t_p, &cache.t_norms, &loss_grads.d_t_tilde);

        let d_v_raw = self
            .vision_head
            .backward(&cache.v_raw, &d_v_p, &mut grads[layout.vision_head.clone()]);
        let d_t_raw = self
            .text_head
            .backward(&cache.t_raw, &d_t_p, &mut grads[layout.text_head.clone()]);

        self.vision
            .backward(&cache.vision, &d_v_raw, &mut grads[layout.vision.clone()]);
        self.text
            .backward(&cache.text, &d_t_raw, &mut grads[layout.text.clone()]);

        grads[tau_idx] = loss_grads.d_log_tau;
        grads
    }

    pub fn n_params(&self) -> usize {
        self.vision.n_params()
            + self.vision_head.n_params()
            + self.text.n_params()
            + self.text_head.n_params()
            + 1
    }

    /// Index of the temperature parameter in the flat vector.
    pub fn tau_param_index(&self) -> usize {
        self.n_params() - 1
    }

    fn layout(&self) -> (ParamLayout, usize) {
        let v = self.vision.n_params();
        let vh = self.vision_head.n_params();
        let t = self.text.n_params();
        let th = self.text_head.n_params();
        let layout = ParamLayout {
            vision: 0..v,
            vision_head: v..v + vh,
            text: v + vh..v + vh + t,
            text_head: v + vh + t..v + vh + t + th,
        };
        (layout, v + vh + t + th)
    }

    pub fn params_vec(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.n_params());
        self.vision.write_params(&mut out);
        self.vision_head.write_params(&mut out);
        self.text.write_params(&mut out);
        self.text_head.write_params(&mut out);
        out.push(self.temperature.log_tau());
        out
    }

    pub fn set_params(&mut self, params: &[f64]) -> Result<()> {
        if params.len() != self.n_params() {
            return Err(Error::ShapeMismatch {
                expected: format!("{} parameters", self.n_params()),
                got: format!("{} parameters", params.len()),
            });
        }
        let rest = self.vision.read_params(params);
        let rest = self.vision_head.read_params(rest);
        let rest = self.text.read_params(rest);
        let rest = self.text_head.read_params(rest);
        debug_assert_eq!(rest.len(), 1);
        self.temperature.set_log_tau(rest[0]);
        Ok(())
    }

    /// Parameters of the frozen image side (encoder plus head), for
    /// freeze-contract checks.
    pub fn vision_params_vec(&self) -> Vec<f64> {
        let mut out = Vec::new();
        self.vision.write_params(&mut out);
        self.vision_head.write_params(&mut out);
        out
    }
}

struct ParamLayout {
    vision: std::ops::Range<usize>,
    vision_head: std::ops::Range<usize>,
    text: std::ops::Range<usize>,
    text_head: std::ops::Range<usize>,
}

impl EmbeddingModel for EncoderPair {
    fn embed_dim(&self) -> usize {
        self.proj_dim()
    }

    fn embed_image(&self, image: &Image) -> Result<Vec<f64>> {
        let v = self.vision.encode_image(image)?;
        let (_, unit) = super::project_and_normalize(&v, &self.vision_head)?;
        Ok(unit)
    }

    fn embed_text(&self, text: &str) -> Result<Vec<f64>> {
        let t = self.text.encode_text(text)?;
        let (_, unit) = super::project_and_normalize(&t, &self.text_head)?;
        Ok(unit)
    }
}
