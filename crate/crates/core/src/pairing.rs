//! Decoupled sampling and knowledge-driven soft targets.
//!
//! Images and sentences are drawn independently; supervision comes from the
//! cosine similarity of their multi-hot finding labels rather than from
//! pairing identity. Softmax-normalizing those similarities row-wise gives
//! the image-to-text targets, column-wise the text-to-image targets.

use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::finding::FindingLabel;
use crate::mat::Mat;
use crate::records::{Batch, ImageRecord, SentenceRecord};

/// Raw label similarities and the derived soft targets for one batch.
///
/// `y_v2t` is row-stochastic (each image's distribution over texts),
/// `y_t2v` is column-stochastic (each text's distribution over images).
#[derive(Debug, Clone)]
pub struct SimilarityBundle {
    pub s: Mat,
    pub y_v2t: Mat,
    pub y_t2v: Mat,
}

impl SimilarityBundle {
    /// Swap the two modalities: transpose every matrix and exchange the
    /// two target directions.
    pub fn transposed(&self) -> SimilarityBundle {
        SimilarityBundle {
            s: self.s.transpose(),
            y_v2t: self.y_t2v.transpose(),
            y_t2v: self.y_v2t.transpose(),
        }
    }
}

/// Cosine similarity of two multi-hot labels, in [0, 1].
pub fn semantic_similarity(l_img: FindingLabel, l_txt: FindingLabel) -> Result<f64> {
    if l_img.is_unlabeled() {
        return Err(Error::DegenerateLabel("image label".into()));
    }
    if l_txt.is_unlabeled() {
        return Err(Error::DegenerateLabel("text label".into()));
    }
    let dot = l_img.dot(l_txt) as f64;
    let norm = (l_img.count() as f64).sqrt() * (l_txt.count() as f64).sqrt();
    Ok(dot / norm)
}

/// Row-wise and column-wise softmax of a raw similarity matrix.
///
/// Exposed separately from [`build_soft_targets`] so target construction
/// can be exercised on arbitrary matrices.
pub fn soft_targets_from_similarity(s: &Mat) -> (Mat, Mat) {
    let n = s.rows();
    let m = s.cols();
    let mut y_v2t = Mat::zeros(n, m);
    for i in 0..n {
        softmax_into(s.row(i), y_v2t.row_mut(i));
    }
    let mut y_t2v = Mat::zeros(n, m);
    for j in 0..m {
        let col: Vec<f64> = (0..n).map(|i| s.get(i, j)).collect();
        let mut out = vec![0.0; n];
        softmax_into(&col, &mut out);
        for (i, v) in out.iter().enumerate() {
            y_t2v.set(i, j, *v);
        }
    }
    (y_v2t, y_t2v)
}

fn softmax_into(src: &[f64], dst: &mut [f64]) {
    let max = src.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut sum = 0.0;
    for (d, &x) in dst.iter_mut().zip(src) {
        let e = (x - max).exp();
        *d = e;
        sum += e;
    }
    for d in dst.iter_mut() {
        *d /= sum;
    }
}

/// Compute the label-similarity matrix and both soft-target directions
/// for a batch.
pub fn build_soft_targets(batch: &Batch) -> Result<SimilarityBundle> {
    let n = batch.len();
    let mut s = Mat::zeros(n, n);
    for (i, img) in batch.images.iter().enumerate() {
        for (j, txt) in batch.texts.iter().enumerate() {
            s.set(i, j, semantic_similarity(img.label, txt.label)?);
        }
    }
    let (y_v2t, y_t2v) = soft_targets_from_similarity(&s);
    Ok(SimilarityBundle { s, y_v2t, y_t2v })
}

/// Number of supervised pairs produced by decoupling `n` paired samples
/// and adding `m` labeled images and `h` sentences.
pub fn count_supervision_pairs(n: u64, m: u64, h: u64) -> u64 {
    (n + m) * (n + h)
}

/// Draws images and texts independently, uniformly, and without
/// replacement within a batch. Owns a seeded stream; one instance per
/// worker, distinct seeds, when producing batches concurrently.
#[derive(Debug, Clone)]
pub struct DecoupledSampler {
    rng: ChaCha8Rng,
}

impl DecoupledSampler {
    pub fn new(seed: u64) -> DecoupledSampler {
        DecoupledSampler {
            rng: ChaCha8Rng::seed_from_u64(seed),
        }
    }

    pub fn from_rng(rng: ChaCha8Rng) -> DecoupledSampler {
        DecoupledSampler { rng }
    }

    pub fn rng_mut(&mut self) -> &mut ChaCha8Rng {
        &mut self.rng
    }

    /// Sample index sets for both sides; no pairing constraint links them.
    pub fn sample_indices(
        &mut self,
        image_pool: usize,
        text_pool: usize,
        n_batch: usize,
    ) -> Result<(Vec<usize>, Vec<usize>)> {
        let images = sample_without_replacement(&mut self.rng, image_pool, n_batch)?;
        let texts = sample_without_replacement(&mut self.rng, text_pool, n_batch)?;
        Ok((images, texts))
    }

    pub fn sample(
        &mut self,
        image_pool: &[ImageRecord],
        text_pool: &[SentenceRecord],
        n_batch: usize,
    ) -> Result<Batch> {
        let (img_idx, txt_idx) = self.sample_indices(image_pool.len(), text_pool.len(), n_batch)?;
        Batch::new(
            img_idx.iter().map(|&i| image_pool[i].clone()).collect(),
            txt_idx.iter().map(|&j| text_pool[j].clone()).collect(),
        )
    }
}

/// One-shot convenience wrapper around [`DecoupledSampler`].
pub fn decoupled_sample(
    image_pool: &[ImageRecord],
    text_pool: &[SentenceRecord],
    n_batch: usize,
    rng_seed: u64,
) -> Result<Batch> {
    DecoupledSampler::new(rng_seed).sample(image_pool, text_pool, n_batch)
}

/// Partial Fisher-Yates over 0..pool, spelled out so batch order depends
/// only on the rng stream.
fn sample_without_replacement(
    rng: &mut ChaCha8Rng,
    pool: usize,
    n: usize,
) -> Result<Vec<usize>> {
    if pool < n {
        return Err(Error::InsufficientData {
            pool,
            requested: n,
        });
    }
    let mut indices: Vec<usize> = (0..pool).collect();
    for i in 0..n {
        let j = rng.gen_range(i..pool);
        indices.swap(i, j);
    }
    indices.truncate(n);
    Ok(indices)
}
