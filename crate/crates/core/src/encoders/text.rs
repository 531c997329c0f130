//! Reference text encoder: token embeddings mean-pooled over the sentence.
//!
//! Pooling is by token mean rather than a special token; that choice is
//! flagged here because fancier backbones pool differently.

use std::collections::BTreeMap;

use rand::Rng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::labeler::lexicon::tokenize_lower;
use crate::mat::Mat;
use crate::util::fnv1a64;

use super::TextEncoder;

/// Reserved token for out-of-vocabulary words, always id 0.
pub const UNK_TOKEN: &str = "<unk>";

/// A frozen token table. Ids are stable: 0 is the reserved unknown token,
/// the rest are ordered by (frequency desc, token asc) at build time.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Vocabulary {
    tokens: Vec<String>,
    index: BTreeMap<String, usize>,
}

impl Vocabulary {
    /// Build from a text corpus. `max_size` caps the table including the
    /// unknown slot.
    pub fn build<'a>(texts: impl IntoIterator<Item = &'a str>, max_size: Option<usize>) -> Vocabulary {
        let mut counts: BTreeMap<String, u64> = BTreeMap::new();
        for text in texts {
            for token in tokenize_lower(text) {
                *counts.entry(token).or_insert(0) += 1;
            }
        }
        let mut ranked: Vec<(String, u64)> = counts.into_iter().collect();
        ranked.sort_by(|a, b| b.1.cmp(&a.1).then_with(|| a.0.cmp(&b.0)));
        let mut tokens = vec![UNK_TOKEN.to_string()];
        let cap = max_size.unwrap_or(usize::MAX);
        for (token, _) in ranked {
            if tokens.len() >= cap {
                break;
            }
            tokens.push(token);
        }
        Vocabulary::from_tokens(tokens)
    }

    /// Rebuild from an ordered token list (first entry must be the
    /// unknown token).
    pub fn from_tokens(tokens: Vec<String>) -> Vocabulary {
        assert_eq!(tokens.first().map(String::as_str), Some(UNK_TOKEN));
        let index = tokens
            .iter()
            .enumerate()
            .map(|(i, t)| (t.clone(), i))
            .collect();
        Vocabulary { tokens, index }
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    pub fn tokens(&self) -> &[String] {
        &self.tokens
    }

    /// Token ids for a sentence; unknown words map to id 0.
    pub fn encode(&self, text: &str) -> Vec<usize> {
        tokenize_lower(text)
            .into_iter()
            .map(|t| self.index.get(&t).copied().unwrap_or(0))
            .collect()
    }

    /// Stable digest of the ordered token list.
    pub fn hash(&self) -> u64 {
        fnv1a64(self.tokens.join("\n").as_bytes())
    }
}

#[derive(Debug, Clone)]
pub struct MeanPoolTextEncoder {
    vocab: Vocabulary,
    dim: usize,
    /// [vocab_len][dim], flattened.
    pub(crate) embed: Vec<f64>,
}

pub struct TextCache {
    token_ids: Vec<Vec<usize>>,
}

impl MeanPoolTextEncoder {
    pub fn new(vocab: Vocabulary, dim: usize, rng: &mut ChaCha8Rng) -> Result<MeanPoolTextEncoder> {
        if dim == 0 {
            return Err(Error::InvalidConfig("text embedding dim must be positive".into()));
        }
        if vocab.is_empty() {
            return Err(Error::InvalidConfig("vocabulary is empty".into()));
        }
        let bound = (6.0 / dim as f64).sqrt();
        let embed = (0..vocab.len() * dim)
            .map(|_| rng.gen_range(-bound..bound))
            .collect();
        Ok(MeanPoolTextEncoder { vocab, dim, embed })
    }

    pub fn vocab(&self) -> &Vocabulary {
        &self.vocab
    }

    pub fn n_params(&self) -> usize {
        self.embed.len()
    }

    fn token_ids(&self, text: &str) -> Result<Vec<usize>> {
        let ids = self.vocab.encode(text);
        if ids.is_empty() {
            return Err(Error::EmptyInput(format!(
                "text {text:?} contains no encodable tokens"
            )));
        }
        Ok(ids)
    }

    fn pool(&self, ids: &[usize]) -> Vec<f64> {
        let mut out = vec![0.0; self.dim];
        for &id in ids {
            let row = &self.embed[id * self.dim..(id + 1) * self.dim];
            for (o, &v) in out.iter_mut().zip(row) {
                *o += v;
            }
        }
        let inv = 1.0 / ids.len() as f64;
        for o in &mut out {
            *o *= inv;
        }
        out
    }

    pub fn forward_cache(&self, texts: &[&str]) -> Result<(Mat, TextCache)> {
        let mut out = Mat::zeros(texts.len(), self.dim);
        let mut token_ids = Vec::with_capacity(texts.len());
        for (i, text) in texts.iter().enumerate() {
            let ids = self.token_ids(text)?;
            out.row_mut(i).copy_from_slice(&self.pool(&ids));
            token_ids.push(ids);
        }
        Ok((out, TextCache { token_ids }))
    }

    /// Accumulate embedding gradients given dL/d(output).
    pub fn backward(&self, cache: &TextCache, d_out: &Mat, grads: &mut [f64]) {
        debug_assert_eq!(grads.len(), self.embed.len());
        for (i, ids) in cache.token_ids.iter().enumerate() {
            let delta = d_out.row(i);
            let inv = 1.0 / ids.len() as f64;
            for &id in ids {
                let slot = &mut grads[id * self.dim..(id + 1) * self.dim];
                for (g, &d) in slot.iter_mut().zip(delta) {
                    *g += d * inv;
                }
            }
        }
    }

    pub fn write_params(&self, out: &mut Vec<f64>) {
        out.extend_from_slice(&self.embed);
    }

    pub fn read_params<'a>(&mut self, src: &'a [f64]) -> &'a [f64] {
        let (head, tail) = src.split_at(self.embed.len());
        self.embed = head.to_vec();
        tail
    }
}

impl TextEncoder for MeanPoolTextEncoder {
    fn output_dim(&self) -> usize {
        self.dim
    }

    fn encode_text(&self, text: &str) -> Result<Vec<f64>> {
        let ids = self.token_ids(text)?;
        Ok(self.pool(&ids))
    }
}
