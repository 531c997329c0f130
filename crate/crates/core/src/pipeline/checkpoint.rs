//! Checkpoint directory format.
//!
//! A checkpoint is a directory containing
//!   manifest.json   dimensions, vocabulary hash, tau, step, rng position
//!   params.bin      flat f64 little-endian parameter vector
//!   vocab.txt       one token per line, in id order
//!   optimizer.bin   optional; step count plus both moment vectors
//!
//! The checkpoint id is the FNV-1a digest of params.bin, so re-exports of
//! the same parameters are bit-identical.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::encoders::{EncoderPair, EncoderPairConfig, Vocabulary};
use crate::error::{Error, Result};
use crate::optim::AdamW;
use crate::util::{bytes_to_f64s, f64s_to_bytes, fnv1a64_hex};

pub const MANIFEST_FILE: &str = "manifest.json";
pub const PARAMS_FILE: &str = "params.bin";
pub const VOCAB_FILE: &str = "vocab.txt";
pub const OPTIMIZER_FILE: &str = "optimizer.bin";

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Manifest {
    pub format_version: u32,
    pub config: EncoderPairConfig,
    pub vocab_size: usize,
    pub vocab_hash: String,
    pub n_params: usize,
    pub tau: f64,
    pub step: u64,
    pub seed: u64,
    /// Sampler stream position, stored as a decimal string (u128).
    pub rng_word_pos: String,
    pub checkpoint_id: String,
}

#[derive(Debug, Clone, Copy)]
pub struct CheckpointMeta {
    pub step: u64,
    pub seed: u64,
    pub rng_word_pos: u128,
}

pub struct Checkpoint {
    pub model: EncoderPair,
    pub optimizer: Option<AdamW>,
    pub manifest: Manifest,
}

impl Checkpoint {
    pub fn rng_word_pos(&self) -> Result<u128> {
        self.manifest
            .rng_word_pos
            .parse()
            .map_err(|_| Error::Checkpoint("bad rng_word_pos in manifest".into()))
    }
}

pub fn save_checkpoint(
    dir: &Path,
    model: &EncoderPair,
    config: &EncoderPairConfig,
    optimizer: Option<&AdamW>,
    meta: CheckpointMeta,
) -> Result<Manifest> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;

    let params = model.params_vec();
    let params_bytes = f64s_to_bytes(&params);
    let params_path = dir.join(PARAMS_FILE);
    fs::write(&params_path, &params_bytes).map_err(|e| Error::io(&params_path, e))?;

    let vocab_path = dir.join(VOCAB_FILE);
    fs::write(&vocab_path, model.text.vocab().tokens().join("\n"))
        .map_err(|e| Error::io(&vocab_path, e))?;

    if let Some(opt) = optimizer {
        let opt_path = dir.join(OPTIMIZER_FILE);
        fs::write(&opt_path, opt.to_blob()).map_err(|e| Error::io(&opt_path, e))?;
    }

    let manifest = Manifest {
        format_version: 1,
        config: *config,
        vocab_size: model.text.vocab().len(),
        vocab_hash: format!("{:016x}", model.text.vocab().hash()),
        n_params: params.len(),
        tau: model.temperature.tau(),
        step: meta.step,
        seed: meta.seed,
        rng_word_pos: meta.rng_word_pos.to_string(),
        checkpoint_id: fnv1a64_hex(&params_bytes),
    };
    let manifest_path = dir.join(MANIFEST_FILE);
    let json = serde_json::to_string_pretty(&manifest)
        .map_err(|e| Error::json(&manifest_path, e))?;
    fs::write(&manifest_path, json).map_err(|e| Error::io(&manifest_path, e))?;
    Ok(manifest)
}

pub fn load_checkpoint(dir: &Path) -> Result<Checkpoint> {
    let manifest_path = dir.join(MANIFEST_FILE);
    let manifest_raw =
        fs::read_to_string(&manifest_path).map_err(|e| Error::io(&manifest_path, e))?;
    let manifest: Manifest =
        serde_json::from_str(&manifest_raw).map_err(|e| Error::json(&manifest_path, e))?;
    if manifest.format_version != 1 {
        return Err(Error::Checkpoint(format!(
            "unsupported checkpoint format version {}",
            manifest.format_version
        )));
    }

    let vocab_path = dir.join(VOCAB_FILE);
    let vocab_raw = fs::read_to_string(&vocab_path).map_err(|e| Error::io(&vocab_path, e))?;
    let tokens: Vec<String> = vocab_raw.lines().map(str::to_string).collect();
    if tokens.len() != manifest.vocab_size {
        return Err(Error::Checkpoint(format!(
            "vocab has {} tokens, manifest says {}",
            tokens.len(),
            manifest.vocab_size
        )));
    }
    let vocab = Vocabulary::from_tokens(tokens);
    if format!("{:016x}", vocab.hash()) != manifest.vocab_hash {
        return Err(Error::Checkpoint("vocabulary hash mismatch".into()));
    }

    let mut model = EncoderPair::new(&manifest.config, vocab, manifest.seed)?;
    let params_path = dir.join(PARAMS_FILE);
    let params_bytes = fs::read(&params_path).map_err(|e| Error::io(&params_path, e))?;
    if fnv1a64_hex(&params_bytes) != manifest.checkpoint_id {
        return Err(Error::Checkpoint("parameter checksum mismatch".into()));
    }
    let params = bytes_to_f64s(&params_bytes)
        .ok_or_else(|| Error::Checkpoint("parameter file is not a multiple of 8 bytes".into()))?;
    model.set_params(&params)?;

    let opt_path = dir.join(OPTIMIZER_FILE);
    let optimizer = if opt_path.exists() {
        let blob = fs::read(&opt_path).map_err(|e| Error::io(&opt_path, e))?;
        Some(AdamW::from_blob(&blob, params.len())?)
    } else {
        None
    };

    Ok(Checkpoint {
        model,
        optimizer,
        manifest,
    })
}

/// Checkpoint id without loading the whole model.
pub fn checkpoint_id(dir: &Path) -> Result<String> {
    let params_path = dir.join(PARAMS_FILE);
    let bytes = fs::read(&params_path).map_err(|e| Error::io(&params_path, e))?;
    Ok(fnv1a64_hex(&bytes))
}

pub fn manifest_path(dir: &Path) -> PathBuf {
    dir.join(MANIFEST_FILE)
}
