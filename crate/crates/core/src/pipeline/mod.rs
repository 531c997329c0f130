//! Training orchestration: seeded decoupled sampling, augmentation,
//! forward/backward, optimizer updates with linear warmup, per-epoch
//! checkpoints, and a newline-delimited metrics stream.
//!
//! Reference mode is single-threaded f64 end to end, so identical
//! (config, pools, seed) produce bitwise-identical metric streams.

pub mod augment;
pub mod checkpoint;
pub mod config;
pub mod ingest;
pub mod synthetic;

pub use augment::{augment, AugmentationSpec};
pub use checkpoint::{load_checkpoint, save_checkpoint, Checkpoint, CheckpointMeta, Manifest};
pub use config::{LossKind, TrainConfig};
pub use ingest::{ingest_dataset, Adapter, IngestOptions, IngestReport};
pub use synthetic::{
    generate_paired_corpus, generate_synthetic_corpus, ClassSpec, SyntheticCorpus,
    SyntheticCorpusSpec,
};

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::encoders::EncoderPair;
use crate::error::{Error, Result};
use crate::finding::FindingLabel;
use crate::loss::{
    hard_infonce_loss_with_grads, semantic_matching_loss_with_grads, LossReport,
};
use crate::optim::AdamW;
use crate::pairing::build_soft_targets;
use crate::records::{Batch, ImageRecord, SentenceRecord};

/// The sampler stream is salted so it does not replay the
/// initialization stream of the model built from the same seed.
const SAMPLER_SEED_SALT: u64 = 0x5eed_5a17;

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub final_checkpoint: PathBuf,
    pub metrics_path: PathBuf,
    /// The full metrics stream, one record per step.
    pub metrics: String,
    pub steps_run: u64,
    pub first_loss: f64,
    pub final_loss: f64,
}

/// Learning rate at a 0-based step index: linear ramp over the warmup
/// steps, then constant.
pub fn lr_at_step(base_lr: f64, step: u64, warmup_steps: u64) -> f64 {
    if step < warmup_steps {
        base_lr * (step + 1) as f64 / warmup_steps as f64
    } else {
        base_lr
    }
}

/// One epoch fully traverses the larger pool in expectation.
pub fn steps_per_epoch(n_images: usize, n_texts: usize, batch_size: usize) -> u64 {
    (n_images.max(n_texts)).div_ceil(batch_size) as u64
}

pub fn train(
    config: &TrainConfig,
    images: &[ImageRecord],
    texts: &[SentenceRecord],
    out_dir: &Path,
    resume_from: Option<&Path>,
) -> Result<TrainOutcome> {
    config.validate()?;
    if images.is_empty() || texts.is_empty() {
        return Err(Error::InvalidConfig("both pools must be non-empty".into()));
    }
    if images.len() < config.batch_size || texts.len() < config.batch_size {
        return Err(Error::InsufficientData {
            pool: images.len().min(texts.len()),
            requested: config.batch_size,
        });
    }
    if config.loss == LossKind::Infonce && images.len() != texts.len() {
        return Err(Error::InvalidConfig(format!(
            "one-hot pairing needs index-aligned pools, got {} images and {} texts",
            images.len(),
            texts.len()
        )));
    }
    fs::create_dir_all(out_dir).map_err(|e| Error::io(out_dir, e))?;

    let spe = steps_per_epoch(images.len(), texts.len(), config.batch_size);
    let total_steps = spe * config.epochs as u64;
    let warmup_steps = (config.warmup_ratio * total_steps as f64).round() as u64;
    let encoder_config = config.encoder_config();

    let (mut model, mut optimizer, mut rng, start_step) = match resume_from {
        None => {
            let vocab = crate::encoders::Vocabulary::build(
                texts.iter().map(|r| r.text.as_str()),
                config.vocab_cap,
            );
            let model = EncoderPair::new(&encoder_config, vocab, config.seed)?;
            let optimizer = AdamW::new(model.n_params());
            let rng = ChaCha8Rng::seed_from_u64(config.seed ^ SAMPLER_SEED_SALT);
            (model, optimizer, rng, 0u64)
        }
        Some(ckpt_dir) => {
            let ckpt = load_checkpoint(ckpt_dir)?;
            if ckpt.manifest.config != encoder_config {
                return Err(Error::Checkpoint(format!(
                    "checkpoint encoder config {:?} does not match the training config {:?}",
                    ckpt.manifest.config, encoder_config
                )));
            }
            let word_pos = ckpt.rng_word_pos()?;
            let optimizer = ckpt.optimizer.ok_or_else(|| {
                Error::Checkpoint("checkpoint has no optimizer state; cannot resume".into())
            })?;
            let mut rng = ChaCha8Rng::seed_from_u64(ckpt.manifest.seed ^ SAMPLER_SEED_SALT);
            rng.set_word_pos(word_pos);
            (ckpt.model, optimizer, rng, ckpt.manifest.step)
        }
    };

    let mut decay_mask = vec![true; model.n_params()];
    decay_mask[model.tau_param_index()] = false;

    let image_groups = group_by_label(images, |r| r.label);
    let text_groups = group_by_label(texts, |r| r.label);

    let mut metrics = String::new();
    let mut first_loss = f64::NAN;
    let mut last_report = LossReport {
        l_v2t: 0.0,
        l_t2v: 0.0,
        total: 0.0,
    };

    for step in start_step..total_steps {
        let lr = lr_at_step(config.learning_rate, step, warmup_steps);

        let (img_idx, txt_idx) = match config.loss {
            LossKind::Semantic => {
                if config.stratified {
                    let a = stratified_indices(&mut rng, &image_groups, config.batch_size)?;
                    let b = stratified_indices(&mut rng, &text_groups, config.batch_size)?;
                    (a, b)
                } else {
                    let a = sample_indices(&mut rng, images.len(), config.batch_size)?;
                    let b = sample_indices(&mut rng, texts.len(), config.batch_size)?;
                    (a, b)
                }
            }
            LossKind::Infonce => {
                let idx = sample_indices(&mut rng, images.len(), config.batch_size)?;
                (idx.clone(), idx)
            }
        };

        let batch = Batch::new(
            img_idx.iter().map(|&i| images[i].clone()).collect(),
            txt_idx.iter().map(|&j| texts[j].clone()).collect(),
        )?;

        let batch_images: Vec<crate::records::Image> = batch
            .images
            .iter()
            .map(|rec| {
                if config.augment {
                    augment(&rec.image, &config.augmentation, &mut rng)
                } else {
                    rec.image.clone()
                }
            })
            .collect();
        let batch_texts: Vec<&str> = batch.texts.iter().map(|r| r.text.as_str()).collect();

        let (emb, cache) = model.forward_batch(&batch_images, &batch_texts)?;
        let (report, loss_grads) = match config.loss {
            LossKind::Semantic => {
                let bundle = build_soft_targets(&batch)?;
                semantic_matching_loss_with_grads(
                    &emb.v_tilde,
                    &emb.t_tilde,
                    &bundle,
                    &model.temperature,
                )?
            }
            LossKind::Infonce => {
                hard_infonce_loss_with_grads(&emb.v_tilde, &emb.t_tilde, &model.temperature)?
            }
        };

        if !report.total.is_finite() {
            let dump = dump_bad_batch(out_dir, step, &batch, &model)?;
            return Err(Error::NonFiniteLoss { step, dump });
        }
        if step == start_step {
            first_loss = report.total;
        }
        last_report = report;

        let grads = model.backward(&cache, &loss_grads);
        let mut params = model.params_vec();
        optimizer.step(
            &mut params,
            &grads,
            lr,
            config.weight_decay,
            &decay_mask,
        );
        model.set_params(&params)?;
        model.temperature.clamp();

        writeln!(
            metrics,
            "step={} loss_v2t={} loss_t2v={} loss_total={} tau={} lr={}",
            step + 1,
            report.l_v2t,
            report.l_t2v,
            report.total,
            model.temperature.tau(),
            lr
        )
        .expect("writing to a String cannot fail");

        if (step + 1) % spe == 0 {
            let epoch = (step + 1) / spe;
            let meta = CheckpointMeta {
                step: step + 1,
                seed: config.seed,
                rng_word_pos: rng.get_word_pos(),
            };
            save_checkpoint(
                &out_dir.join(format!("epoch-{epoch:03}")),
                &model,
                &encoder_config,
                Some(&optimizer),
                meta,
            )?;
        }
    }

    let final_dir = out_dir.join("final");
    let meta = CheckpointMeta {
        step: total_steps,
        seed: config.seed,
        rng_word_pos: rng.get_word_pos(),
    };
    save_checkpoint(&final_dir, &model, &encoder_config, Some(&optimizer), meta)?;

    let metrics_path = out_dir.join("metrics.txt");
    fs::write(&metrics_path, &metrics).map_err(|e| Error::io(&metrics_path, e))?;

    Ok(TrainOutcome {
        final_checkpoint: final_dir,
        metrics_path,
        metrics,
        steps_run: total_steps - start_step,
        first_loss,
        final_loss: last_report.total,
    })
}

fn group_by_label<T>(records: &[T], label_of: impl Fn(&T) -> FindingLabel) -> Vec<Vec<usize>> {
    let mut groups: BTreeMap<FindingLabel, Vec<usize>> = BTreeMap::new();
    for (i, rec) in records.iter().enumerate() {
        groups.entry(label_of(rec)).or_default().push(i);
    }
    groups.into_values().collect()
}

fn sample_indices(rng: &mut ChaCha8Rng, pool: usize, n: usize) -> Result<Vec<usize>> {
    if pool < n {
        return Err(Error::InsufficientData { pool, requested: n });
    }
    let mut indices: Vec<usize> = (0..pool).collect();
    for i in 0..n {
        let j = rng.gen_range(i..pool);
        indices.swap(i, j);
    }
    indices.truncate(n);
    Ok(indices)
}

/// Round-robin over label groups, drawing without replacement inside
/// each, so every finding is represented as evenly as the pool allows.
fn stratified_indices(
    rng: &mut ChaCha8Rng,
    groups: &[Vec<usize>],
    n: usize,
) -> Result<Vec<usize>> {
    let pool: usize = groups.iter().map(Vec::len).sum();
    if pool < n {
        return Err(Error::InsufficientData { pool, requested: n });
    }
    let mut remaining: Vec<Vec<usize>> = groups.to_vec();
    let mut out = Vec::with_capacity(n);
    let mut g = 0;
    while out.len() < n {
        if !remaining[g].is_empty() {
            let pick = rng.gen_range(0..remaining[g].len());
            out.push(remaining[g].swap_remove(pick));
        }
        g = (g + 1) % remaining.len();
    }
    Ok(out)
}

fn dump_bad_batch(
    out_dir: &Path,
    step: u64,
    batch: &Batch,
    model: &EncoderPair,
) -> Result<PathBuf> {
    let path = out_dir.join("nan-dump.json");
    let payload = serde_json::json!({
        "step": step,
        "tau": model.temperature.tau(),
        "image_ids": batch.images.iter().map(|r| r.id.clone()).collect::<Vec<_>>(),
        "text_ids": batch.texts.iter().map(|r| r.id.clone()).collect::<Vec<_>>(),
        "image_labels": batch.images.iter().map(|r| r.label).collect::<Vec<_>>(),
        "text_labels": batch.texts.iter().map(|r| r.label).collect::<Vec<_>>(),
    });
    fs::write(
        &path,
        serde_json::to_string_pretty(&payload).map_err(|e| Error::json(&path, e))?,
    )
    .map_err(|e| Error::io(&path, e))?;
    Ok(path)
}
