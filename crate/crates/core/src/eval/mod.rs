//! Downstream protocols: zero-shot prompt classification (optionally
//! prompt-ensembled), frozen-encoder linear probing, image-text
//! retrieval with Precision@K, the same-class similarity histogram, and
//! embedding export.
//!
//! Everything here is read-only over a loaded model and deterministic
//! given the seeds in the options.

pub mod prompts;

pub use prompts::{generate_prompt_set, ClassPrompts, PromptSet, DEFAULT_PROMPT_VARIANTS};

use std::fmt::Write as _;
use std::path::Path;

use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

use serde::{Deserialize, Serialize};

use crate::encoders::{EmbeddingModel, EncoderPair};
use crate::error::{Error, Result};
use crate::finding::FindingLabel;
use crate::mat::{dot, l2_norm};
use crate::matfile::{write_f32_matrix, MatrixSidecar};
use crate::optim::AdamW;
use crate::records::{ImageRecord, SentenceRecord};
use crate::util::{f64s_to_bytes, fnv1a64_hex};

/// Default K values for retrieval.
pub const DEFAULT_K_LIST: [usize; 4] = [1, 2, 5, 10];

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EvalMeta {
    pub checkpoint_id: String,
    pub prompt_seed: u64,
    pub runs: usize,
    pub ensemble: bool,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EvalReport {
    pub class_names: Vec<String>,
    pub accuracy: f64,
    pub accuracy_std: f64,
    pub accuracy_runs: Vec<f64>,
    pub per_class_accuracy: Vec<f64>,
    /// Rows are true classes, columns predictions, summed over runs.
    pub confusion: Vec<Vec<usize>>,
    pub meta: EvalMeta,
}

impl EvalReport {
    /// Structured text rendering, one key per line, diff-friendly.
    pub fn render_kv(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "accuracy={}", self.accuracy);
        let _ = writeln!(out, "accuracy_std={}", self.accuracy_std);
        let _ = writeln!(out, "runs={}", self.meta.runs);
        let _ = writeln!(out, "ensemble={}", self.meta.ensemble);
        let _ = writeln!(out, "checkpoint_id={}", self.meta.checkpoint_id);
        let _ = writeln!(out, "prompt_seed={}", self.meta.prompt_seed);
        for (i, name) in self.class_names.iter().enumerate() {
            let _ = writeln!(out, "class_accuracy[{name}]={}", self.per_class_accuracy[i]);
        }
        for (i, row) in self.confusion.iter().enumerate() {
            let cells: Vec<String> = row.iter().map(|c| c.to_string()).collect();
            let _ = writeln!(out, "confusion[{}]={}", self.class_names[i], cells.join(","));
        }
        out
    }
}

fn build_report(
    class_names: Vec<String>,
    confusion: Vec<Vec<usize>>,
    accuracy_runs: Vec<f64>,
    meta: EvalMeta,
) -> EvalReport {
    let total: usize = confusion.iter().map(|row| row.iter().sum::<usize>()).sum();
    let trace: usize = (0..confusion.len()).map(|i| confusion[i][i]).sum();
    let accuracy = trace as f64 / total as f64;
    let mean_of_runs = accuracy_runs.iter().sum::<f64>() / accuracy_runs.len() as f64;
    let accuracy_std = (accuracy_runs
        .iter()
        .map(|a| (a - mean_of_runs).powi(2))
        .sum::<f64>()
        / accuracy_runs.len() as f64)
        .sqrt();
    let per_class_accuracy = confusion
        .iter()
        .enumerate()
        .map(|(i, row)| {
            let row_total: usize = row.iter().sum();
            if row_total == 0 {
                0.0
            } else {
                row[i] as f64 / row_total as f64
            }
        })
        .collect();
    EvalReport {
        class_names,
        accuracy,
        accuracy_std,
        accuracy_runs,
        per_class_accuracy,
        confusion,
        meta,
    }
}

#[derive(Debug, Clone, Copy)]
pub struct ZeroShotOptions {
    pub ensemble: bool,
    pub runs: usize,
    pub prompt_seed: u64,
    pub checkpoint_id: Option<u64>,
}

impl Default for ZeroShotOptions {
    fn default() -> ZeroShotOptions {
        ZeroShotOptions {
            ensemble: false,
            runs: 5,
            prompt_seed: 0,
            checkpoint_id: None,
        }
    }
}

/// Zero-shot classification by cosine between image embeddings and class
/// representations built from prompts.
///
/// Non-ensemble runs sample one prompt per class per run; ensemble runs
/// average all prompt embeddings of a class and renormalize. Accuracy is
/// aggregated over `runs` prompt-sampling seeds with mean and std.
pub fn zero_shot_classify(
    images: &[ImageRecord],
    prompt_set: &PromptSet,
    model: &impl EmbeddingModel,
    opts: &ZeroShotOptions,
) -> Result<EvalReport> {
    prompt_set.validate()?;
    if images.is_empty() {
        return Err(Error::EmptyInput("no evaluation images".into()));
    }
    if opts.runs == 0 {
        return Err(Error::InvalidConfig("runs must be at least 1".into()));
    }
    let n_classes = prompt_set.classes.len();

    // Ground truth: each image label must match exactly one prompt class.
    let truth: Vec<usize> = images
        .iter()
        .map(|rec| {
            prompt_set.class_of_label(rec.label).ok_or_else(|| {
                Error::InvalidConfig(format!(
                    "prompt set does not cover label {} of image {}",
                    rec.label, rec.id
                ))
            })
        })
        .collect::<Result<_>>()?;

    let image_embeddings: Vec<Vec<f64>> = images
        .iter()
        .map(|rec| model.embed_image(&rec.image))
        .collect::<Result<_>>()?;

    let mut confusion = vec![vec![0usize; n_classes]; n_classes];
    let mut accuracy_runs = Vec::with_capacity(opts.runs);
    for run in 0..opts.runs {
        let mut rng = ChaCha8Rng::seed_from_u64(opts.prompt_seed.wrapping_add(run as u64));
        let mut class_reps = Vec::with_capacity(n_classes);
        for class in &prompt_set.classes {
            let rep = if opts.ensemble {
                let mut acc = vec![0.0; model.embed_dim()];
                for prompt in &class.prompts {
                    let emb = model.embed_text(prompt)?;
                    for (a, e) in acc.iter_mut().zip(&emb) {
                        *a += e;
                    }
                }
                let inv = 1.0 / class.prompts.len() as f64;
                for a in &mut acc {
                    *a *= inv;
                }
                renormalize(acc)
            } else {
                let pick = rng.gen_range(0..class.prompts.len());
                model.embed_text(&class.prompts[pick])?
            };
            class_reps.push(rep);
        }

        let mut correct = 0usize;
        for (emb, &true_class) in image_embeddings.iter().zip(&truth) {
            let pred = argmax_cosine(emb, &class_reps);
            confusion[true_class][pred] += 1;
            if pred == true_class {
                correct += 1;
            }
        }
        accuracy_runs.push(correct as f64 / images.len() as f64);
    }

    Ok(build_report(
        prompt_set.classes.iter().map(|c| c.name.clone()).collect(),
        confusion,
        accuracy_runs,
        EvalMeta {
            checkpoint_id: opts
                .checkpoint_id
                .map(|id| format!("{id:016x}"))
                .unwrap_or_else(|| "unknown".into()),
            prompt_seed: opts.prompt_seed,
            runs: opts.runs,
            ensemble: opts.ensemble,
        },
    ))
}

fn renormalize(v: Vec<f64>) -> Vec<f64> {
    let norm = l2_norm(&v);
    if norm == 0.0 {
        return v;
    }
    v.into_iter().map(|x| x / norm).collect()
}

/// Ties break toward the lower class index.
fn argmax_cosine(emb: &[f64], reps: &[Vec<f64>]) -> usize {
    let mut best = 0;
    let mut best_score = f64::NEG_INFINITY;
    for (i, rep) in reps.iter().enumerate() {
        let score = dot(emb, rep);
        if score > best_score {
            best_score = score;
            best = i;
        }
    }
    best
}

#[derive(Debug, Clone, Copy)]
pub struct ProbeOptions {
    pub epochs: usize,
    pub learning_rate: f64,
    pub seed: u64,
}

impl Default for ProbeOptions {
    fn default() -> ProbeOptions {
        ProbeOptions {
            epochs: 300,
            learning_rate: 0.05,
            seed: 0,
        }
    }
}

/// The trained classification head of a linear probe.
#[derive(Debug, Clone)]
pub struct ProbeHead {
    pub n_classes: usize,
    pub feature_dim: usize,
    /// [n_classes][feature_dim] weights then [n_classes] biases.
    pub params: Vec<f64>,
}

impl ProbeHead {
    pub fn n_params(&self) -> usize {
        self.params.len()
    }

    fn scores(&self, features: &[f64]) -> Vec<f64> {
        let (w, b) = self.params.split_at(self.n_classes * self.feature_dim);
        (0..self.n_classes)
            .map(|c| b[c] + dot(&w[c * self.feature_dim..(c + 1) * self.feature_dim], features))
            .collect()
    }
}

/// Train a randomly initialized linear head on frozen image embeddings
/// with cross-entropy, then report test accuracy. Any drift of the
/// frozen image-side parameters is a hard failure.
pub fn linear_probe(
    train: &[ImageRecord],
    test: &[ImageRecord],
    model: &EncoderPair,
    opts: &ProbeOptions,
) -> Result<(EvalReport, ProbeHead)> {
    if train.is_empty() || test.is_empty() {
        return Err(Error::EmptyInput("probe needs non-empty splits".into()));
    }
    let frozen_before = fnv1a64_hex(&f64s_to_bytes(&model.vision_params_vec()));

    // Classes from the training split, in label order.
    let mut class_labels: Vec<FindingLabel> = train.iter().map(|r| r.label).collect();
    class_labels.sort();
    class_labels.dedup();
    let n_classes = class_labels.len();
    let class_of = |label: FindingLabel| -> Result<usize> {
        class_labels
            .binary_search(&label)
            .map_err(|_| Error::InvalidConfig(format!("label {label} not present in train split")))
    };

    let embed_split = |records: &[ImageRecord]| -> Result<(Vec<Vec<f64>>, Vec<usize>)> {
        let mut feats = Vec::with_capacity(records.len());
        let mut classes = Vec::with_capacity(records.len());
        for rec in records {
            feats.push(model.embed_image(&rec.image)?);
            classes.push(class_of(rec.label)?);
        }
        Ok((feats, classes))
    };
    let (train_x, train_y) = embed_split(train)?;
    let (test_x, test_y) = embed_split(test)?;

    let feature_dim = model.embed_dim();
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    let bound = (6.0 / feature_dim as f64).sqrt();
    let mut params: Vec<f64> = (0..n_classes * feature_dim)
        .map(|_| rng.gen_range(-bound..bound))
        .chain(std::iter::repeat_n(0.0, n_classes))
        .collect();
    let mut head = ProbeHead {
        n_classes,
        feature_dim,
        params: params.clone(),
    };

    // Full-batch softmax cross-entropy on the head only.
    let mut optimizer = AdamW::new(params.len());
    let decay_mask = vec![true; params.len()];
    let inv_n = 1.0 / train_x.len() as f64;
    for _ in 0..opts.epochs {
        head.params.copy_from_slice(&params);
        let mut grads = vec![0.0; params.len()];
        for (x, &y) in train_x.iter().zip(&train_y) {
            let scores = head.scores(x);
            let max = scores.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            let exps: Vec<f64> = scores.iter().map(|s| (s - max).exp()).collect();
            let denom: f64 = exps.iter().sum();
            for c in 0..n_classes {
                let p = exps[c] / denom;
                let residual = (p - if c == y { 1.0 } else { 0.0 }) * inv_n;
                for (k, &xv) in x.iter().enumerate() {
                    grads[c * feature_dim + k] += residual * xv;
                }
                grads[n_classes * feature_dim + c] += residual;
            }
        }
        optimizer.step(&mut params, &grads, opts.learning_rate, 0.0, &decay_mask);
    }
    head.params.copy_from_slice(&params);

    let mut confusion = vec![vec![0usize; n_classes]; n_classes];
    let mut correct = 0usize;
    for (x, &y) in test_x.iter().zip(&test_y) {
        let scores = head.scores(x);
        let pred = scores
            .iter()
            .enumerate()
            .max_by(|a, b| a.1.partial_cmp(b.1).expect("finite scores"))
            .map(|(i, _)| i)
            .expect("at least one class");
        confusion[y][pred] += 1;
        if pred == y {
            correct += 1;
        }
    }
    let accuracy = correct as f64 / test_x.len() as f64;

    let frozen_after = fnv1a64_hex(&f64s_to_bytes(&model.vision_params_vec()));
    if frozen_before != frozen_after {
        return Err(Error::FrozenParameterDrift(format!(
            "{frozen_before} became {frozen_after}"
        )));
    }

    let report = build_report(
        class_labels.iter().map(|l| l.to_string()).collect(),
        confusion,
        vec![accuracy],
        EvalMeta {
            checkpoint_id: "in-memory".into(),
            prompt_seed: opts.seed,
            runs: 1,
            ensemble: false,
        },
    );
    Ok((report, head))
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RankedHit {
    pub id: String,
    pub score: f64,
    pub label: FindingLabel,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct QueryRetrieval {
    pub query_id: String,
    pub query_label: FindingLabel,
    /// Candidates by descending score; ties break by candidate id.
    pub ranked: Vec<RankedHit>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RetrievalResult {
    pub k_list: Vec<usize>,
    /// Mean over queries of the same-class fraction in the top K.
    pub precision_at: Vec<f64>,
    pub per_query: Vec<QueryRetrieval>,
}

impl RetrievalResult {
    pub fn render_kv(&self) -> String {
        let mut out = String::new();
        for (k, p) in self.k_list.iter().zip(&self.precision_at) {
            let _ = writeln!(out, "precision@{k}={p}");
        }
        let _ = writeln!(out, "queries={}", self.per_query.len());
        out
    }
}

/// Rank candidate texts by cosine to each query image; Precision@K is
/// the fraction of the top K sharing the query's class label.
pub fn retrieve(
    queries: &[ImageRecord],
    candidates: &[SentenceRecord],
    model: &impl EmbeddingModel,
    k_list: &[usize],
) -> Result<RetrievalResult> {
    if queries.is_empty() || candidates.is_empty() {
        return Err(Error::EmptyInput("retrieval needs queries and candidates".into()));
    }
    for &k in k_list {
        if k == 0 || k > candidates.len() {
            return Err(Error::KOutOfRange {
                k,
                candidates: candidates.len(),
            });
        }
    }

    let cand_embeddings: Vec<Vec<f64>> = candidates
        .iter()
        .map(|c| model.embed_text(&c.text))
        .collect::<Result<_>>()?;

    let mut per_query = Vec::with_capacity(queries.len());
    for query in queries {
        let q = model.embed_image(&query.image)?;
        let mut ranked: Vec<RankedHit> = candidates
            .iter()
            .zip(&cand_embeddings)
            .map(|(c, e)| RankedHit {
                id: c.id.clone(),
                score: dot(&q, e),
                label: c.label,
            })
            .collect();
        ranked.sort_by(|a, b| b.score.total_cmp(&a.score).then_with(|| a.id.cmp(&b.id)));
        per_query.push(QueryRetrieval {
            query_id: query.id.clone(),
            query_label: query.label,
            ranked,
        });
    }

    let precision_at = k_list
        .iter()
        .map(|&k| {
            per_query
                .iter()
                .map(|q| {
                    let same = q.ranked[..k]
                        .iter()
                        .filter(|hit| hit.label == q.query_label)
                        .count();
                    same as f64 / k as f64
                })
                .sum::<f64>()
                / per_query.len() as f64
        })
        .collect();

    Ok(RetrievalResult {
        k_list: k_list.to_vec(),
        precision_at,
        per_query,
    })
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Histogram {
    /// bins+1 edges spanning [-1, 1].
    pub edges: Vec<f64>,
    pub counts: Vec<usize>,
}

impl Histogram {
    pub fn total(&self) -> usize {
        self.counts.iter().sum()
    }

    pub fn render_table(&self) -> String {
        let mut out = String::new();
        for (i, count) in self.counts.iter().enumerate() {
            let _ = writeln!(out, "bin[{},{})={}", self.edges[i], self.edges[i + 1], count);
        }
        out
    }
}

/// For queries of one class: among each query's top-10 retrieved texts,
/// keep the same-class hits and histogram their cosine scores.
pub fn similarity_histogram(
    query_label: FindingLabel,
    result: &RetrievalResult,
    bins: usize,
) -> Histogram {
    let bins = bins.max(1);
    let edges: Vec<f64> = (0..=bins).map(|i| -1.0 + 2.0 * i as f64 / bins as f64).collect();
    let mut counts = vec![0usize; bins];
    for query in result.per_query.iter().filter(|q| q.query_label == query_label) {
        let top = query.ranked.iter().take(10);
        for hit in top.filter(|h| h.label == query_label) {
            let idx = (((hit.score + 1.0) / 2.0) * bins as f64).floor() as usize;
            counts[idx.min(bins - 1)] += 1;
        }
    }
    Histogram { edges, counts }
}

#[derive(Debug, Clone)]
pub struct ExportSummary {
    pub rows: usize,
    pub cols: usize,
    pub sidecar: MatrixSidecar,
}

/// Export image embeddings as a row-major f32 matrix with an id/label
/// sidecar. Re-exports of the same checkpoint are bit-identical.
pub fn export_embeddings(
    records: &[ImageRecord],
    model: &impl EmbeddingModel,
    checkpoint_id: &str,
    out_path: &Path,
) -> Result<ExportSummary> {
    if records.is_empty() {
        return Err(Error::EmptyInput("nothing to export".into()));
    }
    let cols = model.embed_dim();
    let mut data = Vec::with_capacity(records.len() * cols);
    for rec in records {
        let emb = model.embed_image(&rec.image)?;
        data.extend(emb.iter().map(|v| *v as f32));
    }
    let sidecar = MatrixSidecar {
        rows: records.len(),
        cols,
        row_ids: records.iter().map(|r| r.id.clone()).collect(),
        col_ids: None,
        labels: Some(records.iter().map(|r| r.label).collect()),
        checkpoint_id: Some(checkpoint_id.to_string()),
        checksum: String::new(),
    };
    let sidecar = write_f32_matrix(out_path, &data, sidecar)?;
    Ok(ExportSummary {
        rows: records.len(),
        cols,
        sidecar,
    })
}
