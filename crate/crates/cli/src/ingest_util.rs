//! Path-shape adapter inference for the pretrain command.
//!
//! Directories are treated as synthetic-layout datasets; `.csv` files as
//! image-label tables; `.jsonl` files as paired-report rows when they
//! carry pixels, otherwise as text-only reports. A path used for both
//! sides (paired data) is ingested once and feeds both pools.

use std::fs;
use std::path::Path;

use anyhow::{bail, Context, Result};

use sempair_core::pipeline::{ingest_dataset, Adapter, IngestOptions, TrainConfig};
use sempair_core::records::{ImageRecord, SentenceRecord};

fn infer_adapter(path: &Path) -> Result<Adapter> {
    if path.is_dir() {
        return Ok(Adapter::Synthetic);
    }
    let ext = path
        .extension()
        .and_then(|e| e.to_str())
        .unwrap_or("")
        .to_ascii_lowercase();
    match ext.as_str() {
        "csv" => Ok(Adapter::ImageLabel),
        "jsonl" | "json" => {
            let raw = fs::read_to_string(path)
                .with_context(|| format!("reading {}", path.display()))?;
            let first = raw
                .lines()
                .find(|l| !l.trim().is_empty())
                .unwrap_or_default();
            if first.contains("\"pixels\"") {
                Ok(Adapter::PairedReport)
            } else {
                Ok(Adapter::TextOnly)
            }
        }
        other => bail!(
            "cannot infer dataset adapter for {} (extension {other:?})",
            path.display()
        ),
    }
}

fn ingest(path: &Path, opts: &IngestOptions) -> Result<sempair_core::pipeline::IngestReport> {
    let adapter = infer_adapter(path)?;
    let report = ingest_dataset(adapter, path, opts)?;
    for warning in &report.warnings {
        eprintln!("warning: {warning}");
    }
    if report.dropped_unlabeled > 0 {
        eprintln!(
            "note: {} unlabeled records dropped from {}",
            report.dropped_unlabeled,
            path.display()
        );
    }
    Ok(report)
}

/// Load image and text pools, deduplicating a shared source path.
pub fn load_pools(
    images_path: &Path,
    texts_path: &Path,
    config: &TrainConfig,
) -> Result<(Vec<ImageRecord>, Vec<SentenceRecord>)> {
    let opts = IngestOptions {
        uncertainty: config.uncertainty,
        placeholder_size: config.image_size,
        ..IngestOptions::default()
    };
    if images_path == texts_path {
        let report = ingest(images_path, &opts)?;
        return Ok((report.images, report.texts));
    }
    let image_side = ingest(images_path, &opts)?;
    let text_side = ingest(texts_path, &opts)?;
    let mut images = image_side.images;
    images.extend(text_side.images);
    let mut texts = text_side.texts;
    texts.extend(image_side.texts);
    Ok((images, texts))
}

/// Candidate sentences from a JSONL record file or a synthetic directory.
pub fn load_sentences(path: &Path) -> Result<Vec<SentenceRecord>> {
    if path.is_dir() {
        let report = ingest(path, &IngestOptions::default())?;
        if report.texts.is_empty() {
            bail!("no sentences found under {}", path.display());
        }
        return Ok(report.texts);
    }
    let raw = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    let mut out = Vec::new();
    for (lineno, line) in raw.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let rec: SentenceRecord = serde_json::from_str(line)
            .with_context(|| format!("{}:{}: malformed sentence record", path.display(), lineno + 1))?;
        out.push(rec);
    }
    if out.is_empty() {
        bail!("no sentences found in {}", path.display());
    }
    Ok(out)
}
