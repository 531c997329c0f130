//! Dataset ingestion adapters.
//!
//! Four source layouts feed the pools:
//!   paired-report  JSONL rows {id, report, pixels, height, width, channels};
//!                  each row contributes the image (labeled by the union of
//!                  its sentences' findings) and every kept sentence. The
//!                  sentence ids keep the study id prefix for audit.
//!   image-label    CSV rows `id,class_name`; labels via the alias table.
//!                  Pixel payloads are dataset-specific, so rows get a flat
//!                  placeholder image unless a `<file>.pixels.jsonl` sidecar
//!                  provides them.
//!   text-only      JSONL rows {id, text}; reports are split and labeled.
//!   synthetic      a directory produced by the corpus generator.
//!
//! Malformed rows are skipped with a warning up to a threshold, then the
//! adapter aborts. Unlabeled records are dropped and counted.

use std::fs;
use std::path::Path;

use serde::Deserialize;

use crate::error::{Error, Result};
use crate::finding::{FindingLabel, FindingType};
use crate::labeler::{
    class_to_label, sentence_to_label, split_report, tag_sentence, Lexicon, UncertaintyPolicy,
};
use crate::records::{Image, ImageRecord, SentenceRecord};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Adapter {
    PairedReport,
    ImageLabel,
    TextOnly,
    Synthetic,
}

impl std::str::FromStr for Adapter {
    type Err = String;
    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "paired-report" => Ok(Adapter::PairedReport),
            "image-label" => Ok(Adapter::ImageLabel),
            "text-only" => Ok(Adapter::TextOnly),
            "synthetic" => Ok(Adapter::Synthetic),
            other => Err(format!("unknown adapter {other:?}")),
        }
    }
}

#[derive(Debug, Clone)]
pub struct IngestOptions {
    pub lexicon: Lexicon,
    pub uncertainty: UncertaintyPolicy,
    /// Abort after this many malformed rows.
    pub max_malformed: usize,
    /// Placeholder size for label-only image datasets.
    pub placeholder_size: usize,
}

impl Default for IngestOptions {
    fn default() -> IngestOptions {
        IngestOptions {
            lexicon: Lexicon::builtin(),
            uncertainty: UncertaintyPolicy::Affirm,
            max_malformed: 100,
            placeholder_size: 32,
        }
    }
}

#[derive(Debug, Default)]
pub struct IngestReport {
    pub images: Vec<ImageRecord>,
    pub texts: Vec<SentenceRecord>,
    pub skipped_malformed: usize,
    pub dropped_unlabeled: usize,
    pub warnings: Vec<String>,
}

pub fn ingest_dataset(adapter: Adapter, path: &Path, opts: &IngestOptions) -> Result<IngestReport> {
    match adapter {
        Adapter::PairedReport => ingest_paired_report(path, opts),
        Adapter::ImageLabel => ingest_image_label(path, opts),
        Adapter::TextOnly => ingest_text_only(path, opts),
        Adapter::Synthetic => ingest_synthetic(path, opts),
    }
}

#[derive(Deserialize)]
struct PairedRow {
    id: String,
    report: String,
    pixels: Vec<f64>,
    height: usize,
    width: usize,
    #[serde(default = "one")]
    channels: usize,
}

fn one() -> usize {
    1
}

#[derive(Deserialize)]
struct TextRow {
    id: String,
    text: String,
}

#[derive(Deserialize)]
struct PixelRow {
    id: String,
    pixels: Vec<f64>,
    height: usize,
    width: usize,
    #[serde(default = "one")]
    channels: usize,
}

struct MalformedGate<'a> {
    path: &'a Path,
    max: usize,
    skipped: usize,
}

impl<'a> MalformedGate<'a> {
    fn new(path: &'a Path, max: usize) -> MalformedGate<'a> {
        MalformedGate {
            path,
            max,
            skipped: 0,
        }
    }

    fn record(&mut self, report: &mut IngestReport, line: usize, why: String) -> Result<()> {
        self.skipped += 1;
        report.skipped_malformed = self.skipped;
        report
            .warnings
            .push(format!("{}:{line}: skipped malformed row: {why}", self.path.display()));
        if self.skipped > self.max {
            return Err(Error::TooManyMalformed {
                path: self.path.to_path_buf(),
                skipped: self.skipped,
                threshold: self.max,
            });
        }
        Ok(())
    }
}

fn read_lines(path: &Path) -> Result<Vec<String>> {
    let raw = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    Ok(raw.lines().map(str::to_string).collect())
}

fn warn_if_empty(report: &mut IngestReport, path: &Path, rows: usize) {
    if rows == 0 {
        report
            .warnings
            .push(format!("{}: empty input, pools stay empty", path.display()));
    }
}

/// Sentence labels for a report, via the rule-based labeler.
fn label_sentences(
    report_text: &str,
    opts: &IngestOptions,
) -> Vec<(String, FindingLabel)> {
    split_report(report_text)
        .into_iter()
        .map(|sentence| {
            let mentions = tag_sentence(&sentence, &opts.lexicon);
            let label = sentence_to_label(&mentions, opts.uncertainty);
            (sentence, label)
        })
        .collect()
}

/// Report-level label: union of affirmed findings across sentences, with
/// No Finding as the fallback when only negative evidence exists.
fn report_level_label(sentence_labels: &[(String, FindingLabel)]) -> FindingLabel {
    let mut findings = Vec::new();
    let mut saw_no_finding = false;
    for (_, label) in sentence_labels {
        for f in label.findings() {
            if f == FindingType::NoFinding {
                saw_no_finding = true;
            } else {
                findings.push(f);
            }
        }
    }
    findings.sort();
    findings.dedup();
    if findings.is_empty() {
        if saw_no_finding {
            return FindingLabel::single(FindingType::NoFinding);
        }
        return FindingLabel::empty();
    }
    FindingLabel::from_findings(&findings).expect("no-finding bit excluded above")
}

fn ingest_paired_report(path: &Path, opts: &IngestOptions) -> Result<IngestReport> {
    let mut report = IngestReport::default();
    let mut gate = MalformedGate::new(path, opts.max_malformed);
    let lines = read_lines(path)?;
    warn_if_empty(&mut report, path, lines.len());
    for (lineno, line) in lines.iter().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let row: PairedRow = match serde_json::from_str(line) {
            Ok(row) => row,
            Err(e) => {
                gate.record(&mut report, lineno + 1, e.to_string())?;
                continue;
            }
        };
        let image = Image {
            channels: row.channels,
            height: row.height,
            width: row.width,
            data: row.pixels,
        };
        if image.validate().is_err() {
            gate.record(&mut report, lineno + 1, "pixel count mismatch".into())?;
            continue;
        }
        let sentence_labels = label_sentences(&row.report, opts);
        for (k, (sentence, label)) in sentence_labels.iter().enumerate() {
            if label.is_unlabeled() {
                report.dropped_unlabeled += 1;
                continue;
            }
            report
                .texts
                .push(SentenceRecord::new(format!("{}#s{k}", row.id), sentence.clone(), *label)?);
        }
        let image_label = report_level_label(&sentence_labels);
        if image_label.is_unlabeled() {
            report.dropped_unlabeled += 1;
            continue;
        }
        report
            .images
            .push(ImageRecord::new(row.id, image, image_label)?);
    }
    Ok(report)
}

fn ingest_image_label(path: &Path, opts: &IngestOptions) -> Result<IngestReport> {
    let mut report = IngestReport::default();
    let mut gate = MalformedGate::new(path, opts.max_malformed);
    let lines = read_lines(path)?;
    warn_if_empty(&mut report, path, lines.len());

    // Optional sidecar with real pixels, keyed by id.
    let sidecar_path = path.with_extension("pixels.jsonl");
    let mut pixel_map = std::collections::BTreeMap::new();
    if sidecar_path.exists() {
        for line in read_lines(&sidecar_path)? {
            if line.trim().is_empty() {
                continue;
            }
            let row: PixelRow =
                serde_json::from_str(&line).map_err(|e| Error::json(&sidecar_path, e))?;
            pixel_map.insert(
                row.id.clone(),
                Image {
                    channels: row.channels,
                    height: row.height,
                    width: row.width,
                    data: row.pixels,
                },
            );
        }
    }

    for (lineno, line) in lines.iter().enumerate() {
        let trimmed = line.trim();
        if trimmed.is_empty() {
            continue;
        }
        if lineno == 0 && trimmed.to_ascii_lowercase().starts_with("id,") {
            continue; // header
        }
        let Some((id, class_name)) = trimmed.split_once(',') else {
            gate.record(&mut report, lineno + 1, "expected `id,class_name`".into())?;
            continue;
        };
        let label = match class_to_label(class_name.trim(), &opts.lexicon) {
            Ok(label) => label,
            Err(e) => {
                gate.record(&mut report, lineno + 1, e.to_string())?;
                continue;
            }
        };
        if label.is_unlabeled() {
            report.dropped_unlabeled += 1;
            continue;
        }
        let image = pixel_map.remove(id.trim()).unwrap_or_else(|| {
            let mut img = Image::zeros(1, opts.placeholder_size, opts.placeholder_size);
            img.data.fill(0.5);
            img
        });
        report
            .images
            .push(ImageRecord::new(id.trim().to_string(), image, label)?);
    }
    Ok(report)
}

fn ingest_text_only(path: &Path, opts: &IngestOptions) -> Result<IngestReport> {
    let mut report = IngestReport::default();
    let mut gate = MalformedGate::new(path, opts.max_malformed);
    let lines = read_lines(path)?;
    warn_if_empty(&mut report, path, lines.len());
    for (lineno, line) in lines.iter().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let row: TextRow = match serde_json::from_str(line) {
            Ok(row) => row,
            Err(e) => {
                gate.record(&mut report, lineno + 1, e.to_string())?;
                continue;
            }
        };
        for (k, (sentence, label)) in label_sentences(&row.text, opts).iter().enumerate() {
            if label.is_unlabeled() {
                report.dropped_unlabeled += 1;
                continue;
            }
            report
                .texts
                .push(SentenceRecord::new(format!("{}#s{k}", row.id), sentence.clone(), *label)?);
        }
    }
    Ok(report)
}

pub const SYNTHETIC_IMAGES_FILE: &str = "images.jsonl";
pub const SYNTHETIC_SENTENCES_FILE: &str = "sentences.jsonl";
pub const SYNTHETIC_META_FILE: &str = "meta.json";

fn ingest_synthetic(dir: &Path, opts: &IngestOptions) -> Result<IngestReport> {
    let mut report = IngestReport::default();
    let images_path = dir.join(SYNTHETIC_IMAGES_FILE);
    let sentences_path = dir.join(SYNTHETIC_SENTENCES_FILE);

    let mut gate = MalformedGate::new(dir, opts.max_malformed);
    if images_path.exists() {
        for (lineno, line) in read_lines(&images_path)?.iter().enumerate() {
            if line.trim().is_empty() {
                continue;
            }
            match serde_json::from_str::<ImageRecord>(line) {
                Ok(rec) => report.images.push(rec),
                Err(e) => gate.record(&mut report, lineno + 1, e.to_string())?,
            }
        }
    }
    if sentences_path.exists() {
        for (lineno, line) in read_lines(&sentences_path)?.iter().enumerate() {
            if line.trim().is_empty() {
                continue;
            }
            match serde_json::from_str::<SentenceRecord>(line) {
                Ok(rec) => report.texts.push(rec),
                Err(e) => gate.record(&mut report, lineno + 1, e.to_string())?,
            }
        }
    }
    if report.images.is_empty() && report.texts.is_empty() {
        report
            .warnings
            .push(format!("{}: empty synthetic dataset", dir.display()));
    }
    Ok(report)
}

/// Write a generated corpus in the synthetic directory layout.
pub fn write_synthetic_dir(
    dir: &Path,
    corpus: &super::synthetic::SyntheticCorpus,
    spec: &super::synthetic::SyntheticCorpusSpec,
    seed: u64,
) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let mut images = String::new();
    for rec in &corpus.images {
        images.push_str(&serde_json::to_string(rec).map_err(|e| Error::json(dir, e))?);
        images.push('\n');
    }
    let images_path = dir.join(SYNTHETIC_IMAGES_FILE);
    fs::write(&images_path, images).map_err(|e| Error::io(&images_path, e))?;

    let mut sentences = String::new();
    for rec in &corpus.sentences {
        sentences.push_str(&serde_json::to_string(rec).map_err(|e| Error::json(dir, e))?);
        sentences.push('\n');
    }
    let sentences_path = dir.join(SYNTHETIC_SENTENCES_FILE);
    fs::write(&sentences_path, sentences).map_err(|e| Error::io(&sentences_path, e))?;

    let meta = serde_json::json!({
        "seed": seed,
        "spec": spec,
        "class_names": corpus.class_names,
        "class_labels": corpus.class_labels,
        "image_class": corpus.image_class,
        "sentence_class": corpus.sentence_class,
    });
    let meta_path = dir.join(SYNTHETIC_META_FILE);
    fs::write(
        &meta_path,
        serde_json::to_string_pretty(&meta).map_err(|e| Error::json(&meta_path, e))?,
    )
    .map_err(|e| Error::io(&meta_path, e))
}
