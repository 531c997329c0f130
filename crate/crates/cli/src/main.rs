//! Command-line front end: label extraction, pool-level similarity
//! matrices, synthetic corpus generation, pretraining, and the three
//! evaluation protocols.

mod ingest_util;

use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand};
use serde::Serialize;

use sempair_core::eval::{
    export_embeddings, generate_prompt_set, linear_probe, retrieve, similarity_histogram,
    zero_shot_classify, ProbeOptions, PromptSet, ZeroShotOptions, DEFAULT_PROMPT_VARIANTS,
};
use sempair_core::finding::{FindingLabel, FindingType};
use sempair_core::labeler::{
    class_to_label, sentence_to_label, split_report, tag_sentence, EntityMention, Lexicon,
    UncertaintyPolicy,
};
use sempair_core::matfile::{write_f32_matrix, MatrixSidecar};
use sempair_core::pairing::semantic_similarity;
use sempair_core::pipeline::{
    generate_paired_corpus, generate_synthetic_corpus, load_checkpoint, train,
    SyntheticCorpusSpec, TrainConfig,
};
use sempair_core::records::ImageRecord;

#[derive(Parser)]
#[command(name = "sempair", version, about = "Decoupled image-text contrastive pretraining")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Label report sentences (JSONL) or class names (CSV) with the
    /// 14-type finding vocabulary.
    ExtractLabels {
        #[arg(long)]
        input: PathBuf,
        /// Lexicon JSON; the built-in curated lexicon when omitted.
        #[arg(long)]
        lexicon: Option<PathBuf>,
        #[arg(long)]
        output: PathBuf,
        /// How uncertain mentions count: affirm or ignore.
        #[arg(long, default_value = "affirm")]
        uncertain: UncertaintyPolicy,
    },
    /// Pool-level label-similarity matrix (row-major f32 + sidecar).
    BuildMatrix {
        /// JSONL with id + label rows for the image side.
        #[arg(long)]
        images: PathBuf,
        /// JSONL with id + label rows for the text side.
        #[arg(long)]
        texts: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Generate a planted-semantics corpus.
    GenSynthetic {
        /// Spec JSON path, or a preset name: five-class, skewed-four-class.
        #[arg(long)]
        spec: String,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
        /// Align image i with sentence i (for one-hot pairing baselines).
        #[arg(long, default_value_t = false)]
        paired: bool,
    },
    /// Pretrain the dual encoders.
    Pretrain {
        /// Key-value config file; defaults apply when omitted.
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        images: PathBuf,
        #[arg(long)]
        texts: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Resume from an existing checkpoint directory.
        #[arg(long)]
        resume: Option<PathBuf>,
    },
    /// Zero-shot classification over a labeled image set.
    Zeroshot {
        #[arg(long)]
        ckpt: PathBuf,
        /// Synthetic-layout dataset directory.
        #[arg(long)]
        data: PathBuf,
        /// Prompt set JSON; generated from the data's labels when omitted.
        #[arg(long)]
        prompts: Option<PathBuf>,
        #[arg(long, default_value_t = false)]
        ensemble: bool,
        #[arg(long, default_value_t = 5)]
        runs: usize,
        #[arg(long, default_value_t = 0)]
        prompt_seed: u64,
        /// Also write the report here.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Rank candidate sentences against query images by cosine.
    Retrieve {
        #[arg(long)]
        ckpt: PathBuf,
        /// Synthetic-layout directory holding the query images.
        #[arg(long)]
        queries: PathBuf,
        /// Sentence JSONL (or a synthetic-layout directory).
        #[arg(long)]
        candidates: PathBuf,
        /// Comma-separated K values.
        #[arg(long, default_value = "1,2,5,10")]
        k: String,
        /// Print the same-class cosine histogram for this class name.
        #[arg(long)]
        histogram: Option<String>,
        #[arg(long, default_value_t = 20)]
        bins: usize,
    },
    /// Linear probe: frozen encoder, trained classification head.
    Finetune {
        #[arg(long)]
        ckpt: PathBuf,
        #[arg(long)]
        train: PathBuf,
        #[arg(long)]
        test: PathBuf,
        #[arg(long, default_value_t = 300)]
        epochs: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Export image embeddings as f32 matrix plus sidecar.
    ExportEmbeddings {
        #[arg(long)]
        ckpt: PathBuf,
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
}

fn main() -> Result<()> {
    match Cli::parse().command {
        Command::ExtractLabels {
            input,
            lexicon,
            output,
            uncertain,
        } => extract_labels(&input, lexicon.as_deref(), &output, uncertain),
        Command::BuildMatrix { images, texts, out } => build_matrix(&images, &texts, &out),
        Command::GenSynthetic {
            spec,
            seed,
            out,
            paired,
        } => gen_synthetic(&spec, seed, &out, paired),
        Command::Pretrain {
            config,
            images,
            texts,
            out,
            resume,
        } => pretrain(config.as_deref(), &images, &texts, &out, resume.as_deref()),
        Command::Zeroshot {
            ckpt,
            data,
            prompts,
            ensemble,
            runs,
            prompt_seed,
            out,
        } => zeroshot(&ckpt, &data, prompts.as_deref(), ensemble, runs, prompt_seed, out.as_deref()),
        Command::Retrieve {
            ckpt,
            queries,
            candidates,
            k,
            histogram,
            bins,
        } => run_retrieve(&ckpt, &queries, &candidates, &k, histogram.as_deref(), bins),
        Command::Finetune {
            ckpt,
            train,
            test,
            epochs,
            seed,
        } => finetune(&ckpt, &train, &test, epochs, seed),
        Command::ExportEmbeddings { ckpt, data, out } => export_cmd(&ckpt, &data, &out),
    }
}

fn load_lexicon(path: Option<&Path>) -> Result<Lexicon> {
    Ok(match path {
        Some(p) => Lexicon::load_json(p).with_context(|| format!("loading lexicon {}", p.display()))?,
        None => Lexicon::builtin(),
    })
}

#[derive(Serialize)]
struct LabeledRow<'a> {
    id: String,
    sentence: &'a str,
    label: FindingLabel,
    unlabeled: bool,
    mentions: &'a [EntityMention],
}

fn extract_labels(
    input: &Path,
    lexicon_path: Option<&Path>,
    output: &Path,
    uncertain: UncertaintyPolicy,
) -> Result<()> {
    let lexicon = load_lexicon(lexicon_path)?;
    let raw = fs::read_to_string(input).with_context(|| format!("reading {}", input.display()))?;
    let mut out = String::new();
    let mut rows = 0usize;

    let is_csv = input.extension().is_some_and(|e| e.eq_ignore_ascii_case("csv"));
    if is_csv {
        for (lineno, line) in raw.lines().enumerate() {
            let trimmed = line.trim();
            if trimmed.is_empty() || (lineno == 0 && trimmed.to_ascii_lowercase().starts_with("id,")) {
                continue;
            }
            let (id, class_name) = trimmed
                .split_once(',')
                .with_context(|| format!("{}:{}: expected id,class_name", input.display(), lineno + 1))?;
            let label = class_to_label(class_name.trim(), &lexicon)?;
            let row = LabeledRow {
                id: id.trim().to_string(),
                sentence: class_name.trim(),
                label,
                unlabeled: label.is_unlabeled(),
                mentions: &[],
            };
            out.push_str(&serde_json::to_string(&row)?);
            out.push('\n');
            rows += 1;
        }
    } else {
        #[derive(serde::Deserialize)]
        struct ReportRow {
            id: String,
            text: String,
        }
        for (lineno, line) in raw.lines().enumerate() {
            if line.trim().is_empty() {
                continue;
            }
            let report: ReportRow = serde_json::from_str(line)
                .with_context(|| format!("{}:{}: malformed report row", input.display(), lineno + 1))?;
            for (k, sentence) in split_report(&report.text).iter().enumerate() {
                let mentions = tag_sentence(sentence, &lexicon);
                let label = sentence_to_label(&mentions, uncertain);
                let row = LabeledRow {
                    id: format!("{}#s{k}", report.id),
                    sentence,
                    label,
                    unlabeled: label.is_unlabeled(),
                    mentions: &mentions,
                };
                out.push_str(&serde_json::to_string(&row)?);
                out.push('\n');
                rows += 1;
            }
        }
    }

    fs::write(output, out).with_context(|| format!("writing {}", output.display()))?;
    println!("rows={rows}");
    println!("output={}", output.display());
    Ok(())
}

fn read_labeled_ids(path: &Path) -> Result<Vec<(String, FindingLabel)>> {
    #[derive(serde::Deserialize)]
    struct Row {
        id: String,
        label: FindingLabel,
        #[serde(default)]
        unlabeled: bool,
    }
    let raw = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    let mut out = Vec::new();
    let mut dropped = 0usize;
    for (lineno, line) in raw.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let row: Row = serde_json::from_str(line)
            .with_context(|| format!("{}:{}: malformed labeled row", path.display(), lineno + 1))?;
        if row.unlabeled || row.label.is_unlabeled() {
            dropped += 1;
            continue;
        }
        out.push((row.id, row.label));
    }
    if dropped > 0 {
        eprintln!("note: {} unlabeled rows dropped from {}", dropped, path.display());
    }
    Ok(out)
}

fn build_matrix(images: &Path, texts: &Path, out: &Path) -> Result<()> {
    let image_rows = read_labeled_ids(images)?;
    let text_rows = read_labeled_ids(texts)?;
    if image_rows.is_empty() || text_rows.is_empty() {
        bail!("both sides need at least one labeled row");
    }
    let mut data = Vec::with_capacity(image_rows.len() * text_rows.len());
    for (_, img_label) in &image_rows {
        for (_, txt_label) in &text_rows {
            data.push(semantic_similarity(*img_label, *txt_label)? as f32);
        }
    }
    let sidecar = MatrixSidecar {
        rows: image_rows.len(),
        cols: text_rows.len(),
        row_ids: image_rows.iter().map(|(id, _)| id.clone()).collect(),
        col_ids: Some(text_rows.iter().map(|(id, _)| id.clone()).collect()),
        labels: None,
        checkpoint_id: None,
        checksum: String::new(),
    };
    let sidecar = write_f32_matrix(out, &data, sidecar)?;
    println!("rows={}", sidecar.rows);
    println!("cols={}", sidecar.cols);
    println!("checksum={}", sidecar.checksum);
    println!("output={}", out.display());
    Ok(())
}

fn gen_synthetic(spec_arg: &str, seed: u64, out: &Path, paired: bool) -> Result<()> {
    let spec: SyntheticCorpusSpec = match spec_arg {
        "five-class" => SyntheticCorpusSpec::five_class(500, 500, 32),
        "skewed-four-class" => SyntheticCorpusSpec::skewed_four_class(400, 400, 32),
        path => {
            let raw = fs::read_to_string(path).with_context(|| format!("reading spec {path}"))?;
            serde_json::from_str(&raw).with_context(|| format!("parsing spec {path}"))?
        }
    };
    let corpus = if paired {
        generate_paired_corpus(&spec, seed)?
    } else {
        generate_synthetic_corpus(&spec, seed)?
    };
    sempair_core::pipeline::ingest::write_synthetic_dir(out, &corpus, &spec, seed)?;
    println!("images={}", corpus.images.len());
    println!("sentences={}", corpus.sentences.len());
    println!("classes={}", corpus.class_names.join("|"));
    println!("output={}", out.display());
    Ok(())
}

fn pretrain(
    config_path: Option<&Path>,
    images: &Path,
    texts: &Path,
    out: &Path,
    resume: Option<&Path>,
) -> Result<()> {
    let config = match config_path {
        Some(p) => TrainConfig::from_kv_file(p)?,
        None => TrainConfig::desk_scale(),
    };
    let (image_pool, text_pool) = ingest_util::load_pools(images, texts, &config)?;
    eprintln!(
        "pools: {} images, {} sentences",
        image_pool.len(),
        text_pool.len()
    );
    let outcome = train(&config, &image_pool, &text_pool, out, resume)?;
    println!("steps={}", outcome.steps_run);
    println!("first_loss={}", outcome.first_loss);
    println!("final_loss={}", outcome.final_loss);
    println!("checkpoint={}", outcome.final_checkpoint.display());
    println!("metrics={}", outcome.metrics_path.display());
    Ok(())
}

fn load_images_dir(data: &Path) -> Result<Vec<ImageRecord>> {
    let report = sempair_core::pipeline::ingest_dataset(
        sempair_core::pipeline::Adapter::Synthetic,
        data,
        &sempair_core::pipeline::IngestOptions::default(),
    )?;
    if report.images.is_empty() {
        bail!("no images found under {}", data.display());
    }
    Ok(report.images)
}

fn distinct_classes(images: &[ImageRecord]) -> Vec<(String, FindingLabel)> {
    let mut labels: Vec<FindingLabel> = images.iter().map(|r| r.label).collect();
    labels.sort();
    labels.dedup();
    labels.into_iter().map(|l| (l.to_string(), l)).collect()
}

fn zeroshot(
    ckpt: &Path,
    data: &Path,
    prompts_path: Option<&Path>,
    ensemble: bool,
    runs: usize,
    prompt_seed: u64,
    out: Option<&Path>,
) -> Result<()> {
    let checkpoint = load_checkpoint(ckpt)?;
    let images = load_images_dir(data)?;
    let prompt_set = match prompts_path {
        Some(p) => PromptSet::load_json(p)?,
        None => generate_prompt_set(&distinct_classes(&images), DEFAULT_PROMPT_VARIANTS, prompt_seed)?,
    };
    let report = zero_shot_classify(
        &images,
        &prompt_set,
        &checkpoint.model,
        &ZeroShotOptions {
            ensemble,
            runs,
            prompt_seed,
            checkpoint_id: u64::from_str_radix(&checkpoint.manifest.checkpoint_id, 16).ok(),
        },
    )?;
    let rendered = report.render_kv();
    print!("{rendered}");
    if let Some(path) = out {
        fs::write(path, rendered).with_context(|| format!("writing {}", path.display()))?;
    }
    Ok(())
}

fn run_retrieve(
    ckpt: &Path,
    queries: &Path,
    candidates: &Path,
    k: &str,
    histogram: Option<&str>,
    bins: usize,
) -> Result<()> {
    let checkpoint = load_checkpoint(ckpt)?;
    let query_images = load_images_dir(queries)?;
    let candidate_texts = ingest_util::load_sentences(candidates)?;
    let k_list: Vec<usize> = k
        .split(',')
        .map(|piece| piece.trim().parse::<usize>().with_context(|| format!("bad K value {piece:?}")))
        .collect::<Result<_>>()?;
    let result = retrieve(&query_images, &candidate_texts, &checkpoint.model, &k_list)?;
    print!("{}", result.render_kv());

    if let Some(class_name) = histogram {
        let finding = FindingType::from_canonical_name(class_name)
            .with_context(|| format!("unknown finding class {class_name:?}"))?;
        let hist = similarity_histogram(FindingLabel::single(finding), &result, bins);
        println!("histogram_class={class_name}");
        println!("histogram_total={}", hist.total());
        print!("{}", hist.render_table());
    }
    Ok(())
}

fn finetune(ckpt: &Path, train_dir: &Path, test_dir: &Path, epochs: usize, seed: u64) -> Result<()> {
    let checkpoint = load_checkpoint(ckpt)?;
    let train_images = load_images_dir(train_dir)?;
    let test_images = load_images_dir(test_dir)?;
    let (report, head) = linear_probe(
        &train_images,
        &test_images,
        &checkpoint.model,
        &ProbeOptions {
            epochs,
            seed,
            ..ProbeOptions::default()
        },
    )?;
    println!("head_params={}", head.n_params());
    print!("{}", report.render_kv());
    Ok(())
}

fn export_cmd(ckpt: &Path, data: &Path, out: &Path) -> Result<()> {
    let checkpoint = load_checkpoint(ckpt)?;
    let images = load_images_dir(data)?;
    let summary = export_embeddings(
        &images,
        &checkpoint.model,
        &checkpoint.manifest.checkpoint_id,
        out,
    )?;
    println!("rows={}", summary.rows);
    println!("cols={}", summary.cols);
    println!("checksum={}", summary.sidecar.checksum);
    println!("output={}", out.display());
    Ok(())
}
