//! Shared helpers for integration tests: a small trainable model, a
//! finite-difference gradient oracle, and random batch construction.
//! The oracle only ever calls the forward path, so it stays independent
//! of the analytic backward implementation it checks.

#![allow(dead_code)]

use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

use sempair_core::encoders::{EncoderPair, EncoderPairConfig, Vocabulary};
use sempair_core::finding::{FindingLabel, FindingType};
use sempair_core::loss::{semantic_matching_loss, Temperature};
use sempair_core::pairing::{soft_targets_from_similarity, semantic_similarity, SimilarityBundle};
use sempair_core::records::Image;

pub const GRADCHECK_SENTENCES: [&str; 4] = [
    "moderate pulmonary edema with small bilateral effusions",
    "no pneumothorax or focal consolidation is seen",
    "stable cardiomegaly and chronic fracture deformity",
    "patchy opacity concerning for pneumonia",
];

/// The batch texts: the vocabulary sentences plus one out-of-vocabulary
/// word, so the reserved unknown-token row participates too.
pub const GRADCHECK_BATCH: [&str; 4] = [
    "moderate pulmonary edema with small bilateral effusions",
    "no pneumothorax or focal consolidation is seen xylophone",
    "stable cardiomegaly and chronic fracture deformity",
    "patchy opacity concerning for pneumonia",
];

/// Vocabulary covering exactly the gradcheck sentences, so every
/// embedding row participates in the batch.
pub fn gradcheck_vocab() -> Vocabulary {
    Vocabulary::build(GRADCHECK_SENTENCES, None)
}

pub fn gradcheck_config() -> EncoderPairConfig {
    EncoderPairConfig {
        image_channels: 1,
        image_size: 8,
        conv_channels: 3,
        embed_dim: 10,
        proj_dim: 6,
        tau_init: 0.07,
    }
}

pub fn random_image(rng: &mut ChaCha8Rng, channels: usize, size: usize) -> Image {
    let mut img = Image::zeros(channels, size, size);
    for v in &mut img.data {
        *v = rng.gen_range(0.0..1.0);
    }
    img
}

pub fn random_label(rng: &mut ChaCha8Rng) -> FindingLabel {
    // One or two non-NoFinding bits.
    let a = FindingType::ALL[rng.gen_range(1..14)];
    if rng.gen_bool(0.5) {
        let b = FindingType::ALL[rng.gen_range(1..14)];
        FindingLabel::from_findings(&[a, b]).unwrap()
    } else {
        FindingLabel::from_findings(&[a]).unwrap()
    }
}

pub fn bundle_from_labels(
    img_labels: &[FindingLabel],
    txt_labels: &[FindingLabel],
) -> SimilarityBundle {
    let n = img_labels.len();
    let mut s = sempair_core::mat::Mat::zeros(n, txt_labels.len());
    for (i, img) in img_labels.iter().enumerate() {
        for (j, txt) in txt_labels.iter().enumerate() {
            s.set(i, j, semantic_similarity(*img, *txt).unwrap());
        }
    }
    let (y_v2t, y_t2v) = soft_targets_from_similarity(&s);
    SimilarityBundle { s, y_v2t, y_t2v }
}

/// Total semantic matching loss as a pure function of the flat
/// parameter vector.
pub fn loss_at_params(
    template: &EncoderPair,
    params: &[f64],
    images: &[Image],
    texts: &[&str],
    bundle: &SimilarityBundle,
) -> f64 {
    let mut model = template.clone();
    model.set_params(params).unwrap();
    let (emb, _) = model.forward_batch(images, texts).unwrap();
    let report =
        semantic_matching_loss(&emb.v_tilde, &emb.t_tilde, bundle, &model.temperature).unwrap();
    report.total
}

/// Central-difference gradient of `f` at `params`.
pub fn finite_difference_grad(
    params: &[f64],
    step: f64,
    mut f: impl FnMut(&[f64]) -> f64,
) -> Vec<f64> {
    let mut grad = vec![0.0; params.len()];
    let mut work = params.to_vec();
    for i in 0..params.len() {
        let orig = work[i];
        work[i] = orig + step;
        let plus = f(&work);
        work[i] = orig - step;
        let minus = f(&work);
        work[i] = orig;
        grad[i] = (plus - minus) / (2.0 * step);
    }
    grad
}

/// Relative error with an absolute floor for near-zero pairs.
pub fn grad_mismatch(analytic: f64, numeric: f64) -> Option<f64> {
    let diff = (analytic - numeric).abs();
    if diff < 1e-8 {
        return None;
    }
    let rel = diff / analytic.abs().max(numeric.abs());
    (rel >= 1e-4).then_some(rel)
}

/// A reusable gradcheck setup: model, batch, targets.
pub struct GradCheckSetup {
    pub model: EncoderPair,
    pub images: Vec<Image>,
    pub texts: Vec<&'static str>,
    pub bundle: SimilarityBundle,
}

pub fn gradcheck_setup(seed: u64) -> GradCheckSetup {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let config = gradcheck_config();
    let model = EncoderPair::new(&config, gradcheck_vocab(), seed).unwrap();
    let images: Vec<Image> = (0..4)
        .map(|_| random_image(&mut rng, config.image_channels, config.image_size))
        .collect();
    let texts: Vec<&'static str> = GRADCHECK_BATCH.to_vec();
    let img_labels: Vec<FindingLabel> = (0..4).map(|_| random_label(&mut rng)).collect();
    let txt_labels: Vec<FindingLabel> = (0..4).map(|_| random_label(&mut rng)).collect();
    let bundle = bundle_from_labels(&img_labels, &txt_labels);
    GradCheckSetup {
        model,
        images,
        texts,
        bundle,
    }
}

/// The temperature type with a given tau, for tests that need one.
pub fn tau(value: f64) -> Temperature {
    Temperature::new(value).unwrap()
}

/// Deterministic pseudo-random unit embeddings keyed by content, with no
/// class correlation: the chance-level baseline model.
pub struct RandomEmbedder {
    pub dim: usize,
}

impl RandomEmbedder {
    fn unit_from_seed(&self, seed: u64) -> Vec<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        loop {
            let v: Vec<f64> = (0..self.dim).map(|_| rng.gen_range(-1.0..1.0)).collect();
            let norm = sempair_core::mat::l2_norm(&v);
            if norm > 1e-6 {
                return v.into_iter().map(|x| x / norm).collect();
            }
        }
    }
}

impl sempair_core::encoders::EmbeddingModel for RandomEmbedder {
    fn embed_dim(&self) -> usize {
        self.dim
    }
    fn embed_image(&self, image: &Image) -> sempair_core::Result<Vec<f64>> {
        let bytes = sempair_core::util::f64s_to_bytes(&image.data);
        Ok(self.unit_from_seed(sempair_core::util::fnv1a64(&bytes)))
    }
    fn embed_text(&self, text: &str) -> sempair_core::Result<Vec<f64>> {
        Ok(self.unit_from_seed(sempair_core::util::fnv1a64(text.as_bytes())))
    }
}

/// Balanced five-class pools with random pixels, for chance baselines.
pub fn balanced_random_pools(
    n: usize,
    seed: u64,
) -> (Vec<sempair_core::records::ImageRecord>, Vec<sempair_core::records::SentenceRecord>) {
    let findings = [
        FindingType::Cardiomegaly,
        FindingType::Edema,
        FindingType::Pneumonia,
        FindingType::Pneumothorax,
        FindingType::PleuralEffusion,
    ];
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut images = Vec::with_capacity(n);
    let mut texts = Vec::with_capacity(n);
    for i in 0..n {
        let label = FindingLabel::single(findings[i % findings.len()]);
        let mut img = Image::zeros(1, 2, 2);
        for v in &mut img.data {
            *v = rng.gen_range(0.0..1.0);
        }
        images.push(sempair_core::records::ImageRecord::new(format!("q{i:05}"), img, label).unwrap());
        texts.push(
            sempair_core::records::SentenceRecord::new(
                format!("c{i:05}"),
                format!("candidate sentence number {i}"),
                label,
            )
            .unwrap(),
        );
    }
    (images, texts)
}
