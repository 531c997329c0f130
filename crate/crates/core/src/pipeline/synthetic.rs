//! Planted-semantics corpus generator.
//!
//! Each class is a label over the 14 findings. Images render one
//! deterministic geometric motif per active finding (position and shape
//! are a function of the finding index) over a noisy background, so the
//! ground-truth label is recoverable from pixels by construction.
//! Sentences instantiate affirmation templates over per-finding phrases
//! that the report labeler recognizes, optionally with a trailing negated
//! clause about an absent finding.

use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::finding::{FindingLabel, FindingType};
use crate::records::{Image, ImageRecord, SentenceRecord};

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ClassSpec {
    pub name: String,
    pub findings: Vec<FindingType>,
    #[serde(default = "default_weight")]
    pub weight: f64,
}

fn default_weight() -> f64 {
    1.0
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SyntheticCorpusSpec {
    pub n_images: usize,
    pub n_sentences: usize,
    #[serde(default = "default_image_size")]
    pub image_size: usize,
    #[serde(default = "default_channels")]
    pub channels: usize,
    /// Uniform background noise amplitude.
    #[serde(default = "default_noise")]
    pub noise: f64,
    #[serde(default = "default_motif_intensity")]
    pub motif_intensity: f64,
    /// Fraction of sentences that add a negated clause about a finding
    /// absent from the label.
    #[serde(default = "default_negated_rate")]
    pub negated_clause_rate: f64,
    /// Pixel jitter applied to motif anchors per image.
    #[serde(default = "default_motif_jitter")]
    pub motif_jitter: f64,
    /// Relative downward jitter on motif intensity per image.
    #[serde(default = "default_intensity_jitter")]
    pub intensity_jitter: f64,
    /// How many sentence templates to draw from (1..=3).
    #[serde(default = "default_template_variety")]
    pub template_variety: usize,
    /// How many severity adjectives to draw from (0 = none, up to 6).
    #[serde(default = "default_severity_variety")]
    pub severity_variety: usize,
    /// Cap on phrase variants per finding (0 = all).
    #[serde(default)]
    pub phrase_variety: usize,
    pub classes: Vec<ClassSpec>,
}

fn default_image_size() -> usize {
    32
}
fn default_channels() -> usize {
    1
}
fn default_noise() -> f64 {
    0.08
}
fn default_motif_intensity() -> f64 {
    0.8
}
fn default_negated_rate() -> f64 {
    0.25
}
fn default_motif_jitter() -> f64 {
    2.0
}
fn default_intensity_jitter() -> f64 {
    0.15
}
fn default_template_variety() -> usize {
    3
}
fn default_severity_variety() -> usize {
    6
}

impl SyntheticCorpusSpec {
    /// Five balanced single-finding classes.
    pub fn five_class(n_images: usize, n_sentences: usize, image_size: usize) -> SyntheticCorpusSpec {
        let findings = [
            FindingType::Cardiomegaly,
            FindingType::Edema,
            FindingType::Pneumonia,
            FindingType::Pneumothorax,
            FindingType::PleuralEffusion,
        ];
        SyntheticCorpusSpec {
            n_images,
            n_sentences,
            image_size,
            channels: 1,
            noise: default_noise(),
            motif_intensity: default_motif_intensity(),
            negated_clause_rate: default_negated_rate(),
            motif_jitter: default_motif_jitter(),
            intensity_jitter: default_intensity_jitter(),
            template_variety: default_template_variety(),
            severity_variety: default_severity_variety(),
            phrase_variety: 0,
            classes: findings
                .iter()
                .map(|f| ClassSpec {
                    name: f.canonical_name().to_string(),
                    findings: vec![*f],
                    weight: 1.0,
                })
                .collect(),
        }
    }

    /// Four single-finding classes with weights 0.4/0.3/0.2/0.1, so the
    /// expected share of same-class (duplicate-semantics) pairs among
    /// off-diagonal batch entries is 0.16+0.09+0.04+0.01 = 0.30.
    ///
    /// Variety is turned off: same-class records are near-verbatim
    /// duplicates, the regime where one-hot pairing targets conflict.
    pub fn skewed_four_class(
        n_images: usize,
        n_sentences: usize,
        image_size: usize,
    ) -> SyntheticCorpusSpec {
        let weighted = [
            (FindingType::Cardiomegaly, 0.4),
            (FindingType::Edema, 0.3),
            (FindingType::Pneumothorax, 0.2),
            (FindingType::PleuralEffusion, 0.1),
        ];
        SyntheticCorpusSpec {
            n_images,
            n_sentences,
            image_size,
            channels: 1,
            noise: default_noise(),
            motif_intensity: default_motif_intensity(),
            negated_clause_rate: 0.0,
            motif_jitter: 0.0,
            intensity_jitter: 0.0,
            template_variety: 1,
            severity_variety: 1,
            phrase_variety: 1,
            classes: weighted
                .iter()
                .map(|(f, w)| ClassSpec {
                    name: f.canonical_name().to_string(),
                    findings: vec![*f],
                    weight: *w,
                })
                .collect(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.classes.is_empty() {
            return Err(Error::InvalidConfig("at least one class is required".into()));
        }
        if !self.image_size.is_multiple_of(2) {
            return Err(Error::InvalidConfig("image_size must be even".into()));
        }
        for class in &self.classes {
            if class.findings.is_empty() {
                return Err(Error::InvalidConfig(format!(
                    "class {:?} has no findings",
                    class.name
                )));
            }
            if class.weight <= 0.0 || !class.weight.is_finite() {
                return Err(Error::InvalidConfig(format!(
                    "class {:?} has non-positive weight",
                    class.name
                )));
            }
            FindingLabel::from_findings(&class.findings)?;
        }
        if !(0.0..=1.0).contains(&self.negated_clause_rate) {
            return Err(Error::InvalidConfig("negated_clause_rate must lie in [0,1]".into()));
        }
        if self.template_variety == 0 || self.template_variety > 3 {
            return Err(Error::InvalidConfig("template_variety must lie in 1..=3".into()));
        }
        if self.severity_variety > SEVERITIES.len() {
            return Err(Error::InvalidConfig(format!(
                "severity_variety must lie in 0..={}",
                SEVERITIES.len()
            )));
        }
        Ok(())
    }

    pub fn class_labels(&self) -> Vec<FindingLabel> {
        self.classes
            .iter()
            .map(|c| FindingLabel::from_findings(&c.findings).expect("validated"))
            .collect()
    }
}

/// Generated pools plus the planted assignments.
#[derive(Debug, Clone)]
pub struct SyntheticCorpus {
    pub images: Vec<ImageRecord>,
    pub sentences: Vec<SentenceRecord>,
    pub image_class: Vec<usize>,
    pub sentence_class: Vec<usize>,
    pub class_names: Vec<String>,
    pub class_labels: Vec<FindingLabel>,
}

/// Independent class draws for images and sentences.
pub fn generate_synthetic_corpus(spec: &SyntheticCorpusSpec, seed: u64) -> Result<SyntheticCorpus> {
    generate_inner(spec, seed, false)
}

/// Index-aligned pairs: image i and sentence i share a class. Requires
/// n_images == n_sentences. This is the layout the one-hot InfoNCE
/// baseline needs.
pub fn generate_paired_corpus(spec: &SyntheticCorpusSpec, seed: u64) -> Result<SyntheticCorpus> {
    if spec.n_images != spec.n_sentences {
        return Err(Error::InvalidConfig(format!(
            "paired generation needs n_images == n_sentences, got {} and {}",
            spec.n_images, spec.n_sentences
        )));
    }
    generate_inner(spec, seed, true)
}

fn generate_inner(spec: &SyntheticCorpusSpec, seed: u64, paired: bool) -> Result<SyntheticCorpus> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let labels = spec.class_labels();
    let weights: Vec<f64> = spec.classes.iter().map(|c| c.weight).collect();

    let image_class: Vec<usize> = (0..spec.n_images)
        .map(|_| draw_class(&mut rng, &weights))
        .collect();
    let sentence_class: Vec<usize> = if paired {
        image_class.clone()
    } else {
        (0..spec.n_sentences)
            .map(|_| draw_class(&mut rng, &weights))
            .collect()
    };

    let mut images = Vec::with_capacity(spec.n_images);
    for (i, &class) in image_class.iter().enumerate() {
        let image = render_image(spec, &spec.classes[class].findings, &mut rng);
        images.push(ImageRecord::new(format!("img-{i:06}"), image, labels[class])?);
    }

    let mut sentences = Vec::with_capacity(spec.n_sentences);
    for (j, &class) in sentence_class.iter().enumerate() {
        let text = render_sentence(spec, &spec.classes[class].findings, &mut rng);
        sentences.push(SentenceRecord::new(format!("txt-{j:06}"), text, labels[class])?);
    }

    Ok(SyntheticCorpus {
        images,
        sentences,
        image_class,
        sentence_class,
        class_names: spec.classes.iter().map(|c| c.name.clone()).collect(),
        class_labels: labels,
    })
}

fn draw_class(rng: &mut ChaCha8Rng, weights: &[f64]) -> usize {
    let total: f64 = weights.iter().sum();
    let mut ticket = rng.gen_range(0.0..total);
    for (i, w) in weights.iter().enumerate() {
        if ticket < *w {
            return i;
        }
        ticket -= w;
    }
    weights.len() - 1
}

/// Motif anchor on a 4x4 grid plus a shape family, both functions of the
/// finding index.
fn render_image(spec: &SyntheticCorpusSpec, findings: &[FindingType], rng: &mut ChaCha8Rng) -> Image {
    let size = spec.image_size;
    let mut img = Image::zeros(spec.channels, size, size);
    for v in &mut img.data {
        *v = 0.15 + rng.gen_range(-spec.noise..spec.noise);
    }
    for finding in findings {
        let k = finding.index();
        let (jx, jy) = if spec.motif_jitter > 0.0 {
            (
                rng.gen_range(-spec.motif_jitter..spec.motif_jitter),
                rng.gen_range(-spec.motif_jitter..spec.motif_jitter),
            )
        } else {
            (0.0, 0.0)
        };
        let cx = ((k % 4) as f64 + 0.5) / 4.0 * size as f64 + jx;
        let cy = ((k / 4) as f64 + 0.5) / 4.0 * size as f64 + jy;
        let strength = if spec.intensity_jitter > 0.0 {
            spec.motif_intensity * (1.0 - rng.gen_range(0.0..spec.intensity_jitter))
        } else {
            spec.motif_intensity
        };
        for c in 0..spec.channels {
            match k % 3 {
                0 => draw_disk(&mut img, c, cx, cy, size as f64 / 7.0, strength),
                1 => draw_bar(&mut img, c, cx, size as f64 / 10.0, strength),
                _ => draw_ring(&mut img, c, cx, cy, size as f64 / 5.0, strength),
            }
        }
    }
    for v in &mut img.data {
        *v = v.clamp(0.0, 1.0);
    }
    img
}

fn draw_disk(img: &mut Image, c: usize, cx: f64, cy: f64, r: f64, strength: f64) {
    for y in 0..img.height {
        for x in 0..img.width {
            let d2 = (x as f64 - cx).powi(2) + (y as f64 - cy).powi(2);
            if d2 <= r * r {
                let v = img.get(c, y, x);
                img.set(c, y, x, v + strength);
            }
        }
    }
}

fn draw_bar(img: &mut Image, c: usize, cx: f64, half_width: f64, strength: f64) {
    for y in 0..img.height {
        for x in 0..img.width {
            if (x as f64 - cx).abs() <= half_width {
                let v = img.get(c, y, x);
                img.set(c, y, x, v + strength);
            }
        }
    }
}

fn draw_ring(img: &mut Image, c: usize, cx: f64, cy: f64, r: f64, strength: f64) {
    for y in 0..img.height {
        for x in 0..img.width {
            let d = ((x as f64 - cx).powi(2) + (y as f64 - cy).powi(2)).sqrt();
            if (d - r).abs() <= 1.5 {
                let v = img.get(c, y, x);
                img.set(c, y, x, v + strength);
            }
        }
    }
}

/// Phrases the labeler recognizes, kept free of negation/uncertainty cue
/// words so generated labels round-trip exactly.
pub(crate) fn finding_phrases(finding: FindingType) -> &'static [&'static str] {
    match finding {
        FindingType::NoFinding => &[
            "no acute cardiopulmonary process",
            "lungs are clear",
            "normal study",
        ],
        FindingType::EnlargedCardiomediastinum => {
            &["widened mediastinum", "cardiomediastinal enlargement"]
        }
        FindingType::Cardiomegaly => &["cardiomegaly", "enlarged cardiac silhouette"],
        FindingType::LungOpacity => &["lung opacity", "airspace opacity", "patchy opacity"],
        FindingType::LungLesion => &["pulmonary nodule", "lung mass"],
        FindingType::Edema => &["pulmonary edema", "interstitial edema"],
        FindingType::Consolidation => &["consolidation", "lobar consolidation"],
        FindingType::Pneumonia => &["pneumonia", "bronchopneumonia"],
        FindingType::Atelectasis => &["atelectasis", "bibasilar atelectasis"],
        FindingType::Pneumothorax => &["pneumothorax", "apical pneumothorax"],
        FindingType::PleuralEffusion => &["pleural effusion", "pleural fluid"],
        FindingType::PleuralOther => &["pleural thickening", "pleural scarring"],
        FindingType::Fracture => &["rib fracture", "fracture"],
        FindingType::SupportDevices => &["chest tube", "pacemaker", "endotracheal tube"],
    }
}

const SEVERITIES: [&str; 6] = ["mild", "moderate", "severe", "small", "large", "stable"];

fn render_sentence(
    spec: &SyntheticCorpusSpec,
    findings: &[FindingType],
    rng: &mut ChaCha8Rng,
) -> String {
    let pick = |rng: &mut ChaCha8Rng, len: usize, variety: usize| -> usize {
        let cap = if variety == 0 { len } else { variety.min(len) };
        if cap <= 1 {
            0
        } else {
            rng.gen_range(0..cap)
        }
    };
    if findings == [FindingType::NoFinding] {
        let phrases = finding_phrases(FindingType::NoFinding);
        let phrase = phrases[pick(rng, phrases.len(), spec.phrase_variety)];
        let form = pick(rng, 3, spec.template_variety);
        return match form {
            0 => format!("{phrase} on the current examination."),
            1 => format!("{phrase} is demonstrated today."),
            _ => format!("impression shows {phrase}."),
        };
    }

    let mut descriptors = Vec::with_capacity(findings.len());
    for finding in findings {
        let phrases = finding_phrases(*finding);
        let phrase = phrases[pick(rng, phrases.len(), spec.phrase_variety)];
        if spec.severity_variety == 0 {
            descriptors.push(phrase.to_string());
        } else {
            let severity = SEVERITIES[pick(rng, SEVERITIES.len(), spec.severity_variety)];
            descriptors.push(format!("{severity} {phrase}"));
        }
    }
    let body = descriptors.join(" and ");
    let mut sentence = match pick(rng, 3, spec.template_variety) {
        0 => format!("there is {body}"),
        1 => format!("{body} is present"),
        _ => format!("{body} is seen on the radiograph"),
    };

    if spec.negated_clause_rate > 0.0 && rng.gen_bool(spec.negated_clause_rate) {
        // A negated clause about an absent finding leaves the label as is.
        let absent: Vec<FindingType> = FindingType::ALL
            .iter()
            .copied()
            .filter(|f| *f != FindingType::NoFinding && !findings.contains(f))
            .collect();
        if !absent.is_empty() {
            let other = absent[rng.gen_range(0..absent.len())];
            let phrases = finding_phrases(other);
            let phrase = phrases[rng.gen_range(0..phrases.len())];
            sentence.push_str(&format!(" without {phrase}"));
        }
    }
    sentence.push('.');
    sentence
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::labeler::{sentence_to_label, tag_sentence, Lexicon, UncertaintyPolicy};
    use crate::pairing::semantic_similarity;

    #[test]
    fn single_finding_classes_have_unit_within_class_similarity() {
        let spec = SyntheticCorpusSpec::five_class(40, 40, 16);
        let corpus = generate_synthetic_corpus(&spec, 1).unwrap();
        for (i, img) in corpus.images.iter().enumerate() {
            for (j, txt) in corpus.sentences.iter().enumerate() {
                let s = semantic_similarity(img.label, txt.label).unwrap();
                if corpus.image_class[i] == corpus.sentence_class[j] {
                    assert_eq!(s, 1.0);
                } else {
                    assert_eq!(s, 0.0);
                }
            }
        }
    }

    #[test]
    fn mixed_labels_match_hand_computed_cosine() {
        let spec = SyntheticCorpusSpec {
            n_images: 10,
            n_sentences: 10,
            image_size: 16,
            channels: 1,
            noise: 0.05,
            motif_intensity: 0.8,
            negated_clause_rate: 0.2,
            motif_jitter: 2.0,
            intensity_jitter: 0.15,
            template_variety: 3,
            severity_variety: 6,
            phrase_variety: 0,
            classes: vec![
                ClassSpec {
                    name: "edema".into(),
                    findings: vec![FindingType::Edema],
                    weight: 1.0,
                },
                ClassSpec {
                    name: "edema+pneumonia".into(),
                    findings: vec![FindingType::Edema, FindingType::Pneumonia],
                    weight: 1.0,
                },
            ],
        };
        let corpus = generate_synthetic_corpus(&spec, 3).unwrap();
        for (i, img) in corpus.images.iter().enumerate() {
            for (j, txt) in corpus.sentences.iter().enumerate() {
                let expected = match (corpus.image_class[i], corpus.sentence_class[j]) {
                    (a, b) if a == b => 1.0,
                    _ => 1.0 / 2.0_f64.sqrt(),
                };
                let got = semantic_similarity(img.label, txt.label).unwrap();
                assert!((got - expected).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn labeler_recovers_planted_labels() {
        let spec = SyntheticCorpusSpec::five_class(0, 400, 16);
        let corpus = generate_synthetic_corpus(&spec, 7).unwrap();
        let lexicon = Lexicon::builtin();
        let mut hits = 0;
        for sentence in &corpus.sentences {
            let mentions = tag_sentence(&sentence.text, &lexicon);
            let label = sentence_to_label(&mentions, UncertaintyPolicy::Affirm);
            if label == sentence.label {
                hits += 1;
            }
        }
        let rate = hits as f64 / corpus.sentences.len() as f64;
        assert!(rate >= 0.99, "recovery rate {rate}");
    }

    #[test]
    fn paired_corpus_aligns_classes() {
        let spec = SyntheticCorpusSpec::skewed_four_class(60, 60, 16);
        let corpus = generate_paired_corpus(&spec, 5).unwrap();
        assert_eq!(corpus.image_class, corpus.sentence_class);
        for (img, txt) in corpus.images.iter().zip(&corpus.sentences) {
            assert_eq!(img.label, txt.label);
        }
    }

    #[test]
    fn skewed_weights_hit_thirty_percent_duplicates() {
        let spec = SyntheticCorpusSpec::skewed_four_class(4000, 4000, 16);
        let corpus = generate_synthetic_corpus(&spec, 11).unwrap();
        // Empirical off-diagonal duplicate probability between the two
        // independently drawn sides.
        let mut same = 0usize;
        let mut total = 0usize;
        for i in (0..4000).step_by(7) {
            for j in (0..4000).step_by(11) {
                total += 1;
                if corpus.image_class[i] == corpus.sentence_class[j] {
                    same += 1;
                }
            }
        }
        let rate = same as f64 / total as f64;
        assert!((rate - 0.30).abs() < 0.03, "duplicate rate {rate}");
    }

    #[test]
    fn generation_is_deterministic() {
        let spec = SyntheticCorpusSpec::five_class(20, 20, 16);
        let a = generate_synthetic_corpus(&spec, 9).unwrap();
        let b = generate_synthetic_corpus(&spec, 9).unwrap();
        assert_eq!(a.image_class, b.image_class);
        for (x, y) in a.images.iter().zip(&b.images) {
            assert_eq!(x.image, y.image);
        }
        for (x, y) in a.sentences.iter().zip(&b.sentences) {
            assert_eq!(x.text, y.text);
        }
    }
}
