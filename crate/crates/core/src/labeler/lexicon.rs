//! Curated trigger lexicon: the deterministic stand-in for a concept tagger.
//!
//! Maps trigger phrases to the 14 finding types, carries negation and
//! uncertainty cue lists with a token-window scope, and an alias table for
//! mapping dataset class names onto findings. Immutable after load.

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::finding::FindingType;

/// Default negation/uncertainty scope: cues count when they fall within
/// this many tokens immediately preceding a trigger.
pub const DEFAULT_NEGATION_WINDOW: usize = 6;

/// Serialized form of the lexicon (what lexicon JSON files contain).
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct LexiconSpec {
    pub negation_window: usize,
    pub negation_cues: Vec<String>,
    pub uncertainty_cues: Vec<String>,
    /// Canonical finding name -> trigger phrases.
    pub triggers: BTreeMap<FindingType, Vec<String>>,
    /// Normalized class-name alias -> finding types.
    pub aliases: BTreeMap<String, Vec<FindingType>>,
}

/// Validated, match-ready lexicon.
#[derive(Debug, Clone)]
pub struct Lexicon {
    spec: LexiconSpec,
    /// Per finding, trigger phrases pre-tokenized and sorted longest-first.
    trigger_tokens: Vec<Vec<Vec<String>>>,
    negation_tokens: Vec<Vec<String>>,
    uncertainty_tokens: Vec<Vec<String>>,
}

impl Lexicon {
    pub fn new(spec: LexiconSpec) -> Result<Lexicon> {
        if spec.negation_window == 0 {
            return Err(Error::InvalidConfig(
                "negation_window must be at least 1".into(),
            ));
        }
        // Trigger phrases must be unique across finding types after
        // normalization; duplicates within one finding are tolerated.
        let mut seen: BTreeMap<String, FindingType> = BTreeMap::new();
        for (finding, phrases) in &spec.triggers {
            for phrase in phrases {
                let norm = tokenize_lower(phrase).join(" ");
                if norm.is_empty() {
                    return Err(Error::InvalidConfig(format!(
                        "empty trigger phrase for {finding}"
                    )));
                }
                if let Some(prev) = seen.get(&norm) {
                    if *prev != *finding {
                        return Err(Error::InvalidConfig(format!(
                            "trigger {norm:?} maps to both {prev} and {finding}"
                        )));
                    }
                }
                seen.insert(norm, *finding);
            }
        }
        // The alias map must cover at least the 14 canonical names.
        for finding in FindingType::ALL {
            let key = normalize_class_name(finding.canonical_name());
            if !spec.aliases.contains_key(&key) {
                return Err(Error::InvalidConfig(format!(
                    "alias map does not cover canonical name {key:?}"
                )));
            }
        }
        for (alias, findings) in &spec.aliases {
            if findings.is_empty() {
                return Err(Error::InvalidConfig(format!(
                    "alias {alias:?} maps to no findings"
                )));
            }
        }

        let mut trigger_tokens: Vec<Vec<Vec<String>>> =
            vec![Vec::new(); FindingType::ALL.len()];
        for (finding, phrases) in &spec.triggers {
            let slot = &mut trigger_tokens[finding.index()];
            for phrase in phrases {
                slot.push(tokenize_lower(phrase));
            }
            // Longest-first so a longer trigger claims its span before any
            // shorter trigger of the same finding contained in it.
            slot.sort_by(|a, b| b.len().cmp(&a.len()).then_with(|| a.cmp(b)));
            slot.dedup();
        }
        let negation_tokens = spec.negation_cues.iter().map(|c| tokenize_lower(c)).collect();
        let uncertainty_tokens = spec
            .uncertainty_cues
            .iter()
            .map(|c| tokenize_lower(c))
            .collect();

        Ok(Lexicon {
            spec,
            trigger_tokens,
            negation_tokens,
            uncertainty_tokens,
        })
    }

    /// The built-in curated lexicon.
    pub fn builtin() -> Lexicon {
        Lexicon::new(builtin_spec()).expect("builtin lexicon must validate")
    }

    pub fn load_json(path: &Path) -> Result<Lexicon> {
        let raw = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let spec: LexiconSpec =
            serde_json::from_str(&raw).map_err(|e| Error::json(path, e))?;
        Lexicon::new(spec)
    }

    pub fn save_json(&self, path: &Path) -> Result<()> {
        let raw = serde_json::to_string_pretty(&self.spec)
            .map_err(|e| Error::json(path, e))?;
        fs::write(path, raw).map_err(|e| Error::io(path, e))
    }

    pub fn spec(&self) -> &LexiconSpec {
        &self.spec
    }

    pub fn negation_window(&self) -> usize {
        self.spec.negation_window
    }

    pub(crate) fn trigger_token_lists(&self, finding: FindingType) -> &[Vec<String>] {
        &self.trigger_tokens[finding.index()]
    }

    pub(crate) fn negation_token_lists(&self) -> &[Vec<String>] {
        &self.negation_tokens
    }

    pub(crate) fn uncertainty_token_lists(&self) -> &[Vec<String>] {
        &self.uncertainty_tokens
    }

    /// Resolve a (possibly multi-valued, `|`-separated) class name.
    pub fn resolve_class(&self, class_name: &str) -> Result<Vec<FindingType>> {
        let mut findings = Vec::new();
        for part in class_name.split('|') {
            let key = normalize_class_name(part);
            if key.is_empty() {
                return Err(Error::UnmappedClass(class_name.to_string()));
            }
            match self.spec.aliases.get(&key) {
                Some(mapped) => findings.extend_from_slice(mapped),
                None => return Err(Error::UnmappedClass(part.trim().to_string())),
            }
        }
        findings.sort();
        findings.dedup();
        Ok(findings)
    }
}

/// Lowercased alphanumeric tokens (hyphens and punctuation split tokens).
pub(crate) fn tokenize_lower(text: &str) -> Vec<String> {
    let mut tokens = Vec::new();
    let mut current = String::new();
    for ch in text.chars() {
        if ch.is_alphanumeric() {
            for low in ch.to_lowercase() {
                current.push(low);
            }
        } else if !current.is_empty() {
            tokens.push(std::mem::take(&mut current));
        }
    }
    if !current.is_empty() {
        tokens.push(current);
    }
    tokens
}

/// Normalization applied to class names before alias lookup.
pub(crate) fn normalize_class_name(name: &str) -> String {
    name.replace('_', " ")
        .split_whitespace()
        .map(|w| w.to_lowercase())
        .collect::<Vec<_>>()
        .join(" ")
}

fn phrases(list: &[&str]) -> Vec<String> {
    list.iter().map(|s| s.to_string()).collect()
}

fn builtin_spec() -> LexiconSpec {
    use FindingType::*;

    let mut triggers: BTreeMap<FindingType, Vec<String>> = BTreeMap::new();
    triggers.insert(
        NoFinding,
        phrases(&[
            "no finding",
            "no findings",
            "no acute cardiopulmonary process",
            "no acute cardiopulmonary abnormality",
            "no acute abnormality",
            "no acute disease",
            "lungs are clear",
            "clear lungs",
            "normal study",
            "normal chest radiograph",
            "unremarkable examination",
            "unremarkable chest",
        ]),
    );
    triggers.insert(
        EnlargedCardiomediastinum,
        phrases(&[
            "enlarged cardiomediastinum",
            "cardiomediastinal enlargement",
            "widened mediastinum",
            "mediastinal widening",
            "widening of the mediastinum",
            "enlarged cardiac and mediastinal silhouette",
            "prominent mediastinal contour",
        ]),
    );
    triggers.insert(
        Cardiomegaly,
        phrases(&[
            "cardiomegaly",
            "enlarged heart",
            "cardiac enlargement",
            "enlarged cardiac silhouette",
            "enlargement of the cardiac silhouette",
            "heart size is enlarged",
            "heart is enlarged",
        ]),
    );
    triggers.insert(
        LungOpacity,
        phrases(&[
            "opacity",
            "opacities",
            "lung opacity",
            "lung opacities",
            "pulmonary opacity",
            "airspace opacity",
            "airspace opacities",
            "ground glass opacity",
            "ground glass opacities",
            "patchy opacity",
            "hazy opacity",
            "focal opacity",
            "interstitial markings",
        ]),
    );
    triggers.insert(
        LungLesion,
        phrases(&[
            "lung lesion",
            "nodule",
            "nodules",
            "lung nodule",
            "lung nodules",
            "pulmonary nodule",
            "pulmonary nodules",
            "lung mass",
            "pulmonary mass",
            "cavitary lesion",
            "nodular density",
        ]),
    );
    triggers.insert(
        Edema,
        phrases(&[
            "edema",
            "pulmonary edema",
            "interstitial edema",
            "alveolar edema",
            "vascular congestion",
            "pulmonary vascular congestion",
            "fluid overload",
            "kerley b lines",
            "cephalization",
        ]),
    );
    triggers.insert(
        Consolidation,
        phrases(&[
            "consolidation",
            "consolidations",
            "airspace consolidation",
            "lobar consolidation",
            "dense consolidation",
            "focal consolidation",
            "consolidative process",
        ]),
    );
    triggers.insert(
        Pneumonia,
        phrases(&[
            "pneumonia",
            "pneumonitis",
            "infectious process",
            "airspace infection",
            "aspiration pneumonia",
            "multifocal pneumonia",
            "bronchopneumonia",
        ]),
    );
    triggers.insert(
        Atelectasis,
        phrases(&[
            "atelectasis",
            "atelectatic changes",
            "volume loss",
            "subsegmental atelectasis",
            "bibasilar atelectasis",
            "plate like atelectasis",
            "lobar collapse",
        ]),
    );
    triggers.insert(
        Pneumothorax,
        phrases(&[
            "pneumothorax",
            "pneumothoraces",
            "apical pneumothorax",
            "tension pneumothorax",
            "basilar pneumothorax",
            "hydropneumothorax",
            "residual pneumothorax",
        ]),
    );
    triggers.insert(
        PleuralEffusion,
        phrases(&[
            "effusion",
            "effusions",
            "pleural effusion",
            "pleural effusions",
            "bilateral pleural effusions",
            "pleural fluid",
            "layering effusion",
            "subpulmonic effusion",
        ]),
    );
    triggers.insert(
        PleuralOther,
        phrases(&[
            "pleural thickening",
            "pleural scarring",
            "pleural plaque",
            "pleural plaques",
            "pleural calcification",
            "fibrothorax",
            "pleural abnormality",
        ]),
    );
    triggers.insert(
        Fracture,
        phrases(&[
            "fracture",
            "fractures",
            "rib fracture",
            "rib fractures",
            "clavicular fracture",
            "compression fracture",
            "cortical disruption",
        ]),
    );
    triggers.insert(
        SupportDevices,
        phrases(&[
            "support devices",
            "endotracheal tube",
            "tracheostomy tube",
            "central venous catheter",
            "picc line",
            "chest tube",
            "pacemaker",
            "nasogastric tube",
            "enteric tube",
            "sternotomy wires",
        ]),
    );

    let negation_cues = phrases(&[
        "no",
        "not",
        "without",
        "no evidence of",
        "without evidence of",
        "free of",
        "negative for",
        "absence of",
        "resolution of",
        "resolved",
        "clear of",
        "ruled out",
        "excluded",
        "denies",
    ]);
    let uncertainty_cues = phrases(&[
        "may",
        "might",
        "possible",
        "possibly",
        "could",
        "may represent",
        "could represent",
        "suspicious for",
        "concerning for",
        "suggestive of",
        "cannot exclude",
        "cannot be excluded",
        "questionable",
        "probable",
        "likely",
        "borderline",
        "equivocal",
        "rule out",
        "versus",
    ]);

    let mut aliases: BTreeMap<String, Vec<FindingType>> = BTreeMap::new();
    for finding in FindingType::ALL {
        aliases.insert(
            normalize_class_name(finding.canonical_name()),
            vec![finding],
        );
    }
    let extra: &[(&str, &[FindingType])] = &[
        ("normal", &[NoFinding]),
        ("no findings", &[NoFinding]),
        ("healthy", &[NoFinding]),
        ("effusion", &[PleuralEffusion]),
        ("opacity", &[LungOpacity]),
        ("mass", &[LungLesion]),
        ("nodule", &[LungLesion]),
        ("enlarged heart", &[Cardiomegaly]),
        ("support device", &[SupportDevices]),
        // Described radiographically as ground-glass opacity with
        // consolidation, which is how prompt-based screening reaches it.
        ("covid", &[LungOpacity, Consolidation]),
        ("covid-19", &[LungOpacity, Consolidation]),
    ];
    for (alias, findings) in extra {
        aliases.insert((*alias).to_string(), findings.to_vec());
    }

    LexiconSpec {
        negation_window: DEFAULT_NEGATION_WINDOW,
        negation_cues,
        uncertainty_cues,
        triggers,
        aliases,
    }
}
