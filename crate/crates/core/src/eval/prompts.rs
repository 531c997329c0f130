//! Per-class prompt generation for zero-shot inference.
//!
//! Prompts are slot-filled from severity adjectives and per-finding
//! phrasings; generation is seedable so the randomness of prompt choice
//! can be averaged over runs.

use std::fs;
use std::path::Path;

use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::finding::{FindingLabel, FindingType};
use crate::pipeline::synthetic::finding_phrases;

pub const DEFAULT_PROMPT_VARIANTS: usize = 10;

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ClassPrompts {
    pub name: String,
    pub label: FindingLabel,
    pub prompts: Vec<String>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PromptSet {
    pub classes: Vec<ClassPrompts>,
}

impl PromptSet {
    pub fn validate(&self) -> Result<()> {
        if self.classes.is_empty() {
            return Err(Error::InvalidConfig("prompt set has no classes".into()));
        }
        for class in &self.classes {
            if class.prompts.is_empty() {
                return Err(Error::InvalidConfig(format!(
                    "class {:?} has no prompts",
                    class.name
                )));
            }
            if class.prompts.iter().any(|p| p.trim().is_empty()) {
                return Err(Error::InvalidConfig(format!(
                    "class {:?} has an empty prompt",
                    class.name
                )));
            }
        }
        Ok(())
    }

    /// Class index whose label matches exactly, if any.
    pub fn class_of_label(&self, label: FindingLabel) -> Option<usize> {
        self.classes.iter().position(|c| c.label == label)
    }

    pub fn load_json(path: &Path) -> Result<PromptSet> {
        let raw = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let set: PromptSet = serde_json::from_str(&raw).map_err(|e| Error::json(path, e))?;
        set.validate()?;
        Ok(set)
    }

    pub fn save_json(&self, path: &Path) -> Result<()> {
        let raw = serde_json::to_string_pretty(self).map_err(|e| Error::json(path, e))?;
        fs::write(path, raw).map_err(|e| Error::io(path, e))
    }
}

const SEVERITIES: [&str; 6] = ["mild", "moderate", "severe", "small", "large", "stable"];

fn describe(label: FindingLabel, rng: &mut ChaCha8Rng) -> String {
    let findings = label.findings();
    if findings == [FindingType::NoFinding] {
        let phrases = finding_phrases(FindingType::NoFinding);
        return phrases[rng.gen_range(0..phrases.len())].to_string();
    }
    let parts: Vec<String> = findings
        .iter()
        .map(|f| {
            let phrases = finding_phrases(*f);
            let phrase = phrases[rng.gen_range(0..phrases.len())];
            let severity = SEVERITIES[rng.gen_range(0..SEVERITIES.len())];
            format!("{severity} {phrase}")
        })
        .collect();
    parts.join(" and ")
}

/// Generate `variants` prompts per class from slot-filled templates.
pub fn generate_prompt_set(
    classes: &[(String, FindingLabel)],
    variants: usize,
    seed: u64,
) -> Result<PromptSet> {
    if variants == 0 {
        return Err(Error::InvalidConfig("variants must be at least 1".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = Vec::with_capacity(classes.len());
    for (name, label) in classes {
        if label.is_unlabeled() {
            return Err(Error::DegenerateLabel(format!("prompt class {name:?}")));
        }
        let mut prompts = Vec::with_capacity(variants);
        let mut guard = 0;
        while prompts.len() < variants && guard < variants * 20 {
            guard += 1;
            let desc = describe(*label, &mut rng);
            let prompt = match rng.gen_range(0..4) {
                0 => format!("there is {desc}"),
                1 => format!("{desc} is present"),
                2 => format!("{desc} is seen on the radiograph"),
                _ => desc.clone(),
            };
            if !prompts.contains(&prompt) {
                prompts.push(prompt);
            }
        }
        out.push(ClassPrompts {
            name: name.clone(),
            label: *label,
            prompts,
        });
    }
    let set = PromptSet { classes: out };
    set.validate()?;
    Ok(set)
}
