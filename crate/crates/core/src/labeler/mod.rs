//! Rule-based report labeling: sentence splitting, trigger tagging with
//! negation/uncertainty scope, and multi-hot label assembly.
//!
//! All operations are pure functions of their inputs and the immutable
//! [`Lexicon`], so they can run concurrently from any number of workers.

pub(crate) mod lexicon;

pub use lexicon::{Lexicon, LexiconSpec, DEFAULT_NEGATION_WINDOW};

use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::finding::{FindingLabel, FindingType};

/// Polarity of a tagged entity mention.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Polarity {
    Affirmed,
    Negated,
    Uncertain,
}

/// One trigger hit inside a sentence. `start..end` are byte offsets into
/// the source sentence, valid for slicing.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct EntityMention {
    pub finding: FindingType,
    pub start: usize,
    pub end: usize,
    pub polarity: Polarity,
}

/// What to do with uncertain mentions when building labels.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum UncertaintyPolicy {
    /// Treat uncertain mentions as affirmed (the default).
    #[default]
    Affirm,
    /// Drop uncertain mentions.
    Ignore,
}

impl std::str::FromStr for UncertaintyPolicy {
    type Err = String;
    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "affirm" => Ok(UncertaintyPolicy::Affirm),
            "ignore" => Ok(UncertaintyPolicy::Ignore),
            other => Err(format!("unknown uncertainty policy {other:?}")),
        }
    }
}

/// Words that commonly precede a non-terminating period.
const ABBREVIATIONS: &[&str] = &["dr", "mr", "mrs", "ms", "vs", "etc", "eg", "ie", "fig", "st"];

/// Minimum words for a sentence to survive splitting.
const MIN_SENTENCE_WORDS: usize = 3;

/// Split a report into sentences on terminating punctuation and newlines,
/// dropping sentences with fewer than three whitespace-delimited words.
pub fn split_report(report_text: &str) -> Vec<String> {
    let mut sentences = Vec::new();
    let mut start = 0usize;
    let bytes = report_text.as_bytes();

    let push = |from: usize, to: usize, out: &mut Vec<String>| {
        let piece = report_text[from..to].trim();
        if piece.split_whitespace().count() >= MIN_SENTENCE_WORDS {
            out.push(piece.to_string());
        }
    };

    let mut i = 0usize;
    while i < bytes.len() {
        let ch = bytes[i] as char;
        let boundary = match ch {
            '!' | '?' | '\n' => true,
            '.' => is_terminating_period(report_text, i),
            _ => false,
        };
        if boundary {
            // Include the punctuation itself, but not the newline.
            let end = if ch == '\n' { i } else { i + 1 };
            push(start, end, &mut sentences);
            start = i + 1;
        }
        i += 1;
    }
    if start < bytes.len() {
        push(start, bytes.len(), &mut sentences);
    }
    sentences
}

fn is_terminating_period(text: &str, at: usize) -> bool {
    let before: Vec<char> = text[..at].chars().rev().take_while(|c| c.is_alphanumeric()).collect();
    let after = text[at + 1..].chars().next();
    // A digit on both sides means a decimal number, not a boundary.
    if before.first().is_some_and(|c| c.is_ascii_digit())
        && after.is_some_and(|c| c.is_ascii_digit())
    {
        return false;
    }
    let word: String = before.iter().rev().collect::<String>().to_lowercase();
    if word.chars().count() == 1 && word.chars().all(|c| c.is_alphabetic()) {
        return false; // single-letter initials such as "e." in "e.g."
    }
    !ABBREVIATIONS.contains(&word.as_str())
}

struct Token {
    lower: String,
    start: usize,
    end: usize,
}

fn tokenize_with_spans(sentence: &str) -> Vec<Token> {
    let mut tokens = Vec::new();
    let mut current = String::new();
    let mut tok_start = 0usize;
    for (idx, ch) in sentence.char_indices() {
        if ch.is_alphanumeric() {
            if current.is_empty() {
                tok_start = idx;
            }
            for low in ch.to_lowercase() {
                current.push(low);
            }
        } else if !current.is_empty() {
            tokens.push(Token {
                lower: std::mem::take(&mut current),
                start: tok_start,
                end: idx,
            });
        }
    }
    if !current.is_empty() {
        tokens.push(Token {
            lower: current,
            start: tok_start,
            end: sentence.len(),
        });
    }
    tokens
}

/// Tag every lexicon trigger present in the sentence (case-insensitive,
/// whole-word). A mention is negated when a negation cue falls within the
/// lexicon's token window immediately preceding the trigger; uncertainty
/// cues work the same way, with negation taking precedence.
pub fn tag_sentence(sentence: &str, lexicon: &Lexicon) -> Vec<EntityMention> {
    let tokens = tokenize_with_spans(sentence);
    let mut mentions = Vec::new();

    for finding in FindingType::ALL {
        // Longest trigger first; a shorter trigger of the same finding
        // cannot re-claim tokens inside an existing hit.
        let mut claimed: Vec<(usize, usize)> = Vec::new();
        for phrase in lexicon.trigger_token_lists(finding) {
            if phrase.is_empty() || phrase.len() > tokens.len() {
                continue;
            }
            for start in 0..=(tokens.len() - phrase.len()) {
                let end = start + phrase.len();
                if !phrase
                    .iter()
                    .zip(&tokens[start..end])
                    .all(|(p, t)| *p == t.lower)
                {
                    continue;
                }
                if claimed.iter().any(|&(a, b)| start < b && end > a) {
                    continue;
                }
                claimed.push((start, end));
                let polarity = classify_polarity(&tokens, start, lexicon);
                mentions.push(EntityMention {
                    finding,
                    start: tokens[start].start,
                    end: tokens[end - 1].end,
                    polarity,
                });
            }
        }
    }

    mentions.sort_by_key(|m| (m.start, m.finding.index()));
    mentions
}

fn classify_polarity(tokens: &[Token], trigger_start: usize, lexicon: &Lexicon) -> Polarity {
    let window_start = trigger_start.saturating_sub(lexicon.negation_window());
    let window: Vec<&str> = tokens[window_start..trigger_start]
        .iter()
        .map(|t| t.lower.as_str())
        .collect();
    if contains_cue(&window, lexicon.negation_token_lists()) {
        Polarity::Negated
    } else if contains_cue(&window, lexicon.uncertainty_token_lists()) {
        Polarity::Uncertain
    } else {
        Polarity::Affirmed
    }
}

fn contains_cue(window: &[&str], cues: &[Vec<String>]) -> bool {
    cues.iter().any(|cue| {
        !cue.is_empty()
            && cue.len() <= window.len()
            && (0..=(window.len() - cue.len()))
                .any(|s| cue.iter().zip(&window[s..]).all(|(c, w)| c == *w))
    })
}

/// Collapse one sentence's mentions into a multi-hot label.
///
/// Affirmed findings set their bit; negated ones set nothing; uncertain
/// ones follow the policy. A sentence with only negative evidence maps to
/// No Finding. A sentence with no mentions stays all-zero (unlabeled).
pub fn sentence_to_label(mentions: &[EntityMention], policy: UncertaintyPolicy) -> FindingLabel {
    let mut label = FindingLabel::empty();
    let mut saw_negated = false;
    for mention in mentions {
        match mention.polarity {
            Polarity::Affirmed => label.set(mention.finding),
            Polarity::Negated => saw_negated = true,
            Polarity::Uncertain => {
                if policy == UncertaintyPolicy::Affirm {
                    label.set(mention.finding);
                }
            }
        }
    }
    // Mixed evidence: positive findings win over a No Finding trigger.
    if label.get(FindingType::NoFinding) && label.count() > 1 {
        label.clear(FindingType::NoFinding);
    }
    if label.is_unlabeled() && saw_negated {
        label.set(FindingType::NoFinding);
    }
    debug_assert!(label.validate().is_ok());
    label
}

/// Map a dataset class name (optionally `|`-separated) onto a label via
/// the lexicon's alias table.
pub fn class_to_label(class_name: &str, lexicon: &Lexicon) -> Result<FindingLabel> {
    let findings = lexicon.resolve_class(class_name)?;
    let mut label = FindingLabel::empty();
    for f in findings {
        label.set(f);
    }
    if label.get(FindingType::NoFinding) && label.count() > 1 {
        label.clear(FindingType::NoFinding);
    }
    debug_assert!(label.validate().is_ok());
    Ok(label)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::error::Error;

    fn lex() -> Lexicon {
        Lexicon::builtin()
    }

    #[test]
    fn split_drops_short_sentences() {
        let got = split_report("Heart size normal. No effusion.");
        assert_eq!(got, vec!["Heart size normal.".to_string()]);
    }

    #[test]
    fn split_empty_input() {
        assert!(split_report("").is_empty());
    }

    #[test]
    fn split_keeps_long_sentences_in_order() {
        let got = split_report("The lungs are clear bilaterally. Mild cardiomegaly is noted.");
        assert_eq!(
            got,
            vec![
                "The lungs are clear bilaterally.".to_string(),
                "Mild cardiomegaly is noted.".to_string(),
            ]
        );
    }

    #[test]
    fn split_guards_abbreviations_and_decimals() {
        let got = split_report("Seen by Dr. Smith today. The nodule measures 1.5 cm in diameter.");
        assert_eq!(
            got,
            vec![
                "Seen by Dr. Smith today.".to_string(),
                "The nodule measures 1.5 cm in diameter.".to_string(),
            ]
        );
    }

    #[test]
    fn split_treats_newlines_as_boundaries() {
        let got = split_report("Impression is as follows\nStable bibasilar atelectasis noted today");
        assert_eq!(got.len(), 2);
    }

    #[test]
    fn tag_negated_effusion() {
        let mentions = tag_sentence("no pleural effusion is seen", &lex());
        assert_eq!(mentions.len(), 1);
        assert_eq!(mentions[0].finding, FindingType::PleuralEffusion);
        assert_eq!(mentions[0].polarity, Polarity::Negated);
        assert_eq!(
            &"no pleural effusion is seen"[mentions[0].start..mentions[0].end],
            "pleural effusion"
        );
    }

    #[test]
    fn tag_affirmed_edema() {
        let mentions = tag_sentence("moderate pulmonary edema", &lex());
        assert_eq!(mentions.len(), 1);
        assert_eq!(mentions[0].finding, FindingType::Edema);
        assert_eq!(mentions[0].polarity, Polarity::Affirmed);
    }

    #[test]
    fn tag_uncertain_pneumonia() {
        let mentions = tag_sentence("findings may represent pneumonia", &lex());
        assert_eq!(mentions.len(), 1);
        assert_eq!(mentions[0].finding, FindingType::Pneumonia);
        assert_eq!(mentions[0].polarity, Polarity::Uncertain);
    }

    #[test]
    fn tag_is_case_insensitive_with_identical_spans() {
        let s = "No pleural effusion or pneumothorax, moderate cardiomegaly.";
        let upper = s.to_uppercase();
        assert_eq!(tag_sentence(s, &lex()), tag_sentence(&upper, &lex()));
    }

    #[test]
    fn tag_unknown_vocabulary_ignored() {
        assert!(tag_sentence("the weather is pleasant today", &lex()).is_empty());
    }

    #[test]
    fn tag_longest_trigger_claims_span() {
        // "pleural effusion" must win over the bare "effusion" trigger.
        let mentions = tag_sentence("small pleural effusion on the left", &lex());
        assert_eq!(mentions.len(), 1);
        assert_eq!(
            &"small pleural effusion on the left"[mentions[0].start..mentions[0].end],
            "pleural effusion"
        );
    }

    #[test]
    fn tag_negation_window_is_bounded() {
        // Cue is 8 tokens before the trigger, outside the 6-token window.
        let s = "no significant interval change of the previously described moderate edema";
        let mentions = tag_sentence(s, &lex());
        assert_eq!(mentions.len(), 1);
        assert_eq!(mentions[0].finding, FindingType::Edema);
        assert_eq!(mentions[0].polarity, Polarity::Affirmed);
    }

    #[test]
    fn label_affirmed_beats_negated() {
        let mentions = vec![
            EntityMention {
                finding: FindingType::Edema,
                start: 0,
                end: 5,
                polarity: Polarity::Affirmed,
            },
            EntityMention {
                finding: FindingType::PleuralEffusion,
                start: 10,
                end: 26,
                polarity: Polarity::Negated,
            },
        ];
        let label = sentence_to_label(&mentions, UncertaintyPolicy::Affirm);
        assert!(label.get(FindingType::Edema));
        assert_eq!(label.count(), 1);
    }

    #[test]
    fn label_pure_negation_is_no_finding() {
        let mentions = vec![EntityMention {
            finding: FindingType::Pneumonia,
            start: 0,
            end: 9,
            polarity: Polarity::Negated,
        }];
        let label = sentence_to_label(&mentions, UncertaintyPolicy::Affirm);
        assert!(label.get(FindingType::NoFinding));
        assert_eq!(label.count(), 1);
    }

    #[test]
    fn label_no_mentions_is_unlabeled() {
        let label = sentence_to_label(&[], UncertaintyPolicy::Affirm);
        assert!(label.is_unlabeled());
    }

    #[test]
    fn label_uncertainty_policy() {
        let mentions = vec![EntityMention {
            finding: FindingType::Pneumonia,
            start: 0,
            end: 9,
            polarity: Polarity::Uncertain,
        }];
        let affirm = sentence_to_label(&mentions, UncertaintyPolicy::Affirm);
        assert!(affirm.get(FindingType::Pneumonia));
        let ignore = sentence_to_label(&mentions, UncertaintyPolicy::Ignore);
        assert!(ignore.is_unlabeled());
    }

    #[test]
    fn class_normal_maps_to_no_finding() {
        let label = class_to_label("Normal", &lex()).unwrap();
        assert!(label.get(FindingType::NoFinding));
        assert_eq!(label.count(), 1);
    }

    #[test]
    fn class_identity_alias() {
        let label = class_to_label("Cardiomegaly", &lex()).unwrap();
        assert!(label.get(FindingType::Cardiomegaly));
        assert_eq!(label.count(), 1);
    }

    #[test]
    fn class_multi_label() {
        let label = class_to_label("Pneumonia|Edema", &lex()).unwrap();
        assert!(label.get(FindingType::Pneumonia));
        assert!(label.get(FindingType::Edema));
        assert_eq!(label.count(), 2);
    }

    #[test]
    fn class_unknown_is_an_error_naming_the_string() {
        match class_to_label("Pneumonia|Gibberish", &lex()) {
            Err(Error::UnmappedClass(name)) => assert_eq!(name, "Gibberish"),
            other => panic!("expected UnmappedClass, got {other:?}"),
        }
    }

    #[test]
    fn labeling_is_deterministic() {
        let s = "there is moderate pulmonary edema without pleural effusion";
        let a = tag_sentence(s, &lex());
        let b = tag_sentence(s, &lex());
        assert_eq!(a, b);
        assert_eq!(
            sentence_to_label(&a, UncertaintyPolicy::Affirm),
            sentence_to_label(&b, UncertaintyPolicy::Affirm)
        );
    }
}
