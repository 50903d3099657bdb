//! Trigger-phrase lexicon that maps surface cues to structural operations.
//!
//! Matching is case-insensitive and bounded by word boundaries. The lexicon
//! ships with editable defaults; the only entry the toolkit insists on is
//! "however" under contradiction, since dropping it would silently disable
//! contradiction detection for the most common transition marker.

use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::model::MarkerKind;

/// Per-kind trigger phrase lists. Phrases are stored lowercased; no phrase
/// may appear under two kinds.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MarkerLexicon {
    phrases: BTreeMap<MarkerKind, Vec<String>>,
}

impl MarkerLexicon {
    /// Validate and normalize a kind -> phrases mapping.
    pub fn new(raw: BTreeMap<MarkerKind, Vec<String>>) -> Result<Self, LexiconError> {
        let mut phrases: BTreeMap<MarkerKind, Vec<String>> = BTreeMap::new();
        let mut seen: BTreeMap<String, MarkerKind> = BTreeMap::new();
        for (kind, list) in raw {
            if kind == MarkerKind::Plain {
                return Err(LexiconError::PlainHasPhrases);
            }
            let mut normalized = Vec::with_capacity(list.len());
            for phrase in list {
                let phrase = phrase.trim().to_lowercase();
                if phrase.is_empty() {
                    return Err(LexiconError::EmptyPhrase { kind });
                }
                if let Some(&other) = seen.get(&phrase) {
                    if other != kind || normalized.contains(&phrase) {
                        return Err(LexiconError::DuplicatePhrase { phrase, first: other, second: kind });
                    }
                }
                seen.insert(phrase.clone(), kind);
                normalized.push(phrase);
            }
            phrases.insert(kind, normalized);
        }
        let lexicon = Self { phrases };
        if !lexicon
            .phrases_for(MarkerKind::Contradiction)
            .iter()
            .any(|p| p == "however")
        {
            return Err(LexiconError::MissingHowever);
        }
        Ok(lexicon)
    }

    pub fn phrases_for(&self, kind: MarkerKind) -> &[String] {
        self.phrases.get(&kind).map(Vec::as_slice).unwrap_or(&[])
    }

    /// All `(kind, phrase)` pairs, in a fixed order independent of how the
    /// lexicon file listed them.
    pub fn entries(&self) -> impl Iterator<Item = (MarkerKind, &str)> + '_ {
        self.phrases
            .iter()
            .flat_map(|(&kind, list)| list.iter().map(move |p| (kind, p.as_str())))
    }

    /// Copy of this lexicon with one extra phrase under `kind`.
    pub fn with_phrase(&self, kind: MarkerKind, phrase: &str) -> Result<Self, LexiconError> {
        let mut raw = self.phrases.clone();
        raw.entry(kind).or_default().push(phrase.to_string());
        Self::new(raw)
    }

    pub fn from_toml_str(s: &str) -> Result<Self, LexiconError> {
        let file: LexiconFile = toml::from_str(s).map_err(|e| LexiconError::Parse(e.to_string()))?;
        file.into_lexicon()
    }

    pub fn load(path: &Path) -> Result<Self, LexiconError> {
        let text = std::fs::read_to_string(path).map_err(|e| LexiconError::Io {
            path: path.display().to_string(),
            source: e,
        })?;
        Self::from_toml_str(&text)
    }

    pub fn to_toml_string(&self) -> String {
        let file = LexiconFile {
            decomposition: self.phrases_for(MarkerKind::Decomposition).to_vec(),
            reflection: self.phrases_for(MarkerKind::Reflection).to_vec(),
            verification: self.phrases_for(MarkerKind::Verification).to_vec(),
            contradiction: self.phrases_for(MarkerKind::Contradiction).to_vec(),
            correction: self.phrases_for(MarkerKind::Correction).to_vec(),
        };
        toml::to_string(&file).expect("lexicon serializes to TOML")
    }
}

impl Default for MarkerLexicon {
    /// The shipped default lexicon. Seeds are minimal English cues for each
    /// structural operation; deployments are expected to extend them.
    fn default() -> Self {
        let raw: BTreeMap<MarkerKind, Vec<String>> = [
            (
                MarkerKind::Decomposition,
                vec!["first", "let's break", "consists of", "on the semantic level"],
            ),
            (
                MarkerKind::Reflection,
                vec!["on reflection", "wait", "reconsider", "let me re-examine"],
            ),
            (MarkerKind::Verification, vec!["check", "verify", "consistent with"]),
            (MarkerKind::Contradiction, vec!["however", "but", "on the other hand"]),
            (MarkerKind::Correction, vec!["actually", "correction", "instead"]),
        ]
        .into_iter()
        .map(|(k, v)| (k, v.into_iter().map(String::from).collect()))
        .collect();
        Self::new(raw).expect("default lexicon satisfies the lexicon invariants")
    }
}

/// On-disk shape of a lexicon file: one phrase array per structural kind.
#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct LexiconFile {
    #[serde(default)]
    decomposition: Vec<String>,
    #[serde(default)]
    reflection: Vec<String>,
    #[serde(default)]
    verification: Vec<String>,
    #[serde(default)]
    contradiction: Vec<String>,
    #[serde(default)]
    correction: Vec<String>,
}

impl LexiconFile {
    fn into_lexicon(self) -> Result<MarkerLexicon, LexiconError> {
        let raw = [
            (MarkerKind::Decomposition, self.decomposition),
            (MarkerKind::Reflection, self.reflection),
            (MarkerKind::Verification, self.verification),
            (MarkerKind::Contradiction, self.contradiction),
            (MarkerKind::Correction, self.correction),
        ]
        .into_iter()
        .collect();
        MarkerLexicon::new(raw)
    }
}

#[derive(Debug, thiserror::Error)]
pub enum LexiconError {
    #[error("plain segments cannot carry trigger phrases")]
    PlainHasPhrases,
    #[error("{kind:?} lexicon contains an empty phrase")]
    EmptyPhrase { kind: MarkerKind },
    #[error("phrase '{phrase}' is listed under both {first:?} and {second:?}")]
    DuplicatePhrase { phrase: String, first: MarkerKind, second: MarkerKind },
    #[error("contradiction lexicon must contain the phrase 'however'")]
    MissingHowever,
    #[error("failed to parse lexicon file: {0}")]
    Parse(String),
    #[error("failed to read lexicon file {path}")]
    Io { path: String, source: std::io::Error },
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_lexicon_contains_the_mandatory_seed() {
        let lex = MarkerLexicon::default();
        assert!(lex.phrases_for(MarkerKind::Contradiction).contains(&"however".to_string()));
        for kind in MarkerKind::STRUCTURAL {
            assert!(!lex.phrases_for(kind).is_empty(), "{kind:?} has no seed phrases");
        }
    }

    #[test]
    fn duplicate_phrase_across_kinds_is_rejected() {
        let err = MarkerLexicon::default().with_phrase(MarkerKind::Reflection, "However");
        assert!(matches!(err, Err(LexiconError::DuplicatePhrase { .. })));
    }

    #[test]
    fn dropping_however_is_rejected() {
        let raw: BTreeMap<MarkerKind, Vec<String>> =
            [(MarkerKind::Contradiction, vec!["but".to_string()])].into_iter().collect();
        assert!(matches!(MarkerLexicon::new(raw), Err(LexiconError::MissingHowever)));
    }

    #[test]
    fn phrases_are_normalized_to_lowercase() {
        let raw: BTreeMap<MarkerKind, Vec<String>> = [
            (MarkerKind::Contradiction, vec!["However".to_string(), "  YET ".to_string()]),
        ]
        .into_iter()
        .collect();
        let lex = MarkerLexicon::new(raw).unwrap();
        assert_eq!(lex.phrases_for(MarkerKind::Contradiction), ["however", "yet"]);
    }

    #[test]
    fn toml_round_trip_preserves_the_lexicon() {
        let lex = MarkerLexicon::default();
        let text = lex.to_toml_string();
        let back = MarkerLexicon::from_toml_str(&text).unwrap();
        assert_eq!(lex, back);
    }

    #[test]
    fn unknown_toml_key_is_rejected_by_name() {
        let err = MarkerLexicon::from_toml_str("contradicton = [\"however\"]").unwrap_err();
        assert!(err.to_string().contains("contradicton"), "{err}");
    }
}
