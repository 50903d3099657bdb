//! Shared domain types: tasks, label spaces, samples, and generation presets.
//!
//! Everything here is immutable after construction and safe to share across
//! threads. Label spaces are the single source of truth for which integer
//! labels are legal for a task; any function that returns a label either
//! returns a member of the relevant space or an error.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

/// Integer label identifier. Labels are always `0..K-1` with `K <= 10`, so a
/// single digit character is enough to carry any label through text.
pub type LabelId = u8;

/// Labels must stay single-digit so that answer extraction can scan for one
/// standalone digit character.
pub const MAX_LABELS: usize = 10;

/// The four classification task families.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TaskKind {
    Sentiment,
    Emotion,
    Humor,
    Sarcasm,
}

impl TaskKind {
    pub const ALL: [TaskKind; 4] = [
        TaskKind::Sentiment,
        TaskKind::Emotion,
        TaskKind::Humor,
        TaskKind::Sarcasm,
    ];

    pub fn as_str(&self) -> &'static str {
        match self {
            TaskKind::Sentiment => "sentiment",
            TaskKind::Emotion => "emotion",
            TaskKind::Humor => "humor",
            TaskKind::Sarcasm => "sarcasm",
        }
    }
}

impl fmt::Display for TaskKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for TaskKind {
    type Err = ModelError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "sentiment" => Ok(TaskKind::Sentiment),
            "emotion" => Ok(TaskKind::Emotion),
            "humor" => Ok(TaskKind::Humor),
            "sarcasm" => Ok(TaskKind::Sarcasm),
            other => Err(ModelError::UnknownTask(other.to_string())),
        }
    }
}

/// The set of legal labels for one task: contiguous ids `0..K-1`, each with a
/// unique human-readable name.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LabelSpace {
    task: TaskKind,
    names: Vec<String>,
}

impl LabelSpace {
    /// Build a label space from the name table; id `i` maps to `names[i]`.
    pub fn new(task: TaskKind, names: Vec<String>) -> Result<Self, ModelError> {
        if names.len() < 2 {
            return Err(ModelError::LabelSpaceTooSmall { task, len: names.len() });
        }
        if names.len() > MAX_LABELS {
            return Err(ModelError::LabelSpaceTooLarge { task, len: names.len() });
        }
        for (i, name) in names.iter().enumerate() {
            if name.trim().is_empty() {
                return Err(ModelError::EmptyLabelName { task, label: i as LabelId });
            }
            if names[..i].contains(name) {
                return Err(ModelError::DuplicateLabelName { task, name: name.clone() });
            }
        }
        Ok(Self { task, names })
    }

    pub fn task(&self) -> TaskKind {
        self.task
    }

    /// Number of labels K.
    pub fn len(&self) -> usize {
        self.names.len()
    }

    pub fn is_empty(&self) -> bool {
        false // by construction K >= 2
    }

    pub fn labels(&self) -> impl Iterator<Item = LabelId> + '_ {
        (0..self.names.len()).map(|i| i as LabelId)
    }

    pub fn contains(&self, label: LabelId) -> bool {
        (label as usize) < self.names.len()
    }

    pub fn name(&self, label: LabelId) -> Option<&str> {
        self.names.get(label as usize).map(String::as_str)
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }
}

/// Built-in default label space for a task. The defaults mirror the usual
/// class inventories of the common benchmark corpora for each task; all of
/// them can be overridden through configuration.
pub fn default_label_space(task: TaskKind) -> LabelSpace {
    let names: Vec<&str> = match task {
        TaskKind::Sentiment => vec!["negative", "positive"],
        TaskKind::Emotion => vec![
            "neutral", "surprise", "fear", "sadness", "joy", "disgust", "anger",
        ],
        TaskKind::Humor => vec!["non-humorous", "humorous"],
        TaskKind::Sarcasm => vec!["non-sarcastic", "sarcastic"],
    };
    LabelSpace::new(task, names.into_iter().map(String::from).collect())
        .expect("built-in defaults satisfy the label-space invariants")
}

/// Registry mapping every task to its effective label space. Starts from the
/// built-in defaults; individual tasks can be replaced with overrides.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LabelSpaceSet {
    spaces: BTreeMap<TaskKind, LabelSpace>,
}

impl Default for LabelSpaceSet {
    fn default() -> Self {
        let spaces = TaskKind::ALL
            .iter()
            .map(|&t| (t, default_label_space(t)))
            .collect();
        Self { spaces }
    }
}

impl LabelSpaceSet {
    pub fn get(&self, task: TaskKind) -> &LabelSpace {
        &self.spaces[&task] // total: every TaskKind is present by construction
    }

    /// Replace one task's space with an override.
    pub fn set(&mut self, space: LabelSpace) {
        self.spaces.insert(space.task(), space);
    }
}

/// One classification prompt with its verified gold label.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Sample {
    pub id: String,
    pub task: TaskKind,
    pub prompt_text: String,
    pub gold_label: LabelId,
}

impl Sample {
    pub fn validate(&self, spaces: &LabelSpaceSet) -> Result<(), ModelError> {
        if self.id.is_empty() {
            return Err(ModelError::InvalidSample {
                id: self.id.clone(),
                reason: "id is empty".into(),
            });
        }
        if self.prompt_text.trim().is_empty() {
            return Err(ModelError::InvalidSample {
                id: self.id.clone(),
                reason: "prompt_text is empty".into(),
            });
        }
        let space = spaces.get(self.task);
        if !space.contains(self.gold_label) {
            return Err(ModelError::InvalidSample {
                id: self.id.clone(),
                reason: format!(
                    "gold_label {} is outside the {}-class {} label space",
                    self.gold_label,
                    space.len(),
                    self.task
                ),
            });
        }
        Ok(())
    }
}

/// Decoding parameters for one generation call.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GenerationConfig {
    pub temperature: f64,
    pub max_tokens: u32,
    pub candidates_per_prompt: u32,
}

impl GenerationConfig {
    /// The fixed evaluation protocol: greedy decoding capped at 10 output
    /// tokens, so runs stay comparable across endpoints.
    pub fn evaluation() -> Self {
        Self { temperature: 0.0, max_tokens: 10, candidates_per_prompt: 1 }
    }

    /// Dataset-building preset: N sampled candidates per prompt.
    pub fn sampling(candidates_per_prompt: u32) -> Self {
        Self { temperature: 1.0, max_tokens: 1024, candidates_per_prompt }
    }

    pub fn matches_evaluation_protocol(&self) -> bool {
        self.temperature == 0.0 && self.max_tokens == 10
    }

    pub fn validate(&self) -> Result<(), ModelError> {
        if self.temperature.is_nan() || self.temperature < 0.0 {
            return Err(ModelError::InvalidGeneration(format!(
                "temperature must be >= 0, got {}",
                self.temperature
            )));
        }
        if self.max_tokens == 0 {
            return Err(ModelError::InvalidGeneration("max_tokens must be positive".into()));
        }
        if self.candidates_per_prompt == 0 {
            return Err(ModelError::InvalidGeneration(
                "candidates_per_prompt must be positive".into(),
            ));
        }
        Ok(())
    }
}

/// Structural operation performed by one reasoning segment.
///
/// The five non-`Plain` kinds are the extended-reasoning functions this
/// toolkit tracks: decomposing the input, reflecting on an interpretation,
/// verifying consistency, handling a contradiction, and correcting an
/// earlier step. `Plain` marks a segment that does none of them.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum MarkerKind {
    Decomposition,
    Reflection,
    Verification,
    Contradiction,
    Correction,
    Plain,
}

impl MarkerKind {
    /// The five structural (non-plain) kinds, in canonical order.
    pub const STRUCTURAL: [MarkerKind; 5] = [
        MarkerKind::Decomposition,
        MarkerKind::Reflection,
        MarkerKind::Verification,
        MarkerKind::Contradiction,
        MarkerKind::Correction,
    ];

    pub fn is_structural(&self) -> bool {
        !matches!(self, MarkerKind::Plain)
    }

    pub fn as_str(&self) -> &'static str {
        match self {
            MarkerKind::Decomposition => "decomposition",
            MarkerKind::Reflection => "reflection",
            MarkerKind::Verification => "verification",
            MarkerKind::Contradiction => "contradiction",
            MarkerKind::Correction => "correction",
            MarkerKind::Plain => "plain",
        }
    }
}

#[derive(Debug, thiserror::Error)]
pub enum ModelError {
    #[error("unknown task '{0}' (expected sentiment, emotion, humor, or sarcasm)")]
    UnknownTask(String),
    #[error("{task} label space needs at least 2 labels, got {len}")]
    LabelSpaceTooSmall { task: TaskKind, len: usize },
    #[error("{task} label space is capped at {MAX_LABELS} labels, got {len}")]
    LabelSpaceTooLarge { task: TaskKind, len: usize },
    #[error("{task} label {label} has an empty name")]
    EmptyLabelName { task: TaskKind, label: LabelId },
    #[error("{task} label name '{name}' appears twice")]
    DuplicateLabelName { task: TaskKind, name: String },
    #[error("invalid sample '{id}': {reason}")]
    InvalidSample { id: String, reason: String },
    #[error("invalid generation config: {0}")]
    InvalidGeneration(String),
}
