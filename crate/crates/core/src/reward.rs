//! Four-component reward for candidate responses.
//!
//! The composite is a weighted sum, linear in every component: accuracy and
//! depth and diversity add, repetition subtracts. Keeping it linear makes a
//! zero weight an exact ablation of that component.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::lexicon::MarkerLexicon;
use crate::model::{LabelId, LabelSpace, MarkerKind, Sample, TaskKind};
use crate::parser::{extract_label, parse_chain, ParseError, ReasoningChain};

/// Weights applied to the four components. All must be finite and >= 0.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RewardWeights {
    pub accuracy: f64,
    pub depth: f64,
    pub diversity: f64,
    pub repetition: f64,
}

impl Default for RewardWeights {
    fn default() -> Self {
        Self { accuracy: 1.0, depth: 0.3, diversity: 0.2, repetition: 0.2 }
    }
}

impl RewardWeights {
    pub fn validate(&self) -> Result<(), RewardConfigError> {
        for (name, value) in [
            ("accuracy", self.accuracy),
            ("depth", self.depth),
            ("diversity", self.diversity),
            ("repetition", self.repetition),
        ] {
            if !value.is_finite() || value < 0.0 {
                return Err(RewardConfigError::InvalidWeight { name, value });
            }
        }
        Ok(())
    }
}

/// Token-length trapezoid `(min, lo, hi, max)`: zero at or below `min` and at
/// or above `max`, one on `[lo, hi]`, linear in between. The ordering
/// `min < lo <= hi < max` is enforced at construction, so the ramps are never
/// degenerate.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "[u64; 4]", into = "[u64; 4]")]
pub struct DepthBand {
    min: u64,
    lo: u64,
    hi: u64,
    max: u64,
}

impl DepthBand {
    pub fn new(min: u64, lo: u64, hi: u64, max: u64) -> Result<Self, RewardConfigError> {
        if min < lo && lo <= hi && hi < max {
            Ok(Self { min, lo, hi, max })
        } else {
            Err(RewardConfigError::InvalidBand { min, lo, hi, max })
        }
    }

    pub fn min(&self) -> u64 {
        self.min
    }

    pub fn lo(&self) -> u64 {
        self.lo
    }

    pub fn hi(&self) -> u64 {
        self.hi
    }

    pub fn max(&self) -> u64 {
        self.max
    }
}

impl TryFrom<[u64; 4]> for DepthBand {
    type Error = RewardConfigError;

    fn try_from(v: [u64; 4]) -> Result<Self, Self::Error> {
        Self::new(v[0], v[1], v[2], v[3])
    }
}

impl From<DepthBand> for [u64; 4] {
    fn from(b: DepthBand) -> Self {
        [b.min, b.lo, b.hi, b.max]
    }
}

fn default_sentiment_band() -> DepthBand {
    DepthBand { min: 5, lo: 20, hi: 120, max: 400 }
}

fn default_emotion_band() -> DepthBand {
    DepthBand { min: 5, lo: 30, hi: 160, max: 400 }
}

fn default_humor_band() -> DepthBand {
    DepthBand { min: 10, lo: 40, hi: 220, max: 600 }
}

fn default_sarcasm_band() -> DepthBand {
    DepthBand { min: 10, lo: 60, hi: 300, max: 800 }
}

/// Per-task depth bands. Defaults follow the easy-to-hard task gradient:
/// sarcasm tolerates (and expects) the longest chains.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DepthBands {
    #[serde(default = "default_sentiment_band")]
    pub sentiment: DepthBand,
    #[serde(default = "default_emotion_band")]
    pub emotion: DepthBand,
    #[serde(default = "default_humor_band")]
    pub humor: DepthBand,
    #[serde(default = "default_sarcasm_band")]
    pub sarcasm: DepthBand,
}

impl Default for DepthBands {
    fn default() -> Self {
        Self {
            sentiment: default_sentiment_band(),
            emotion: default_emotion_band(),
            humor: default_humor_band(),
            sarcasm: default_sarcasm_band(),
        }
    }
}

impl DepthBands {
    pub fn for_task(&self, task: TaskKind) -> DepthBand {
        match task {
            TaskKind::Sentiment => self.sentiment,
            TaskKind::Emotion => self.emotion,
            TaskKind::Humor => self.humor,
            TaskKind::Sarcasm => self.sarcasm,
        }
    }

    pub fn set(&mut self, task: TaskKind, band: DepthBand) {
        match task {
            TaskKind::Sentiment => self.sentiment = band,
            TaskKind::Emotion => self.emotion = band,
            TaskKind::Humor => self.humor = band,
            TaskKind::Sarcasm => self.sarcasm = band,
        }
    }
}

fn default_ngram_order() -> usize {
    3
}

/// Everything the scorer needs besides the lexicon.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RewardConfig {
    pub ngram_order: usize,
    pub weights: RewardWeights,
    pub depth_bands: DepthBands,
}

impl Default for RewardConfig {
    fn default() -> Self {
        Self {
            ngram_order: default_ngram_order(),
            weights: RewardWeights::default(),
            depth_bands: DepthBands::default(),
        }
    }
}

impl RewardConfig {
    pub fn validate(&self) -> Result<(), RewardConfigError> {
        if self.ngram_order < 2 {
            return Err(RewardConfigError::NgramOrderTooSmall(self.ngram_order));
        }
        self.weights.validate()
    }

    pub fn from_toml_str(s: &str) -> Result<Self, RewardConfigError> {
        let config: Self = toml::from_str(s).map_err(|e| RewardConfigError::Parse(e.to_string()))?;
        config.validate()?;
        Ok(config)
    }

    pub fn load(path: &Path) -> Result<Self, RewardConfigError> {
        let text = std::fs::read_to_string(path).map_err(|e| RewardConfigError::Io {
            path: path.display().to_string(),
            source: e,
        })?;
        Self::from_toml_str(&text)
    }

    pub fn to_toml_string(&self) -> String {
        toml::to_string(self).expect("reward config serializes to TOML")
    }

    /// Hex SHA-256 of the JSON form of the effective config. Lets clients
    /// confirm which configuration scored their batch.
    pub fn fingerprint(&self) -> String {
        let bytes = serde_json::to_vec(self).expect("reward config serializes to JSON");
        let digest = Sha256::digest(&bytes);
        let mut out = String::with_capacity(digest.len() * 2);
        for byte in digest {
            write!(out, "{byte:02x}").expect("writing to a String cannot fail");
        }
        out
    }
}

/// Canonical TOML text of the shipped defaults.
pub fn default_config_toml() -> String {
    RewardConfig::default().to_toml_string()
}

/// Partial replacement for a base config. Present fields replace the base
/// value wholesale; `depth_bands` replaces only the tasks it names.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RewardConfigOverride {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub weights: Option<RewardWeights>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub depth_bands: Option<BTreeMap<TaskKind, DepthBand>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub ngram_order: Option<usize>,
}

impl RewardConfigOverride {
    pub fn is_empty(&self) -> bool {
        self.weights.is_none() && self.depth_bands.is_none() && self.ngram_order.is_none()
    }

    pub fn apply(&self, base: &RewardConfig) -> Result<RewardConfig, RewardConfigError> {
        let mut config = base.clone();
        if let Some(weights) = self.weights {
            config.weights = weights;
        }
        if let Some(bands) = &self.depth_bands {
            for (&task, &band) in bands {
                config.depth_bands.set(task, band);
            }
        }
        if let Some(n) = self.ngram_order {
            config.ngram_order = n;
        }
        config.validate()?;
        Ok(config)
    }
}

/// The four components and their weighted combination.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RewardVector {
    pub accuracy: f64,
    pub depth: f64,
    pub diversity: f64,
    pub repetition_penalty: f64,
    pub composite: f64,
}

/// Full scoring outcome for one response, for callers that also need the
/// parsed structure or the extracted label.
#[derive(Debug, Clone, PartialEq)]
pub struct ResponseAnalysis {
    pub chain: ReasoningChain,
    pub predicted_label: Option<LabelId>,
    pub rewards: RewardVector,
}

#[derive(Debug, thiserror::Error, PartialEq)]
pub enum RewardError {
    #[error(transparent)]
    Parse(#[from] ParseError),
    #[error("gold label {gold} is not in the {task} label space")]
    GoldLabelOutOfSpace { gold: LabelId, task: TaskKind },
}

#[derive(Debug, thiserror::Error)]
pub enum RewardConfigError {
    #[error("depth band ({min}, {lo}, {hi}, {max}) violates min < lo <= hi < max")]
    InvalidBand { min: u64, lo: u64, hi: u64, max: u64 },
    #[error("weight '{name}' must be finite and non-negative, got {value}")]
    InvalidWeight { name: &'static str, value: f64 },
    #[error("ngram_order must be at least 2, got {0}")]
    NgramOrderTooSmall(usize),
    #[error("failed to parse reward config: {0}")]
    Parse(String),
    #[error("failed to read reward config {path}")]
    Io { path: String, source: std::io::Error },
}

/// 1.0 when a label was extracted and equals gold, else 0.0.
pub fn accuracy_reward(predicted: Option<LabelId>, gold: LabelId) -> f64 {
    if predicted == Some(gold) {
        1.0
    } else {
        0.0
    }
}

/// Trapezoid membership of the token count in the band.
pub fn depth_reward(length_tokens: usize, band: DepthBand) -> f64 {
    let t = length_tokens as u64;
    if t <= band.min || t >= band.max {
        return 0.0;
    }
    if t >= band.lo && t <= band.hi {
        return 1.0;
    }
    if t < band.lo {
        (t - band.min) as f64 / (band.lo - band.min) as f64
    } else {
        (band.max - t) as f64 / (band.max - band.hi) as f64
    }
}

/// Distinct structural kinds used, normalized by the taxonomy size.
pub fn diversity_reward(chain: &ReasoningChain) -> f64 {
    chain.distinct_structural_kinds() as f64 / MarkerKind::STRUCTURAL.len() as f64
}

/// `1 - distinct/total` over whitespace-token n-grams; 0.0 for texts shorter
/// than `n` tokens.
pub fn repetition_penalty(text: &str, n: usize) -> f64 {
    let tokens: Vec<&str> = text.split_whitespace().collect();
    if tokens.len() < n {
        return 0.0;
    }
    let total = tokens.len() - n + 1;
    let distinct = tokens.windows(n).collect::<BTreeSet<_>>().len();
    1.0 - distinct as f64 / total as f64
}

pub fn composite_reward(
    accuracy: f64,
    depth: f64,
    diversity: f64,
    repetition: f64,
    weights: &RewardWeights,
) -> f64 {
    weights.accuracy * accuracy + weights.depth * depth + weights.diversity * diversity
        - weights.repetition * repetition
}

/// Parse, extract the label, and compute all components for one response.
/// A missing or out-of-range answer digit means accuracy 0, not an error.
pub fn analyze_response(
    text: &str,
    gold_label: LabelId,
    space: &LabelSpace,
    config: &RewardConfig,
    lexicon: &MarkerLexicon,
) -> Result<ResponseAnalysis, RewardError> {
    if !space.contains(gold_label) {
        return Err(RewardError::GoldLabelOutOfSpace { gold: gold_label, task: space.task() });
    }
    let chain = parse_chain(text, lexicon)?;
    let predicted_label = extract_label(text, space).ok();
    let accuracy = accuracy_reward(predicted_label, gold_label);
    let depth = depth_reward(chain.token_length, config.depth_bands.for_task(space.task()));
    let diversity = diversity_reward(&chain);
    let repetition = repetition_penalty(text, config.ngram_order);
    let composite = composite_reward(accuracy, depth, diversity, repetition, &config.weights);
    Ok(ResponseAnalysis {
        chain,
        predicted_label,
        rewards: RewardVector {
            accuracy,
            depth,
            diversity,
            repetition_penalty: repetition,
            composite,
        },
    })
}

/// Reward vector for one sample/response pair, resolving the label space
/// from the sample's task.
pub fn score_response(
    sample: &Sample,
    text: &str,
    space: &LabelSpace,
    config: &RewardConfig,
    lexicon: &MarkerLexicon,
) -> Result<RewardVector, RewardError> {
    analyze_response(text, sample.gold_label, space, config, lexicon).map(|a| a.rewards)
}
