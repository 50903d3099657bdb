//! Core domain logic: reasoning-chain parsing, the composite reward, dataset
//! stratification, and classification metrics. Everything here is pure and
//! synchronous; networking and orchestration live in the companion crates.

pub mod dataset;
pub mod lexicon;
pub mod metrics;
pub mod model;
pub mod parser;
pub mod records;
pub mod reward;

pub use dataset::{
    classify_stratum, dataset_stats, rejection_filter, render_build_report, BuildReport,
    LengthClass, Linearity, StratumKey, DEFAULT_LENGTH_THRESHOLD,
};
pub use lexicon::MarkerLexicon;
pub use metrics::{
    accuracy, macro_f1, render_report, weighted_f1, ConfusionMatrix, EvalResult,
    LabeledEvalResult,
};
pub use model::{
    default_label_space, GenerationConfig, LabelId, LabelSpace, LabelSpaceSet, MarkerKind, Sample,
    TaskKind,
};
pub use parser::{extract_label, parse_chain, token_length, ReasoningChain, Segment, Span};
pub use records::{CandidateRecord, CandidateResponse, DatasetRecord, ScoredRecord};
pub use reward::{
    analyze_response, default_config_toml, score_response, DepthBand, RewardConfig,
    RewardConfigOverride, RewardVector, RewardWeights,
};
