//! Fixed-protocol evaluation against a generation endpoint.
//!
//! The protocol is deliberately rigid: temperature 0.0 and a 10-token output
//! cap, so scores are comparable across endpoints and runs. Anything else
//! requires the explicit override flag, and the violation error names the
//! offending values.

use cot_forge_client::ChatClient;
use cot_forge_core::metrics::MetricsError;
use cot_forge_core::model::ModelError;
use cot_forge_core::{
    extract_label, ConfusionMatrix, EvalResult, GenerationConfig, LabelSpaceSet, Sample, TaskKind,
};

use crate::build::render_prompt;

#[derive(Debug, thiserror::Error)]
pub enum EvalError {
    #[error(
        "generation config (temperature {temperature}, max_tokens {max_tokens}) deviates from \
         the evaluation protocol (0.0, 10); pass the protocol override to proceed"
    )]
    ProtocolViolation { temperature: f64, max_tokens: u32 },
    #[error("test set is empty")]
    Empty,
    #[error("test set mixes tasks: expected {expected}, found {found}")]
    MixedTasks { expected: TaskKind, found: TaskKind },
    #[error(transparent)]
    InvalidSample(#[from] ModelError),
    #[error(transparent)]
    Metrics(#[from] MetricsError),
}

/// Options for one evaluation run.
#[derive(Debug, Clone)]
pub struct EvalOptions {
    pub gen: GenerationConfig,
    /// Permit a non-protocol generation config.
    pub override_protocol: bool,
    pub prompt_template: String,
    pub spaces: LabelSpaceSet,
}

impl Default for EvalOptions {
    fn default() -> Self {
        Self {
            gen: GenerationConfig::evaluation(),
            override_protocol: false,
            prompt_template: "{text}".to_string(),
            spaces: LabelSpaceSet::default(),
        }
    }
}

/// Query the endpoint for every sample and score the answers. Endpoint
/// failures and unparseable outputs land in the overflow column and count
/// as wrong.
pub async fn evaluate(
    samples: &[Sample],
    client: &ChatClient,
    options: &EvalOptions,
) -> Result<EvalResult, EvalError> {
    if !options.gen.matches_evaluation_protocol() && !options.override_protocol {
        return Err(EvalError::ProtocolViolation {
            temperature: options.gen.temperature,
            max_tokens: options.gen.max_tokens,
        });
    }
    let first = samples.first().ok_or(EvalError::Empty)?;
    let task = first.task;
    for sample in samples {
        if sample.task != task {
            return Err(EvalError::MixedTasks { expected: task, found: sample.task });
        }
        sample.validate(&options.spaces)?;
    }
    let space = options.spaces.get(task);

    let prompts: Vec<String> = samples
        .iter()
        .map(|s| render_prompt(&options.prompt_template, &s.prompt_text))
        .collect();
    let results = client.complete_batch(&prompts, &options.gen).await;

    let mut confusion = ConfusionMatrix::new(space.len());
    for (sample, result) in samples.iter().zip(results) {
        let predicted = match result {
            Ok(text) => extract_label(&text, space).ok(),
            Err(e) => {
                tracing::warn!(sample_id = %sample.id, error = %e, "endpoint failure counted as unparseable");
                None
            }
        };
        confusion
            .record(sample.gold_label, predicted)
            .expect("validated samples and extracted labels fit the matrix");
    }
    Ok(EvalResult::from_confusion(task, confusion)?)
}
