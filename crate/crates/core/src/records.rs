//! Line-delimited record formats shared by the builder, scorer, and
//! evaluation tools.
//!
//! Every file is UTF-8 with one JSON object per line. Readers ignore unknown
//! fields (forward compatibility) and skip blank lines plus the optional
//! `{"meta": ...}` header line; missing required fields are errors that name
//! the 1-based line.

use std::path::Path;

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::dataset::StratumKey;
use crate::model::{LabelId, TaskKind};
use crate::parser::ReasoningChain;
use crate::reward::RewardVector;

/// Format tag written into every dataset file header.
pub const DATASET_FORMAT: &str = "cot-forge.dataset.v1";

/// Informational header for dataset files. The SFT fields describe the
/// downstream training recipe the data targets; nothing in this toolkit
/// consumes them.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DatasetMeta {
    pub format: String,
    pub sft_max_token_length: u32,
    pub sft_epochs: u32,
}

impl Default for DatasetMeta {
    fn default() -> Self {
        Self { format: DATASET_FORMAT.to_string(), sft_max_token_length: 2048, sft_epochs: 3 }
    }
}

/// Wire shape of the header line.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MetaLine {
    pub meta: DatasetMeta,
}

/// One model response tied to its sample. The analysis fields are optional
/// memos: when present they must equal what re-deriving from `text` yields.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CandidateResponse {
    pub sample_id: String,
    pub text: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub chain: Option<ReasoningChain>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub predicted_label: Option<LabelId>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub rewards: Option<RewardVector>,
}

/// Input to standalone scoring: a candidate carrying its grading context
/// inline so no sample join is needed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CandidateRecord {
    pub sample_id: String,
    pub task: TaskKind,
    pub gold_label: LabelId,
    pub text: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub prompt_text: Option<String>,
}

/// Output of standalone scoring.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoredRecord {
    pub sample_id: String,
    pub task: TaskKind,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub prompt_text: Option<String>,
    pub gold_label: LabelId,
    pub text: String,
    pub predicted_label: Option<LabelId>,
    pub stratum: StratumKey,
    pub token_length: u64,
    pub rewards: RewardVector,
}

/// One retained row of a built SFT dataset.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetRecord {
    pub sample_id: String,
    pub task: TaskKind,
    pub prompt_text: String,
    pub gold_label: LabelId,
    pub text: String,
    pub stratum: StratumKey,
    pub token_length: u64,
    pub rewards: RewardVector,
}

#[derive(Debug, thiserror::Error)]
pub enum RecordError {
    #[error("failed to read {path}")]
    Io { path: String, source: std::io::Error },
    #[error("line {line}: {message}")]
    Line { line: usize, message: String },
}

/// True for the `{"meta": ...}` header line. Meta detection is structural so
/// readers stay tolerant of future header fields.
pub fn is_meta_line(line: &str) -> bool {
    serde_json::from_str::<serde_json::Value>(line)
        .ok()
        .and_then(|v| v.get("meta").map(|_| ()))
        .is_some()
}

/// Serialize one record as a single line (no trailing newline).
pub fn to_json_line<T: Serialize>(value: &T) -> String {
    serde_json::to_string(value).expect("records serialize to JSON")
}

/// Parse every record line of `text`, skipping blank and meta lines.
/// Errors carry the 1-based physical line number.
pub fn parse_jsonl<T: DeserializeOwned>(text: &str) -> Result<Vec<T>, RecordError> {
    let mut out = Vec::new();
    for (record, _) in parse_jsonl_numbered(text)? {
        out.push(record);
    }
    Ok(out)
}

/// As `parse_jsonl`, but each record keeps its 1-based line number so callers
/// can report positions in their own diagnostics.
pub fn parse_jsonl_numbered<T: DeserializeOwned>(
    text: &str,
) -> Result<Vec<(T, usize)>, RecordError> {
    let mut out = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let line_no = i + 1;
        if line.trim().is_empty() || is_meta_line(line) {
            continue;
        }
        let record = serde_json::from_str(line)
            .map_err(|e| RecordError::Line { line: line_no, message: e.to_string() })?;
        out.push((record, line_no));
    }
    Ok(out)
}

pub fn read_jsonl<T: DeserializeOwned>(path: &Path) -> Result<Vec<T>, RecordError> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| RecordError::Io { path: path.display().to_string(), source: e })?;
    parse_jsonl(&text)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lexicon::MarkerLexicon;
    use crate::model::Sample;
    use crate::parser::parse_chain;

    #[test]
    fn sample_round_trip_and_forward_compatibility() {
        let sample = Sample {
            id: "s1".to_string(),
            task: TaskKind::Humor,
            prompt_text: "knock knock".to_string(),
            gold_label: 1,
        };
        let line = to_json_line(&sample);
        let back: Vec<Sample> = parse_jsonl(&line).unwrap();
        assert_eq!(back, std::slice::from_ref(&sample));

        let with_extras = line.trim_end().trim_end_matches('}').to_string()
            + ",\"source\":\"corpus-x\",\"split\":2}";
        let back: Vec<Sample> = parse_jsonl(&with_extras).unwrap();
        assert_eq!(back, [sample]);
    }

    #[test]
    fn missing_required_field_names_the_line() {
        let text = "{\"id\":\"a\",\"task\":\"humor\",\"prompt_text\":\"x\",\"gold_label\":1}\n\
                    {\"id\":\"b\",\"task\":\"humor\",\"prompt_text\":\"y\"}\n";
        let err = parse_jsonl::<Sample>(text).unwrap_err();
        match err {
            RecordError::Line { line, message } => {
                assert_eq!(line, 2);
                assert!(message.contains("gold_label"), "{message}");
            }
            other => panic!("unexpected error: {other}"),
        }
    }

    #[test]
    fn blank_and_meta_lines_are_skipped_with_true_line_numbers() {
        let meta = to_json_line(&MetaLine { meta: DatasetMeta::default() });
        let text = format!(
            "{meta}\n\n{}\nnot json\n",
            to_json_line(&Sample {
                id: "s".to_string(),
                task: TaskKind::Sentiment,
                prompt_text: "p".to_string(),
                gold_label: 0,
            })
        );
        let err = parse_jsonl::<Sample>(&text).unwrap_err();
        match err {
            RecordError::Line { line, .. } => assert_eq!(line, 4),
            other => panic!("unexpected error: {other}"),
        }
        assert!(is_meta_line(&meta));
        assert!(!is_meta_line("{\"id\":\"s\"}"));
    }

    #[test]
    fn candidate_response_round_trips_with_memoized_analysis() {
        let chain = parse_chain("First, split. The answer is 1.", &MarkerLexicon::default()).unwrap();
        let candidate = CandidateResponse {
            sample_id: "s9".to_string(),
            text: chain.text.clone(),
            chain: Some(chain),
            predicted_label: Some(1),
            rewards: Some(RewardVector {
                accuracy: 1.0,
                depth: 0.0,
                diversity: 0.2,
                repetition_penalty: 0.0,
                composite: 1.04,
            }),
        };
        let line = to_json_line(&candidate);
        let back: Vec<CandidateResponse> = parse_jsonl(&line).unwrap();
        assert_eq!(back, [candidate]);

        let bare = CandidateResponse {
            sample_id: "s10".to_string(),
            text: "1".to_string(),
            chain: None,
            predicted_label: None,
            rewards: None,
        };
        let line = to_json_line(&bare);
        assert!(!line.contains("chain"), "{line}");
        let back: Vec<CandidateResponse> = parse_jsonl(&line).unwrap();
        assert_eq!(back, [bare]);
    }

    #[test]
    fn dataset_record_serializes_fields_in_contract_order() {
        let record = DatasetRecord {
            sample_id: "s1".to_string(),
            task: TaskKind::Emotion,
            prompt_text: "p".to_string(),
            gold_label: 4,
            text: "the answer is 4".to_string(),
            stratum: StratumKey::default(),
            token_length: 4,
            rewards: RewardVector {
                accuracy: 1.0,
                depth: 0.0,
                diversity: 0.0,
                repetition_penalty: 0.0,
                composite: 1.0,
            },
        };
        let line = to_json_line(&record);
        let order = [
            "sample_id",
            "task",
            "prompt_text",
            "gold_label",
            "text",
            "stratum",
            "token_length",
            "rewards",
        ];
        let positions: Vec<usize> =
            order.iter().map(|k| line.find(&format!("\"{k}\"")).expect(k)).collect();
        assert!(positions.windows(2).all(|w| w[0] < w[1]), "{line}");

        let back: Vec<DatasetRecord> = parse_jsonl(&line).unwrap();
        assert_eq!(back, [record]);
    }

    #[test]
    fn read_jsonl_reports_the_path_on_io_errors() {
        let err = read_jsonl::<Sample>(Path::new("/nonexistent/z.samples")).unwrap_err();
        assert!(err.to_string().contains("/nonexistent/z.samples"));
    }
}
