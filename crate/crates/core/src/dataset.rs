//! Stratification, rejection filtering, and dataset bookkeeping.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::model::{LabelSpace, LabelSpaceSet, Sample, TaskKind};
use crate::parser::{extract_label, ReasoningChain};
use crate::records::{parse_jsonl_numbered, DatasetRecord, RecordError};

/// Token-count cutoff between Short and Long chains (Long is strictly
/// greater).
pub const DEFAULT_LENGTH_THRESHOLD: u64 = 100;

/// Width of one length-histogram bucket, in whitespace tokens.
pub const HISTOGRAM_BUCKET_TOKENS: u64 = 25;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Linearity {
    #[default]
    Linear,
    Nonlinear,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LengthClass {
    #[default]
    Short,
    Long,
}

/// One of the four diversity buckets.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Default, Serialize, Deserialize)]
pub struct StratumKey {
    pub linearity: Linearity,
    pub length_class: LengthClass,
}

impl StratumKey {
    pub const ALL: [StratumKey; 4] = [
        StratumKey { linearity: Linearity::Linear, length_class: LengthClass::Short },
        StratumKey { linearity: Linearity::Linear, length_class: LengthClass::Long },
        StratumKey { linearity: Linearity::Nonlinear, length_class: LengthClass::Short },
        StratumKey { linearity: Linearity::Nonlinear, length_class: LengthClass::Long },
    ];
}

impl fmt::Display for StratumKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let lin = match self.linearity {
            Linearity::Linear => "linear",
            Linearity::Nonlinear => "nonlinear",
        };
        let len = match self.length_class {
            LengthClass::Short => "short",
            LengthClass::Long => "long",
        };
        write!(f, "{lin}/{len}")
    }
}

/// Bucket a parsed chain: linearity from its revisiting segments, length by
/// strict comparison against the threshold.
pub fn classify_stratum(chain: &ReasoningChain, length_threshold: u64) -> StratumKey {
    StratumKey {
        linearity: if chain.is_nonlinear() { Linearity::Nonlinear } else { Linearity::Linear },
        length_class: if chain.token_length as u64 > length_threshold {
            LengthClass::Long
        } else {
            LengthClass::Short
        },
    }
}

/// Keep exactly the candidates whose extracted label equals the gold label.
/// Unparseable and out-of-range candidates are dropped silently.
pub fn rejection_filter<'a>(
    sample: &Sample,
    candidates: &'a [String],
    space: &LabelSpace,
) -> Vec<&'a str> {
    candidates
        .iter()
        .filter(|text| extract_label(text, space) == Ok(sample.gold_label))
        .map(String::as_str)
        .collect()
}

/// Retained-candidate counts per stratum.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct StratumCounts {
    pub linear_short: u64,
    pub linear_long: u64,
    pub nonlinear_short: u64,
    pub nonlinear_long: u64,
}

impl StratumCounts {
    pub fn get(&self, key: StratumKey) -> u64 {
        *self.slot(key)
    }

    pub fn bump(&mut self, key: StratumKey) {
        *self.slot_mut(key) += 1;
    }

    pub fn total(&self) -> u64 {
        self.linear_short + self.linear_long + self.nonlinear_short + self.nonlinear_long
    }

    fn slot(&self, key: StratumKey) -> &u64 {
        match (key.linearity, key.length_class) {
            (Linearity::Linear, LengthClass::Short) => &self.linear_short,
            (Linearity::Linear, LengthClass::Long) => &self.linear_long,
            (Linearity::Nonlinear, LengthClass::Short) => &self.nonlinear_short,
            (Linearity::Nonlinear, LengthClass::Long) => &self.nonlinear_long,
        }
    }

    fn slot_mut(&mut self, key: StratumKey) -> &mut u64 {
        match (key.linearity, key.length_class) {
            (Linearity::Linear, LengthClass::Short) => &mut self.linear_short,
            (Linearity::Linear, LengthClass::Long) => &mut self.linear_long,
            (Linearity::Nonlinear, LengthClass::Short) => &mut self.nonlinear_short,
            (Linearity::Nonlinear, LengthClass::Long) => &mut self.nonlinear_long,
        }
    }
}

/// Per-task build bookkeeping.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct TaskBuildStats {
    pub prompts_seen: u64,
    pub candidates_generated: u64,
    pub candidates_retained: u64,
    pub acceptance_rate: f64,
    pub strata: StratumCounts,
    /// Retained-chain token lengths, bucketed by `HISTOGRAM_BUCKET_TOKENS`.
    pub length_histogram: Vec<u64>,
}

impl TaskBuildStats {
    fn refresh_rate(&mut self) {
        self.acceptance_rate = if self.candidates_generated == 0 {
            0.0
        } else {
            self.candidates_retained as f64 / self.candidates_generated as f64
        };
    }
}

/// Dataset statistics, per task. Serialized next to built datasets and
/// recomputable from the records via `dataset_stats`.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct BuildReport {
    pub tasks: BTreeMap<TaskKind, TaskBuildStats>,
}

impl BuildReport {
    pub fn task_mut(&mut self, task: TaskKind) -> &mut TaskBuildStats {
        self.tasks.entry(task).or_default()
    }

    pub fn record_prompt(&mut self, task: TaskKind) {
        self.task_mut(task).prompts_seen += 1;
    }

    pub fn record_generated(&mut self, task: TaskKind, count: u64) {
        let stats = self.task_mut(task);
        stats.candidates_generated += count;
        stats.refresh_rate();
    }

    pub fn record_retained(&mut self, task: TaskKind, stratum: StratumKey, token_length: u64) {
        let stats = self.task_mut(task);
        stats.candidates_retained += 1;
        stats.strata.bump(stratum);
        let bucket = (token_length / HISTOGRAM_BUCKET_TOKENS) as usize;
        if stats.length_histogram.len() <= bucket {
            stats.length_histogram.resize(bucket + 1, 0);
        }
        stats.length_histogram[bucket] += 1;
        stats.refresh_rate();
    }

    pub fn total_retained(&self) -> u64 {
        self.tasks.values().map(|s| s.candidates_retained).sum()
    }
}

/// Path of the JSON bookkeeping file written beside a dataset.
pub fn report_sidecar_path(dataset_path: &Path) -> PathBuf {
    let mut name = dataset_path.file_name().unwrap_or_default().to_os_string();
    name.push(".report.json");
    dataset_path.with_file_name(name)
}

#[derive(Debug, thiserror::Error)]
pub enum DatasetError {
    #[error("failed to read {path}")]
    Io { path: String, source: std::io::Error },
    #[error("line {line}: {message}")]
    Line { line: usize, message: String },
    #[error("line {line}: record {sample_id} violates rejection soundness (extracted label does not equal gold {gold})")]
    RejectionViolation { line: usize, sample_id: String, gold: u8 },
}

impl From<RecordError> for DatasetError {
    fn from(e: RecordError) -> Self {
        match e {
            RecordError::Io { path, source } => DatasetError::Io { path, source },
            RecordError::Line { line, message } => DatasetError::Line { line, message },
        }
    }
}

/// Recompute a `BuildReport` from a stored dataset, re-verifying rejection
/// soundness on every record. Generation counts are not derivable from
/// retained records alone, so they are taken from the sidecar report when it
/// exists; otherwise `candidates_generated` falls back to the retained count
/// and `prompts_seen` to the distinct sample ids.
pub fn dataset_stats(path: &Path, spaces: &LabelSpaceSet) -> Result<BuildReport, DatasetError> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| DatasetError::Io { path: path.display().to_string(), source: e })?;
    let records: Vec<(DatasetRecord, usize)> = parse_jsonl_numbered(&text)?;

    let sidecar: Option<BuildReport> = match std::fs::read_to_string(report_sidecar_path(path)) {
        Ok(json) => Some(serde_json::from_str(&json).map_err(|e| DatasetError::Line {
            line: 1,
            message: format!("sidecar report: {e}"),
        })?),
        Err(_) => None,
    };

    let mut report = BuildReport::default();
    let mut ids_by_task: BTreeMap<TaskKind, BTreeSet<String>> = BTreeMap::new();
    for (record, line) in records {
        let space = spaces.get(record.task);
        if extract_label(&record.text, space) != Ok(record.gold_label) {
            return Err(DatasetError::RejectionViolation {
                line,
                sample_id: record.sample_id,
                gold: record.gold_label,
            });
        }
        ids_by_task.entry(record.task).or_default().insert(record.sample_id.clone());
        report.record_retained(record.task, record.stratum, record.token_length);
    }

    for (task, stats) in &mut report.tasks {
        let from_sidecar = sidecar.as_ref().and_then(|r| r.tasks.get(task));
        match from_sidecar {
            Some(s) => {
                stats.prompts_seen = s.prompts_seen;
                stats.candidates_generated = s.candidates_generated;
            }
            None => {
                stats.prompts_seen = ids_by_task.get(task).map_or(0, BTreeSet::len) as u64;
                stats.candidates_generated = stats.candidates_retained;
            }
        }
        stats.refresh_rate();
    }
    Ok(report)
}

/// Human-readable report: one summary row per task, plus a sparse histogram
/// line for each task that has retained records.
pub fn render_build_report(report: &BuildReport) -> String {
    let mut out = String::new();
    out.push_str(&format!(
        "{:<9}  {:>7}  {:>9}  {:>8}  {:>6}  {:>9}  {:>8}  {:>12}  {:>11}\n",
        "task",
        "prompts",
        "generated",
        "retained",
        "accept",
        "lin/short",
        "lin/long",
        "nonlin/short",
        "nonlin/long"
    ));
    for (task, stats) in &report.tasks {
        out.push_str(&format!(
            "{:<9}  {:>7}  {:>9}  {:>8}  {:>6.3}  {:>9}  {:>8}  {:>12}  {:>11}\n",
            task.as_str(),
            stats.prompts_seen,
            stats.candidates_generated,
            stats.candidates_retained,
            stats.acceptance_rate,
            stats.strata.linear_short,
            stats.strata.linear_long,
            stats.strata.nonlinear_short,
            stats.strata.nonlinear_long
        ));
    }
    for (task, stats) in &report.tasks {
        if stats.candidates_retained == 0 {
            continue;
        }
        let buckets: Vec<String> = stats
            .length_histogram
            .iter()
            .enumerate()
            .filter(|(_, &count)| count > 0)
            .map(|(i, count)| format!("{}:{count}", i as u64 * HISTOGRAM_BUCKET_TOKENS))
            .collect();
        out.push_str(&format!(
            "{} length histogram (bucket {} tokens): {}\n",
            task.as_str(),
            HISTOGRAM_BUCKET_TOKENS,
            buckets.join(" ")
        ));
    }
    out
}
