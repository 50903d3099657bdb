//! Rejection-sampling dataset construction.
//!
//! For each sample the builder requests N candidates, keeps those whose
//! extracted label equals gold, annotates them with chain structure and
//! rewards, and appends them to the output file. Progress is durable: the
//! file is flushed after every sample and a sidecar report carries the
//! bookkeeping, so a restart skips every sample id already present in the
//! output.

use std::collections::BTreeMap;
use std::collections::BTreeSet;
use std::io::Write;
use std::path::Path;

use cot_forge_client::ChatClient;
use cot_forge_core::dataset::{
    classify_stratum, dataset_stats, report_sidecar_path, BuildReport, DatasetError, StratumKey,
    DEFAULT_LENGTH_THRESHOLD,
};
use cot_forge_core::model::ModelError;
use cot_forge_core::records::{
    read_jsonl, to_json_line, DatasetMeta, DatasetRecord, MetaLine, RecordError,
};
use cot_forge_core::{
    GenerationConfig, LabelSpaceSet, MarkerLexicon, RewardConfig, Sample, TaskKind,
};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Everything the builder needs besides the endpoint client.
#[derive(Debug, Clone)]
pub struct BuildOptions {
    pub gen: GenerationConfig,
    pub length_threshold: u64,
    /// Downsample every stratum to the smallest non-empty one, per task.
    pub balance: bool,
    /// Seed for the balancing draw; irrelevant when `balance` is false.
    pub seed: u64,
    /// Prompt template; `{text}` expands to the sample's `prompt_text`.
    pub prompt_template: String,
    pub lexicon: MarkerLexicon,
    pub reward_config: RewardConfig,
    pub spaces: LabelSpaceSet,
}

impl Default for BuildOptions {
    fn default() -> Self {
        Self {
            gen: GenerationConfig::sampling(1),
            length_threshold: DEFAULT_LENGTH_THRESHOLD,
            balance: false,
            seed: 0,
            prompt_template: "{text}".to_string(),
            lexicon: MarkerLexicon::default(),
            reward_config: RewardConfig::default(),
            spaces: LabelSpaceSet::default(),
        }
    }
}

#[derive(Debug, thiserror::Error)]
pub enum BuildError {
    #[error("failed to write {path}")]
    Io { path: String, source: std::io::Error },
    #[error(transparent)]
    Dataset(#[from] DatasetError),
    #[error(transparent)]
    Record(#[from] RecordError),
    #[error(transparent)]
    InvalidSample(#[from] ModelError),
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> BuildError + '_ {
    move |source| BuildError::Io { path: path.display().to_string(), source }
}

pub fn render_prompt(template: &str, text: &str) -> String {
    template.replace("{text}", text)
}

/// Build (or extend) the dataset at `out_path`, returning the cumulative
/// report. Endpoint failures are logged and skipped, never fatal.
pub async fn build_sft_dataset(
    samples: &[Sample],
    client: &ChatClient,
    options: &BuildOptions,
    out_path: &Path,
) -> Result<BuildReport, BuildError> {
    options.gen.validate()?;
    for sample in samples {
        sample.validate(&options.spaces)?;
    }

    let mut existing: Vec<DatasetRecord> = Vec::new();
    let mut report = BuildReport::default();
    if out_path.exists() {
        existing = read_jsonl(out_path)?;
        report = dataset_stats(out_path, &options.spaces)?;
    }
    let done_ids: BTreeSet<&str> = existing.iter().map(|r| r.sample_id.as_str()).collect();
    let pending: Vec<&Sample> =
        samples.iter().filter(|s| !done_ids.contains(s.id.as_str())).collect();

    let mut file = std::fs::OpenOptions::new()
        .create(true)
        .append(true)
        .open(out_path)
        .map_err(io_err(out_path))?;
    let mut file_len = file.metadata().map_err(io_err(out_path))?.len();

    let n = options.gen.candidates_per_prompt as usize;
    let mut new_records: Vec<DatasetRecord> = Vec::new();
    for sample in pending {
        let space = options.spaces.get(sample.task);
        let prompts = vec![render_prompt(&options.prompt_template, &sample.prompt_text); n];
        let results = client.complete_batch(&prompts, &options.gen).await;

        report.record_prompt(sample.task);
        let mut generated = 0u64;
        let mut retained: Vec<DatasetRecord> = Vec::new();
        for result in results {
            let text = match result {
                Ok(text) => text,
                Err(e) => {
                    tracing::warn!(sample_id = %sample.id, error = %e, "candidate request failed");
                    continue;
                }
            };
            generated += 1;
            let analysis = match cot_forge_core::analyze_response(
                &text,
                sample.gold_label,
                space,
                &options.reward_config,
                &options.lexicon,
            ) {
                Ok(a) => a,
                Err(e) => {
                    tracing::debug!(sample_id = %sample.id, error = %e, "candidate not scorable");
                    continue;
                }
            };
            if analysis.predicted_label != Some(sample.gold_label) {
                continue;
            }
            retained.push(DatasetRecord {
                sample_id: sample.id.clone(),
                task: sample.task,
                prompt_text: sample.prompt_text.clone(),
                gold_label: sample.gold_label,
                text,
                stratum: classify_stratum(&analysis.chain, options.length_threshold),
                token_length: analysis.chain.token_length as u64,
                rewards: analysis.rewards,
            });
        }

        report.record_generated(sample.task, generated);
        for record in &retained {
            if file_len == 0 {
                let meta = to_json_line(&MetaLine { meta: DatasetMeta::default() });
                file.write_all(meta.as_bytes()).map_err(io_err(out_path))?;
                file.write_all(b"\n").map_err(io_err(out_path))?;
                file_len += meta.len() as u64 + 1;
            }
            let line = to_json_line(record);
            file.write_all(line.as_bytes()).map_err(io_err(out_path))?;
            file.write_all(b"\n").map_err(io_err(out_path))?;
            file_len += line.len() as u64 + 1;
            report.record_retained(record.task, record.stratum, record.token_length);
        }
        file.flush().map_err(io_err(out_path))?;
        new_records.extend(retained);
        write_sidecar(out_path, &report)?;
    }

    if options.balance {
        existing.extend(new_records);
        if !existing.is_empty() {
            report = rebalance(out_path, existing, report, options.seed)?;
        }
    }

    write_sidecar(out_path, &report)?;
    Ok(report)
}

fn write_sidecar(out_path: &Path, report: &BuildReport) -> Result<(), BuildError> {
    let sidecar = report_sidecar_path(out_path);
    let json = serde_json::to_string_pretty(report).expect("report serializes to JSON");
    std::fs::write(&sidecar, json).map_err(io_err(&sidecar))
}

/// Downsample every stratum to its task's smallest non-empty stratum, then
/// rewrite the dataset file in the surviving records' original order. The
/// draw is seeded, so a given (file, seed) pair always keeps the same rows.
fn rebalance(
    out_path: &Path,
    records: Vec<DatasetRecord>,
    mut report: BuildReport,
    seed: u64,
) -> Result<BuildReport, BuildError> {
    let mut by_bucket: BTreeMap<(TaskKind, StratumKey), Vec<usize>> = BTreeMap::new();
    for (i, record) in records.iter().enumerate() {
        by_bucket.entry((record.task, record.stratum)).or_default().push(i);
    }

    let mut floor_per_task: BTreeMap<TaskKind, usize> = BTreeMap::new();
    for ((task, _), indices) in &by_bucket {
        let floor = floor_per_task.entry(*task).or_insert(usize::MAX);
        *floor = (*floor).min(indices.len());
    }

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut keep: Vec<usize> = Vec::new();
    for ((task, _), indices) in &by_bucket {
        let floor = floor_per_task[task];
        if indices.len() <= floor {
            keep.extend(indices);
        } else {
            let chosen = rand::seq::index::sample(&mut rng, indices.len(), floor);
            keep.extend(chosen.iter().map(|j| indices[j]));
        }
    }
    keep.sort_unstable();

    for stats in report.tasks.values_mut() {
        stats.candidates_retained = 0;
        stats.strata = Default::default();
        stats.length_histogram.clear();
    }
    let mut lines = Vec::with_capacity(keep.len() + 1);
    lines.push(to_json_line(&MetaLine { meta: DatasetMeta::default() }));
    for &i in &keep {
        let record = &records[i];
        report.record_retained(record.task, record.stratum, record.token_length);
        lines.push(to_json_line(record));
    }

    let mut tmp_name = out_path.file_name().unwrap_or_default().to_os_string();
    tmp_name.push(".tmp");
    let tmp = out_path.with_file_name(tmp_name);
    std::fs::write(&tmp, lines.join("\n") + "\n").map_err(io_err(&tmp))?;
    std::fs::rename(&tmp, out_path).map_err(io_err(out_path))?;
    Ok(report)
}
