//! Experiment execution: every (model, prompt variant, stimulus) cell is
//! run against a backend, collecting the generation and, when configured,
//! the target's probability payload.
//!
//! Independent mode gives each stimulus a fresh two-message dialogue
//! (system = instruction, user = rendered stimulus). Sequential mode grows
//! one dialogue per variant: the task plugin's feedback about turn t is
//! prepended to turn t+1's stimulus, and target scoring conditions on
//! exactly the dialogue prefix the generation saw.
//!
//! Results stream to an append-only, newline-delimited log headed by the
//! resolved config and its hash. Cells execute in parallel up to the
//! configured concurrency limit, but a single writer commits whole cells in
//! canonical order, so two runs of the same experiment produce
//! byte-identical logs apart from timestamps. Failures are recorded, not
//! fatal; `resume` re-plans only the cells with no records at all.

use std::collections::{BTreeMap, BTreeSet, VecDeque};
use std::io::Write;
use std::path::{Path, PathBuf};
use std::sync::mpsc;
use std::sync::{Arc, Mutex};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::llm::{Backend, ChatMessage, TargetScore};
use crate::permute::{enumerate_variants, render_data, PermuteError, PromptVariant};
use crate::scoring::ParserRule;
use crate::spec::{DialogueMode, ExperimentSpec, SpecError};
use crate::tasks::{self, TaskError, TaskPlugin};

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum RunnerError {
    #[error("cannot access {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("run log was written under config hash {expected}, current spec hashes to {found}")]
    ConfigMismatch { expected: String, found: String },
    #[error("malformed run log {path} line {line}: {detail}")]
    MalformedLog { path: String, line: usize, detail: String },
    #[error("no backend supplied for endpoint label `{0}`")]
    MissingBackend(String),
    #[error("spec dialogue mode is {actual:?}, expected {expected:?}")]
    ModeMismatch { expected: DialogueMode, actual: DialogueMode },
    #[error(transparent)]
    Spec(#[from] SpecError),
    #[error(transparent)]
    Task(#[from] TaskError),
    #[error(transparent)]
    Template(#[from] PermuteError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TrialStatus {
    Ok,
    Failed,
}

/// One model interaction, as logged.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrialRecord {
    pub experiment_name: String,
    pub model_label: String,
    pub variant_id: String,
    pub stimulus_id: String,
    pub turn_index: usize,
    pub dialogue_mode: DialogueMode,
    pub raw_output: String,
    pub parsed_answer: Option<String>,
    pub target: String,
    pub probability_payload: Option<TargetScore>,
    /// Task-specific label (e.g. WCST correct/preservation/other).
    pub classification: Option<String>,
    pub timestamp_ms: u64,
    pub attempt_count: u32,
    pub status: TrialStatus,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub error: Option<String>,
    /// Set when the backend could not score the target (logprobs
    /// unavailable); the trial stands generation-only and reports flag it.
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub score_error: Option<String>,
}

impl TrialRecord {
    /// The uniqueness key within a run log.
    pub fn key(&self) -> (String, String, String, usize) {
        (self.model_label.clone(), self.variant_id.clone(), self.stimulus_id.clone(), self.turn_index)
    }
}

/// First line of every run log: full resolved config, seed, schema version.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunHeader {
    pub schema_version: u32,
    pub experiment_name: String,
    pub config_hash: String,
    pub seed: u64,
    pub dialogue_mode: DialogueMode,
    pub model_labels: Vec<String>,
    pub variant_ids: Vec<String>,
    pub n_stimuli: usize,
    pub score_targets: bool,
    pub created_ms: u64,
    pub resolved_config: serde_json::Value,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
enum LogLine {
    Header(RunHeader),
    Trial(TrialRecord),
}

/// An executed (or loaded) run: header plus records.
#[derive(Debug, Clone, PartialEq)]
pub struct RunLog {
    pub header: RunHeader,
    pub records: Vec<TrialRecord>,
}

impl RunLog {
    /// Parse a log file. A torn final line (interrupted write) is dropped;
    /// torn lines elsewhere are errors.
    pub fn read(path: &Path) -> Result<Self, RunnerError> {
        let text = std::fs::read_to_string(path)
            .map_err(|source| RunnerError::Io { path: path.display().to_string(), source })?;
        let lines: Vec<&str> = text.lines().collect();
        let mut header = None;
        let mut records = Vec::new();
        for (i, line) in lines.iter().enumerate() {
            if line.trim().is_empty() {
                continue;
            }
            match serde_json::from_str::<LogLine>(line) {
                Ok(LogLine::Header(h)) => {
                    if header.is_some() {
                        return Err(RunnerError::MalformedLog {
                            path: path.display().to_string(),
                            line: i + 1,
                            detail: "second header record".into(),
                        });
                    }
                    if !records.is_empty() {
                        return Err(RunnerError::MalformedLog {
                            path: path.display().to_string(),
                            line: i + 1,
                            detail: "header must be the first record".into(),
                        });
                    }
                    header = Some(h);
                }
                Ok(LogLine::Trial(record)) => {
                    if header.is_none() {
                        return Err(RunnerError::MalformedLog {
                            path: path.display().to_string(),
                            line: i + 1,
                            detail: "trial record before header".into(),
                        });
                    }
                    records.push(record);
                }
                Err(e) => {
                    if i + 1 == lines.len() {
                        break; // torn tail from an interrupted append
                    }
                    return Err(RunnerError::MalformedLog {
                        path: path.display().to_string(),
                        line: i + 1,
                        detail: e.to_string(),
                    });
                }
            }
        }
        let header = header.ok_or_else(|| RunnerError::MalformedLog {
            path: path.display().to_string(),
            line: 1,
            detail: "log has no header record".into(),
        })?;
        Ok(Self { header, records })
    }

    /// Replay to the unique run state: one record per
    /// (model, variant, stimulus, turn) key, last record winning.
    pub fn replay(&self) -> BTreeMap<(String, String, String, usize), &TrialRecord> {
        self.records.iter().map(|r| (r.key(), r)).collect()
    }
}

/// Execution options.
#[derive(Debug, Clone, Default)]
pub struct RunOptions {
    /// Append records here; None keeps the run in memory only.
    pub log_path: Option<PathBuf>,
    /// Skip cells that already have records in the existing log.
    pub resume: bool,
    /// Progress lines on standard error.
    pub progress: bool,
}

/// Run the experiment against one backend per endpoint label.
pub fn run(
    spec: &ExperimentSpec,
    backends: &BTreeMap<String, Arc<dyn Backend>>,
    options: &RunOptions,
) -> Result<RunLog, RunnerError> {
    let variants = enumerate_variants(&spec.prompt)?;
    run_with_variants(spec, backends, &variants, options)
}

/// Independent-mode convenience wrapper: one backend standing in for the
/// spec's first endpoint, run held in memory.
pub fn run_independent(
    spec: &ExperimentSpec,
    backend: Arc<dyn Backend>,
    variants: &[PromptVariant],
) -> Result<RunLog, RunnerError> {
    if spec.metadata.dialogue_mode != DialogueMode::Independent {
        return Err(RunnerError::ModeMismatch {
            expected: DialogueMode::Independent,
            actual: spec.metadata.dialogue_mode,
        });
    }
    let backends = single_backend(spec, backend);
    run_with_variants(spec, &backends, variants, &RunOptions::default())
}

/// Sequential-mode convenience wrapper with an explicit task plugin.
pub fn run_sequential(
    spec: &ExperimentSpec,
    backend: Arc<dyn Backend>,
    variants: &[PromptVariant],
    task_plugin: Arc<dyn TaskPlugin>,
) -> Result<RunLog, RunnerError> {
    if spec.metadata.dialogue_mode != DialogueMode::Sequential {
        return Err(RunnerError::ModeMismatch {
            expected: DialogueMode::Sequential,
            actual: spec.metadata.dialogue_mode,
        });
    }
    let backends = single_backend(spec, backend);
    execute(spec, &backends, variants, Some(task_plugin), &RunOptions::default())
}

/// Complete the missing cells of an interrupted run. The log's header must
/// hash-match the current spec.
pub fn resume(
    log_path: &Path,
    spec: &ExperimentSpec,
    backends: &BTreeMap<String, Arc<dyn Backend>>,
) -> Result<RunLog, RunnerError> {
    run(spec, backends, &RunOptions { log_path: Some(log_path.to_path_buf()), resume: true, progress: false })
}

fn single_backend(spec: &ExperimentSpec, backend: Arc<dyn Backend>) -> BTreeMap<String, Arc<dyn Backend>> {
    spec.metadata.endpoints.iter().map(|e| (e.label.clone(), Arc::clone(&backend))).collect()
}

fn run_with_variants(
    spec: &ExperimentSpec,
    backends: &BTreeMap<String, Arc<dyn Backend>>,
    variants: &[PromptVariant],
    options: &RunOptions,
) -> Result<RunLog, RunnerError> {
    let plugin = match spec.metadata.dialogue_mode {
        DialogueMode::Sequential => {
            let task = spec.metadata.task.as_deref().ok_or_else(|| {
                RunnerError::Task(TaskError::InvalidParams {
                    detail: "sequential dialogue mode requires metadata.task".into(),
                })
            })?;
            Some(tasks::plugin_for(task, spec)?)
        }
        DialogueMode::Independent => None,
    };
    execute(spec, backends, variants, plugin, options)
}

/// A unit of parallel work: one dialogue (sequential) or one
/// (variant, stimulus) pair (independent).
#[derive(Debug, Clone)]
enum Cell {
    Independent { model: String, variant: usize, stimulus: usize },
    Sequential { model: String, variant: usize },
}

struct RunContext<'a> {
    spec: &'a ExperimentSpec,
    variants: &'a [PromptVariant],
    plugin: Option<Arc<dyn TaskPlugin>>,
    parser: Option<ParserRule>,
    target_column: Option<String>,
}

fn execute(
    spec: &ExperimentSpec,
    backends: &BTreeMap<String, Arc<dyn Backend>>,
    variants: &[PromptVariant],
    plugin: Option<Arc<dyn TaskPlugin>>,
    options: &RunOptions,
) -> Result<RunLog, RunnerError> {
    for endpoint in &spec.metadata.endpoints {
        if !backends.contains_key(&endpoint.label) {
            return Err(RunnerError::MissingBackend(endpoint.label.clone()));
        }
    }

    // Canonical cell order: model-major, then variant, then stimulus.
    let mut cells = Vec::new();
    for endpoint in &spec.metadata.endpoints {
        for (v, _) in variants.iter().enumerate() {
            match spec.metadata.dialogue_mode {
                DialogueMode::Independent => {
                    for s in 0..spec.stimuli.len() {
                        cells.push(Cell::Independent { model: endpoint.label.clone(), variant: v, stimulus: s });
                    }
                }
                DialogueMode::Sequential => cells.push(Cell::Sequential { model: endpoint.label.clone(), variant: v }),
            }
        }
    }

    // Resume: drop cells that already have records.
    let mut existing_records = Vec::new();
    let mut reuse_header = None;
    if options.resume {
        if let Some(path) = &options.log_path {
            if path.exists() {
                let previous = RunLog::read(path)?;
                let current_hash = spec.config_hash();
                if previous.header.config_hash != current_hash {
                    return Err(RunnerError::ConfigMismatch {
                        expected: previous.header.config_hash.clone(),
                        found: current_hash,
                    });
                }
                let done: BTreeSet<(String, String, Option<String>)> = previous
                    .records
                    .iter()
                    .map(|r| match spec.metadata.dialogue_mode {
                        DialogueMode::Independent => {
                            (r.model_label.clone(), r.variant_id.clone(), Some(r.stimulus_id.clone()))
                        }
                        DialogueMode::Sequential => (r.model_label.clone(), r.variant_id.clone(), None),
                    })
                    .collect();
                cells.retain(|cell| {
                    let key = match cell {
                        Cell::Independent { model, variant, stimulus } => (
                            model.clone(),
                            variants[*variant].variant_id.to_string(),
                            Some(spec.stimuli.rows[*stimulus][&spec.stimuli.id_column].clone()),
                        ),
                        Cell::Sequential { model, variant } => {
                            (model.clone(), variants[*variant].variant_id.to_string(), None)
                        }
                    };
                    !done.contains(&key)
                });
                existing_records = previous.records;
                reuse_header = Some(previous.header);
            }
        }
    }

    let header = match reuse_header {
        Some(header) => header,
        None => RunHeader {
            schema_version: SCHEMA_VERSION,
            experiment_name: spec.metadata.experiment_name.clone(),
            config_hash: spec.config_hash(),
            seed: spec.metadata.seed,
            dialogue_mode: spec.metadata.dialogue_mode,
            model_labels: spec.metadata.endpoints.iter().map(|e| e.label.clone()).collect(),
            variant_ids: variants.iter().map(|v| v.variant_id.to_string()).collect(),
            n_stimuli: spec.stimuli.len(),
            score_targets: spec.metadata.score_targets,
            created_ms: now_ms(),
            resolved_config: serde_json::to_value(spec.to_config_doc("stimuli.csv")).expect("config serializes"),
        },
    };

    // Open the log; write the header only for fresh logs.
    let mut log_file = match &options.log_path {
        Some(path) => {
            if let Some(parent) = path.parent() {
                if !parent.as_os_str().is_empty() {
                    std::fs::create_dir_all(parent)
                        .map_err(|source| RunnerError::Io { path: parent.display().to_string(), source })?;
                }
            }
            // a non-resume run starts the log over; resume appends
            let fresh = !(options.resume && path.exists());
            let mut open = std::fs::OpenOptions::new();
            if fresh {
                open.create(true).write(true).truncate(true);
            } else {
                open.append(true);
            }
            let mut file = open
                .open(path)
                .map_err(|source| RunnerError::Io { path: path.display().to_string(), source })?;
            if fresh {
                let line = serde_json::to_string(&LogLine::Header(header.clone())).expect("header serializes");
                writeln!(file, "{line}").map_err(|source| RunnerError::Io { path: path.display().to_string(), source })?;
                file.flush().map_err(|source| RunnerError::Io { path: path.display().to_string(), source })?;
            }
            Some((file, path.display().to_string()))
        }
        None => None,
    };

    let context = RunContext {
        spec,
        variants,
        plugin,
        parser: spec.answer_parser(),
        target_column: spec.designated_target_column().map(str::to_string),
    };

    // Parallel execution with a single ordered writer: workers pull cells
    // from a shared queue, the writer commits whole cells in index order so
    // log bytes do not depend on scheduling.
    let total = cells.len();
    let worker_count = spec.metadata.concurrency_limit.min(total.max(1));
    let queue: Mutex<VecDeque<(usize, Cell)>> = Mutex::new(cells.into_iter().enumerate().collect());
    let (sender, receiver) = mpsc::channel::<(usize, Vec<TrialRecord>)>();

    let mut new_records: Vec<TrialRecord> = Vec::new();
    let mut result: Result<(), RunnerError> = Ok(());
    std::thread::scope(|scope| {
        for _ in 0..worker_count {
            let sender = sender.clone();
            let queue = &queue;
            let context = &context;
            scope.spawn(move || loop {
                let (index, cell) = match queue.lock().expect("queue lock").pop_front() {
                    Some(item) => item,
                    None => break,
                };
                let backend = match &cell {
                    Cell::Independent { model, .. } | Cell::Sequential { model, .. } => {
                        Arc::clone(&backends[model])
                    }
                };
                let records = run_cell(context, &cell, backend.as_ref());
                if sender.send((index, records)).is_err() {
                    break;
                }
            });
        }
        drop(sender);

        // Writer: reorder completions back into canonical order.
        let mut pending: BTreeMap<usize, Vec<TrialRecord>> = BTreeMap::new();
        let mut next = 0usize;
        let mut completed = 0usize;
        for (index, records) in receiver {
            pending.insert(index, records);
            completed += 1;
            if options.progress {
                eprintln!("[run] {completed}/{total} cells complete");
            }
            while let Some(records) = pending.remove(&next) {
                if let Some((file, path)) = log_file.as_mut() {
                    for record in &records {
                        let line = serde_json::to_string(&LogLine::Trial(record.clone())).expect("record serializes");
                        if let Err(source) = writeln!(file, "{line}") {
                            result = Err(RunnerError::Io { path: path.clone(), source });
                            return;
                        }
                    }
                    if let Err(source) = file.flush() {
                        result = Err(RunnerError::Io { path: path.clone(), source });
                        return;
                    }
                }
                new_records.extend(records);
                next += 1;
            }
        }
    });
    result?;

    let mut records = existing_records;
    records.extend(new_records);
    Ok(RunLog { header, records })
}

fn run_cell(context: &RunContext<'_>, cell: &Cell, backend: &dyn Backend) -> Vec<TrialRecord> {
    match cell {
        Cell::Independent { model, variant, stimulus } => {
            vec![run_independent_cell(context, model, *variant, *stimulus, backend)]
        }
        Cell::Sequential { model, variant } => run_sequential_cell(context, model, *variant, backend),
    }
}

fn base_record(context: &RunContext<'_>, model: &str, variant: usize, stimulus_id: &str, turn_index: usize) -> TrialRecord {
    let spec = context.spec;
    let target = context
        .target_column
        .as_deref()
        .and_then(|column| spec.stimuli.value(stimulus_id, column))
        .unwrap_or_default()
        .to_string();
    TrialRecord {
        experiment_name: spec.metadata.experiment_name.clone(),
        model_label: model.to_string(),
        variant_id: context.variants[variant].variant_id.to_string(),
        stimulus_id: stimulus_id.to_string(),
        turn_index,
        dialogue_mode: spec.metadata.dialogue_mode,
        raw_output: String::new(),
        parsed_answer: None,
        target,
        probability_payload: None,
        classification: None,
        timestamp_ms: now_ms(),
        attempt_count: 0,
        status: TrialStatus::Failed,
        error: None,
        score_error: None,
    }
}

/// Score the target over exactly the prefix the generation conditioned on.
/// Score failures never fail the trial: logprob-incapable backends are
/// flagged and the run continues generation-only.
fn fill_score(record: &mut TrialRecord, backend: &dyn Backend, dialogue: &[ChatMessage], score_targets: bool) {
    if !score_targets || record.target.is_empty() {
        return;
    }
    match backend.score_target(dialogue, &record.target) {
        Ok(score) => record.probability_payload = Some(score),
        Err(e) => record.score_error = Some(e.to_string()),
    }
}

fn run_independent_cell(
    context: &RunContext<'_>,
    model: &str,
    variant: usize,
    stimulus: usize,
    backend: &dyn Backend,
) -> TrialRecord {
    let spec = context.spec;
    let row = &spec.stimuli.rows[stimulus];
    let stimulus_id = row[&spec.stimuli.id_column].clone();
    let mut record = base_record(context, model, variant, &stimulus_id, 0);

    let prompt_variant = &context.variants[variant];
    let format = spec.prompt.format(prompt_variant.variant_id.format).expect("variant's format exists");
    let data_text = match render_data(format, row) {
        Ok(text) => text,
        Err(e) => {
            record.error = Some(e.to_string());
            return record;
        }
    };
    let dialogue = vec![
        ChatMessage::system(spec.prompt.instruction_without_marker(prompt_variant.variant_id.paraphrase)),
        ChatMessage::user(data_text),
    ];
    match backend.generate(&dialogue, &spec.metadata.sampling) {
        Ok(completion) => {
            record.status = TrialStatus::Ok;
            record.attempt_count = completion.attempts;
            record.parsed_answer = context.parser.as_ref().and_then(|p| p.parse(&completion.text).ok());
            record.raw_output = completion.text;
            fill_score(&mut record, backend, &dialogue, spec.metadata.score_targets);
        }
        Err(e) => {
            record.attempt_count = e.attempts().unwrap_or(1);
            record.error = Some(e.to_string());
        }
    }
    record
}

fn run_sequential_cell(
    context: &RunContext<'_>,
    model: &str,
    variant: usize,
    backend: &dyn Backend,
) -> Vec<TrialRecord> {
    let spec = context.spec;
    let plugin = context.plugin.as_ref().expect("sequential cells carry a plugin");
    let prompt_variant = &context.variants[variant];
    let format = spec.prompt.format(prompt_variant.variant_id.format).expect("variant's format exists");

    let mut records = Vec::with_capacity(spec.stimuli.len());
    let mut dialogue =
        vec![ChatMessage::system(spec.prompt.instruction_without_marker(prompt_variant.variant_id.paraphrase))];
    let mut pending_feedback: Option<String> = None;

    for (turn_index, row) in spec.stimuli.rows.iter().enumerate() {
        let stimulus_id = row[&spec.stimuli.id_column].clone();
        let mut record = base_record(context, model, variant, &stimulus_id, turn_index);

        let stimulus_text = match render_data(format, row) {
            Ok(text) => text,
            Err(e) => {
                record.error = Some(e.to_string());
                records.push(record);
                break; // a failed turn aborts only this variant's dialogue
            }
        };
        let user_text = match pending_feedback.take() {
            Some(feedback) => format!("{feedback}\n\n{stimulus_text}"),
            None => stimulus_text,
        };
        dialogue.push(ChatMessage::user(user_text));

        match backend.generate(&dialogue, &spec.metadata.sampling) {
            Ok(completion) => {
                record.status = TrialStatus::Ok;
                record.attempt_count = completion.attempts;
                record.parsed_answer = context.parser.as_ref().and_then(|p| p.parse(&completion.text).ok());
                record.classification = plugin.classify(turn_index, record.parsed_answer.as_deref());
                fill_score(&mut record, backend, &dialogue, spec.metadata.score_targets);
                pending_feedback = plugin.feedback(turn_index, record.parsed_answer.as_deref());
                dialogue.push(ChatMessage::assistant(completion.text.clone()));
                record.raw_output = completion.text;
                records.push(record);
            }
            Err(e) => {
                record.attempt_count = e.attempts().unwrap_or(1);
                record.error = Some(e.to_string());
                records.push(record);
                break;
            }
        }
    }
    records
}

fn now_ms() -> u64 {
    std::time::SystemTime::now()
        .duration_since(std::time::UNIX_EPOCH)
        .map(|d| d.as_millis() as u64)
        .unwrap_or(0)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::llm::mock::{FnBackend, MockBackend};
    use crate::llm::Role;
    use crate::spec::load_spec;
    use crate::tasks::{generate_bundle, write_bundle, TaskKind};

    fn load_task(kind: TaskKind, dir: &Path) -> ExperimentSpec {
        let bundle = generate_bundle(kind, 42).unwrap();
        let task_dir = dir.join(kind.name());
        write_bundle(&bundle, &task_dir).unwrap();
        load_spec(&task_dir.join("stimuli.csv"), &task_dir.join("config.json")).unwrap()
    }

    #[test]
    fn one_variant_one_stimulus_is_one_trial() {
        let dir = tempfile::tempdir().unwrap();
        let mut spec = load_task(TaskKind::Flanker, dir.path());
        spec.prompt.instruction_variants.truncate(1);
        spec.prompt.data_formats.truncate(1);
        spec.stimuli.rows.truncate(1);
        let variants = enumerate_variants(&spec.prompt).unwrap();
        let log = run_independent(&spec, Arc::new(MockBackend::fixed("A")), &variants).unwrap();
        assert_eq!(log.records.len(), 1);
        assert_eq!(log.records[0].turn_index, 0);
        assert_eq!(log.records[0].status, TrialStatus::Ok);
    }

    #[test]
    fn independent_dialogues_are_isolated() {
        let dir = tempfile::tempdir().unwrap();
        let mut spec = load_task(TaskKind::Flanker, dir.path());
        spec.stimuli.rows.truncate(4);
        spec.prompt.instruction_variants.truncate(1);
        spec.prompt.data_formats.truncate(2);
        let seen = Arc::new(Mutex::new(Vec::<String>::new()));
        let seen_clone = Arc::clone(&seen);
        let backend = FnBackend::new(move |dialogue: &[ChatMessage]| {
            let user = dialogue.iter().filter(|m| m.role == Role::User).map(|m| m.content.clone()).collect::<Vec<_>>();
            seen_clone.lock().unwrap().push(user.join("\u{1}"));
            "A".to_string()
        });
        let variants = enumerate_variants(&spec.prompt).unwrap();
        run_independent(&spec, Arc::new(backend), &variants).unwrap();

        let letters: Vec<String> = spec.stimuli.rows.iter().map(|r| r["letters"].clone()).collect();
        for dialogue in seen.lock().unwrap().iter() {
            assert_eq!(dialogue.matches('\u{1}').count(), 0, "exactly one user turn per dialogue");
            let mentioned: Vec<&String> = letters.iter().filter(|l| dialogue.contains(*l)).collect();
            assert_eq!(mentioned.len(), 1, "dialogue mentions exactly its own stimulus: {dialogue}");
        }
    }

    #[test]
    fn sequential_turns_are_gap_free_and_feedback_threads_through() {
        let dir = tempfile::tempdir().unwrap();
        let mut spec = load_task(TaskKind::Wcst, dir.path());
        spec.prompt.instruction_variants.truncate(1);
        spec.prompt.data_formats.truncate(1);
        spec.stimuli.rows.truncate(5);
        spec.metadata.score_targets = false;
        let variants = enumerate_variants(&spec.prompt).unwrap();
        let plugin = tasks::plugin_for("wcst", &spec).unwrap();

        // capture dialogues to check the structural shape
        let transcript = Arc::new(Mutex::new(Vec::<usize>::new()));
        let transcript_clone = Arc::clone(&transcript);
        let backend = FnBackend::new(move |dialogue: &[ChatMessage]| {
            transcript_clone.lock().unwrap().push(dialogue.len());
            "1".to_string()
        });
        let log = run_sequential(&spec, Arc::new(backend), &variants, plugin).unwrap();
        assert_eq!(log.records.len(), 5);
        let turns: Vec<usize> = log.records.iter().map(|r| r.turn_index).collect();
        assert_eq!(turns, vec![0, 1, 2, 3, 4]);
        // dialogue grows by user+assistant per turn: lengths 2, 4, 6, ...
        assert_eq!(*transcript.lock().unwrap(), vec![2, 4, 6, 8, 10]);
        for record in &log.records {
            assert!(record.classification.is_some());
        }
    }

    #[test]
    fn sequential_feedback_text_precedes_the_next_stimulus() {
        let dir = tempfile::tempdir().unwrap();
        let mut spec = load_task(TaskKind::Wcst, dir.path());
        spec.prompt.instruction_variants.truncate(1);
        spec.prompt.data_formats.truncate(1);
        spec.stimuli.rows.truncate(3);
        spec.metadata.score_targets = false;
        let variants = enumerate_variants(&spec.prompt).unwrap();
        let plugin = tasks::plugin_for("wcst", &spec).unwrap();
        let correct: Vec<String> = spec.stimuli.rows.iter().map(|r| r["correct_option"].clone()).collect();

        let dialogues = Arc::new(Mutex::new(Vec::<String>::new()));
        let dialogues_clone = Arc::clone(&dialogues);
        let correct_clone = correct.clone();
        let backend = FnBackend::new(move |dialogue: &[ChatMessage]| {
            dialogues_clone.lock().unwrap().push(dialogue.last().unwrap().content.clone());
            let turn = dialogue.iter().filter(|m| m.role == Role::Assistant).count();
            correct_clone[turn].clone()
        });
        run_sequential(&spec, Arc::new(backend), &variants, plugin).unwrap();
        let seen = dialogues.lock().unwrap();
        assert!(!seen[0].starts_with("Correct."), "first turn has no feedback");
        assert!(seen[1].starts_with("Correct.\n\n"), "turn 2 starts with feedback: {}", seen[1]);
        assert!(seen[2].starts_with("Correct.\n\n"));
    }

    /// Delegates to a mock but starts erroring after a fixed number of
    /// generation calls.
    struct FailAfter {
        inner: MockBackend,
        limit: usize,
        calls: std::sync::atomic::AtomicUsize,
    }

    impl Backend for FailAfter {
        fn generate(&self, dialogue: &[ChatMessage], sampling: &crate::llm::Sampling) -> Result<crate::llm::CompletionResult, crate::llm::LlmError> {
            let call = self.calls.fetch_add(1, std::sync::atomic::Ordering::SeqCst);
            if call >= self.limit {
                return Err(crate::llm::LlmError::EndpointUnreachable { attempts: 3, detail: "injected outage".into() });
            }
            self.inner.generate(dialogue, sampling)
        }

        fn score_target(&self, dialogue: &[ChatMessage], target: &str) -> Result<TargetScore, crate::llm::LlmError> {
            self.inner.score_target(dialogue, target)
        }
    }

    #[test]
    fn failures_are_recorded_and_abort_only_their_dialogue() {
        let dir = tempfile::tempdir().unwrap();
        let mut spec = load_task(TaskKind::Wcst, dir.path());
        spec.prompt.instruction_variants.truncate(2);
        spec.prompt.data_formats.truncate(1);
        spec.stimuli.rows.truncate(4);
        spec.metadata.score_targets = false;
        spec.metadata.concurrency_limit = 1; // serial cells: outage lands in dialogue 2
        let variants = enumerate_variants(&spec.prompt).unwrap();
        let plugin = tasks::plugin_for("wcst", &spec).unwrap();
        let backend = FailAfter {
            inner: MockBackend::fixed("1"),
            limit: 6,
            calls: std::sync::atomic::AtomicUsize::new(0),
        };
        let log = run_sequential(&spec, Arc::new(backend), &variants, plugin).unwrap();
        let by_variant = |id: &str| log.records.iter().filter(|r| r.variant_id == id).count();
        assert_eq!(by_variant("p0-f1"), 4, "first dialogue completes");
        assert_eq!(by_variant("p1-f1"), 3, "second dialogue aborted at the failed turn");
        let failed: Vec<&TrialRecord> = log.records.iter().filter(|r| r.status == TrialStatus::Failed).collect();
        assert_eq!(failed.len(), 1);
        assert_eq!(failed[0].variant_id, "p1-f1");
        assert_eq!(failed[0].turn_index, 2);
        assert_eq!(failed[0].attempt_count, 3, "failure records carry the attempt count");
        assert!(failed[0].error.as_deref().unwrap().contains("injected outage"));
    }

    #[test]
    fn run_log_round_trips_through_the_file() {
        let dir = tempfile::tempdir().unwrap();
        let mut spec = load_task(TaskKind::Flanker, dir.path());
        spec.stimuli.rows.truncate(3);
        spec.prompt.instruction_variants.truncate(1);
        spec.prompt.data_formats.truncate(2);
        let log_path = dir.path().join("runlog").join("flanker.ndjson");
        let backends = single_backend(&spec, Arc::new(MockBackend::fixed("A")));
        let options = RunOptions { log_path: Some(log_path.clone()), resume: false, progress: false };
        let log = run(&spec, &backends, &options).unwrap();
        let loaded = RunLog::read(&log_path).unwrap();
        assert_eq!(loaded, log);
        assert_eq!(loaded.records.len(), 6);
        // every key unique
        assert_eq!(loaded.replay().len(), loaded.records.len());
    }

    #[test]
    fn resume_completes_only_missing_cells() {
        let dir = tempfile::tempdir().unwrap();
        let mut spec = load_task(TaskKind::Flanker, dir.path());
        spec.stimuli.rows.truncate(5);
        spec.prompt.instruction_variants.truncate(1);
        spec.prompt.data_formats.truncate(1);
        let log_path = dir.path().join("partial.ndjson");
        let backends = single_backend(&spec, Arc::new(MockBackend::fixed("A")));
        let options = RunOptions { log_path: Some(log_path.clone()), resume: false, progress: false };
        let full = run(&spec, &backends, &options).unwrap();
        assert_eq!(full.records.len(), 5);

        // truncate the log to 1 header + 2 records, then resume
        let text = std::fs::read_to_string(&log_path).unwrap();
        let keep: Vec<&str> = text.lines().take(3).collect();
        std::fs::write(&log_path, keep.join("\n") + "\n").unwrap();
        let resumed = resume(&log_path, &spec, &backends).unwrap();
        assert_eq!(resumed.records.len(), 5);
        let reread = RunLog::read(&log_path).unwrap();
        assert_eq!(reread.records.len(), 5);
        assert_eq!(reread.replay().len(), 5);

        // complete log: idempotent
        let again = resume(&log_path, &spec, &backends).unwrap();
        assert_eq!(again.records.len(), 5);
        assert_eq!(RunLog::read(&log_path).unwrap().records.len(), 5);
    }

    #[test]
    fn resume_rejects_a_different_config() {
        let dir = tempfile::tempdir().unwrap();
        let mut spec = load_task(TaskKind::Flanker, dir.path());
        spec.stimuli.rows.truncate(2);
        spec.prompt.instruction_variants.truncate(1);
        spec.prompt.data_formats.truncate(1);
        let log_path = dir.path().join("log.ndjson");
        let backends = single_backend(&spec, Arc::new(MockBackend::fixed("A")));
        run(&spec, &backends, &RunOptions { log_path: Some(log_path.clone()), resume: false, progress: false }).unwrap();

        spec.metadata.seed = 999; // mismatched seed
        match resume(&log_path, &spec, &backends) {
            Err(RunnerError::ConfigMismatch { .. }) => {}
            other => panic!("expected ConfigMismatch, got {other:?}"),
        }
    }

    #[test]
    fn mock_runs_are_deterministic_modulo_timestamps() {
        let dir = tempfile::tempdir().unwrap();
        let mut spec = load_task(TaskKind::Flanker, dir.path());
        spec.stimuli.rows.truncate(6);
        let variants = enumerate_variants(&spec.prompt).unwrap();
        let a = run_independent(&spec, Arc::new(MockBackend::fixed("A")), &variants).unwrap();
        let b = run_independent(&spec, Arc::new(MockBackend::fixed("A")), &variants).unwrap();
        let strip = |log: &RunLog| {
            log.records
                .iter()
                .map(|r| {
                    let mut r = r.clone();
                    r.timestamp_ms = 0;
                    r
                })
                .collect::<Vec<_>>()
        };
        assert_eq!(strip(&a), strip(&b));
    }
}
