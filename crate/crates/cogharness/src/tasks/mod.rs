//! Built-in experiments: stimulus generators, scorers, dialogue plugins,
//! and ready-to-run experiment bundles.
//!
//! Every generator is pure given (seed, parameters), and all materials
//! export to the standard stimuli CSV, so built-in and user-defined
//! experiments flow through the same pipeline. Sequential tasks (WCST, DRM)
//! additionally provide a [`TaskPlugin`] that classifies answers and
//! produces the between-turn feedback.

pub mod drm;
mod drm_words;
pub mod flanker;
pub mod span;
pub mod wcst;

use std::collections::BTreeSet;
use std::path::Path;
use std::sync::Arc;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::llm::Sampling;
use crate::spec::{
    ConfigDoc, DialogueMode, Direction as PredictedDirection, EndpointSpec, ExperimentMetadata, ExperimentSpec,
    FormatsDoc, Group, MetricDoc, Prediction, PromptDoc, SpecError, StimuliRef, StimulusTable,
};

#[derive(Debug, Error)]
pub enum TaskError {
    #[error("no block-length assignment over [{feasible_min}, {feasible_max}] sums to {total_trials}")]
    InfeasibleSchedule { total_trials: usize, feasible_min: usize, feasible_max: usize },
    #[error("answer {0} is outside options 1..4")]
    OutOfRangeAnswer(u8),
    #[error("word `{word}` overlaps study material: {context}")]
    Overlap { word: String, context: String },
    #[error("invalid parameters: {detail}")]
    InvalidParams { detail: String },
    #[error("stimuli table lacks column `{column}` required by the {task} plugin")]
    MissingColumn { column: String, task: String },
    #[error(transparent)]
    Spec(#[from] SpecError),
}

/// Seeded RNG with a per-purpose stream, so one experiment seed drives many
/// independent random choices reproducibly.
pub(crate) fn derive_rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

/// Hooks a sequential dialogue needs from its task: classify each parsed
/// answer and phrase the feedback prepended to the next turn's stimulus.
pub trait TaskPlugin: Send + Sync {
    fn name(&self) -> &'static str;

    /// Classification label recorded on the trial (e.g. WCST
    /// correct/preservation/other). None when the task does not classify or
    /// the answer was unparsable.
    fn classify(&self, turn_index: usize, parsed_answer: Option<&str>) -> Option<String>;

    /// Feedback about turn `turn_index`, shown before turn + 1's stimulus.
    /// None means the task gives no feedback (static quiz turns).
    fn feedback(&self, turn_index: usize, parsed_answer: Option<&str>) -> Option<String>;
}

/// Task plugins available to sequential experiments.
pub fn is_registered_plugin(name: &str) -> bool {
    matches!(name, "wcst" | "drm")
}

/// Build the plugin named in the spec's metadata from its stimuli table.
pub fn plugin_for(name: &str, spec: &ExperimentSpec) -> Result<Arc<dyn TaskPlugin>, TaskError> {
    match name {
        "wcst" => Ok(Arc::new(WcstPlugin::from_table(&spec.stimuli)?)),
        "drm" => Ok(Arc::new(DrmPlugin)),
        other => Err(TaskError::InvalidParams { detail: format!("unknown task plugin `{other}`") }),
    }
}

/// WCST playback: answers scored against the correct and previous-rule
/// options stored per row. Turn order is stimuli row order.
pub struct WcstPlugin {
    correct: Vec<u8>,
    previous: Vec<Option<u8>>,
}

impl WcstPlugin {
    pub fn from_table(table: &StimulusTable) -> Result<Self, TaskError> {
        for column in ["correct_option", "previous_option"] {
            if !table.columns.iter().any(|c| c == column) {
                return Err(TaskError::MissingColumn { column: column.into(), task: "wcst".into() });
            }
        }
        let mut correct = Vec::with_capacity(table.len());
        let mut previous = Vec::with_capacity(table.len());
        for row in &table.rows {
            let value = row["correct_option"].parse::<u8>().map_err(|_| TaskError::InvalidParams {
                detail: format!("bad correct_option `{}`", row["correct_option"]),
            })?;
            correct.push(value);
            let prev = row["previous_option"].trim();
            previous.push(if prev.is_empty() {
                None
            } else {
                Some(prev.parse::<u8>().map_err(|_| TaskError::InvalidParams {
                    detail: format!("bad previous_option `{prev}`"),
                })?)
            });
        }
        Ok(Self { correct, previous })
    }

    fn outcome(&self, turn_index: usize, parsed_answer: Option<&str>) -> Option<&'static str> {
        let answer = parsed_answer?.trim().parse::<u8>().ok()?;
        let correct = *self.correct.get(turn_index)?;
        Some(if answer == correct {
            "correct"
        } else if self.previous.get(turn_index).copied().flatten() == Some(answer) {
            "preservation"
        } else {
            // includes digits outside 1..4: an error, but not a previous-rule one
            "other"
        })
    }
}

impl TaskPlugin for WcstPlugin {
    fn name(&self) -> &'static str {
        "wcst"
    }

    fn classify(&self, turn_index: usize, parsed_answer: Option<&str>) -> Option<String> {
        self.outcome(turn_index, parsed_answer).map(str::to_string)
    }

    fn feedback(&self, turn_index: usize, parsed_answer: Option<&str>) -> Option<String> {
        let text = match self.outcome(turn_index, parsed_answer) {
            Some("correct") => "Correct.",
            // wrong, out of range, or unparsable: correctness feedback only
            _ => "Incorrect.",
        };
        Some(text.to_string())
    }
}

/// DRM quiz turns are static: no classification beyond the stimuli labels,
/// no feedback between turns.
pub struct DrmPlugin;

impl TaskPlugin for DrmPlugin {
    fn name(&self) -> &'static str {
        "drm"
    }

    fn classify(&self, _turn_index: usize, _parsed_answer: Option<&str>) -> Option<String> {
        None
    }

    fn feedback(&self, _turn_index: usize, _parsed_answer: Option<&str>) -> Option<String> {
        None
    }
}

/// The five built-in experiments.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TaskKind {
    Wcst,
    Flanker,
    SpanForward,
    SpanBackward,
    Drm,
}

impl TaskKind {
    pub fn parse(name: &str) -> Option<Self> {
        match name {
            "wcst" => Some(Self::Wcst),
            "flanker" => Some(Self::Flanker),
            "span-forward" | "span_forward" => Some(Self::SpanForward),
            "span-backward" | "span_backward" => Some(Self::SpanBackward),
            "drm" => Some(Self::Drm),
            _ => None,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Self::Wcst => "wcst",
            Self::Flanker => "flanker",
            Self::SpanForward => "span_forward",
            Self::SpanBackward => "span_backward",
            Self::Drm => "drm",
        }
    }
}

/// Parameters for the WCST schedule, exposed because the classic design is
/// over-constrained: six blocks of 10-15 trials cannot sum to 102, so the
/// shipped default uses six blocks of exactly 17.
#[derive(Debug, Clone)]
pub struct WcstConfig {
    pub rule_order: Vec<wcst::Rule>,
    pub block_range: (usize, usize),
    pub total_trials: usize,
}

impl Default for WcstConfig {
    fn default() -> Self {
        Self {
            rule_order: wcst::DEFAULT_RULE_ORDER.to_vec(),
            block_range: wcst::DEFAULT_BLOCK_RANGE,
            total_trials: wcst::DEFAULT_TOTAL_TRIALS,
        }
    }
}

/// Generated materials plus a runnable config skeleton.
#[derive(Debug, Clone)]
pub struct TaskBundle {
    pub kind: TaskKind,
    pub stimuli: StimulusTable,
    pub instructions: Vec<String>,
    pub config: ConfigDoc,
}

/// Generate a built-in experiment with default parameters.
pub fn generate_bundle(kind: TaskKind, seed: u64) -> Result<TaskBundle, TaskError> {
    match kind {
        TaskKind::Wcst => generate_wcst_bundle(seed, &WcstConfig::default()),
        TaskKind::Flanker => generate_flanker_bundle(seed, 32, &flanker::ALLOWED_LENGTHS),
        TaskKind::SpanForward => {
            generate_span_bundle(seed, &span::DEFAULT_LENGTHS, span::DEFAULT_PER_LENGTH, span::Direction::Forward)
        }
        TaskKind::SpanBackward => {
            generate_span_bundle(seed, &span::DEFAULT_LENGTHS, span::DEFAULT_PER_LENGTH, span::Direction::Backward)
        }
        TaskKind::Drm => generate_drm_bundle(seed, &drm::default_study_lists(), 7, &drm::default_control_words()),
    }
}

pub fn generate_wcst_bundle(seed: u64, config: &WcstConfig) -> Result<TaskBundle, TaskError> {
    let schedule = wcst::gen_wcst_schedule(seed, &config.rule_order, config.block_range, config.total_trials)?;
    let trials = wcst::gen_wcst_trials(seed, &schedule);
    let stimuli = wcst::stimulus_table(&trials)?;
    let instructions: Vec<String> = wcst::INSTRUCTIONS.iter().map(|s| s.to_string()).collect();
    let groups = vec![
        group("all", &[]),
        group("rule_color", &[("rule", "color")]),
        group("rule_shape", &[("rule", "shape")]),
        group("rule_count", &[("rule", "count")]),
    ];
    let metrics = vec![
        metric("accuracy", "accuracy", "target", "last_digit"),
        metric("target_probability", "target_probability", "target", "last_digit"),
    ];
    let config_doc = config_doc(
        "wcst",
        DialogueMode::Sequential,
        Some("wcst"),
        groups,
        metrics,
        vec![],
        &["card", "options"],
        Sampling { temperature: 0.0, max_tokens: 8 },
        seed,
    );
    Ok(TaskBundle { kind: TaskKind::Wcst, stimuli, instructions, config: config_doc })
}

pub fn generate_flanker_bundle(seed: u64, n_stimuli: usize, lengths: &[usize]) -> Result<TaskBundle, TaskError> {
    let stimuli_data = flanker::gen_flanker(seed, n_stimuli, lengths)?;
    let stimuli = flanker::stimulus_table(&stimuli_data)?;
    let instructions: Vec<String> = flanker::INSTRUCTIONS.iter().map(|s| s.to_string()).collect();
    let groups = vec![
        group("all", &[]),
        group("congruent", &[("condition", "congruent")]),
        group("incongruent", &[("condition", "incongruent")]),
    ];
    let metrics = vec![
        metric("accuracy", "accuracy", "target", "choice_letter:AL"),
        metric("target_probability", "target_probability", "target", "choice_letter:AL"),
    ];
    let predictions = vec![Prediction {
        metric: "accuracy".into(),
        group_a: "congruent".into(),
        group_b: "incongruent".into(),
        expect: PredictedDirection::AGreater,
    }];
    let config_doc = config_doc(
        "flanker",
        DialogueMode::Independent,
        None,
        groups,
        metrics,
        predictions,
        &["letters"],
        Sampling { temperature: 0.0, max_tokens: 8 },
        seed,
    );
    Ok(TaskBundle { kind: TaskKind::Flanker, stimuli, instructions, config: config_doc })
}

pub fn generate_span_bundle(
    seed: u64,
    lengths: &[usize],
    per_length: usize,
    direction: span::Direction,
) -> Result<TaskBundle, TaskError> {
    let stimuli_data = span::gen_span(seed, lengths, per_length, direction)?;
    let stimuli = span::stimulus_table(&stimuli_data)?;
    let instructions = span::instructions(direction).to_vec();
    let mut groups = vec![group("all", &[])];
    let distinct: BTreeSet<usize> = lengths.iter().copied().collect();
    for length in &distinct {
        let value = length.to_string();
        groups.push(group(&format!("length_{length}"), &[("length", value.as_str())]));
    }
    let metrics = vec![
        metric("content_accuracy", "accuracy", "target", "digit_sequence"),
        metric("target_perplexity", "target_perplexity", "target", "digit_sequence"),
    ];
    let (shortest, longest) = (distinct.iter().min().unwrap(), distinct.iter().max().unwrap());
    let predictions = if shortest == longest {
        vec![]
    } else {
        vec![Prediction {
            metric: "content_accuracy".into(),
            group_a: format!("length_{shortest}"),
            group_b: format!("length_{longest}"),
            expect: match direction {
                // reversal should get harder with length; rote repetition should not
                span::Direction::Backward => PredictedDirection::AGreater,
                span::Direction::Forward => PredictedDirection::Equal,
            },
        }]
    };
    let kind = match direction {
        span::Direction::Forward => TaskKind::SpanForward,
        span::Direction::Backward => TaskKind::SpanBackward,
    };
    let config_doc = config_doc(
        kind.name(),
        DialogueMode::Independent,
        None,
        groups,
        metrics,
        predictions,
        &["digits"],
        Sampling { temperature: 0.0, max_tokens: 256 },
        seed,
    );
    Ok(TaskBundle { kind, stimuli, instructions, config: config_doc })
}

pub fn generate_drm_bundle(
    seed: u64,
    study_lists: &[(String, Vec<String>)],
    seen_per_list: usize,
    control_words: &[String],
) -> Result<TaskBundle, TaskError> {
    let materials = drm::build_drm(seed, study_lists, seen_per_list, control_words)?;
    let stimuli = materials.stimulus_table()?;
    let instructions = materials.instructions().to_vec();
    let groups = vec![
        group("all", &[]),
        group("seen", &[("label", "seen")]),
        group("unseen_critical", &[("label", "unseen_critical")]),
        group("unseen_control", &[("label", "unseen_control")]),
    ];
    let metrics = vec![
        metric("accuracy", "accuracy", "target", "choice_letter:ZM"),
        metric("target_probability", "target_probability", "target", "choice_letter:ZM"),
    ];
    let predictions = vec![Prediction {
        metric: "accuracy".into(),
        group_a: "unseen_control".into(),
        group_b: "unseen_critical".into(),
        expect: PredictedDirection::AGreater,
    }];
    let config_doc = config_doc(
        "drm",
        DialogueMode::Sequential,
        Some("drm"),
        groups,
        metrics,
        predictions,
        &["word"],
        Sampling { temperature: 0.0, max_tokens: 8 },
        seed,
    );
    Ok(TaskBundle { kind: TaskKind::Drm, stimuli, instructions, config: config_doc })
}

fn group(name: &str, constraints: &[(&str, &str)]) -> Group {
    Group {
        name: name.to_string(),
        constraints: constraints.iter().map(|(k, v)| (k.to_string(), v.to_string())).collect(),
    }
}

fn metric(name: &str, kind: &str, target_column: &str, parser: &str) -> MetricDoc {
    MetricDoc { name: name.into(), kind: kind.into(), target_column: target_column.into(), parser: parser.into() }
}

#[allow(clippy::too_many_arguments)]
fn config_doc(
    experiment_name: &str,
    dialogue_mode: DialogueMode,
    task: Option<&str>,
    groups: Vec<Group>,
    metrics: Vec<MetricDoc>,
    predictions: Vec<Prediction>,
    data_columns: &[&str],
    sampling: Sampling,
    seed: u64,
) -> ConfigDoc {
    ConfigDoc {
        stimuli: StimuliRef { path: "stimuli.csv".into(), id_column: "id".into() },
        groups,
        metrics,
        predictions,
        prompt: PromptDoc {
            data_slot_marker: None,
            instructions: None,
            instruction_files: Some((0..3).map(|i| format!("prompts/instruction_{i}.txt")).collect()),
            data_formats: FormatsDoc::Named("default".into()),
            data_columns: Some(data_columns.iter().map(|c| c.to_string()).collect()),
        },
        metadata: ExperimentMetadata {
            experiment_name: experiment_name.into(),
            dialogue_mode,
            endpoints: vec![EndpointSpec {
                label: "local".into(),
                base_url: "http://localhost:8000/v1".into(),
                model: "change-me".into(),
                score_mode: Default::default(),
            }],
            sampling,
            seed,
            concurrency_limit: 4,
            task: task.map(str::to_string),
            score_targets: true,
        },
    }
}

/// Write a bundle to disk: `stimuli.csv`, `config.json`, and the
/// instruction files under `prompts/`.
pub fn write_bundle(bundle: &TaskBundle, dir: &Path) -> Result<(), SpecError> {
    let prompts = dir.join("prompts");
    std::fs::create_dir_all(&prompts).map_err(|source| SpecError::Io { path: prompts.display().to_string(), source })?;
    let stimuli_path = dir.join("stimuli.csv");
    std::fs::write(&stimuli_path, bundle.stimuli.to_csv_string())
        .map_err(|source| SpecError::Io { path: stimuli_path.display().to_string(), source })?;
    for (i, instruction) in bundle.instructions.iter().enumerate() {
        let path = prompts.join(format!("instruction_{i}.txt"));
        std::fs::write(&path, instruction).map_err(|source| SpecError::Io { path: path.display().to_string(), source })?;
    }
    let config_path = dir.join("config.json");
    let json = serde_json::to_string_pretty(&bundle.config).expect("config serializes") + "\n";
    std::fs::write(&config_path, json).map_err(|source| SpecError::Io { path: config_path.display().to_string(), source })?;
    Ok(())
}
