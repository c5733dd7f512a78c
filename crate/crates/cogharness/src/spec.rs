//! Declarative experiment specifications.
//!
//! An experiment is a stimuli CSV plus a JSON config with five sections:
//! groups (conjunctions of column=level tests over independent variables),
//! metrics (what to compute and how to parse answers), predictions (expected
//! directional comparisons between groups), prompt (instruction variants and
//! data formats), and metadata (endpoints, dialogue mode, sampling, seed).
//!
//! Validation is strict and total before any network call: either the whole
//! bundle resolves or loading fails with an error naming the offending
//! field and row. Stimulus values stay strings end to end; numeric
//! interpretation happens only at metric time.

use std::collections::{BTreeMap, BTreeSet};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::llm::http::ScoreMode;
use crate::llm::Sampling;
use crate::permute::{default_data_formats, DataFormat, PermuteError, PromptTemplate, DATA_SLOT_MARKER};
use crate::scoring::{MetricHooks, ParserRule};

#[derive(Debug, Error)]
pub enum SpecError {
    #[error("missing column `{column}` ({context})")]
    MissingColumn { column: String, context: String },
    #[error("duplicate id `{id}` at stimuli row {row}")]
    DuplicateId { id: String, row: usize },
    #[error("unresolved reference `{name}` ({context})")]
    UnresolvedReference { name: String, context: String },
    #[error("malformed file {path} (row {row}): {detail}")]
    MalformedFile { path: String, row: usize, detail: String },
    #[error("duplicate {kind} name `{name}`")]
    DuplicateName { kind: &'static str, name: String },
    #[error("group `{group}` matches no stimulus row")]
    EmptyGroup { group: String },
    #[error("invalid {field}: {detail}")]
    Invalid { field: String, detail: String },
    #[error("prompt template: {0}")]
    Template(#[from] PermuteError),
    #[error("cannot read {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

/// The stimuli table: a header of unique column names and string-valued
/// rows, one of which is the unique id column. Immutable after validation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StimulusTable {
    pub columns: Vec<String>,
    pub rows: Vec<BTreeMap<String, String>>,
    pub id_column: String,
}

impl StimulusTable {
    pub fn new(columns: Vec<String>, rows: Vec<BTreeMap<String, String>>, id_column: String) -> Result<Self, SpecError> {
        let table = Self { columns, rows, id_column };
        table.validate("<memory>")?;
        Ok(table)
    }

    fn validate(&self, path: &str) -> Result<(), SpecError> {
        let mut seen_columns = BTreeSet::new();
        for column in &self.columns {
            if column.is_empty() {
                return Err(SpecError::MalformedFile { path: path.into(), row: 1, detail: "empty column name in header".into() });
            }
            if !seen_columns.insert(column.as_str()) {
                return Err(SpecError::MalformedFile {
                    path: path.into(),
                    row: 1,
                    detail: format!("duplicate column name `{column}`"),
                });
            }
        }
        if self.rows.is_empty() {
            return Err(SpecError::MalformedFile { path: path.into(), row: 0, detail: "stimuli table has 0 data rows".into() });
        }
        if !self.columns.contains(&self.id_column) {
            return Err(SpecError::MissingColumn { column: self.id_column.clone(), context: "stimuli id column".into() });
        }
        let mut seen_ids = BTreeSet::new();
        for (i, row) in self.rows.iter().enumerate() {
            for column in &self.columns {
                if !row.contains_key(column) {
                    return Err(SpecError::MalformedFile {
                        path: path.into(),
                        row: i + 2,
                        detail: format!("row is missing a value for column `{column}`"),
                    });
                }
            }
            let id = &row[&self.id_column];
            if !seen_ids.insert(id.clone()) {
                return Err(SpecError::DuplicateId { id: id.clone(), row: i + 2 });
            }
        }
        Ok(())
    }

    pub fn from_csv_str(text: &str, id_column: &str, path: &str) -> Result<Self, SpecError> {
        let mut reader = csv::ReaderBuilder::new().from_reader(text.as_bytes());
        let headers = reader
            .headers()
            .map_err(|e| SpecError::MalformedFile { path: path.into(), row: 1, detail: e.to_string() })?
            .clone();
        let columns: Vec<String> = headers.iter().map(|h| h.to_string()).collect();
        if columns.is_empty() {
            return Err(SpecError::MalformedFile { path: path.into(), row: 0, detail: "stimuli table has 0 data rows".into() });
        }
        let mut rows = Vec::new();
        for (i, record) in reader.records().enumerate() {
            let record = record.map_err(|e| {
                let row = e.position().map(|p| p.line() as usize).unwrap_or(i + 2);
                SpecError::MalformedFile { path: path.into(), row, detail: e.to_string() }
            })?;
            let row: BTreeMap<String, String> =
                columns.iter().cloned().zip(record.iter().map(|v| v.to_string())).collect();
            rows.push(row);
        }
        let table = Self { columns, rows, id_column: id_column.to_string() };
        table.validate(path)?;
        Ok(table)
    }

    pub fn from_csv_path(path: &Path, id_column: &str) -> Result<Self, SpecError> {
        let text = std::fs::read_to_string(path)
            .map_err(|source| SpecError::Io { path: path.display().to_string(), source })?;
        Self::from_csv_str(&text, id_column, &path.display().to_string())
    }

    pub fn to_csv_string(&self) -> String {
        let mut writer = csv::Writer::from_writer(Vec::new());
        writer.write_record(&self.columns).expect("in-memory csv");
        for row in &self.rows {
            writer
                .write_record(self.columns.iter().map(|c| row[c].as_str()))
                .expect("in-memory csv");
        }
        String::from_utf8(writer.into_inner().expect("in-memory csv")).expect("csv output is utf-8")
    }

    pub fn ids(&self) -> impl Iterator<Item = &str> {
        self.rows.iter().map(move |row| row[&self.id_column].as_str())
    }

    pub fn row_by_id(&self, id: &str) -> Option<&BTreeMap<String, String>> {
        self.rows.iter().find(|row| row[&self.id_column] == id)
    }

    pub fn value(&self, id: &str, column: &str) -> Option<&str> {
        self.row_by_id(id).and_then(|row| row.get(column)).map(|v| v.as_str())
    }

    /// Row lookup index for hot paths.
    pub fn index(&self) -> BTreeMap<&str, &BTreeMap<String, String>> {
        self.rows.iter().map(|row| (row[&self.id_column].as_str(), row)).collect()
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }
}

/// A named conjunction of column = level tests. An empty conjunction
/// matches every row, which is how an "all stimuli" group is written.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Group {
    pub name: String,
    #[serde(rename = "where")]
    pub constraints: BTreeMap<String, String>,
}

impl Group {
    pub fn matches(&self, row: &BTreeMap<String, String>) -> bool {
        self.constraints.iter().all(|(column, level)| row.get(column).map(|v| v == level).unwrap_or(false))
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct GroupSpec {
    pub groups: Vec<Group>,
}

/// What an aggregated metric computes.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MetricKind {
    Accuracy,
    MeanNumeric,
    TargetProbability,
    TargetPerplexity,
    /// Named hook resolved through [`MetricHooks`] at load time. None ship
    /// by default.
    Custom { hook: String },
}

impl MetricKind {
    fn parse(kind: &str) -> Option<Self> {
        match kind {
            "accuracy" => Some(Self::Accuracy),
            "mean_numeric" => Some(Self::MeanNumeric),
            "target_probability" => Some(Self::TargetProbability),
            "target_perplexity" => Some(Self::TargetPerplexity),
            other => other.strip_prefix("custom:").map(|hook| Self::Custom { hook: hook.to_string() }),
        }
    }

    fn id(&self) -> String {
        match self {
            Self::Accuracy => "accuracy".into(),
            Self::MeanNumeric => "mean_numeric".into(),
            Self::TargetProbability => "target_probability".into(),
            Self::TargetPerplexity => "target_perplexity".into(),
            Self::Custom { hook } => format!("custom:{hook}"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Metric {
    pub name: String,
    pub kind: MetricKind,
    /// Stimuli column holding the gold answer.
    pub target_column: String,
    /// Parser id, see [`ParserRule::from_id`].
    pub parser: String,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct MetricSpec {
    pub metrics: Vec<Metric>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Direction {
    AGreater,
    BGreater,
    Equal,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Prediction {
    pub metric: String,
    pub group_a: String,
    pub group_b: String,
    pub expect: Direction,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct PredictionSpec {
    pub predictions: Vec<Prediction>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DialogueMode {
    Independent,
    Sequential,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EndpointSpec {
    pub label: String,
    pub base_url: String,
    pub model: String,
    #[serde(default)]
    pub score_mode: ScoreMode,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentMetadata {
    pub experiment_name: String,
    pub dialogue_mode: DialogueMode,
    pub endpoints: Vec<EndpointSpec>,
    pub sampling: Sampling,
    pub seed: u64,
    pub concurrency_limit: usize,
    /// Built-in task plugin for sequential dialogues (`wcst` or `drm`).
    #[serde(default)]
    pub task: Option<String>,
    /// Collect target probability payloads alongside generations.
    #[serde(default = "default_true")]
    pub score_targets: bool,
}

fn default_true() -> bool {
    true
}

/// A fully validated experiment bundle. Immutable after construction and
/// safe to share read-only across parallel workers.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentSpec {
    pub stimuli: StimulusTable,
    pub groups: GroupSpec,
    pub metrics: MetricSpec,
    pub predictions: PredictionSpec,
    pub prompt: PromptTemplate,
    pub metadata: ExperimentMetadata,
}

/// Load and validate an experiment from a stimuli CSV and a JSON config.
pub fn load_spec(stimuli_path: &Path, config_path: &Path) -> Result<ExperimentSpec, SpecError> {
    load_spec_with_hooks(stimuli_path, config_path, &MetricHooks::default())
}

pub fn load_spec_with_hooks(
    stimuli_path: &Path,
    config_path: &Path,
    hooks: &MetricHooks,
) -> Result<ExperimentSpec, SpecError> {
    let config_text = std::fs::read_to_string(config_path)
        .map_err(|source| SpecError::Io { path: config_path.display().to_string(), source })?;
    let stimuli_text = std::fs::read_to_string(stimuli_path)
        .map_err(|source| SpecError::Io { path: stimuli_path.display().to_string(), source })?;
    let base_dir = config_path.parent().unwrap_or(Path::new("."));
    ExperimentSpec::from_strings(
        &stimuli_text,
        &stimuli_path.display().to_string(),
        &config_text,
        &config_path.display().to_string(),
        base_dir,
        hooks,
    )
}

/// Resolve the stimuli path named inside a config file, relative to the
/// config's directory. Used by the CLI, where only `--config` is given.
pub fn stimuli_path_from_config(config_path: &Path) -> Result<PathBuf, SpecError> {
    let text = std::fs::read_to_string(config_path)
        .map_err(|source| SpecError::Io { path: config_path.display().to_string(), source })?;
    let doc: ConfigDoc = serde_json::from_str(&text).map_err(|e| SpecError::MalformedFile {
        path: config_path.display().to_string(),
        row: e.line(),
        detail: e.to_string(),
    })?;
    let base_dir = config_path.parent().unwrap_or(Path::new("."));
    Ok(base_dir.join(&doc.stimuli.path))
}

impl ExperimentSpec {
    /// Build from raw file contents; `base_dir` resolves any instruction
    /// file references in the prompt section.
    pub fn from_strings(
        stimuli_text: &str,
        stimuli_path: &str,
        config_text: &str,
        config_path: &str,
        base_dir: &Path,
        hooks: &MetricHooks,
    ) -> Result<Self, SpecError> {
        let doc: ConfigDoc = serde_json::from_str(config_text).map_err(|e| SpecError::MalformedFile {
            path: config_path.to_string(),
            row: e.line(),
            detail: e.to_string(),
        })?;
        let stimuli = StimulusTable::from_csv_str(stimuli_text, &doc.stimuli.id_column, stimuli_path)?;
        let prompt = doc.prompt.resolve(&stimuli.columns, base_dir)?;
        let spec = Self {
            stimuli,
            groups: GroupSpec { groups: doc.groups },
            metrics: MetricSpec {
                metrics: doc
                    .metrics
                    .into_iter()
                    .map(|m| {
                        let kind = MetricKind::parse(&m.kind).ok_or_else(|| SpecError::UnresolvedReference {
                            name: m.kind.clone(),
                            context: format!("metric `{}` kind", m.name),
                        })?;
                        Ok(Metric { name: m.name, kind, target_column: m.target_column, parser: m.parser })
                    })
                    .collect::<Result<Vec<_>, SpecError>>()?,
            },
            predictions: PredictionSpec { predictions: doc.predictions },
            prompt,
            metadata: doc.metadata,
        };
        spec.validate(hooks)?;
        Ok(spec)
    }

    /// All-or-nothing cross-reference validation.
    pub fn validate(&self, hooks: &MetricHooks) -> Result<(), SpecError> {
        // groups
        let mut group_names = BTreeSet::new();
        for group in &self.groups.groups {
            if !group_names.insert(group.name.as_str()) {
                return Err(SpecError::DuplicateName { kind: "group", name: group.name.clone() });
            }
            for column in group.constraints.keys() {
                if !self.stimuli.columns.contains(column) {
                    return Err(SpecError::UnresolvedReference {
                        name: column.clone(),
                        context: format!("group `{}` constraint column", group.name),
                    });
                }
            }
            if !self.stimuli.rows.iter().any(|row| group.matches(row)) {
                return Err(SpecError::EmptyGroup { group: group.name.clone() });
            }
        }

        // metrics
        let mut metric_names = BTreeSet::new();
        let mut probability_target: Option<&str> = None;
        for metric in &self.metrics.metrics {
            if !metric_names.insert(metric.name.as_str()) {
                return Err(SpecError::DuplicateName { kind: "metric", name: metric.name.clone() });
            }
            if !self.stimuli.columns.contains(&metric.target_column) {
                return Err(SpecError::UnresolvedReference {
                    name: metric.target_column.clone(),
                    context: format!("metric `{}` target_column", metric.name),
                });
            }
            ParserRule::from_id(&metric.parser).map_err(|_| SpecError::UnresolvedReference {
                name: metric.parser.clone(),
                context: format!("metric `{}` parser", metric.name),
            })?;
            if let MetricKind::Custom { hook } = &metric.kind {
                if !hooks.contains(hook) {
                    return Err(SpecError::UnresolvedReference {
                        name: hook.clone(),
                        context: format!("metric `{}` custom hook (none registered)", metric.name),
                    });
                }
            }
            if matches!(metric.kind, MetricKind::TargetProbability | MetricKind::TargetPerplexity) {
                match probability_target {
                    None => probability_target = Some(&metric.target_column),
                    Some(existing) if existing != metric.target_column => {
                        return Err(SpecError::Invalid {
                            field: format!("metric `{}` target_column", metric.name),
                            detail: format!(
                                "probability metrics must share one target column; found `{existing}` and `{}`",
                                metric.target_column
                            ),
                        });
                    }
                    Some(_) => {}
                }
            }
        }

        // predictions
        for prediction in &self.predictions.predictions {
            if !metric_names.contains(prediction.metric.as_str()) {
                return Err(SpecError::UnresolvedReference {
                    name: prediction.metric.clone(),
                    context: "prediction metric".into(),
                });
            }
            for group in [&prediction.group_a, &prediction.group_b] {
                if !group_names.contains(group.as_str()) {
                    return Err(SpecError::UnresolvedReference { name: group.clone(), context: "prediction group".into() });
                }
            }
        }

        // prompt
        self.prompt.validate(&self.stimuli.columns)?;

        // metadata
        let meta = &self.metadata;
        if meta.endpoints.is_empty() {
            return Err(SpecError::Invalid { field: "metadata.endpoints".into(), detail: "need at least one endpoint".into() });
        }
        let mut labels = BTreeSet::new();
        for endpoint in &meta.endpoints {
            if !labels.insert(endpoint.label.as_str()) {
                return Err(SpecError::DuplicateName { kind: "endpoint label", name: endpoint.label.clone() });
            }
        }
        if meta.concurrency_limit == 0 {
            return Err(SpecError::Invalid { field: "metadata.concurrency_limit".into(), detail: "must be >= 1".into() });
        }
        // NaN fails this check too
        if !(meta.sampling.temperature.is_finite() && meta.sampling.temperature >= 0.0) {
            return Err(SpecError::Invalid { field: "metadata.sampling.temperature".into(), detail: "must be >= 0".into() });
        }
        if meta.sampling.max_tokens == 0 {
            return Err(SpecError::Invalid { field: "metadata.sampling.max_tokens".into(), detail: "must be >= 1".into() });
        }
        if meta.dialogue_mode == DialogueMode::Sequential {
            match &meta.task {
                None => {
                    return Err(SpecError::Invalid {
                        field: "metadata.task".into(),
                        detail: "sequential dialogue mode requires a task plugin (wcst or drm)".into(),
                    })
                }
                Some(task) if !crate::tasks::is_registered_plugin(task) => {
                    return Err(SpecError::UnresolvedReference { name: task.clone(), context: "metadata.task plugin".into() });
                }
                Some(_) => {}
            }
        }
        Ok(())
    }

    /// Map every stimulus id to the (possibly empty) list of groups whose
    /// constraints it satisfies, in group declaration order. A pure function
    /// of row values and the group spec.
    pub fn assign_groups(&self) -> BTreeMap<String, Vec<String>> {
        self.stimuli
            .rows
            .iter()
            .map(|row| {
                let id = row[&self.stimuli.id_column].clone();
                let groups = self
                    .groups
                    .groups
                    .iter()
                    .filter(|g| g.matches(row))
                    .map(|g| g.name.clone())
                    .collect();
                (id, groups)
            })
            .collect()
    }

    /// Inverse view: group name to member stimulus ids, in row order.
    pub fn group_members(&self) -> BTreeMap<String, Vec<String>> {
        let mut out: BTreeMap<String, Vec<String>> =
            self.groups.groups.iter().map(|g| (g.name.clone(), Vec::new())).collect();
        for row in &self.stimuli.rows {
            for group in &self.groups.groups {
                if group.matches(row) {
                    out.get_mut(&group.name).expect("declared group").push(row[&self.stimuli.id_column].clone());
                }
            }
        }
        out
    }

    /// The stimuli column whose value is recorded as the trial target and
    /// scored for probability payloads: the shared target column of the
    /// probability metrics when any exist, else the first metric's.
    pub fn designated_target_column(&self) -> Option<&str> {
        self.metrics
            .metrics
            .iter()
            .find(|m| matches!(m.kind, MetricKind::TargetProbability | MetricKind::TargetPerplexity))
            .or_else(|| self.metrics.metrics.first())
            .map(|m| m.target_column.as_str())
    }

    /// Parser used by the runner for turn feedback and the recorded
    /// `parsed_answer`: the first accuracy metric's, else the first metric's.
    pub fn answer_parser(&self) -> Option<ParserRule> {
        self.metrics
            .metrics
            .iter()
            .find(|m| m.kind == MetricKind::Accuracy)
            .or_else(|| self.metrics.metrics.first())
            .and_then(|m| ParserRule::from_id(&m.parser).ok())
    }

    /// The config document (stimuli reference plus all sections) with
    /// prompt formats resolved inline; loading the output back yields an
    /// identical spec.
    pub fn to_config_doc(&self, stimuli_path: &str) -> ConfigDoc {
        ConfigDoc {
            stimuli: StimuliRef { path: stimuli_path.to_string(), id_column: self.stimuli.id_column.clone() },
            groups: self.groups.groups.clone(),
            metrics: self
                .metrics
                .metrics
                .iter()
                .map(|m| MetricDoc {
                    name: m.name.clone(),
                    kind: m.kind.id(),
                    target_column: m.target_column.clone(),
                    parser: m.parser.clone(),
                })
                .collect(),
            predictions: self.predictions.predictions.clone(),
            prompt: PromptDoc {
                data_slot_marker: Some(self.prompt.data_slot_marker.clone()),
                instructions: Some(self.prompt.instruction_variants.clone()),
                instruction_files: None,
                data_formats: FormatsDoc::Inline(self.prompt.data_formats.clone()),
                data_columns: None,
            },
            metadata: self.metadata.clone(),
        }
    }

    /// Write `config.json` and `stimuli.csv` into a directory.
    pub fn save(&self, dir: &Path) -> Result<(), SpecError> {
        std::fs::create_dir_all(dir).map_err(|source| SpecError::Io { path: dir.display().to_string(), source })?;
        let stimuli_path = dir.join("stimuli.csv");
        std::fs::write(&stimuli_path, self.stimuli.to_csv_string())
            .map_err(|source| SpecError::Io { path: stimuli_path.display().to_string(), source })?;
        let doc = self.to_config_doc("stimuli.csv");
        let config_path = dir.join("config.json");
        std::fs::write(&config_path, serde_json::to_string_pretty(&doc).expect("config serializes") + "\n")
            .map_err(|source| SpecError::Io { path: config_path.display().to_string(), source })?;
        Ok(())
    }

    /// Deterministic content hash of the resolved experiment (config
    /// sections plus stimuli). Run logs store it; resume refuses to append
    /// to a log written under a different configuration.
    pub fn config_hash(&self) -> String {
        let canonical = serde_json::to_string(&(
            &self.stimuli,
            &self.groups,
            &self.metrics,
            &self.predictions,
            &self.prompt,
            &self.metadata,
        ))
        .expect("spec serializes");
        format!("{:016x}", fnv1a64(canonical.as_bytes()))
    }
}

fn fnv1a64(bytes: &[u8]) -> u64 {
    let mut hash: u64 = 0xcbf2_9ce4_8422_2325;
    for &b in bytes {
        hash ^= b as u64;
        hash = hash.wrapping_mul(0x0000_0100_0000_01b3);
    }
    hash
}

/// On-disk JSON config document.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ConfigDoc {
    pub stimuli: StimuliRef,
    #[serde(default)]
    pub groups: Vec<Group>,
    #[serde(default)]
    pub metrics: Vec<MetricDoc>,
    #[serde(default)]
    pub predictions: Vec<Prediction>,
    pub prompt: PromptDoc,
    pub metadata: ExperimentMetadata,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct StimuliRef {
    /// CSV path, relative to the config file.
    pub path: String,
    #[serde(default = "default_id_column")]
    pub id_column: String,
}

fn default_id_column() -> String {
    "id".to_string()
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MetricDoc {
    pub name: String,
    pub kind: String,
    pub target_column: String,
    pub parser: String,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PromptDoc {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub data_slot_marker: Option<String>,
    /// Inline instruction texts, the original first.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub instructions: Option<Vec<String>>,
    /// Or plain-text files relative to the config.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub instruction_files: Option<Vec<String>>,
    pub data_formats: FormatsDoc,
    /// Columns serialized by the default formats (required with
    /// `"data_formats": "default"`).
    #[serde(skip_serializing_if = "Option::is_none")]
    pub data_columns: Option<Vec<String>>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(untagged)]
pub enum FormatsDoc {
    /// `"default"`: the ten shipped formats over `data_columns`.
    Named(String),
    Inline(Vec<DataFormat>),
}

impl PromptDoc {
    fn resolve(self, columns: &[String], base_dir: &Path) -> Result<PromptTemplate, SpecError> {
        let instructions = match (self.instructions, self.instruction_files) {
            (Some(texts), None) => texts,
            (None, Some(files)) => files
                .iter()
                .map(|file| {
                    let path = base_dir.join(file);
                    std::fs::read_to_string(&path)
                        .map(|t| t.trim_end_matches('\n').to_string())
                        .map_err(|source| SpecError::Io { path: path.display().to_string(), source })
                })
                .collect::<Result<Vec<_>, _>>()?,
            (Some(_), Some(_)) => {
                return Err(SpecError::Invalid {
                    field: "prompt".into(),
                    detail: "give either instructions or instruction_files, not both".into(),
                })
            }
            (None, None) => {
                return Err(SpecError::Invalid {
                    field: "prompt".into(),
                    detail: "missing instructions (or instruction_files)".into(),
                })
            }
        };
        let data_formats = match self.data_formats {
            FormatsDoc::Named(name) if name == "default" => {
                let data_columns = self.data_columns.ok_or_else(|| SpecError::Invalid {
                    field: "prompt.data_columns".into(),
                    detail: "required when data_formats is \"default\"".into(),
                })?;
                for column in &data_columns {
                    if !columns.contains(column) {
                        return Err(SpecError::UnresolvedReference {
                            name: column.clone(),
                            context: "prompt.data_columns".into(),
                        });
                    }
                }
                default_data_formats(&data_columns)
            }
            FormatsDoc::Named(other) => {
                return Err(SpecError::UnresolvedReference { name: other, context: "prompt.data_formats".into() })
            }
            FormatsDoc::Inline(formats) => formats,
        };
        Ok(PromptTemplate {
            instruction_variants: instructions,
            data_formats,
            data_slot_marker: self.data_slot_marker.unwrap_or_else(|| DATA_SLOT_MARKER.to_string()),
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn span_csv() -> String {
        let mut lines = vec!["id,digits,length,direction,target".to_string()];
        for (i, len) in [7, 7, 15, 15, 20, 20, 30, 30, 50, 50].iter().enumerate() {
            lines.push(format!("s{i:02},1 2 3,{len},backward,3 2 1"));
        }
        lines.join("\n") + "\n"
    }

    fn span_config() -> String {
        serde_json::json!({
            "stimuli": {"path": "stimuli.csv", "id_column": "id"},
            "groups": [
                {"name": "all", "where": {}},
                {"name": "len7", "where": {"length": "7"}},
                {"name": "len15", "where": {"length": "15"}},
                {"name": "len20", "where": {"length": "20"}},
                {"name": "len30", "where": {"length": "30"}},
                {"name": "len50", "where": {"length": "50"}}
            ],
            "metrics": [
                {"name": "content_accuracy", "kind": "accuracy", "target_column": "target", "parser": "digit_sequence"}
            ],
            "predictions": [
                {"metric": "content_accuracy", "group_a": "len7", "group_b": "len50", "expect": "a_greater"}
            ],
            "prompt": {
                "instructions": ["Repeat the digits in reverse order. <<DATA>>"],
                "data_formats": "default",
                "data_columns": ["digits"]
            },
            "metadata": {
                "experiment_name": "span_backward",
                "dialogue_mode": "independent",
                "endpoints": [{"label": "local", "base_url": "http://localhost:8000/v1", "model": "test-model"}],
                "sampling": {"temperature": 0.0, "max_tokens": 128},
                "seed": 7,
                "concurrency_limit": 2
            }
        })
        .to_string()
    }

    fn load_fixture(csv: &str, config: &str) -> Result<ExperimentSpec, SpecError> {
        ExperimentSpec::from_strings(csv, "stimuli.csv", config, "config.json", Path::new("."), &MetricHooks::default())
    }

    #[test]
    fn digit_span_fixture_loads_with_five_length_groups() {
        let spec = load_fixture(&span_csv(), &span_config()).unwrap();
        assert_eq!(spec.stimuli.len(), 10);
        let members = spec.group_members();
        assert_eq!(members["all"].len(), 10);
        for group in ["len7", "len15", "len20", "len30", "len50"] {
            assert_eq!(members[group].len(), 2, "{group}");
        }
    }

    #[test]
    fn unknown_group_column_is_an_unresolved_reference() {
        let config = span_config().replace("\"length\":\"7\"", "\"colour\":\"7\"");
        match load_fixture(&span_csv(), &config) {
            Err(SpecError::UnresolvedReference { name, .. }) => assert_eq!(name, "colour"),
            other => panic!("expected UnresolvedReference, got {other:?}"),
        }
    }

    #[test]
    fn empty_stimuli_is_malformed_with_zero_rows() {
        match load_fixture("id,digits,length,direction,target\n", &span_config()) {
            Err(SpecError::MalformedFile { row, detail, .. }) => {
                assert_eq!(row, 0);
                assert!(detail.contains("0 data rows"), "{detail}");
            }
            other => panic!("expected MalformedFile, got {other:?}"),
        }
    }

    #[test]
    fn duplicate_ids_are_rejected() {
        let csv = "id,digits,length,direction,target\na,1,7,forward,1\na,2,7,forward,2\n";
        match load_fixture(csv, &span_config()) {
            Err(SpecError::DuplicateId { id, row }) => {
                assert_eq!(id, "a");
                assert_eq!(row, 3);
            }
            other => panic!("expected DuplicateId, got {other:?}"),
        }
    }

    #[test]
    fn conjunctive_group_semantics() {
        let csv = "id,condition,length\nx,incongruent,5\ny,incongruent,7\nz,congruent,5\n";
        let config = serde_json::json!({
            "stimuli": {"path": "s.csv", "id_column": "id"},
            "groups": [
                {"name": "incongruent", "where": {"condition": "incongruent"}},
                {"name": "incongruent_len5", "where": {"condition": "incongruent", "length": "5"}}
            ],
            "metrics": [{"name": "acc", "kind": "accuracy", "target_column": "condition", "parser": "verbatim"}],
            "predictions": [],
            "prompt": {"instructions": ["t <<DATA>>"], "data_formats": [{"id": 1, "template": "(|condition|)", "descriptor": "bare"}]},
            "metadata": {
                "experiment_name": "t", "dialogue_mode": "independent",
                "endpoints": [{"label": "m", "base_url": "http://x", "model": "m"}],
                "sampling": {"temperature": 0.0, "max_tokens": 8}, "seed": 1, "concurrency_limit": 1
            }
        })
        .to_string();
        let spec = load_fixture(csv, &config).unwrap();
        let assigned = spec.assign_groups();
        assert_eq!(assigned["x"], vec!["incongruent".to_string(), "incongruent_len5".to_string()]);
        assert_eq!(assigned["y"], vec!["incongruent".to_string()]);
        assert!(assigned["z"].is_empty());
    }

    #[test]
    fn group_matching_no_rows_fails_validation() {
        let config = span_config().replace("{\"length\":\"7\"}", "{\"length\":\"8\"}");
        // serde_json::json! output has no spaces; patch via parse-and-edit instead
        let mut doc: serde_json::Value = serde_json::from_str(&span_config()).unwrap();
        doc["groups"][1]["where"]["length"] = "99".into();
        match load_fixture(&span_csv(), &doc.to_string()) {
            Err(SpecError::EmptyGroup { group }) => assert_eq!(group, "len7"),
            other => panic!("expected EmptyGroup, got {other:?}"),
        }
        drop(config);
    }

    #[test]
    fn sequential_mode_requires_registered_task() {
        let mut doc: serde_json::Value = serde_json::from_str(&span_config()).unwrap();
        doc["metadata"]["dialogue_mode"] = "sequential".into();
        match load_fixture(&span_csv(), &doc.to_string()) {
            Err(SpecError::Invalid { field, .. }) => assert_eq!(field, "metadata.task"),
            other => panic!("expected Invalid, got {other:?}"),
        }
        doc["metadata"]["task"] = "nonexistent".into();
        match load_fixture(&span_csv(), &doc.to_string()) {
            Err(SpecError::UnresolvedReference { name, .. }) => assert_eq!(name, "nonexistent"),
            other => panic!("expected UnresolvedReference, got {other:?}"),
        }
    }

    #[test]
    fn custom_metric_kind_resolves_through_hooks() {
        let mut doc: serde_json::Value = serde_json::from_str(&span_config()).unwrap();
        doc["metrics"][0]["kind"] = "custom:longest_streak".into();
        // unregistered: rejected
        assert!(matches!(
            load_fixture(&span_csv(), &doc.to_string()),
            Err(SpecError::UnresolvedReference { .. })
        ));
        // registered: accepted
        let mut hooks = MetricHooks::default();
        hooks.register("longest_streak", |_records| Some(0.0));
        let spec = ExperimentSpec::from_strings(
            &span_csv(),
            "stimuli.csv",
            &doc.to_string(),
            "config.json",
            Path::new("."),
            &hooks,
        )
        .unwrap();
        assert_eq!(spec.metrics.metrics[0].kind, MetricKind::Custom { hook: "longest_streak".into() });
    }

    #[test]
    fn save_then_load_round_trips_identically() {
        let spec = load_fixture(&span_csv(), &span_config()).unwrap();
        let dir = tempfile::tempdir().unwrap();
        spec.save(dir.path()).unwrap();
        let reloaded = load_spec(&dir.path().join("stimuli.csv"), &dir.path().join("config.json")).unwrap();
        assert_eq!(spec, reloaded);
        assert_eq!(spec.config_hash(), reloaded.config_hash());
    }

    #[test]
    fn assign_groups_is_pure_under_row_permutation() {
        let spec = load_fixture(&span_csv(), &span_config()).unwrap();
        let mut permuted = spec.clone();
        permuted.stimuli.rows.reverse();
        assert_eq!(spec.assign_groups(), permuted.assign_groups());
    }

    #[test]
    fn group_member_counts_match_brute_force_filter() {
        let spec = load_fixture(&span_csv(), &span_config()).unwrap();
        let members = spec.group_members();
        for group in &spec.groups.groups {
            let brute = spec.stimuli.rows.iter().filter(|row| group.matches(row)).count();
            assert_eq!(members[&group.name].len(), brute, "{}", group.name);
        }
        let assigned = spec.assign_groups();
        let total_assigned: usize = assigned.values().map(|g| g.len()).sum();
        let total_brute: usize = members.values().map(|m| m.len()).sum();
        assert_eq!(total_assigned, total_brute);
    }
}
