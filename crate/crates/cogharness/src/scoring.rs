//! Answer parsing and metric aggregation.
//!
//! Raw generations are parsed by a small set of rules shared across tasks:
//! last digit, last standalone choice letter, full digit sequence, or
//! verbatim text. Parsing uses last-occurrence semantics throughout, which
//! copes with chatty completions that restate the question before answering.
//!
//! Unparsable and failed trials are never silently zero-scored: they are
//! excluded from metric denominators and the exclusion count is reported
//! alongside every value.

use std::collections::BTreeMap;
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::runner::{TrialRecord, TrialStatus};
use crate::spec::{ExperimentSpec, MetricKind};

#[derive(Debug, Error)]
pub enum ScoreError {
    #[error("no digit found in response")]
    NoDigitFound,
    #[error("no standalone occurrence of any allowed letter {allowed:?}")]
    NoChoiceFound { allowed: Vec<char> },
    #[error("response contains no digit sequence")]
    EmptySequence,
    #[error("`{0}` is not numeric")]
    NotNumeric(String),
    #[error("unknown parser id `{0}`")]
    UnknownParser(String),
    #[error("choice_letter parser needs a non-empty allowed set")]
    EmptyAllowedSet,
    #[error("record references stimulus `{0}` absent from the stimuli table")]
    UnknownStimulus(String),
    #[error("metric `{metric}` uses unregistered custom hook `{hook}`")]
    UnknownHook { metric: String, hook: String },
}

/// How raw generations are turned into comparable answers.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ParserRule {
    /// Final decimal digit anywhere in the response.
    LastDigit,
    /// Last standalone (non-word-embedded) occurrence of an allowed letter,
    /// case-insensitive.
    ChoiceLetter { allowed: Vec<char> },
    /// All decimal digits in order. `strict` keeps only the last contiguous
    /// run of digits-and-separators, guarding against prose like
    /// "all 7 digits are ..." contributing stray digits.
    DigitSequence { strict: bool },
    /// Trimmed response text as-is.
    Verbatim { case_insensitive: bool },
}

impl ParserRule {
    /// Parse a parser id as written in config files: `last_digit`,
    /// `choice_letter:AL`, `digit_sequence`, `digit_sequence:strict`,
    /// `verbatim`, `verbatim:ci`.
    pub fn from_id(id: &str) -> Result<Self, ScoreError> {
        match id {
            "last_digit" => Ok(Self::LastDigit),
            "digit_sequence" => Ok(Self::DigitSequence { strict: false }),
            "digit_sequence:strict" => Ok(Self::DigitSequence { strict: true }),
            "verbatim" => Ok(Self::Verbatim { case_insensitive: false }),
            "verbatim:ci" => Ok(Self::Verbatim { case_insensitive: true }),
            other => {
                if let Some(letters) = other.strip_prefix("choice_letter:") {
                    let allowed: Vec<char> = letters.chars().collect();
                    if allowed.is_empty() {
                        return Err(ScoreError::EmptyAllowedSet);
                    }
                    Ok(Self::ChoiceLetter { allowed })
                } else {
                    Err(ScoreError::UnknownParser(other.to_string()))
                }
            }
        }
    }

    pub fn to_id(&self) -> String {
        match self {
            Self::LastDigit => "last_digit".into(),
            Self::ChoiceLetter { allowed } => format!("choice_letter:{}", allowed.iter().collect::<String>()),
            Self::DigitSequence { strict: false } => "digit_sequence".into(),
            Self::DigitSequence { strict: true } => "digit_sequence:strict".into(),
            Self::Verbatim { case_insensitive: false } => "verbatim".into(),
            Self::Verbatim { case_insensitive: true } => "verbatim:ci".into(),
        }
    }

    /// Parse raw text into the rule's canonical answer string.
    pub fn parse(&self, text: &str) -> Result<String, ScoreError> {
        match self {
            Self::LastDigit => parse_last_digit(text).map(|d| d.to_string()),
            Self::ChoiceLetter { allowed } => parse_choice_letter(text, allowed).map(|c| c.to_string()),
            Self::DigitSequence { strict } => {
                let digits = if *strict { parse_digit_sequence_strict(text)? } else { parse_digit_sequence(text)? };
                Ok(digits.iter().map(|d| d.to_string()).collect::<Vec<_>>().join(" "))
            }
            Self::Verbatim { .. } => Ok(text.trim().to_string()),
        }
    }

    /// Whether a canonical parsed answer matches the gold target.
    pub fn matches(&self, parsed: &str, target: &str) -> bool {
        match self {
            Self::LastDigit => parsed == target.trim(),
            Self::ChoiceLetter { .. } => parsed.eq_ignore_ascii_case(target.trim()),
            Self::DigitSequence { .. } => match (extract_digits(parsed), extract_digits(target)) {
                (Some(a), Some(b)) => content_accuracy(&a, &b) == 1,
                _ => false,
            },
            Self::Verbatim { case_insensitive } => {
                if *case_insensitive {
                    parsed.trim().eq_ignore_ascii_case(target.trim())
                } else {
                    parsed.trim() == target.trim()
                }
            }
        }
    }
}

/// Final decimal digit anywhere in the text.
pub fn parse_last_digit(text: &str) -> Result<u8, ScoreError> {
    text.chars()
        .rev()
        .find(|c| c.is_ascii_digit())
        .map(|c| c as u8 - b'0')
        .ok_or(ScoreError::NoDigitFound)
}

/// Last standalone, case-insensitive occurrence of an allowed letter.
/// Standalone means not embedded in a longer alphanumeric word, so the `A`
/// in "CLEARLY" does not count but "(a)" and a bare trailing "l" do.
pub fn parse_choice_letter(text: &str, allowed: &[char]) -> Result<char, ScoreError> {
    if allowed.is_empty() {
        return Err(ScoreError::EmptyAllowedSet);
    }
    let chars: Vec<char> = text.chars().collect();
    let mut found = None;
    for (i, &c) in chars.iter().enumerate() {
        let canonical = allowed.iter().find(|a| a.eq_ignore_ascii_case(&c));
        if let Some(&canonical) = canonical {
            let prev_word = i > 0 && chars[i - 1].is_alphanumeric();
            let next_word = i + 1 < chars.len() && chars[i + 1].is_alphanumeric();
            if !prev_word && !next_word {
                found = Some(canonical);
            }
        }
    }
    found.ok_or_else(|| ScoreError::NoChoiceFound { allowed: allowed.to_vec() })
}

/// Every decimal digit in the text, in order, ignoring all separators and
/// surrounding prose.
pub fn parse_digit_sequence(text: &str) -> Result<Vec<u8>, ScoreError> {
    let digits: Vec<u8> = text.chars().filter(|c| c.is_ascii_digit()).map(|c| c as u8 - b'0').collect();
    if digits.is_empty() {
        return Err(ScoreError::EmptySequence);
    }
    Ok(digits)
}

/// Strict variant: the last maximal run of digits separated only by spaces,
/// tabs, or commas. Digits mentioned in earlier prose are dropped.
pub fn parse_digit_sequence_strict(text: &str) -> Result<Vec<u8>, ScoreError> {
    let mut last_run: Vec<u8> = Vec::new();
    let mut current: Vec<u8> = Vec::new();
    for c in text.chars() {
        if c.is_ascii_digit() {
            current.push(c as u8 - b'0');
        } else if matches!(c, ' ' | '\t' | ',') {
            // separators keep a run alive
        } else {
            if !current.is_empty() {
                last_run = std::mem::take(&mut current);
            }
        }
    }
    if !current.is_empty() {
        last_run = current;
    }
    if last_run.is_empty() {
        return Err(ScoreError::EmptySequence);
    }
    Ok(last_run)
}

/// Digit-span content accuracy: 1 iff the sequences are element-wise equal
/// (same length, same order), else 0.
pub fn content_accuracy(parsed: &[u8], target: &[u8]) -> u32 {
    (parsed == target) as u32
}

fn extract_digits(text: &str) -> Option<Vec<u8>> {
    let v: Vec<u8> = text.chars().filter(|c| c.is_ascii_digit()).map(|c| c as u8 - b'0').collect();
    if v.is_empty() {
        None
    } else {
        Some(v)
    }
}

/// One aggregated value for one (group, metric) pair.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroupMetrics {
    pub group_name: String,
    pub metric_name: String,
    /// Trials that contributed to `value`.
    pub n: usize,
    /// NaN when no trial in the group produced a usable value.
    pub value: f64,
    /// Failed or unparsable trials, excluded from the denominator.
    pub excluded: usize,
}

/// A custom metric: aggregates a group's successful records to one value,
/// or None when undefined for the data.
pub type MetricFn = Arc<dyn Fn(&[&TrialRecord]) -> Option<f64> + Send + Sync>;

/// Registration point for custom metric functions referenced from configs
/// as `custom:<name>`. None ship by default.
#[derive(Default, Clone)]
pub struct MetricHooks {
    fns: BTreeMap<String, MetricFn>,
}

impl MetricHooks {
    pub fn register<F>(&mut self, name: impl Into<String>, f: F)
    where
        F: Fn(&[&TrialRecord]) -> Option<f64> + Send + Sync + 'static,
    {
        self.fns.insert(name.into(), Arc::new(f));
    }

    pub fn contains(&self, name: &str) -> bool {
        self.fns.contains_key(name)
    }

    fn get(&self, name: &str) -> Option<&MetricFn> {
        self.fns.get(name)
    }
}

impl std::fmt::Debug for MetricHooks {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("MetricHooks").field("names", &self.fns.keys().collect::<Vec<_>>()).finish()
    }
}

/// Aggregate per-(group, metric) values over a run's trial records.
///
/// Accuracy is correct/parsed, probability and perplexity metrics are
/// arithmetic means over trials carrying payloads, and every exclusion is
/// counted. The output is independent of record order.
pub fn aggregate(records: &[TrialRecord], spec: &ExperimentSpec) -> Result<Vec<GroupMetrics>, ScoreError> {
    aggregate_with_hooks(records, spec, &MetricHooks::default())
}

pub fn aggregate_with_hooks(
    records: &[TrialRecord],
    spec: &ExperimentSpec,
    hooks: &MetricHooks,
) -> Result<Vec<GroupMetrics>, ScoreError> {
    let assignments = spec.assign_groups();
    let mut members: BTreeMap<&str, Vec<&TrialRecord>> = BTreeMap::new();
    for group in &spec.groups.groups {
        members.insert(group.name.as_str(), Vec::new());
    }
    for record in records {
        let groups = assignments
            .get(&record.stimulus_id)
            .ok_or_else(|| ScoreError::UnknownStimulus(record.stimulus_id.clone()))?;
        for group in groups {
            members.get_mut(group.as_str()).expect("assignments only name declared groups").push(record);
        }
    }

    let mut out = Vec::new();
    for group in &spec.groups.groups {
        let group_records = &members[group.name.as_str()];
        for metric in &spec.metrics.metrics {
            let total = group_records.len();
            let (n, value) = match &metric.kind {
                MetricKind::Accuracy => {
                    let rule = ParserRule::from_id(&metric.parser)?;
                    let mut parsed_count = 0usize;
                    let mut correct = 0usize;
                    for record in group_records.iter().filter(|r| r.status == TrialStatus::Ok) {
                        let target = spec
                            .stimuli
                            .value(&record.stimulus_id, &metric.target_column)
                            .ok_or_else(|| ScoreError::UnknownStimulus(record.stimulus_id.clone()))?;
                        if let Ok(canonical) = rule.parse(&record.raw_output) {
                            parsed_count += 1;
                            if rule.matches(&canonical, target) {
                                correct += 1;
                            }
                        }
                    }
                    (parsed_count, ratio(correct, parsed_count))
                }
                MetricKind::MeanNumeric => {
                    let rule = ParserRule::from_id(&metric.parser)?;
                    let values: Vec<f64> = group_records
                        .iter()
                        .filter(|r| r.status == TrialStatus::Ok)
                        .filter_map(|r| rule.parse(&r.raw_output).ok())
                        .filter_map(|canonical| canonical.trim().parse::<f64>().ok())
                        .collect();
                    (values.len(), mean(&values))
                }
                MetricKind::TargetProbability => {
                    let values: Vec<f64> = group_records
                        .iter()
                        .filter(|r| r.status == TrialStatus::Ok)
                        .filter_map(|r| r.probability_payload.as_ref())
                        .filter_map(|p| p.probability)
                        .collect();
                    (values.len(), mean(&values))
                }
                MetricKind::TargetPerplexity => {
                    let values: Vec<f64> = group_records
                        .iter()
                        .filter(|r| r.status == TrialStatus::Ok)
                        .filter_map(|r| r.probability_payload.as_ref())
                        .map(|p| p.perplexity)
                        .collect();
                    (values.len(), mean(&values))
                }
                MetricKind::Custom { hook } => {
                    let f = hooks.get(hook).ok_or_else(|| ScoreError::UnknownHook {
                        metric: metric.name.clone(),
                        hook: hook.clone(),
                    })?;
                    let ok_records: Vec<&TrialRecord> =
                        group_records.iter().copied().filter(|r| r.status == TrialStatus::Ok).collect();
                    let value = f(&ok_records).unwrap_or(f64::NAN);
                    (ok_records.len(), value)
                }
            };
            out.push(GroupMetrics {
                group_name: group.name.clone(),
                metric_name: metric.name.clone(),
                n,
                value,
                excluded: total - n,
            });
        }
    }
    Ok(out)
}

/// Relative frequencies of task classifications (e.g. WCST correct /
/// preservation / other) over all classified records. Frequencies sum to 1.
pub fn classification_frequencies(records: &[TrialRecord]) -> Vec<(String, usize, f64)> {
    let mut counts: BTreeMap<&str, usize> = BTreeMap::new();
    let mut total = 0usize;
    for record in records {
        if let Some(class) = &record.classification {
            *counts.entry(class.as_str()).or_default() += 1;
            total += 1;
        }
    }
    let rank = |name: &str| match name {
        "correct" => 0,
        "preservation" => 1,
        "other" => 2,
        _ => 3,
    };
    let mut out: Vec<(String, usize, f64)> =
        counts.into_iter().map(|(name, count)| (name.to_string(), count, count as f64 / total as f64)).collect();
    out.sort_by(|a, b| rank(&a.0).cmp(&rank(&b.0)).then_with(|| a.0.cmp(&b.0)));
    out
}

/// Write group metrics as CSV with columns (group, metric, n, value, excluded).
pub fn write_metrics_csv<W: std::io::Write>(writer: W, metrics: &[GroupMetrics]) -> std::io::Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(["group", "metric", "n", "value", "excluded"])?;
    for m in metrics {
        w.write_record([
            m.group_name.as_str(),
            m.metric_name.as_str(),
            &m.n.to_string(),
            &format_value(m.value),
            &m.excluded.to_string(),
        ])?;
    }
    w.flush()
}

/// Fixed-precision value formatting used by every emitted CSV.
pub fn format_value(v: f64) -> String {
    if v.is_nan() {
        "NaN".to_string()
    } else {
        format!("{v:.6}")
    }
}

fn ratio(num: usize, den: usize) -> f64 {
    if den == 0 {
        f64::NAN
    } else {
        num as f64 / den as f64
    }
}

fn mean(values: &[f64]) -> f64 {
    if values.is_empty() {
        f64::NAN
    } else {
        values.iter().sum::<f64>() / values.len() as f64
    }
}
