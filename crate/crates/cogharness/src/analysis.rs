//! Second-order analyses over run records.
//!
//! Covers the robustness toolkit: per-variant accuracy matrices, accuracy
//! spread (box statistics across prompt variants), flip probability between
//! model pairs, accuracy-vs-turn correlation with seeded permutation
//! p-values, preservation-error curves after rule switches, and verdicts on
//! the experiment's declared predictions.

use std::collections::BTreeMap;

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::runner::{TrialRecord, TrialStatus};
use crate::scoring::{GroupMetrics, ParserRule};
use crate::spec::{Direction, ExperimentSpec, MetricKind, Prediction};
use crate::tasks::derive_rng;

#[derive(Debug, Error)]
pub enum AnalysisError {
    #[error("input vectors have different lengths ({x} vs {y})")]
    LengthMismatch { x: usize, y: usize },
    #[error("correlation is undefined for constant input")]
    ConstantInput,
    #[error("need at least 3 samples, got {n}")]
    TooFewSamples { n: usize },
    #[error("accuracy matrix cell ({model}, {variant}) has no scorable records")]
    MissingCell { model: String, variant: String },
    #[error("prediction references missing metrics row ({group}, {metric})")]
    MissingGroup { group: String, metric: String },
    #[error("records lack stimuli column `{0}` required by this analysis")]
    MissingColumn(String),
    #[error("spec has no accuracy metric to score records against")]
    NoAccuracyMetric,
    #[error("unknown model label `{0}`")]
    UnknownModel(String),
    #[error("prompt template: {0}")]
    Template(#[from] crate::permute::PermuteError),
}

/// Whether a record's answer matches the gold target under the spec's first
/// accuracy metric. None for failed or unparsable trials.
pub fn record_correct(record: &TrialRecord, spec: &ExperimentSpec) -> Option<bool> {
    if record.status != TrialStatus::Ok {
        return None;
    }
    let metric = spec
        .metrics
        .metrics
        .iter()
        .find(|m| m.kind == MetricKind::Accuracy)
        .or_else(|| spec.metrics.metrics.first())?;
    let rule = ParserRule::from_id(&metric.parser).ok()?;
    let target = spec.stimuli.value(&record.stimulus_id, &metric.target_column)?;
    let parsed = rule.parse(&record.raw_output).ok()?;
    Some(rule.matches(&parsed, target))
}

/// Per-(model, variant) accuracies. Fully populated: a cell with no
/// scorable records is an error, not a silent hole.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AccuracyMatrix {
    pub models: Vec<String>,
    pub variants: Vec<String>,
    /// `acc[model_index][variant_index]`, each in [0, 1].
    pub acc: Vec<Vec<f64>>,
}

impl AccuracyMatrix {
    pub fn from_records(records: &[TrialRecord], spec: &ExperimentSpec) -> Result<Self, AnalysisError> {
        let models: Vec<String> = spec.metadata.endpoints.iter().map(|e| e.label.clone()).collect();
        let variants: Vec<String> = crate::permute::enumerate_variants(&spec.prompt)?
            .iter()
            .map(|v| v.variant_id.to_string())
            .collect();
        let mut tallies: BTreeMap<(&str, &str), (usize, usize)> = BTreeMap::new();
        for record in records {
            if let Some(correct) = record_correct(record, spec) {
                let entry = tallies.entry((record.model_label.as_str(), record.variant_id.as_str())).or_default();
                entry.1 += 1;
                if correct {
                    entry.0 += 1;
                }
            }
        }
        let mut acc = Vec::with_capacity(models.len());
        for model in &models {
            let mut row = Vec::with_capacity(variants.len());
            for variant in &variants {
                match tallies.get(&(model.as_str(), variant.as_str())) {
                    Some(&(correct, n)) if n > 0 => row.push(correct as f64 / n as f64),
                    _ => return Err(AnalysisError::MissingCell { model: model.clone(), variant: variant.clone() }),
                }
            }
            acc.push(row);
        }
        Ok(Self { models, variants, acc })
    }

    pub fn model_row(&self, model: &str) -> Option<&[f64]> {
        self.models.iter().position(|m| m == model).map(|i| self.acc[i].as_slice())
    }
}

/// Permutation-test settings for [`pearson_r`].
#[derive(Debug, Clone, Copy)]
pub struct PermutationConfig {
    pub shuffles: usize,
    pub seed: u64,
}

impl Default for PermutationConfig {
    fn default() -> Self {
        Self { shuffles: 10_000, seed: 0 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorrelationResult {
    pub r: f64,
    /// Two-sided permutation p-value (seeded, add-one corrected).
    pub p_value: f64,
    pub n: usize,
}

/// Pearson correlation with a two-sided permutation test.
///
/// r uses population moments; the p-value is the add-one-corrected fraction
/// of seeded shuffles of `y` whose |r| reaches the observed |r|.
pub fn pearson_r(x: &[f64], y: &[f64], perm: &PermutationConfig) -> Result<CorrelationResult, AnalysisError> {
    if x.len() != y.len() {
        return Err(AnalysisError::LengthMismatch { x: x.len(), y: y.len() });
    }
    let n = x.len();
    if n < 3 {
        return Err(AnalysisError::TooFewSamples { n });
    }
    let r = plain_pearson(x, y)?;

    let mut rng = derive_rng(perm.seed, 0);
    let mut shuffled: Vec<f64> = y.to_vec();
    let mut hits = 0usize;
    for _ in 0..perm.shuffles {
        shuffled.shuffle(&mut rng);
        let r_perm = plain_pearson(x, &shuffled)?;
        if r_perm.abs() >= r.abs() - 1e-12 {
            hits += 1;
        }
    }
    let p_value = (hits as f64 + 1.0) / (perm.shuffles as f64 + 1.0);
    Ok(CorrelationResult { r, p_value, n })
}

fn plain_pearson(x: &[f64], y: &[f64]) -> Result<f64, AnalysisError> {
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let mut cov = 0.0;
    let mut vx = 0.0;
    let mut vy = 0.0;
    for (&a, &b) in x.iter().zip(y) {
        cov += (a - mx) * (b - my);
        vx += (a - mx) * (a - mx);
        vy += (b - my) * (b - my);
    }
    if vx == 0.0 || vy == 0.0 {
        return Err(AnalysisError::ConstantInput);
    }
    Ok(cov / (vx.sqrt() * vy.sqrt()))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TurnAccuracy {
    pub turn_index: usize,
    pub accuracy: f64,
    /// Parsed trials contributing at this turn.
    pub n: usize,
    /// The turn's active rule, when the stimuli carry a `rule` column.
    pub rule: Option<String>,
}

/// Mean accuracy per dialogue turn for one model, across its variant
/// dialogues. Sequential-mode records expected.
pub fn accuracy_by_turn(records: &[TrialRecord], model: &str, spec: &ExperimentSpec) -> Vec<TurnAccuracy> {
    let mut tallies: BTreeMap<usize, (usize, usize, Option<String>)> = BTreeMap::new();
    for record in records.iter().filter(|r| r.model_label == model) {
        let Some(correct) = record_correct(record, spec) else { continue };
        let rule = spec.stimuli.value(&record.stimulus_id, "rule").map(str::to_string);
        let entry = tallies.entry(record.turn_index).or_insert((0, 0, rule));
        entry.1 += 1;
        if correct {
            entry.0 += 1;
        }
    }
    tallies
        .into_iter()
        .map(|(turn_index, (correct, n, rule))| TurnAccuracy {
            turn_index,
            accuracy: correct as f64 / n as f64,
            n,
            rule,
        })
        .collect()
}

/// Correlation between turn index and per-turn accuracy for one model.
pub fn turn_correlation(
    records: &[TrialRecord],
    model: &str,
    spec: &ExperimentSpec,
    perm: &PermutationConfig,
) -> Result<CorrelationResult, AnalysisError> {
    let series = accuracy_by_turn(records, model, spec);
    let x: Vec<f64> = series.iter().map(|t| t.turn_index as f64).collect();
    let y: Vec<f64> = series.iter().map(|t| t.accuracy).collect();
    pearson_r(&x, &y, perm)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PreservationPoint {
    /// Trials since the rule switch (0 = first trial under the new rule).
    pub offset: usize,
    pub preservation_rate: f64,
    pub other_rate: f64,
    /// Classified trials contributing at this offset.
    pub n: usize,
}

/// Mean preservation and other error rates at each offset after a rule
/// switch, across blocks and variant dialogues. Requires classified records
/// and a `rule` stimuli column; the first block precedes any switch and
/// never contributes.
pub fn preservation_curve(
    records: &[TrialRecord],
    spec: &ExperimentSpec,
    window: usize,
) -> Result<Vec<PreservationPoint>, AnalysisError> {
    if !spec.stimuli.columns.iter().any(|c| c == "rule") {
        return Err(AnalysisError::MissingColumn("rule".into()));
    }
    let rules: Vec<&str> = spec
        .stimuli
        .rows
        .iter()
        .map(|row| row.get("rule").map(|s| s.as_str()).unwrap_or(""))
        .collect();
    let mut switches = Vec::new();
    for t in 1..rules.len() {
        if rules[t] != rules[t - 1] {
            switches.push(t);
        }
    }
    // block end for each switch: the next switch or the end of the run
    let block_ends: Vec<usize> = switches
        .iter()
        .enumerate()
        .map(|(i, _)| switches.get(i + 1).copied().unwrap_or(rules.len()))
        .collect();

    // classification per (model, variant, turn)
    let mut by_dialogue: BTreeMap<(&str, &str), BTreeMap<usize, &str>> = BTreeMap::new();
    for record in records {
        if let Some(class) = &record.classification {
            by_dialogue
                .entry((record.model_label.as_str(), record.variant_id.as_str()))
                .or_default()
                .insert(record.turn_index, class.as_str());
        }
    }

    let mut points = Vec::with_capacity(window);
    for offset in 0..window {
        let mut preservation = 0usize;
        let mut other = 0usize;
        let mut n = 0usize;
        for (&switch, &end) in switches.iter().zip(&block_ends) {
            let turn = switch + offset;
            if turn >= end {
                continue; // offset runs past this block
            }
            for classes in by_dialogue.values() {
                if let Some(&class) = classes.get(&turn) {
                    n += 1;
                    match class {
                        "preservation" => preservation += 1,
                        "other" => other += 1,
                        _ => {}
                    }
                }
            }
        }
        let rate = |count: usize| if n == 0 { f64::NAN } else { count as f64 / n as f64 };
        points.push(PreservationPoint { offset, preservation_rate: rate(preservation), other_rate: rate(other), n });
    }
    Ok(points)
}

/// Box-plot statistics over one model's per-variant accuracies.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoxStats {
    pub min: f64,
    pub q1: f64,
    pub median: f64,
    pub q3: f64,
    pub max: f64,
    /// Quartile method, recorded in output tables.
    pub method: &'static str,
}

/// Order statistics with quartiles by linear interpolation between closest
/// ranks (position `(n - 1) * p`).
pub fn accuracy_spread(matrix: &AccuracyMatrix, model: &str) -> Result<BoxStats, AnalysisError> {
    let row = matrix.model_row(model).ok_or_else(|| AnalysisError::UnknownModel(model.to_string()))?;
    if row.is_empty() {
        return Err(AnalysisError::TooFewSamples { n: 0 });
    }
    let mut sorted = row.to_vec();
    sorted.sort_by(|a, b| a.partial_cmp(b).expect("accuracies are finite"));
    Ok(BoxStats {
        min: sorted[0],
        q1: interpolated_quantile(&sorted, 0.25),
        median: interpolated_quantile(&sorted, 0.5),
        q3: interpolated_quantile(&sorted, 0.75),
        max: sorted[sorted.len() - 1],
        method: "linear",
    })
}

fn interpolated_quantile(sorted: &[f64], p: f64) -> f64 {
    let position = (sorted.len() - 1) as f64 * p;
    let lower = position.floor() as usize;
    let upper = position.ceil() as usize;
    let weight = position - lower as f64;
    sorted[lower] * (1.0 - weight) + sorted[upper] * weight
}

/// How often model comparisons reverse across prompt variants.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FlipResult {
    pub threshold: f64,
    /// Unordered model pair -> probability that a comparison exceeding the
    /// threshold under one variant reverses (again by >= threshold) under
    /// another. Pairs with no qualifying comparison are omitted.
    pub pair_probabilities: BTreeMap<(String, String), f64>,
    /// Total qualifying (model pair, variant, variant') comparisons across
    /// all pairs: the denominator behind the probabilities.
    pub qualifying_pair_count: usize,
}

/// Definition recorded verbatim in report output so readers can
/// reinterpret: over ordered pairs of distinct variants (p, p') and each
/// model pair {M, M'}, among cases with |acc(M,p) - acc(M',p)| >= d, the
/// fraction where the opposite model leads by >= d under p'.
pub const FLIP_DEFINITION: &str = "over ordered pairs of distinct prompt variants (p, p') and each unordered \
model pair {M, M'}: among cases with |acc(M,p) - acc(M',p)| >= d, the fraction where the opposite model \
leads by at least d under p'";

pub fn flip_probability(matrix: &AccuracyMatrix, threshold: f64) -> FlipResult {
    let mut pair_probabilities = BTreeMap::new();
    let mut total_qualifying = 0usize;
    let n_variants = matrix.variants.len();
    for i in 0..matrix.models.len() {
        for j in (i + 1)..matrix.models.len() {
            let mut qualifying = 0usize;
            let mut flips = 0usize;
            for p in 0..n_variants {
                let delta_p = matrix.acc[i][p] - matrix.acc[j][p];
                if delta_p.abs() < threshold {
                    continue;
                }
                for q in 0..n_variants {
                    if q == p {
                        continue;
                    }
                    qualifying += 1;
                    let delta_q = matrix.acc[i][q] - matrix.acc[j][q];
                    // the previously-trailing model now leads by >= d
                    let flipped = if delta_p > 0.0 { -delta_q >= threshold } else { delta_q >= threshold };
                    if flipped {
                        flips += 1;
                    }
                }
            }
            total_qualifying += qualifying;
            if qualifying > 0 {
                // canonical key order, so relabeling models cannot move entries
                let (a, b) = if matrix.models[i] <= matrix.models[j] { (i, j) } else { (j, i) };
                pair_probabilities
                    .insert((matrix.models[a].clone(), matrix.models[b].clone()), flips as f64 / qualifying as f64);
            }
        }
    }
    FlipResult { threshold, pair_probabilities, qualifying_pair_count: total_qualifying }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Verdict {
    Supported,
    Contradicted,
    Inconclusive,
}

impl Verdict {
    pub fn as_str(self) -> &'static str {
        match self {
            Verdict::Supported => "supported",
            Verdict::Contradicted => "contradicted",
            Verdict::Inconclusive => "inconclusive",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PredictionVerdict {
    pub metric: String,
    pub group_a: String,
    pub group_b: String,
    pub expect: Direction,
    pub value_a: f64,
    pub value_b: f64,
    pub verdict: Verdict,
}

/// Judge each declared prediction against aggregated group metrics. The
/// margin defaults to 0: any strict inequality in the expected direction
/// counts as support; differences within the margin are inconclusive
/// (supported, for `equal` predictions).
pub fn check_predictions(
    predictions: &[Prediction],
    metrics: &[GroupMetrics],
    margin: f64,
) -> Result<Vec<PredictionVerdict>, AnalysisError> {
    let lookup = |group: &str, metric: &str| -> Result<f64, AnalysisError> {
        metrics
            .iter()
            .find(|m| m.group_name == group && m.metric_name == metric)
            .map(|m| m.value)
            .ok_or_else(|| AnalysisError::MissingGroup { group: group.to_string(), metric: metric.to_string() })
    };
    predictions
        .iter()
        .map(|prediction| {
            let value_a = lookup(&prediction.group_a, &prediction.metric)?;
            let value_b = lookup(&prediction.group_b, &prediction.metric)?;
            let delta = value_a - value_b;
            let verdict = if value_a.is_nan() || value_b.is_nan() {
                Verdict::Inconclusive
            } else {
                match prediction.expect {
                    Direction::AGreater => {
                        if delta > margin {
                            Verdict::Supported
                        } else if -delta > margin {
                            Verdict::Contradicted
                        } else {
                            Verdict::Inconclusive
                        }
                    }
                    Direction::BGreater => {
                        if -delta > margin {
                            Verdict::Supported
                        } else if delta > margin {
                            Verdict::Contradicted
                        } else {
                            Verdict::Inconclusive
                        }
                    }
                    Direction::Equal => {
                        if delta.abs() <= margin {
                            Verdict::Supported
                        } else {
                            Verdict::Contradicted
                        }
                    }
                }
            };
            Ok(PredictionVerdict {
                metric: prediction.metric.clone(),
                group_a: prediction.group_a.clone(),
                group_b: prediction.group_b.clone(),
                expect: prediction.expect,
                value_a,
                value_b,
                verdict,
            })
        })
        .collect()
}

/// Reference human accuracy estimates shipped with reports. Raw values
/// only; reports emit model/human ratio columns and leave any further
/// normalization to the reader.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HumanBaseline {
    pub task: &'static str,
    pub measure: &'static str,
    pub accuracy: f64,
    pub note: &'static str,
}

pub const HUMAN_BASELINES: [HumanBaseline; 5] = [
    HumanBaseline {
        task: "span_forward",
        measure: "accuracy at length 7",
        accuracy: 0.50,
        note: "normative mean forward span of 7",
    },
    HumanBaseline {
        task: "span_backward",
        measure: "accuracy at length 7",
        accuracy: 0.14,
        note: "share of people with backward span >= 7 given norms mean 5.4, sd 1.5",
    },
    HumanBaseline {
        task: "wcst",
        measure: "overall accuracy",
        accuracy: 0.77,
        note: "mean 58.9 errors across 252 trials",
    },
    HumanBaseline {
        task: "drm",
        measure: "unseen-critical accuracy",
        accuracy: 0.63,
        note: "critical words falsely recognized 70% of the time in recognition norms",
    },
    HumanBaseline {
        task: "flanker",
        measure: "incongruent accuracy",
        accuracy: 0.95,
        note: "incongruent error rate near 4.7%",
    },
];
