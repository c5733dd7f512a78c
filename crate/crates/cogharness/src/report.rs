//! Report emission: per-analysis CSV tables plus one structured summary.
//!
//! Output layout under the chosen directory:
//!
//! ```text
//! prompts/                      one rendered instruction per variant
//! metrics/group_metrics.csv     (model, group, metric, n, value, excluded)
//! metrics/classification_frequencies.csv
//! analysis/accuracy_matrix.csv  long format (model, variant, accuracy)
//! analysis/accuracy_spread.csv  box statistics per model
//! analysis/flip_probability.csv one row per (threshold, model pair)
//! analysis/accuracy_by_turn.csv sequential runs
//! analysis/turn_correlation.csv sequential runs
//! analysis/preservation_curve.csv when records carry classifications
//! analysis/predictions.csv      verdict per declared prediction per model
//! analysis/human_baseline.csv   reference values and model/human ratios
//! summary.json                  counts, flags, definitions, key results
//! ```
//!
//! Tables are plot-ready long-format CSV; no plotting engine is bundled.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde::Serialize;
use thiserror::Error;

use crate::analysis::{
    accuracy_by_turn, accuracy_spread, check_predictions, flip_probability, turn_correlation, AccuracyMatrix,
    AnalysisError, BoxStats, CorrelationResult, FlipResult, PermutationConfig, PredictionVerdict, TurnAccuracy,
    FLIP_DEFINITION, HUMAN_BASELINES,
};
use crate::permute::enumerate_variants;
use crate::runner::{RunLog, TrialStatus};
use crate::scoring::{aggregate, classification_frequencies, format_value, GroupMetrics, ScoreError};
use crate::spec::{DialogueMode, ExperimentSpec, SpecError};

#[derive(Debug, Error)]
pub enum ReportError {
    #[error("cannot write {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error(transparent)]
    Score(#[from] ScoreError),
    #[error(transparent)]
    Analysis(#[from] AnalysisError),
    #[error(transparent)]
    Spec(#[from] SpecError),
}

#[derive(Debug, Clone)]
pub struct ReportOptions {
    /// Flip-probability thresholds d.
    pub flip_thresholds: Vec<f64>,
    pub prediction_margin: f64,
    /// Offsets after each rule switch in the preservation curve.
    pub preservation_window: usize,
    pub permutation: PermutationConfig,
}

impl Default for ReportOptions {
    fn default() -> Self {
        Self {
            flip_thresholds: vec![0.05, 0.10, 0.20],
            prediction_margin: 0.0,
            preservation_window: 10,
            permutation: PermutationConfig::default(),
        }
    }
}

/// Everything computed for one experiment's report.
#[derive(Debug, Clone, Serialize)]
pub struct ExperimentReport {
    pub experiment_name: String,
    pub config_hash: String,
    pub record_count: usize,
    pub failed_count: usize,
    /// Records whose backend could not score the target; when nonzero the
    /// run proceeded generation-only for those trials.
    pub missing_logprob_count: usize,
    pub per_model: Vec<ModelReport>,
    pub accuracy_matrix: Option<AccuracyMatrix>,
    /// Why the matrix is absent, when it is.
    pub accuracy_matrix_note: Option<String>,
    pub flips: Vec<FlipResult>,
    pub definitions: BTreeMap<&'static str, String>,
}

#[derive(Debug, Clone, Serialize)]
pub struct ModelReport {
    pub model: String,
    pub metrics: Vec<GroupMetrics>,
    pub classification_frequencies: Vec<(String, usize, f64)>,
    pub predictions: Vec<PredictionVerdict>,
    pub spread: Option<BoxStats>,
    pub by_turn: Vec<TurnAccuracy>,
    pub turn_correlation: Option<CorrelationResult>,
    pub turn_correlation_note: Option<String>,
}

/// Compute the full report in memory.
pub fn compute_report(spec: &ExperimentSpec, log: &RunLog, options: &ReportOptions) -> Result<ExperimentReport, ReportError> {
    let records = &log.records;
    let sequential = spec.metadata.dialogue_mode == DialogueMode::Sequential;

    let (matrix, matrix_note) = match AccuracyMatrix::from_records(records, spec) {
        Ok(matrix) => (Some(matrix), None),
        Err(e) => (None, Some(e.to_string())),
    };

    let mut per_model = Vec::new();
    for endpoint in &spec.metadata.endpoints {
        let model_records: Vec<_> = records.iter().filter(|r| r.model_label == endpoint.label).cloned().collect();
        let metrics = aggregate(&model_records, spec)?;
        let predictions = check_predictions(&spec.predictions.predictions, &metrics, options.prediction_margin)?;
        let spread = matrix.as_ref().and_then(|m| accuracy_spread(m, &endpoint.label).ok());
        let by_turn = if sequential { accuracy_by_turn(&model_records, &endpoint.label, spec) } else { Vec::new() };
        let (corr, corr_note) = if sequential {
            match turn_correlation(&model_records, &endpoint.label, spec, &options.permutation) {
                Ok(result) => (Some(result), None),
                Err(e) => (None, Some(e.to_string())),
            }
        } else {
            (None, None)
        };
        per_model.push(ModelReport {
            model: endpoint.label.clone(),
            metrics,
            classification_frequencies: classification_frequencies(&model_records),
            predictions,
            spread,
            by_turn,
            turn_correlation: corr,
            turn_correlation_note: corr_note,
        });
    }

    let flips = matrix
        .as_ref()
        .map(|m| options.flip_thresholds.iter().map(|&d| flip_probability(m, d)).collect())
        .unwrap_or_default();

    let mut definitions = BTreeMap::new();
    definitions.insert("flip_probability", FLIP_DEFINITION.to_string());
    definitions.insert("quartiles", "linear interpolation between closest ranks at position (n-1)p".to_string());
    definitions.insert(
        "p_value",
        format!(
            "two-sided permutation test, {} seeded shuffles, add-one corrected",
            options.permutation.shuffles
        ),
    );
    definitions.insert(
        "exclusions",
        "failed and unparsable trials are excluded from metric denominators and counted in the excluded column"
            .to_string(),
    );

    Ok(ExperimentReport {
        experiment_name: spec.metadata.experiment_name.clone(),
        config_hash: spec.config_hash(),
        record_count: records.len(),
        failed_count: records.iter().filter(|r| r.status == TrialStatus::Failed).count(),
        missing_logprob_count: records.iter().filter(|r| r.score_error.is_some()).count(),
        per_model,
        accuracy_matrix: matrix,
        accuracy_matrix_note: matrix_note,
        flips,
        definitions,
    })
}

/// Write the rendered instruction of every prompt variant under
/// `outdir/prompts/`.
pub fn write_prompts(outdir: &Path, spec: &ExperimentSpec) -> Result<Vec<PathBuf>, ReportError> {
    let dir = outdir.join("prompts");
    create_dir(&dir)?;
    let variants = enumerate_variants(&spec.prompt).map_err(SpecError::Template)?;
    let mut written = Vec::new();
    for variant in &variants {
        let path = dir.join(format!("{}.txt", variant.variant_id));
        write_file(&path, &variant.rendered_instruction)?;
        written.push(path);
    }
    Ok(written)
}

/// Write `metrics/` tables. Returns the per-model metrics for reuse.
pub fn write_metrics_files(outdir: &Path, spec: &ExperimentSpec, log: &RunLog) -> Result<Vec<(String, Vec<GroupMetrics>)>, ReportError> {
    let dir = outdir.join("metrics");
    create_dir(&dir)?;
    let mut all = Vec::new();
    let mut metrics_csv = csv_writer();
    push_row(&mut metrics_csv, &["model", "group", "metric", "n", "value", "excluded"]);
    let mut class_csv = csv_writer();
    push_row(&mut class_csv, &["model", "classification", "count", "frequency"]);
    let mut any_classification = false;
    for endpoint in &spec.metadata.endpoints {
        let model_records: Vec<_> = log.records.iter().filter(|r| r.model_label == endpoint.label).cloned().collect();
        let metrics = aggregate(&model_records, spec)?;
        for m in &metrics {
            push_row(
                &mut metrics_csv,
                &[&endpoint.label, &m.group_name, &m.metric_name, &m.n.to_string(), &format_value(m.value), &m.excluded.to_string()],
            );
        }
        for (classification, count, frequency) in classification_frequencies(&model_records) {
            any_classification = true;
            push_row(&mut class_csv, &[&endpoint.label, &classification, &count.to_string(), &format_value(frequency)]);
        }
        all.push((endpoint.label.clone(), metrics));
    }
    write_file(&dir.join("group_metrics.csv"), &finish_csv(metrics_csv))?;
    if any_classification {
        write_file(&dir.join("classification_frequencies.csv"), &finish_csv(class_csv))?;
    }
    Ok(all)
}

/// Write `analysis/` tables from a computed report.
pub fn write_analysis_files(outdir: &Path, spec: &ExperimentSpec, log: &RunLog, report: &ExperimentReport, options: &ReportOptions) -> Result<(), ReportError> {
    let dir = outdir.join("analysis");
    create_dir(&dir)?;

    if let Some(matrix) = &report.accuracy_matrix {
        let mut w = csv_writer();
        push_row(&mut w, &["model", "variant", "accuracy"]);
        for (mi, model) in matrix.models.iter().enumerate() {
            for (vi, variant) in matrix.variants.iter().enumerate() {
                push_row(&mut w, &[model, variant, &format_value(matrix.acc[mi][vi])]);
            }
        }
        write_file(&dir.join("accuracy_matrix.csv"), &finish_csv(w))?;

        let mut w = csv_writer();
        push_row(&mut w, &["model", "min", "q1", "median", "q3", "max", "method"]);
        for model_report in &report.per_model {
            if let Some(s) = &model_report.spread {
                push_row(
                    &mut w,
                    &[
                        &model_report.model,
                        &format_value(s.min),
                        &format_value(s.q1),
                        &format_value(s.median),
                        &format_value(s.q3),
                        &format_value(s.max),
                        s.method,
                    ],
                );
            }
        }
        write_file(&dir.join("accuracy_spread.csv"), &finish_csv(w))?;

        let mut w = csv_writer();
        push_row(&mut w, &["threshold", "model_a", "model_b", "flip_probability"]);
        for flip in &report.flips {
            for ((a, b), probability) in &flip.pair_probabilities {
                push_row(&mut w, &[&format_value(flip.threshold), a, b, &format_value(*probability)]);
            }
        }
        write_file(&dir.join("flip_probability.csv"), &finish_csv(w))?;
    }

    if spec.metadata.dialogue_mode == DialogueMode::Sequential {
        let mut w = csv_writer();
        push_row(&mut w, &["model", "turn", "rule", "n", "accuracy"]);
        for model_report in &report.per_model {
            for turn in &model_report.by_turn {
                push_row(
                    &mut w,
                    &[
                        &model_report.model,
                        &turn.turn_index.to_string(),
                        turn.rule.as_deref().unwrap_or(""),
                        &turn.n.to_string(),
                        &format_value(turn.accuracy),
                    ],
                );
            }
        }
        write_file(&dir.join("accuracy_by_turn.csv"), &finish_csv(w))?;

        let mut w = csv_writer();
        push_row(&mut w, &["model", "r", "p_value", "n", "note"]);
        for model_report in &report.per_model {
            match (&model_report.turn_correlation, &model_report.turn_correlation_note) {
                (Some(c), _) => push_row(
                    &mut w,
                    &[&model_report.model, &format_value(c.r), &format_value(c.p_value), &c.n.to_string(), ""],
                ),
                (None, Some(note)) => push_row(&mut w, &[&model_report.model, "", "", "", note]),
                (None, None) => {}
            }
        }
        write_file(&dir.join("turn_correlation.csv"), &finish_csv(w))?;
    }

    // preservation curve: per model, when classifications and a rule column exist
    let has_classifications = log.records.iter().any(|r| r.classification.is_some());
    if has_classifications && spec.stimuli.columns.iter().any(|c| c == "rule") {
        let mut w = csv_writer();
        push_row(&mut w, &["model", "offset", "preservation_rate", "other_rate", "n"]);
        for endpoint in &spec.metadata.endpoints {
            let model_records: Vec<_> =
                log.records.iter().filter(|r| r.model_label == endpoint.label).cloned().collect();
            let curve = crate::analysis::preservation_curve(&model_records, spec, options.preservation_window)?;
            for point in &curve {
                push_row(
                    &mut w,
                    &[
                        &endpoint.label,
                        &point.offset.to_string(),
                        &format_value(point.preservation_rate),
                        &format_value(point.other_rate),
                        &point.n.to_string(),
                    ],
                );
            }
        }
        write_file(&dir.join("preservation_curve.csv"), &finish_csv(w))?;
    }

    let mut w = csv_writer();
    push_row(&mut w, &["model", "metric", "group_a", "group_b", "expected", "value_a", "value_b", "verdict"]);
    for model_report in &report.per_model {
        for v in &model_report.predictions {
            let expected = match v.expect {
                crate::spec::Direction::AGreater => "a_greater",
                crate::spec::Direction::BGreater => "b_greater",
                crate::spec::Direction::Equal => "equal",
            };
            push_row(
                &mut w,
                &[
                    &model_report.model,
                    &v.metric,
                    &v.group_a,
                    &v.group_b,
                    expected,
                    &format_value(v.value_a),
                    &format_value(v.value_b),
                    v.verdict.as_str(),
                ],
            );
        }
    }
    write_file(&dir.join("predictions.csv"), &finish_csv(w))?;

    // human baselines with model/human ratios where the experiment matches
    let mut w = csv_writer();
    push_row(&mut w, &["task", "measure", "human_accuracy", "model", "model_accuracy", "ratio", "note"]);
    for baseline in &HUMAN_BASELINES {
        let mut wrote_model_row = false;
        if spec.metadata.experiment_name == baseline.task {
            for model_report in &report.per_model {
                if let Some(value) = baseline_model_value(baseline.task, &model_report.metrics) {
                    push_row(
                        &mut w,
                        &[
                            baseline.task,
                            baseline.measure,
                            &format_value(baseline.accuracy),
                            &model_report.model,
                            &format_value(value),
                            &format_value(value / baseline.accuracy),
                            baseline.note,
                        ],
                    );
                    wrote_model_row = true;
                }
            }
        }
        if !wrote_model_row {
            push_row(&mut w, &[baseline.task, baseline.measure, &format_value(baseline.accuracy), "", "", "", baseline.note]);
        }
    }
    write_file(&dir.join("human_baseline.csv"), &finish_csv(w))?;

    Ok(())
}

/// The group whose accuracy is compared against each task's human baseline.
fn baseline_model_value(task: &str, metrics: &[GroupMetrics]) -> Option<f64> {
    let group = match task {
        "span_forward" | "span_backward" => "length_7",
        "wcst" => "all",
        "drm" => "unseen_critical",
        "flanker" => "incongruent",
        _ => return None,
    };
    metrics
        .iter()
        .find(|m| m.group_name == group && m.metric_name.contains("accuracy"))
        .map(|m| m.value)
        .filter(|v| !v.is_nan())
}

/// Write everything: prompts, metrics, analysis, and `summary.json`.
pub fn write_report(outdir: &Path, spec: &ExperimentSpec, log: &RunLog, options: &ReportOptions) -> Result<ExperimentReport, ReportError> {
    let report = compute_report(spec, log, options)?;
    write_prompts(outdir, spec)?;
    write_metrics_files(outdir, spec, log)?;
    write_analysis_files(outdir, spec, log, &report, options)?;
    let path = outdir.join("summary.json");
    let json = serde_json::to_string_pretty(&report).expect("report serializes") + "\n";
    write_file(&path, &json)?;
    Ok(report)
}

fn create_dir(dir: &Path) -> Result<(), ReportError> {
    std::fs::create_dir_all(dir).map_err(|source| ReportError::Io { path: dir.display().to_string(), source })
}

fn write_file(path: &Path, contents: &str) -> Result<(), ReportError> {
    std::fs::write(path, contents).map_err(|source| ReportError::Io { path: path.display().to_string(), source })
}

fn csv_writer() -> csv::Writer<Vec<u8>> {
    csv::Writer::from_writer(Vec::new())
}

fn push_row(writer: &mut csv::Writer<Vec<u8>>, row: &[&str]) {
    writer.write_record(row).expect("in-memory csv");
}

fn finish_csv(writer: csv::Writer<Vec<u8>>) -> String {
    String::from_utf8(writer.into_inner().expect("in-memory csv")).expect("csv is utf-8")
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::llm::mock::MockBackend;
    use crate::runner::{run, RunOptions};
    use crate::spec::load_spec;
    use crate::tasks::{generate_bundle, write_bundle, TaskKind};
    use std::sync::Arc;

    #[test]
    fn report_bundle_emits_all_flanker_files() {
        let dir = tempfile::tempdir().unwrap();
        let bundle = generate_bundle(TaskKind::Flanker, 42).unwrap();
        let task_dir = dir.path().join("flanker");
        write_bundle(&bundle, &task_dir).unwrap();
        let mut spec = load_spec(&task_dir.join("stimuli.csv"), &task_dir.join("config.json")).unwrap();
        spec.stimuli.rows.truncate(8);
        spec.prompt.instruction_variants.truncate(2);
        spec.prompt.data_formats.truncate(3);

        let backends = spec
            .metadata
            .endpoints
            .iter()
            .map(|e| (e.label.clone(), Arc::new(MockBackend::fixed("A")) as Arc<dyn crate::llm::Backend>))
            .collect();
        let log = run(&spec, &backends, &RunOptions::default()).unwrap();

        let outdir = dir.path().join("out");
        let report = write_report(&outdir, &spec, &log, &ReportOptions::default()).unwrap();
        assert_eq!(report.record_count, 8 * 6);
        assert_eq!(report.failed_count, 0);

        for file in [
            "prompts/p0-f1.txt",
            "metrics/group_metrics.csv",
            "analysis/accuracy_matrix.csv",
            "analysis/accuracy_spread.csv",
            "analysis/flip_probability.csv",
            "analysis/predictions.csv",
            "analysis/human_baseline.csv",
            "summary.json",
        ] {
            assert!(outdir.join(file).exists(), "{file} missing");
        }
        let summary = std::fs::read_to_string(outdir.join("summary.json")).unwrap();
        assert!(summary.contains("flip_probability"));
        assert!(summary.contains("ordered pairs of distinct prompt variants"));
    }

    #[test]
    fn always_a_mock_supports_nothing_interesting_but_stays_consistent() {
        // "A" answers make congruent and incongruent both 50% A-keyed:
        // accuracy is the share of A-keyed stimuli, and the prediction check
        // still produces a verdict rather than erroring.
        let dir = tempfile::tempdir().unwrap();
        let bundle = generate_bundle(TaskKind::Flanker, 1).unwrap();
        let task_dir = dir.path().join("flanker");
        write_bundle(&bundle, &task_dir).unwrap();
        let mut spec = load_spec(&task_dir.join("stimuli.csv"), &task_dir.join("config.json")).unwrap();
        spec.prompt.instruction_variants.truncate(1);
        spec.prompt.data_formats.truncate(1);
        let backends = spec
            .metadata
            .endpoints
            .iter()
            .map(|e| (e.label.clone(), Arc::new(MockBackend::fixed("A")) as Arc<dyn crate::llm::Backend>))
            .collect();
        let log = run(&spec, &backends, &RunOptions::default()).unwrap();
        let report = compute_report(&spec, &log, &ReportOptions::default()).unwrap();
        assert_eq!(report.per_model.len(), 1);
        assert_eq!(report.per_model[0].predictions.len(), 1);
    }
}
