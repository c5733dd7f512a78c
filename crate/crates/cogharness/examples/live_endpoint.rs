//! Smoke test against a live chat-completions endpoint.
//!
//! Runs a five-stimulus flanker experiment against any OpenAI-compatible
//! server that reports logprobs (vLLM, llama.cpp server, etc.), records
//! target probabilities, and writes the full report bundle. The congruent
//! vs incongruent gap is printed as a directional observation only.
//!
//! ```bash
//! export COGHARNESS_LIVE_BASE_URL=http://localhost:8000/v1
//! export COGHARNESS_LIVE_MODEL=your-model-name
//! # optional: export COGHARNESS_API_KEY=...
//! cargo run --example live_endpoint
//! ```

use std::sync::Arc;

use cogharness::llm::http::HttpBackend;
use cogharness::permute::enumerate_variants;
use cogharness::report::{write_report, ReportOptions};
use cogharness::runner::{run_independent, TrialStatus};
use cogharness::scoring::aggregate;
use cogharness::spec::load_spec;
use cogharness::tasks::{generate_bundle, write_bundle, TaskKind};

fn main() -> anyhow::Result<()> {
    let Ok(base_url) = std::env::var("COGHARNESS_LIVE_BASE_URL") else {
        println!("COGHARNESS_LIVE_BASE_URL is not set; nothing to talk to. Skipping.");
        return Ok(());
    };
    let model = std::env::var("COGHARNESS_LIVE_MODEL").unwrap_or_else(|_| "default".into());

    let dir = tempfile::tempdir()?;
    write_bundle(&generate_bundle(TaskKind::Flanker, 42)?, dir.path())?;
    let mut spec = load_spec(&dir.path().join("stimuli.csv"), &dir.path().join("config.json"))?;
    spec.stimuli.rows.truncate(5);
    spec.prompt.instruction_variants.truncate(1);
    spec.prompt.data_formats.truncate(1);
    spec.metadata.endpoints[0].base_url = base_url.clone();
    spec.metadata.endpoints[0].model = model.clone();

    println!("running 5 flanker stimuli against {base_url} ({model})...");
    let backend = HttpBackend::new(&base_url, &model);
    let variants = enumerate_variants(&spec.prompt)?;
    let log = run_independent(&spec, Arc::new(backend), &variants)?;

    for record in &log.records {
        match record.status {
            TrialStatus::Ok => {
                let logprobs = record
                    .probability_payload
                    .as_ref()
                    .map(|p| p.token_logprobs.len())
                    .unwrap_or(0);
                println!(
                    "  {}: answered {:?}, target {}, {} target-token logprob(s){}",
                    record.stimulus_id,
                    record.parsed_answer,
                    record.target,
                    logprobs,
                    record.score_error.as_deref().map(|e| format!(" (score: {e})")).unwrap_or_default(),
                );
            }
            TrialStatus::Failed => println!("  {}: FAILED {:?}", record.stimulus_id, record.error),
        }
    }

    let out = dir.path().join("report");
    write_report(&out, &spec, &log, &ReportOptions::default())?;
    println!("report written under {}", out.display());

    let metrics = aggregate(&log.records, &spec)?;
    let value = |group: &str| {
        metrics.iter().find(|m| m.group_name == group && m.metric_name == "accuracy").map(|m| m.value)
    };
    println!(
        "congruent {:?} vs incongruent {:?} accuracy (directional observation, not asserted)",
        value("congruent"),
        value("incongruent")
    );
    Ok(())
}
