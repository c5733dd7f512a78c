//! Durable run logs and resume.
//!
//! A run appends newline-delimited records under a header carrying the
//! resolved config hash. Simulating an interrupted run by truncating the
//! log, `resume` re-plans only the missing cells and refuses to touch a
//! log whose header hash no longer matches the spec.
//!
//! ```bash
//! cargo run --example resume_run
//! ```

use std::collections::BTreeMap;
use std::sync::Arc;

use cogharness::llm::mock::MockBackend;
use cogharness::llm::Backend;
use cogharness::runner::{resume, run, RunLog, RunOptions, RunnerError};
use cogharness::spec::load_spec;
use cogharness::tasks::{generate_bundle, write_bundle, TaskKind};

fn main() -> anyhow::Result<()> {
    let dir = tempfile::tempdir()?;
    write_bundle(&generate_bundle(TaskKind::Flanker, 42)?, dir.path())?;
    let mut spec = load_spec(&dir.path().join("stimuli.csv"), &dir.path().join("config.json"))?;
    spec.prompt.instruction_variants.truncate(1); // 10 variants x 32 stimuli

    let backends: BTreeMap<String, Arc<dyn Backend>> = spec
        .metadata
        .endpoints
        .iter()
        .map(|e| (e.label.clone(), Arc::new(MockBackend::fixed("A")) as Arc<dyn Backend>))
        .collect();

    let log_path = dir.path().join("flanker.ndjson");
    let options = RunOptions { log_path: Some(log_path.clone()), resume: false, progress: false };
    let log = run(&spec, &backends, &options)?;
    println!("fresh run: {} records -> {}", log.records.len(), log_path.display());

    // simulate an interrupted run: keep the header plus 100 records
    let text = std::fs::read_to_string(&log_path)?;
    let kept: Vec<&str> = text.lines().take(101).collect();
    std::fs::write(&log_path, kept.join("\n") + "\n")?;
    println!("truncated log to {} records", kept.len() - 1);

    let resumed = resume(&log_path, &spec, &backends)?;
    println!("resume completed the run: {} records total", resumed.records.len());
    let reloaded = RunLog::read(&log_path)?;
    println!("log on disk: {} records, {} unique keys", reloaded.records.len(), reloaded.replay().len());

    // a different seed is a different experiment; resume refuses
    spec.metadata.seed = 1234;
    match resume(&log_path, &spec, &backends) {
        Err(RunnerError::ConfigMismatch { expected, found }) => {
            println!("config mismatch rejected (log {expected}, spec {found})")
        }
        other => anyhow::bail!("expected a config mismatch, got {other:?}"),
    }
    Ok(())
}
