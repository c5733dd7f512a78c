//! Run the flanker experiment offline against a scripted mock backend.
//!
//! The mock plays a "flanker follower": it answers with the response key of
//! the flanking letters instead of the center letter, which nails every
//! congruent string and misses every incongruent one. The run produces 960
//! trial records (32 stimuli x 30 prompt variants) and the aggregated
//! metrics show the split.
//!
//! ```bash
//! cargo run --example run_mock_flanker
//! ```

use std::sync::Arc;

use cogharness::analysis::check_predictions;
use cogharness::llm::mock::FnBackend;
use cogharness::llm::{ChatMessage, Role};
use cogharness::permute::enumerate_variants;
use cogharness::runner::run_independent;
use cogharness::scoring::aggregate;
use cogharness::spec::load_spec;
use cogharness::tasks::{generate_bundle, write_bundle, TaskKind};

fn main() -> anyhow::Result<()> {
    let dir = tempfile::tempdir()?;
    write_bundle(&generate_bundle(TaskKind::Flanker, 42)?, dir.path())?;
    let spec = load_spec(&dir.path().join("stimuli.csv"), &dir.path().join("config.json"))?;
    let variants = enumerate_variants(&spec.prompt)?;

    let backend = FnBackend::new(|dialogue: &[ChatMessage]| {
        let user = dialogue.iter().rev().find(|m| m.role == Role::User).unwrap();
        let letters = user
            .content
            .split(|c: char| !matches!(c, 'X' | 'C' | 'B' | 'V'))
            .rfind(|run| run.len() >= 5)
            .unwrap();
        match letters.chars().next().unwrap() {
            'X' | 'C' => "A".to_string(),
            _ => "L".to_string(),
        }
    })
    .with_token_logprob(-0.105360516); // ~= ln(0.9)

    let log = run_independent(&spec, Arc::new(backend), &variants)?;
    println!("ran {} trials", log.records.len());

    let metrics = aggregate(&log.records, &spec)?;
    println!("\ngroup             metric              n     value  excluded");
    for m in &metrics {
        println!("{:<17} {:<18} {:>4}  {:>8.4}  {:>8}", m.group_name, m.metric_name, m.n, m.value, m.excluded);
    }

    let verdicts = check_predictions(&spec.predictions.predictions, &metrics, 0.0)?;
    for v in &verdicts {
        println!(
            "\nprediction {} {} > {}: {} ({:.3} vs {:.3})",
            v.metric,
            v.group_a,
            v.group_b,
            v.verdict.as_str(),
            v.value_a,
            v.value_b
        );
    }
    Ok(())
}
