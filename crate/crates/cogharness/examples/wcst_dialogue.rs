//! Sequential WCST dialogue with a lag-2 agent.
//!
//! The agent keeps sorting by the previous rule for the first two trials
//! after each covert rule switch, then snaps to the current rule — the
//! classic preservation-error pattern. The runner threads Correct./
//! Incorrect. feedback between turns; the analysis recovers the [1, 1, 0,
//! ...] preservation curve and the closed-form accuracy.
//!
//! ```bash
//! cargo run --example wcst_dialogue
//! ```

use std::sync::Arc;

use cogharness::analysis::{accuracy_by_turn, preservation_curve, turn_correlation, PermutationConfig};
use cogharness::llm::mock::FnBackend;
use cogharness::llm::{ChatMessage, Role};
use cogharness::permute::enumerate_variants;
use cogharness::runner::run_sequential;
use cogharness::spec::load_spec;
use cogharness::tasks::{generate_bundle, plugin_for, write_bundle, TaskKind};

fn main() -> anyhow::Result<()> {
    let dir = tempfile::tempdir()?;
    write_bundle(&generate_bundle(TaskKind::Wcst, 42)?, dir.path())?;
    let mut spec = load_spec(&dir.path().join("stimuli.csv"), &dir.path().join("config.json"))?;
    // one prompt variant keeps the demo output short
    spec.prompt.instruction_variants.truncate(1);
    spec.prompt.data_formats.truncate(1);
    let variants = enumerate_variants(&spec.prompt)?;

    // per-turn answer key straight from the generated materials
    let key: Vec<(String, String, String)> = spec
        .stimuli
        .rows
        .iter()
        .map(|r| (r["correct_option"].clone(), r["previous_option"].clone(), r["rule"].clone()))
        .collect();
    let lag = 2usize;
    let mut offsets = Vec::with_capacity(key.len());
    let mut offset = 0usize;
    for (i, (_, _, rule)) in key.iter().enumerate() {
        if i > 0 && *rule != key[i - 1].2 {
            offset = 0;
        }
        offsets.push(offset);
        offset += 1;
    }
    let agent_key = key.clone();
    let agent = FnBackend::new(move |dialogue: &[ChatMessage]| {
        let turn = dialogue.iter().filter(|m| m.role == Role::Assistant).count();
        let (correct, previous, _) = &agent_key[turn];
        if !previous.is_empty() && offsets[turn] < lag {
            previous.clone()
        } else {
            correct.clone()
        }
    });

    let plugin = plugin_for("wcst", &spec)?;
    let log = run_sequential(&spec, Arc::new(agent), &variants, plugin)?;
    println!("dialogue of {} turns", log.records.len());

    let classified = |class: &str| log.records.iter().filter(|r| r.classification.as_deref() == Some(class)).count();
    println!(
        "correct {} / preservation {} / other {}",
        classified("correct"),
        classified("preservation"),
        classified("other")
    );

    println!("\npreservation curve (offset: preservation, other):");
    for point in preservation_curve(&log.records, &spec, 10)? {
        println!("  {:>2}: {:.2}  {:.2}  (n={})", point.offset, point.preservation_rate, point.other_rate, point.n);
    }

    let model = spec.metadata.endpoints[0].label.clone();
    let by_turn = accuracy_by_turn(&log.records, &model, &spec);
    let dips = by_turn.iter().filter(|t| t.accuracy < 1.0).count();
    println!("\nturns below perfect accuracy: {dips} (two per rule switch)");
    match turn_correlation(&log.records, &model, &spec, &PermutationConfig::default()) {
        Ok(c) => println!("accuracy vs turn: r = {:.3}, p = {:.4} (n = {})", c.r, c.p_value, c.n),
        Err(e) => println!("accuracy vs turn: {e}"),
    }
    Ok(())
}
