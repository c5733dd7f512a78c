//! Load and validate a declarative experiment.
//!
//! Generates the built-in flanker experiment into a temp directory, loads
//! it back through the same path user experiments take (stimuli CSV + JSON
//! config), and prints what the validated spec contains.
//!
//! ```bash
//! cargo run --example validate_spec
//! ```

use cogharness::permute::enumerate_variants;
use cogharness::spec::load_spec;
use cogharness::tasks::{generate_bundle, write_bundle, TaskKind};

fn main() -> anyhow::Result<()> {
    let dir = tempfile::tempdir()?;
    let bundle = generate_bundle(TaskKind::Flanker, 42)?;
    write_bundle(&bundle, dir.path())?;

    let spec = load_spec(&dir.path().join("stimuli.csv"), &dir.path().join("config.json"))?;
    println!("experiment: {}", spec.metadata.experiment_name);
    println!("stimuli:    {} rows, id column `{}`", spec.stimuli.len(), spec.stimuli.id_column);
    for (group, members) in spec.group_members() {
        println!("group:      {group} -> {} stimuli", members.len());
    }
    for metric in &spec.metrics.metrics {
        println!("metric:     {} ({:?}, parser {})", metric.name, metric.kind, metric.parser);
    }
    let variants = enumerate_variants(&spec.prompt)?;
    println!("prompts:    {} instruction variants x {} data formats = {} prompt variants",
        spec.prompt.instruction_variants.len(),
        spec.prompt.data_formats.len(),
        variants.len(),
    );
    println!("config hash: {}", spec.config_hash());
    Ok(())
}
