//! Enumerate the default prompt permutations.
//!
//! Three instruction paraphrases crossed with ten data formats give the 30
//! prompt variants an experiment runs under. The data formats differ only
//! in separators, whitespace, and casing; this prints each variant id with
//! its format descriptor, then one fully rendered prompt.
//!
//! ```bash
//! cargo run --example enumerate_prompts
//! ```

use cogharness::permute::{default_data_formats, enumerate_variants, render_prompt, PromptTemplate};
use cogharness::tasks::wcst;

fn main() -> anyhow::Result<()> {
    let columns = vec!["card".to_string(), "options".to_string()];
    let template = PromptTemplate::new(
        wcst::INSTRUCTIONS.iter().map(|s| s.to_string()).collect(),
        default_data_formats(&columns),
    );
    let variants = enumerate_variants(&template)?;
    println!("{} prompt variants:", variants.len());
    for variant in &variants {
        let descriptor = template.format(variant.variant_id.format).map(|f| f.descriptor.as_str()).unwrap_or("");
        println!("  {}  paraphrase {}, format: {}", variant.variant_id, variant.variant_id.paraphrase, descriptor);
    }

    // render one variant on a concrete trial
    let trial = wcst::gen_wcst_trial(42, 0, wcst::Rule::Color, None);
    let table = wcst::stimulus_table(&[trial])?;
    let format = template.format(2).expect("format 2 ships");
    let variant = variants.iter().find(|v| v.variant_id.format == 2).unwrap();
    let rendered = render_prompt(variant, format, &table.rows[0], &template.data_slot_marker)?;
    println!("\n--- {} rendered on one trial ---\n{rendered}", variant.variant_id);
    Ok(())
}
