//! Golden-file checks for the shipped prompt defaults.
//!
//! The byte-exact templates of the ten data formats and the rendered first
//! WCST prompt variant are frozen under `golden/`. Regenerate with
//! `UPDATE_GOLDEN=1 cargo test --test golden_prompts` after an intentional
//! change, and eyeball the diff.

use std::path::{Path, PathBuf};

use cogharness::permute::{default_data_formats, enumerate_variants, render_prompt, PromptTemplate};
use cogharness::tasks::wcst;

fn golden_dir() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("golden")
}

fn check_golden(relative: &str, actual: &str) {
    let path = golden_dir().join(relative);
    if std::env::var("UPDATE_GOLDEN").is_ok() {
        std::fs::create_dir_all(path.parent().unwrap()).unwrap();
        std::fs::write(&path, actual).unwrap();
        return;
    }
    let expected = std::fs::read_to_string(&path)
        .unwrap_or_else(|e| panic!("missing golden file {} ({e}); run with UPDATE_GOLDEN=1", path.display()));
    assert_eq!(actual, expected, "golden mismatch for {relative}");
}

#[test]
fn ten_default_formats_are_frozen() {
    let columns = vec!["card".to_string(), "options".to_string()];
    let formats = default_data_formats(&columns);
    assert_eq!(formats.len(), 10);
    for format in &formats {
        check_golden(&format!("formats/wcst_format_{:02}.txt", format.id), &format.template);
    }
}

#[test]
fn wcst_first_variant_renders_the_frozen_trial_text() {
    let columns = vec!["card".to_string(), "options".to_string()];
    let template = PromptTemplate::new(
        wcst::INSTRUCTIONS.iter().map(|s| s.to_string()).collect(),
        default_data_formats(&columns),
    );
    let variants = enumerate_variants(&template).unwrap();
    let first = &variants[0];
    assert_eq!(first.variant_id.to_string(), "p0-f1");

    let trial = wcst::gen_wcst_trial(42, 0, wcst::Rule::Count, None);
    let table = wcst::stimulus_table(&[trial]).unwrap();
    let format = template.format(1).unwrap();
    let rendered = render_prompt(first, format, &table.rows[0], &template.data_slot_marker).unwrap();
    check_golden("prompts/wcst_p0-f1.txt", &rendered);
}

#[test]
fn format_descriptors_are_stable_ids() {
    let columns = vec!["q".to_string()];
    let descriptors: Vec<String> = default_data_formats(&columns).into_iter().map(|f| f.descriptor).collect();
    let listing = descriptors.join("\n");
    check_golden("formats/descriptors.txt", &listing);
}
