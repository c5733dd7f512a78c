//! Build the DRM false-memory materials.
//!
//! Eighteen themed study lists, a recognition quiz of studied words, the
//! omitted critical words, and unrelated controls — quiz order seeded. The
//! gap between critical-word and control-word accuracy is the false-memory
//! signature the experiment measures.
//!
//! ```bash
//! cargo run --example drm_quiz
//! ```

use cogharness::tasks::drm::{build_drm, default_control_words, default_study_lists, DrmLabel};

fn main() -> anyhow::Result<()> {
    let materials = build_drm(42, &default_study_lists(), 7, &default_control_words())?;

    println!("study lists: {}", materials.study_lists.len());
    let first = &materials.study_lists[0];
    println!("  e.g. the {} list: {}", first.critical.to_uppercase(), first.words.join(", "));

    let count = |label: DrmLabel| materials.quiz.iter().filter(|q| q.label == label).count();
    println!("\nquiz items: {} total", materials.quiz.len());
    println!("  seen            {}", count(DrmLabel::Seen));
    println!("  unseen critical {}", count(DrmLabel::UnseenCritical));
    println!("  unseen control  {}", count(DrmLabel::UnseenControl));

    println!("\nfirst five quiz turns (seeded order):");
    for item in materials.quiz.iter().take(5) {
        println!("  {:<12} {:<16} target {}", item.word, item.label.as_str(), item.target);
    }

    for probe in ["sleep", "Rest", "Robber"] {
        let (label, target) = materials.label_of(probe).expect("probe word in quiz");
        println!("\n`{probe}` is {} (gold answer {target})", label.as_str());
    }
    Ok(())
}
