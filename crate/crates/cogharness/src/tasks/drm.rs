//! DRM false-memory task.
//!
//! The model studies themed word lists, then answers a recognition quiz one
//! word per turn: Z if the word was on a studied list, M otherwise. Quiz
//! items are of three kinds — words actually studied, each list's omitted
//! critical word, and unrelated control words — so a gap between critical
//! and control accuracy indicates gist-driven false recognition.

use std::collections::{BTreeMap, BTreeSet};

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use super::drm_words::{CONTROL_WORDS, DRM_LISTS};
use super::{derive_rng, TaskError};
use crate::spec::{SpecError, StimulusTable};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DrmLabel {
    Seen,
    UnseenCritical,
    UnseenControl,
}

impl DrmLabel {
    pub fn as_str(self) -> &'static str {
        match self {
            DrmLabel::Seen => "seen",
            DrmLabel::UnseenCritical => "unseen_critical",
            DrmLabel::UnseenControl => "unseen_control",
        }
    }

    /// Gold answer: Z marks a studied word, M an unstudied one.
    pub fn target(self) -> char {
        match self {
            DrmLabel::Seen => 'Z',
            DrmLabel::UnseenCritical | DrmLabel::UnseenControl => 'M',
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct StudyList {
    pub critical: String,
    pub words: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct QuizItem {
    /// Presentation form (first letter capitalized).
    pub word: String,
    pub label: DrmLabel,
    pub target: char,
    /// Critical word of the originating list, for seen items.
    pub source_list: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DrmMaterials {
    pub study_lists: Vec<StudyList>,
    /// Quiz items in presentation order (a seeded random permutation).
    pub quiz: Vec<QuizItem>,
    pub control_words: Vec<String>,
    pub rng_seed: u64,
}

/// The 18 built-in study lists.
pub fn default_study_lists() -> Vec<(String, Vec<String>)> {
    DRM_LISTS
        .iter()
        .map(|(critical, words)| (critical.to_string(), words.iter().map(|w| w.to_string()).collect()))
        .collect()
}

pub fn default_control_words() -> Vec<String> {
    CONTROL_WORDS.iter().map(|w| w.to_string()).collect()
}

fn capitalize(word: &str) -> String {
    let mut chars = word.chars();
    match chars.next() {
        Some(first) => first.to_uppercase().collect::<String>() + chars.as_str(),
        None => String::new(),
    }
}

/// Assemble study materials and the recognition quiz.
///
/// The seen quiz items are the first `seen_per_list` words of each list in
/// list order (a frozen, reproducible choice); the seed randomizes only the
/// quiz presentation order. Study lists, criticals, and controls must be
/// pairwise disjoint.
pub fn build_drm(
    seed: u64,
    study_lists: &[(String, Vec<String>)],
    seen_per_list: usize,
    control_words: &[String],
) -> Result<DrmMaterials, TaskError> {
    if study_lists.is_empty() {
        return Err(TaskError::InvalidParams { detail: "need at least one study list".into() });
    }
    for (critical, words) in study_lists {
        if words.len() < seen_per_list {
            return Err(TaskError::InvalidParams {
                detail: format!("list `{critical}` has {} words, fewer than seen_per_list {seen_per_list}", words.len()),
            });
        }
    }
    if seen_per_list == 0 {
        return Err(TaskError::InvalidParams { detail: "seen_per_list must be >= 1".into() });
    }

    let mut studied = BTreeSet::new();
    for (critical, words) in study_lists {
        for word in words {
            if !studied.insert(word.to_lowercase()) {
                return Err(TaskError::Overlap { word: word.clone(), context: format!("appears twice (list `{critical}`)") });
            }
        }
    }
    let mut unseen = BTreeSet::new();
    for (critical, _) in study_lists {
        if studied.contains(&critical.to_lowercase()) {
            return Err(TaskError::Overlap { word: critical.clone(), context: "critical word appears in a study list".into() });
        }
        if !unseen.insert(critical.to_lowercase()) {
            return Err(TaskError::Overlap { word: critical.clone(), context: "duplicate critical word".into() });
        }
    }
    for control in control_words {
        if studied.contains(&control.to_lowercase()) {
            return Err(TaskError::Overlap { word: control.clone(), context: "control word appears in a study list".into() });
        }
        if !unseen.insert(control.to_lowercase()) {
            return Err(TaskError::Overlap { word: control.clone(), context: "control word collides with a critical word".into() });
        }
    }

    let mut quiz = Vec::new();
    for (critical, words) in study_lists {
        for word in words.iter().take(seen_per_list) {
            quiz.push(QuizItem {
                word: capitalize(word),
                label: DrmLabel::Seen,
                target: DrmLabel::Seen.target(),
                source_list: Some(critical.clone()),
            });
        }
    }
    for (critical, _) in study_lists {
        quiz.push(QuizItem {
            word: capitalize(critical),
            label: DrmLabel::UnseenCritical,
            target: DrmLabel::UnseenCritical.target(),
            source_list: Some(critical.clone()),
        });
    }
    for control in control_words {
        quiz.push(QuizItem {
            word: capitalize(control),
            label: DrmLabel::UnseenControl,
            target: DrmLabel::UnseenControl.target(),
            source_list: None,
        });
    }
    let mut rng = derive_rng(seed, 0);
    quiz.shuffle(&mut rng);

    Ok(DrmMaterials {
        study_lists: study_lists
            .iter()
            .map(|(critical, words)| StudyList {
                critical: critical.clone(),
                words: words.iter().map(|w| capitalize(w)).collect(),
            })
            .collect(),
        quiz,
        control_words: control_words.iter().map(|w| capitalize(w)).collect(),
        rng_seed: seed,
    })
}

impl DrmMaterials {
    /// Case-insensitive label lookup over the quiz.
    pub fn label_of(&self, word: &str) -> Option<(DrmLabel, char)> {
        self.quiz
            .iter()
            .find(|item| item.word.eq_ignore_ascii_case(word))
            .map(|item| (item.label, item.target))
    }

    /// The study block shown in the first message: every list in full.
    pub fn study_text(&self) -> String {
        self.study_lists
            .iter()
            .enumerate()
            .map(|(i, list)| format!("List {}: {}", i + 1, list.words.join(", ")))
            .collect::<Vec<_>>()
            .join("\n")
    }

    /// Export the quiz as a stimuli table (columns: id, word, label, list, target).
    pub fn stimulus_table(&self) -> Result<StimulusTable, SpecError> {
        let columns: Vec<String> = ["id", "word", "label", "list", "target"].iter().map(|s| s.to_string()).collect();
        let rows = self
            .quiz
            .iter()
            .enumerate()
            .map(|(i, item)| {
                let mut row = BTreeMap::new();
                row.insert("id".into(), format!("q{i:03}"));
                row.insert("word".into(), item.word.clone());
                row.insert("label".into(), item.label.as_str().to_string());
                row.insert("list".into(), item.source_list.clone().unwrap_or_default());
                row.insert("target".into(), item.target.to_string());
                row
            })
            .collect();
        StimulusTable::new(columns, rows, "id".into())
    }

    /// Instruction variants with the study lists embedded; the quiz words
    /// arrive one per dialogue turn through the data slot.
    pub fn instructions(&self) -> [String; 3] {
        let lists = self.study_text();
        [
            format!(
                "You will study several word lists and then take a recognition quiz. First, study these lists \
carefully:\n\n{lists}\n\n\
In the quiz, you will be shown one word at a time. Respond with the letter 'Z' if the word was on one of \
the studied lists, or the letter 'M' if it was not. Respond with only the single letter Z or M.\n\n<<DATA>>"
            ),
            format!(
                "Below are word lists to memorize; a recognition test follows. Read them closely:\n\n{lists}\n\n\
The test presents one word per turn. Answer 'Z' when the word appeared on any of the lists above, and 'M' \
when it did not. Your whole answer must be the single letter Z or M.\n\n<<DATA>>"
            ),
            format!(
                "Commit the following word lists to memory. Afterwards you will be quizzed on them:\n\n{lists}\n\n\
Each quiz turn shows a single word. Reply with 'Z' for a word that was on the studied lists and 'M' for a \
word that was not. Reply with exactly one letter, Z or M.\n\n<<DATA>>"
            ),
        ]
    }
}
