//! Flanker task: respond to the center letter, ignore the flankers.
//!
//! Letters X and C map to response key A; letters B and V map to key L.
//! A string is congruent when its flankers map to the same key as its
//! center, incongruent otherwise. Lengths are odd so "the one in the
//! center" is unambiguous.

use std::collections::BTreeMap;

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::{derive_rng, TaskError};
use crate::spec::{SpecError, StimulusTable};

pub const LETTERS: [char; 4] = ['X', 'C', 'B', 'V'];
pub const ALLOWED_LENGTHS: [usize; 4] = [5, 7, 9, 11];

/// Response key for a letter: X/C answer A, B/V answer L.
pub fn key_for(letter: char) -> Option<char> {
    match letter {
        'X' | 'C' => Some('A'),
        'B' | 'V' => Some('L'),
        _ => None,
    }
}

/// The other letter sharing a response key.
pub fn partner(letter: char) -> Option<char> {
    match letter {
        'X' => Some('C'),
        'C' => Some('X'),
        'B' => Some('V'),
        'V' => Some('B'),
        _ => None,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FlankerCondition {
    Congruent,
    Incongruent,
}

impl FlankerCondition {
    pub fn as_str(self) -> &'static str {
        match self {
            FlankerCondition::Congruent => "congruent",
            FlankerCondition::Incongruent => "incongruent",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FlankerStimulus {
    pub letters: String,
    pub center: char,
    pub flanker: char,
    pub condition: FlankerCondition,
    pub correct_key: char,
}

/// Generate a balanced stimulus set: `n_stimuli`/2 congruent and
/// incongruent strings, with lengths assigned round-robin so every length
/// appears equally often in each condition.
pub fn gen_flanker(seed: u64, n_stimuli: usize, lengths: &[usize]) -> Result<Vec<FlankerStimulus>, TaskError> {
    if n_stimuli == 0 || !n_stimuli.is_multiple_of(2) {
        return Err(TaskError::InvalidParams { detail: format!("n_stimuli must be even and positive, got {n_stimuli}") });
    }
    if lengths.is_empty() || lengths.iter().any(|len| !ALLOWED_LENGTHS.contains(len)) {
        return Err(TaskError::InvalidParams {
            detail: format!("lengths must be drawn from {ALLOWED_LENGTHS:?}, got {lengths:?}"),
        });
    }
    let mut rng = derive_rng(seed, 0);
    let mut out = Vec::with_capacity(n_stimuli);
    for pair in 0..n_stimuli / 2 {
        let length = lengths[pair % lengths.len()];
        for condition in [FlankerCondition::Congruent, FlankerCondition::Incongruent] {
            let center = LETTERS[rng.random_range(0..LETTERS.len())];
            let flanker = match condition {
                FlankerCondition::Congruent => partner(center).expect("task letter"),
                FlankerCondition::Incongruent => {
                    let opposite: Vec<char> =
                        LETTERS.iter().copied().filter(|&l| key_for(l) != key_for(center)).collect();
                    opposite[rng.random_range(0..opposite.len())]
                }
            };
            let mut letters = vec![flanker; length];
            letters[length / 2] = center;
            out.push(FlankerStimulus {
                letters: letters.into_iter().collect(),
                center,
                flanker,
                condition,
                correct_key: key_for(center).expect("task letter"),
            });
        }
    }
    Ok(out)
}

/// Condition implied by a letter string, if it is a well-formed stimulus.
pub fn classify_letters(letters: &str) -> Option<FlankerCondition> {
    let chars: Vec<char> = letters.chars().collect();
    if chars.len().is_multiple_of(2) || chars.is_empty() {
        return None;
    }
    let center = chars[chars.len() / 2];
    let flanker = *chars.first()?;
    if chars.iter().enumerate().any(|(i, &c)| i != chars.len() / 2 && c != flanker) {
        return None;
    }
    if key_for(center)? == key_for(flanker)? {
        Some(FlankerCondition::Congruent)
    } else {
        Some(FlankerCondition::Incongruent)
    }
}

/// Export stimuli as a table (columns: id, letters, length, condition, target).
pub fn stimulus_table(stimuli: &[FlankerStimulus]) -> Result<StimulusTable, SpecError> {
    let columns: Vec<String> = ["id", "letters", "length", "condition", "target"].iter().map(|s| s.to_string()).collect();
    let rows = stimuli
        .iter()
        .enumerate()
        .map(|(i, stimulus)| {
            let mut row = BTreeMap::new();
            row.insert("id".into(), format!("f{i:03}"));
            row.insert("letters".into(), stimulus.letters.clone());
            row.insert("length".into(), stimulus.letters.chars().count().to_string());
            row.insert("condition".into(), stimulus.condition.as_str().to_string());
            row.insert("target".into(), stimulus.correct_key.to_string());
            row
        })
        .collect();
    StimulusTable::new(columns, rows, "id".into())
}

/// Instruction variants, each with one congruent and one incongruent
/// worked example.
pub const INSTRUCTIONS: [&str; 3] = [
    "You will see a string of letters. Respond only to the letter in the center of the string and ignore \
all of the surrounding letters.\n\
If the center letter is 'X' or 'C', respond with 'A'.\n\
If the center letter is 'B' or 'V', respond with 'L'.\n\n\
For example, for the string XXCXX the center letter is C, so the correct response is A. \
For the string BBCBB the center letter is also C, so the correct response is still A, even though the \
surrounding letters would call for L.\n\n\
Respond with only the single letter A or L.\n\n<<DATA>>",
    "A row of letters will be shown to you. Pay attention only to the middle letter and disregard every \
other letter in the row.\n\
Middle letter 'X' or 'C': answer 'A'.\n\
Middle letter 'B' or 'V': answer 'L'.\n\n\
Two examples: in XXCXX the middle letter is C, so the answer is A. In BBCBB the middle letter is again C, \
so the answer is again A, despite the B letters around it mapping to L.\n\n\
Answer with exactly one letter, A or L.\n\n<<DATA>>",
    "Each item is a string of letters. Base your response on the center letter alone; the flanking letters \
are distractors.\n\
When the center letter is 'X' or 'C', press 'A'.\n\
When the center letter is 'B' or 'V', press 'L'.\n\n\
Worked examples: XXCXX has center C, so press A. BBCBB also has center C, so press A there too, ignoring \
the flanking B letters.\n\n\
Give only the single letter A or L as your answer.\n\n<<DATA>>",
];

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn paper_examples_classify_as_stated() {
        assert_eq!(classify_letters("XXCXX"), Some(FlankerCondition::Congruent));
        assert_eq!(classify_letters("BBCBB"), Some(FlankerCondition::Incongruent));
    }

    #[test]
    fn default_generation_is_balanced_16_16() {
        let stimuli = gen_flanker(42, 32, &ALLOWED_LENGTHS).unwrap();
        assert_eq!(stimuli.len(), 32);
        let congruent = stimuli.iter().filter(|s| s.condition == FlankerCondition::Congruent).count();
        assert_eq!(congruent, 16);
        for stimulus in &stimuli {
            assert_eq!(classify_letters(&stimulus.letters), Some(stimulus.condition), "{}", stimulus.letters);
            assert_eq!(stimulus.correct_key, key_for(stimulus.center).unwrap());
            assert!(ALLOWED_LENGTHS.contains(&stimulus.letters.chars().count()));
        }
        // lengths balanced per condition
        for length in ALLOWED_LENGTHS {
            let per_condition = |cond: FlankerCondition| {
                stimuli
                    .iter()
                    .filter(|s| s.condition == cond && s.letters.chars().count() == length)
                    .count()
            };
            assert_eq!(per_condition(FlankerCondition::Congruent), 4, "length {length}");
            assert_eq!(per_condition(FlankerCondition::Incongruent), 4, "length {length}");
        }
    }

    #[test]
    fn correct_key_depends_only_on_center() {
        let stimuli = gen_flanker(5, 64, &[5, 7]).unwrap();
        for s in &stimuli {
            assert_eq!(s.correct_key, key_for(s.center).unwrap());
        }
    }

    #[test]
    fn condition_is_symmetric_under_key_preserving_swaps() {
        let swap = |text: &str, a: char, b: char| -> String {
            text.chars().map(|c| if c == a { b } else if c == b { a } else { c }).collect()
        };
        for letters in ["XXCXX", "BBCBB", "VVXVV", "CCCCC"] {
            let base = classify_letters(letters);
            assert_eq!(classify_letters(&swap(letters, 'X', 'C')), base, "{letters} X<->C");
            assert_eq!(classify_letters(&swap(letters, 'B', 'V')), base, "{letters} B<->V");
        }
    }

    #[test]
    fn odd_parameters_are_rejected() {
        assert!(gen_flanker(1, 31, &[5]).is_err());
        assert!(gen_flanker(1, 32, &[6]).is_err());
        assert!(gen_flanker(1, 32, &[]).is_err());
    }

    #[test]
    fn generation_is_deterministic() {
        assert_eq!(gen_flanker(9, 32, &ALLOWED_LENGTHS).unwrap(), gen_flanker(9, 32, &ALLOWED_LENGTHS).unwrap());
    }
}
