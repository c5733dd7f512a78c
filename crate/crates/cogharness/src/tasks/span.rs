//! Forward and backward digit span.
//!
//! Stimuli are random digit lists; the target is the list itself (forward)
//! or its reversal (backward). Scoring is content accuracy: only digit
//! order matters, separators are ignored (see [`crate::scoring`]).

use std::collections::BTreeMap;

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::{derive_rng, TaskError};
use crate::spec::{SpecError, StimulusTable};

/// Default lengths: one human-scale list plus super-human lengths.
pub const DEFAULT_LENGTHS: [usize; 5] = [7, 15, 20, 30, 50];
pub const DEFAULT_PER_LENGTH: usize = 14;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Direction {
    Forward,
    Backward,
}

impl Direction {
    pub fn as_str(self) -> &'static str {
        match self {
            Direction::Forward => "forward",
            Direction::Backward => "backward",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SpanStimulus {
    pub digits: Vec<u8>,
    pub direction: Direction,
    /// Equal to `digits` forward, reversed backward.
    pub target: Vec<u8>,
}

/// Generate `lengths.len() * per_length` stimuli with digits i.i.d. uniform
/// over 0..=9 from the seeded generator.
pub fn gen_span(seed: u64, lengths: &[usize], per_length: usize, direction: Direction) -> Result<Vec<SpanStimulus>, TaskError> {
    if per_length == 0 || lengths.is_empty() || lengths.contains(&0) {
        return Err(TaskError::InvalidParams {
            detail: format!("need nonzero lengths and per_length >= 1, got {lengths:?} x {per_length}"),
        });
    }
    let mut rng = derive_rng(seed, 0);
    let mut out = Vec::with_capacity(lengths.len() * per_length);
    for &length in lengths {
        for _ in 0..per_length {
            let digits: Vec<u8> = (0..length).map(|_| rng.random_range(0..=9u8)).collect();
            let target = match direction {
                Direction::Forward => digits.clone(),
                Direction::Backward => digits.iter().rev().copied().collect(),
            };
            out.push(SpanStimulus { digits, direction, target });
        }
    }
    Ok(out)
}

/// Space-separated rendering used in stimuli files and targets.
pub fn digits_text(digits: &[u8]) -> String {
    digits.iter().map(|d| d.to_string()).collect::<Vec<_>>().join(" ")
}

/// Export stimuli as a table (columns: id, digits, length, direction, target).
pub fn stimulus_table(stimuli: &[SpanStimulus]) -> Result<StimulusTable, SpecError> {
    let columns: Vec<String> = ["id", "digits", "length", "direction", "target"].iter().map(|s| s.to_string()).collect();
    let rows = stimuli
        .iter()
        .enumerate()
        .map(|(i, stimulus)| {
            let mut row = BTreeMap::new();
            row.insert("id".into(), format!("s{i:03}"));
            row.insert("digits".into(), digits_text(&stimulus.digits));
            row.insert("length".into(), stimulus.digits.len().to_string());
            row.insert("direction".into(), stimulus.direction.as_str().to_string());
            row.insert("target".into(), digits_text(&stimulus.target));
            row
        })
        .collect();
    StimulusTable::new(columns, rows, "id".into())
}

/// Instruction variants for a direction, each with two worked examples.
pub fn instructions(direction: Direction) -> [String; 3] {
    match direction {
        Direction::Forward => [
            "You will be shown a list of digits. Repeat the list back in exactly the same order.\n\n\
Two examples:\nDigits: 3 9 4. The correct answer is: 3 9 4\nDigits: 5 0 2 7. The correct answer is: 5 0 2 7\n\n\
Respond with only the digits, in order, separated by spaces.\n\n<<DATA>>"
                .to_string(),
            "A digit list follows. Your task is to echo it back without changing the order of the digits.\n\n\
For example: given the digits 3 9 4, answer 3 9 4. Given the digits 5 0 2 7, answer 5 0 2 7.\n\n\
Reply with the digits alone, kept in their original order.\n\n<<DATA>>"
                .to_string(),
            "Read the digit sequence below and reproduce it in the same order it was presented.\n\n\
Examples: the sequence 3 9 4 should be answered with 3 9 4; the sequence 5 0 2 7 should be answered with 5 0 2 7.\n\n\
Your answer must contain just the digits in presentation order.\n\n<<DATA>>"
                .to_string(),
        ],
        Direction::Backward => [
            "You will be shown a list of digits. Repeat the list back in reverse order, from the last digit \
to the first.\n\n\
Two examples:\nDigits: 3 9 4. The correct answer is: 4 9 3\nDigits: 5 0 2 7. The correct answer is: 7 2 0 5\n\n\
Respond with only the digits, in reversed order, separated by spaces.\n\n<<DATA>>"
                .to_string(),
            "A digit list follows. Your task is to say it backwards: start from the final digit and end with \
the first one.\n\n\
For example: given the digits 3 9 4, answer 4 9 3. Given the digits 5 0 2 7, answer 7 2 0 5.\n\n\
Reply with the digits alone, in reversed order.\n\n<<DATA>>"
                .to_string(),
            "Read the digit sequence below and reproduce it in the opposite order from how it was presented.\n\n\
Examples: the sequence 3 9 4 should be answered with 4 9 3; the sequence 5 0 2 7 should be answered with 7 2 0 5.\n\n\
Your answer must contain just the digits, reversed.\n\n<<DATA>>"
                .to_string(),
        ],
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn backward_target_is_the_reversal() {
        let stimuli = gen_span(1, &[3], 1, Direction::Backward).unwrap();
        let s = &stimuli[0];
        let reversed: Vec<u8> = s.digits.iter().rev().copied().collect();
        assert_eq!(s.target, reversed);
    }

    #[test]
    fn forward_target_is_the_identity() {
        for s in gen_span(2, &[7, 15], 3, Direction::Forward).unwrap() {
            assert_eq!(s.target, s.digits);
        }
    }

    #[test]
    fn default_parameters_give_70_stimuli_evenly_split() {
        let stimuli = gen_span(42, &DEFAULT_LENGTHS, DEFAULT_PER_LENGTH, Direction::Backward).unwrap();
        assert_eq!(stimuli.len(), 70);
        for &length in &DEFAULT_LENGTHS {
            assert_eq!(stimuli.iter().filter(|s| s.digits.len() == length).count(), 14, "length {length}");
        }
    }

    #[test]
    fn double_reversal_is_identity() {
        for s in gen_span(3, &DEFAULT_LENGTHS, 2, Direction::Backward).unwrap() {
            let back: Vec<u8> = s.target.iter().rev().copied().collect();
            assert_eq!(back, s.digits);
        }
    }

    #[test]
    fn generation_is_deterministic_and_digits_in_range() {
        let a = gen_span(11, &[7, 20], 4, Direction::Forward).unwrap();
        let b = gen_span(11, &[7, 20], 4, Direction::Forward).unwrap();
        assert_eq!(a, b);
        assert!(a.iter().flat_map(|s| &s.digits).all(|&d| d <= 9));
    }
}
