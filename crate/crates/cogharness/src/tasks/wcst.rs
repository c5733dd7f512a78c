//! Wisconsin Card Sorting Task, text-only form.
//!
//! Each trial shows a target card and four options. Exactly one option
//! matches the target's color, one its shape, one its count, and the fourth
//! matches nothing; no option matches on two dimensions. The correct option
//! is the one matching under the currently active rule, which changes
//! covertly between blocks. Answering with the option that the *previous*
//! block's rule would pick is the classic preservation error, kept
//! well-defined by the disjoint construction above.

use std::collections::BTreeMap;

use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use super::{derive_rng, TaskError};
use crate::spec::{SpecError, StimulusTable};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CardColor {
    Red,
    Green,
    Blue,
    Yellow,
}

impl CardColor {
    pub const ALL: [CardColor; 4] = [CardColor::Red, CardColor::Green, CardColor::Blue, CardColor::Yellow];

    fn word(self) -> &'static str {
        match self {
            CardColor::Red => "red",
            CardColor::Green => "green",
            CardColor::Blue => "blue",
            CardColor::Yellow => "yellow",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CardShape {
    Circle,
    Triangle,
    Cross,
    Star,
}

impl CardShape {
    pub const ALL: [CardShape; 4] = [CardShape::Circle, CardShape::Triangle, CardShape::Cross, CardShape::Star];

    fn word(self) -> &'static str {
        match self {
            CardShape::Circle => "circle",
            CardShape::Triangle => "triangle",
            CardShape::Cross => "cross",
            CardShape::Star => "star",
        }
    }

    fn plural(self) -> &'static str {
        match self {
            CardShape::Circle => "circles",
            CardShape::Triangle => "triangles",
            CardShape::Cross => "crosses",
            CardShape::Star => "stars",
        }
    }
}

pub const CARD_COUNTS: [u8; 4] = [1, 2, 3, 4];

/// A sorting card: color, shape, and how many of the shape it shows.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Card {
    pub color: CardColor,
    pub shape: CardShape,
    pub count: u8,
}

impl Card {
    /// Text rendering, e.g. "2 red circles" or "1 green star".
    pub fn text(&self) -> String {
        let shape = if self.count == 1 { self.shape.word() } else { self.shape.plural() };
        format!("{} {} {}", self.count, self.color.word(), shape)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Rule {
    Color,
    Shape,
    Count,
}

impl Rule {
    pub fn as_str(self) -> &'static str {
        match self {
            Rule::Color => "color",
            Rule::Shape => "shape",
            Rule::Count => "count",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "color" => Some(Rule::Color),
            "shape" => Some(Rule::Shape),
            "count" => Some(Rule::Count),
            _ => None,
        }
    }
}

/// The block structure of a run: which rule is active for how many
/// consecutive trials.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RuleSchedule {
    pub blocks: Vec<(Rule, usize)>,
    pub total_trials: usize,
}

impl RuleSchedule {
    /// (active rule, previous block's rule) for each trial index.
    pub fn rules_by_trial(&self) -> Vec<(Rule, Option<Rule>)> {
        let mut out = Vec::with_capacity(self.total_trials);
        let mut previous = None;
        for &(rule, len) in &self.blocks {
            for _ in 0..len {
                out.push((rule, previous));
            }
            previous = Some(rule);
        }
        out
    }

    /// Trial indices at which a new rule takes over (start of blocks 2+).
    pub fn switch_points(&self) -> Vec<usize> {
        let mut out = Vec::new();
        let mut offset = 0;
        for (i, &(_, len)) in self.blocks.iter().enumerate() {
            if i > 0 {
                out.push(offset);
            }
            offset += len;
        }
        out
    }
}

/// The rule order used when none is configured: each rule twice.
pub const DEFAULT_RULE_ORDER: [Rule; 6] = [Rule::Count, Rule::Shape, Rule::Color, Rule::Count, Rule::Color, Rule::Shape];

/// Default trial count. Six blocks of 17 sum to it exactly; see
/// [`gen_wcst_schedule`] for other block ranges.
pub const DEFAULT_TOTAL_TRIALS: usize = 102;
pub const DEFAULT_BLOCK_RANGE: (usize, usize) = (17, 17);

/// Draw a block-length schedule: one block per rule in `rule_order`, each
/// length uniform in `block_range`, then adjusted minimally (within range)
/// so the lengths sum to `total_trials` exactly.
pub fn gen_wcst_schedule(
    seed: u64,
    rule_order: &[Rule],
    block_range: (usize, usize),
    total_trials: usize,
) -> Result<RuleSchedule, TaskError> {
    let (min, max) = block_range;
    let blocks = rule_order.len();
    if blocks == 0 || min == 0 || min > max {
        return Err(TaskError::InvalidParams { detail: format!("bad block range [{min}, {max}] over {blocks} blocks") });
    }
    if total_trials < blocks * min || total_trials > blocks * max {
        return Err(TaskError::InfeasibleSchedule {
            total_trials,
            feasible_min: blocks * min,
            feasible_max: blocks * max,
        });
    }
    let mut rng = derive_rng(seed, STREAM_SCHEDULE);
    let mut lengths: Vec<usize> = (0..blocks).map(|_| rng.random_range(min..=max)).collect();
    let mut sum: isize = lengths.iter().sum::<usize>() as isize;
    let target = total_trials as isize;
    let mut i = 0;
    while sum != target {
        if sum < target && lengths[i] < max {
            lengths[i] += 1;
            sum += 1;
        } else if sum > target && lengths[i] > min {
            lengths[i] -= 1;
            sum -= 1;
        }
        i = (i + 1) % blocks;
    }
    Ok(RuleSchedule { blocks: rule_order.iter().copied().zip(lengths).collect(), total_trials })
}

/// One trial: target card, four options, and the answer key under the
/// active and previous rules.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct WcstTrial {
    pub trial_index: usize,
    pub target: Card,
    pub options: Vec<Card>,
    pub active_rule: Rule,
    pub previous_rule: Option<Rule>,
    /// 1-based option matching the active rule.
    pub correct_option: u8,
    /// 1-based option the previous rule would pick, once a previous rule exists.
    pub previous_rule_option: Option<u8>,
}

impl WcstTrial {
    /// Which option (1-based) matches the target under the given rule.
    pub fn option_for_rule(&self, rule: Rule) -> u8 {
        for (i, option) in self.options.iter().enumerate() {
            let hit = match rule {
                Rule::Color => option.color == self.target.color,
                Rule::Shape => option.shape == self.target.shape,
                Rule::Count => option.count == self.target.count,
            };
            if hit {
                return (i + 1) as u8;
            }
        }
        unreachable!("construction guarantees a match per dimension")
    }

    /// "1: ...; 2: ...; 3: ...; 4: ..." option line.
    pub fn options_text(&self) -> String {
        self.options
            .iter()
            .enumerate()
            .map(|(i, card)| format!("{}: {}", i + 1, card.text()))
            .collect::<Vec<_>>()
            .join("; ")
    }
}

const STREAM_SCHEDULE: u64 = 1 << 32;

fn pick_color(rng: &mut impl Rng, exclude: Option<CardColor>) -> CardColor {
    let pool: Vec<CardColor> = CardColor::ALL.iter().copied().filter(|&c| Some(c) != exclude).collect();
    pool[rng.random_range(0..pool.len())]
}

fn pick_shape(rng: &mut impl Rng, exclude: Option<CardShape>) -> CardShape {
    let pool: Vec<CardShape> = CardShape::ALL.iter().copied().filter(|&s| Some(s) != exclude).collect();
    pool[rng.random_range(0..pool.len())]
}

fn pick_count(rng: &mut impl Rng, exclude: Option<u8>) -> u8 {
    let pool: Vec<u8> = CARD_COUNTS.iter().copied().filter(|&n| Some(n) != exclude).collect();
    pool[rng.random_range(0..pool.len())]
}

/// Generate one trial. Deterministic in (seed, trial_index); the three
/// dimension-matching options and the unrelated option land on a seeded
/// random permutation of the four positions.
pub fn gen_wcst_trial(seed: u64, trial_index: usize, active_rule: Rule, previous_rule: Option<Rule>) -> WcstTrial {
    let mut rng = derive_rng(seed, trial_index as u64);
    let target = Card {
        color: pick_color(&mut rng, None),
        shape: pick_shape(&mut rng, None),
        count: pick_count(&mut rng, None),
    };
    // Every option matches the target on exactly the named dimension.
    let color_match = Card {
        color: target.color,
        shape: pick_shape(&mut rng, Some(target.shape)),
        count: pick_count(&mut rng, Some(target.count)),
    };
    let shape_match = Card {
        color: pick_color(&mut rng, Some(target.color)),
        shape: target.shape,
        count: pick_count(&mut rng, Some(target.count)),
    };
    let count_match = Card {
        color: pick_color(&mut rng, Some(target.color)),
        shape: pick_shape(&mut rng, Some(target.shape)),
        count: target.count,
    };
    let unrelated = Card {
        color: pick_color(&mut rng, Some(target.color)),
        shape: pick_shape(&mut rng, Some(target.shape)),
        count: pick_count(&mut rng, Some(target.count)),
    };
    let mut placed = [
        (Some(Rule::Color), color_match),
        (Some(Rule::Shape), shape_match),
        (Some(Rule::Count), count_match),
        (None, unrelated),
    ];
    placed.shuffle(&mut rng);
    let options: Vec<Card> = placed.iter().map(|(_, card)| *card).collect();
    let position_of = |rule: Rule| -> u8 {
        placed
            .iter()
            .position(|(r, _)| *r == Some(rule))
            .map(|i| (i + 1) as u8)
            .expect("all three rules placed")
    };
    WcstTrial {
        trial_index,
        target,
        options,
        active_rule,
        previous_rule,
        correct_option: position_of(active_rule),
        previous_rule_option: previous_rule.map(position_of),
    }
}

/// Generate the full trial sequence for a schedule.
pub fn gen_wcst_trials(seed: u64, schedule: &RuleSchedule) -> Vec<WcstTrial> {
    schedule
        .rules_by_trial()
        .into_iter()
        .enumerate()
        .map(|(i, (active, previous))| gen_wcst_trial(seed, i, active, previous))
        .collect()
}

/// Error taxonomy of one answer.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum WcstOutcome {
    Correct,
    /// Answered as if the previous block's rule were still active.
    Preservation,
    Other,
}

impl WcstOutcome {
    pub fn as_str(self) -> &'static str {
        match self {
            WcstOutcome::Correct => "correct",
            WcstOutcome::Preservation => "preservation",
            WcstOutcome::Other => "other",
        }
    }
}

/// Classify an in-range answer. First-block errors are never preservation
/// errors; there is no previous rule to preserve.
pub fn classify_wcst_answer(trial: &WcstTrial, answer: u8) -> Result<WcstOutcome, TaskError> {
    if !(1..=4).contains(&answer) {
        return Err(TaskError::OutOfRangeAnswer(answer));
    }
    if answer == trial.correct_option {
        Ok(WcstOutcome::Correct)
    } else if trial.previous_rule_option == Some(answer) {
        Ok(WcstOutcome::Preservation)
    } else {
        Ok(WcstOutcome::Other)
    }
}

/// Feedback shown before the next trial. Correctness only; the rule is
/// never revealed.
pub fn wcst_feedback(outcome: WcstOutcome) -> &'static str {
    match outcome {
        WcstOutcome::Correct => "Correct.",
        WcstOutcome::Preservation | WcstOutcome::Other => "Incorrect.",
    }
}

/// Export trials as a stimuli table (columns: id, turn, card, options, rule,
/// previous_rule, correct_option, previous_option, target).
pub fn stimulus_table(trials: &[WcstTrial]) -> Result<StimulusTable, SpecError> {
    let columns: Vec<String> =
        ["id", "turn", "card", "options", "rule", "previous_rule", "correct_option", "previous_option", "target"]
            .iter()
            .map(|s| s.to_string())
            .collect();
    let rows = trials
        .iter()
        .map(|trial| {
            let mut row = BTreeMap::new();
            row.insert("id".into(), format!("t{:03}", trial.trial_index));
            row.insert("turn".into(), trial.trial_index.to_string());
            row.insert("card".into(), trial.target.text());
            row.insert("options".into(), trial.options_text());
            row.insert("rule".into(), trial.active_rule.as_str().to_string());
            row.insert("previous_rule".into(), trial.previous_rule.map(|r| r.as_str().to_string()).unwrap_or_default());
            row.insert("correct_option".into(), trial.correct_option.to_string());
            row.insert(
                "previous_option".into(),
                trial.previous_rule_option.map(|o| o.to_string()).unwrap_or_default(),
            );
            row.insert("target".into(), trial.correct_option.to_string());
            row
        })
        .collect();
    StimulusTable::new(columns, rows, "id".into())
}

/// Instruction variants: the original and two paraphrases, each with one
/// worked example per rule and a data slot for the trial text.
pub const INSTRUCTIONS: [&str; 3] = [
    "You are playing a card sorting game. On each turn you will see a card and four numbered options. \
Sort the card by answering with the number of the option that matches it under the current sorting rule. \
The rule is one of: color, shape, or count. The rule is never announced, and it will change several times \
during the game. You must infer the current rule from the feedback given after each of your answers.\n\n\
Here are three examples, one for each possible rule.\n\
Example (sorting by color): Card: 2 red circles. Options: 1: 3 blue circles; 2: 2 yellow stars; 3: 1 red triangle; 4: 4 green crosses. \
The correct answer is 3, because option 3 is also red.\n\
Example (sorting by shape): Card: 2 red circles. Options: 1: 3 blue circles; 2: 2 yellow stars; 3: 1 red triangle; 4: 4 green crosses. \
The correct answer is 1, because option 1 also shows circles.\n\
Example (sorting by count): Card: 2 red circles. Options: 1: 3 blue circles; 2: 2 yellow stars; 3: 1 red triangle; 4: 4 green crosses. \
The correct answer is 2, because option 2 also shows two items.\n\n\
Respond with only the integer of the chosen option. Do not explain your answer.\n\n<<DATA>>",
    "Let's play a sorting game with cards. Each turn presents one card together with four numbered choices, \
and your job is to place the card with the choice that fits it under the sorting rule currently in effect: \
color, shape, or count. Nobody will tell you the rule, and it will quietly change as the game goes on, so \
work it out from the feedback that follows every answer you give.\n\n\
Three examples follow, one per rule.\n\
Example (rule is color): Card: 2 red circles. Options: 1: 3 blue circles; 2: 2 yellow stars; 3: 1 red triangle; 4: 4 green crosses. \
Answer 3, since option 3 shares the card's red color.\n\
Example (rule is shape): Card: 2 red circles. Options: 1: 3 blue circles; 2: 2 yellow stars; 3: 1 red triangle; 4: 4 green crosses. \
Answer 1, since option 1 shares the card's circle shape.\n\
Example (rule is count): Card: 2 red circles. Options: 1: 3 blue circles; 2: 2 yellow stars; 3: 1 red triangle; 4: 4 green crosses. \
Answer 2, since option 2 also shows two items.\n\n\
Reply with just the number of your choice and nothing else.\n\n<<DATA>>",
    "This is a card matching task. Every turn shows a target card plus four numbered candidate cards. \
Match the target to a candidate according to whichever sorting rule is active right now; the possible rules \
are color, shape, and count. The active rule stays hidden and switches repeatedly over the course of the \
task, so use the correctness feedback after each answer to figure out what the rule currently is.\n\n\
Study these examples, one for each rule.\n\
Example under the color rule: Card: 2 red circles. Options: 1: 3 blue circles; 2: 2 yellow stars; 3: 1 red triangle; 4: 4 green crosses. \
Option 3 is correct because it is also red.\n\
Example under the shape rule: Card: 2 red circles. Options: 1: 3 blue circles; 2: 2 yellow stars; 3: 1 red triangle; 4: 4 green crosses. \
Option 1 is correct because it also shows circles.\n\
Example under the count rule: Card: 2 red circles. Options: 1: 3 blue circles; 2: 2 yellow stars; 3: 1 red triangle; 4: 4 green crosses. \
Option 2 is correct because it also shows two items.\n\n\
Output only the number of the option you pick.\n\n<<DATA>>",
];

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_rule_order_matches_the_task_design() {
        assert_eq!(
            DEFAULT_RULE_ORDER,
            [Rule::Count, Rule::Shape, Rule::Color, Rule::Count, Rule::Color, Rule::Shape]
        );
    }

    #[test]
    fn forced_upper_bound_schedule() {
        let schedule = gen_wcst_schedule(1, &DEFAULT_RULE_ORDER, (10, 15), 90).unwrap();
        assert!(schedule.blocks.iter().all(|&(_, len)| len == 15));
        assert_eq!(schedule.total_trials, 90);
    }

    #[test]
    fn infeasible_total_is_rejected() {
        match gen_wcst_schedule(1, &DEFAULT_RULE_ORDER, (10, 15), 102) {
            Err(TaskError::InfeasibleSchedule { feasible_max, .. }) => assert_eq!(feasible_max, 90),
            other => panic!("expected InfeasibleSchedule, got {other:?}"),
        }
    }

    #[test]
    fn default_schedule_is_six_blocks_of_17() {
        let schedule =
            gen_wcst_schedule(42, &DEFAULT_RULE_ORDER, DEFAULT_BLOCK_RANGE, DEFAULT_TOTAL_TRIALS).unwrap();
        assert_eq!(schedule.blocks.len(), 6);
        assert!(schedule.blocks.iter().all(|&(_, len)| len == 17));
        assert_eq!(schedule.switch_points(), vec![17, 34, 51, 68, 85]);
    }

    #[test]
    fn schedules_are_deterministic_and_sum_exactly() {
        for seed in 0..20 {
            let a = gen_wcst_schedule(seed, &DEFAULT_RULE_ORDER, (10, 15), 77).unwrap();
            let b = gen_wcst_schedule(seed, &DEFAULT_RULE_ORDER, (10, 15), 77).unwrap();
            assert_eq!(a, b);
            assert_eq!(a.blocks.iter().map(|&(_, len)| len).sum::<usize>(), 77);
            assert!(a.blocks.iter().all(|&(_, len)| (10..=15).contains(&len)));
        }
    }

    #[test]
    fn exactly_one_option_matches_per_dimension() {
        // brute-force attribute comparison over many seeded trials
        for index in 0..1000 {
            let trial = gen_wcst_trial(7, index, Rule::Color, Some(Rule::Shape));
            let color_hits = trial.options.iter().filter(|o| o.color == trial.target.color).count();
            let shape_hits = trial.options.iter().filter(|o| o.shape == trial.target.shape).count();
            let count_hits = trial.options.iter().filter(|o| o.count == trial.target.count).count();
            assert_eq!((color_hits, shape_hits, count_hits), (1, 1, 1), "trial {index}");
            // the three matches are pairwise distinct positions
            let positions = [
                trial.option_for_rule(Rule::Color),
                trial.option_for_rule(Rule::Shape),
                trial.option_for_rule(Rule::Count),
            ];
            assert_eq!(positions.iter().collect::<std::collections::BTreeSet<_>>().len(), 3, "trial {index}");
            // no option matches on two dimensions
            for option in &trial.options {
                let dims = usize::from(option.color == trial.target.color)
                    + usize::from(option.shape == trial.target.shape)
                    + usize::from(option.count == trial.target.count);
                assert!(dims <= 1, "trial {index}: option {option:?} matches {dims} dimensions");
            }
        }
    }

    #[test]
    fn correct_option_tracks_the_active_rule() {
        let trial = gen_wcst_trial(3, 0, Rule::Color, None);
        let correct = trial.options[trial.correct_option as usize - 1];
        assert_eq!(correct.color, trial.target.color);
        assert_eq!(trial.previous_rule_option, None);

        let trial = gen_wcst_trial(3, 21, Rule::Count, Some(Rule::Color));
        let correct = trial.options[trial.correct_option as usize - 1];
        assert_eq!(correct.count, trial.target.count);
        let previous = trial.options[trial.previous_rule_option.unwrap() as usize - 1];
        assert_eq!(previous.color, trial.target.color);
    }

    #[test]
    fn classification_covers_the_laid_out_cases() {
        let trial = gen_wcst_trial(5, 30, Rule::Shape, Some(Rule::Count));
        assert_eq!(classify_wcst_answer(&trial, trial.correct_option).unwrap(), WcstOutcome::Correct);
        assert_eq!(
            classify_wcst_answer(&trial, trial.previous_rule_option.unwrap()).unwrap(),
            WcstOutcome::Preservation
        );
        let other = (1..=4)
            .find(|&a| a != trial.correct_option && Some(a) != trial.previous_rule_option)
            .unwrap();
        assert_eq!(classify_wcst_answer(&trial, other).unwrap(), WcstOutcome::Other);
        assert!(matches!(classify_wcst_answer(&trial, 5), Err(TaskError::OutOfRangeAnswer(5))));
    }

    #[test]
    fn first_block_errors_are_never_preservation() {
        let trial = gen_wcst_trial(5, 2, Rule::Color, None);
        for answer in 1..=4 {
            let outcome = classify_wcst_answer(&trial, answer).unwrap();
            assert_ne!(outcome, WcstOutcome::Preservation);
        }
    }

    #[test]
    fn feedback_reveals_correctness_only() {
        assert_eq!(wcst_feedback(WcstOutcome::Correct), "Correct.");
        assert_eq!(wcst_feedback(WcstOutcome::Preservation), "Incorrect.");
        assert_eq!(wcst_feedback(WcstOutcome::Other), "Incorrect.");
    }

    #[test]
    fn card_text_pluralizes() {
        assert_eq!(Card { color: CardColor::Red, shape: CardShape::Circle, count: 2 }.text(), "2 red circles");
        assert_eq!(Card { color: CardColor::Green, shape: CardShape::Star, count: 1 }.text(), "1 green star");
        assert_eq!(Card { color: CardColor::Blue, shape: CardShape::Cross, count: 4 }.text(), "4 blue crosses");
    }

    #[test]
    fn stimulus_table_round_trips_the_key_columns() {
        let schedule = gen_wcst_schedule(9, &DEFAULT_RULE_ORDER, (3, 4), 20).unwrap();
        let trials = gen_wcst_trials(9, &schedule);
        let table = stimulus_table(&trials).unwrap();
        assert_eq!(table.len(), 20);
        assert_eq!(table.value("t000", "previous_rule"), Some(""));
        let rules = schedule.rules_by_trial();
        for (i, (rule, previous)) in rules.iter().enumerate() {
            let id = format!("t{i:03}");
            assert_eq!(table.value(&id, "rule"), Some(rule.as_str()));
            assert_eq!(
                table.value(&id, "previous_rule").unwrap(),
                previous.map(|r| r.as_str()).unwrap_or("")
            );
            assert_eq!(table.value(&id, "target"), Some(trials[i].correct_option.to_string().as_str()));
        }
    }

    #[test]
    fn scripted_previous_rule_agent_preserves_after_block_one() {
        let schedule = gen_wcst_schedule(11, &DEFAULT_RULE_ORDER, (5, 5), 30).unwrap();
        let trials = gen_wcst_trials(11, &schedule);
        for trial in &trials {
            match trial.previous_rule_option {
                Some(option) => {
                    assert_eq!(classify_wcst_answer(trial, option).unwrap(), WcstOutcome::Preservation)
                }
                None => {
                    // first block: no previous rule to play
                }
            }
        }
    }
}
