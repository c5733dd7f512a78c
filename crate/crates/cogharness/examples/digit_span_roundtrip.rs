//! Digit-span stimuli survive every data format.
//!
//! Renders seeded digit lists through all ten shipped data formats and
//! parses them back with the separator-insensitive digit-sequence parser:
//! content accuracy cares about digit order only, never about commas.
//!
//! ```bash
//! cargo run --example digit_span_roundtrip
//! ```

use std::collections::BTreeMap;

use cogharness::permute::{default_data_formats, render_data};
use cogharness::scoring::{content_accuracy, parse_digit_sequence};
use cogharness::tasks::span::{digits_text, gen_span, Direction};

fn main() -> anyhow::Result<()> {
    let stimuli = gen_span(7, &[7, 15, 20, 30, 50], 4, Direction::Backward)?;
    let formats = default_data_formats(&["digits".to_string()]);

    let mut round_trips = 0usize;
    for stimulus in &stimuli {
        let row: BTreeMap<String, String> =
            [("digits".to_string(), digits_text(&stimulus.digits))].into_iter().collect();
        for format in &formats {
            let rendered = render_data(format, &row)?;
            let parsed = parse_digit_sequence(&rendered)?;
            assert_eq!(parsed, stimulus.digits);
            round_trips += 1;
        }
    }
    println!("{} stimuli x {} formats = {round_trips} exact round-trips", stimuli.len(), formats.len());

    // scoring is separator-insensitive but order-sensitive
    let target = vec![9, 4, 1];
    for (answer, expected) in [("9, 4, 1", 1), ("941", 1), ("The reversed list: 9 4 1.", 1), ("9 1 4", 0), ("9 4", 0)] {
        let parsed = parse_digit_sequence(answer)?;
        let score = content_accuracy(&parsed, &target);
        println!("{answer:<28} -> {parsed:?} -> content accuracy {score} (expected {expected})");
        assert_eq!(score, expected);
    }
    Ok(())
}
