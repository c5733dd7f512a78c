//! Prompt-robustness analyses on a synthetic accuracy matrix.
//!
//! Two models evaluated under 30 prompt variants: one steady, one volatile
//! with a higher mean. The spread shows the volatility; the flip
//! probability shows how often "which model is better" reverses between
//! prompt variants at a given margin d.
//!
//! ```bash
//! cargo run --example analyze_robustness
//! ```

use cogharness::analysis::{accuracy_spread, flip_probability, AccuracyMatrix, FLIP_DEFINITION};
use rand::{Rng, SeedableRng};

fn main() -> anyhow::Result<()> {
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(11);
    let variants: Vec<String> = (0..30).map(|i| format!("p{}-f{}", i / 10, i % 10 + 1)).collect();
    let steady: Vec<f64> = (0..30).map(|_| rng.random_range(0.55..0.65)).collect();
    let volatile: Vec<f64> = (0..30).map(|_| rng.random_range(0.35..0.95)).collect();
    let matrix = AccuracyMatrix {
        models: vec!["steady-7b".into(), "volatile-9b".into()],
        variants,
        acc: vec![steady, volatile],
    };

    println!("accuracy spread across the 30 prompt variants:");
    for model in &matrix.models {
        let s = accuracy_spread(&matrix, model)?;
        println!(
            "  {model:<12} min {:.3}  q1 {:.3}  median {:.3}  q3 {:.3}  max {:.3}  ({} quartiles)",
            s.min, s.q1, s.median, s.q3, s.max, s.method
        );
    }

    println!("\nflip probability ({FLIP_DEFINITION}):");
    for d in [0.05, 0.10, 0.20] {
        let result = flip_probability(&matrix, d);
        for ((a, b), probability) in &result.pair_probabilities {
            println!(
                "  d = {d:.2}: {a} vs {b} reverses with probability {probability:.3} ({} qualifying comparisons)",
                result.qualifying_pair_count
            );
        }
    }
    Ok(())
}
