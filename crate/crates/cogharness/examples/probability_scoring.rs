//! Target probability and perplexity scoring.
//!
//! A backend scores a forced target continuation by its token logprobs:
//! a single-token target reports probability exp(logprob); a multi-token
//! target reports perplexity exp(-mean(logprobs)). Here a scripted mock
//! stands in for the endpoint.
//!
//! ```bash
//! cargo run --example probability_scoring
//! ```

use cogharness::llm::mock::MockBackend;
use cogharness::llm::{Backend, ChatMessage};

fn main() -> anyhow::Result<()> {
    // ln(0.8) for the single-token target, probs (0.5, 0.25) for the pair
    let script = "\
default -> A
score \"A\" -> -0.2231435513
score \"4 1\" -> -0.6931471806 -1.3862943611
";
    let mock = MockBackend::from_script(script)?;
    let dialogue = vec![ChatMessage::system("Answer the question."), ChatMessage::user("Which key? XXCXX")];

    let single = mock.score_target(&dialogue, "A")?;
    println!("target {:?}", single.target_text);
    println!("  token logprobs: {:?}", single.token_logprobs);
    println!("  probability:    {:.6} (exp of the logprob)", single.probability.unwrap());

    let multi = mock.score_target(&dialogue, "4 1")?;
    println!("target {:?}", multi.target_text);
    println!("  token logprobs: {:?}", multi.token_logprobs);
    println!("  perplexity:     {:.6} (= (0.5 * 0.25)^(-1/2))", multi.perplexity);

    let certain = mock.score_target(&dialogue, "9 9 9")?;
    println!("target {:?} with default logprob 0 -> perplexity {}", certain.target_text, certain.perplexity);
    Ok(())
}
