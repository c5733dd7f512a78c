//! Harness for running cognitive-science style experiments against
//! chat-completion LLM endpoints.
//!
//! The pipeline has four stages, each usable on its own:
//!
//! 1. [`spec`] loads a declarative experiment: a stimuli CSV plus a JSON
//!    config describing groups, metrics, predictions, prompt, and metadata.
//! 2. [`permute`] crosses instruction paraphrases with data-format templates
//!    into prompt variants and renders stimuli into final prompt text.
//! 3. [`runner`] executes every (model, variant, stimulus) cell — as
//!    independent dialogues or as one growing feedback dialogue per variant —
//!    collecting both generations and target-token probability payloads into
//!    an append-only, resumable run log.
//! 4. [`scoring`] and [`analysis`] parse raw generations, aggregate
//!    per-group metrics, and compute the robustness analyses: accuracy
//!    spread across prompts, flip probability between model pairs,
//!    accuracy-vs-turn correlation, and preservation-error curves.
//!
//! [`tasks`] ships generators and scorers for five built-in experiments
//! (Wisconsin Card Sorting, flanker, forward/backward digit span, DRM false
//! memory); their materials export to the same stimuli CSV format so
//! built-ins and user experiments flow through one pipeline.
//!
//! The `examples/` directory shows one runnable program per capability; the
//! `cogharness` binary exposes the same flow as subcommands.

pub mod analysis;
pub mod cli;
pub mod llm;
pub mod permute;
pub mod report;
pub mod runner;
pub mod scoring;
pub mod spec;
pub mod tasks;

pub use llm::{Backend, ChatMessage, CompletionResult, Sampling, TargetScore};
pub use permute::{DataFormat, PromptTemplate, PromptVariant};
pub use runner::{RunLog, TrialRecord};
pub use spec::ExperimentSpec;
