//! Command-line interface: one verb per pipeline stage.
//!
//! Exit codes: 0 success, 1 validation error, 2 runtime/endpoint failure.
//! Failures also emit one machine-readable JSON line on standard error.
//! Only `run` touches the network, and only with a live backend.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use clap::{Parser, Subcommand};

use crate::llm::http::HttpBackend;
use crate::llm::mock::MockBackend;
use crate::llm::Backend;
use crate::permute::enumerate_variants;
use crate::report::{write_analysis_files, write_metrics_files, write_prompts, write_report, ReportOptions};
use crate::runner::{run as run_experiment, RunLog, RunOptions};
use crate::spec::{load_spec, stimuli_path_from_config, ExperimentSpec, SpecError};
use crate::tasks::{self, TaskKind, WcstConfig};

#[derive(Parser)]
#[command(name = "cogharness", version, about = "Run cognitive-science style experiments against chat-completion endpoints")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Load and validate an experiment config + stimuli; print a summary.
    Validate {
        #[arg(short, long)]
        config: PathBuf,
        /// Stimuli CSV; defaults to the path named in the config.
        #[arg(long)]
        stimuli: Option<PathBuf>,
    },
    /// Enumerate prompt variants; write rendered instructions to the output
    /// directory, or just list them with --list.
    Permute {
        #[arg(short, long)]
        config: PathBuf,
        #[arg(long)]
        stimuli: Option<PathBuf>,
        /// Print variant ids and descriptors without writing files.
        #[arg(long)]
        list: bool,
        #[arg(short, long, default_value = ".")]
        out: PathBuf,
    },
    /// Execute the experiment and append to the run log.
    Run {
        #[arg(short, long)]
        config: PathBuf,
        #[arg(long)]
        stimuli: Option<PathBuf>,
        /// `live` (default) or `mock:<script path>`.
        #[arg(long, default_value = "live")]
        backend: String,
        /// Run log path; defaults to <out>/runlog/<experiment>.ndjson.
        #[arg(long)]
        log: Option<PathBuf>,
        #[arg(short, long, default_value = ".")]
        out: PathBuf,
        /// Override the config's seed (recorded in the run header).
        #[arg(long)]
        seed: Option<u64>,
        /// Complete missing cells of an existing log. This is also the
        /// default when the log already exists; re-running never
        /// re-executes completed cells.
        #[arg(long)]
        resume: bool,
        /// Discard any existing log and start over.
        #[arg(long, conflicts_with = "resume")]
        overwrite: bool,
    },
    /// Aggregate per-group metrics from a run log.
    Score {
        #[arg(short, long)]
        config: PathBuf,
        #[arg(long)]
        stimuli: Option<PathBuf>,
        #[arg(long)]
        log: PathBuf,
        #[arg(short, long, default_value = ".")]
        out: PathBuf,
    },
    /// Compute the analysis tables from a run log.
    Analyze {
        #[arg(short, long)]
        config: PathBuf,
        #[arg(long)]
        stimuli: Option<PathBuf>,
        #[arg(long)]
        log: PathBuf,
        #[arg(short, long, default_value = ".")]
        out: PathBuf,
    },
    /// Write the full report bundle: prompts, metrics, analyses, summary.
    Report {
        #[arg(short, long)]
        config: PathBuf,
        #[arg(long)]
        stimuli: Option<PathBuf>,
        #[arg(long)]
        log: PathBuf,
        #[arg(short, long, default_value = ".")]
        out: PathBuf,
    },
    /// Write built-in task materials as stimuli CSV + config skeleton.
    /// `span` generates both directions.
    GenTask {
        /// wcst | flanker | span | span-forward | span-backward | drm
        task: String,
        #[arg(short, long, default_value = ".")]
        out: PathBuf,
        #[arg(long, default_value_t = 42)]
        seed: u64,
        /// WCST only: total trial count.
        #[arg(long)]
        trials: Option<usize>,
        /// WCST only: block length range.
        #[arg(long)]
        block_min: Option<usize>,
        #[arg(long)]
        block_max: Option<usize>,
    },
}

/// Exit code semantics shared by all verbs.
const EXIT_OK: i32 = 0;
const EXIT_VALIDATION: i32 = 1;
const EXIT_RUNTIME: i32 = 2;

enum CliError {
    Validation(String),
    Runtime(String),
}

impl CliError {
    fn report(&self) -> i32 {
        let (kind, detail, code) = match self {
            CliError::Validation(d) => ("validation", d, EXIT_VALIDATION),
            CliError::Runtime(d) => ("runtime", d, EXIT_RUNTIME),
        };
        eprintln!("{}", serde_json::json!({"error": kind, "detail": detail}));
        code
    }
}

impl From<SpecError> for CliError {
    fn from(e: SpecError) -> Self {
        match e {
            SpecError::Io { .. } => CliError::Runtime(e.to_string()),
            _ => CliError::Validation(e.to_string()),
        }
    }
}

impl From<crate::runner::RunnerError> for CliError {
    fn from(e: crate::runner::RunnerError) -> Self {
        use crate::runner::RunnerError::*;
        match e {
            ConfigMismatch { .. } | Spec(_) | Task(_) | Template(_) | ModeMismatch { .. } => {
                CliError::Validation(e.to_string())
            }
            _ => CliError::Runtime(e.to_string()),
        }
    }
}

impl From<crate::report::ReportError> for CliError {
    fn from(e: crate::report::ReportError) -> Self {
        CliError::Runtime(e.to_string())
    }
}

impl From<crate::tasks::TaskError> for CliError {
    fn from(e: crate::tasks::TaskError) -> Self {
        CliError::Validation(e.to_string())
    }
}

/// Print a line to stdout. A closed pipe (e.g. `cogharness permute --list |
/// head`) stops output cleanly instead of panicking; other write errors are
/// runtime failures.
fn say(line: std::fmt::Arguments<'_>) -> Result<bool, CliError> {
    use std::io::Write;
    match writeln!(std::io::stdout(), "{line}") {
        Ok(()) => Ok(true),
        Err(e) if e.kind() == std::io::ErrorKind::BrokenPipe => Ok(false),
        Err(e) => Err(CliError::Runtime(format!("cannot write to stdout: {e}"))),
    }
}

macro_rules! say {
    ($($arg:tt)*) => {
        if !say(format_args!($($arg)*))? {
            return Ok(());
        }
    };
}

/// Parse argv and run a verb. Suitable for calling from tests.
pub fn dispatch<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            // clap renders usage text; unknown verbs and bad flags land here
            let _ = e.print();
            return if e.use_stderr() { EXIT_RUNTIME } else { EXIT_OK };
        }
    };
    match execute(cli.command) {
        Ok(()) => EXIT_OK,
        Err(e) => e.report(),
    }
}

/// Entry point for the binary.
pub fn main_entry() -> i32 {
    dispatch(std::env::args())
}

fn execute(command: Command) -> Result<(), CliError> {
    match command {
        Command::Validate { config, stimuli } => {
            let spec = load(&config, stimuli.as_deref())?;
            let members = spec.group_members();
            let group_counts: Vec<String> =
                spec.groups.groups.iter().map(|g| format!("{}={}", g.name, members[&g.name].len())).collect();
            let variants = enumerate_variants(&spec.prompt).map_err(|e| CliError::Validation(e.to_string()))?;
            say!(
                "ok: {}: {} stimuli, {} groups ({}), {} metrics, {} prompt variants",
                spec.metadata.experiment_name,
                spec.stimuli.len(),
                spec.groups.groups.len(),
                group_counts.join(", "),
                spec.metrics.metrics.len(),
                variants.len(),
            );
            Ok(())
        }
        Command::Permute { config, stimuli, list, out } => {
            let spec = load(&config, stimuli.as_deref())?;
            let variants = enumerate_variants(&spec.prompt).map_err(|e| CliError::Validation(e.to_string()))?;
            if list {
                for variant in &variants {
                    let descriptor = spec
                        .prompt
                        .format(variant.variant_id.format)
                        .map(|f| f.descriptor.as_str())
                        .unwrap_or("");
                    say!("{}\tparaphrase {}\t{}", variant.variant_id, variant.variant_id.paraphrase, descriptor);
                }
            } else {
                let written = write_prompts(&out, &spec)?;
                say!("wrote {} prompt variants under {}", written.len(), out.join("prompts").display());
            }
            Ok(())
        }
        Command::Run { config, stimuli, backend, log, out, seed, resume, overwrite } => {
            let mut spec = load(&config, stimuli.as_deref())?;
            if let Some(seed) = seed {
                spec.metadata.seed = seed;
            }
            let backends = build_backends(&spec, &backend)?;
            let log_path = log.unwrap_or_else(|| {
                out.join("runlog").join(format!("{}.ndjson", spec.metadata.experiment_name))
            });
            let resume = resume || (!overwrite && log_path.exists());
            let options = RunOptions { log_path: Some(log_path.clone()), resume, progress: true };
            let run_log = run_experiment(&spec, &backends, &options)?;
            let failed = run_log.records.iter().filter(|r| r.status == crate::runner::TrialStatus::Failed).count();
            say!("run complete: {} records ({} failed) -> {}", run_log.records.len(), failed, log_path.display());
            if failed > 0 {
                return Err(CliError::Runtime(format!("{failed} trial(s) failed after retries; see {}", log_path.display())));
            }
            Ok(())
        }
        Command::Score { config, stimuli, log, out } => {
            let spec = load(&config, stimuli.as_deref())?;
            let run_log = load_log(&log, &spec)?;
            write_metrics_files(&out, &spec, &run_log)?;
            say!("wrote metrics under {}", out.join("metrics").display());
            Ok(())
        }
        Command::Analyze { config, stimuli, log, out } => {
            let spec = load(&config, stimuli.as_deref())?;
            let run_log = load_log(&log, &spec)?;
            let options = ReportOptions::default();
            let report = crate::report::compute_report(&spec, &run_log, &options)?;
            write_analysis_files(&out, &spec, &run_log, &report, &options)?;
            say!("wrote analyses under {}", out.join("analysis").display());
            Ok(())
        }
        Command::Report { config, stimuli, log, out } => {
            let spec = load(&config, stimuli.as_deref())?;
            let run_log = load_log(&log, &spec)?;
            let report = write_report(&out, &spec, &run_log, &ReportOptions::default())?;
            say!(
                "report for {}: {} records, {} failed, summary at {}",
                report.experiment_name,
                report.record_count,
                report.failed_count,
                out.join("summary.json").display()
            );
            Ok(())
        }
        Command::GenTask { task, out, seed, trials, block_min, block_max } => {
            let kinds: Vec<TaskKind> = match task.as_str() {
                "span" => vec![TaskKind::SpanForward, TaskKind::SpanBackward],
                other => vec![TaskKind::parse(other)
                    .ok_or_else(|| CliError::Validation(format!("unknown task `{other}` (wcst|flanker|span|span-forward|span-backward|drm)")))?],
            };
            for kind in kinds {
                let bundle = if kind == TaskKind::Wcst && (trials.is_some() || block_min.is_some() || block_max.is_some()) {
                    let defaults = WcstConfig::default();
                    let config = WcstConfig {
                        rule_order: defaults.rule_order.clone(),
                        block_range: (
                            block_min.unwrap_or(defaults.block_range.0),
                            block_max.unwrap_or(defaults.block_range.1),
                        ),
                        total_trials: trials.unwrap_or(defaults.total_trials),
                    };
                    tasks::generate_wcst_bundle(seed, &config)?
                } else {
                    tasks::generate_bundle(kind, seed)?
                };
                let dir = out.join(kind.name());
                tasks::write_bundle(&bundle, &dir)?;
                say!("{}: {} stimuli -> {}", kind.name(), bundle.stimuli.len(), dir.display());
            }
            Ok(())
        }
    }
}

fn load(config: &Path, stimuli: Option<&Path>) -> Result<ExperimentSpec, CliError> {
    let stimuli_path = match stimuli {
        Some(path) => path.to_path_buf(),
        None => stimuli_path_from_config(config)?,
    };
    Ok(load_spec(&stimuli_path, config)?)
}

fn load_log(path: &Path, spec: &ExperimentSpec) -> Result<RunLog, CliError> {
    let log = RunLog::read(path)?;
    let current = spec.config_hash();
    if log.header.config_hash != current {
        return Err(CliError::Validation(format!(
            "run log {} was written under config hash {}, current config hashes to {current}",
            path.display(),
            log.header.config_hash
        )));
    }
    Ok(log)
}

fn build_backends(spec: &ExperimentSpec, flag: &str) -> Result<BTreeMap<String, Arc<dyn Backend>>, CliError> {
    let mut backends: BTreeMap<String, Arc<dyn Backend>> = BTreeMap::new();
    if flag == "live" {
        for endpoint in &spec.metadata.endpoints {
            let backend = HttpBackend::new(&endpoint.base_url, &endpoint.model).with_score_mode(endpoint.score_mode);
            backends.insert(endpoint.label.clone(), Arc::new(backend));
        }
    } else if let Some(script) = flag.strip_prefix("mock:") {
        let mock = MockBackend::from_script_file(script).map_err(|e| CliError::Validation(e.to_string()))?;
        let shared: Arc<dyn Backend> = Arc::new(mock);
        for endpoint in &spec.metadata.endpoints {
            backends.insert(endpoint.label.clone(), Arc::clone(&shared));
        }
    } else {
        return Err(CliError::Validation(format!("unknown backend `{flag}` (use `live` or `mock:<script>`)")));
    }
    Ok(backends)
}
