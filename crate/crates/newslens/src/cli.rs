//! Command-line interface.
//!
//! Exit codes: 0 for success (parse failures inside a run are data, not
//! errors), 1 for configuration or input problems, 2 when transport
//! failures aborted at least one article, 3 when a stored run fails its
//! integrity check.
//!
//! HTTP backends read their API key from the `NEWSLENS_API_KEY` environment
//! variable. There is no key flag and no key in any config file, and the key
//! is never echoed.

use std::path::{Path, PathBuf};
use std::time::Duration;

use clap::{Parser, Subcommand, ValueEnum};

use crate::backend::{ChatBackend, HttpBackend, ScriptedBackend, WireDialect, DEFAULT_TIMEOUT_SECS};
use crate::corpus::{self, CorpusError};
use crate::domain::{
    AnalystParallelism, PipelineConfig, PipelineVariant, RunRecord, DEFAULT_TRUNCATE_CHARS,
};
use crate::fixtures;
use crate::pipeline::PipelineRunner;
use crate::report::{
    self, ablation_rows, build_aggregate, check_reference, interpretive_map,
    load_reference_values, render_aggregate, render_comparison, render_interpretive_map,
};
use crate::stats::cross_model_delta;

pub const API_KEY_ENV_VAR: &str = "NEWSLENS_API_KEY";

#[derive(Debug, Parser)]
#[command(
    name = "newslens",
    version,
    about = "Adversarial multi-agent analysis of political framing in news articles"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Run the five-agent pipeline over a manifest of articles.
    Run(RunArgs),
    /// Report metrics and statistics for a stored run.
    Stats(StatsArgs),
    /// Compare two stored runs: cross-model stability, or a detector
    /// ablation when exactly one run is ablated.
    Compare(CompareArgs),
    /// Write the bundled scripted fixture sets.
    GenFixtures(GenFixturesArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum BackendKind {
    /// Replay canned outputs from a fixture directory.
    Scripted,
    /// OpenAI-compatible chat completions endpoint.
    Openai,
    /// Ollama chat endpoint.
    Ollama,
}

#[derive(Debug, Parser)]
pub struct RunArgs {
    /// Corpus manifest JSON; article paths resolve relative to it.
    #[arg(long)]
    pub manifest: PathBuf,
    /// Where agent responses come from.
    #[arg(long, value_enum)]
    pub backend: BackendKind,
    /// Fixture root for the scripted backend. Defaults to the manifest's
    /// directory.
    #[arg(long)]
    pub fixtures: Option<PathBuf>,
    /// Base URL for HTTP backends, e.g. http://localhost:11434.
    #[arg(long)]
    pub base_url: Option<String>,
    /// Model identifier sent to the backend and recorded in the run.
    #[arg(long)]
    pub model: String,
    /// Directory run records are stored under.
    #[arg(long, default_value = "runs")]
    pub out: PathBuf,
    /// Skip the propaganda detector stage (four requests per article, no
    /// propaganda context for the summarizer, manipulation index excluded).
    #[arg(long)]
    pub ablate_propaganda: bool,
    /// Run the two analysts on parallel threads.
    #[arg(long)]
    pub parallel_analysts: bool,
    /// Input truncation budget in bytes.
    #[arg(long, default_value_t = DEFAULT_TRUNCATE_CHARS)]
    pub truncate_chars: usize,
    /// Extra attempts per stage after a parse failure.
    #[arg(long, default_value_t = 0)]
    pub retries: u32,
    /// Request timeout in seconds for HTTP backends.
    #[arg(long, default_value_t = DEFAULT_TIMEOUT_SECS)]
    pub timeout_secs: u64,
}

#[derive(Debug, Parser)]
pub struct StatsArgs {
    /// Stored run directory (the one containing run.json).
    pub run_dir: PathBuf,
    /// Reference JSON table to check computed values against.
    #[arg(long)]
    pub reference: Option<PathBuf>,
    /// Significance level for minimum-detectable-effect lines.
    #[arg(long, default_value_t = 0.05)]
    pub alpha: f64,
    /// Target power for minimum-detectable-effect lines.
    #[arg(long, default_value_t = 0.80)]
    pub power: f64,
    /// Render the interpretive map for this article instead of the
    /// aggregate report.
    #[arg(long)]
    pub article: Option<String>,
    /// Emit JSON instead of markdown.
    #[arg(long)]
    pub json: bool,
}

#[derive(Debug, Parser)]
pub struct CompareArgs {
    /// First stored run directory (the full run, for ablation comparisons).
    pub run_a: PathBuf,
    /// Second stored run directory.
    pub run_b: PathBuf,
    /// Emit JSON instead of markdown.
    #[arg(long)]
    pub json: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum FixtureSetKind {
    /// Fifteen-article reference corpus.
    Reference,
    /// Four Kashmir articles under the alternate model.
    KashmirAltModel,
    /// The alternate-model Kashmir articles without the detector stage.
    KashmirAblated,
    /// All bundled sets.
    All,
}

#[derive(Debug, Parser)]
pub struct GenFixturesArgs {
    /// Directory fixture sets are written under.
    #[arg(long, default_value = "fixtures")]
    pub out: PathBuf,
    #[arg(long, value_enum, default_value_t = FixtureSetKind::All)]
    pub set: FixtureSetKind,
}

struct Failure {
    code: i32,
    message: String,
}

fn config_error(message: impl Into<String>) -> Failure {
    Failure {
        code: 1,
        message: message.into(),
    }
}

fn corpus_failure(err: CorpusError) -> Failure {
    let code = if matches!(err, CorpusError::CorruptRecord { .. }) {
        3
    } else {
        1
    };
    Failure {
        code,
        message: err.to_string(),
    }
}

/// Parses `args` and runs the requested command, returning the process exit
/// code. Errors print to stderr, reports to stdout.
pub fn execute<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(err) => {
            // help and version requests are successes, usage errors are not
            let code = if err.use_stderr() { 1 } else { 0 };
            let _ = err.print();
            return code;
        }
    };
    match dispatch(cli.command) {
        Ok(code) => code,
        Err(failure) => {
            eprintln!("error: {}", failure.message);
            failure.code
        }
    }
}

fn dispatch(command: Command) -> Result<i32, Failure> {
    match command {
        Command::Run(args) => run_pipeline(args),
        Command::Stats(args) => run_stats(args),
        Command::Compare(args) => run_compare(args),
        Command::GenFixtures(args) => gen_fixtures(args),
    }
}

fn build_backend(args: &RunArgs) -> Result<Box<dyn ChatBackend>, Failure> {
    match args.backend {
        BackendKind::Scripted => {
            let root = args.fixtures.clone().unwrap_or_else(|| {
                args.manifest
                    .parent()
                    .unwrap_or_else(|| Path::new("."))
                    .to_path_buf()
            });
            let backend = ScriptedBackend::load(&root).map_err(|err| {
                config_error(format!("loading fixtures from {}: {err}", root.display()))
            })?;
            if backend.fixture_count() == 0 {
                return Err(config_error(format!(
                    "no fixtures found under {}",
                    root.display()
                )));
            }
            Ok(Box::new(backend))
        }
        BackendKind::Openai | BackendKind::Ollama => {
            let base_url = args
                .base_url
                .as_ref()
                .ok_or_else(|| config_error("--base-url is required for HTTP backends"))?;
            let dialect = match args.backend {
                BackendKind::Openai => WireDialect::OpenAi,
                _ => WireDialect::Ollama,
            };
            let api_key = std::env::var(API_KEY_ENV_VAR).ok();
            let backend = HttpBackend::with_timeout(
                dialect,
                base_url.clone(),
                api_key,
                Duration::from_secs(args.timeout_secs),
            )
            .map_err(|err| config_error(format!("building HTTP backend: {err}")))?;
            Ok(Box::new(backend))
        }
    }
}

fn run_pipeline(args: RunArgs) -> Result<i32, Failure> {
    let articles = corpus::load_manifest(&args.manifest).map_err(corpus_failure)?;
    let backend = build_backend(&args)?;
    let config = PipelineConfig {
        variant: if args.ablate_propaganda {
            PipelineVariant::AblatedNoPropaganda
        } else {
            PipelineVariant::Full
        },
        truncate_chars: args.truncate_chars,
        sampling_overrides: Default::default(),
        retries: args.retries,
        analyst_parallelism: if args.parallel_analysts {
            AnalystParallelism::Parallel
        } else {
            AnalystParallelism::Sequential
        },
    };
    let runner = PipelineRunner::new(backend.as_ref(), args.model.clone(), config);
    let run = runner
        .run_batch(&articles)
        .map_err(|err| config_error(err.to_string()))?;
    let run_dir = corpus::persist_run(&run, &args.out).map_err(corpus_failure)?;

    for result in &run.results {
        let pds = match result.pds.value() {
            Some(v) => format!("{v:.3}"),
            None => "excluded".to_string(),
        };
        let mi = match result.mi.value() {
            Some(v) => format!("{v:.1}"),
            None => "excluded".to_string(),
        };
        println!("{}: pds {pds}, mi {mi}", result.article_id);
    }
    for abort in &run.aborts {
        println!("{}: aborted ({})", abort.article_id, abort.error);
    }
    println!("stored {} articles at {}", run.states.len(), run_dir.display());
    Ok(if run.aborts.is_empty() { 0 } else { 2 })
}

fn load_run(dir: &Path) -> Result<RunRecord, Failure> {
    corpus::load_run(dir).map_err(corpus_failure)
}

fn report_failure(err: report::ReportError) -> Failure {
    config_error(err.to_string())
}

fn run_stats(args: StatsArgs) -> Result<i32, Failure> {
    let run = load_run(&args.run_dir)?;

    if let Some(article_id) = &args.article {
        let map = interpretive_map(&run, article_id).map_err(report_failure)?;
        if args.json {
            println!(
                "{}",
                serde_json::to_string_pretty(&map).expect("interpretive map serializes")
            );
        } else {
            print!("{}", render_interpretive_map(&map));
        }
        return Ok(0);
    }

    let aggregate = build_aggregate(&run, args.alpha, args.power).map_err(report_failure)?;
    let check = match &args.reference {
        Some(path) => {
            let refs = load_reference_values(path).map_err(report_failure)?;
            Some(check_reference(&run, &refs))
        }
        None => None,
    };
    if args.json {
        #[derive(serde::Serialize)]
        struct StatsOutput<'a> {
            aggregate: &'a report::AggregateReport,
            #[serde(skip_serializing_if = "Option::is_none")]
            reference: Option<&'a report::ReferenceCheck>,
        }
        let output = StatsOutput {
            aggregate: &aggregate,
            reference: check.as_ref(),
        };
        println!(
            "{}",
            serde_json::to_string_pretty(&output).expect("stats output serializes")
        );
    } else {
        print!("{}", render_aggregate(&aggregate, check.as_ref()));
    }
    Ok(0)
}

fn run_compare(args: CompareArgs) -> Result<i32, Failure> {
    let run_a = load_run(&args.run_a)?;
    let run_b = load_run(&args.run_b)?;
    if args.json {
        let a_ablated = run_a.variant == PipelineVariant::AblatedNoPropaganda;
        let b_ablated = run_b.variant == PipelineVariant::AblatedNoPropaganda;
        let value = if a_ablated != b_ablated {
            let (full, ablated) = if a_ablated {
                (&run_b, &run_a)
            } else {
                (&run_a, &run_b)
            };
            let rows = ablation_rows(full, ablated).map_err(report_failure)?;
            serde_json::json!({ "mode": "ablation", "rows": rows })
        } else {
            let rows = cross_model_delta(&run_a, &run_b)
                .map_err(|err| config_error(err.to_string()))?;
            serde_json::json!({ "mode": "cross_model", "rows": rows })
        };
        println!(
            "{}",
            serde_json::to_string_pretty(&value).expect("comparison serializes")
        );
    } else {
        let rendered = render_comparison(&run_a, &run_b).map_err(report_failure)?;
        print!("{rendered}");
    }
    Ok(0)
}

fn gen_fixtures(args: GenFixturesArgs) -> Result<i32, Failure> {
    let sets: Vec<(&str, Vec<fixtures::FixtureRow>)> = match args.set {
        FixtureSetKind::Reference => vec![("reference", fixtures::reference_rows())],
        FixtureSetKind::KashmirAltModel => {
            vec![("kashmir-alt-model", fixtures::kashmir_alt_rows())]
        }
        FixtureSetKind::KashmirAblated => {
            vec![("kashmir-ablated", fixtures::kashmir_ablated_rows())]
        }
        FixtureSetKind::All => vec![
            ("reference", fixtures::reference_rows()),
            ("kashmir-alt-model", fixtures::kashmir_alt_rows()),
            ("kashmir-ablated", fixtures::kashmir_ablated_rows()),
        ],
    };
    for (name, rows) in sets {
        let dir = args.out.join(name);
        fixtures::write_fixture_set(&dir, &rows)
            .map_err(|err| config_error(format!("writing {}: {err}", dir.display())))?;
        println!("wrote {} articles to {}", rows.len(), dir.display());
    }
    Ok(0)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn cli_parses_run_arguments() {
        let cli = Cli::try_parse_from([
            "newslens",
            "run",
            "--manifest",
            "fixtures/reference/manifest.json",
            "--backend",
            "scripted",
            "--model",
            "test-model",
            "--out",
            "runs",
            "--parallel-analysts",
        ])
        .unwrap();
        match cli.command {
            Command::Run(args) => {
                assert_eq!(args.backend, BackendKind::Scripted);
                assert!(args.parallel_analysts);
                assert!(!args.ablate_propaganda);
                assert_eq!(args.truncate_chars, DEFAULT_TRUNCATE_CHARS);
                assert_eq!(args.retries, 0);
                assert_eq!(args.timeout_secs, DEFAULT_TIMEOUT_SECS);
            }
            other => panic!("parsed wrong command: {other:?}"),
        }
    }

    #[test]
    fn cli_rejects_unknown_flags() {
        assert!(Cli::try_parse_from(["newslens", "run", "--api-key", "k"]).is_err());
    }

    #[test]
    fn stats_defaults() {
        let cli = Cli::try_parse_from(["newslens", "stats", "runs/run-1"]).unwrap();
        match cli.command {
            Command::Stats(args) => {
                assert_eq!(args.alpha, 0.05);
                assert_eq!(args.power, 0.80);
                assert!(args.reference.is_none());
                assert!(args.article.is_none());
                assert!(!args.json);
            }
            other => panic!("parsed wrong command: {other:?}"),
        }
    }

    #[test]
    fn http_backend_requires_base_url() {
        let args = RunArgs {
            manifest: PathBuf::from("manifest.json"),
            backend: BackendKind::Ollama,
            fixtures: None,
            base_url: None,
            model: "m".into(),
            out: PathBuf::from("runs"),
            ablate_propaganda: false,
            parallel_analysts: false,
            truncate_chars: DEFAULT_TRUNCATE_CHARS,
            retries: 0,
            timeout_secs: DEFAULT_TIMEOUT_SECS,
        };
        let failure = build_backend(&args).err().expect("must fail");
        assert_eq!(failure.code, 1);
        assert!(failure.message.contains("--base-url"));
    }

    #[test]
    fn missing_fixture_dir_is_a_config_error() {
        let args = RunArgs {
            manifest: PathBuf::from("/nonexistent/manifest.json"),
            backend: BackendKind::Scripted,
            fixtures: Some(PathBuf::from("/nonexistent")),
            base_url: None,
            model: "m".into(),
            out: PathBuf::from("runs"),
            ablate_propaganda: false,
            parallel_analysts: false,
            truncate_chars: DEFAULT_TRUNCATE_CHARS,
            retries: 0,
            timeout_secs: DEFAULT_TIMEOUT_SECS,
        };
        let failure = build_backend(&args).err().expect("must fail");
        assert_eq!(failure.code, 1);
    }
}
