//! The five-stage orchestrator.
//!
//! Stage order is fact verifier, progressive analyst, conservative analyst
//! (optionally in parallel), propaganda detector, neutral summarizer. The
//! ablated variant skips the detector stage entirely.
//!
//! Isolation is structural: inputs for each stage are derived by
//! [`stage_inputs`], which gives the analysts and the detector nothing but
//! the truncated article text. Only the summarizer receives the upstream
//! JSON, and only the blocks that actually parsed. Every request's digest
//! is recorded in the stage outcome so isolation is auditable after the
//! fact.
//!
//! Error policy: a transport failure aborts the article (whatever stages
//! completed stay recorded and the batch moves on); any other backend error
//! or parse failure is recorded as a failed stage and the pipeline
//! continues downstream.

use std::sync::atomic::{AtomicU64, Ordering};
use std::thread;

use thiserror::Error;

use crate::backend::{ChatBackend, CompletionRequest, FinishReason, RequestRoute};
use crate::digest::digest_value;
use crate::domain::{
    AgentKind, AgentReport, AnalystParallelism, Article, ArticleAbort, BiasState, PipelineConfig,
    PipelineVariant, RunRecord, StageOutcome, StageStatus,
};
use crate::metrics::article_result;
use crate::parser::parse_agent_output;
use crate::prompts::{build_agent_messages, sampling_params, truncate_input, BlockName};

#[derive(Debug, Error, PartialEq, Eq)]
pub enum PipelineError {
    #[error("manifest contains no articles")]
    EmptyManifest,
    #[error("stage {agent} requires {missing} to have run first")]
    OrderViolation { agent: AgentKind, missing: AgentKind },
}

/// Inputs assembled for one stage: the truncated article, the context
/// blocks the agent receives, and the blocks that were omitted with the
/// reason why.
#[derive(Debug, Clone, PartialEq)]
pub struct StageInputs {
    pub article_text: String,
    pub blocks: Vec<(BlockName, String)>,
    pub omitted: Vec<(BlockName, String)>,
}

fn require_stage(
    state: &BiasState,
    agent: AgentKind,
    required: AgentKind,
) -> Result<(), PipelineError> {
    if state.outcome(required).is_none() {
        return Err(PipelineError::OrderViolation {
            agent,
            missing: required,
        });
    }
    Ok(())
}

/// Derives the inputs an agent may see from the current state.
///
/// The fact verifier, both analysts, and the detector receive only the
/// truncated article text. The summarizer additionally receives one labeled
/// JSON block per parsed upstream report, in fixed order; blocks for failed
/// stages (or the detector under the ablated variant) are omitted and
/// reported in `omitted`.
pub fn stage_inputs(
    agent: AgentKind,
    state: &BiasState,
    config: &PipelineConfig,
) -> Result<StageInputs, PipelineError> {
    let article_text = truncate_input(&state.article.body, config.truncate_chars).to_string();

    let upstream: &[AgentKind] = match agent {
        AgentKind::FactVerifier => &[],
        AgentKind::ProgressiveAnalyst | AgentKind::ConservativeAnalyst => {
            &[AgentKind::FactVerifier]
        }
        AgentKind::PropagandaDetector => &[
            AgentKind::FactVerifier,
            AgentKind::ProgressiveAnalyst,
            AgentKind::ConservativeAnalyst,
        ],
        AgentKind::NeutralSummarizer => &[
            AgentKind::FactVerifier,
            AgentKind::ProgressiveAnalyst,
            AgentKind::ConservativeAnalyst,
        ],
    };
    for required in upstream {
        require_stage(state, agent, *required)?;
    }
    if agent == AgentKind::NeutralSummarizer && config.variant == PipelineVariant::Full {
        require_stage(state, agent, AgentKind::PropagandaDetector)?;
    }

    let mut blocks = Vec::new();
    let mut omitted = Vec::new();
    if agent == AgentKind::NeutralSummarizer {
        push_block(
            &mut blocks,
            &mut omitted,
            BlockName::FactsJson,
            state.facts.as_ref().map(serde_json::to_string),
            AgentKind::FactVerifier,
        );
        push_block(
            &mut blocks,
            &mut omitted,
            BlockName::LeftJson,
            state.left.as_ref().map(serde_json::to_string),
            AgentKind::ProgressiveAnalyst,
        );
        push_block(
            &mut blocks,
            &mut omitted,
            BlockName::RightJson,
            state.right.as_ref().map(serde_json::to_string),
            AgentKind::ConservativeAnalyst,
        );
        if config.variant == PipelineVariant::Full {
            push_block(
                &mut blocks,
                &mut omitted,
                BlockName::PropagandaJson,
                state.propaganda.as_ref().map(serde_json::to_string),
                AgentKind::PropagandaDetector,
            );
        } else {
            omitted.push((BlockName::PropagandaJson, "ablated variant".to_string()));
        }
    }

    Ok(StageInputs {
        article_text,
        blocks,
        omitted,
    })
}

fn push_block(
    blocks: &mut Vec<(BlockName, String)>,
    omitted: &mut Vec<(BlockName, String)>,
    name: BlockName,
    serialized: Option<serde_json::Result<String>>,
    source: AgentKind,
) {
    match serialized {
        Some(Ok(json)) => blocks.push((name, json)),
        Some(Err(_)) | None => {
            omitted.push((name, format!("{} parse failure", source.stage_name())));
        }
    }
}

/// Outcome of running one article through the pipeline.
#[derive(Debug)]
pub enum ArticleRun {
    Completed(BiasState),
    /// A transport failure stopped the run partway; completed stages are
    /// retained in the state.
    Aborted { state: BiasState, error: String },
}

impl ArticleRun {
    pub fn state(&self) -> &BiasState {
        match self {
            ArticleRun::Completed(state) | ArticleRun::Aborted { state, .. } => state,
        }
    }
}

struct PreparedStage {
    agent: AgentKind,
    route: RequestRoute,
    request: CompletionRequest,
    request_digest: String,
    notes: Vec<String>,
}

struct StageResult {
    outcome: StageOutcome,
    report: Option<AgentReport>,
    notes: Vec<String>,
}

/// Drives articles through the agent pipeline over one backend.
pub struct PipelineRunner<'a> {
    backend: &'a dyn ChatBackend,
    model_id: String,
    config: PipelineConfig,
    config_fingerprint: String,
}

static RUN_COUNTER: AtomicU64 = AtomicU64::new(0);

impl<'a> PipelineRunner<'a> {
    pub fn new(backend: &'a dyn ChatBackend, model_id: impl Into<String>, config: PipelineConfig) -> Self {
        let model_id = model_id.into();
        let config_fingerprint = digest_value(&serde_json::json!({
            "model_id": model_id,
            "backend": backend.descriptor(),
            "config": config,
        }));
        PipelineRunner {
            backend,
            model_id,
            config,
            config_fingerprint,
        }
    }

    pub fn config(&self) -> &PipelineConfig {
        &self.config
    }

    pub fn config_fingerprint(&self) -> &str {
        &self.config_fingerprint
    }

    fn prepare(&self, agent: AgentKind, state: &BiasState) -> PreparedStage {
        let inputs = stage_inputs(agent, state, &self.config)
            .expect("stage plan satisfies ordering requirements");
        let notes = inputs
            .omitted
            .iter()
            .map(|(name, reason)| format!("context block {} omitted: {reason}", name.label()))
            .collect();
        let messages = build_agent_messages(agent, &inputs.article_text, &inputs.blocks)
            .expect("stage inputs satisfy isolation rules");
        let params = sampling_params(agent, &self.config);
        let request = CompletionRequest {
            model_id: self.model_id.clone(),
            messages,
            temperature: params.temperature,
            max_output_tokens: params.max_output_tokens,
        };
        let request_digest = digest_value(&request);
        PreparedStage {
            agent,
            route: RequestRoute::new(agent, state.article.id.clone()),
            request,
            request_digest,
            notes,
        }
    }

    /// Issues the request (with configured retries on parse failure) and
    /// parses the response. Does not touch state; `Err` is a transport
    /// abort.
    fn complete_and_parse(&self, prepared: &PreparedStage) -> Result<StageResult, String> {
        let mut notes = prepared.notes.clone();
        let attempts = self.config.retries + 1;
        let mut last_failure = None;
        let mut last_raw = String::new();

        for attempt in 1..=attempts {
            let response = match self.backend.complete(&prepared.route, &prepared.request) {
                Ok(response) => response,
                Err(err) if err.is_transport() => return Err(err.to_string()),
                Err(err) => {
                    notes.push(format!("{} backend error: {err}", prepared.agent.stage_name()));
                    return Ok(StageResult {
                        outcome: StageOutcome {
                            agent: prepared.agent,
                            raw_text: String::new(),
                            status: StageStatus::ParseFailure,
                            failure_kind: Some(crate::domain::FailureKind::NoJsonFound),
                            repairs: Vec::new(),
                            repaired_from_truncation: false,
                            request_digest: prepared.request_digest.clone(),
                        },
                        report: None,
                        notes,
                    });
                }
            };
            let length_capped = response.finish_reason == FinishReason::LengthCapped;
            match parse_agent_output(prepared.agent, &response.text, length_capped) {
                Ok(parsed) => {
                    return Ok(StageResult {
                        outcome: StageOutcome {
                            agent: prepared.agent,
                            raw_text: response.text,
                            status: StageStatus::Parsed,
                            failure_kind: None,
                            repairs: parsed.repairs,
                            repaired_from_truncation: parsed.repaired_from_truncation,
                            request_digest: prepared.request_digest.clone(),
                        },
                        report: Some(parsed.report),
                        notes,
                    });
                }
                Err(kind) => {
                    if attempt < attempts {
                        notes.push(format!(
                            "{} parse failure on attempt {attempt}, retrying",
                            prepared.agent.stage_name()
                        ));
                    }
                    last_failure = Some(kind);
                    last_raw = response.text;
                }
            }
        }

        Ok(StageResult {
            outcome: StageOutcome {
                agent: prepared.agent,
                raw_text: last_raw,
                status: StageStatus::ParseFailure,
                failure_kind: last_failure,
                repairs: Vec::new(),
                repaired_from_truncation: false,
                request_digest: prepared.request_digest.clone(),
            },
            report: None,
            notes,
        })
    }

    fn record(&self, state: &mut BiasState, result: StageResult) {
        for note in result.notes {
            state.note(note);
        }
        state
            .record_outcome(result.outcome, result.report)
            .expect("each stage runs exactly once");
    }

    fn run_stage(&self, agent: AgentKind, state: &mut BiasState) -> Result<(), String> {
        let prepared = self.prepare(agent, state);
        let result = self.complete_and_parse(&prepared)?;
        self.record(state, result);
        Ok(())
    }

    /// Runs both analysts. In parallel mode the requests are issued
    /// concurrently but results are recorded in fixed order so the final
    /// state (and any abort) is identical to a sequential run.
    fn run_analysts(&self, state: &mut BiasState) -> Result<(), String> {
        match self.config.analyst_parallelism {
            AnalystParallelism::Sequential => {
                self.run_stage(AgentKind::ProgressiveAnalyst, state)?;
                self.run_stage(AgentKind::ConservativeAnalyst, state)
            }
            AnalystParallelism::Parallel => {
                let left = self.prepare(AgentKind::ProgressiveAnalyst, state);
                let right = self.prepare(AgentKind::ConservativeAnalyst, state);
                let (left_result, right_result) = thread::scope(|scope| {
                    let right_handle = scope.spawn(|| self.complete_and_parse(&right));
                    let left_result = self.complete_and_parse(&left);
                    let right_result = right_handle
                        .join()
                        .expect("analyst thread does not panic");
                    (left_result, right_result)
                });
                let mut abort = None;
                match left_result {
                    Ok(result) => self.record(state, result),
                    Err(err) => abort = Some(err),
                }
                match right_result {
                    Ok(result) => self.record(state, result),
                    Err(err) => abort = abort.or(Some(err)),
                }
                match abort {
                    Some(err) => Err(err),
                    None => Ok(()),
                }
            }
        }
    }

    /// Runs one article through every stage of the configured variant.
    pub fn run_article(&self, article: &Article) -> ArticleRun {
        let mut state = BiasState::new(article.clone(), self.config_fingerprint.clone());
        let mut steps = || -> Result<(), String> {
            self.run_stage(AgentKind::FactVerifier, &mut state)?;
            self.run_analysts(&mut state)?;
            if self.config.variant == PipelineVariant::Full {
                self.run_stage(AgentKind::PropagandaDetector, &mut state)?;
            }
            self.run_stage(AgentKind::NeutralSummarizer, &mut state)
        };
        match steps() {
            Ok(()) => ArticleRun::Completed(state),
            Err(error) => {
                state.note(format!("article aborted: {error}"));
                ArticleRun::Aborted { state, error }
            }
        }
    }

    /// Runs every article and assembles the run record. Transport-aborted
    /// articles are recorded and the batch continues.
    pub fn run_batch(&self, articles: &[Article]) -> Result<RunRecord, PipelineError> {
        if articles.is_empty() {
            return Err(PipelineError::EmptyManifest);
        }
        let mut states = Vec::with_capacity(articles.len());
        let mut results = Vec::with_capacity(articles.len());
        let mut aborts = Vec::new();
        for article in articles {
            let run = self.run_article(article);
            if let ArticleRun::Aborted { state: _, error } = &run {
                aborts.push(ArticleAbort {
                    article_id: article.id.clone(),
                    error: error.clone(),
                });
            }
            let state = match run {
                ArticleRun::Completed(state) | ArticleRun::Aborted { state, .. } => state,
            };
            results.push(article_result(&state, self.config.variant));
            states.push(state);
        }

        let seq = RUN_COUNTER.fetch_add(1, Ordering::Relaxed);
        let timestamp = chrono::Utc::now().to_rfc3339_opts(chrono::SecondsFormat::Millis, true);
        Ok(RunRecord {
            run_id: format!("run-{}-{seq}", timestamp.replace([':', '.'], "")),
            model_id: self.model_id.clone(),
            backend_descriptor: self.backend.descriptor(),
            variant: self.config.variant,
            timestamp,
            config: self.config.clone(),
            states,
            results,
            aborts,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::backend::ScriptedBackend;
    use crate::domain::{FailureKind, FramingGroup, FramingLabel};
    use std::collections::BTreeMap;

    fn article(id: &str) -> Article {
        Article {
            id: id.into(),
            outlet: "outlet".into(),
            framing: FramingLabel {
                group: FramingGroup::Center,
                subtype: None,
            },
            topic: "topic".into(),
            body: "A strike dominated coverage this week.".into(),
            source_path: format!("articles/{id}.txt"),
        }
    }

    fn facts_json() -> String {
        r#"{"verified_core_events":["a strike happened"],"contested_claims":[],"structural_omissions":[]}"#.into()
    }

    fn framing_json(side: &str, text: &str) -> String {
        format!(
            r#"{{"ideological_framing":"{text}","linguistic_markers":[],"{side}_omissions":[],"adversarial_critique":"critique"}}"#
        )
    }

    fn propaganda_json(mi: f64) -> String {
        format!(r#"{{"manipulation_index":{mi},"detected_techniques":[],"rhetorical_bias":"fear"}}"#)
    }

    fn synthesis_json() -> String {
        r#"{"consensus_reality":"cr","battleground_of_spin":{"left_interpretation":"l","right_interpretation":"r"},"de_biased_summary":"s","omission_map":{"left_missing":[],"right_missing":[],"both_missing":[]},"media_literacy_takeaway":"t"}"#.into()
    }

    fn full_fixture_set(id: &str) -> BTreeMap<String, String> {
        let mut fixtures = BTreeMap::new();
        fixtures.insert(format!("fact_verifier/{id}"), facts_json());
        fixtures.insert(
            format!("progressive_analyst/{id}"),
            framing_json("left", "civilian suffering emphasised"),
        );
        fixtures.insert(
            format!("conservative_analyst/{id}"),
            framing_json("right", "security response justified"),
        );
        fixtures.insert(format!("propaganda_detector/{id}"), propaganda_json(0.7));
        fixtures.insert(format!("neutral_summarizer/{id}"), synthesis_json());
        fixtures
    }

    fn runner_config() -> PipelineConfig {
        PipelineConfig::default()
    }

    #[test]
    fn full_run_populates_every_stage() {
        let backend = ScriptedBackend::from_fixtures(full_fixture_set("a1"));
        let runner = PipelineRunner::new(&backend, "model", runner_config());
        let run = runner.run_article(&article("a1"));
        let ArticleRun::Completed(state) = run else {
            panic!("expected completed run");
        };
        assert_eq!(state.parsed_count(), 5);
        assert!(state.facts.is_some());
        assert!(state.left.is_some());
        assert!(state.right.is_some());
        assert!(state.propaganda.is_some());
        assert!(state.synthesis.is_some());
        assert_eq!(
            backend.request_log(),
            vec![
                "fact_verifier/a1",
                "progressive_analyst/a1",
                "conservative_analyst/a1",
                "propaganda_detector/a1",
                "neutral_summarizer/a1",
            ]
        );
    }

    #[test]
    fn stage_inputs_isolate_analysts_and_detector() {
        let backend = ScriptedBackend::from_fixtures(full_fixture_set("a1"));
        let runner = PipelineRunner::new(&backend, "model", runner_config());
        let ArticleRun::Completed(state) = runner.run_article(&article("a1")) else {
            panic!("expected completed run");
        };
        for agent in [
            AgentKind::ProgressiveAnalyst,
            AgentKind::ConservativeAnalyst,
            AgentKind::PropagandaDetector,
        ] {
            let inputs = stage_inputs(agent, &state, runner.config()).unwrap();
            assert!(inputs.blocks.is_empty(), "{agent} must not receive blocks");
        }
    }

    #[test]
    fn summarizer_receives_all_four_blocks_in_order() {
        let backend = ScriptedBackend::from_fixtures(full_fixture_set("a1"));
        let runner = PipelineRunner::new(&backend, "model", runner_config());
        let ArticleRun::Completed(state) = runner.run_article(&article("a1")) else {
            panic!("expected completed run");
        };
        let inputs = stage_inputs(AgentKind::NeutralSummarizer, &state, runner.config()).unwrap();
        let names: Vec<BlockName> = inputs.blocks.iter().map(|(n, _)| *n).collect();
        assert_eq!(
            names,
            vec![
                BlockName::FactsJson,
                BlockName::LeftJson,
                BlockName::RightJson,
                BlockName::PropagandaJson
            ]
        );
        assert!(inputs.omitted.is_empty());
    }

    #[test]
    fn failed_upstream_block_is_omitted_with_note() {
        let mut fixtures = full_fixture_set("a1");
        fixtures.insert(
            "propaganda_detector/a1".into(),
            "I cannot analyse this article.".into(),
        );
        let backend = ScriptedBackend::from_fixtures(fixtures);
        let runner = PipelineRunner::new(&backend, "model", runner_config());
        let ArticleRun::Completed(state) = runner.run_article(&article("a1")) else {
            panic!("expected completed run");
        };
        let detector = state.outcome(AgentKind::PropagandaDetector).unwrap();
        assert_eq!(detector.status, StageStatus::ParseFailure);
        assert_eq!(detector.failure_kind, Some(FailureKind::NoJsonFound));

        let inputs = stage_inputs(AgentKind::NeutralSummarizer, &state, runner.config()).unwrap();
        assert_eq!(inputs.blocks.len(), 3);
        assert_eq!(
            inputs.omitted,
            vec![(
                BlockName::PropagandaJson,
                "detector parse failure".to_string()
            )]
        );
        assert!(state
            .notes
            .iter()
            .any(|n| n == "context block PROPAGANDA_JSON omitted: detector parse failure"));
    }

    #[test]
    fn order_violation_detected() {
        let state = BiasState::new(article("a1"), "cfg".into());
        let err = stage_inputs(
            AgentKind::NeutralSummarizer,
            &state,
            &PipelineConfig::default(),
        )
        .unwrap_err();
        assert_eq!(
            err,
            PipelineError::OrderViolation {
                agent: AgentKind::NeutralSummarizer,
                missing: AgentKind::FactVerifier
            }
        );

        let err = stage_inputs(
            AgentKind::ProgressiveAnalyst,
            &state,
            &PipelineConfig::default(),
        )
        .unwrap_err();
        assert_eq!(
            err,
            PipelineError::OrderViolation {
                agent: AgentKind::ProgressiveAnalyst,
                missing: AgentKind::FactVerifier
            }
        );
    }

    #[test]
    fn ablated_variant_skips_detector_entirely() {
        let backend = ScriptedBackend::from_fixtures(full_fixture_set("a1"));
        let mut config = runner_config();
        config.variant = PipelineVariant::AblatedNoPropaganda;
        let runner = PipelineRunner::new(&backend, "model", config);
        let ArticleRun::Completed(state) = runner.run_article(&article("a1")) else {
            panic!("expected completed run");
        };
        assert_eq!(backend.request_log().len(), 4);
        assert!(!backend
            .request_log()
            .iter()
            .any(|k| k.starts_with("propaganda_detector/")));
        assert!(state.outcome(AgentKind::PropagandaDetector).is_none());
        assert!(state.propaganda.is_none());

        // the summarizer got no propaganda block even though the fixture
        // for it exists
        let inputs = stage_inputs(AgentKind::NeutralSummarizer, &state, runner.config()).unwrap();
        assert_eq!(inputs.blocks.len(), 3);
        assert!(inputs
            .omitted
            .contains(&(BlockName::PropagandaJson, "ablated variant".to_string())));
    }

    #[test]
    fn analyst_requests_ignore_upstream_content() {
        // two backends with different fact-verifier fixtures must produce
        // identical analyst request digests
        let backend_a = ScriptedBackend::from_fixtures(full_fixture_set("a1"));
        let mut corrupted = full_fixture_set("a1");
        corrupted.insert("fact_verifier/a1".into(), "garbage, not json".into());
        let backend_b = ScriptedBackend::from_fixtures(corrupted);

        let runner_a = PipelineRunner::new(&backend_a, "model", runner_config());
        let runner_b = PipelineRunner::new(&backend_b, "model", runner_config());
        let state_a = match runner_a.run_article(&article("a1")) {
            ArticleRun::Completed(s) => s,
            _ => panic!(),
        };
        let state_b = match runner_b.run_article(&article("a1")) {
            ArticleRun::Completed(s) => s,
            _ => panic!(),
        };

        for agent in [
            AgentKind::ProgressiveAnalyst,
            AgentKind::ConservativeAnalyst,
            AgentKind::PropagandaDetector,
        ] {
            assert_eq!(
                state_a.outcome(agent).unwrap().request_digest,
                state_b.outcome(agent).unwrap().request_digest,
                "{agent} request changed when upstream output changed"
            );
        }
        // the summarizer legitimately sees upstream output, so its request
        // must differ
        assert_ne!(
            state_a
                .outcome(AgentKind::NeutralSummarizer)
                .unwrap()
                .request_digest,
            state_b
                .outcome(AgentKind::NeutralSummarizer)
                .unwrap()
                .request_digest
        );
    }

    #[test]
    fn parallel_analysts_match_sequential_run() {
        let backend_seq = ScriptedBackend::from_fixtures(full_fixture_set("a1"));
        let backend_par = ScriptedBackend::from_fixtures(full_fixture_set("a1"));
        let sequential = PipelineRunner::new(&backend_seq, "model", runner_config());
        let mut parallel_config = runner_config();
        parallel_config.analyst_parallelism = AnalystParallelism::Parallel;
        let parallel = PipelineRunner::new(&backend_par, "model", parallel_config);

        let state_seq = match sequential.run_article(&article("a1")) {
            ArticleRun::Completed(s) => s,
            _ => panic!(),
        };
        let state_par = match parallel.run_article(&article("a1")) {
            ArticleRun::Completed(s) => s,
            _ => panic!(),
        };
        // config fingerprints differ (parallelism is config), but the agent
        // outputs and outcomes must match
        assert_eq!(state_seq.left, state_par.left);
        assert_eq!(state_seq.right, state_par.right);
        assert_eq!(state_seq.synthesis, state_par.synthesis);
        assert_eq!(state_seq.parsed_count(), state_par.parsed_count());
    }

    #[test]
    fn missing_fixture_records_failure_and_continues() {
        let mut fixtures = full_fixture_set("a1");
        fixtures.remove("progressive_analyst/a1");
        let backend = ScriptedBackend::from_fixtures(fixtures);
        let runner = PipelineRunner::new(&backend, "model", runner_config());
        let ArticleRun::Completed(state) = runner.run_article(&article("a1")) else {
            panic!("expected completed run (missing fixture is not transport)");
        };
        let left = state.outcome(AgentKind::ProgressiveAnalyst).unwrap();
        assert_eq!(left.status, StageStatus::ParseFailure);
        assert!(state.notes.iter().any(|n| n.contains("backend error")));
        // downstream stages still ran
        assert!(state.outcome(AgentKind::NeutralSummarizer).is_some());
    }

    #[test]
    fn retries_reissue_request_on_parse_failure() {
        let mut fixtures = full_fixture_set("a1");
        fixtures.insert("fact_verifier/a1".into(), "not json at all".into());
        let backend = ScriptedBackend::from_fixtures(fixtures);
        let mut config = runner_config();
        config.retries = 2;
        let runner = PipelineRunner::new(&backend, "model", config);
        let ArticleRun::Completed(state) = runner.run_article(&article("a1")) else {
            panic!("expected completed run");
        };
        let fact_requests = backend
            .request_log()
            .iter()
            .filter(|k| *k == "fact_verifier/a1")
            .count();
        assert_eq!(fact_requests, 3);
        assert_eq!(
            state.outcome(AgentKind::FactVerifier).unwrap().status,
            StageStatus::ParseFailure
        );
        assert_eq!(state.notes.iter().filter(|n| n.contains("retrying")).count(), 2);
    }

    #[test]
    fn batch_runs_every_article_and_rejects_empty_manifest() {
        let mut fixtures = BTreeMap::new();
        for id in ["a1", "a2", "a3"] {
            fixtures.extend(full_fixture_set(id));
        }
        let backend = ScriptedBackend::from_fixtures(fixtures);
        let runner = PipelineRunner::new(&backend, "model", runner_config());
        let articles: Vec<Article> = ["a1", "a2", "a3"].iter().map(|id| article(id)).collect();
        let run = runner.run_batch(&articles).unwrap();
        assert_eq!(run.states.len(), 3);
        assert_eq!(run.results.len(), 3);
        assert!(run.aborts.is_empty());
        assert_eq!(run.model_id, "model");
        assert_eq!(run.variant, PipelineVariant::Full);

        assert_eq!(
            runner.run_batch(&[]).unwrap_err(),
            PipelineError::EmptyManifest
        );
    }

    #[test]
    fn run_ids_are_unique() {
        let backend = ScriptedBackend::from_fixtures(full_fixture_set("a1"));
        let runner = PipelineRunner::new(&backend, "model", runner_config());
        let articles = vec![article("a1")];
        let a = runner.run_batch(&articles).unwrap();
        let b = runner.run_batch(&articles).unwrap();
        assert_ne!(a.run_id, b.run_id);
    }
}
