//! Shared domain types: articles, agent reports, pipeline state, run records,
//! and statistics results.
//!
//! `BiasState` is the only mutable structure in the system and it is strictly
//! write-once per stage: each agent's outcome (and parsed report, if any) is
//! recorded exactly once, and later stages can read but never rewrite earlier
//! output.

use std::collections::BTreeMap;
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// The five specialist agents, in pipeline stage order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AgentKind {
    FactVerifier,
    ProgressiveAnalyst,
    ConservativeAnalyst,
    PropagandaDetector,
    NeutralSummarizer,
}

impl AgentKind {
    /// All agents in stage order.
    pub const ALL: [AgentKind; 5] = [
        AgentKind::FactVerifier,
        AgentKind::ProgressiveAnalyst,
        AgentKind::ConservativeAnalyst,
        AgentKind::PropagandaDetector,
        AgentKind::NeutralSummarizer,
    ];

    /// Stable snake_case identifier, used for fixture keys and raw-output
    /// file paths.
    pub fn slug(&self) -> &'static str {
        match self {
            AgentKind::FactVerifier => "fact_verifier",
            AgentKind::ProgressiveAnalyst => "progressive_analyst",
            AgentKind::ConservativeAnalyst => "conservative_analyst",
            AgentKind::PropagandaDetector => "propaganda_detector",
            AgentKind::NeutralSummarizer => "neutral_summarizer",
        }
    }

    /// Short stage name used in exclusion reasons and report sections.
    pub fn stage_name(&self) -> &'static str {
        match self {
            AgentKind::FactVerifier => "fact-verifier",
            AgentKind::ProgressiveAnalyst => "left-analyst",
            AgentKind::ConservativeAnalyst => "right-analyst",
            AgentKind::PropagandaDetector => "detector",
            AgentKind::NeutralSummarizer => "summarizer",
        }
    }
}

impl fmt::Display for AgentKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.slug())
    }
}

/// Coarse outlet alignment used for grouping statistics.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FramingGroup {
    Progressive,
    Conservative,
    Center,
}

impl FramingGroup {
    pub fn label(&self) -> &'static str {
        match self {
            FramingGroup::Progressive => "progressive",
            FramingGroup::Conservative => "conservative",
            FramingGroup::Center => "center",
        }
    }
}

/// Finer-grained alignment annotation, optional per outlet.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum FramingSubtype {
    Left,
    LeftCenter,
    RightCenter,
    Right,
}

/// Outlet alignment label from the corpus manifest.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct FramingLabel {
    pub group: FramingGroup,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub subtype: Option<FramingSubtype>,
}

/// One input article, loaded from the corpus manifest.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Article {
    pub id: String,
    pub outlet: String,
    pub framing: FramingLabel,
    pub topic: String,
    /// Full body text; input truncation happens at prompt-build time, so the
    /// stored article keeps everything.
    pub body: String,
    pub source_path: String,
}

/// Fields an agent emitted beyond the expected schema. Preserved verbatim so
/// raw model output survives the typed mapping.
pub type ExtraFields = BTreeMap<String, serde_json::Value>;

/// Verification status of a contested claim.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum VeracityScore {
    Verified,
    Unverified,
    Contradicted,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ContestedClaim {
    pub claim: String,
    pub reason_contested: String,
    pub veracity_score: VeracityScore,
}

/// Output of the fact verifier.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FactsReport {
    pub verified_core_events: Vec<String>,
    pub contested_claims: Vec<ContestedClaim>,
    pub structural_omissions: Vec<String>,
    #[serde(flatten)]
    pub extras: ExtraFields,
}

/// Which ideological analyst produced a framing report.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FramingSide {
    Left,
    Right,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LinguisticMarker {
    pub phrase: String,
    pub political_coding: String,
    pub intended_emotional_resonance: String,
}

/// Output of either ideological analyst. The analysts emit side-specific
/// omission field names (`left_omissions` / `right_omissions`); both map to
/// `omissions` here with the side recorded separately.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FramingReport {
    pub side: FramingSide,
    pub ideological_framing: String,
    pub linguistic_markers: Vec<LinguisticMarker>,
    pub omissions: Vec<String>,
    pub adversarial_critique: String,
    #[serde(flatten)]
    pub extras: ExtraFields,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DetectedTechnique {
    pub technique: String,
    pub text_segment: String,
    pub psychological_mechanism: String,
}

/// Output of the propaganda detector. `manipulation_index` is the model's own
/// scalar judgement in [0, 1]; the pipeline extracts it but never computes it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PropagandaReport {
    pub manipulation_index: f64,
    pub detected_techniques: Vec<DetectedTechnique>,
    /// Free-form rhetoric classification (e.g. "fear", "neutral", "empathy"),
    /// normalized to lowercase.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub rhetorical_bias: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub asymmetry_note: Option<String>,
    #[serde(flatten)]
    pub extras: ExtraFields,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpinBattleground {
    pub left_interpretation: String,
    pub right_interpretation: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OmissionMap {
    pub left_missing: Vec<String>,
    pub right_missing: Vec<String>,
    pub both_missing: Vec<String>,
}

/// Output of the neutral summarizer.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthesisReport {
    pub consensus_reality: String,
    pub battleground_of_spin: SpinBattleground,
    pub de_biased_summary: String,
    pub omission_map: OmissionMap,
    pub media_literacy_takeaway: String,
    #[serde(flatten)]
    pub extras: ExtraFields,
}

/// A successfully parsed agent report of any kind.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AgentReport {
    Facts(FactsReport),
    Framing(FramingReport),
    Propaganda(PropagandaReport),
    Synthesis(SynthesisReport),
}

impl AgentReport {
    /// Whether this report variant is the one `agent` is expected to emit.
    pub fn matches_agent(&self, agent: AgentKind) -> bool {
        matches!(
            (self, agent),
            (AgentReport::Facts(_), AgentKind::FactVerifier)
                | (AgentReport::Framing(_), AgentKind::ProgressiveAnalyst)
                | (AgentReport::Framing(_), AgentKind::ConservativeAnalyst)
                | (AgentReport::Propaganda(_), AgentKind::PropagandaDetector)
                | (AgentReport::Synthesis(_), AgentKind::NeutralSummarizer)
        )
    }
}

/// Why an agent's raw output could not be turned into a typed report.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FailureKind {
    /// Output was length-capped and had to be (or could not be) repaired.
    Truncated,
    /// No JSON object found anywhere in the output.
    NoJsonFound,
    /// JSON parsed but required fields were missing or mistyped.
    SchemaMismatch,
    /// A field was present but its value was out of range or unrecognized.
    InvalidValue,
}

/// Conservative syntactic repairs the parser may apply, in application order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RepairKind {
    TrailingCommas,
    UnterminatedString,
    MissingClosers,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StageStatus {
    Parsed,
    ParseFailure,
}

/// Record of one agent's stage: what came back, whether it parsed, and the
/// digest of the exact request that produced it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StageOutcome {
    pub agent: AgentKind,
    /// Raw model output, retained verbatim even on failure.
    pub raw_text: String,
    pub status: StageStatus,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub failure_kind: Option<FailureKind>,
    /// Repairs applied before the JSON parsed (empty when none were needed).
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub repairs: Vec<RepairKind>,
    /// True when missing closers had to be appended, i.e. the output looked
    /// cut off. A framing report with this flag set is unusable for PDS.
    pub repaired_from_truncation: bool,
    /// SHA-256 of the canonical completion request, for isolation audits.
    pub request_digest: String,
}

impl StageOutcome {
    pub fn is_parsed(&self) -> bool {
        self.status == StageStatus::Parsed
    }
}

/// Errors from the write-once state discipline.
#[derive(Debug, Error, PartialEq, Eq)]
pub enum StateError {
    #[error("stage {0} was already recorded")]
    DuplicateStageWrite(AgentKind),
    #[error("stage {0} parsed but the attached report is of the wrong kind")]
    ReportMismatch(AgentKind),
    #[error("stage {0} parsed but no report was attached")]
    MissingReport(AgentKind),
    #[error("stage {0} failed but a report was attached")]
    UnexpectedReport(AgentKind),
}

/// Accumulated per-article state, written once per stage as the pipeline
/// advances and read-only afterwards.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BiasState {
    pub article: Article,
    /// Fingerprint of the run configuration this state was produced under.
    pub config_fingerprint: String,
    pub outcomes: BTreeMap<AgentKind, StageOutcome>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub facts: Option<FactsReport>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub left: Option<FramingReport>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub right: Option<FramingReport>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub propaganda: Option<PropagandaReport>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub synthesis: Option<SynthesisReport>,
    /// Append-only log of notable events (omitted context blocks, backend
    /// errors, retries).
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub notes: Vec<String>,
}

impl BiasState {
    pub fn new(article: Article, config_fingerprint: String) -> Self {
        BiasState {
            article,
            config_fingerprint,
            outcomes: BTreeMap::new(),
            facts: None,
            left: None,
            right: None,
            propaganda: None,
            synthesis: None,
            notes: Vec::new(),
        }
    }

    /// Records a stage outcome and, when it parsed, the typed report.
    /// Rejects double writes and status/report mismatches.
    pub fn record_outcome(
        &mut self,
        outcome: StageOutcome,
        report: Option<AgentReport>,
    ) -> Result<(), StateError> {
        let agent = outcome.agent;
        if self.outcomes.contains_key(&agent) {
            return Err(StateError::DuplicateStageWrite(agent));
        }
        match (outcome.status, &report) {
            (StageStatus::Parsed, None) => return Err(StateError::MissingReport(agent)),
            (StageStatus::Parsed, Some(r)) if !r.matches_agent(agent) => {
                return Err(StateError::ReportMismatch(agent));
            }
            (StageStatus::ParseFailure, Some(_)) => {
                return Err(StateError::UnexpectedReport(agent));
            }
            _ => {}
        }
        if let Some(report) = report {
            match report {
                AgentReport::Facts(r) => self.facts = Some(r),
                AgentReport::Framing(r) => match agent {
                    AgentKind::ProgressiveAnalyst => self.left = Some(r),
                    AgentKind::ConservativeAnalyst => self.right = Some(r),
                    // matches_agent already rejected other combinations
                    _ => unreachable!("framing report routed to non-analyst"),
                },
                AgentReport::Propaganda(r) => self.propaganda = Some(r),
                AgentReport::Synthesis(r) => self.synthesis = Some(r),
            }
        }
        self.outcomes.insert(agent, outcome);
        Ok(())
    }

    pub fn outcome(&self, agent: AgentKind) -> Option<&StageOutcome> {
        self.outcomes.get(&agent)
    }

    pub fn note(&mut self, text: impl Into<String>) {
        self.notes.push(text.into());
    }

    /// Number of stages that produced a parsed report.
    pub fn parsed_count(&self) -> usize {
        self.outcomes.values().filter(|o| o.is_parsed()).count()
    }
}

/// A metric that is either present or excluded with a human-readable reason.
/// The two cases are mutually exclusive by construction.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum MetricValue {
    Present { value: f64 },
    Excluded { excluded: String },
}

impl MetricValue {
    pub fn present(value: f64) -> Self {
        MetricValue::Present { value }
    }

    pub fn excluded(reason: impl Into<String>) -> Self {
        MetricValue::Excluded {
            excluded: reason.into(),
        }
    }

    pub fn value(&self) -> Option<f64> {
        match self {
            MetricValue::Present { value } => Some(*value),
            MetricValue::Excluded { .. } => None,
        }
    }

    pub fn exclusion_reason(&self) -> Option<&str> {
        match self {
            MetricValue::Present { .. } => None,
            MetricValue::Excluded { excluded } => Some(excluded),
        }
    }

    pub fn is_present(&self) -> bool {
        matches!(self, MetricValue::Present { .. })
    }
}

/// Per-article metric outcomes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ArticleResult {
    pub article_id: String,
    /// Polarization Divergence Score between the two analysts' framing text.
    pub pds: MetricValue,
    /// Manipulation Index extracted from the detector's report.
    pub mi: MetricValue,
    /// Detector's rhetoric classification, when available.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub rhetoric: Option<String>,
}

/// Which stages the pipeline runs.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PipelineVariant {
    /// All five agents.
    Full,
    /// Propaganda detector skipped entirely: four requests per article and no
    /// propaganda context for the summarizer.
    AblatedNoPropaganda,
}

/// How the two analyst stages are scheduled.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AnalystParallelism {
    Sequential,
    Parallel,
}

/// Per-agent sampling knobs sent with every completion request.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SamplingParams {
    pub temperature: f64,
    pub max_output_tokens: u32,
}

/// Run-level configuration. Everything that affects agent requests is in
/// here so a run's behavior is reconstructible from its record.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PipelineConfig {
    pub variant: PipelineVariant,
    /// Article text is truncated to at most this many bytes (backing off to
    /// the nearest character boundary) before being placed in a prompt.
    pub truncate_chars: usize,
    /// Per-agent overrides of the default sampling parameters.
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub sampling_overrides: BTreeMap<AgentKind, SamplingParams>,
    /// Extra attempts per stage after a parse failure. Zero means one attempt
    /// and no retries.
    pub retries: u32,
    pub analyst_parallelism: AnalystParallelism,
}

/// Default input truncation budget in bytes.
pub const DEFAULT_TRUNCATE_CHARS: usize = 1500;

impl Default for PipelineConfig {
    fn default() -> Self {
        PipelineConfig {
            variant: PipelineVariant::Full,
            truncate_chars: DEFAULT_TRUNCATE_CHARS,
            sampling_overrides: BTreeMap::new(),
            retries: 0,
            analyst_parallelism: AnalystParallelism::Sequential,
        }
    }
}

/// An article whose run was aborted by a transport failure. Whatever stages
/// completed beforehand are still in the corresponding `BiasState`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ArticleAbort {
    pub article_id: String,
    pub error: String,
}

/// Complete record of one batch run: configuration, per-article state, and
/// derived metrics.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunRecord {
    pub run_id: String,
    pub model_id: String,
    pub backend_descriptor: String,
    pub variant: PipelineVariant,
    pub timestamp: String,
    pub config: PipelineConfig,
    pub states: Vec<BiasState>,
    pub results: Vec<ArticleResult>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub aborts: Vec<ArticleAbort>,
}

impl RunRecord {
    pub fn result_for(&self, article_id: &str) -> Option<&ArticleResult> {
        self.results.iter().find(|r| r.article_id == article_id)
    }

    pub fn state_for(&self, article_id: &str) -> Option<&BiasState> {
        self.states.iter().find(|s| s.article.id == article_id)
    }
}

/// Mean and sample standard deviation of a group of metric values.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroupStats {
    pub n: usize,
    /// Absent when the group is empty.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mean: Option<f64>,
    /// Sample standard deviation (n - 1 denominator); absent when n < 2.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub std_dev: Option<f64>,
}

/// How a Mann-Whitney p-value was obtained.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum UTestMethod {
    /// Full enumeration of rank assignments; only for small tie-free samples.
    Exact,
    /// Normal approximation with tie correction and continuity correction.
    NormalApprox,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UTestResult {
    /// min(U1, U2), the reported statistic.
    pub u: f64,
    pub u1: f64,
    pub u2: f64,
    pub p_two_sided: f64,
    pub method: UTestMethod,
}

/// Minimum effect size detectable at the given error rates and sample sizes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PowerResult {
    pub n1: usize,
    pub n2: usize,
    pub alpha: f64,
    pub power: f64,
    pub min_detectable_d: f64,
}

/// Stability verdict for one article across two models.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Stability {
    Stable,
    ModelSensitive,
}
