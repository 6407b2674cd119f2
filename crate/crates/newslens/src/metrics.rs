//! Per-article metrics: the Polarization Divergence Score and the
//! Manipulation Index.
//!
//! PDS is one minus the Jaccard overlap between the two analysts' framing
//! vocabularies: identical framing scores 0 and fully disjoint framing
//! scores 1. Each side's text is tokenized (lowercased, split on
//! non-alphanumeric runs) and capped at its first 200 tokens before the set
//! comparison.
//!
//! MI is never computed here; it is the detector's own `manipulation_index`
//! judgement, extracted as-is. Each metric is excluded independently, so a
//! failed analyst stage removes PDS while leaving MI usable and vice versa.

use std::collections::BTreeSet;

use thiserror::Error;

use crate::domain::{
    AgentKind, ArticleResult, BiasState, MetricValue, PipelineVariant, StageOutcome,
};

/// Maximum tokens of each framing text that participate in PDS.
pub const FRAMING_TOKEN_CAP: usize = 200;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum MetricsError {
    /// One or both framing texts had no tokens at all.
    #[error("framing text contains no tokens")]
    EmptyFraming,
}

/// Lowercases and splits on non-alphanumeric runs, keeping the first
/// [`FRAMING_TOKEN_CAP`] tokens.
pub fn tokenize_framing(text: &str) -> Vec<String> {
    text.to_lowercase()
        .split(|c: char| !c.is_alphanumeric())
        .filter(|t| !t.is_empty())
        .take(FRAMING_TOKEN_CAP)
        .map(str::to_string)
        .collect()
}

/// Polarization Divergence Score between two framing texts:
/// `1 - |L ∩ R| / |L ∪ R|` over their token sets.
pub fn compute_pds(left: &str, right: &str) -> Result<f64, MetricsError> {
    let l: BTreeSet<String> = tokenize_framing(left).into_iter().collect();
    let r: BTreeSet<String> = tokenize_framing(right).into_iter().collect();
    if l.is_empty() || r.is_empty() {
        return Err(MetricsError::EmptyFraming);
    }
    let intersection = l.intersection(&r).count();
    let union = l.union(&r).count();
    Ok(1.0 - intersection as f64 / union as f64)
}

/// Why a stage's output cannot feed a metric, or `None` when it can.
fn stage_reason(outcome: Option<&StageOutcome>, agent: AgentKind) -> Option<String> {
    match outcome {
        None => Some(format!("{} stage not executed", agent.stage_name())),
        Some(o) if !o.is_parsed() => Some(format!("{} parse failure", agent.stage_name())),
        // A framing report stitched back together from a cut-off response
        // would understate overlap, so it is treated as a parse failure for
        // metric purposes.
        Some(o) if o.repaired_from_truncation => {
            Some(format!("{} parse failure", agent.stage_name()))
        }
        Some(_) => None,
    }
}

/// Extracts the Manipulation Index from the detector's report, or the
/// reason it is unavailable.
pub fn extract_mi(state: &BiasState, variant: PipelineVariant) -> MetricValue {
    if variant == PipelineVariant::AblatedNoPropaganda {
        return MetricValue::excluded("ablated variant");
    }
    if let Some(reason) = stage_reason(
        state.outcome(AgentKind::PropagandaDetector),
        AgentKind::PropagandaDetector,
    ) {
        return MetricValue::excluded(reason);
    }
    match &state.propaganda {
        Some(report) => MetricValue::present(report.manipulation_index),
        None => MetricValue::excluded("detector parse failure"),
    }
}

/// Derives both metrics for one article from its pipeline state. Each
/// metric is present or excluded independently.
pub fn article_result(state: &BiasState, variant: PipelineVariant) -> ArticleResult {
    let left_reason = stage_reason(
        state.outcome(AgentKind::ProgressiveAnalyst),
        AgentKind::ProgressiveAnalyst,
    );
    let right_reason = stage_reason(
        state.outcome(AgentKind::ConservativeAnalyst),
        AgentKind::ConservativeAnalyst,
    );
    let pds = match (&state.left, &state.right, left_reason, right_reason) {
        (_, _, Some(l), Some(r)) => MetricValue::excluded(format!("{l}; {r}")),
        (_, _, Some(l), None) => MetricValue::excluded(l),
        (_, _, None, Some(r)) => MetricValue::excluded(r),
        (Some(left), Some(right), None, None) => {
            match compute_pds(&left.ideological_framing, &right.ideological_framing) {
                Ok(value) => MetricValue::present(value),
                Err(MetricsError::EmptyFraming) => MetricValue::excluded("empty framing text"),
            }
        }
        // outcome recorded as parsed but report absent; write-once state
        // makes this unreachable in practice
        _ => MetricValue::excluded("framing report missing"),
    };

    let mi = extract_mi(state, variant);
    let rhetoric = state
        .propaganda
        .as_ref()
        .and_then(|p| p.rhetorical_bias.clone());

    ArticleResult {
        article_id: state.article.id.clone(),
        pds,
        mi,
        rhetoric,
    }
}
