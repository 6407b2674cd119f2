//! Human-readable views over run records.
//!
//! Three deliverables live here: the per-article interpretive map (every
//! agent's structured report side by side, with explicit reasons for any
//! gap), the aggregate report (per-article metrics plus group, topic, rank
//! test, and power summaries), and comparison tables (cross-model stability
//! and detector ablation). A run's identity fields (`run_id`, timestamp)
//! never appear in rendered output, so rendering the same fixtures twice
//! yields byte-identical reports.
//!
//! Reference checking compares a run against a table of expected values
//! loaded from JSON. Every comparison becomes one labeled line carrying the
//! reference value, the computed value, and a match flag; discrepancies are
//! surfaced, never hidden or auto-corrected.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::domain::{
    AgentKind, ArticleAbort, FactsReport, FramingLabel, FramingReport, GroupStats,
    MetricValue, PipelineVariant, PropagandaReport, RunRecord, SynthesisReport, UTestResult,
};
use crate::stats::{
    self, cross_model_delta, group_stats, mann_whitney_u, metric_values_by_group,
    min_detectable_d, CrossModelRow, Grouping, MetricKind,
};

/// Absolute tolerance for a reference line to count as matching.
pub const REFERENCE_TOLERANCE: f64 = 0.001;

#[derive(Debug, Error)]
pub enum ReportError {
    #[error("article {0} is not part of this run")]
    UnknownArticle(String),
    #[error("the two runs share no articles")]
    NoSharedArticles,
    #[error("reading {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("reference file {path}: {detail}")]
    Format { path: PathBuf, detail: String },
    #[error(transparent)]
    Stats(#[from] stats::StatsError),
}

/// One agent's slot in the interpretive map: either the parsed report or the
/// reason it is missing.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Section<T> {
    Available(T),
    Unavailable { unavailable: String },
}

impl<T> Section<T> {
    pub fn available(&self) -> Option<&T> {
        match self {
            Section::Available(value) => Some(value),
            Section::Unavailable { .. } => None,
        }
    }
}

/// All five agent reports for one article, plus the derived metrics.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InterpretiveMap {
    pub article_id: String,
    pub outlet: String,
    pub framing: FramingLabel,
    pub topic: String,
    pub facts: Section<FactsReport>,
    pub left: Section<FramingReport>,
    pub right: Section<FramingReport>,
    pub propaganda: Section<PropagandaReport>,
    pub synthesis: Section<SynthesisReport>,
    pub polarization_divergence: MetricValue,
    pub manipulation_index: MetricValue,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub rhetorical_bias: Option<String>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub notes: Vec<String>,
}

fn section_reason(run: &RunRecord, article_id: &str, agent: AgentKind) -> String {
    if agent == AgentKind::PropagandaDetector
        && run.variant == PipelineVariant::AblatedNoPropaganda
    {
        return "ablated variant".into();
    }
    let executed = run
        .state_for(article_id)
        .map(|s| s.outcomes.contains_key(&agent))
        .unwrap_or(false);
    if executed {
        format!("{} parse failure", agent.stage_name())
    } else {
        format!("{} stage not executed", agent.stage_name())
    }
}

fn section<T: Clone>(
    run: &RunRecord,
    article_id: &str,
    agent: AgentKind,
    report: &Option<T>,
) -> Section<T> {
    match report {
        Some(value) => Section::Available(value.clone()),
        None => Section::Unavailable {
            unavailable: section_reason(run, article_id, agent),
        },
    }
}

/// Assembles the interpretive map for one article of a run.
pub fn interpretive_map(run: &RunRecord, article_id: &str) -> Result<InterpretiveMap, ReportError> {
    let state = run
        .state_for(article_id)
        .ok_or_else(|| ReportError::UnknownArticle(article_id.to_string()))?;
    let result = run
        .result_for(article_id)
        .ok_or_else(|| ReportError::UnknownArticle(article_id.to_string()))?;
    Ok(InterpretiveMap {
        article_id: state.article.id.clone(),
        outlet: state.article.outlet.clone(),
        framing: state.article.framing,
        topic: state.article.topic.clone(),
        facts: section(run, article_id, AgentKind::FactVerifier, &state.facts),
        left: section(run, article_id, AgentKind::ProgressiveAnalyst, &state.left),
        right: section(run, article_id, AgentKind::ConservativeAnalyst, &state.right),
        propaganda: section(run, article_id, AgentKind::PropagandaDetector, &state.propaganda),
        synthesis: section(run, article_id, AgentKind::NeutralSummarizer, &state.synthesis),
        polarization_divergence: result.pds.clone(),
        manipulation_index: result.mi.clone(),
        rhetorical_bias: result.rhetoric.clone(),
        notes: state.notes.clone(),
    })
}

/// One article's row in the aggregate table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ArticleRow {
    pub article_id: String,
    pub outlet: String,
    pub group: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub subtype: Option<String>,
    pub topic: String,
    pub pds: MetricValue,
    pub mi: MetricValue,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub rhetoric: Option<String>,
}

/// Mean and spread of one metric within one bucket.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StatLine {
    pub metric: String,
    pub bucket: String,
    pub stats: GroupStats,
}

/// Pairwise rank test between two framing groups.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UTestLine {
    pub metric: String,
    pub group_a: String,
    pub group_b: String,
    pub n_a: usize,
    pub n_b: usize,
    pub test: UTestResult,
}

/// Minimum detectable effect for one group pair at the requested error rates.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PowerLine {
    pub group_a: String,
    pub group_b: String,
    pub n_a: usize,
    pub n_b: usize,
    pub min_detectable_d: f64,
}

/// Everything the `stats` command reports about one run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AggregateReport {
    pub model_id: String,
    pub backend_descriptor: String,
    pub variant: PipelineVariant,
    pub article_count: usize,
    pub rows: Vec<ArticleRow>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub aborts: Vec<ArticleAbort>,
    pub group_lines: Vec<StatLine>,
    pub topic_lines: Vec<StatLine>,
    pub u_tests: Vec<UTestLine>,
    pub alpha: f64,
    pub power: f64,
    pub power_lines: Vec<PowerLine>,
}

fn stat_lines(run: &RunRecord, grouping: Grouping) -> Vec<StatLine> {
    let mut lines = Vec::new();
    for (metric, name) in [(MetricKind::Pds, "pds"), (MetricKind::Mi, "mi")] {
        for (bucket, stats) in group_stats(run, metric, grouping) {
            lines.push(StatLine {
                metric: name.to_string(),
                bucket,
                stats,
            });
        }
    }
    lines
}

/// Builds the aggregate report. Rank tests and power lines cover every pair
/// of framing groups present in the run, on the PDS metric.
pub fn build_aggregate(
    run: &RunRecord,
    alpha: f64,
    power: f64,
) -> Result<AggregateReport, ReportError> {
    let rows = run
        .results
        .iter()
        .filter_map(|result| {
            let state = run.state_for(&result.article_id)?;
            Some(ArticleRow {
                article_id: result.article_id.clone(),
                outlet: state.article.outlet.clone(),
                group: state.article.framing.group.label().to_string(),
                subtype: state
                    .article
                    .framing
                    .subtype
                    .and_then(|s| match serde_json::to_value(s) {
                        Ok(serde_json::Value::String(text)) => Some(text),
                        _ => None,
                    }),
                topic: state.article.topic.clone(),
                pds: result.pds.clone(),
                mi: result.mi.clone(),
                rhetoric: result.rhetoric.clone(),
            })
        })
        .collect();

    let pds_by_group = metric_values_by_group(run, MetricKind::Pds, Grouping::FramingGroup);
    let groups: Vec<&String> = pds_by_group.keys().collect();
    let mut u_tests = Vec::new();
    let mut power_lines = Vec::new();
    for (i, group_a) in groups.iter().enumerate() {
        for group_b in groups.iter().skip(i + 1) {
            let a = &pds_by_group[*group_a];
            let b = &pds_by_group[*group_b];
            if a.is_empty() || b.is_empty() {
                continue;
            }
            let test = mann_whitney_u(a, b)?;
            u_tests.push(UTestLine {
                metric: "pds".into(),
                group_a: (*group_a).clone(),
                group_b: (*group_b).clone(),
                n_a: a.len(),
                n_b: b.len(),
                test,
            });
            let power_result = min_detectable_d(a.len(), b.len(), alpha, power)?;
            power_lines.push(PowerLine {
                group_a: (*group_a).clone(),
                group_b: (*group_b).clone(),
                n_a: a.len(),
                n_b: b.len(),
                min_detectable_d: power_result.min_detectable_d,
            });
        }
    }

    Ok(AggregateReport {
        model_id: run.model_id.clone(),
        backend_descriptor: run.backend_descriptor.clone(),
        variant: run.variant,
        article_count: run.states.len(),
        rows,
        aborts: run.aborts.clone(),
        group_lines: stat_lines(run, Grouping::FramingGroup),
        topic_lines: stat_lines(run, Grouping::Topic),
        u_tests,
        alpha,
        power,
        power_lines,
    })
}

/// Expected per-article metrics in a reference table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReferenceArticle {
    pub article_id: String,
    /// Tabulated PDS. Kept even for excluded articles, because topic means
    /// in the reference table average every tabulated value.
    pub pds: f64,
    /// Present when the reference run itself excluded this article's PDS.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub pds_excluded: Option<String>,
    pub mi: f64,
    pub rhetoric: String,
}

/// Expected value per bucket, for each metric.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ReferenceMetricTable {
    #[serde(default)]
    pub pds: BTreeMap<String, f64>,
    #[serde(default)]
    pub mi: BTreeMap<String, f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReferenceUTest {
    pub metric: String,
    pub group_a: String,
    pub group_b: String,
    pub u: f64,
    pub p_two_sided: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReferencePower {
    pub n1: usize,
    pub n2: usize,
    pub alpha: f64,
    pub power: f64,
    pub min_detectable_d: f64,
}

/// Full set of expected values a run can be checked against.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReferenceValues {
    pub label: String,
    pub per_article: Vec<ReferenceArticle>,
    #[serde(default)]
    pub group_means: ReferenceMetricTable,
    #[serde(default)]
    pub group_std_devs: ReferenceMetricTable,
    #[serde(default)]
    pub topic_means: ReferenceMetricTable,
    #[serde(default)]
    pub u_tests: Vec<ReferenceUTest>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub power: Option<ReferencePower>,
}

/// Loads reference values from a JSON file.
pub fn load_reference_values(path: &Path) -> Result<ReferenceValues, ReportError> {
    let text = std::fs::read_to_string(path).map_err(|source| ReportError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    serde_json::from_str(&text).map_err(|err| ReportError::Format {
        path: path.to_path_buf(),
        detail: err.to_string(),
    })
}

/// One compared quantity. `None` on either side means the value is excluded
/// or unavailable there; two `None`s agree.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CheckLine {
    pub label: String,
    pub reference: Option<f64>,
    pub computed: Option<f64>,
    pub tolerance: f64,
    pub matches: bool,
}

fn check_line(label: String, reference: Option<f64>, computed: Option<f64>) -> CheckLine {
    let matches = match (reference, computed) {
        (Some(r), Some(c)) => (r - c).abs() <= REFERENCE_TOLERANCE,
        (None, None) => true,
        _ => false,
    };
    CheckLine {
        label,
        reference,
        computed,
        tolerance: REFERENCE_TOLERANCE,
        matches,
    }
}

/// Outcome of checking a run against reference values.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReferenceCheck {
    pub label: String,
    pub lines: Vec<CheckLine>,
    /// Articles whose rhetoric classification differs from the reference.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub rhetoric_mismatches: Vec<String>,
}

impl ReferenceCheck {
    pub fn line(&self, label: &str) -> Option<&CheckLine> {
        self.lines.iter().find(|l| l.label == label)
    }

    pub fn mismatches(&self) -> Vec<&CheckLine> {
        self.lines.iter().filter(|l| !l.matches).collect()
    }
}

fn metric_table(table: &ReferenceMetricTable, metric: MetricKind) -> &BTreeMap<String, f64> {
    match metric {
        MetricKind::Pds => &table.pds,
        MetricKind::Mi => &table.mi,
    }
}

/// Topic series following the reference table's convention: every article
/// contributes its tabulated value, with the run's value taking precedence
/// whenever the run actually produced one.
fn topic_series(
    run: &RunRecord,
    refs: &ReferenceValues,
    metric: MetricKind,
) -> BTreeMap<String, Vec<f64>> {
    let mut buckets: BTreeMap<String, Vec<f64>> = BTreeMap::new();
    for reference in &refs.per_article {
        let Some(state) = run.state_for(&reference.article_id) else {
            continue;
        };
        let run_value = run.result_for(&reference.article_id).and_then(|r| match metric {
            MetricKind::Pds => r.pds.value(),
            MetricKind::Mi => r.mi.value(),
        });
        let fallback = match metric {
            MetricKind::Pds => reference.pds,
            MetricKind::Mi => reference.mi,
        };
        buckets
            .entry(state.article.topic.clone())
            .or_default()
            .push(run_value.unwrap_or(fallback));
    }
    buckets
}

fn mean(values: &[f64]) -> Option<f64> {
    if values.is_empty() {
        None
    } else {
        Some(values.iter().sum::<f64>() / values.len() as f64)
    }
}

/// Compares a run against reference values, line by line.
pub fn check_reference(run: &RunRecord, refs: &ReferenceValues) -> ReferenceCheck {
    let mut lines = Vec::new();
    let mut rhetoric_mismatches = Vec::new();

    for reference in &refs.per_article {
        let result = run.result_for(&reference.article_id);
        let pds_ref = if reference.pds_excluded.is_some() {
            None
        } else {
            Some(reference.pds)
        };
        lines.push(check_line(
            format!("pds {}", reference.article_id),
            pds_ref,
            result.and_then(|r| r.pds.value()),
        ));
        lines.push(check_line(
            format!("mi {}", reference.article_id),
            Some(reference.mi),
            result.and_then(|r| r.mi.value()),
        ));
        let rhetoric = result.and_then(|r| r.rhetoric.as_deref());
        if rhetoric != Some(reference.rhetoric.as_str()) {
            rhetoric_mismatches.push(reference.article_id.clone());
        }
    }

    for (metric, name) in [(MetricKind::Pds, "pds"), (MetricKind::Mi, "mi")] {
        let computed = group_stats(run, metric, Grouping::FramingGroup);
        for (group, expected) in metric_table(&refs.group_means, metric) {
            lines.push(check_line(
                format!("{name} mean {group}"),
                Some(*expected),
                computed.get(group).and_then(|s| s.mean),
            ));
        }
        for (group, expected) in metric_table(&refs.group_std_devs, metric) {
            lines.push(check_line(
                format!("{name} std dev {group}"),
                Some(*expected),
                computed.get(group).and_then(|s| s.std_dev),
            ));
        }
    }

    for (metric, name) in [(MetricKind::Pds, "pds"), (MetricKind::Mi, "mi")] {
        let series = topic_series(run, refs, metric);
        for (topic, expected) in metric_table(&refs.topic_means, metric) {
            lines.push(check_line(
                format!("{name} topic mean {topic}"),
                Some(*expected),
                series.get(topic).and_then(|values| mean(values)),
            ));
        }
    }

    for reference in &refs.u_tests {
        let metric = match reference.metric.as_str() {
            "mi" => MetricKind::Mi,
            _ => MetricKind::Pds,
        };
        let by_group = metric_values_by_group(run, metric, Grouping::FramingGroup);
        let test = match (by_group.get(&reference.group_a), by_group.get(&reference.group_b)) {
            (Some(a), Some(b)) if !a.is_empty() && !b.is_empty() => mann_whitney_u(a, b).ok(),
            _ => None,
        };
        let pair = format!(
            "{} {} vs {}",
            reference.metric, reference.group_a, reference.group_b
        );
        lines.push(check_line(
            format!("u {pair}"),
            Some(reference.u),
            test.as_ref().map(|t| t.u),
        ));
        lines.push(check_line(
            format!("p {pair}"),
            Some(reference.p_two_sided),
            test.as_ref().map(|t| t.p_two_sided),
        ));
    }

    if let Some(power) = &refs.power {
        let computed = min_detectable_d(power.n1, power.n2, power.alpha, power.power)
            .ok()
            .map(|r| r.min_detectable_d);
        lines.push(check_line(
            format!("min detectable d (n={} vs {})", power.n1, power.n2),
            Some(power.min_detectable_d),
            computed,
        ));
    }

    ReferenceCheck {
        label: refs.label.clone(),
        lines,
        rhetoric_mismatches,
    }
}

/// One article's PDS under the full pipeline and under the detector ablation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AblationRow {
    pub article_id: String,
    pub pds_full: MetricValue,
    pub pds_ablated: MetricValue,
    /// `pds_ablated - pds_full`, when both are present.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub delta_pds: Option<f64>,
}

/// Joins a full run with its detector-ablated counterpart on article id.
pub fn ablation_rows(
    full: &RunRecord,
    ablated: &RunRecord,
) -> Result<Vec<AblationRow>, ReportError> {
    let mut rows = Vec::new();
    for result in &full.results {
        let Some(ablated_result) = ablated.result_for(&result.article_id) else {
            continue;
        };
        let pds_full = result.pds.clone();
        let pds_ablated = ablated_result.pds.clone();
        let delta_pds = match (pds_full.value(), pds_ablated.value()) {
            (Some(f), Some(a)) => Some(a - f),
            _ => None,
        };
        rows.push(AblationRow {
            article_id: result.article_id.clone(),
            pds_full,
            pds_ablated,
            delta_pds,
        });
    }
    if rows.is_empty() {
        return Err(ReportError::NoSharedArticles);
    }
    Ok(rows)
}

fn fmt_metric(value: &MetricValue, decimals: usize) -> String {
    match value.value() {
        Some(v) => format!("{v:.decimals$}"),
        None => "n/a".to_string(),
    }
}

fn fmt_opt(value: Option<f64>) -> String {
    match value {
        Some(v) => format!("{v:.3}"),
        None => "n/a".to_string(),
    }
}

fn variant_label(variant: PipelineVariant) -> &'static str {
    match variant {
        PipelineVariant::Full => "full",
        PipelineVariant::AblatedNoPropaganda => "ablated (no propaganda detector)",
    }
}

fn push_exclusions(out: &mut String, rows: &[ArticleRow]) {
    let mut notes = Vec::new();
    for row in rows {
        if let Some(reason) = row.pds.exclusion_reason() {
            notes.push(format!("- {}: PDS excluded ({reason})", row.article_id));
        }
        if let Some(reason) = row.mi.exclusion_reason() {
            notes.push(format!("- {}: MI excluded ({reason})", row.article_id));
        }
    }
    if !notes.is_empty() {
        out.push_str("\nExclusions:\n");
        for note in notes {
            out.push_str(&note);
            out.push('\n');
        }
    }
}

/// Renders the aggregate report (and an optional reference comparison) as
/// markdown. Output depends only on run content, never on run identity.
pub fn render_aggregate(report: &AggregateReport, check: Option<&ReferenceCheck>) -> String {
    let mut out = String::new();
    out.push_str("# Bias pipeline results\n\n");
    let _ = writeln!(out, "- model: {}", report.model_id);
    let _ = writeln!(out, "- backend: {}", report.backend_descriptor);
    let _ = writeln!(out, "- variant: {}", variant_label(report.variant));
    let _ = writeln!(out, "- articles: {}", report.article_count);

    out.push_str("\n| article | outlet | framing | topic | PDS | MI | rhetoric |\n");
    out.push_str("|---|---|---|---|---|---|---|\n");
    for row in &report.rows {
        let framing = match &row.subtype {
            Some(subtype) => format!("{} ({subtype})", row.group),
            None => row.group.clone(),
        };
        let _ = writeln!(
            out,
            "| {} | {} | {} | {} | {} | {} | {} |",
            row.article_id,
            row.outlet,
            framing,
            row.topic,
            fmt_metric(&row.pds, 3),
            fmt_metric(&row.mi, 1),
            row.rhetoric.as_deref().unwrap_or("n/a"),
        );
    }
    push_exclusions(&mut out, &report.rows);

    if !report.aborts.is_empty() {
        out.push_str("\nAborted articles:\n");
        for abort in &report.aborts {
            let _ = writeln!(out, "- {}: {}", abort.article_id, abort.error);
        }
    }

    for (title, lines) in [
        ("Group statistics", &report.group_lines),
        ("Topic statistics", &report.topic_lines),
    ] {
        let _ = writeln!(out, "\n## {title}\n");
        out.push_str("| metric | bucket | n | mean | std dev |\n");
        out.push_str("|---|---|---|---|---|\n");
        for line in lines {
            let _ = writeln!(
                out,
                "| {} | {} | {} | {} | {} |",
                line.metric,
                line.bucket,
                line.stats.n,
                fmt_opt(line.stats.mean),
                fmt_opt(line.stats.std_dev),
            );
        }
    }

    if !report.u_tests.is_empty() {
        out.push_str("\n## Rank tests (PDS)\n\n");
        out.push_str("| groups | n | U | p (two-sided) | method |\n");
        out.push_str("|---|---|---|---|---|\n");
        for line in &report.u_tests {
            let method = match line.test.method {
                crate::domain::UTestMethod::Exact => "exact",
                crate::domain::UTestMethod::NormalApprox => "normal approx",
            };
            let _ = writeln!(
                out,
                "| {} vs {} | {} vs {} | {:.1} | {:.3} | {} |",
                line.group_a, line.group_b, line.n_a, line.n_b, line.test.u,
                line.test.p_two_sided, method,
            );
        }
    }

    if !report.power_lines.is_empty() {
        let _ = writeln!(
            out,
            "\n## Power (alpha {:.2}, power {:.2})\n",
            report.alpha, report.power
        );
        out.push_str("| groups | n | min detectable d |\n");
        out.push_str("|---|---|---|\n");
        for line in &report.power_lines {
            let _ = writeln!(
                out,
                "| {} vs {} | {} vs {} | {:.3} |",
                line.group_a, line.group_b, line.n_a, line.n_b, line.min_detectable_d,
            );
        }
    }

    if let Some(check) = check {
        out.push_str(&render_reference_check(check));
    }
    out
}

/// Renders a reference comparison as a markdown section.
pub fn render_reference_check(check: &ReferenceCheck) -> String {
    let mut out = String::new();
    let _ = writeln!(out, "\n## Reference comparison: {}\n", check.label);
    out.push_str("| quantity | reference | computed | match |\n");
    out.push_str("|---|---|---|---|\n");
    for line in &check.lines {
        let _ = writeln!(
            out,
            "| {} | {} | {} | {} |",
            line.label,
            fmt_opt(line.reference),
            fmt_opt(line.computed),
            if line.matches { "yes" } else { "NO" },
        );
    }
    let mismatched = check.mismatches().len();
    let _ = writeln!(
        out,
        "\n{} of {} reference quantities reproduced.",
        check.lines.len() - mismatched,
        check.lines.len()
    );
    if check.rhetoric_mismatches.is_empty() {
        out.push_str("Rhetoric classifications all match the reference.\n");
    } else {
        let _ = writeln!(
            out,
            "Rhetoric mismatches: {}.",
            check.rhetoric_mismatches.join(", ")
        );
    }
    out
}

/// Renders the per-article interpretive map as markdown.
pub fn render_interpretive_map(map: &InterpretiveMap) -> String {
    let mut out = String::new();
    let _ = writeln!(out, "# Interpretive map: {}\n", map.article_id);
    let framing = match map.framing.subtype {
        Some(subtype) => format!(
            "{} ({})",
            map.framing.group.label(),
            serde_json::to_value(subtype)
                .ok()
                .and_then(|v| v.as_str().map(str::to_string))
                .unwrap_or_default()
        ),
        None => map.framing.group.label().to_string(),
    };
    let _ = writeln!(out, "- outlet: {}", map.outlet);
    let _ = writeln!(out, "- framing: {framing}");
    let _ = writeln!(out, "- topic: {}", map.topic);

    fn push_section<T: Serialize>(out: &mut String, title: &str, section: &Section<T>) {
        let _ = writeln!(out, "\n## {title}\n");
        match section {
            Section::Available(value) => {
                let json = serde_json::to_string_pretty(value)
                    .expect("agent reports serialize to JSON");
                let _ = writeln!(out, "```json\n{json}\n```");
            }
            Section::Unavailable { unavailable } => {
                let _ = writeln!(out, "Unavailable: {unavailable}.");
            }
        }
    }

    push_section(&mut out, "Verified facts", &map.facts);
    push_section(&mut out, "Progressive analysis", &map.left);
    push_section(&mut out, "Conservative analysis", &map.right);
    push_section(&mut out, "Propaganda analysis", &map.propaganda);
    push_section(&mut out, "Neutral synthesis", &map.synthesis);

    out.push_str("\n## Metrics\n\n");
    let pds = match map.polarization_divergence.value() {
        Some(v) => format!("{v:.3}"),
        None => format!(
            "excluded ({})",
            map.polarization_divergence
                .exclusion_reason()
                .unwrap_or("unknown")
        ),
    };
    let mi = match map.manipulation_index.value() {
        Some(v) => format!("{v:.1}"),
        None => format!(
            "excluded ({})",
            map.manipulation_index.exclusion_reason().unwrap_or("unknown")
        ),
    };
    let _ = writeln!(out, "- polarization divergence: {pds}");
    let _ = writeln!(out, "- manipulation index: {mi}");
    if let Some(rhetoric) = &map.rhetorical_bias {
        let _ = writeln!(out, "- rhetorical bias: {rhetoric}");
    }
    if !map.notes.is_empty() {
        out.push_str("\nNotes:\n");
        for note in &map.notes {
            let _ = writeln!(out, "- {note}");
        }
    }
    out
}

/// Renders the cross-model stability table as markdown.
pub fn render_cross_model(
    model_a: &str,
    model_b: &str,
    rows: &[CrossModelRow],
) -> String {
    let mut out = String::new();
    out.push_str("# Cross-model comparison\n\n");
    let _ = writeln!(out, "- run A: {model_a}");
    let _ = writeln!(out, "- run B: {model_b}");
    out.push_str("\n| article | PDS A | PDS B | delta PDS | MI A | MI B | verdict |\n");
    out.push_str("|---|---|---|---|---|---|---|\n");
    for row in rows {
        let verdict = match (&row.stability, row.comparable) {
            (Some(crate::domain::Stability::Stable), _) => "stable".to_string(),
            (Some(crate::domain::Stability::ModelSensitive), _) => "model-sensitive".to_string(),
            (None, _) => "not comparable".to_string(),
        };
        let delta = match row.delta_pds {
            Some(d) => format!("{d:+.3}"),
            None => "n/a".to_string(),
        };
        let _ = writeln!(
            out,
            "| {} | {} | {} | {} | {} | {} | {} |",
            row.article_id,
            fmt_metric(&row.pds_a, 3),
            fmt_metric(&row.pds_b, 3),
            delta,
            fmt_metric(&row.mi_a, 1),
            fmt_metric(&row.mi_b, 1),
            verdict,
        );
    }
    let stable = rows
        .iter()
        .filter(|r| r.stability == Some(crate::domain::Stability::Stable))
        .count();
    let comparable = rows.iter().filter(|r| r.comparable).count();
    let _ = writeln!(
        out,
        "\n{stable} of {comparable} comparable articles are stable across models."
    );
    out
}

/// Renders the detector-ablation table as markdown.
pub fn render_ablation(full_model: &str, ablated_model: &str, rows: &[AblationRow]) -> String {
    let mut out = String::new();
    out.push_str("# Detector ablation\n\n");
    let _ = writeln!(out, "- full pipeline: {full_model}");
    let _ = writeln!(out, "- ablated pipeline: {ablated_model}");
    out.push_str("\n| article | PDS full | PDS ablated | delta PDS |\n");
    out.push_str("|---|---|---|---|\n");
    for row in rows {
        let delta = match row.delta_pds {
            Some(d) => format!("{d:+.3}"),
            None => "n/a".to_string(),
        };
        let _ = writeln!(
            out,
            "| {} | {} | {} | {} |",
            row.article_id,
            fmt_metric(&row.pds_full, 3),
            fmt_metric(&row.pds_ablated, 3),
            delta,
        );
    }
    out.push_str(
        "\nThe manipulation index is excluded for every ablated article because the \
         detector stage does not run.\n",
    );
    out
}

/// Convenience wrapper joining two runs and rendering the comparison,
/// choosing the ablation view when exactly one run is ablated.
pub fn render_comparison(run_a: &RunRecord, run_b: &RunRecord) -> Result<String, ReportError> {
    let a_ablated = run_a.variant == PipelineVariant::AblatedNoPropaganda;
    let b_ablated = run_b.variant == PipelineVariant::AblatedNoPropaganda;
    if a_ablated != b_ablated {
        let (full, ablated) = if a_ablated { (run_b, run_a) } else { (run_a, run_b) };
        let rows = ablation_rows(full, ablated)?;
        Ok(render_ablation(&full.model_id, &ablated.model_id, &rows))
    } else {
        let rows = cross_model_delta(run_a, run_b).map_err(|err| match err {
            stats::StatsError::NoOverlap => ReportError::NoSharedArticles,
            other => ReportError::Stats(other),
        })?;
        Ok(render_cross_model(&run_a.model_id, &run_b.model_id, &rows))
    }
}
