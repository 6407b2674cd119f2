//! Group statistics and significance testing over run records.
//!
//! Small corpora drive the choices here: the Mann-Whitney U test enumerates
//! the exact null distribution whenever the pooled sample is small and
//! tie-free, and only falls back to the tie-corrected normal approximation
//! otherwise. A power helper reports the minimum detectable effect size so
//! non-significant results can be framed honestly.

use std::collections::BTreeMap;

use itertools::Itertools;
use statrs::distribution::{ContinuousCDF, Normal};
use thiserror::Error;

use crate::domain::{
    GroupStats, MetricValue, PowerResult, RunRecord, Stability, UTestMethod, UTestResult,
};

/// |ΔPDS| below this (with equal MI) counts as stable across models.
pub const STABILITY_DELTA_THRESHOLD: f64 = 0.15;

/// Largest pooled sample for which the exact U distribution is enumerated.
pub const EXACT_ENUMERATION_LIMIT: usize = 20;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum StatsError {
    #[error("sample is empty or too small")]
    EmptySample,
    #[error("pooled variance is zero, effect size undefined")]
    DegenerateVariance,
    #[error("parameter out of range: {0}")]
    DomainViolation(String),
    #[error("runs share no article ids")]
    NoOverlap,
}

/// Mean and sample (n - 1) standard deviation.
pub fn summarize(values: &[f64]) -> GroupStats {
    let n = values.len();
    if n == 0 {
        return GroupStats {
            n,
            mean: None,
            std_dev: None,
        };
    }
    let mean = values.iter().sum::<f64>() / n as f64;
    let std_dev = if n >= 2 {
        let ss: f64 = values.iter().map(|v| (v - mean).powi(2)).sum();
        Some((ss / (n - 1) as f64).sqrt())
    } else {
        None
    };
    GroupStats {
        n,
        mean: Some(mean),
        std_dev,
    }
}

/// Which metric a grouping reads from each result.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MetricKind {
    Pds,
    Mi,
}

impl MetricKind {
    fn pick(self, pds: &MetricValue, mi: &MetricValue) -> Option<f64> {
        match self {
            MetricKind::Pds => pds.value(),
            MetricKind::Mi => mi.value(),
        }
    }
}

/// How articles are bucketed for group statistics.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Grouping {
    FramingGroup,
    Topic,
}

/// Present metric values bucketed by framing group or topic. Excluded
/// metrics simply do not contribute.
pub fn metric_values_by_group(
    run: &RunRecord,
    metric: MetricKind,
    grouping: Grouping,
) -> BTreeMap<String, Vec<f64>> {
    let mut buckets: BTreeMap<String, Vec<f64>> = BTreeMap::new();
    for result in &run.results {
        let Some(value) = metric.pick(&result.pds, &result.mi) else {
            continue;
        };
        let Some(state) = run.state_for(&result.article_id) else {
            continue;
        };
        let key = match grouping {
            Grouping::FramingGroup => state.article.framing.group.label().to_string(),
            Grouping::Topic => state.article.topic.clone(),
        };
        buckets.entry(key).or_default().push(value);
    }
    buckets
}

/// Per-group mean and standard deviation of a metric.
pub fn group_stats(
    run: &RunRecord,
    metric: MetricKind,
    grouping: Grouping,
) -> BTreeMap<String, GroupStats> {
    metric_values_by_group(run, metric, grouping)
        .into_iter()
        .map(|(key, values)| (key, summarize(&values)))
        .collect()
}

fn tie_group_sizes(pooled: &mut [f64]) -> Vec<usize> {
    pooled.sort_by(|a, b| a.partial_cmp(b).expect("metric values are never NaN"));
    let mut groups = Vec::new();
    let mut run_len = 1usize;
    for i in 1..pooled.len() {
        if pooled[i] == pooled[i - 1] {
            run_len += 1;
        } else {
            if run_len > 1 {
                groups.push(run_len);
            }
            run_len = 1;
        }
    }
    if run_len > 1 {
        groups.push(run_len);
    }
    groups
}

fn std_normal() -> Normal {
    Normal::new(0.0, 1.0).expect("unit normal parameters are valid")
}

/// Two-sided Mann-Whitney U test.
///
/// U1 counts pairs where a sample-one value exceeds a sample-two value,
/// with ties contributing one half; the reported statistic is
/// `min(U1, U2)`. For pooled samples of at most
/// [`EXACT_ENUMERATION_LIMIT`] without ties the p-value comes from full
/// enumeration of rank assignments; otherwise from the normal
/// approximation with tie correction and continuity correction.
pub fn mann_whitney_u(a: &[f64], b: &[f64]) -> Result<UTestResult, StatsError> {
    if a.is_empty() || b.is_empty() {
        return Err(StatsError::EmptySample);
    }
    let n1 = a.len();
    let n2 = b.len();
    let n1f = n1 as f64;
    let n2f = n2 as f64;

    let mut u1 = 0.0f64;
    for x in a {
        for y in b {
            if x > y {
                u1 += 1.0;
            } else if x == y {
                u1 += 0.5;
            }
        }
    }
    let u2 = n1f * n2f - u1;
    let u = u1.min(u2);

    let mut pooled: Vec<f64> = a.iter().chain(b).copied().collect();
    let ties = tie_group_sizes(&mut pooled);

    if n1 + n2 <= EXACT_ENUMERATION_LIMIT && ties.is_empty() {
        let p = exact_two_sided_p(n1 + n2, n1, u);
        return Ok(UTestResult {
            u,
            u1,
            u2,
            p_two_sided: p,
            method: UTestMethod::Exact,
        });
    }

    let n = n1f + n2f;
    let mu = n1f * n2f / 2.0;
    let tie_term: f64 = ties.iter().map(|&t| (t * t * t - t) as f64).sum();
    let sigma_sq = n1f * n2f / 12.0 * ((n + 1.0) - tie_term / (n * (n - 1.0)));
    let p = if sigma_sq <= 0.0 {
        // every pooled value identical: no evidence of any difference
        1.0
    } else {
        let z = (u - mu + 0.5) / sigma_sq.sqrt();
        (2.0 * std_normal().cdf(z)).clamp(0.0, 1.0)
    };
    Ok(UTestResult {
        u,
        u1,
        u2,
        p_two_sided: p,
        method: UTestMethod::NormalApprox,
    })
}

/// Exact two-sided p by enumerating every assignment of pooled ranks to
/// sample one: `P(U1 <= u_min) + P(U1 >= n1*n2 - u_min)`, clamped to 1.
/// Only called on tie-free pooled samples, where U values are exact
/// half-integer-free counts.
fn exact_two_sided_p(n: usize, n1: usize, u_min: f64) -> f64 {
    let n2 = n - n1;
    let min_rank_sum = (n1 * (n1 + 1) / 2) as f64;
    let upper = (n1 * n2) as f64 - u_min;

    let mut count_low = 0u64;
    let mut count_high = 0u64;
    let mut total = 0u64;
    for combo in (0..n).combinations(n1) {
        let rank_sum: usize = combo.iter().map(|&pos| pos + 1).sum();
        let u1 = rank_sum as f64 - min_rank_sum;
        if u1 <= u_min + 1e-9 {
            count_low += 1;
        }
        if u1 >= upper - 1e-9 {
            count_high += 1;
        }
        total += 1;
    }
    (((count_low + count_high) as f64) / total as f64).min(1.0)
}

/// Cohen's d with the pooled sample standard deviation (n - 1 form).
pub fn cohens_d(a: &[f64], b: &[f64]) -> Result<f64, StatsError> {
    if a.len() < 2 || b.len() < 2 {
        return Err(StatsError::EmptySample);
    }
    let stats_a = summarize(a);
    let stats_b = summarize(b);
    let (n1, n2) = (a.len() as f64, b.len() as f64);
    let (s1, s2) = (
        stats_a.std_dev.expect("n >= 2"),
        stats_b.std_dev.expect("n >= 2"),
    );
    let pooled_var = ((n1 - 1.0) * s1 * s1 + (n2 - 1.0) * s2 * s2) / (n1 + n2 - 2.0);
    if pooled_var <= 0.0 {
        return Err(StatsError::DegenerateVariance);
    }
    let mean_a = stats_a.mean.expect("nonempty");
    let mean_b = stats_b.mean.expect("nonempty");
    Ok((mean_a - mean_b) / pooled_var.sqrt())
}

/// The smallest standardized effect a two-sample comparison of these sizes
/// can detect at the given significance level and power:
/// `(z_{1-alpha/2} + z_{power}) * sqrt(1/n1 + 1/n2)`.
pub fn min_detectable_d(
    n1: usize,
    n2: usize,
    alpha: f64,
    power: f64,
) -> Result<PowerResult, StatsError> {
    if n1 == 0 || n2 == 0 {
        return Err(StatsError::DomainViolation("sample sizes must be positive".into()));
    }
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(StatsError::DomainViolation(format!(
            "alpha must be in (0, 1), got {alpha}"
        )));
    }
    if !(power > 0.0 && power < 1.0) {
        return Err(StatsError::DomainViolation(format!(
            "power must be in (0, 1), got {power}"
        )));
    }
    let normal = std_normal();
    let z_alpha = normal.inverse_cdf(1.0 - alpha / 2.0);
    let z_power = normal.inverse_cdf(power);
    let d = (z_alpha + z_power) * (1.0 / n1 as f64 + 1.0 / n2 as f64).sqrt();
    Ok(PowerResult {
        n1,
        n2,
        alpha,
        power,
        min_detectable_d: d,
    })
}

/// Per-article comparison of the same corpus under two models.
#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct CrossModelRow {
    pub article_id: String,
    pub pds_a: MetricValue,
    pub pds_b: MetricValue,
    /// `pds_a - pds_b`, when both are present.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub delta_pds: Option<f64>,
    pub mi_a: MetricValue,
    pub mi_b: MetricValue,
    /// Stable when |delta| stays under the threshold and MI agrees exactly.
    /// Absent for incomparable rows.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub stability: Option<Stability>,
    /// False when any of the four metrics is excluded on either side.
    pub comparable: bool,
}

/// Joins two runs on article id and scores per-article stability. Articles
/// missing from either run are skipped; an empty join is an error.
pub fn cross_model_delta(
    run_a: &RunRecord,
    run_b: &RunRecord,
) -> Result<Vec<CrossModelRow>, StatsError> {
    let mut rows = Vec::new();
    for result_a in &run_a.results {
        let Some(result_b) = run_b.result_for(&result_a.article_id) else {
            continue;
        };
        let pds_a = result_a.pds.clone();
        let pds_b = result_b.pds.clone();
        let mi_a = result_a.mi.clone();
        let mi_b = result_b.mi.clone();
        let delta_pds = match (pds_a.value(), pds_b.value()) {
            (Some(a), Some(b)) => Some(a - b),
            _ => None,
        };
        let comparable = pds_a.is_present()
            && pds_b.is_present()
            && mi_a.is_present()
            && mi_b.is_present();
        let stability = if comparable {
            let delta = delta_pds.expect("pds present on both sides");
            // MI values come straight from parsed decimal literals, so exact
            // equality is the intended comparison
            let stable =
                delta.abs() < STABILITY_DELTA_THRESHOLD && mi_a.value() == mi_b.value();
            Some(if stable {
                Stability::Stable
            } else {
                Stability::ModelSensitive
            })
        } else {
            None
        };
        rows.push(CrossModelRow {
            article_id: result_a.article_id.clone(),
            pds_a,
            pds_b,
            delta_pds,
            mi_a,
            mi_b,
            stability,
            comparable,
        });
    }
    if rows.is_empty() {
        return Err(StatsError::NoOverlap);
    }
    Ok(rows)
}
