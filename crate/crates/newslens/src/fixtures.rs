//! Deterministic fixture corpora for offline runs.
//!
//! Each fixture set is a complete scripted corpus: a manifest, synthetic
//! article bodies, and one canned output file per agent per article. The
//! analyst outputs are constructed so the resulting PDS hits a chosen
//! target: for a target `t` we search for token counts `(k, u)` with
//! `1 - k/u ≈ t`, then emit framing texts that share exactly `k` tokens
//! out of a union of `u`. Detector outputs carry the target manipulation
//! index verbatim. Everything is a pure function of the row definition, so
//! regenerating a set is byte-for-byte reproducible.
//!
//! Three sets ship with the crate: the full fifteen-article reference
//! corpus (qwen-series behavior, including one article whose conservative
//! analysis is cut off mid-string to exercise truncation handling), a
//! four-article Kashmir set replaying a second model for cross-model
//! comparison, and the same four articles with detector-free analyst
//! behavior for the ablation study.

use std::fs;
use std::io;
use std::path::Path;

use serde_json::json;

use crate::digest::sha256_hex;
use crate::domain::{FramingGroup, FramingSubtype};
use crate::prompts::DEFAULT_MAX_OUTPUT_TOKENS;

/// Model label for the primary reference fixture set.
pub const REFERENCE_MODEL_ID: &str = "qwen2.5-3b-instruct";
/// Model label for the alternate-model Kashmir fixture sets.
pub const ALT_MODEL_ID: &str = "mistral-7b-instruct";

/// How a row's analyst outputs are constructed.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum FramingPlan {
    /// Both analysts parse; their framing texts realize this PDS.
    TargetPds(f64),
    /// The conservative analyst's output is truncated mid-string at the
    /// output cap, so PDS is excluded for this article.
    TruncatedRight,
}

/// One article in a fixture set.
#[derive(Debug, Clone)]
pub struct FixtureRow {
    pub id: String,
    pub outlet: String,
    pub group: FramingGroup,
    pub subtype: Option<FramingSubtype>,
    pub topic: String,
    pub plan: FramingPlan,
    pub mi: f64,
    pub rhetoric: String,
}

#[allow(clippy::too_many_arguments)]
fn row(
    outlet: &str,
    group: FramingGroup,
    subtype: Option<FramingSubtype>,
    topic: &str,
    plan: FramingPlan,
    mi: f64,
    rhetoric: &str,
) -> FixtureRow {
    FixtureRow {
        id: format!("{outlet}-{topic}"),
        outlet: outlet.to_string(),
        group,
        subtype,
        topic: topic.to_string(),
        plan,
        mi,
        rhetoric: rhetoric.to_string(),
    }
}

/// The fifteen-article reference corpus.
pub fn reference_rows() -> Vec<FixtureRow> {
    use FramingGroup::*;
    use FramingPlan::*;
    vec![
        row("thehindu", Progressive, None, "kashmir", TargetPds(0.773), 0.8, "fear"),
        row("republicworld", Conservative, None, "kashmir", TargetPds(0.615), 0.8, "fear"),
        row("ndtv", Center, None, "kashmir", TargetPds(0.857), 0.2, "neutral"),
        row("aljazeera", Progressive, None, "kashmir", TargetPds(0.857), 0.3, "empathy"),
        row("aljazeera", Progressive, None, "gaza", TargetPds(0.704), 0.2, "neutral"),
        row("foxnews", Conservative, None, "gaza", TargetPds(0.778), 0.8, "fear"),
        row("bbc", Center, None, "gaza", TargetPds(0.839), 0.6, "fear"),
        row("theguardian", Progressive, None, "climate", TargetPds(0.391), 0.0, "neutral"),
        row("foxnews", Conservative, None, "climate", TargetPds(1.000), 0.6, "fear"),
        row("reuters", Center, None, "climate", TargetPds(0.919), 0.3, "neutral"),
        row("breitbart", Conservative, None, "climate", TargetPds(0.719), 0.6, "fear"),
        row("bbc", Center, None, "ukraine", TargetPds(0.667), 0.2, "neutral"),
        row("rt", Conservative, None, "ukraine", TargetPds(0.962), 0.2, "neutral"),
        row("theguardian", Progressive, None, "ukraine", TruncatedRight, 0.6, "fear"),
        row(
            "wsj",
            Conservative,
            Some(FramingSubtype::RightCenter),
            "ukraine",
            TargetPds(0.458),
            0.6,
            "neutral",
        ),
    ]
}

/// The four Kashmir articles as analyzed by the alternate model.
pub fn kashmir_alt_rows() -> Vec<FixtureRow> {
    use FramingGroup::*;
    use FramingPlan::*;
    vec![
        row("thehindu", Progressive, None, "kashmir", TargetPds(0.813), 0.6, "fear"),
        row("republicworld", Conservative, None, "kashmir", TargetPds(0.740), 0.8, "fear"),
        row("ndtv", Center, None, "kashmir", TargetPds(0.566), 0.6, "fear"),
        row("aljazeera", Progressive, None, "kashmir", TargetPds(0.220), 0.6, "fear"),
    ]
}

/// The alternate-model Kashmir articles with the analyst behavior observed
/// when the detector stage is removed.
pub fn kashmir_ablated_rows() -> Vec<FixtureRow> {
    use FramingGroup::*;
    use FramingPlan::*;
    vec![
        row("thehindu", Progressive, None, "kashmir", TargetPds(0.807), 0.6, "fear"),
        row("republicworld", Conservative, None, "kashmir", TargetPds(0.919), 0.8, "fear"),
        row("ndtv", Center, None, "kashmir", TargetPds(0.895), 0.6, "fear"),
        row("aljazeera", Progressive, None, "kashmir", TargetPds(0.855), 0.6, "fear"),
    ]
}

/// Searches for shared/union token counts `(k, u)` whose Jaccard distance
/// `1 - k/u` is closest to `target`, under the constraint that both framing
/// texts stay within the 200-token PDS cap (`u + k <= 400`). Ties prefer
/// smaller texts.
pub fn jaccard_counts(target: f64) -> (usize, usize) {
    let mut best = (0usize, 2usize);
    let mut best_err = f64::INFINITY;
    for u in 1..=399usize {
        let k_max = u.min(400 - u);
        for k in 0..=k_max {
            if u + k < 2 {
                continue;
            }
            let err = (1.0 - k as f64 / u as f64 - target).abs();
            if err + 1e-15 < best_err {
                best = (k, u);
                best_err = err;
            }
        }
    }
    best
}

/// The PDS actually realized by [`jaccard_counts`] for this target.
pub fn achieved_pds(target: f64) -> f64 {
    let (k, u) = jaccard_counts(target);
    1.0 - k as f64 / u as f64
}

/// Builds a left/right framing text pair realizing the target PDS. Tokens
/// are salted with a hash of the article id so different articles share no
/// vocabulary.
pub fn framing_pair(id: &str, target: f64) -> (String, String) {
    let (k, u) = jaccard_counts(target);
    let salt: String = sha256_hex(id.as_bytes()).chars().take(6).collect();
    let total = u + k;
    let left_len = total.div_ceil(2);
    let right_len = total - left_len;

    let shared: Vec<String> = (0..k).map(|i| format!("{salt}b{i:03}")).collect();
    let left: Vec<String> = shared
        .iter()
        .cloned()
        .chain((0..left_len - k).map(|i| format!("{salt}l{i:03}")))
        .collect();
    let right: Vec<String> = shared
        .into_iter()
        .chain((0..right_len - k).map(|i| format!("{salt}r{i:03}")))
        .collect();
    (left.join(" "), right.join(" "))
}

/// An analyst output cut off mid-string at exactly `cap` whitespace tokens,
/// as a backend reports it when the output budget runs out.
pub fn truncated_framing_output(cap: usize) -> String {
    assert!(cap >= 1);
    let mut out = String::from("{\"ideological_framing\":\"cut0000");
    for i in 1..cap {
        out.push_str(&format!(" cut{i:04}"));
    }
    out
}

fn article_body(row: &FixtureRow, idx: usize) -> String {
    let outlet = &row.outlet;
    let topic = &row.topic;
    let mut body = format!(
        "{outlet} correspondents filed extended coverage of the {topic} story this week, \
         after officials described the operation as a decisive blow against militant \
         infrastructure. Opposition figures warned of escalation and demanded parliamentary \
         consultation before any further action.\n\n\
         Analysts interviewed by {outlet} split sharply along familiar lines. Supporters of \
         the government pointed to intelligence assessments and called the response measured \
         and necessary, while critics said the coverage sanitised the human cost and noted \
         that independent casualty verification remained unavailable.\n\n\
         International reaction was muted. Diplomats urged restraint on all sides, and \
         humanitarian organisations repeated calls for access to affected districts."
    );
    // every other article runs past the input truncation budget
    if idx % 2 == 1 {
        for _ in 0..4 {
            body.push_str(&format!(
                "\n\nRegional observers added that the {topic} coverage cycle has repeated \
                 this pattern before: an initial surge of official statements, a slower \
                 trickle of independent reporting, and a long tail of disputed figures that \
                 never fully converge."
            ));
        }
    }
    body
}

fn fact_output(row: &FixtureRow) -> String {
    json!({
        "verified_core_events": [
            format!("{} reported an operation in the {} region", row.outlet, row.topic),
            "Officials confirmed the action in a televised statement"
        ],
        "contested_claims": [{
            "claim": "Casualty figures remain disputed",
            "reason_contested": "No independent verification available",
            "veracity_score": "Unverified"
        }],
        "structural_omissions": [
            "No timeline of prior incidents",
            "No comment from international observers"
        ]
    })
    .to_string()
}

fn framing_output(side: &str, framing_text: &str) -> String {
    let (coding, resonance, omission, critique) = if side == "left" {
        (
            "sanitises military violence",
            "reassurance",
            "Civilian perspective absent from sourcing",
            "The article accepts official framing without challenge",
        )
    } else {
        (
            "validates a firm security response",
            "resolve",
            "History of prior provocations ignored",
            "The article gives too much weight to unverified denials",
        )
    };
    json!({
        "ideological_framing": framing_text,
        "linguistic_markers": [{
            "phrase": "decisive blow",
            "political_coding": coding,
            "intended_emotional_resonance": resonance
        }],
        (format!("{side}_omissions")): [omission],
        "adversarial_critique": critique
    })
    .to_string()
}

fn propaganda_output(row: &FixtureRow) -> String {
    json!({
        "manipulation_index": row.mi,
        "detected_techniques": [
            {
                "technique": "loaded language",
                "text_segment": "decisive blow",
                "psychological_mechanism": "projects strength and inevitability"
            },
            {
                "technique": "appeal to fear",
                "text_segment": "warned of escalation",
                "psychological_mechanism": "raises threat salience"
            }
        ],
        "rhetorical_bias": row.rhetoric,
        "asymmetry_note": "Charged language concentrates on one side of the dispute"
    })
    .to_string()
}

fn synthesis_output(row: &FixtureRow) -> String {
    json!({
        "consensus_reality": format!(
            "An operation took place in the {} region and both governments issued statements",
            row.topic
        ),
        "battleground_of_spin": {
            "left_interpretation": "Coverage underplays the human cost",
            "right_interpretation": "Coverage validates a necessary security response"
        },
        "de_biased_summary": "A military operation took place. Official accounts and independent \
            reporting differ on scope and casualties. Positions hardened on both sides while \
            international actors urged restraint.",
        "omission_map": {
            "left_missing": ["Security rationale behind the operation"],
            "right_missing": ["Civilian cost of the operation"],
            "both_missing": ["Independent casualty verification", "Long-term diplomatic options"]
        },
        "media_literacy_takeaway": "Compare casualty claims across outlets before accepting any \
            single figure"
    })
    .to_string()
}

/// Wraps a clean JSON fixture the way models actually return output: bare,
/// inside prose, or fenced, varying deterministically by article position.
fn wrap_output(json: String, idx: usize) -> String {
    match idx % 3 {
        0 => json,
        1 => format!("Here is the requested analysis:\n{json}\nI hope this helps."),
        _ => format!("```json\n{json}\n```"),
    }
}

/// Writes a complete fixture set under `dir`: `manifest.json`,
/// `articles/<id>.txt` bodies, and `<agent_slug>/<id>.txt` canned outputs.
/// The directory doubles as the `--manifest` parent and the `--fixtures`
/// root for a scripted run.
pub fn write_fixture_set(dir: &Path, rows: &[FixtureRow]) -> io::Result<()> {
    fs::create_dir_all(dir.join("articles"))?;
    for agent in crate::domain::AgentKind::ALL {
        fs::create_dir_all(dir.join(agent.slug()))?;
    }

    let mut manifest = Vec::new();
    for (idx, row) in rows.iter().enumerate() {
        let mut framing = serde_json::Map::new();
        framing.insert("group".into(), json!(row.group.label()));
        if let Some(subtype) = row.subtype {
            framing.insert(
                "subtype".into(),
                serde_json::to_value(subtype).expect("subtype serializes"),
            );
        }
        manifest.push(json!({
            "id": row.id,
            "outlet": row.outlet,
            "framing": framing,
            "topic": row.topic,
            "source_path": format!("articles/{}.txt", row.id),
        }));

        fs::write(
            dir.join("articles").join(format!("{}.txt", row.id)),
            article_body(row, idx),
        )?;

        let (left_text, right_text) = match row.plan {
            FramingPlan::TargetPds(target) => framing_pair(&row.id, target),
            FramingPlan::TruncatedRight => {
                framing_pair(&row.id, 0.5) // left side is ordinary output
            }
        };
        let right_fixture = match row.plan {
            FramingPlan::TargetPds(_) => {
                wrap_output(framing_output("right", &right_text), idx + 2)
            }
            // truncated output is never wrapped: the cutoff is the point
            FramingPlan::TruncatedRight => {
                truncated_framing_output(DEFAULT_MAX_OUTPUT_TOKENS as usize)
            }
        };

        let files = [
            ("fact_verifier", wrap_output(fact_output(row), idx)),
            (
                "progressive_analyst",
                wrap_output(framing_output("left", &left_text), idx + 1),
            ),
            ("conservative_analyst", right_fixture),
            ("propaganda_detector", wrap_output(propaganda_output(row), idx)),
            ("neutral_summarizer", wrap_output(synthesis_output(row), idx + 1)),
        ];
        for (slug, text) in files {
            fs::write(dir.join(slug).join(format!("{}.txt", row.id)), text)?;
        }
    }

    let manifest_json =
        serde_json::to_string_pretty(&manifest).expect("manifest entries serialize");
    fs::write(dir.join("manifest.json"), manifest_json)?;
    Ok(())
}
