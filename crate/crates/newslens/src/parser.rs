//! Tolerant extraction and typed validation of agent JSON output.
//!
//! Small instruction-tuned models wrap JSON in prose or code fences, leave
//! trailing commas, and get cut off mid-structure by output caps. The parser
//! deals with that in three stages:
//!
//! 1. [`extract_json_block`] finds the first balanced `{...}` object,
//!    tracking string literals and escapes so braces inside strings don't
//!    count. If the text ends before the object closes, the open prefix is
//!    returned tagged as unbalanced.
//! 2. [`repair_json`] applies ordered, conservative syntactic repairs:
//!    remove trailing commas, close an unterminated trailing string, append
//!    missing closing brackets. It never invents content.
//! 3. [`parse_agent_output`] maps the parsed value onto the expected report
//!    type for the agent, resolving field-name synonyms, normalizing
//!    enum-like strings, and preserving unrecognized fields.
//!
//! A length-capped response that needed any repair is refused outright: a
//! truncated framing text would silently skew the divergence metric, so it
//! is recorded as a truncation failure instead.

use serde_json::{Map, Value};
use thiserror::Error;

use crate::domain::{
    AgentKind, AgentReport, ContestedClaim, DetectedTechnique, ExtraFields, FactsReport,
    FailureKind, FramingReport, FramingSide, LinguisticMarker, OmissionMap, PropagandaReport,
    RepairKind, SpinBattleground, SynthesisReport, VeracityScore,
};

/// Result of scanning raw output for a JSON object.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Extraction {
    /// A balanced `{...}` block, ready to parse.
    Balanced(String),
    /// The text ended while the object was still open; this is the longest
    /// open prefix, a candidate for repair.
    Unbalanced(String),
}

impl Extraction {
    pub fn candidate(&self) -> &str {
        match self {
            Extraction::Balanced(s) | Extraction::Unbalanced(s) => s,
        }
    }
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum ExtractError {
    #[error("no JSON object found in output")]
    NoJsonFound,
}

/// Outcome of a successful repair pass.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Repaired {
    pub text: String,
    /// Repairs applied, in application order; empty when the text parsed
    /// as-is.
    pub repairs: Vec<RepairKind>,
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum RepairError {
    #[error("candidate could not be repaired into valid JSON")]
    Unrepairable,
}

/// A typed report recovered from raw agent output.
#[derive(Debug, Clone, PartialEq)]
pub struct ParsedOutput {
    pub report: AgentReport,
    pub repairs: Vec<RepairKind>,
    /// True when closing brackets had to be appended, i.e. the output was
    /// cut off mid-structure.
    pub repaired_from_truncation: bool,
}

/// Strips a surrounding markdown code fence when the text starts with one.
fn strip_code_fences(raw: &str) -> &str {
    let text = raw.trim();
    let Some(rest) = text.strip_prefix("```") else {
        return text;
    };
    let body = match rest.find('\n') {
        Some(i) => &rest[i + 1..],
        None => "",
    };
    let body = body.trim_end();
    match body.strip_suffix("```") {
        Some(inner) => inner.trim_end(),
        None => body,
    }
}

/// Finds the first well-nested JSON object in `raw`, skipping any
/// surrounding prose or code fences. Brackets inside string literals
/// (including escaped quotes) do not count toward balance. A closing
/// bracket that does not match the innermost opener rules out every block
/// containing it, so the search resumes after it. When the text ends with
/// the object still open, the open prefix is returned as
/// [`Extraction::Unbalanced`].
pub fn extract_json_block(raw: &str) -> Result<Extraction, ExtractError> {
    let text = strip_code_fences(raw);
    let mut search_from = 0;

    while let Some(found) = text[search_from..].find('{') {
        let start = search_from + found;
        let mut stack: Vec<char> = Vec::new();
        let mut in_string = false;
        let mut escape = false;
        let mut mismatch_end = None;
        for (i, ch) in text[start..].char_indices() {
            if in_string {
                if escape {
                    escape = false;
                } else if ch == '\\' {
                    escape = true;
                } else if ch == '"' {
                    in_string = false;
                }
                continue;
            }
            match ch {
                '"' => in_string = true,
                '{' | '[' => stack.push(ch),
                '}' | ']' => {
                    let opener = if ch == '}' { '{' } else { '[' };
                    if stack.pop() != Some(opener) {
                        mismatch_end = Some(start + i + ch.len_utf8());
                        break;
                    }
                    if stack.is_empty() {
                        let end = start + i + ch.len_utf8();
                        return Ok(Extraction::Balanced(text[start..end].to_string()));
                    }
                }
                _ => {}
            }
        }
        match mismatch_end {
            Some(end) => search_from = end,
            None => return Ok(Extraction::Unbalanced(text[start..].trim_end().to_string())),
        }
    }
    Err(ExtractError::NoJsonFound)
}

/// End-of-text scanner state used by the repair passes.
struct ScanState {
    in_string: bool,
    /// A backslash escape was pending when the text ended.
    escape_pending: bool,
    /// Unclosed brackets in opening order.
    open_stack: Vec<char>,
    /// A closing bracket appeared that did not match the innermost opener.
    mismatched: bool,
}

fn scan(text: &str) -> ScanState {
    let mut state = ScanState {
        in_string: false,
        escape_pending: false,
        open_stack: Vec::new(),
        mismatched: false,
    };
    for ch in text.chars() {
        if state.in_string {
            if state.escape_pending {
                state.escape_pending = false;
            } else if ch == '\\' {
                state.escape_pending = true;
            } else if ch == '"' {
                state.in_string = false;
            }
            continue;
        }
        match ch {
            '"' => state.in_string = true,
            '{' | '[' => state.open_stack.push(ch),
            '}' | ']' => {
                let opener = if ch == '}' { '{' } else { '[' };
                if state.open_stack.pop() != Some(opener) {
                    state.mismatched = true;
                }
            }
            _ => {}
        }
    }
    state
}

/// Removes commas that are directly followed (ignoring whitespace) by a
/// closing bracket or the end of the text. Commas inside strings are left
/// alone. Returns `None` when nothing was removed.
fn remove_trailing_commas(text: &str) -> Option<String> {
    let chars: Vec<char> = text.chars().collect();
    let mut keep = vec![true; chars.len()];
    let mut in_string = false;
    let mut escape = false;
    let mut removed = false;
    for (i, &ch) in chars.iter().enumerate() {
        if in_string {
            if escape {
                escape = false;
            } else if ch == '\\' {
                escape = true;
            } else if ch == '"' {
                in_string = false;
            }
            continue;
        }
        match ch {
            '"' => in_string = true,
            ',' => {
                let next = chars[i + 1..].iter().find(|c| !c.is_whitespace());
                if matches!(next, Some('}') | Some(']') | None) {
                    keep[i] = false;
                    removed = true;
                }
            }
            _ => {}
        }
    }
    if !removed {
        return None;
    }
    Some(
        chars
            .iter()
            .zip(&keep)
            .filter(|(_, &k)| k)
            .map(|(&c, _)| c)
            .collect(),
    )
}

/// Applies the ordered repair passes to a candidate and verifies the result
/// parses. The passes, in order: (1) remove trailing commas, (2) close an
/// unterminated trailing string literal, (3) append missing closing
/// brackets in stack order. Each applied pass is recorded.
pub fn repair_json(candidate: &str) -> Result<Repaired, RepairError> {
    if serde_json::from_str::<Value>(candidate).is_ok() {
        return Ok(Repaired {
            text: candidate.to_string(),
            repairs: Vec::new(),
        });
    }

    let mut repairs = Vec::new();
    let mut text = match remove_trailing_commas(candidate) {
        Some(cleaned) => {
            repairs.push(RepairKind::TrailingCommas);
            cleaned
        }
        None => candidate.to_string(),
    };

    let mut state = scan(&text);
    if state.mismatched {
        return Err(RepairError::Unrepairable);
    }
    if state.in_string {
        if state.escape_pending {
            text.pop();
        }
        text.push('"');
        repairs.push(RepairKind::UnterminatedString);
        state = scan(&text);
    }
    if !state.open_stack.is_empty() {
        for open in state.open_stack.iter().rev() {
            text.push(match open {
                '{' => '}',
                _ => ']',
            });
        }
        repairs.push(RepairKind::MissingClosers);
    }

    if serde_json::from_str::<Value>(&text).is_err() {
        return Err(RepairError::Unrepairable);
    }
    Ok(Repaired { text, repairs })
}

/// Extracts, repairs, and schema-validates one agent's raw output.
///
/// `length_capped` is whether the backend reported the response hit its
/// output token cap. A capped response that needed any repair is rejected
/// as [`FailureKind::Truncated`] even when the repaired JSON is
/// syntactically valid, because its content cannot be trusted to be
/// complete.
pub fn parse_agent_output(
    agent: AgentKind,
    raw: &str,
    length_capped: bool,
) -> Result<ParsedOutput, FailureKind> {
    let extraction = extract_json_block(raw).map_err(|_| FailureKind::NoJsonFound)?;
    let repaired = repair_json(extraction.candidate()).map_err(|_| {
        if length_capped {
            FailureKind::Truncated
        } else {
            FailureKind::NoJsonFound
        }
    })?;
    if length_capped && !repaired.repairs.is_empty() {
        return Err(FailureKind::Truncated);
    }

    let value: Value =
        serde_json::from_str(&repaired.text).expect("repair_json verified the text parses");
    let Value::Object(map) = value else {
        return Err(FailureKind::SchemaMismatch);
    };
    let report = map_report(agent, map)?;
    let repaired_from_truncation = repaired.repairs.contains(&RepairKind::MissingClosers);
    Ok(ParsedOutput {
        report,
        repairs: repaired.repairs,
        repaired_from_truncation,
    })
}

/// Field-name synonyms accepted during mapping, resolved in listed order.
/// Version bumps when the table changes so fixture sets can pin behavior.
pub const SYNONYM_TABLE_VERSION: u32 = 1;

fn map_report(agent: AgentKind, map: Map<String, Value>) -> Result<AgentReport, FailureKind> {
    match agent {
        AgentKind::FactVerifier => map_facts(map).map(AgentReport::Facts),
        AgentKind::ProgressiveAnalyst => {
            map_framing(map, FramingSide::Left).map(AgentReport::Framing)
        }
        AgentKind::ConservativeAnalyst => {
            map_framing(map, FramingSide::Right).map(AgentReport::Framing)
        }
        AgentKind::PropagandaDetector => map_propaganda(map).map(AgentReport::Propaganda),
        AgentKind::NeutralSummarizer => map_synthesis(map).map(AgentReport::Synthesis),
    }
}

fn take_value(
    map: &mut Map<String, Value>,
    names: &[&str],
) -> Result<Value, FailureKind> {
    for name in names {
        if let Some(v) = map.remove(*name) {
            return Ok(v);
        }
    }
    Err(FailureKind::SchemaMismatch)
}

fn as_string(value: Value) -> Result<String, FailureKind> {
    match value {
        Value::String(s) => Ok(s),
        _ => Err(FailureKind::SchemaMismatch),
    }
}

fn as_string_array(value: Value) -> Result<Vec<String>, FailureKind> {
    match value {
        Value::Array(items) => items.into_iter().map(as_string).collect(),
        _ => Err(FailureKind::SchemaMismatch),
    }
}

fn as_object_array(value: Value) -> Result<Vec<Map<String, Value>>, FailureKind> {
    match value {
        Value::Array(items) => items
            .into_iter()
            .map(|item| match item {
                Value::Object(m) => Ok(m),
                _ => Err(FailureKind::SchemaMismatch),
            })
            .collect(),
        _ => Err(FailureKind::SchemaMismatch),
    }
}

fn take_string(map: &mut Map<String, Value>, names: &[&str]) -> Result<String, FailureKind> {
    as_string(take_value(map, names)?)
}

fn extras_from(map: Map<String, Value>) -> ExtraFields {
    map.into_iter().collect()
}

fn map_facts(mut map: Map<String, Value>) -> Result<FactsReport, FailureKind> {
    let verified_core_events = as_string_array(take_value(&mut map, &["verified_core_events"])?)?;
    let claims_raw = as_object_array(take_value(&mut map, &["contested_claims"])?)?;
    let mut contested_claims = Vec::with_capacity(claims_raw.len());
    for mut claim in claims_raw {
        let veracity_raw = take_string(&mut claim, &["veracity_score"])?;
        let veracity_score = match veracity_raw.trim().to_ascii_lowercase().as_str() {
            "verified" => VeracityScore::Verified,
            "unverified" => VeracityScore::Unverified,
            "contradicted" => VeracityScore::Contradicted,
            _ => return Err(FailureKind::InvalidValue),
        };
        contested_claims.push(ContestedClaim {
            claim: take_string(&mut claim, &["claim"])?,
            reason_contested: take_string(&mut claim, &["reason_contested"])?,
            veracity_score,
        });
    }
    let structural_omissions = as_string_array(take_value(&mut map, &["structural_omissions"])?)?;
    Ok(FactsReport {
        verified_core_events,
        contested_claims,
        structural_omissions,
        extras: extras_from(map),
    })
}

fn map_framing(
    mut map: Map<String, Value>,
    side: FramingSide,
) -> Result<FramingReport, FailureKind> {
    let ideological_framing = take_string(&mut map, &["ideological_framing"])?;
    if ideological_framing.trim().is_empty() {
        return Err(FailureKind::InvalidValue);
    }
    let markers_raw = as_object_array(take_value(&mut map, &["linguistic_markers"])?)?;
    let mut linguistic_markers = Vec::with_capacity(markers_raw.len());
    for mut marker in markers_raw {
        linguistic_markers.push(LinguisticMarker {
            phrase: take_string(&mut marker, &["phrase"])?,
            political_coding: take_string(&mut marker, &["political_coding"])?,
            intended_emotional_resonance: take_string(
                &mut marker,
                &["intended_emotional_resonance"],
            )?,
        });
    }
    let omission_names = match side {
        FramingSide::Left => ["left_omissions", "omissions", "right_omissions"],
        FramingSide::Right => ["right_omissions", "omissions", "left_omissions"],
    };
    let omissions = as_string_array(take_value(&mut map, &omission_names)?)?;
    let adversarial_critique = take_string(&mut map, &["adversarial_critique"])?;
    // "side" is pipeline metadata on serialized reports, not model output;
    // consume it so re-parsing a persisted report round-trips.
    map.remove("side");
    Ok(FramingReport {
        side,
        ideological_framing,
        linguistic_markers,
        omissions,
        adversarial_critique,
        extras: extras_from(map),
    })
}

fn map_propaganda(mut map: Map<String, Value>) -> Result<PropagandaReport, FailureKind> {
    let manipulation_index = match take_value(&mut map, &["manipulation_index"])? {
        Value::Number(n) => n.as_f64().ok_or(FailureKind::InvalidValue)?,
        // tolerated: small models sometimes quote the number
        Value::String(s) => s
            .trim()
            .parse::<f64>()
            .map_err(|_| FailureKind::InvalidValue)?,
        _ => return Err(FailureKind::SchemaMismatch),
    };
    if !manipulation_index.is_finite() || !(0.0..=1.0).contains(&manipulation_index) {
        return Err(FailureKind::InvalidValue);
    }
    let techniques_raw = as_object_array(take_value(&mut map, &["detected_techniques"])?)?;
    let mut detected_techniques = Vec::with_capacity(techniques_raw.len());
    for mut tech in techniques_raw {
        detected_techniques.push(DetectedTechnique {
            technique: take_string(&mut tech, &["technique"])?,
            text_segment: take_string(&mut tech, &["text_segment"])?,
            psychological_mechanism: take_string(&mut tech, &["psychological_mechanism"])?,
        });
    }
    let rhetorical_bias = match map.remove("rhetorical_bias").or_else(|| {
        map.remove("rhetorical_bias_classification")
    }) {
        Some(v) => Some(as_string(v)?.trim().to_lowercase()),
        None => None,
    };
    let asymmetry_note = match map.remove("asymmetry_note") {
        Some(v) => Some(as_string(v)?),
        None => None,
    };
    Ok(PropagandaReport {
        manipulation_index,
        detected_techniques,
        rhetorical_bias,
        asymmetry_note,
        extras: extras_from(map),
    })
}

fn map_synthesis(mut map: Map<String, Value>) -> Result<SynthesisReport, FailureKind> {
    let consensus_reality = take_string(&mut map, &["consensus_reality"])?;
    let battleground = match take_value(&mut map, &["battleground_of_spin"])? {
        Value::Object(mut m) => SpinBattleground {
            left_interpretation: take_string(&mut m, &["left_interpretation"])?,
            right_interpretation: take_string(&mut m, &["right_interpretation"])?,
        },
        _ => return Err(FailureKind::SchemaMismatch),
    };
    let de_biased_summary = take_string(&mut map, &["de_biased_summary"])?;
    let omission_map = match take_value(&mut map, &["omission_map"])? {
        Value::Object(mut m) => OmissionMap {
            left_missing: as_string_array(take_value(&mut m, &["left_missing"])?)?,
            right_missing: as_string_array(take_value(&mut m, &["right_missing"])?)?,
            both_missing: as_string_array(take_value(&mut m, &["both_missing"])?)?,
        },
        _ => return Err(FailureKind::SchemaMismatch),
    };
    let media_literacy_takeaway = take_string(&mut map, &["media_literacy_takeaway"])?;
    Ok(SynthesisReport {
        consensus_reality,
        battleground_of_spin: battleground,
        de_biased_summary,
        omission_map,
        media_literacy_takeaway,
        extras: extras_from(map),
    })
}
