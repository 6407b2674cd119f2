//! Prompt construction: per-agent system prompts, input truncation, context
//! block packaging, and sampling parameters.
//!
//! The system prompts are fixed assets embedded at compile time; a digest
//! test pins their exact bytes so an accidental edit fails loudly. Message
//! building is pure: the same inputs always produce byte-identical messages.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::domain::{AgentKind, PipelineConfig, SamplingParams};

const FACT_VERIFIER_PROMPT: &str = include_str!("../prompts/fact_verifier.txt");
const PROGRESSIVE_ANALYST_PROMPT: &str = include_str!("../prompts/progressive_analyst.txt");
const CONSERVATIVE_ANALYST_PROMPT: &str = include_str!("../prompts/conservative_analyst.txt");
const PROPAGANDA_DETECTOR_PROMPT: &str = include_str!("../prompts/propaganda_detector.txt");
const NEUTRAL_SUMMARIZER_PROMPT: &str = include_str!("../prompts/neutral_summarizer.txt");

/// Instruction appended to every user message, after the article and any
/// context blocks.
pub const CLOSING_INSTRUCTION: &str =
    "Now analyse the article and output ONLY JSON in exactly this format:";

/// Default output budget for every agent, in tokens.
pub const DEFAULT_MAX_OUTPUT_TOKENS: u32 = 600;

/// Chat message roles. Only system and user messages are ever sent.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Role {
    System,
    User,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Message {
    pub role: Role,
    pub content: String,
}

impl Message {
    pub fn system(content: impl Into<String>) -> Self {
        Message {
            role: Role::System,
            content: content.into(),
        }
    }

    pub fn user(content: impl Into<String>) -> Self {
        Message {
            role: Role::User,
            content: content.into(),
        }
    }
}

/// Labeled JSON context blocks the summarizer receives. Order is fixed.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BlockName {
    FactsJson,
    LeftJson,
    RightJson,
    PropagandaJson,
}

impl BlockName {
    pub fn label(&self) -> &'static str {
        match self {
            BlockName::FactsJson => "FACTS_JSON",
            BlockName::LeftJson => "LEFT_JSON",
            BlockName::RightJson => "RIGHT_JSON",
            BlockName::PropagandaJson => "PROPAGANDA_JSON",
        }
    }
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum PromptError {
    /// Context blocks were offered to an agent that must see only the
    /// article.
    #[error("agent {agent} must receive only the article, got context blocks")]
    IsolationViolation { agent: AgentKind },
    #[error("context block {0:?} appears more than once")]
    DuplicateBlock(BlockName),
}

/// The fixed system prompt for an agent.
pub fn system_prompt(agent: AgentKind) -> &'static str {
    let raw = match agent {
        AgentKind::FactVerifier => FACT_VERIFIER_PROMPT,
        AgentKind::ProgressiveAnalyst => PROGRESSIVE_ANALYST_PROMPT,
        AgentKind::ConservativeAnalyst => CONSERVATIVE_ANALYST_PROMPT,
        AgentKind::PropagandaDetector => PROPAGANDA_DETECTOR_PROMPT,
        AgentKind::NeutralSummarizer => NEUTRAL_SUMMARIZER_PROMPT,
    };
    raw.trim_end()
}

/// Truncates article text to at most `limit` bytes, backing off to the
/// nearest character boundary so multi-byte characters are never split.
pub fn truncate_input(text: &str, limit: usize) -> &str {
    if text.len() <= limit {
        return text;
    }
    let mut end = limit;
    while end > 0 && !text.is_char_boundary(end) {
        end -= 1;
    }
    &text[..end]
}

/// Builds the two-message prompt for an agent: its system prompt plus a user
/// message of the (already truncated) article text, any context blocks, and
/// the closing instruction.
///
/// Only the neutral summarizer may receive context blocks; passing any to
/// another agent is an isolation violation.
pub fn build_agent_messages(
    agent: AgentKind,
    article_text: &str,
    context_blocks: &[(BlockName, String)],
) -> Result<Vec<Message>, PromptError> {
    if agent != AgentKind::NeutralSummarizer && !context_blocks.is_empty() {
        return Err(PromptError::IsolationViolation { agent });
    }
    for (i, (name, _)) in context_blocks.iter().enumerate() {
        if context_blocks[..i].iter().any(|(other, _)| other == name) {
            return Err(PromptError::DuplicateBlock(*name));
        }
    }

    let mut user = String::from(article_text);
    for (name, json) in context_blocks {
        user.push_str("\n\n");
        user.push_str(name.label());
        user.push_str(":\n```json\n");
        user.push_str(json);
        user.push_str("\n```");
    }
    user.push_str("\n\n");
    user.push_str(CLOSING_INSTRUCTION);

    Ok(vec![
        Message::system(system_prompt(agent)),
        Message::user(user),
    ])
}

/// Sampling parameters for an agent: fact verifier, detector, and summarizer
/// run cold (0.1); the two analysts run slightly warmer (0.2) to let their
/// ideological personas diverge. Config overrides win.
pub fn sampling_params(agent: AgentKind, config: &PipelineConfig) -> SamplingParams {
    if let Some(over) = config.sampling_overrides.get(&agent) {
        return *over;
    }
    let temperature = match agent {
        AgentKind::ProgressiveAnalyst | AgentKind::ConservativeAnalyst => 0.2,
        _ => 0.1,
    };
    SamplingParams {
        temperature,
        max_output_tokens: DEFAULT_MAX_OUTPUT_TOKENS,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::digest::sha256_hex;

    #[test]
    fn prompt_assets_are_pinned() {
        let expected = [
            (
                FACT_VERIFIER_PROMPT,
                "1801495ec517610d6b4c6f911c6d524e5c7019bcddada83ac840fe767ba0b43c",
            ),
            (
                PROGRESSIVE_ANALYST_PROMPT,
                "d26089e1cfec0f04eae311fff6895fceaa6090e95cf114fd8c4668440883aa90",
            ),
            (
                CONSERVATIVE_ANALYST_PROMPT,
                "a10f4249bc20ac48f122d1edb41ec47ee1b65367d0a32f72043261ff8145c8c2",
            ),
            (
                PROPAGANDA_DETECTOR_PROMPT,
                "bbd8c5c0b84424b23b7a8ad7fba41dd8eee68b371540ca9a77ed1f7c767fc715",
            ),
            (
                NEUTRAL_SUMMARIZER_PROMPT,
                "acfd24237cf730bfc0c5d3d6244c7f3a83fd8f687b92b05bf9d7fff2f898434f",
            ),
        ];
        for (asset, want) in expected {
            assert_eq!(sha256_hex(asset.as_bytes()), want);
        }
    }

    #[test]
    fn system_prompts_name_their_roles() {
        assert!(system_prompt(AgentKind::FactVerifier).starts_with("You are a Fact Verifier."));
        assert!(system_prompt(AgentKind::ProgressiveAnalyst)
            .starts_with("You are a Left-wing political analyst."));
        assert!(system_prompt(AgentKind::ConservativeAnalyst)
            .starts_with("You are a Right-wing Conservative political analyst."));
        assert!(system_prompt(AgentKind::PropagandaDetector)
            .starts_with("You are a propaganda analysis expert."));
        assert!(system_prompt(AgentKind::NeutralSummarizer).starts_with("You are a neutral editor."));
    }

    #[test]
    fn detector_prompt_states_index_range() {
        assert!(system_prompt(AgentKind::PropagandaDetector)
            .contains("manipulation_index must be a decimal between 0.0 and 1.0."));
    }

    #[test]
    fn truncate_long_input_to_limit() {
        let text = "x".repeat(3000);
        assert_eq!(truncate_input(&text, 1500).len(), 1500);
    }

    #[test]
    fn truncate_leaves_short_input_alone() {
        let text = "y".repeat(900);
        assert_eq!(truncate_input(&text, 1500), text);
    }

    #[test]
    fn truncate_backs_off_at_char_boundary() {
        // 1499 single-byte chars followed by a 4-byte char: the limit lands
        // mid-character, so the result backs off to 1499 bytes.
        let mut text = "a".repeat(1499);
        text.push('🌍');
        assert_eq!(text.len(), 1503);
        let out = truncate_input(&text, 1500);
        assert_eq!(out.len(), 1499);
        assert!(out.chars().all(|c| c == 'a'));
    }

    #[test]
    fn analyst_messages_have_system_and_user() {
        let messages =
            build_agent_messages(AgentKind::ProgressiveAnalyst, "Article text.", &[]).unwrap();
        assert_eq!(messages.len(), 2);
        assert_eq!(messages[0].role, Role::System);
        assert!(messages[0].content.contains("Left-wing political analyst"));
        assert_eq!(messages[1].role, Role::User);
        assert!(messages[1].content.starts_with("Article text."));
        assert!(messages[1].content.ends_with(CLOSING_INSTRUCTION));
    }

    #[test]
    fn summarizer_message_carries_labeled_blocks_in_order() {
        let blocks = vec![
            (BlockName::FactsJson, r#"{"f":1}"#.to_string()),
            (BlockName::LeftJson, r#"{"l":1}"#.to_string()),
            (BlockName::RightJson, r#"{"r":1}"#.to_string()),
            (BlockName::PropagandaJson, r#"{"p":1}"#.to_string()),
        ];
        let messages =
            build_agent_messages(AgentKind::NeutralSummarizer, "Article.", &blocks).unwrap();
        let user = &messages[1].content;
        let f = user.find("FACTS_JSON:").unwrap();
        let l = user.find("LEFT_JSON:").unwrap();
        let r = user.find("RIGHT_JSON:").unwrap();
        let p = user.find("PROPAGANDA_JSON:").unwrap();
        assert!(f < l && l < r && r < p);
        assert!(user.contains(r#"{"p":1}"#));
        assert!(user.starts_with("Article."));
    }

    #[test]
    fn context_blocks_rejected_for_isolated_agents() {
        for agent in [
            AgentKind::FactVerifier,
            AgentKind::ProgressiveAnalyst,
            AgentKind::ConservativeAnalyst,
            AgentKind::PropagandaDetector,
        ] {
            let err = build_agent_messages(
                agent,
                "Article.",
                &[(BlockName::FactsJson, "{}".to_string())],
            )
            .unwrap_err();
            assert_eq!(err, PromptError::IsolationViolation { agent });
        }
    }

    #[test]
    fn duplicate_blocks_rejected() {
        let blocks = vec![
            (BlockName::FactsJson, "{}".to_string()),
            (BlockName::FactsJson, "{}".to_string()),
        ];
        let err =
            build_agent_messages(AgentKind::NeutralSummarizer, "Article.", &blocks).unwrap_err();
        assert_eq!(err, PromptError::DuplicateBlock(BlockName::FactsJson));
    }

    #[test]
    fn message_building_is_pure() {
        let a = build_agent_messages(AgentKind::ConservativeAnalyst, "Same text.", &[]).unwrap();
        let b = build_agent_messages(AgentKind::ConservativeAnalyst, "Same text.", &[]).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn default_sampling_params() {
        let config = PipelineConfig::default();
        for (agent, temp) in [
            (AgentKind::FactVerifier, 0.1),
            (AgentKind::ProgressiveAnalyst, 0.2),
            (AgentKind::ConservativeAnalyst, 0.2),
            (AgentKind::PropagandaDetector, 0.1),
            (AgentKind::NeutralSummarizer, 0.1),
        ] {
            let params = sampling_params(agent, &config);
            assert_eq!(params.temperature, temp, "{agent}");
            assert_eq!(params.max_output_tokens, 600);
        }
    }

    #[test]
    fn sampling_overrides_win() {
        let mut config = PipelineConfig::default();
        config.sampling_overrides.insert(
            AgentKind::PropagandaDetector,
            SamplingParams {
                temperature: 0.3,
                max_output_tokens: 800,
            },
        );
        let params = sampling_params(AgentKind::PropagandaDetector, &config);
        assert_eq!(params.temperature, 0.3);
        assert_eq!(params.max_output_tokens, 800);
        // other agents keep defaults
        assert_eq!(sampling_params(AgentKind::FactVerifier, &config).temperature, 0.1);
    }
}
