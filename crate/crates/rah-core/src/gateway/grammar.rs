//! The line-oriented `KEY: value` response grammar.
//!
//! Each agent kind has a fixed key set. Facet lists are comma-separated;
//! sentence lists (reasons, suggestions, queries) use a ` | ` separator.

use std::collections::BTreeSet;

use crate::domain::Action;
use crate::error::{RahError, Result};

use super::{AgentKind, AgentResult, Confidence};

pub const SENTENCE_SEP: &str = " | ";

pub fn join_facets(facets: &BTreeSet<String>) -> String {
    facets.iter().cloned().collect::<Vec<_>>().join(", ")
}

fn split_facets(value: &str) -> BTreeSet<String> {
    value
        .split(',')
        .map(|s| s.trim().to_string())
        .filter(|s| !s.is_empty())
        .collect()
}

fn split_sentences(value: &str) -> Vec<String> {
    value
        .split('|')
        .map(|s| s.trim().to_string())
        .filter(|s| !s.is_empty())
        .collect()
}

/// Renders a structured result into canonical grammar text. The oracle uses
/// this so that cached oracle and remote responses share one shape.
pub fn render(result: &AgentResult) -> String {
    match result {
        AgentResult::Perceived {
            description,
            attributes,
        } => format!(
            "DESCRIPTION: {description}\nATTRIBUTES: {}\n",
            join_facets(attributes)
        ),
        AgentResult::Learned {
            likes,
            dislikes,
            why_like,
            why_dislike,
        } => format!(
            "LIKES: {}\nDISLIKES: {}\nWHY_LIKE: {why_like}\nWHY_DISLIKE: {why_dislike}\n",
            join_facets(likes),
            join_facets(dislikes)
        ),
        AgentResult::Acted {
            hypothesized_reasons,
            perception_analysis,
            simulated_comment,
            confidence,
            predicted,
        } => format!(
            "REASONS: {hypothesized_reasons}\nPERCEPTION: {perception_analysis}\nCOMMENT: {simulated_comment}\nCONFIDENCE: {}\nPREDICTION: {}\n",
            match confidence {
                Confidence::High => "HIGH",
                Confidence::Low => "LOW",
            },
            predicted.as_str().to_uppercase()
        ),
        AgentResult::Judged {
            pass,
            reasons,
            suggestions,
        } => format!(
            "PASS: {}\nREASONS: {}\nSUGGESTIONS: {}\n",
            if *pass { "YES" } else { "NO" },
            reasons.join(SENTENCE_SEP),
            suggestions.join(SENTENCE_SEP)
        ),
        AgentResult::Reflected {
            conflict_facets,
            user_queries,
        } => format!(
            "CONFLICTS: {}\nQUERIES: {}\n",
            join_facets(conflict_facets),
            user_queries.join(SENTENCE_SEP)
        ),
    }
}

fn find_key<'a>(text: &'a str, key: &str) -> Option<&'a str> {
    let prefix = format!("{key}:");
    text.lines()
        .map(str::trim_start)
        .find_map(|line| line.strip_prefix(prefix.as_str()))
        .map(str::trim)
}

fn required<'a>(text: &'a str, key: &str) -> Result<&'a str> {
    find_key(text, key)
        .ok_or_else(|| RahError::MalformedResponse(format!("missing key {key}")))
}

fn parse_action(value: &str) -> Result<Action> {
    match value.to_ascii_uppercase().as_str() {
        "LIKE" => Ok(Action::Like),
        "DISLIKE" => Ok(Action::Dislike),
        other => Err(RahError::MalformedResponse(format!(
            "expected LIKE or DISLIKE, got {other:?}"
        ))),
    }
}

/// Parses grammar text for the given agent kind into a structured result.
pub fn parse(kind: AgentKind, text: &str) -> Result<AgentResult> {
    match kind {
        AgentKind::Perceive => Ok(AgentResult::Perceived {
            description: required(text, "DESCRIPTION")?.to_string(),
            attributes: split_facets(required(text, "ATTRIBUTES")?),
        }),
        AgentKind::Learn => Ok(AgentResult::Learned {
            likes: split_facets(required(text, "LIKES")?),
            dislikes: split_facets(required(text, "DISLIKES")?),
            why_like: required(text, "WHY_LIKE")?.to_string(),
            why_dislike: required(text, "WHY_DISLIKE")?.to_string(),
        }),
        AgentKind::Act => {
            let confidence = match required(text, "CONFIDENCE")?.to_ascii_uppercase().as_str() {
                "HIGH" => Confidence::High,
                "LOW" => Confidence::Low,
                other => {
                    return Err(RahError::MalformedResponse(format!(
                        "expected HIGH or LOW confidence, got {other:?}"
                    )))
                }
            };
            Ok(AgentResult::Acted {
                hypothesized_reasons: required(text, "REASONS")?.to_string(),
                perception_analysis: required(text, "PERCEPTION")?.to_string(),
                simulated_comment: required(text, "COMMENT")?.to_string(),
                confidence,
                predicted: parse_action(required(text, "PREDICTION")?)?,
            })
        }
        AgentKind::Critic => {
            let pass = match required(text, "PASS")?.to_ascii_uppercase().as_str() {
                "YES" => true,
                "NO" => false,
                other => {
                    return Err(RahError::MalformedResponse(format!(
                        "expected YES or NO, got {other:?}"
                    )))
                }
            };
            Ok(AgentResult::Judged {
                pass,
                reasons: split_sentences(required(text, "REASONS")?),
                suggestions: split_sentences(required(text, "SUGGESTIONS")?),
            })
        }
        AgentKind::Reflect => Ok(AgentResult::Reflected {
            conflict_facets: split_facets(required(text, "CONFLICTS")?),
            user_queries: split_sentences(required(text, "QUERIES")?),
        }),
    }
}
