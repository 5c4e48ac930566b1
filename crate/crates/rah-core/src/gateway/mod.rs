//! Single choke point for all agent "intelligence".
//!
//! Every typed agent request is routed either to a remote OpenAI-compatible
//! chat endpoint or to a deterministic rule-based oracle over a synthetic
//! world. Downstream modules never parse raw backend text; responses are
//! validated against the line-oriented `KEY: value` grammar before they
//! leave this module.

mod cache;
mod grammar;
mod oracle;
pub mod remote;

pub use cache::{CachedBackend, ResponseCache};
pub use oracle::{OracleBackend, SyntheticWorld, WorldUser};

use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use crate::domain::{Action, DomainTag, InteractionId, ItemId, UserId};
use crate::error::Result;

/// Decoding parameters forwarded to the backend. Temperature defaults to 0.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DecodeParams {
    pub temperature: f64,
    pub max_tokens: u32,
}

impl Default for DecodeParams {
    fn default() -> Self {
        DecodeParams {
            temperature: 0.0,
            max_tokens: 512,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum AgentKind {
    Perceive,
    Learn,
    Act,
    Critic,
    Reflect,
}

impl AgentKind {
    pub fn as_str(self) -> &'static str {
        match self {
            AgentKind::Perceive => "perceive",
            AgentKind::Learn => "learn",
            AgentKind::Act => "act",
            AgentKind::Critic => "critic",
            AgentKind::Reflect => "reflect",
        }
    }
}

/// Kind-specific structured payload. Fields are primitive so the envelope
/// stays serializable for content-addressed caching.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum AgentPayload {
    Perceive {
        item: ItemId,
        domain: DomainTag,
        title: String,
        tags: BTreeSet<String>,
    },
    Learn {
        user: UserId,
        item: ItemId,
        title: String,
        attributes: BTreeSet<String>,
        action: Action,
        rating: Option<u8>,
        comment: Option<String>,
        interaction: InteractionId,
        /// Snapshot of the current personality, as statements.
        like_statements: Vec<String>,
        dislike_statements: Vec<String>,
        /// Facets flagged by an incoming critique; the learn rule removes
        /// them from the new candidate.
        flagged_facets: BTreeSet<String>,
    },
    Act {
        user: UserId,
        item: ItemId,
        title: String,
        description: String,
        attributes: BTreeSet<String>,
        like_facets: BTreeSet<String>,
        dislike_facets: BTreeSet<String>,
    },
    Critic {
        user: UserId,
        item: ItemId,
        attributes: BTreeSet<String>,
        predicted: Action,
        actual: Action,
        like_facets: BTreeSet<String>,
        dislike_facets: BTreeSet<String>,
    },
    Reflect {
        user: UserId,
        like_facets: BTreeSet<String>,
        dislike_facets: BTreeSet<String>,
    },
}

impl AgentPayload {
    pub fn kind(&self) -> AgentKind {
        match self {
            AgentPayload::Perceive { .. } => AgentKind::Perceive,
            AgentPayload::Learn { .. } => AgentKind::Learn,
            AgentPayload::Act { .. } => AgentKind::Act,
            AgentPayload::Critic { .. } => AgentKind::Critic,
            AgentPayload::Reflect { .. } => AgentKind::Reflect,
        }
    }
}

/// Typed agent-call envelope.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AgentRequest {
    pub payload: AgentPayload,
    pub decode: DecodeParams,
}

impl AgentRequest {
    pub fn new(payload: AgentPayload) -> Self {
        AgentRequest {
            payload,
            decode: DecodeParams::default(),
        }
    }

    pub fn kind(&self) -> AgentKind {
        self.payload.kind()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum BackendKind {
    Remote,
    Oracle,
}

/// How sure the Act agent is about its prediction. `Low` marks the
/// "pass and seek additional feedback" branch.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Confidence {
    High,
    Low,
}

/// Structured result of a gateway call, one variant per agent kind.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum AgentResult {
    Perceived {
        description: String,
        attributes: BTreeSet<String>,
    },
    Learned {
        likes: BTreeSet<String>,
        dislikes: BTreeSet<String>,
        why_like: String,
        why_dislike: String,
    },
    Acted {
        hypothesized_reasons: String,
        perception_analysis: String,
        simulated_comment: String,
        confidence: Confidence,
        predicted: Action,
    },
    Judged {
        pass: bool,
        reasons: Vec<String>,
        suggestions: Vec<String>,
    },
    /// Directives for the mechanical merge: facets present under both
    /// polarities must be dropped from both, each one surfaced as a user
    /// query.
    Reflected {
        conflict_facets: BTreeSet<String>,
        user_queries: Vec<String>,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AgentResponse {
    pub result: AgentResult,
    pub raw_text: String,
    pub backend: BackendKind,
    pub retry_count: u32,
}

/// A backend that can answer agent requests. Implementations must be safe
/// for concurrent requests.
pub trait Backend {
    fn complete(&self, req: &AgentRequest) -> Result<AgentResponse>;

    /// Stable identity string, part of the cache key.
    fn identity(&self) -> String;
}

impl<B: Backend + ?Sized> Backend for &B {
    fn complete(&self, req: &AgentRequest) -> Result<AgentResponse> {
        (**self).complete(req)
    }

    fn identity(&self) -> String {
        (**self).identity()
    }
}
