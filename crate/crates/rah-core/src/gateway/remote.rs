//! Remote OpenAI-compatible chat backend.
//!
//! Prompts are rendered from plain-text templates with `{{field}}`
//! placeholders, one template per agent kind. Responses must follow the
//! `KEY: value` grammar; on a parse failure the request is retried up to
//! two times with a format reminder appended to the prompt.

use std::collections::BTreeMap;
use std::path::Path;

use crate::domain::Action;
use crate::error::{RahError, Result};

use super::grammar;
use super::{
    AgentKind, AgentPayload, AgentRequest, AgentResponse, Backend, BackendKind, DecodeParams,
};

pub const ENV_ENDPOINT: &str = "RAH_LLM_ENDPOINT";
pub const ENV_API_KEY: &str = "RAH_LLM_API_KEY";
pub const ENV_MODEL: &str = "RAH_LLM_MODEL";

const FORMAT_REMINDER: &str =
    "\n\nReminder: reply ONLY with the required `KEY: value` lines, one per line.";

/// Maximum number of parse-failure retries.
const PARSE_RETRIES: u32 = 2;
/// Maximum number of transport retries.
const TRANSPORT_RETRIES: u32 = 2;

/// One prompt template per agent kind.
#[derive(Debug, Clone)]
pub struct TemplateSet {
    pub perceive: String,
    pub learn: String,
    pub act: String,
    pub critic: String,
    pub reflect: String,
}

impl Default for TemplateSet {
    fn default() -> Self {
        TemplateSet {
            perceive: include_str!("../../templates/perceive.txt").to_string(),
            learn: include_str!("../../templates/learn.txt").to_string(),
            act: include_str!("../../templates/act.txt").to_string(),
            critic: include_str!("../../templates/critic.txt").to_string(),
            reflect: include_str!("../../templates/reflect.txt").to_string(),
        }
    }
}

impl TemplateSet {
    /// Loads `<kind>.txt` files from a directory.
    pub fn load_dir(dir: &Path) -> Result<Self> {
        let read = |name: &str| -> Result<String> {
            let path = dir.join(format!("{name}.txt"));
            std::fs::read_to_string(&path).map_err(|e| {
                RahError::Config(format!("cannot read template {}: {e}", path.display()))
            })
        };
        Ok(TemplateSet {
            perceive: read("perceive")?,
            learn: read("learn")?,
            act: read("act")?,
            critic: read("critic")?,
            reflect: read("reflect")?,
        })
    }

    pub fn for_kind(&self, kind: AgentKind) -> &str {
        match kind {
            AgentKind::Perceive => &self.perceive,
            AgentKind::Learn => &self.learn,
            AgentKind::Act => &self.act,
            AgentKind::Critic => &self.critic,
            AgentKind::Reflect => &self.reflect,
        }
    }
}

fn opt(value: &Option<impl ToString>) -> String {
    value
        .as_ref()
        .map(|v| v.to_string())
        .unwrap_or_else(|| "none".to_string())
}

fn action_word(a: Action) -> String {
    a.as_str().to_string()
}

/// Placeholder values available to the template of each payload kind.
pub fn payload_fields(payload: &AgentPayload) -> BTreeMap<String, String> {
    let mut m = BTreeMap::new();
    match payload {
        AgentPayload::Perceive {
            item,
            domain,
            title,
            tags,
        } => {
            m.insert("item".into(), item.to_string());
            m.insert("domain".into(), domain.to_string());
            m.insert("title".into(), title.clone());
            m.insert("tags".into(), grammar::join_facets(tags));
        }
        AgentPayload::Learn {
            user,
            item,
            title,
            attributes,
            action,
            rating,
            comment,
            interaction: _,
            like_statements,
            dislike_statements,
            flagged_facets,
        } => {
            m.insert("user".into(), user.to_string());
            m.insert("item".into(), item.to_string());
            m.insert("title".into(), title.clone());
            m.insert("attributes".into(), grammar::join_facets(attributes));
            m.insert("action".into(), action_word(*action));
            m.insert("rating".into(), opt(rating));
            m.insert("comment".into(), opt(comment));
            m.insert("like_statements".into(), like_statements.join("; "));
            m.insert("dislike_statements".into(), dislike_statements.join("; "));
            m.insert("flagged_facets".into(), grammar::join_facets(flagged_facets));
        }
        AgentPayload::Act {
            user,
            item,
            title,
            description,
            attributes,
            like_facets,
            dislike_facets,
        } => {
            m.insert("user".into(), user.to_string());
            m.insert("item".into(), item.to_string());
            m.insert("title".into(), title.clone());
            m.insert("description".into(), description.clone());
            m.insert("attributes".into(), grammar::join_facets(attributes));
            m.insert("like_facets".into(), grammar::join_facets(like_facets));
            m.insert("dislike_facets".into(), grammar::join_facets(dislike_facets));
        }
        AgentPayload::Critic {
            user,
            item,
            attributes,
            predicted,
            actual,
            like_facets,
            dislike_facets,
        } => {
            m.insert("user".into(), user.to_string());
            m.insert("item".into(), item.to_string());
            m.insert("attributes".into(), grammar::join_facets(attributes));
            m.insert("predicted".into(), action_word(*predicted));
            m.insert("actual".into(), action_word(*actual));
            m.insert("like_facets".into(), grammar::join_facets(like_facets));
            m.insert("dislike_facets".into(), grammar::join_facets(dislike_facets));
        }
        AgentPayload::Reflect {
            user,
            like_facets,
            dislike_facets,
        } => {
            m.insert("user".into(), user.to_string());
            m.insert("like_facets".into(), grammar::join_facets(like_facets));
            m.insert("dislike_facets".into(), grammar::join_facets(dislike_facets));
        }
    }
    m
}

/// Substitutes `{{field}}` placeholders. A template must reference at least
/// one field, and every placeholder must be resolvable.
pub fn render_template(template: &str, fields: &BTreeMap<String, String>) -> Result<String> {
    let mut out = String::with_capacity(template.len());
    let mut rest = template;
    let mut substitutions = 0usize;
    while let Some(start) = rest.find("{{") {
        out.push_str(&rest[..start]);
        let after = &rest[start + 2..];
        let end = after.find("}}").ok_or_else(|| {
            RahError::Config("unterminated {{placeholder}} in template".into())
        })?;
        let name = after[..end].trim();
        let value = fields.get(name).ok_or_else(|| {
            RahError::Config(format!("template placeholder {{{{{name}}}}} has no value"))
        })?;
        out.push_str(value);
        substitutions += 1;
        rest = &after[end + 2..];
    }
    if substitutions == 0 {
        return Err(RahError::Config(
            "template has an empty placeholder set".into(),
        ));
    }
    out.push_str(rest);
    Ok(out)
}

/// Transport abstraction: one chat completion in, raw text out. Tests
/// inject fakes; production uses [`HttpTransport`].
pub trait ChatTransport {
    fn chat(&self, prompt: &str, decode: &DecodeParams) -> Result<String>;
}

/// Remote backend generic over the transport.
pub struct RemoteBackend<T: ChatTransport> {
    templates: TemplateSet,
    transport: T,
    identity: String,
    backoff_ms: u64,
}

impl<T: ChatTransport> RemoteBackend<T> {
    pub fn new(templates: TemplateSet, transport: T, identity: impl Into<String>) -> Self {
        RemoteBackend {
            templates,
            transport,
            identity: identity.into(),
            backoff_ms: 500,
        }
    }

    pub fn with_backoff_ms(mut self, ms: u64) -> Self {
        self.backoff_ms = ms;
        self
    }

    fn chat_with_transport_retries(&self, prompt: &str, decode: &DecodeParams) -> Result<String> {
        let mut attempt = 0u32;
        loop {
            match self.transport.chat(prompt, decode) {
                Ok(text) => return Ok(text),
                Err(RahError::Transport { msg, retryable }) if retryable => {
                    if attempt >= TRANSPORT_RETRIES {
                        return Err(RahError::Transport { msg, retryable });
                    }
                    attempt += 1;
                    std::thread::sleep(std::time::Duration::from_millis(
                        self.backoff_ms * attempt as u64,
                    ));
                }
                Err(e) => return Err(e),
            }
        }
    }
}

impl<T: ChatTransport> Backend for RemoteBackend<T> {
    fn complete(&self, req: &AgentRequest) -> Result<AgentResponse> {
        let kind = req.kind();
        let fields = payload_fields(&req.payload);
        let prompt = render_template(self.templates.for_kind(kind), &fields)?;

        let mut retry_count = 0u32;
        loop {
            let full_prompt = if retry_count == 0 {
                prompt.clone()
            } else {
                format!("{prompt}{FORMAT_REMINDER}")
            };
            let raw_text = self.chat_with_transport_retries(&full_prompt, &req.decode)?;
            match grammar::parse(kind, &raw_text) {
                Ok(result) => {
                    return Ok(AgentResponse {
                        result,
                        raw_text,
                        backend: BackendKind::Remote,
                        retry_count,
                    })
                }
                Err(e) if retry_count < PARSE_RETRIES => {
                    log::warn!("malformed {} response ({e}), retrying", kind.as_str());
                    retry_count += 1;
                }
                Err(e) => return Err(e),
            }
        }
    }

    fn identity(&self) -> String {
        format!("remote:{}", self.identity)
    }
}

/// HTTP transport against an OpenAI-compatible `/chat/completions` endpoint.
#[cfg(feature = "remote")]
pub struct HttpTransport {
    client: reqwest::blocking::Client,
    endpoint: String,
    api_key: String,
    model: String,
}

#[cfg(feature = "remote")]
impl HttpTransport {
    pub fn new(endpoint: String, api_key: String, model: String) -> Self {
        HttpTransport {
            client: reqwest::blocking::Client::new(),
            endpoint,
            api_key,
            model,
        }
    }

    /// Builds a remote backend from `RAH_LLM_ENDPOINT`, `RAH_LLM_API_KEY`
    /// and `RAH_LLM_MODEL`.
    pub fn backend_from_env(templates: TemplateSet) -> Result<RemoteBackend<HttpTransport>> {
        let get = |key: &str| {
            std::env::var(key)
                .map_err(|_| RahError::Config(format!("missing environment variable {key}")))
        };
        let endpoint = get(ENV_ENDPOINT)?;
        let api_key = get(ENV_API_KEY)?;
        let model = get(ENV_MODEL)?;
        let identity = format!("{endpoint}#{model}");
        Ok(RemoteBackend::new(
            templates,
            HttpTransport::new(endpoint, api_key, model),
            identity,
        ))
    }
}

#[cfg(feature = "remote")]
impl ChatTransport for HttpTransport {
    fn chat(&self, prompt: &str, decode: &DecodeParams) -> Result<String> {
        let body = serde_json::json!({
            "model": self.model,
            "messages": [{"role": "user", "content": prompt}],
            "temperature": decode.temperature,
            "max_tokens": decode.max_tokens,
        });
        let resp = self
            .client
            .post(&self.endpoint)
            .bearer_auth(&self.api_key)
            .json(&body)
            .send()
            .map_err(|e| RahError::Transport {
                msg: e.to_string(),
                retryable: true,
            })?;
        let status = resp.status();
        if !status.is_success() {
            return Err(RahError::Transport {
                msg: format!("HTTP {status}"),
                retryable: status.is_server_error() || status.as_u16() == 429,
            });
        }
        let json: serde_json::Value = resp.json().map_err(|e| RahError::Transport {
            msg: e.to_string(),
            retryable: false,
        })?;
        json["choices"][0]["message"]["content"]
            .as_str()
            .map(str::to_string)
            .ok_or_else(|| {
                RahError::MalformedResponse("no message content in completion".into())
            })
    }
}
