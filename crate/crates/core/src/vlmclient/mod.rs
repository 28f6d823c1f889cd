//! Remote decision backend speaking a minimal chat-completions protocol.
//!
//! Requests carry a system text part and user parts mixing text with
//! base64-embedded PPM images. Only `choices[0].message.content` of the
//! reply is read; the first action phrase in it is the decision.

mod parse;
mod prompt;

pub mod mock;

use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::Arc;
use std::time::Duration;

use base64::Engine as _;
use serde_json::{json, Value};

use crate::backend::{BackendError, DecisionBackend, DecisionContext, Phase};
use crate::plan::{resolve_clause, Decomposer, PlanError, Subtask, TaskPrompt};
use crate::scenegraph::SceneGraph;
use crate::world::Action;

pub use parse::parse_action;
pub use prompt::{
    build_deployment_prompt, build_exploration_prompt, Part, PromptBundle, PromptMode, EXPLORATION_CONSTRAINTS, LEGEND,
    NAVIGATION_RULES, PPM_MEDIA_TYPE,
};

pub const API_KEY_ENV: &str = "VLM_API_KEY";

#[derive(Debug, Clone)]
pub struct VlmConfig {
    pub endpoint: String,
    pub model: String,
    pub api_key: Option<String>,
    pub timeout: Duration,
    pub max_retries: u32,
    /// First retry delay; doubles on each further attempt.
    pub backoff_base: Duration,
    pub price_per_call_usd: f64,
}

impl VlmConfig {
    /// Defaults with the key taken from `VLM_API_KEY`.
    pub fn from_env(endpoint: impl Into<String>, model: impl Into<String>) -> Self {
        VlmConfig {
            endpoint: endpoint.into(),
            model: model.into(),
            api_key: std::env::var(API_KEY_ENV).ok().filter(|k| !k.is_empty()),
            timeout: Duration::from_secs(60),
            max_retries: 3,
            backoff_base: Duration::from_secs(1),
            price_per_call_usd: 0.0,
        }
    }
}

pub fn request_body(model: &str, bundle: &PromptBundle) -> Value {
    let engine = base64::engine::general_purpose::STANDARD;
    let user: Vec<Value> = bundle
        .parts
        .iter()
        .map(|p| match p {
            Part::Text(t) => json!({"type": "text", "text": t}),
            Part::Image { media_type, data, .. } => {
                json!({"type": "image", "data_base64": engine.encode(data), "media_type": media_type})
            }
        })
        .collect();
    json!({
        "model": model,
        "messages": [
            {"role": "system", "content": [{"type": "text", "text": bundle.system}]},
            {"role": "user", "content": user},
        ]
    })
}

fn reply_content(body: &str) -> Result<String, BackendError> {
    let v: Value =
        serde_json::from_str(body).map_err(|e| BackendError::Protocol(format!("malformed JSON reply: {e}")))?;
    v.pointer("/choices/0/message/content")
        .and_then(Value::as_str)
        .map(str::to_owned)
        .ok_or_else(|| BackendError::Protocol("reply lacks choices[0].message.content".into()))
}

#[derive(Debug)]
pub struct VlmClient {
    cfg: VlmConfig,
    http: reqwest::blocking::Client,
    calls: AtomicU64,
    attempts: AtomicU64,
}

impl VlmClient {
    pub fn new(cfg: VlmConfig) -> Result<Self, BackendError> {
        if cfg.timeout.is_zero() {
            return Err(BackendError::Other("timeout must be positive".into()));
        }
        let http = reqwest::blocking::Client::builder()
            .timeout(cfg.timeout)
            .build()
            .map_err(|e| BackendError::Other(format!("http client: {e}")))?;
        Ok(VlmClient { cfg, http, calls: AtomicU64::new(0), attempts: AtomicU64::new(0) })
    }

    pub fn config(&self) -> &VlmConfig {
        &self.cfg
    }

    /// Requests that received a 2xx answer.
    pub fn calls(&self) -> u64 {
        self.calls.load(Ordering::Relaxed)
    }

    /// Every transport attempt, successful or not.
    pub fn attempts(&self) -> u64 {
        self.attempts.load(Ordering::Relaxed)
    }

    pub fn cost_usd(&self) -> f64 {
        self.calls() as f64 * self.cfg.price_per_call_usd
    }

    /// Sends the prompt and returns the reply text. Only transport failures
    /// are retried.
    pub fn complete(&self, bundle: &PromptBundle) -> Result<String, BackendError> {
        let body = request_body(&self.cfg.model, bundle);
        let total = 1 + self.cfg.max_retries;
        let mut last_error = String::new();
        for attempt in 1..=total {
            self.attempts.fetch_add(1, Ordering::Relaxed);
            let mut req = self.http.post(&self.cfg.endpoint).json(&body);
            if let Some(key) = &self.cfg.api_key {
                req = req.bearer_auth(key);
            }
            match req.send() {
                Ok(resp) => {
                    let status = resp.status();
                    if !status.is_success() {
                        let text = resp.text().unwrap_or_default();
                        return Err(BackendError::Protocol(format!(
                            "HTTP {status}: {}",
                            text.chars().take(200).collect::<String>()
                        )));
                    }
                    self.calls.fetch_add(1, Ordering::Relaxed);
                    let text = resp.text().map_err(|e| BackendError::Protocol(format!("reading reply: {e}")))?;
                    return reply_content(&text);
                }
                Err(e) => {
                    last_error = e.to_string();
                    log::warn!("attempt {attempt}/{total} to {} failed: {last_error}", self.cfg.endpoint);
                    if attempt < total {
                        std::thread::sleep(self.cfg.backoff_base * 2u32.pow(attempt - 1));
                    }
                }
            }
        }
        Err(BackendError::Transport { attempts: total, message: last_error })
    }

    pub fn decide(&self, bundle: &PromptBundle) -> Result<Action, BackendError> {
        parse_action(&self.complete(bundle)?)
    }
}

/// Decision backend that renders the context into the matching prompt and
/// asks the remote model.
#[derive(Debug, Clone)]
pub struct VlmBackend {
    client: Arc<VlmClient>,
}

impl VlmBackend {
    pub fn new(client: Arc<VlmClient>) -> Self {
        VlmBackend { client }
    }

    pub fn client(&self) -> &VlmClient {
        &self.client
    }
}

pub fn bundle_for(ctx: &DecisionContext<'_>) -> PromptBundle {
    match ctx.phase {
        Phase::Exploration => build_exploration_prompt(ctx.constraints, ctx.graph_image(), ctx.fpv_image()),
        Phase::Deployment { task, subtask } => build_deployment_prompt(
            ctx.constraints,
            ctx.graph_image(),
            ctx.fpv_image(),
            task,
            subtask.map(|s| &s.prompt),
        ),
    }
}

impl DecisionBackend for VlmBackend {
    fn decide(&mut self, ctx: &DecisionContext<'_>) -> Result<Action, BackendError> {
        self.client.decide(&bundle_for(ctx))
    }

    fn name(&self) -> &str {
        "vlm"
    }
}

/// Asks the model for the destinations of a task, one per line, and maps
/// each line onto the scene graph like the rule-based decomposer does.
#[derive(Debug, Clone)]
pub struct VlmDecomposer {
    client: Arc<VlmClient>,
}

impl VlmDecomposer {
    pub fn new(client: Arc<VlmClient>) -> Self {
        VlmDecomposer { client }
    }
}

pub fn decomposition_prompt(task: &TaskPrompt, graph: &SceneGraph) -> PromptBundle {
    let mut places: Vec<String> = graph.landmarks().values().map(|l| l.name.clone()).collect();
    places.extend(graph.regions().values().map(|r| r.name.clone()));
    PromptBundle {
        mode: PromptMode::Deployment,
        system: "Split the navigation task into the ordered list of places the robot must reach. Reply with one place per line and nothing else.".into(),
        constraint_block: String::new(),
        parts: vec![Part::Text(format!("Known places: {}\nTask: {}", places.join(", "), task.text()))],
    }
}

impl Decomposer for VlmDecomposer {
    fn decompose(&mut self, task: &TaskPrompt, graph: &SceneGraph) -> Result<Vec<Subtask>, PlanError> {
        let reply = self.client.complete(&decomposition_prompt(task, graph))?;
        let mut out = Vec::new();
        let mut unresolved = Vec::new();
        for line in
            reply.lines().map(|l| l.trim_start_matches(|c: char| c.is_ascii_digit() || "-*.) ".contains(c)).trim())
        {
            if line.is_empty() {
                continue;
            }
            match resolve_clause(line, graph) {
                Some((target, name, kind)) => out.push(Subtask {
                    prompt: TaskPrompt::new(format!("go to the {}", name.to_lowercase())),
                    kind,
                    target: Some(target),
                }),
                None => unresolved.push(line.to_owned()),
            }
        }
        if !unresolved.is_empty() || out.is_empty() {
            if unresolved.is_empty() {
                unresolved.push(reply);
            }
            return Err(PlanError::UnresolvedTarget { clauses: unresolved });
        }
        Ok(out)
    }
}

#[cfg(test)]
mod tests {
    use super::mock::{MockReply, MockServer};
    use super::*;
    use crate::plan::ConstraintSet;

    fn client(server: &MockServer, retries: u32) -> VlmClient {
        VlmClient::new(VlmConfig {
            endpoint: server.url(),
            model: "test-model".into(),
            api_key: Some("secret".into()),
            timeout: Duration::from_secs(5),
            max_retries: retries,
            backoff_base: Duration::from_millis(1),
            price_per_call_usd: 0.5,
        })
        .unwrap()
    }

    fn bundle() -> PromptBundle {
        build_exploration_prompt(&ConstraintSet::default(), b"P6\n1 1\n255\n\0\0\0", b"img")
    }

    #[test]
    fn happy_path_sends_expected_body() {
        let server = MockServer::start(vec![MockReply::content("I will turn left.")]).unwrap();
        let c = client(&server, 2);
        assert_eq!(c.decide(&bundle()).unwrap(), Action::TurnLeft);
        assert_eq!((c.calls(), c.attempts()), (1, 1));
        assert_eq!(c.cost_usd(), 0.5);
        let req = &server.requests()[0];
        assert_eq!(req.header("authorization"), Some("Bearer secret"));
        let v: Value = serde_json::from_str(&req.body).unwrap();
        assert_eq!(v["model"], "test-model");
        assert_eq!(v["messages"][0]["role"], "system");
        let parts = v["messages"][1]["content"].as_array().unwrap();
        let images: Vec<&Value> = parts.iter().filter(|p| p["type"] == "image").collect();
        assert_eq!(images.len(), 2);
        assert_eq!(images[1]["data_base64"], "aW1n");
        assert_eq!(images[1]["media_type"], PPM_MEDIA_TYPE);
    }

    #[test]
    fn drops_are_retried_then_fail() {
        let server = MockServer::start(vec![MockReply::Drop]).unwrap();
        let c = client(&server, 2);
        let err = c.decide(&bundle()).unwrap_err();
        assert!(matches!(err, BackendError::Transport { attempts: 3, .. }));
        assert_eq!(c.attempts(), 3);
        assert_eq!(c.calls(), 0);
    }

    #[test]
    fn recovers_after_a_drop() {
        let server = MockServer::start(vec![MockReply::Drop, MockReply::content("stop")]).unwrap();
        let c = client(&server, 1);
        assert_eq!(c.decide(&bundle()).unwrap(), Action::Stop);
        assert_eq!(c.attempts(), 2);
    }

    #[test]
    fn protocol_errors_are_not_retried() {
        let server = MockServer::start(vec![MockReply::Status(500, "{}".into())]).unwrap();
        let c = client(&server, 3);
        assert!(matches!(c.decide(&bundle()), Err(BackendError::Protocol(_))));
        assert_eq!(c.attempts(), 1);
        let server = MockServer::start(vec![MockReply::Status(200, "not json".into())]).unwrap();
        let c = client(&server, 3);
        assert!(matches!(c.decide(&bundle()), Err(BackendError::Protocol(_))));
        assert_eq!(c.calls(), 1);
    }

    #[test]
    fn unparseable_reply() {
        let server = MockServer::start(vec![MockReply::content("proceed north")]).unwrap();
        assert!(matches!(client(&server, 0).decide(&bundle()), Err(BackendError::UnparseableAction(_))));
    }
}
