//! Chat-completions client and the resumable stance annotation loop.

use std::collections::{BTreeMap, HashSet};
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;
use std::thread;
use std::time::Duration;

use rand::Rng;
use serde::{Deserialize, Serialize};
use serde_json::Value;

use super::stance::{parse_stance_response, render_stance_prompt, StanceRequest};
use super::{AnnotateError, AnnotationRecord, AnnotationSink, AnnotationStore};
use crate::corpus::{Corpus, FeatureKind};

pub const ENV_ENDPOINT: &str = "ANNOTATOR_ENDPOINT";
pub const ENV_MODEL: &str = "ANNOTATOR_MODEL";
pub const ENV_TOKEN: &str = "ANNOTATOR_TOKEN";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EndpointConfig {
    /// Full chat-completions URL.
    pub url: String,
    pub model: String,
    /// Bearer token. Never serialized, so it stays out of manifests.
    #[serde(skip_serializing)]
    pub token: Option<String>,
    /// Provenance tag for produced records; defaults to `llm:<model>`.
    pub annotator: Option<String>,
    pub max_retries: u32,
    pub max_inflight: usize,
    pub backoff_base_ms: u64,
    pub backoff_factor: f64,
    pub max_backoff_ms: u64,
    pub timeout_ms: u64,
}

impl Default for EndpointConfig {
    fn default() -> Self {
        EndpointConfig {
            url: "https://api.openai.com/v1/chat/completions".into(),
            model: "gpt-3.5-turbo".into(),
            token: None,
            annotator: None,
            max_retries: 3,
            max_inflight: 4,
            backoff_base_ms: 1000,
            backoff_factor: 2.0,
            max_backoff_ms: 60_000,
            timeout_ms: 60_000,
        }
    }
}

impl EndpointConfig {
    /// Applies `ANNOTATOR_ENDPOINT`, `ANNOTATOR_MODEL` and `ANNOTATOR_TOKEN`
    /// when set.
    pub fn with_env(mut self) -> Self {
        if let Ok(url) = std::env::var(ENV_ENDPOINT) {
            self.url = url;
        }
        if let Ok(model) = std::env::var(ENV_MODEL) {
            self.model = model;
        }
        if let Ok(token) = std::env::var(ENV_TOKEN) {
            self.token = Some(token);
        }
        self
    }

    pub fn annotator(&self) -> String {
        self.annotator
            .clone()
            .unwrap_or_else(|| format!("llm:{}", self.model))
    }

    /// Delay before retry number `attempt` (0-based), with up to 25% jitter.
    pub fn backoff(&self, attempt: u32) -> Duration {
        let base = self.backoff_base_ms as f64 * self.backoff_factor.powi(attempt as i32);
        let capped = base.min(self.max_backoff_ms as f64);
        let jitter = 1.0 + rand::rng().random_range(0.0..0.25);
        Duration::from_millis((capped * jitter) as u64)
    }

    fn validate(&self) -> Result<(), AnnotateError> {
        if self.url.is_empty() || self.model.is_empty() {
            return Err(AnnotateError::Config(
                "endpoint url and model are required".into(),
            ));
        }
        if self.max_inflight == 0 {
            return Err(AnnotateError::Config(
                "max_inflight must be at least 1".into(),
            ));
        }
        Ok(())
    }
}

#[derive(Debug, Serialize)]
struct ChatMessage<'a> {
    role: &'a str,
    content: &'a str,
}

#[derive(Debug, Serialize)]
struct ChatRequest<'a> {
    model: &'a str,
    messages: [ChatMessage<'a>; 1],
    temperature: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub enum RequestError {
    /// Connection failures, timeouts, broken bodies.
    Transport(String),
    Status {
        code: u16,
        retry_after: Option<Duration>,
        body: String,
    },
    /// 2xx reply without a usable `choices[0].message.content`.
    BadResponse(String),
}

impl RequestError {
    fn retryable(&self) -> bool {
        match self {
            RequestError::Transport(_) | RequestError::BadResponse(_) => true,
            RequestError::Status { code, .. } => *code == 408 || *code == 429 || *code >= 500,
        }
    }
}

impl std::fmt::Display for RequestError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            RequestError::Transport(m) => write!(f, "transport error: {m}"),
            RequestError::Status { code, body, .. } => write!(f, "HTTP {code}: {body}"),
            RequestError::BadResponse(m) => write!(f, "bad response: {m}"),
        }
    }
}

/// Blocking client for one chat-completions-compatible endpoint.
pub struct ChatClient {
    agent: ureq::Agent,
    config: EndpointConfig,
}

impl ChatClient {
    pub fn new(config: EndpointConfig) -> Result<Self, AnnotateError> {
        config.validate()?;
        let agent = ureq::Agent::config_builder()
            .http_status_as_error(false)
            .timeout_global(Some(Duration::from_millis(config.timeout_ms)))
            .build()
            .into();
        Ok(ChatClient { agent, config })
    }

    pub fn config(&self) -> &EndpointConfig {
        &self.config
    }

    /// Sends one user message at temperature 0 and returns the reply text.
    pub fn complete(&self, prompt: &str) -> Result<String, RequestError> {
        let body = ChatRequest {
            model: &self.config.model,
            messages: [ChatMessage {
                role: "user",
                content: prompt,
            }],
            temperature: 0.0,
        };
        let mut req = self.agent.post(&self.config.url);
        if let Some(token) = &self.config.token {
            req = req.header("Authorization", format!("Bearer {token}"));
        }
        let mut resp = req
            .send_json(&body)
            .map_err(|e| RequestError::Transport(e.to_string()))?;
        let code = resp.status().as_u16();
        let retry_after = resp
            .headers()
            .get("retry-after")
            .and_then(|v| v.to_str().ok())
            .and_then(|v| v.trim().parse::<u64>().ok())
            .map(Duration::from_secs);
        let text = resp
            .body_mut()
            .read_to_string()
            .map_err(|e| RequestError::Transport(e.to_string()))?;
        if !(200..300).contains(&code) {
            return Err(RequestError::Status {
                code,
                retry_after,
                body: text,
            });
        }
        let json: Value =
            serde_json::from_str(&text).map_err(|e| RequestError::BadResponse(e.to_string()))?;
        json.pointer("/choices/0/message/content")
            .and_then(Value::as_str)
            .map(str::to_string)
            .ok_or_else(|| RequestError::BadResponse(format!("no message content in {text}")))
    }
}

/// An instance that could not be annotated within the retry budget.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SkipRecord {
    pub instance_id: String,
    pub feature: FeatureKind,
    pub annotator: String,
    pub reason: String,
    pub attempts: u32,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct StanceRun {
    /// Newly produced records, in corpus order.
    pub records: Vec<AnnotationRecord>,
    pub skipped: Vec<SkipRecord>,
    /// HTTP requests issued, retries included.
    pub requests: usize,
}

enum Outcome {
    Done(AnnotationRecord),
    Skipped(SkipRecord),
}

fn annotate_one(
    client: &ChatClient,
    instance_id: &str,
    prompt: &str,
    annotator: &str,
    requests: &AtomicUsize,
) -> Outcome {
    let cfg = client.config();
    let mut reason = String::new();
    let mut attempts = 0;
    for attempt in 0..=cfg.max_retries {
        attempts = attempt + 1;
        requests.fetch_add(1, Ordering::Relaxed);
        let wait = match client.complete(prompt) {
            Ok(reply) => match parse_stance_response(&reply) {
                Ok(stance) => {
                    return Outcome::Done(AnnotationRecord::new(
                        instance_id,
                        FeatureKind::Stance,
                        [stance],
                        annotator,
                    ))
                }
                Err(e) => {
                    reason = e.to_string();
                    None
                }
            },
            Err(e) => {
                reason = e.to_string();
                if !e.retryable() {
                    break;
                }
                match e {
                    RequestError::Status {
                        retry_after: Some(d),
                        ..
                    } => Some(d.min(Duration::from_millis(cfg.max_backoff_ms))),
                    _ => Some(cfg.backoff(attempt)),
                }
            }
        };
        if attempt < cfg.max_retries {
            if let Some(d) = wait {
                thread::sleep(d);
            }
        }
    }
    Outcome::Skipped(SkipRecord {
        instance_id: instance_id.to_string(),
        feature: FeatureKind::Stance,
        annotator: annotator.to_string(),
        reason,
        attempts,
    })
}

/// Annotates the stance of every instance toward its topic's target.
///
/// Instances that already have a stance record from this annotator in
/// `existing` are not requested again. New records are appended to `sink`
/// as they arrive; the returned lists are in corpus order regardless of
/// completion order.
pub fn annotate_stances(
    corpus: &Corpus,
    targets: &BTreeMap<String, String>,
    existing: &AnnotationStore,
    client: &ChatClient,
    sink: Option<&AnnotationSink>,
) -> Result<StanceRun, AnnotateError> {
    let mut seen = HashSet::new();
    let mut missing = Vec::new();
    for inst in corpus.iter() {
        if !seen.insert(inst.id.as_str()) {
            return Err(AnnotateError::DuplicateInstance(inst.id.clone()));
        }
        if inst.topic.as_ref().and_then(|t| targets.get(t)).is_none() {
            missing.push(inst.id.clone());
        }
    }
    if !missing.is_empty() {
        return Err(AnnotateError::MissingTarget(missing));
    }

    let annotator = client.config().annotator();
    let pending: Vec<(&str, String)> = corpus
        .iter()
        .filter(|i| !existing.contains(&i.id, FeatureKind::Stance, &annotator))
        .map(|i| {
            let target = &targets[i.topic.as_deref().expect("checked above")];
            let req = StanceRequest::new(i.text.clone(), target.clone())?;
            Ok((i.id.as_str(), render_stance_prompt(&req)))
        })
        .collect::<Result<_, AnnotateError>>()?;

    let next = AtomicUsize::new(0);
    let requests = AtomicUsize::new(0);
    let slots: Mutex<Vec<Option<Outcome>>> = Mutex::new((0..pending.len()).map(|_| None).collect());
    let sink_error: Mutex<Option<AnnotateError>> = Mutex::new(None);
    let workers = client.config().max_inflight.min(pending.len());

    thread::scope(|s| {
        for _ in 0..workers {
            s.spawn(|| loop {
                let idx = next.fetch_add(1, Ordering::Relaxed);
                let Some((id, prompt)) = pending.get(idx) else {
                    break;
                };
                let outcome = annotate_one(client, id, prompt, &annotator, &requests);
                if let (Outcome::Done(rec), Some(sink)) = (&outcome, sink) {
                    if let Err(e) = sink.append(rec) {
                        sink_error.lock().unwrap().get_or_insert(e);
                    }
                }
                slots.lock().unwrap()[idx] = Some(outcome);
            });
        }
    });

    if let Some(e) = sink_error.into_inner().unwrap() {
        return Err(e);
    }
    let mut run = StanceRun {
        requests: requests.into_inner(),
        ..Default::default()
    };
    for outcome in slots.into_inner().unwrap().into_iter().flatten() {
        match outcome {
            Outcome::Done(r) => run.records.push(r),
            Outcome::Skipped(s) => run.skipped.push(s),
        }
    }
    Ok(run)
}
