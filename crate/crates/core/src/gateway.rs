//! Prompt rendering and the chat-completions client.
//!
//! This is the only module that knows the wire format. Every request is a
//! single user message with no system prompt.

use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;
use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::{Condvar, Mutex};
use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use crate::agents::{AgentBackend, AgentDecision};
use crate::dynamics::{build_context, InteractionKind, UpdateContext, UpdateMechanism};
use crate::error::{Error, Result};
use crate::graph::{InteractionMatrix, Sign};
use crate::parser::extract_sign;

/// Prompt family. `Mistral` swaps the closing instruction for a forced-choice,
/// fixed-format one.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PromptDialect {
    #[default]
    Llama,
    Mistral,
}

impl PromptDialect {
    pub const ALL: [PromptDialect; 2] = [PromptDialect::Llama, PromptDialect::Mistral];

    pub fn name(self) -> &'static str {
        match self {
            PromptDialect::Llama => "llama",
            PromptDialect::Mistral => "mistral",
        }
    }
}

impl fmt::Display for PromptDialect {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for PromptDialect {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        PromptDialect::ALL
            .into_iter()
            .find(|d| d.name() == s.to_ascii_lowercase())
            .ok_or_else(|| Error::Config(format!("unknown prompt dialect `{s}`")))
    }
}

static NEUTRAL_WARNED: AtomicBool = AtomicBool::new(false);

fn word(sign: Sign) -> &'static str {
    if sign.is_neutral() && !NEUTRAL_WARNED.swap(true, Ordering::Relaxed) {
        log::warn!("rendering a neutral sign into a prompt; the original templates only name positive and negative");
    }
    sign.word()
}

fn own_link(kind: InteractionKind, other: usize, sign: Sign) -> String {
    match kind {
        InteractionKind::Relationship => format!("Your current relationship with Individual {other} is {}.", word(sign)),
        _ => format!("You have a {} {kind} of Individual {other}.", word(sign)),
    }
}

fn third_party(kind: InteractionKind, from: usize, to: usize, sign: Sign) -> String {
    match kind {
        InteractionKind::Relationship => {
            format!("Individual {from} has a {} relationship with Individual {to}.", word(sign))
        }
        _ => format!("Individual {from} has a {} {kind} of Individual {to}.", word(sign)),
    }
}

fn toward_you(kind: InteractionKind, from: usize, sign: Sign) -> String {
    match kind {
        InteractionKind::Relationship => format!("Individual {from} has a {} relationship with you.", word(sign)),
        _ => format!("Individual {from} has a {} {kind} of you.", word(sign)),
    }
}

fn question(kind: InteractionKind, target: usize) -> String {
    match kind {
        InteractionKind::Relationship => {
            format!("Will your new relationship with respect to Individual {target} be negative or positive?")
        }
        _ => format!("Will your new {kind} of Individual {target} be negative or positive?"),
    }
}

fn closing(kind: InteractionKind, dialect: PromptDialect) -> String {
    match (dialect, kind) {
        (PromptDialect::Llama, InteractionKind::Relationship) => {
            "State the relationship first, and then provide an explanation.".to_string()
        }
        // the published template keeps "appraisal" here for opinions too
        (PromptDialect::Llama, _) => "State the appraisal first, and then provide an explanation.".to_string(),
        (PromptDialect::Mistral, InteractionKind::Relationship) => concat!(
            "Your must always choose either a \"positive\" or \"negative\" relationship, ",
            "even if you are uncertain or do not have enough information. ",
            "Your response must be in the following format:\n",
            "\"New relationship: [write here \"positive\" or \"negative\"].\" and then ",
            "\"Justification for answer: [write here the justification for the new relationship].\"",
        )
        .to_string(),
        (PromptDialect::Mistral, _) => format!(
            concat!(
                "Your must always choose either a \"positive\" or \"negative\" {kind}, ",
                "even if you are uncertain or do not have enough information. ",
                "A \"neutral\" {kind} is not allowed. ",
                "Your response must be in the following format:\n",
                "\"New {kind}: [write here \"positive\" or \"negative\"].\" and then ",
                "\"Justification for answer: [write here the justification for the new {kind}].\"",
            ),
            kind = kind
        ),
    }
}

/// Renders the prompt agent `ctx.focal` sees before updating its interaction toward `ctx.target`.
///
/// Every peer `k` contributes the target's link to `k` followed by either the
/// focal agent's own link to `k` (homophily) or `k`'s link to the focal agent
/// (influence). Three-agent prompts keep everything on one line; larger
/// populations put each peer on its own line.
pub fn render_prompt(ctx: &UpdateContext, dialect: PromptDialect) -> String {
    let kind = ctx.kind;
    let first = own_link(kind, ctx.target, ctx.focal_to_target);
    let pairs: Vec<String> = ctx
        .peers
        .iter()
        .map(|p| {
            let shown = match ctx.mechanism {
                UpdateMechanism::Homophily => own_link(kind, p.peer, p.focal_to_peer),
                UpdateMechanism::Influence => toward_you(kind, p.peer, p.peer_to_focal),
            };
            format!("{} {shown}", third_party(kind, ctx.target, p.peer, p.target_to_peer))
        })
        .collect();
    let ask = format!("{} {}", question(kind, ctx.target), closing(kind, dialect));
    if pairs.len() == 1 {
        format!("{first} {} \n{ask}", pairs[0])
    } else {
        format!("{first}\n{}\n\n{ask}", pairs.join("\n"))
    }
}

/// Sign pattern used for golden prompt files: `s_ij` is negative iff
/// `(2i + j) mod 5 = 4` or `(3i + j) mod 7 = 6`. For three agents this gives
/// `s_01 = +`, `s_12 = −`, `s_02 = +`, `s_20 = −`.
pub fn sample_matrix(m: usize) -> Result<InteractionMatrix> {
    InteractionMatrix::from_fn(m, |i, j| {
        if (2 * i + j) % 5 == 4 || (3 * i + j) % 7 == 6 {
            Sign::Negative
        } else {
            Sign::Positive
        }
    })
}

/// Context of agent 0 updating toward agent 1 on [`sample_matrix`].
pub fn sample_context(m: usize, kind: InteractionKind, mechanism: UpdateMechanism) -> Result<UpdateContext> {
    build_context(&sample_matrix(m)?, 0, 1, kind, mechanism)
}

/// File name of a golden prompt, e.g. `llama-appraisal-homophily-m3.txt`.
pub fn golden_name(dialect: PromptDialect, kind: InteractionKind, mechanism: UpdateMechanism, m: usize) -> String {
    format!("{dialect}-{kind}-{mechanism}-m{m}.txt")
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct GoldenCheck {
    pub file: PathBuf,
    /// Byte offset of the first difference, `None` when identical.
    pub mismatch_at: Option<usize>,
}

fn parse_golden_name(name: &str) -> Option<(PromptDialect, InteractionKind, UpdateMechanism, usize)> {
    let stem = name.strip_suffix(".txt")?;
    let mut parts = stem.split('-');
    let dialect = parts.next()?.parse().ok()?;
    let kind = parts.next()?.parse().ok()?;
    let mechanism = parts.next()?.parse().ok()?;
    let m = parts.next()?.strip_prefix('m')?.parse().ok()?;
    parts.next().is_none().then_some((dialect, kind, mechanism, m))
}

/// Renders the sample context for every golden file in `dir` and compares
/// character for character. Files with unrecognized names are ignored.
pub fn check_golden_prompts(dir: &Path) -> Result<Vec<GoldenCheck>> {
    let mut files: Vec<PathBuf> = std::fs::read_dir(dir)?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .collect();
    files.sort();
    let mut checks = Vec::new();
    for file in files {
        let Some((dialect, kind, mechanism, m)) =
            file.file_name().and_then(|n| n.to_str()).and_then(parse_golden_name)
        else {
            continue;
        };
        let expected = std::fs::read_to_string(&file)?;
        let rendered = render_prompt(&sample_context(m, kind, mechanism)?, dialect);
        let mismatch_at = (expected != rendered).then(|| {
            expected
                .bytes()
                .zip(rendered.bytes())
                .position(|(a, b)| a != b)
                .unwrap_or(expected.len().min(rendered.len()))
        });
        checks.push(GoldenCheck { file, mismatch_at });
    }
    Ok(checks)
}

pub const DEFAULT_API_KEY_ENV: &str = "SOCBAL_API_KEY";

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EndpointConfig {
    /// Either the API root (`…/v1`) or the full chat-completions URL.
    pub base_url: String,
    pub model: String,
    pub temperature: f64,
    pub max_tokens: u32,
    pub timeout_secs: f64,
    /// Retries after the first attempt for transient failures.
    pub retries: u32,
    /// First backoff delay; doubles on every retry.
    pub backoff_ms: u64,
    /// Environment variable holding the bearer token.
    pub api_key_env: String,
    pub max_in_flight: usize,
}

impl Default for EndpointConfig {
    fn default() -> Self {
        EndpointConfig {
            base_url: "http://127.0.0.1:8000/v1".to_string(),
            model: String::new(),
            temperature: 0.0,
            max_tokens: 512,
            timeout_secs: 120.0,
            retries: 3,
            backoff_ms: 500,
            api_key_env: DEFAULT_API_KEY_ENV.to_string(),
            max_in_flight: 8,
        }
    }
}

impl EndpointConfig {
    pub fn completions_url(&self) -> String {
        let base = self.base_url.trim_end_matches('/');
        if base.ends_with("/chat/completions") {
            base.to_string()
        } else {
            format!("{base}/chat/completions")
        }
    }
}

/// Counting semaphore bounding requests in flight.
struct Gate {
    free: Mutex<usize>,
    cv: Condvar,
}

struct Permit<'a>(&'a Gate);

impl Gate {
    fn new(n: usize) -> Self {
        Gate {
            free: Mutex::new(n.max(1)),
            cv: Condvar::new(),
        }
    }

    fn acquire(&self) -> Permit<'_> {
        let mut free = self.free.lock().unwrap_or_else(|e| e.into_inner());
        while *free == 0 {
            free = self.cv.wait(free).unwrap_or_else(|e| e.into_inner());
        }
        *free -= 1;
        Permit(self)
    }
}

impl Drop for Permit<'_> {
    fn drop(&mut self) {
        *self.0.free.lock().unwrap_or_else(|e| e.into_inner()) += 1;
        self.0.cv.notify_one();
    }
}

enum Attempt {
    Done(String),
    Transient(String),
}

pub struct ChatClient {
    cfg: EndpointConfig,
    agent: ureq::Agent,
    token: Option<String>,
    gate: Gate,
}

impl ChatClient {
    pub fn new(cfg: EndpointConfig) -> Self {
        let agent = ureq::Agent::config_builder()
            .timeout_global(Some(Duration::from_secs_f64(cfg.timeout_secs.max(0.001))))
            .http_status_as_error(false)
            .build()
            .into();
        let token = std::env::var(&cfg.api_key_env).ok().filter(|t| !t.is_empty());
        let gate = Gate::new(cfg.max_in_flight);
        ChatClient {
            cfg,
            agent,
            token,
            gate,
        }
    }

    pub fn config(&self) -> &EndpointConfig {
        &self.cfg
    }

    pub fn request_body(&self, prompt: &str) -> Value {
        json!({
            "model": self.cfg.model,
            "messages": [{"role": "user", "content": prompt}],
            "temperature": self.cfg.temperature,
            "max_tokens": self.cfg.max_tokens,
        })
    }

    fn attempt(&self, body: &Value) -> Result<Attempt> {
        let _permit = self.gate.acquire();
        let mut req = self.agent.post(&self.cfg.completions_url());
        if let Some(token) = &self.token {
            req = req.header("Authorization", &format!("Bearer {token}"));
        }
        let mut resp = match req.send_json(body) {
            Ok(r) => r,
            Err(e) => return Ok(Attempt::Transient(e.to_string())),
        };
        let status = resp.status().as_u16();
        let text = match resp.body_mut().read_to_string() {
            Ok(t) => t,
            Err(e) => return Ok(Attempt::Transient(e.to_string())),
        };
        match status {
            200..=299 => parse_completion(&text).map(Attempt::Done),
            429 | 500..=599 => Ok(Attempt::Transient(format!("HTTP {status}"))),
            _ => Err(Error::Protocol(format!("HTTP {status}: {}", truncate(&text, 200)))),
        }
    }

    /// Sends `prompt` and returns the assistant text verbatim.
    ///
    /// Transport failures, 429 and 5xx are retried with exponential backoff;
    /// any other response is final.
    pub fn chat_complete(&self, prompt: &str) -> Result<String> {
        let body = self.request_body(prompt);
        let attempts = self.cfg.retries + 1;
        let mut last = String::new();
        for n in 0..attempts {
            if n > 0 {
                let delay = self.cfg.backoff_ms.saturating_mul(1 << (n - 1).min(16));
                log::debug!("retrying chat completion in {delay} ms after: {last}");
                std::thread::sleep(Duration::from_millis(delay));
            }
            match self.attempt(&body)? {
                Attempt::Done(text) => return Ok(text),
                Attempt::Transient(msg) => last = msg,
            }
        }
        Err(Error::Transport {
            attempts,
            message: last,
        })
    }
}

fn truncate(s: &str, n: usize) -> &str {
    match s.char_indices().nth(n) {
        Some((i, _)) => &s[..i],
        None => s,
    }
}

fn parse_completion(text: &str) -> Result<String> {
    let v: Value = serde_json::from_str(text).map_err(|e| Error::Protocol(format!("response is not JSON: {e}")))?;
    v.pointer("/choices/0/message/content")
        .and_then(Value::as_str)
        .map(str::to_string)
        .ok_or_else(|| Error::Protocol("response has no choices[0].message.content".to_string()))
}

/// Agent backed by a served chat model.
pub struct LlmAgent {
    client: ChatClient,
    dialect: PromptDialect,
}

impl LlmAgent {
    pub fn new(client: ChatClient, dialect: PromptDialect) -> Self {
        LlmAgent { client, dialect }
    }
}

impl AgentBackend for LlmAgent {
    fn decide(&self, ctx: &UpdateContext) -> Result<AgentDecision> {
        let prompt = render_prompt(ctx, self.dialect);
        let started = Instant::now();
        let raw = self.client.chat_complete(&prompt)?;
        Ok(AgentDecision {
            parsed: extract_sign(&raw, ctx.kind, self.dialect),
            justification: raw,
            latency: started.elapsed(),
            prompt: Some(prompt),
        })
    }

    fn label(&self) -> String {
        self.client.cfg.model.clone()
    }
}
