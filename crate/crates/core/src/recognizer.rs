//! Recognition requests, the batch wire protocol and response parsing.
//!
//! Wire protocol (HTTP POST, JSON):
//!
//! ```text
//! request:  {"batch":[{"id":1,"task":"table","prompt_id":"table_otsl","image_b64":"..."}]}
//! response: {"results":[{"id":1,"text":"fcel{A} nl"},{"id":2,"error":"..."}]}
//! ```

use std::collections::HashMap;
use std::fmt;
use std::io;
use std::time::{Duration, Instant};

use base64::Engine as _;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::domain::{Category, LayoutElement};
use crate::otsl::{parse_otsl_text, OtslError, OtslGrid};
use crate::metrics::{parse_pipe_table, ChartTableError};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum RecognitionTask {
    Ocr,
    Table,
    Formula,
    Chart,
}

impl RecognitionTask {
    /// Task for a layout class; `None` for figures, which are never recognized.
    pub fn for_category(c: Category) -> Option<Self> {
        match c {
            Category::Table => Some(RecognitionTask::Table),
            Category::Formula => Some(RecognitionTask::Formula),
            Category::Chart => Some(RecognitionTask::Chart),
            Category::Figure => None,
            Category::Text
            | Category::Title
            | Category::Header
            | Category::Footer
            | Category::FigureCaption
            | Category::TableCaption
            | Category::Footnote => Some(RecognitionTask::Ocr),
        }
    }

    pub fn as_str(&self) -> &'static str {
        match self {
            RecognitionTask::Ocr => "ocr",
            RecognitionTask::Table => "table",
            RecognitionTask::Formula => "formula",
            RecognitionTask::Chart => "chart",
        }
    }

    /// Key into the recognizer's prompt table.
    pub fn prompt_id(&self) -> &'static str {
        match self {
            RecognitionTask::Ocr => "ocr",
            RecognitionTask::Table => "table_otsl",
            RecognitionTask::Formula => "formula_latex",
            RecognitionTask::Chart => "chart_markdown",
        }
    }
}

impl fmt::Display for RecognitionTask {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RecognitionRequest {
    pub sequence_id: u64,
    pub task: RecognitionTask,
    /// PNG-encoded crop.
    pub image: Vec<u8>,
    pub prompt_id: &'static str,
}

/// Typed recognizer output.
#[derive(Debug, Clone, PartialEq)]
pub enum RecognizedContent {
    TextMd(String),
    TableGrid(OtslGrid),
    FormulaLatex { latex: String, display: bool },
    ChartTable(String),
}

#[derive(Debug, Error)]
pub enum RecognizeError {
    #[error("figure elements are not sent for recognition")]
    NotRecognizable,
    #[error("recognizer returned an empty response")]
    EmptyResponse,
    #[error("table output is not valid OTSL ({source}); raw: {raw:?}")]
    OtslParse {
        #[source]
        source: OtslError,
        raw: String,
    },
    #[error("chart output is not a pipe table: {0}")]
    MalformedChartTable(#[from] ChartTableError),
}

#[derive(Debug, Error)]
pub enum ClientError {
    #[error("batch of {size} requests is outside 1..={max}")]
    BatchSize { size: usize, max: usize },
    #[error("recognizer unavailable after {attempts} attempts: {last}")]
    ServiceUnavailable { attempts: u32, last: String },
    #[error("recognizer did not answer within {0:?}")]
    Timeout(Duration),
    #[error("recognizer rejected the batch: {0}")]
    Rejected(String),
    #[error("invalid recognizer response: {0}")]
    Protocol(String),
}

pub fn build_request(
    crop: Vec<u8>,
    element: &LayoutElement,
    sequence_id: u64,
) -> Result<RecognitionRequest, RecognizeError> {
    let task = RecognitionTask::for_category(element.category).ok_or(RecognizeError::NotRecognizable)?;
    Ok(RecognitionRequest {
        sequence_id,
        task,
        image: crop,
        prompt_id: task.prompt_id(),
    })
}

/// Strip `\( \)` (inline) or `\[ \]` (display) delimiters. Undelimited
/// input counts as display math. Returns the trimmed inner LaTeX.
pub fn strip_formula_delimiters(raw: &str) -> (&str, bool) {
    let t = raw.trim();
    if let Some(inner) = t.strip_prefix("\\(").and_then(|s| s.strip_suffix("\\)")) {
        return (inner.trim(), false);
    }
    if let Some(inner) = t.strip_prefix("\\[").and_then(|s| s.strip_suffix("\\]")) {
        return (inner.trim(), true);
    }
    (t, true)
}

pub fn parse_response(task: RecognitionTask, raw: &str) -> Result<RecognizedContent, RecognizeError> {
    let trimmed = raw.trim();
    if trimmed.is_empty() {
        return Err(RecognizeError::EmptyResponse);
    }
    match task {
        RecognitionTask::Ocr => Ok(RecognizedContent::TextMd(trimmed.to_string())),
        RecognitionTask::Formula => {
            let (latex, display) = strip_formula_delimiters(trimmed);
            if latex.is_empty() {
                return Err(RecognizeError::EmptyResponse);
            }
            Ok(RecognizedContent::FormulaLatex {
                latex: latex.to_string(),
                display,
            })
        }
        RecognitionTask::Table => parse_otsl_text(trimmed)
            .map(RecognizedContent::TableGrid)
            .map_err(|source| RecognizeError::OtslParse {
                source,
                raw: raw.to_string(),
            }),
        RecognitionTask::Chart => {
            parse_pipe_table(trimmed)?;
            Ok(RecognizedContent::ChartTable(trimmed.to_string()))
        }
    }
}

/// Render content the way a recognizer would emit it; inverse of
/// [`parse_response`] for the matching task.
pub fn serialize_content(content: &RecognizedContent) -> String {
    match content {
        RecognizedContent::TextMd(s) | RecognizedContent::ChartTable(s) => s.clone(),
        RecognizedContent::TableGrid(g) => g.to_otsl_string(),
        RecognizedContent::FormulaLatex { latex, display: true } => format!("\\[{latex}\\]"),
        RecognizedContent::FormulaLatex { latex, display: false } => format!("\\({latex}\\)"),
    }
}

pub fn task_of(content: &RecognizedContent) -> RecognitionTask {
    match content {
        RecognizedContent::TextMd(_) => RecognitionTask::Ocr,
        RecognizedContent::TableGrid(_) => RecognitionTask::Table,
        RecognizedContent::FormulaLatex { .. } => RecognitionTask::Formula,
        RecognizedContent::ChartTable(_) => RecognitionTask::Chart,
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct WireRequestItem {
    pub id: u64,
    pub task: RecognitionTask,
    pub prompt_id: String,
    pub image_b64: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct WireRequest {
    pub batch: Vec<WireRequestItem>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum WireResult {
    Text { id: u64, text: String },
    Error { id: u64, error: String },
}

impl WireResult {
    pub fn id(&self) -> u64 {
        match self {
            WireResult::Text { id, .. } | WireResult::Error { id, .. } => *id,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct WireResponse {
    pub results: Vec<WireResult>,
}

impl WireRequest {
    pub fn from_requests(requests: &[RecognitionRequest]) -> Self {
        let engine = base64::engine::general_purpose::STANDARD;
        WireRequest {
            batch: requests
                .iter()
                .map(|r| WireRequestItem {
                    id: r.sequence_id,
                    task: r.task,
                    prompt_id: r.prompt_id.to_string(),
                    image_b64: engine.encode(&r.image),
                })
                .collect(),
        }
    }
}

/// Raw recognizer text (or a per-request error) for one sequence id.
pub type BatchResult = (u64, Result<String, String>);

/// Anything that can turn a batch of crops into raw recognizer text.
pub trait Recognizer: Send + Sync {
    fn recognize(&self, requests: &[RecognitionRequest]) -> Result<Vec<BatchResult>, ClientError>;

    /// Largest batch this recognizer accepts.
    fn max_batch(&self) -> usize {
        usize::MAX
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ServiceConfig {
    pub endpoint: String,
    pub request_timeout_ms: u64,
    pub retries: u32,
    pub max_batch: usize,
    /// First retry delay; doubles on every further attempt.
    pub backoff_ms: u64,
}

impl Default for ServiceConfig {
    fn default() -> Self {
        Self {
            endpoint: "http://127.0.0.1:8118/recognize".to_string(),
            request_timeout_ms: 30_000,
            retries: 2,
            max_batch: 64,
            backoff_ms: 100,
        }
    }
}

impl ServiceConfig {
    /// Defaults overridden by `DOCPARSE_ENDPOINT`, `DOCPARSE_REQUEST_TIMEOUT_MS`,
    /// `DOCPARSE_RETRIES`, `DOCPARSE_MAX_BATCH` and `DOCPARSE_BACKOFF_MS`.
    pub fn from_env() -> Result<Self, String> {
        let mut cfg = Self::default();
        cfg.apply_env(|k| std::env::var(k).ok())?;
        Ok(cfg)
    }

    pub fn apply_env(&mut self, get: impl Fn(&str) -> Option<String>) -> Result<(), String> {
        fn num<T: std::str::FromStr>(key: &str, v: String) -> Result<T, String> {
            v.trim().parse().map_err(|_| format!("{key}: not a number: {v:?}"))
        }
        if let Some(v) = get("DOCPARSE_ENDPOINT") {
            self.endpoint = v;
        }
        if let Some(v) = get("DOCPARSE_REQUEST_TIMEOUT_MS") {
            self.request_timeout_ms = num("DOCPARSE_REQUEST_TIMEOUT_MS", v)?;
        }
        if let Some(v) = get("DOCPARSE_RETRIES") {
            self.retries = num("DOCPARSE_RETRIES", v)?;
        }
        if let Some(v) = get("DOCPARSE_MAX_BATCH") {
            self.max_batch = num("DOCPARSE_MAX_BATCH", v)?;
        }
        if let Some(v) = get("DOCPARSE_BACKOFF_MS") {
            self.backoff_ms = num("DOCPARSE_BACKOFF_MS", v)?;
        }
        Ok(())
    }

    pub fn validate(&self) -> Result<(), String> {
        if self.max_batch == 0 {
            return Err("service.max_batch must be >= 1".into());
        }
        if self.request_timeout_ms == 0 {
            return Err("service.request_timeout_ms must be >= 1".into());
        }
        if !(self.endpoint.starts_with("http://") || self.endpoint.starts_with("https://")) {
            return Err(format!("service.endpoint {:?} is not an http(s) URL", self.endpoint));
        }
        Ok(())
    }
}

/// Blocking HTTP client for the batch protocol.
pub struct HttpRecognizer {
    cfg: ServiceConfig,
    agent: ureq::Agent,
}

impl HttpRecognizer {
    pub fn new(cfg: ServiceConfig) -> Self {
        let agent = ureq::AgentBuilder::new()
            .timeout(Duration::from_millis(cfg.request_timeout_ms))
            .build();
        Self { cfg, agent }
    }

    pub fn config(&self) -> &ServiceConfig {
        &self.cfg
    }

    /// Submit one batch and return one result per request, in request order.
    pub fn submit_batch(
        &self,
        requests: &[RecognitionRequest],
    ) -> Result<Vec<BatchResult>, ClientError> {
        if requests.is_empty() || requests.len() > self.cfg.max_batch {
            return Err(ClientError::BatchSize {
                size: requests.len(),
                max: self.cfg.max_batch,
            });
        }
        let body = serde_json::to_string(&WireRequest::from_requests(requests))
            .map_err(|e| ClientError::Protocol(e.to_string()))?;

        let timeout = Duration::from_millis(self.cfg.request_timeout_ms);
        let mut delay = Duration::from_millis(self.cfg.backoff_ms);
        let mut attempt = 0;
        loop {
            attempt += 1;
            let started = Instant::now();
            let failure = match self
                .agent
                .post(&self.cfg.endpoint)
                .set("Content-Type", "application/json")
                .send_string(&body)
            {
                Ok(resp) => {
                    let text = resp.into_string().map_err(|e| {
                        if is_timeout(&e) {
                            ClientError::Timeout(timeout)
                        } else {
                            ClientError::Protocol(e.to_string())
                        }
                    });
                    match text {
                        Ok(text) => return match_results(requests, &text),
                        Err(ClientError::Timeout(t)) => Failure::Timeout(t),
                        Err(e) => return Err(e),
                    }
                }
                Err(ureq::Error::Status(code, resp)) if code >= 500 => {
                    Failure::Transport(format!("HTTP {code} {}", resp.status_text()))
                }
                Err(ureq::Error::Status(code, resp)) => {
                    let detail = resp.into_string().unwrap_or_default();
                    return Err(ClientError::Rejected(format!("HTTP {code}: {detail}")));
                }
                Err(ureq::Error::Transport(t)) => {
                    if is_timeout(&t) || started.elapsed() >= timeout {
                        Failure::Timeout(timeout)
                    } else {
                        Failure::Transport(t.to_string())
                    }
                }
            };
            if attempt > self.cfg.retries {
                return Err(match failure {
                    Failure::Timeout(t) => ClientError::Timeout(t),
                    Failure::Transport(last) => ClientError::ServiceUnavailable {
                        attempts: attempt,
                        last,
                    },
                });
            }
            std::thread::sleep(delay);
            delay *= 2;
        }
    }
}

enum Failure {
    Timeout(Duration),
    Transport(String),
}

fn is_timeout(err: &(dyn std::error::Error + 'static)) -> bool {
    let mut cur = Some(err);
    while let Some(e) = cur {
        if let Some(io) = e.downcast_ref::<io::Error>() {
            if matches!(io.kind(), io::ErrorKind::TimedOut | io::ErrorKind::WouldBlock) {
                return true;
            }
        }
        cur = e.source();
    }
    false
}

/// Pair response entries with requests by id. Ids the server skipped become
/// per-request errors; unknown or duplicated ids are protocol errors.
fn match_results(requests: &[RecognitionRequest], body: &str) -> Result<Vec<BatchResult>, ClientError> {
    let resp: WireResponse =
        serde_json::from_str(body).map_err(|e| ClientError::Protocol(e.to_string()))?;
    let mut by_id: HashMap<u64, Result<String, String>> = HashMap::with_capacity(resp.results.len());
    for r in resp.results {
        let id = r.id();
        if !requests.iter().any(|q| q.sequence_id == id) {
            return Err(ClientError::Protocol(format!("result for unknown id {id}")));
        }
        let value = match r {
            WireResult::Text { text, .. } => Ok(text),
            WireResult::Error { error, .. } => Err(error),
        };
        if by_id.insert(id, value).is_some() {
            return Err(ClientError::Protocol(format!("duplicate result for id {id}")));
        }
    }
    Ok(requests
        .iter()
        .map(|q| {
            let r = by_id
                .remove(&q.sequence_id)
                .unwrap_or_else(|| Err("no result returned for this request".to_string()));
            (q.sequence_id, r)
        })
        .collect())
}

impl Recognizer for HttpRecognizer {
    fn recognize(&self, requests: &[RecognitionRequest]) -> Result<Vec<BatchResult>, ClientError> {
        self.submit_batch(requests)
    }

    fn max_batch(&self) -> usize {
        self.cfg.max_batch
    }
}
