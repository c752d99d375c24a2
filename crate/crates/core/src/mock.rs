//! In-repo mock recognizer, usable in-process or served over loopback HTTP
//! with the batch wire protocol.
//!
//! Responses are looked up by the SHA-256 of the crop PNG. Crops without a
//! canned response fall back to [`Fallback`].

use std::collections::{HashMap, HashSet};
use std::fs;
use std::net::SocketAddr;
use std::path::Path;
use std::sync::atomic::{AtomicBool, AtomicUsize, Ordering};
use std::sync::Arc;
use std::thread::JoinHandle;
use std::time::Duration;

use base64::Engine as _;
use serde::Deserialize;
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::imaging::{encode_crop, load_page_image};
use crate::layout::{load_layout, plan_crops};
use crate::recognizer::{
    BatchResult, ClientError, RecognitionRequest, RecognitionTask, Recognizer, WireRequest,
    WireResponse, WireResult,
};

#[derive(Debug, Error)]
pub enum MockError {
    #[error("mock fixture {path}: {detail}")]
    Fixture { path: String, detail: String },
    #[error("mock server: {0}")]
    Server(String),
}

pub fn image_digest(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

/// What to answer for a crop with no canned response.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Fallback {
    /// Per-request error `"no canned response"`.
    Error,
    /// Deterministic, well-formed output derived from the crop digest.
    Describe,
}

#[derive(Debug, Clone, Default)]
struct Faults {
    /// Answer this many HTTP requests with status 500 before behaving.
    fail_first: usize,
    /// Sleep this long before answering each batch.
    delay: Duration,
    /// Digests that receive a per-request error.
    failing: HashSet<String>,
}

pub struct MockRecognizer {
    canned: HashMap<String, String>,
    fallback: Fallback,
    faults: Faults,
    http_requests: AtomicUsize,
    batches: AtomicUsize,
}

impl MockRecognizer {
    pub fn new(fallback: Fallback) -> Self {
        Self {
            canned: HashMap::new(),
            fallback,
            faults: Faults::default(),
            http_requests: AtomicUsize::new(0),
            batches: AtomicUsize::new(0),
        }
    }

    pub fn with_response(mut self, image: &[u8], text: impl Into<String>) -> Self {
        self.canned.insert(image_digest(image), text.into());
        self
    }

    pub fn with_delay(mut self, delay: Duration) -> Self {
        self.faults.delay = delay;
        self
    }

    pub fn with_failing_first(mut self, n: usize) -> Self {
        self.faults.fail_first = n;
        self
    }

    pub fn with_failing_image(mut self, image: &[u8]) -> Self {
        self.faults.failing.insert(image_digest(image));
        self
    }

    /// Number of batches answered so far (in-process and HTTP).
    pub fn batches_served(&self) -> usize {
        self.batches.load(Ordering::SeqCst)
    }

    /// Register the canned responses of a fixture document directory.
    ///
    /// `responses.json` lists `{"page": p, "element": k, "text": "..."}`
    /// entries, where `k` indexes the page's elements in `layout.json`.
    /// Crops are planned with `padding` exactly as the pipeline plans them.
    pub fn load_fixture_dir(&mut self, dir: &Path, padding: f64) -> Result<usize, MockError> {
        #[derive(Deserialize)]
        struct Entry {
            page: usize,
            element: usize,
            text: String,
        }
        #[derive(Deserialize)]
        struct File {
            responses: Vec<Entry>,
        }
        let fixture_err = |path: &Path, detail: String| MockError::Fixture {
            path: path.display().to_string(),
            detail,
        };
        let resp_path = dir.join("responses.json");
        let text = fs::read_to_string(&resp_path).map_err(|e| fixture_err(&resp_path, e.to_string()))?;
        let file: File =
            serde_json::from_str(&text).map_err(|e| fixture_err(&resp_path, e.to_string()))?;
        let layout_path = dir.join("layout.json");
        let pages = load_layout(&layout_path).map_err(|e| fixture_err(&layout_path, e.to_string()))?;

        let mut added = 0;
        for entry in file.responses {
            let page = pages
                .iter()
                .find(|p| p.page_index == entry.page)
                .ok_or_else(|| fixture_err(&resp_path, format!("no page {}", entry.page)))?;
            let crops = plan_crops(page, padding);
            let crop = crops.get(entry.element).ok_or_else(|| {
                fixture_err(&resp_path, format!("page {} has no element {}", entry.page, entry.element))
            })?;
            let image_path = dir.join(format!("page_{}.png", entry.page));
            let image =
                load_page_image(&image_path).map_err(|e| fixture_err(&image_path, e.to_string()))?;
            let png = encode_crop(&image, &crop.crop).map_err(|e| fixture_err(&image_path, e.to_string()))?;
            let digest = image_digest(&png);
            if let Some(prev) = self.canned.get(&digest) {
                if *prev != entry.text {
                    return Err(fixture_err(
                        &resp_path,
                        format!("page {} element {} crop collides with another crop", entry.page, entry.element),
                    ));
                }
            }
            self.canned.insert(digest, entry.text);
            added += 1;
        }
        Ok(added)
    }

    fn describe(task: RecognitionTask, digest: &str) -> String {
        let tag = &digest[..8];
        match task {
            RecognitionTask::Ocr => format!("text {tag}"),
            RecognitionTask::Table => format!("fcel{{{tag}}} fcel{{v}} nl fcel{{1}} fcel{{2}} nl"),
            RecognitionTask::Formula => format!("\\[x_{{{tag}}}\\]"),
            RecognitionTask::Chart => format!("| | {tag} |\n| --- | --- |\n| a | 1 |"),
        }
    }

    fn answer(&self, id: u64, task: RecognitionTask, image: &[u8]) -> WireResult {
        let digest = image_digest(image);
        if self.faults.failing.contains(&digest) {
            return WireResult::Error {
                id,
                error: "injected failure".into(),
            };
        }
        match (self.canned.get(&digest), self.fallback) {
            (Some(text), _) => WireResult::Text {
                id,
                text: text.clone(),
            },
            (None, Fallback::Describe) => WireResult::Text {
                id,
                text: Self::describe(task, &digest),
            },
            (None, Fallback::Error) => WireResult::Error {
                id,
                error: "no canned response".into(),
            },
        }
    }

    /// Answer a decoded wire request.
    pub fn respond(&self, request: &WireRequest) -> Result<WireResponse, String> {
        let engine = base64::engine::general_purpose::STANDARD;
        self.batches.fetch_add(1, Ordering::SeqCst);
        if !self.faults.delay.is_zero() {
            std::thread::sleep(self.faults.delay);
        }
        let mut results = Vec::with_capacity(request.batch.len());
        for item in &request.batch {
            let image = engine
                .decode(&item.image_b64)
                .map_err(|e| format!("item {}: bad base64: {e}", item.id))?;
            results.push(self.answer(item.id, item.task, &image));
        }
        Ok(WireResponse { results })
    }

    /// Serve the wire protocol on an ephemeral loopback port.
    pub fn serve(self: Arc<Self>) -> Result<MockServer, MockError> {
        let server = tiny_http::Server::http("127.0.0.1:0").map_err(|e| MockError::Server(e.to_string()))?;
        let addr = server
            .server_addr()
            .to_ip()
            .ok_or_else(|| MockError::Server("not bound to an IP socket".into()))?;
        let server = Arc::new(server);
        let stop = Arc::new(AtomicBool::new(false));
        let handle = {
            let server = Arc::clone(&server);
            let stop = Arc::clone(&stop);
            std::thread::spawn(move || {
                while !stop.load(Ordering::SeqCst) {
                    match server.recv_timeout(Duration::from_millis(20)) {
                        Ok(Some(req)) => {
                            let mock = Arc::clone(&self);
                            std::thread::spawn(move || mock.handle_http(req));
                        }
                        Ok(None) => {}
                        Err(_) => break,
                    }
                }
            })
        };
        Ok(MockServer {
            addr,
            stop,
            handle: Some(handle),
            server,
        })
    }

    fn handle_http(&self, mut req: tiny_http::Request) {
        let n = self.http_requests.fetch_add(1, Ordering::SeqCst);
        let reply = |req: tiny_http::Request, code: u16, body: String| {
            let header = tiny_http::Header::from_bytes(&b"Content-Type"[..], &b"application/json"[..])
                .expect("static header");
            let _ = req.respond(
                tiny_http::Response::from_string(body)
                    .with_status_code(code)
                    .with_header(header),
            );
        };
        if n < self.faults.fail_first {
            return reply(req, 500, r#"{"error":"injected"}"#.into());
        }
        if *req.method() != tiny_http::Method::Post {
            return reply(req, 405, r#"{"error":"POST only"}"#.into());
        }
        let mut body = String::new();
        if let Err(e) = req.as_reader().read_to_string(&mut body) {
            return reply(req, 400, serde_json::json!({ "error": e.to_string() }).to_string());
        }
        let parsed: WireRequest = match serde_json::from_str(&body) {
            Ok(p) => p,
            Err(e) => return reply(req, 400, serde_json::json!({ "error": e.to_string() }).to_string()),
        };
        match self.respond(&parsed) {
            Ok(resp) => reply(req, 200, serde_json::to_string(&resp).expect("response serializes")),
            Err(e) => reply(req, 400, serde_json::json!({ "error": e }).to_string()),
        }
    }
}

impl Recognizer for MockRecognizer {
    fn recognize(&self, requests: &[RecognitionRequest]) -> Result<Vec<BatchResult>, ClientError> {
        let wire = WireRequest::from_requests(requests);
        let resp = self.respond(&wire).map_err(ClientError::Protocol)?;
        Ok(resp
            .results
            .into_iter()
            .map(|r| match r {
                WireResult::Text { id, text } => (id, Ok(text)),
                WireResult::Error { id, error } => (id, Err(error)),
            })
            .collect())
    }
}

/// Running loopback server; stops when dropped.
pub struct MockServer {
    addr: SocketAddr,
    stop: Arc<AtomicBool>,
    handle: Option<JoinHandle<()>>,
    server: Arc<tiny_http::Server>,
}

impl MockServer {
    pub fn addr(&self) -> SocketAddr {
        self.addr
    }

    /// Endpoint URL for [`crate::recognizer::ServiceConfig::endpoint`].
    pub fn endpoint(&self) -> String {
        format!("http://{}/recognize", self.addr)
    }

    pub fn shutdown(mut self) {
        self.stop_now();
    }

    fn stop_now(&mut self) {
        self.stop.store(true, Ordering::SeqCst);
        self.server.unblock();
        if let Some(h) = self.handle.take() {
            let _ = h.join();
        }
    }
}

impl Drop for MockServer {
    fn drop(&mut self) {
        self.stop_now();
    }
}
