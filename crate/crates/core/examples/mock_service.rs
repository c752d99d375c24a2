//! Serve the recognizer wire protocol on loopback and talk to it with the
//! HTTP client, including a retried transient failure.
//!
//!     cargo run --example mock_service
//!     cargo run --example mock_service -- --serve   # keep serving until killed

use std::sync::Arc;

use docparse::mock::{Fallback, MockRecognizer};
use docparse::recognizer::{HttpRecognizer, RecognitionRequest, RecognitionTask, Recognizer, ServiceConfig};

fn request(id: u64, task: RecognitionTask, image: &[u8]) -> RecognitionRequest {
    RecognitionRequest {
        sequence_id: id,
        task,
        image: image.to_vec(),
        prompt_id: task.prompt_id(),
    }
}

fn main() {
    let mock = MockRecognizer::new(Fallback::Describe)
        .with_response(b"crop-a", "Quarterly revenue rose 4%.")
        .with_response(b"crop-b", "$$E = mc^2$$")
        .with_failing_first(1);
    let server = Arc::new(mock).serve().unwrap();
    println!("mock recognizer at {}", server.endpoint());

    if std::env::args().any(|a| a == "--serve") {
        loop {
            std::thread::park();
        }
    }

    let client = HttpRecognizer::new(ServiceConfig {
        endpoint: server.endpoint(),
        backoff_ms: 10,
        ..ServiceConfig::default()
    });
    let results = client
        .recognize(&[
            request(1, RecognitionTask::Ocr, b"crop-a"),
            request(2, RecognitionTask::Formula, b"crop-b"),
            request(3, RecognitionTask::Table, b"unknown crop"),
        ])
        .unwrap();
    for (id, text) in results {
        println!("{id}: {text:?}");
    }
    server.shutdown();
}
