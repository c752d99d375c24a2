//! Run the whole pipeline over the bundled two-page fixture with an
//! in-process mock recognizer and print the assembled Markdown.
//!
//!     cargo run --example parse_document
//!     cargo run --example parse_document -- out/

use std::path::Path;
use std::sync::Arc;

use docparse::assemble::write_outputs;
use docparse::mock::{Fallback, MockRecognizer};
use docparse::{assemble_markdown, run_pipeline, PipelineConfig};

fn main() {
    let input = Path::new(env!("CARGO_MANIFEST_DIR")).join("fixtures/doc1");
    let cfg = PipelineConfig::default();

    let mut recognizer = MockRecognizer::new(Fallback::Describe);
    recognizer.load_fixture_dir(&input, cfg.pipeline.crop_padding).unwrap();

    let output = run_pipeline(&[input], &cfg, Arc::new(recognizer)).unwrap();
    let parsed = output.documents.into_iter().next().unwrap().unwrap();
    print!("{}", assemble_markdown(&parsed.document, &cfg.assembly));

    let s = &output.stats;
    eprintln!(
        "{} batches (largest {}), flushes: {} threshold / {} timeout / {} drain",
        s.batches, s.largest_batch, s.threshold_flushes, s.timeout_flushes, s.drain_flushes
    );

    if let Some(dir) = std::env::args().nth(1) {
        write_outputs(Path::new(&dir), &parsed.name, &parsed.document, &parsed.figures, &cfg.assembly).unwrap();
        eprintln!("wrote {dir}/{}.md and {dir}/{}.json", parsed.name, parsed.name);
    }
}
