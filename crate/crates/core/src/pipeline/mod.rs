//! Three-stage concurrent executor.
//!
//! Inputs flow through bounded queues: load workers decode pages, layout
//! workers filter proposals, order elements and cut crops, a batcher groups
//! crops from any page or document into recognition batches, and recognition
//! workers call the [`Recognizer`]. A single sink thread owns the
//! [`Reassembler`] and releases each document once all its results are in.

mod reassembly;
mod source;

use std::io::Write;
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicU64, AtomicUsize, Ordering};
use std::sync::{Arc, Mutex};
use std::time::{Duration, Instant};

use crossbeam_channel::{bounded, unbounded, Receiver, Sender};
use image::RgbImage;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::assemble::{figure_path, AssemblyOptions, Document, ElementContent};
use crate::batching::{collect_batch, BatchCollector, FlushReason};
use crate::domain::Category;
use crate::imaging::{encode_crop, RendererConfig};
use crate::layout::{filter_proposals, plan_crops, PageLayout, ThresholdConfig};
use crate::reading_order::{decode_reading_order, geometric_relation_scores};
use crate::recognizer::{
    build_request, parse_response, RecognitionRequest, Recognizer, ServiceConfig,
};

pub use reassembly::{PendingElement, ReassemblyError, Reassembler, Slot};
pub use source::{document_name, FileSource, FixtureDetector};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum PipelineError {
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("{input}: {detail}")]
    Io { input: String, detail: String },
    #[error("{input}: cannot decode: {detail}")]
    Decode { input: String, detail: String },
    #[error("{input}: layout: {detail}")]
    Layout { input: String, detail: String },
    #[error("{input}: {source}")]
    Reassembly {
        input: String,
        #[source]
        source: ReassemblyError,
    },
}

/// Worker counts, queue and batching parameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct StageConfig {
    pub load_workers: usize,
    pub layout_workers: usize,
    pub recognition_workers: usize,
    pub queue_capacity: usize,
    pub batch_threshold: usize,
    pub batch_max_wait_ms: u64,
    pub crop_padding: f64,
    pub column_overlap_threshold: f64,
}

impl Default for StageConfig {
    fn default() -> Self {
        Self {
            load_workers: 2,
            layout_workers: 2,
            recognition_workers: 1,
            queue_capacity: 32,
            batch_threshold: 16,
            batch_max_wait_ms: 50,
            crop_padding: 1.0,
            column_overlap_threshold: 0.5,
        }
    }
}

/// Complete configuration; also the shape of the `--config` JSON file.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PipelineConfig {
    pub pipeline: StageConfig,
    pub service: ServiceConfig,
    pub thresholds: ThresholdConfig,
    pub assembly: AssemblyOptions,
    pub renderer: RendererConfig,
}

impl PipelineConfig {
    /// Check the configuration against the recognizer's batch limit.
    pub fn validate(&self, max_batch: usize) -> Result<(), PipelineError> {
        let s = &self.pipeline;
        let positive = [
            ("pipeline.load_workers", s.load_workers),
            ("pipeline.layout_workers", s.layout_workers),
            ("pipeline.recognition_workers", s.recognition_workers),
            ("pipeline.queue_capacity", s.queue_capacity),
            ("pipeline.batch_threshold", s.batch_threshold),
        ];
        for (name, v) in positive {
            if v == 0 {
                return Err(PipelineError::Config(format!("{name} must be >= 1")));
            }
        }
        if s.batch_threshold > max_batch {
            return Err(PipelineError::Config(format!(
                "pipeline.batch_threshold {} exceeds recognizer max batch {max_batch}",
                s.batch_threshold
            )));
        }
        if !(s.crop_padding >= 0.0 && s.crop_padding.is_finite()) {
            return Err(PipelineError::Config("pipeline.crop_padding must be >= 0".into()));
        }
        if !(0.0..=1.0).contains(&s.column_overlap_threshold) {
            return Err(PipelineError::Config(
                "pipeline.column_overlap_threshold must be in [0, 1]".into(),
            ));
        }
        self.thresholds.validate().map_err(PipelineError::Config)?;
        self.assembly.validate().map_err(PipelineError::Config)?;
        Ok(())
    }
}

/// A decoded page, optionally carrying detections supplied with the input.
#[derive(Debug, Clone)]
pub struct PageImage {
    pub index: usize,
    pub image: Arc<RgbImage>,
    pub layout: Option<PageLayout>,
}

/// Produces the pages of one input.
pub trait PageSource: Send + Sync {
    /// Hand every page to `emit` as soon as it is decoded; return the page count.
    fn load(&self, input: &Path, emit: &mut dyn FnMut(PageImage)) -> Result<usize, PipelineError>;
}

/// Produces layout proposals for a page.
pub trait Detector: Send + Sync {
    fn detect(&self, input: &str, page: &PageImage) -> Result<PageLayout, PipelineError>;
}

/// A document that made it through the pipeline.
#[derive(Debug, Clone, PartialEq)]
pub struct ParsedDocument {
    pub name: String,
    pub document: Document,
    /// Figure crops as (path relative to the output directory, PNG bytes).
    pub figures: Vec<(String, Vec<u8>)>,
}

/// Throughput counters of one stage queue.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize)]
pub struct QueueStats {
    pub stage: &'static str,
    pub capacity: usize,
    pub items_in: usize,
    pub items_out: usize,
    pub max_depth: usize,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize)]
pub struct PipelineStats {
    pub queues: Vec<QueueStats>,
    pub batches: usize,
    pub threshold_flushes: usize,
    pub timeout_flushes: usize,
    pub drain_flushes: usize,
    pub largest_batch: usize,
    pub batched_items: usize,
}

#[derive(Debug)]
pub struct PipelineOutput {
    /// One entry per input, in input order.
    pub documents: Vec<Result<ParsedDocument, PipelineError>>,
    pub stats: PipelineStats,
}

/// Sink for JSON-lines progress records.
pub type ProgressSink = Arc<Mutex<dyn Write + Send>>;

struct Meter {
    stage: &'static str,
    capacity: usize,
    items_in: AtomicUsize,
    items_out: AtomicUsize,
    max_depth: AtomicUsize,
}

impl Meter {
    fn new(stage: &'static str, capacity: usize) -> Self {
        Self {
            stage,
            capacity,
            items_in: AtomicUsize::new(0),
            items_out: AtomicUsize::new(0),
            max_depth: AtomicUsize::new(0),
        }
    }

    fn send<T>(&self, tx: &Sender<T>, item: T) -> bool {
        if tx.send(item).is_err() {
            return false;
        }
        self.items_in.fetch_add(1, Ordering::Relaxed);
        self.max_depth.fetch_max(tx.len(), Ordering::Relaxed);
        true
    }

    fn took(&self, n: usize) {
        self.items_out.fetch_add(n, Ordering::Relaxed);
    }

    fn snapshot(&self) -> QueueStats {
        QueueStats {
            stage: self.stage,
            capacity: self.capacity,
            items_in: self.items_in.load(Ordering::Relaxed),
            items_out: self.items_out.load(Ordering::Relaxed),
            max_depth: self.max_depth.load(Ordering::Relaxed),
        }
    }
}

struct PageItem {
    doc: usize,
    name: Arc<str>,
    page: PageImage,
}

struct RecogItem {
    request: RecognitionRequest,
}

enum Event {
    Started { doc: usize, name: Arc<str> },
    Page {
        doc: usize,
        page: usize,
        elements: Vec<PendingElement>,
        figures: Vec<(String, Vec<u8>)>,
    },
    PageCount { doc: usize, pages: usize },
    Failed { doc: usize, error: PipelineError },
    Resolved { seq: u64, content: ElementContent },
}

/// Configured executor. [`run_pipeline`] covers the common case.
pub struct Pipeline {
    cfg: PipelineConfig,
    recognizer: Arc<dyn Recognizer>,
    source: Arc<dyn PageSource>,
    detector: Arc<dyn Detector>,
    progress: Option<ProgressSink>,
}

impl Pipeline {
    pub fn new(cfg: PipelineConfig, recognizer: Arc<dyn Recognizer>) -> Self {
        let source = Arc::new(FileSource::new(cfg.renderer.clone()));
        Self {
            cfg,
            recognizer,
            source,
            detector: Arc::new(FixtureDetector),
            progress: None,
        }
    }

    pub fn with_source(mut self, source: Arc<dyn PageSource>) -> Self {
        self.source = source;
        self
    }

    pub fn with_detector(mut self, detector: Arc<dyn Detector>) -> Self {
        self.detector = detector;
        self
    }

    pub fn with_progress(mut self, sink: ProgressSink) -> Self {
        self.progress = Some(sink);
        self
    }

    pub fn config(&self) -> &PipelineConfig {
        &self.cfg
    }

    fn log(&self, record: serde_json::Value) {
        if let Some(sink) = &self.progress {
            if let Ok(mut w) = sink.lock() {
                let _ = writeln!(w, "{record}");
            }
        }
    }

    pub fn run(&self, inputs: &[PathBuf]) -> Result<PipelineOutput, PipelineError> {
        if inputs.is_empty() {
            return Err(PipelineError::Config("no inputs".into()));
        }
        self.cfg.validate(self.recognizer.max_batch())?;
        let s = &self.cfg.pipeline;
        let cap = s.queue_capacity;

        let input_meter = Meter::new("load", cap);
        let page_meter = Meter::new("layout", cap);
        let recog_meter = Meter::new("recognition", cap);
        let batch_meter = Meter::new("batches", cap);
        let next_seq = AtomicU64::new(0);
        let flushes = Mutex::new(PipelineStats::default());

        let (input_tx, input_rx) = bounded::<(usize, PathBuf)>(cap);
        let (page_tx, page_rx) = bounded::<PageItem>(cap);
        let (recog_tx, recog_rx) = bounded::<RecogItem>(cap);
        let (batch_tx, batch_rx) = bounded::<Vec<RecogItem>>(cap);
        let (event_tx, event_rx) = unbounded::<Event>();

        let mut results: Vec<Option<Result<ParsedDocument, PipelineError>>> =
            (0..inputs.len()).map(|_| None).collect();

        std::thread::scope(|scope| {
            // feeder
            {
                let meter = &input_meter;
                scope.spawn(move || {
                    for (i, p) in inputs.iter().enumerate() {
                        if !meter.send(&input_tx, (i, p.clone())) {
                            break;
                        }
                    }
                });
            }
            for _ in 0..s.load_workers {
                let (rx, tx, events) = (input_rx.clone(), page_tx.clone(), event_tx.clone());
                let (in_meter, out_meter) = (&input_meter, &page_meter);
                scope.spawn(move || self.load_worker(rx, tx, events, in_meter, out_meter));
            }
            drop((input_rx, page_tx));
            for _ in 0..s.layout_workers {
                let (rx, tx, events) = (page_rx.clone(), recog_tx.clone(), event_tx.clone());
                let (in_meter, out_meter, seq) = (&page_meter, &recog_meter, &next_seq);
                scope.spawn(move || self.layout_worker(rx, tx, events, in_meter, out_meter, seq));
            }
            drop((page_rx, recog_tx));
            {
                let (in_meter, out_meter, flushes) = (&recog_meter, &batch_meter, &flushes);
                scope.spawn(move || self.batcher(recog_rx, batch_tx, in_meter, out_meter, flushes));
            }
            for _ in 0..s.recognition_workers {
                let (rx, events, meter) = (batch_rx.clone(), event_tx.clone(), &batch_meter);
                scope.spawn(move || self.recognition_worker(rx, events, meter));
            }
            drop((batch_rx, event_tx));

            let mut reassembler = Reassembler::new();
            for event in event_rx.iter() {
                let outcome = match event {
                    Event::Started { doc, name } => {
                        reassembler.start_document(doc, &name);
                        Ok(())
                    }
                    Event::Page {
                        doc,
                        page,
                        elements,
                        figures,
                    } => reassembler.register_page(doc, page, elements, figures),
                    Event::PageCount { doc, pages } => {
                        reassembler.set_page_count(doc, pages);
                        Ok(())
                    }
                    Event::Failed { doc, error } => {
                        reassembler.fail(doc, error);
                        Ok(())
                    }
                    Event::Resolved { seq, content } => reassembler.resolve(seq, content),
                };
                if let Err(e) = outcome {
                    // internal invariant broken; surface on every open document
                    for doc in reassembler.unfinished() {
                        reassembler.fail(
                            doc,
                            PipelineError::Reassembly {
                                input: inputs[doc].display().to_string(),
                                source: e.clone(),
                            },
                        );
                    }
                }
                for (doc, r) in reassembler.take_completed() {
                    results[doc] = Some(r);
                }
            }
            let shutdown = reassembler.finish().err();
            for (doc, slot) in results.iter_mut().enumerate() {
                if slot.is_none() {
                    let source = shutdown
                        .clone()
                        .unwrap_or(ReassemblyError::MissingResults(Vec::new()));
                    *slot = Some(Err(PipelineError::Reassembly {
                        input: inputs[doc].display().to_string(),
                        source,
                    }));
                }
            }
        });

        let mut stats = flushes.into_inner().expect("stats lock");
        stats.queues = vec![
            input_meter.snapshot(),
            page_meter.snapshot(),
            recog_meter.snapshot(),
            batch_meter.snapshot(),
        ];
        for q in &stats.queues {
            self.log(serde_json::json!({
                "event": "stage",
                "stage": q.stage,
                "items_in": q.items_in,
                "items_out": q.items_out,
                "max_queue_depth": q.max_depth,
                "queue_capacity": q.capacity,
            }));
        }
        self.log(serde_json::json!({
            "event": "summary",
            "batches_flushed": stats.batches,
            "threshold_flushes": stats.threshold_flushes,
            "timeout_flushes": stats.timeout_flushes,
            "drain_flushes": stats.drain_flushes,
            "largest_batch": stats.largest_batch,
            "batched_items": stats.batched_items,
        }));
        Ok(PipelineOutput {
            documents: results.into_iter().map(|r| r.expect("filled")).collect(),
            stats,
        })
    }

    fn load_worker(
        &self,
        rx: Receiver<(usize, PathBuf)>,
        tx: Sender<PageItem>,
        events: Sender<Event>,
        in_meter: &Meter,
        out_meter: &Meter,
    ) {
        for (doc, path) in rx.iter() {
            in_meter.took(1);
            let name: Arc<str> = document_name(&path).into();
            let _ = events.send(Event::Started {
                doc,
                name: Arc::clone(&name),
            });
            let mut emit = |page: PageImage| {
                out_meter.send(
                    &tx,
                    PageItem {
                        doc,
                        name: Arc::clone(&name),
                        page,
                    },
                );
            };
            let event = match self.source.load(&path, &mut emit) {
                Ok(0) => Event::Failed {
                    doc,
                    error: PipelineError::Decode {
                        input: path.display().to_string(),
                        detail: "no pages".into(),
                    },
                },
                Ok(pages) => Event::PageCount { doc, pages },
                Err(error) => Event::Failed { doc, error },
            };
            let _ = events.send(event);
        }
    }

    fn layout_worker(
        &self,
        rx: Receiver<PageItem>,
        tx: Sender<RecogItem>,
        events: Sender<Event>,
        in_meter: &Meter,
        out_meter: &Meter,
        next_seq: &AtomicU64,
    ) {
        for item in rx.iter() {
            in_meter.took(1);
            let doc = item.doc;
            match self.lay_out(&item, next_seq) {
                Ok((elements, figures, requests)) => {
                    let _ = events.send(Event::Page {
                        doc,
                        page: item.page.index,
                        elements,
                        figures,
                    });
                    for request in requests {
                        out_meter.send(&tx, RecogItem { request });
                    }
                }
                Err(error) => {
                    let _ = events.send(Event::Failed { doc, error });
                }
            }
        }
    }

    #[allow(clippy::type_complexity)]
    fn lay_out(
        &self,
        item: &PageItem,
        next_seq: &AtomicU64,
    ) -> Result<(Vec<PendingElement>, Vec<(String, Vec<u8>)>, Vec<RecognitionRequest>), PipelineError>
    {
        let s = &self.cfg.pipeline;
        let mut layout = self.detector.detect(&item.name, &item.page)?;
        layout.page_index = item.page.index;
        let filtered = filter_proposals(&layout, &self.cfg.thresholds);
        let crops = plan_crops(&filtered, s.crop_padding);
        let permutation = if filtered.elements.is_empty() {
            Vec::new()
        } else {
            let layout_err = |detail: String| PipelineError::Layout {
                input: item.name.to_string(),
                detail,
            };
            let m = geometric_relation_scores(&filtered.elements, s.column_overlap_threshold)
                .map_err(|e| layout_err(e.to_string()))?;
            decode_reading_order(&m, &filtered.elements)
                .map_err(|e| layout_err(e.to_string()))?
                .permutation
        };

        let mut elements = Vec::with_capacity(permutation.len());
        let mut figures = Vec::new();
        let mut requests = Vec::new();
        for (order_index, &idx) in permutation.iter().enumerate() {
            let element = filtered.elements[idx].clone();
            let png = encode_crop(&item.page.image, &crops[idx].crop).map_err(|e| {
                PipelineError::Decode {
                    input: item.name.to_string(),
                    detail: e.to_string(),
                }
            })?;
            let slot = if element.category == Category::Figure {
                let path = figure_path(
                    &self.cfg.assembly.image_dir,
                    &item.name,
                    item.page.index,
                    element.id,
                );
                figures.push((path.clone(), png));
                Slot::Ready(ElementContent::Figure(path))
            } else {
                let seq = next_seq.fetch_add(1, Ordering::SeqCst);
                match build_request(png, &element, seq) {
                    Ok(req) => {
                        requests.push(req);
                        Slot::Waiting(seq)
                    }
                    Err(e) => Slot::Ready(ElementContent::Failed(e.to_string())),
                }
            };
            elements.push(PendingElement {
                order_index,
                element,
                slot,
            });
        }
        Ok((elements, figures, requests))
    }

    fn batcher(
        &self,
        rx: Receiver<RecogItem>,
        tx: Sender<Vec<RecogItem>>,
        in_meter: &Meter,
        out_meter: &Meter,
        stats: &Mutex<PipelineStats>,
    ) {
        let s = &self.cfg.pipeline;
        let mut collector =
            BatchCollector::new(s.batch_threshold, Duration::from_millis(s.batch_max_wait_ms));
        let origin = Instant::now();
        while let Ok(batch) = collect_batch(&rx, &mut collector, origin) {
            let size = batch.items.len();
            in_meter.took(size);
            let flushed = {
                let mut st = stats.lock().expect("stats lock");
                st.batches += 1;
                st.largest_batch = st.largest_batch.max(size);
                st.batched_items += size;
                match batch.reason {
                    FlushReason::Threshold => st.threshold_flushes += 1,
                    FlushReason::Timeout => st.timeout_flushes += 1,
                    FlushReason::Drain => st.drain_flushes += 1,
                }
                st.batches
            };
            self.log(serde_json::json!({
                "event": "flush",
                "stage": "recognition",
                "batch_size": size,
                "reason": batch.reason,
                "queue_depth": rx.len() + collector.len(),
                "batches_flushed": flushed,
            }));
            if !out_meter.send(&tx, batch.items) {
                break;
            }
        }
    }

    fn recognition_worker(&self, rx: Receiver<Vec<RecogItem>>, events: Sender<Event>, meter: &Meter) {
        for batch in rx.iter() {
            meter.took(1);
            let requests: Vec<RecognitionRequest> = batch.into_iter().map(|i| i.request).collect();
            let outcome = self.recognizer.recognize(&requests);
            for req in &requests {
                let content = match &outcome {
                    Ok(results) => match results.iter().find(|(id, _)| *id == req.sequence_id) {
                        Some((_, Ok(text))) => match parse_response(req.task, text) {
                            Ok(c) => ElementContent::Recognized(c),
                            Err(e) => ElementContent::Failed(e.to_string()),
                        },
                        Some((_, Err(msg))) => ElementContent::Failed(msg.clone()),
                        None => ElementContent::Failed("no result returned for this request".into()),
                    },
                    Err(e) => ElementContent::Failed(e.to_string()),
                };
                let _ = events.send(Event::Resolved {
                    seq: req.sequence_id,
                    content,
                });
            }
        }
    }
}

/// Run the default file-based pipeline over `inputs`.
pub fn run_pipeline(
    inputs: &[PathBuf],
    cfg: &PipelineConfig,
    recognizer: Arc<dyn Recognizer>,
) -> Result<PipelineOutput, PipelineError> {
    Pipeline::new(cfg.clone(), recognizer).run(inputs)
}
