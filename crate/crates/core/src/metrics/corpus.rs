//! Corpus-level evaluation driven by a JSON-lines manifest.
//!
//! Each manifest line is
//! `{"id": "...", "task": "ocr|table|formula|chart", "tags": [...], "pred": "path", "gt": "path"}`
//! with paths relative to the manifest's directory.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::metrics::{bleu, chart_triples, normalized_edit_distance, rms_f1, teds_grids};
use crate::otsl::{html_to_grid, parse_otsl_text, OtslGrid};
use crate::recognizer::{strip_formula_delimiters, RecognitionTask};

#[derive(Debug, Error)]
pub enum ManifestError {
    #[error("reading manifest {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("manifest line {line}: {detail}")]
    BadLine { line: usize, detail: String },
    #[error("manifest {0} lists no samples")]
    Empty(String),
    #[error("manifest line {line}: duplicate sample id {id:?}")]
    DuplicateId { line: usize, id: String },
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
struct ManifestLine {
    id: String,
    task: RecognitionTask,
    #[serde(default)]
    tags: Vec<String>,
    pred: PathBuf,
    gt: PathBuf,
}

/// One scored prediction, loaded in memory.
#[derive(Debug, Clone, PartialEq)]
pub struct EvalSample {
    pub id: String,
    pub task: RecognitionTask,
    pub tags: Vec<String>,
    pub prediction: String,
    pub ground_truth: String,
}

/// Name of the headline metric reported for a task.
pub fn metric_name(task: RecognitionTask) -> &'static str {
    match task {
        RecognitionTask::Ocr => "edit_distance",
        RecognitionTask::Table => "teds",
        RecognitionTask::Formula => "bleu",
        RecognitionTask::Chart => "rms_f1",
    }
}

/// Metric values for one sample: the headline value plus named extras
/// (TEDS-S for tables, precision and recall for charts).
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SampleScore {
    pub value: f64,
    #[serde(skip_serializing_if = "BTreeMap::is_empty")]
    pub extra: BTreeMap<String, f64>,
}

fn table_grid(text: &str) -> Result<OtslGrid, String> {
    let trimmed = text.trim();
    if trimmed.starts_with('<') {
        html_to_grid(trimmed).map_err(|e| e.to_string())
    } else {
        parse_otsl_text(trimmed).map_err(|e| e.to_string())
    }
}

/// Score a single sample with the metric its task calls for.
pub fn score_sample(sample: &EvalSample) -> Result<SampleScore, String> {
    let mut extra = BTreeMap::new();
    let value = match sample.task {
        RecognitionTask::Ocr => {
            normalized_edit_distance(sample.prediction.trim(), sample.ground_truth.trim())
        }
        RecognitionTask::Table => {
            let gt = table_grid(&sample.ground_truth).map_err(|e| format!("ground truth: {e}"))?;
            let pred = table_grid(&sample.prediction).map_err(|e| format!("prediction: {e}"))?;
            extra.insert("teds_s".to_string(), teds_grids(&pred, &gt, true));
            teds_grids(&pred, &gt, false)
        }
        RecognitionTask::Formula => bleu(
            strip_formula_delimiters(&sample.prediction).0,
            strip_formula_delimiters(&sample.ground_truth).0,
        ),
        RecognitionTask::Chart => {
            let gt =
                chart_triples(&sample.ground_truth).map_err(|e| format!("ground truth: {e}"))?;
            let pred = chart_triples(&sample.prediction).map_err(|e| format!("prediction: {e}"))?;
            let pr = rms_f1(&pred, &gt);
            extra.insert("precision".to_string(), pr.precision);
            extra.insert("recall".to_string(), pr.recall);
            pr.f1
        }
    };
    Ok(SampleScore { value, extra })
}

#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct Aggregate {
    pub count: usize,
    pub errored: usize,
    /// Unweighted mean of the headline metric; absent when nothing scored.
    pub mean: Option<f64>,
    #[serde(skip_serializing_if = "BTreeMap::is_empty")]
    pub extra_means: BTreeMap<String, f64>,
}

#[derive(Default)]
struct Accumulator {
    count: usize,
    errored: usize,
    sum: f64,
    extra: BTreeMap<String, f64>,
}

impl Accumulator {
    fn add(&mut self, outcome: &Result<SampleScore, String>) {
        match outcome {
            Ok(s) => {
                self.count += 1;
                self.sum += s.value;
                for (k, v) in &s.extra {
                    *self.extra.entry(k.clone()).or_insert(0.0) += v;
                }
            }
            Err(_) => self.errored += 1,
        }
    }

    fn finish(self) -> Aggregate {
        let n = self.count as f64;
        Aggregate {
            count: self.count,
            errored: self.errored,
            mean: (self.count > 0).then(|| self.sum / n),
            extra_means: if self.count > 0 {
                self.extra.into_iter().map(|(k, v)| (k, v / n)).collect()
            } else {
                BTreeMap::new()
            },
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TaskReport {
    pub metric: &'static str,
    pub overall: Aggregate,
    pub tags: BTreeMap<String, Aggregate>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SampleRecord {
    pub id: String,
    pub task: RecognitionTask,
    pub tags: Vec<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub score: Option<SampleScore>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EvalReport {
    pub samples: usize,
    pub errored: usize,
    pub tasks: BTreeMap<RecognitionTask, TaskReport>,
    pub records: Vec<SampleRecord>,
}

impl EvalReport {
    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("report serializes");
        s.push('\n');
        s
    }
}

/// Score samples in parallel and aggregate per task and per tag.
/// Records are ordered by sample id before reduction.
pub fn evaluate_samples(samples: &[EvalSample]) -> EvalReport {
    let mut scored: Vec<(&EvalSample, Result<SampleScore, String>)> =
        samples.par_iter().map(|s| (s, score_sample(s))).collect();
    scored.sort_by(|a, b| a.0.id.cmp(&b.0.id));

    let mut per_task: BTreeMap<RecognitionTask, (Accumulator, BTreeMap<String, Accumulator>)> =
        BTreeMap::new();
    let mut records = Vec::with_capacity(scored.len());
    let mut errored = 0;
    for (sample, outcome) in &scored {
        let (overall, tags) = per_task.entry(sample.task).or_default();
        overall.add(outcome);
        for tag in &sample.tags {
            tags.entry(tag.clone()).or_default().add(outcome);
        }
        if outcome.is_err() {
            errored += 1;
        }
        records.push(SampleRecord {
            id: sample.id.clone(),
            task: sample.task,
            tags: sample.tags.clone(),
            score: outcome.as_ref().ok().cloned(),
            error: outcome.as_ref().err().cloned(),
        });
    }
    let tasks = per_task
        .into_iter()
        .map(|(task, (overall, tags))| {
            (
                task,
                TaskReport {
                    metric: metric_name(task),
                    overall: overall.finish(),
                    tags: tags.into_iter().map(|(k, a)| (k, a.finish())).collect(),
                },
            )
        })
        .collect();
    EvalReport {
        samples: scored.len(),
        errored,
        tasks,
        records,
    }
}

/// Load every sample listed in a manifest. Unreadable prediction or
/// ground-truth files become per-sample errors, not manifest errors.
fn load_manifest(manifest: &Path) -> Result<Vec<(EvalSample, Option<String>)>, ManifestError> {
    let text = fs::read_to_string(manifest).map_err(|source| ManifestError::Io {
        path: manifest.display().to_string(),
        source,
    })?;
    let base = manifest.parent().unwrap_or(Path::new("."));
    let mut out = Vec::new();
    let mut ids = std::collections::HashSet::new();
    for (i, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let entry: ManifestLine = serde_json::from_str(line).map_err(|e| ManifestError::BadLine {
            line: i + 1,
            detail: e.to_string(),
        })?;
        if !ids.insert(entry.id.clone()) {
            return Err(ManifestError::DuplicateId {
                line: i + 1,
                id: entry.id,
            });
        }
        let read = |p: &Path| {
            let full = base.join(p);
            fs::read_to_string(&full).map_err(|e| format!("{}: {e}", full.display()))
        };
        let (pred, gt) = (read(&entry.pred), read(&entry.gt));
        let load_error = pred.as_ref().err().or(gt.as_ref().err()).cloned();
        out.push((
            EvalSample {
                id: entry.id,
                task: entry.task,
                tags: entry.tags,
                prediction: pred.unwrap_or_default(),
                ground_truth: gt.unwrap_or_default(),
            },
            load_error,
        ));
    }
    if out.is_empty() {
        return Err(ManifestError::Empty(manifest.display().to_string()));
    }
    Ok(out)
}

/// Evaluate every sample in `manifest`.
pub fn evaluate_corpus(manifest: impl AsRef<Path>) -> Result<EvalReport, ManifestError> {
    let loaded = load_manifest(manifest.as_ref())?;
    let (ok, failed): (Vec<_>, Vec<_>) = loaded.into_iter().partition(|(_, e)| e.is_none());
    let samples: Vec<EvalSample> = ok.into_iter().map(|(s, _)| s).collect();
    let mut report = evaluate_samples(&samples);
    if failed.is_empty() {
        return Ok(report);
    }
    // fold load failures in as errored samples
    for (sample, err) in failed {
        let entry = report.tasks.entry(sample.task).or_insert_with(|| TaskReport {
            metric: metric_name(sample.task),
            overall: Aggregate::default(),
            tags: BTreeMap::new(),
        });
        entry.overall.errored += 1;
        for tag in &sample.tags {
            entry.tags.entry(tag.clone()).or_default().errored += 1;
        }
        report.errored += 1;
        report.samples += 1;
        report.records.push(SampleRecord {
            id: sample.id,
            task: sample.task,
            tags: sample.tags,
            score: None,
            error: err,
        });
    }
    report.records.sort_by(|a, b| a.id.cmp(&b.id));
    Ok(report)
}
