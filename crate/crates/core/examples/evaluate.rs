//! Score a handful of predictions with every element metric and aggregate
//! them into a corpus report.
//!
//!     cargo run --example evaluate
//!     cargo run --example evaluate -- path/to/manifest.jsonl

use docparse::metrics::{
    bleu, chart_triples, evaluate_corpus, evaluate_samples, normalized_edit_distance, rms_f1, teds,
    EvalSample,
};
use docparse::recognizer::RecognitionTask;

fn sample(id: &str, task: RecognitionTask, tag: &str, prediction: &str, ground_truth: &str) -> EvalSample {
    EvalSample {
        id: id.into(),
        task,
        tags: vec![tag.into()],
        prediction: prediction.into(),
        ground_truth: ground_truth.into(),
    }
}

fn main() {
    if let Some(manifest) = std::env::args().nth(1) {
        let report = evaluate_corpus(&manifest).unwrap();
        print!("{}", report.to_json());
        return;
    }

    println!("edit distance: {:.3}", normalized_edit_distance("recieve the parcel", "receive the parcel"));
    println!("BLEU:          {:.3}", bleu("\\frac{a}{b} + c", "\\frac{a}{b} + d"));

    let gt = "<table><tr><td>A</td><td>B</td></tr><tr><td>1</td><td>2</td></tr></table>";
    let pred = "<table><tr><td>A</td><td>B</td></tr><tr><td>1</td><td>3</td></tr></table>";
    println!("TEDS:          {:.3}", teds(pred, gt, false).unwrap());
    println!("TEDS-S:        {:.3}", teds(pred, gt, true).unwrap());

    let truth = chart_triples("| | Q1 | Q2 |\n|---|---|---|\n| North | 10 | 12 |\n| South | 7 | 9 |").unwrap();
    let guess = chart_triples("| | Q1 | Q2 |\n|---|---|---|\n| North | 10 | 11 |\n| Sud | 7 | 9 |").unwrap();
    let pr = rms_f1(&guess, &truth);
    println!("RMS-F1:        p={:.3} r={:.3} f1={:.3}", pr.precision, pr.recall, pr.f1);

    let report = evaluate_samples(&[
        sample("t1", RecognitionTask::Ocr, "printed", "Hello world", "Hello world"),
        sample("t2", RecognitionTask::Ocr, "handwritten", "He1lo wor1d", "Hello world"),
        sample("f1", RecognitionTask::Formula, "inline", "\\(x^2 + y\\)", "x^2 + y^2"),
        sample("t3", RecognitionTask::Table, "simple", "fcel{A} fcel{B} nl", gt),
    ]);
    println!();
    for (task, r) in &report.tasks {
        println!("{:<8} {:<14} mean={:?} errored={}", task.to_string(), r.metric, r.overall.mean, r.overall.errored);
    }
}
