//! Element-level evaluation: edit distance for text, TEDS for tables,
//! BLEU for formulas and RMS-F1 for charts.

mod bleu;
mod chart;
mod corpus;
mod edit_distance;
mod teds;

pub use bleu::{bleu, bleu_tokens, tokenize_latex};
pub use chart::{
    chart_triples, max_weight_assignment, parse_chart_number, parse_pipe_table, rms_f1,
    triple_similarity, ChartTableError, ChartTriple, PipeTable, PrecisionRecall,
};
pub use corpus::{
    evaluate_corpus, evaluate_samples, metric_name, score_sample, Aggregate, EvalReport,
    EvalSample, ManifestError, SampleRecord, SampleScore, TaskReport,
};
pub use edit_distance::{levenshtein, normalized_edit_distance};
pub use teds::{rename_cost, table_tree, teds, teds_grids, tree_edit_distance, TableNode, TableTree};
