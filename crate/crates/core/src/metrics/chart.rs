//! Chart data-table scoring: pipe tables become (row, column, value)
//! triples, which are matched one-to-one by maximum total similarity.

use thiserror::Error;

use crate::metrics::edit_distance::normalized_edit_distance;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ChartTableError {
    #[error("chart table needs a header row and a separator row")]
    MissingSeparator,
    #[error("chart table row {row} has {found} cells, header has {expected}")]
    TooManyCells {
        row: usize,
        found: usize,
        expected: usize,
    },
    #[error("chart table is empty")]
    Empty,
}

/// Header row and body rows of a Markdown pipe table, cells trimmed.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PipeTable {
    pub header: Vec<String>,
    pub body: Vec<Vec<String>>,
}

fn split_row(line: &str) -> Vec<String> {
    let line = line.trim();
    let line = line.strip_prefix('|').unwrap_or(line);
    let line = match line.strip_suffix('|') {
        Some(rest) if !rest.ends_with('\\') => rest,
        _ => line,
    };
    let mut cells = Vec::new();
    let mut cur = String::new();
    let mut chars = line.chars().peekable();
    while let Some(ch) = chars.next() {
        match ch {
            '\\' if chars.peek() == Some(&'|') => {
                cur.push('|');
                chars.next();
            }
            '|' => cells.push(std::mem::take(&mut cur).trim().to_string()),
            _ => cur.push(ch),
        }
    }
    cells.push(cur.trim().to_string());
    cells
}

fn is_separator(cells: &[String]) -> bool {
    !cells.is_empty()
        && cells.iter().all(|c| {
            let c = c.trim();
            let inner = c.strip_prefix(':').unwrap_or(c);
            let inner = inner.strip_suffix(':').unwrap_or(inner);
            !inner.is_empty() && inner.chars().all(|ch| ch == '-')
        })
}

/// Parse a pipe table: header line, separator line, then body rows.
/// Blank lines are skipped.
pub fn parse_pipe_table(markdown: &str) -> Result<PipeTable, ChartTableError> {
    let mut lines = markdown.lines().filter(|l| !l.trim().is_empty());
    let header = split_row(lines.next().ok_or(ChartTableError::Empty)?);
    let sep = lines.next().map(split_row).ok_or(ChartTableError::MissingSeparator)?;
    if !is_separator(&sep) {
        return Err(ChartTableError::MissingSeparator);
    }
    let mut body = Vec::new();
    for (i, line) in lines.enumerate() {
        let cells = split_row(line);
        if cells.len() > header.len() {
            return Err(ChartTableError::TooManyCells {
                row: i,
                found: cells.len(),
                expected: header.len(),
            });
        }
        body.push(cells);
    }
    Ok(PipeTable { header, body })
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ChartTriple {
    pub row: String,
    pub col: String,
    pub value: String,
}

impl ChartTriple {
    pub fn new(row: &str, col: &str, value: &str) -> Self {
        Self {
            row: row.trim().to_string(),
            col: col.trim().to_string(),
            value: value.trim().to_string(),
        }
    }
}

/// One triple per body cell: the row's first cell and the column's header.
pub fn chart_triples(markdown_table: &str) -> Result<Vec<ChartTriple>, ChartTableError> {
    let table = parse_pipe_table(markdown_table)?;
    let mut out = Vec::new();
    for row in &table.body {
        let Some((row_header, values)) = row.split_first() else {
            continue;
        };
        for (k, value) in values.iter().enumerate() {
            out.push(ChartTriple::new(row_header, &table.header[k + 1], value));
        }
    }
    Ok(out)
}

/// Parse a chart value after removing `%`, `,` and surrounding whitespace.
pub fn parse_chart_number(s: &str) -> Option<f64> {
    let cleaned: String = s.chars().filter(|c| *c != '%' && *c != ',').collect();
    cleaned.trim().parse::<f64>().ok().filter(|v| v.is_finite())
}

fn value_similarity(pred: &str, truth: &str) -> f64 {
    match (parse_chart_number(pred), parse_chart_number(truth)) {
        (Some(p), Some(t)) if t != 0.0 => 1.0 - ((p - t).abs() / t.abs()).min(1.0),
        (Some(p), Some(_)) => {
            if p == 0.0 {
                1.0
            } else {
                0.0
            }
        }
        _ => 1.0 - normalized_edit_distance(pred, truth),
    }
}

fn key(t: &ChartTriple) -> String {
    format!("{} {}", t.row, t.col)
}

/// Similarity of a predicted triple to a ground-truth triple, in [0, 1].
pub fn triple_similarity(pred: &ChartTriple, truth: &ChartTriple) -> f64 {
    let key_sim = 1.0 - normalized_edit_distance(&key(pred), &key(truth));
    key_sim * value_similarity(&pred.value, &truth.value)
}

/// Maximum-weight one-to-one assignment on a rectangular weight matrix.
/// Returns the total weight and, for each row, its assigned column.
pub fn max_weight_assignment(weights: &[Vec<f64>]) -> (f64, Vec<Option<usize>>) {
    let rows = weights.len();
    let cols = weights.first().map_or(0, Vec::len);
    if rows == 0 || cols == 0 {
        return (0.0, vec![None; rows]);
    }
    // Hungarian method with potentials on the padded square cost matrix.
    let n = rows.max(cols);
    let cost = |i: usize, j: usize| -> f64 {
        if i < rows && j < cols {
            -weights[i][j]
        } else {
            0.0
        }
    };
    let inf = f64::INFINITY;
    let mut u = vec![0.0; n + 1];
    let mut v = vec![0.0; n + 1];
    let mut matched_row = vec![0usize; n + 1]; // column j -> row (1-based, 0 = free)
    let mut way = vec![0usize; n + 1];
    for i in 1..=n {
        matched_row[0] = i;
        let mut j0 = 0;
        let mut minv = vec![inf; n + 1];
        let mut used = vec![false; n + 1];
        loop {
            used[j0] = true;
            let i0 = matched_row[j0];
            let mut delta = inf;
            let mut j1 = 0;
            for j in 1..=n {
                if used[j] {
                    continue;
                }
                let cur = cost(i0 - 1, j - 1) - u[i0] - v[j];
                if cur < minv[j] {
                    minv[j] = cur;
                    way[j] = j0;
                }
                if minv[j] < delta {
                    delta = minv[j];
                    j1 = j;
                }
            }
            for j in 0..=n {
                if used[j] {
                    u[matched_row[j]] += delta;
                    v[j] -= delta;
                } else {
                    minv[j] -= delta;
                }
            }
            j0 = j1;
            if matched_row[j0] == 0 {
                break;
            }
        }
        loop {
            let j1 = way[j0];
            matched_row[j0] = matched_row[j1];
            j0 = j1;
            if j0 == 0 {
                break;
            }
        }
    }
    let mut assignment = vec![None; rows];
    let mut total = 0.0;
    for j in 1..=n {
        let i = matched_row[j];
        if i >= 1 && i <= rows && j <= cols {
            assignment[i - 1] = Some(j - 1);
            total += weights[i - 1][j - 1];
        }
    }
    (total, assignment)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PrecisionRecall {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
}

fn distinct(triples: &[ChartTriple]) -> Vec<&ChartTriple> {
    let mut out: Vec<&ChartTriple> = Vec::with_capacity(triples.len());
    for t in triples {
        if !out.contains(&t) {
            out.push(t);
        }
    }
    out
}

/// Matching score between predicted and ground-truth triples. Both sides
/// are treated as sets: exact duplicate triples count once.
pub fn rms_f1(pred: &[ChartTriple], gt: &[ChartTriple]) -> PrecisionRecall {
    let (pred, gt) = (distinct(pred), distinct(gt));
    match (pred.is_empty(), gt.is_empty()) {
        (true, true) => {
            return PrecisionRecall {
                precision: 1.0,
                recall: 1.0,
                f1: 1.0,
            }
        }
        (true, false) | (false, true) => {
            return PrecisionRecall {
                precision: 0.0,
                recall: 0.0,
                f1: 0.0,
            }
        }
        _ => {}
    }
    let weights: Vec<Vec<f64>> = pred
        .iter()
        .map(|p| gt.iter().map(|t| triple_similarity(p, t)).collect())
        .collect();
    let (total, _) = max_weight_assignment(&weights);
    let precision = total / pred.len() as f64;
    let recall = total / gt.len() as f64;
    let f1 = if precision + recall == 0.0 {
        0.0
    } else {
        2.0 * precision * recall / (precision + recall)
    };
    PrecisionRecall {
        precision,
        recall,
        f1,
    }
}
