//! Reference implementations and generators shared by the integration tests.
//! Each oracle is written from the metric's definition and deliberately
//! avoids the library's own code paths.

#![allow(dead_code)]

use std::collections::HashMap;
use std::sync::OnceLock;

use docparse::domain::{BBox, Category, LayoutElement};
use docparse::metrics::ChartTriple;
use docparse::otsl::OtslToken;
use rand::seq::SliceRandom;
use rand::Rng;
use regex::Regex;

// ---------------------------------------------------------------- strings

/// Full-matrix Levenshtein over Unicode scalar values.
pub fn dp_levenshtein(a: &str, b: &str) -> usize {
    let a: Vec<char> = a.chars().collect();
    let b: Vec<char> = b.chars().collect();
    let mut d = vec![vec![0usize; b.len() + 1]; a.len() + 1];
    for (i, row) in d.iter_mut().enumerate() {
        row[0] = i;
    }
    for j in 0..=b.len() {
        d[0][j] = j;
    }
    for i in 1..=a.len() {
        for j in 1..=b.len() {
            let sub = d[i - 1][j - 1] + usize::from(a[i - 1] != b[j - 1]);
            d[i][j] = sub.min(d[i - 1][j] + 1).min(d[i][j - 1] + 1);
        }
    }
    d[a.len()][b.len()]
}

pub fn dp_ned(a: &str, b: &str) -> f64 {
    let n = a.chars().count().max(b.chars().count());
    if n == 0 {
        0.0
    } else {
        dp_levenshtein(a, b) as f64 / n as f64
    }
}

/// Random string over a mix of ASCII, accented, CJK, emoji and combining marks.
pub fn random_unicode(rng: &mut impl Rng, max_len: usize) -> String {
    const POOL: &[char] = &[
        'a', 'b', 'c', 'x', ' ', 'é', 'ß', 'Ω', '中', '文', '字', '😀', '🚀', '\u{301}', 'ا', 'ب', '\n',
    ];
    let len = rng.gen_range(0..=max_len);
    (0..len)
        .map(|_| {
            if rng.gen_bool(0.1) {
                char::from_u32(rng.gen_range(0x20..0x2FFF)).unwrap_or('?')
            } else {
                *POOL.choose(rng).unwrap()
            }
        })
        .collect()
}

// ---------------------------------------------------------------- BLEU

fn latex_token_re() -> &'static Regex {
    static RE: OnceLock<Regex> = OnceLock::new();
    RE.get_or_init(|| Regex::new(r"\\[A-Za-z]+|\S").unwrap())
}

pub fn reference_tokens(s: &str) -> Vec<String> {
    latex_token_re().find_iter(s).map(|m| m.as_str().to_string()).collect()
}

/// BLEU-4, uniform weights, add-one smoothing on every order, standard
/// brevity penalty. Counts n-grams by direct window comparison.
pub fn reference_bleu(pred: &str, gt: &str) -> f64 {
    let h = reference_tokens(pred);
    let r = reference_tokens(gt);
    if h.is_empty() {
        return 0.0;
    }
    let mut log_sum = 0.0;
    for n in 1..=4usize {
        let hyp_grams: Vec<&[String]> = if h.len() >= n { h.windows(n).collect() } else { vec![] };
        let ref_grams: Vec<&[String]> = if r.len() >= n { r.windows(n).collect() } else { vec![] };
        let mut matched = 0usize;
        let mut seen: Vec<&[String]> = Vec::new();
        for g in &hyp_grams {
            if seen.contains(g) {
                continue;
            }
            seen.push(g);
            let in_hyp = hyp_grams.iter().filter(|x| *x == g).count();
            let in_ref = ref_grams.iter().filter(|x| *x == g).count();
            matched += in_hyp.min(in_ref);
        }
        let p = (matched as f64 + 1.0) / (hyp_grams.len() as f64 + 1.0);
        log_sum += p.ln() / 4.0;
    }
    let (c, rl) = (h.len() as f64, r.len() as f64);
    let bp = if c > rl { 1.0 } else { (1.0 - rl / c).exp() };
    bp * log_sum.exp()
}

pub fn random_formula(rng: &mut impl Rng) -> String {
    const PIECES: &[&str] = &[
        "\\frac", "\\alpha", "\\beta", "\\sum", "\\int", "{", "}", "x", "y", "2", "^", "_", "+", "-",
        "=", "(", ")", "\\cdot", " ",
    ];
    let len = rng.gen_range(1..20);
    (0..len).map(|_| *PIECES.choose(rng).unwrap()).collect::<Vec<_>>().join(" ")
}

// ---------------------------------------------------------------- RMS-F1

fn number(s: &str) -> Option<f64> {
    let s: String = s.chars().filter(|c| !matches!(c, '%' | ',')).collect();
    s.trim().parse::<f64>().ok().filter(|v| v.is_finite())
}

pub fn reference_similarity(p: &ChartTriple, t: &ChartTriple) -> f64 {
    let key_sim = 1.0 - dp_ned(&format!("{} {}", p.row, p.col), &format!("{} {}", t.row, t.col));
    let val_sim = match (number(&p.value), number(&t.value)) {
        (Some(a), Some(b)) if b != 0.0 => 1.0 - ((a - b).abs() / b.abs()).min(1.0),
        (Some(a), Some(b)) => f64::from(u8::from(a == b)),
        _ => 1.0 - dp_ned(&p.value, &t.value),
    };
    key_sim * val_sim
}

fn permutations(n: usize) -> Vec<Vec<usize>> {
    if n == 0 {
        return vec![vec![]];
    }
    let mut out = Vec::new();
    for p in permutations(n - 1) {
        for pos in 0..=p.len() {
            let mut q = p.clone();
            q.insert(pos, n - 1);
            out.push(q);
        }
    }
    out
}

pub fn all_permutations(n: usize) -> Vec<Vec<usize>> {
    permutations(n)
}

/// Best one-to-one total similarity by trying every permutation of the
/// padded square matrix.
pub fn exhaustive_assignment(pred: &[ChartTriple], gt: &[ChartTriple]) -> f64 {
    let n = pred.len().max(gt.len());
    let w = |i: usize, j: usize| {
        if i < pred.len() && j < gt.len() {
            reference_similarity(&pred[i], &gt[j])
        } else {
            0.0
        }
    };
    permutations(n)
        .iter()
        .map(|perm| perm.iter().enumerate().map(|(i, &j)| w(i, j)).sum::<f64>())
        .fold(0.0, f64::max)
}

/// (precision, recall, f1) from the exhaustive assignment over the distinct
/// triples of each side.
pub fn reference_rms_f1(pred: &[ChartTriple], gt: &[ChartTriple]) -> (f64, f64, f64) {
    let dedup = |v: &[ChartTriple]| {
        let mut out: Vec<ChartTriple> = Vec::new();
        for t in v {
            if !out.iter().any(|o| o.row == t.row && o.col == t.col && o.value == t.value) {
                out.push(t.clone());
            }
        }
        out
    };
    let (pred, gt) = (&dedup(pred)[..], &dedup(gt)[..]);
    if pred.is_empty() && gt.is_empty() {
        return (1.0, 1.0, 1.0);
    }
    let s = exhaustive_assignment(pred, gt);
    let p = if pred.is_empty() { 0.0 } else { s / pred.len() as f64 };
    let r = if gt.is_empty() { 0.0 } else { s / gt.len() as f64 };
    let f = if p + r == 0.0 { 0.0 } else { 2.0 * p * r / (p + r) };
    (p, r, f)
}

pub fn random_triples(rng: &mut impl Rng, max: usize) -> Vec<ChartTriple> {
    const ROWS: &[&str] = &["North", "South", "East", "Nord"];
    const COLS: &[&str] = &["Q1", "Q2", "2023", "Q3"];
    const VALUES: &[&str] = &["5", "7", "10", "0", "12%", "1,000", "n/a", "high", "-3.5", "100"];
    let n = rng.gen_range(0..=max);
    (0..n)
        .map(|_| {
            ChartTriple::new(
                ROWS.choose(rng).unwrap(),
                COLS.choose(rng).unwrap(),
                VALUES.choose(rng).unwrap(),
            )
        })
        .collect()
}

// ---------------------------------------------------------------- OTSL

/// Rows of a random valid grid: rectangles are placed greedily in row-major
/// order over free cells.
pub fn random_grid_rows(rng: &mut impl Rng, max_rows: usize, max_cols: usize) -> Vec<Vec<OtslToken>> {
    const WORDS: &[&str] = &["a", "b", "Total", "x<y", "A&B", "q\"t", "12", "3.5", "名", "r c"];
    let rows = rng.gen_range(1..=max_rows);
    let cols = rng.gen_range(1..=max_cols);
    let mut grid: Vec<Vec<Option<OtslToken>>> = vec![vec![None; cols]; rows];
    for r in 0..rows {
        for c in 0..cols {
            if grid[r][c].is_some() {
                continue;
            }
            // widest free run to the right, then how far down it stays free
            let mut max_w = 0;
            while c + max_w < cols && grid[r][c + max_w].is_none() {
                max_w += 1;
            }
            let w = if rng.gen_bool(0.3) { rng.gen_range(1..=max_w) } else { 1 };
            let mut max_h = 0;
            while r + max_h < rows && (c..c + w).all(|cc| grid[r + max_h][cc].is_none()) {
                max_h += 1;
            }
            let h = if rng.gen_bool(0.3) { rng.gen_range(1..=max_h) } else { 1 };
            for (dr, row) in grid.iter_mut().skip(r).take(h).enumerate() {
                for (dc, slot) in row.iter_mut().skip(c).take(w).enumerate() {
                    *slot = Some(match (dr, dc) {
                        (0, 0) => {
                            if rng.gen_bool(0.15) {
                                OtslToken::Ecel
                            } else {
                                OtslToken::Fcel(WORDS.choose(rng).unwrap().to_string())
                            }
                        }
                        (0, _) => OtslToken::Lcel,
                        (_, 0) => OtslToken::Ucel,
                        _ => OtslToken::Xcel,
                    });
                }
            }
        }
    }
    grid.into_iter()
        .map(|row| row.into_iter().map(|t| t.unwrap()).collect())
        .collect()
}

pub fn rows_to_stream(rows: &[Vec<OtslToken>]) -> Vec<OtslToken> {
    let mut out = Vec::new();
    for row in rows {
        out.extend(row.iter().cloned());
        out.push(OtslToken::NewLine);
    }
    out
}

/// Legality of a token stream, checked by tiling: every cell must belong to
/// exactly one rectangle whose shape is spelled out by its tokens.
pub fn otsl_is_legal(stream: &[OtslToken]) -> bool {
    let mut rows: Vec<Vec<&OtslToken>> = vec![Vec::new()];
    for t in stream {
        if *t == OtslToken::NewLine {
            rows.push(Vec::new());
        } else {
            rows.last_mut().unwrap().push(t);
        }
    }
    if stream.last() == Some(&OtslToken::NewLine) {
        rows.pop();
    }
    if rows.is_empty() || rows.iter().any(Vec::is_empty) {
        return false;
    }
    let cols = rows[0].len();
    if rows.iter().any(|r| r.len() != cols) {
        return false;
    }
    let n = rows.len();
    let mut owner = vec![vec![false; cols]; n];
    for r in 0..n {
        for c in 0..cols {
            let is_anchor = matches!(rows[r][c], OtslToken::Fcel(_) | OtslToken::Ecel);
            if !is_anchor {
                if !owner[r][c] {
                    return false;
                }
                continue;
            }
            if owner[r][c] {
                return false;
            }
            let w = 1 + rows[r][c + 1..].iter().take_while(|t| ***t == OtslToken::Lcel).count();
            let h = 1 + (r + 1..n).take_while(|&rr| *rows[rr][c] == OtslToken::Ucel).count();
            for (rr, row) in rows.iter().enumerate().skip(r).take(h) {
                for (cc, tok) in row.iter().enumerate().skip(c).take(w) {
                    let want = match (rr == r, cc == c) {
                        (true, true) => None,
                        (true, false) => Some(OtslToken::Lcel),
                        (false, true) => Some(OtslToken::Ucel),
                        (false, false) => Some(OtslToken::Xcel),
                    };
                    if owner[rr][cc] || want.is_some_and(|w| **tok != w) {
                        return false;
                    }
                    owner[rr][cc] = true;
                }
            }
        }
    }
    true
}

/// Every stream reachable from `stream` by substituting or deleting one token.
pub fn single_token_mutations(stream: &[OtslToken]) -> Vec<Vec<OtslToken>> {
    let kinds = [
        OtslToken::Fcel("m".into()),
        OtslToken::Ecel,
        OtslToken::Lcel,
        OtslToken::Ucel,
        OtslToken::Xcel,
        OtslToken::NewLine,
    ];
    let mut out = Vec::new();
    for i in 0..stream.len() {
        for k in &kinds {
            if std::mem::discriminant(k) != std::mem::discriminant(&stream[i]) {
                let mut m = stream.to_vec();
                m[i] = k.clone();
                out.push(m);
            }
        }
        let mut d = stream.to_vec();
        d.remove(i);
        out.push(d);
    }
    out
}

// ---------------------------------------------------------------- TEDS

#[derive(Debug, Clone, PartialEq)]
pub enum Label {
    Table,
    Row,
    Cell(usize, usize, String),
}

#[derive(Debug, Clone, PartialEq)]
pub struct Tree {
    pub label: Label,
    pub kids: Vec<Tree>,
}

impl Tree {
    pub fn size(&self) -> usize {
        1 + self.kids.iter().map(Tree::size).sum::<usize>()
    }
}

/// Tree of a canonical table HTML string, read with regexes.
pub fn tree_from_html(html: &str) -> Tree {
    static ROW: OnceLock<Regex> = OnceLock::new();
    static CELL: OnceLock<Regex> = OnceLock::new();
    let row_re = ROW.get_or_init(|| Regex::new(r"<tr>(.*?)</tr>").unwrap());
    let cell_re = CELL.get_or_init(|| {
        Regex::new(r#"<td(?: rowspan="(\d+)")?(?: colspan="(\d+)")?>(.*?)</td>"#).unwrap()
    });
    let unescape = |s: &str| {
        s.replace("&lt;", "<")
            .replace("&gt;", ">")
            .replace("&quot;", "\"")
            .replace("&amp;", "&")
    };
    let rows = row_re
        .captures_iter(html)
        .map(|row| Tree {
            label: Label::Row,
            kids: cell_re
                .captures_iter(&row[1])
                .map(|c| Tree {
                    label: Label::Cell(
                        c.get(1).map_or(1, |m| m.as_str().parse().unwrap()),
                        c.get(2).map_or(1, |m| m.as_str().parse().unwrap()),
                        unescape(&c[3]),
                    ),
                    kids: vec![],
                })
                .collect(),
        })
        .collect();
    Tree {
        label: Label::Table,
        kids: rows,
    }
}

fn relabel(a: &Label, b: &Label, structure_only: bool) -> f64 {
    match (a, b) {
        (Label::Table, Label::Table) | (Label::Row, Label::Row) => 0.0,
        (Label::Cell(r1, c1, t1), Label::Cell(r2, c2, t2)) if r1 == r2 && c1 == c2 => {
            if structure_only {
                0.0
            } else {
                dp_ned(t1, t2)
            }
        }
        _ => 1.0,
    }
}

fn forest_size(f: &[Tree]) -> usize {
    f.iter().map(Tree::size).sum()
}

/// Ordered forest edit distance by exhaustive recursive decomposition on the
/// rightmost roots, memoized on the forests themselves.
pub fn forest_distance(f: &[Tree], g: &[Tree], so: bool, memo: &mut HashMap<String, f64>) -> f64 {
    if f.is_empty() {
        return forest_size(g) as f64;
    }
    if g.is_empty() {
        return forest_size(f) as f64;
    }
    let key = format!("{f:?}|{g:?}");
    if let Some(&v) = memo.get(&key) {
        return v;
    }
    let (v, f_rest) = f.split_last().unwrap();
    let (w, g_rest) = g.split_last().unwrap();
    let mut f_minus_v = f_rest.to_vec();
    f_minus_v.extend(v.kids.iter().cloned());
    let mut g_minus_w = g_rest.to_vec();
    g_minus_w.extend(w.kids.iter().cloned());

    let delete = forest_distance(&f_minus_v, g, so, memo) + 1.0;
    let insert = forest_distance(f, &g_minus_w, so, memo) + 1.0;
    let matched = forest_distance(&v.kids, &w.kids, so, memo)
        + forest_distance(f_rest, g_rest, so, memo)
        + relabel(&v.label, &w.label, so);
    let best = delete.min(insert).min(matched);
    memo.insert(key, best);
    best
}

pub fn reference_teds(pred_html: &str, gt_html: &str, structure_only: bool) -> f64 {
    let a = tree_from_html(pred_html);
    let b = tree_from_html(gt_html);
    let d = forest_distance(
        std::slice::from_ref(&a),
        std::slice::from_ref(&b),
        structure_only,
        &mut HashMap::new(),
    );
    // TEDS is defined on [0, 1]; large edit scripts can exceed the larger tree
    (1.0 - d / a.size().max(b.size()) as f64).max(0.0)
}

// ---------------------------------------------------------------- layout

pub fn element(id: usize, x0: f64, y0: f64, x1: f64, y1: f64) -> LayoutElement {
    LayoutElement::new(id, 0, BBox::new(x0, y0, x1, y1).unwrap(), Category::Text, 0.9).unwrap()
}

pub fn random_elements(rng: &mut impl Rng, n: usize) -> Vec<LayoutElement> {
    (0..n)
        .map(|i| {
            let x0 = rng.gen_range(0.0..500.0);
            let y0 = rng.gen_range(0.0..700.0);
            element(i, x0, y0, x0 + rng.gen_range(1.0..100.0), y0 + rng.gen_range(1.0..100.0))
        })
        .collect()
}

/// Relation matrix that encodes `order` (order[k] is read k-th), with random
/// confidences above one half.
pub fn tournament_for(order: &[usize], rng: &mut impl Rng) -> Vec<Vec<f64>> {
    let n = order.len();
    let mut rank = vec![0; n];
    for (k, &i) in order.iter().enumerate() {
        rank[i] = k;
    }
    let mut s = vec![vec![0.5; n]; n];
    for i in 0..n {
        for j in i + 1..n {
            let p: f64 = rng.gen_range(0.51..=1.0);
            let (a, b) = if rank[i] < rank[j] { (p, 1.0 - p) } else { (1.0 - p, p) };
            s[i][j] = a;
            s[j][i] = b;
        }
    }
    s
}

/// Order a consistent tournament by brute force: the permutation in which
/// every element precedes all later ones.
pub fn brute_force_order(s: &[Vec<f64>]) -> Vec<usize> {
    let n = s.len();
    permutations(n)
        .into_iter()
        .find(|p| (0..n).all(|a| (a + 1..n).all(|b| s[p[a]][p[b]] > 0.5)))
        .expect("consistent tournament has a topological order")
}

// ---------------------------------------------------------------- pipeline

pub mod synthetic {
    use std::path::Path;
    use std::sync::Arc;
    use std::time::Duration;

    use docparse::domain::{BBox, Category, LayoutElement};
    use docparse::layout::PageLayout;
    use docparse::pipeline::{Detector, PageImage, PageSource, PipelineError};
    use image::{Rgb, RgbImage};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    pub const PAGE_W: u32 = 96;
    pub const PAGE_H: u32 = 128;

    /// In-memory documents named `docNN`, `pages` each, with a noise image
    /// and three detections per page (text, formula, figure). Sleeps
    /// `per_page` before emitting each page.
    pub struct SyntheticSource {
        pub pages: usize,
        pub per_page: Duration,
    }

    fn seed_of(name: &str, page: usize) -> u64 {
        name.bytes().fold(page as u64 * 7919, |h, b| h.wrapping_mul(31).wrapping_add(b as u64))
    }

    pub fn page_layout(index: usize) -> PageLayout {
        let el = |id, y0: f64, y1: f64, category| {
            LayoutElement::new(id, index, BBox::new(4.0, y0, 92.0, y1).unwrap(), category, 0.9).unwrap()
        };
        PageLayout {
            page_index: index,
            page_width: PAGE_W as f64,
            page_height: PAGE_H as f64,
            elements: vec![
                el(0, 70.0, 100.0, Category::Figure),
                el(1, 4.0, 30.0, Category::Text),
                el(2, 36.0, 60.0, Category::Formula),
            ],
        }
    }

    impl PageSource for SyntheticSource {
        fn load(&self, input: &Path, emit: &mut dyn FnMut(PageImage)) -> Result<usize, PipelineError> {
            let name = input.file_name().unwrap().to_string_lossy().into_owned();
            for p in 0..self.pages {
                std::thread::sleep(self.per_page);
                let mut rng = ChaCha8Rng::seed_from_u64(seed_of(&name, p));
                let image = RgbImage::from_fn(PAGE_W, PAGE_H, |_, _| Rgb(rng.gen()));
                emit(PageImage {
                    index: p,
                    image: Arc::new(image),
                    layout: Some(page_layout(p)),
                });
            }
            Ok(self.pages)
        }
    }

    /// Fixture detector with a fixed per-page latency.
    pub struct SlowDetector(pub Duration);

    impl Detector for SlowDetector {
        fn detect(&self, input: &str, page: &PageImage) -> Result<PageLayout, PipelineError> {
            std::thread::sleep(self.0);
            docparse::pipeline::FixtureDetector.detect(input, page)
        }
    }
}
