//! Sentence BLEU-4 for LaTeX formulas.

use std::collections::HashMap;

const MAX_ORDER: usize = 4;

/// Split LaTeX into tokens: a backslash followed by ASCII letters is one
/// token (`\frac`), every other non-whitespace character is its own token.
pub fn tokenize_latex(s: &str) -> Vec<&str> {
    let mut out = Vec::new();
    let mut it = s.char_indices().peekable();
    while let Some((start, ch)) = it.next() {
        if ch.is_whitespace() {
            continue;
        }
        let mut end = start + ch.len_utf8();
        if ch == '\\' {
            while let Some(&(k, next)) = it.peek() {
                if !next.is_ascii_alphabetic() {
                    break;
                }
                end = k + 1;
                it.next();
            }
        }
        out.push(&s[start..end]);
    }
    out
}

fn ngram_counts<'a>(tokens: &'a [&'a str], n: usize) -> HashMap<&'a [&'a str], usize> {
    let mut counts = HashMap::new();
    if tokens.len() >= n {
        for w in tokens.windows(n) {
            *counts.entry(w).or_insert(0) += 1;
        }
    }
    counts
}

/// BLEU-4 with uniform weights, brevity penalty and add-one smoothing on
/// every n-gram precision. Returns 0 for an empty prediction.
pub fn bleu(pred: &str, gt: &str) -> f64 {
    let hyp = tokenize_latex(pred);
    let reference = tokenize_latex(gt);
    bleu_tokens(&hyp, &reference)
}

pub fn bleu_tokens(hyp: &[&str], reference: &[&str]) -> f64 {
    if hyp.is_empty() {
        return 0.0;
    }
    let mut log_precision = 0.0;
    for n in 1..=MAX_ORDER {
        let h = ngram_counts(hyp, n);
        let r = ngram_counts(reference, n);
        let matched: usize = h
            .iter()
            .map(|(gram, &c)| c.min(r.get(gram).copied().unwrap_or(0)))
            .sum();
        let total = hyp.len().saturating_sub(n - 1);
        log_precision += ((matched + 1) as f64 / (total + 1) as f64).ln();
    }
    let (c, r) = (hyp.len() as f64, reference.len() as f64);
    let brevity = if c > r { 1.0 } else { (1.0 - r / c).exp() };
    (brevity * (log_precision / MAX_ORDER as f64).exp()).clamp(0.0, 1.0)
}
