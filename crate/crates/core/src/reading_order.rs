//! Pairwise precedence scoring and win-accumulation decoding.
//!
//! A [`RelationMatrix`] holds `s[i][j]`, the score that element `i` is read
//! before element `j`. It can come from a learned relation head (loaded from
//! a fixture) or from [`geometric_relation_scores`]. [`decode_reading_order`]
//! turns any such matrix into a permutation by counting, for each element,
//! how many others it beats (`s[i][j] > 0.5`) and sorting by that count.

use std::cmp::Ordering;
use std::fs;
use std::path::Path;

use serde::Deserialize;
use thiserror::Error;

use crate::domain::{x_overlap_ratio, LayoutElement};

const COMPLEMENT_TOLERANCE: f64 = 1e-9;

/// Score the geometric scorer assigns to "i precedes j".
pub const GEOMETRIC_PRECEDES: f64 = 0.95;

#[derive(Debug, Error)]
pub enum OrderError {
    #[error("empty page")]
    EmptyPage,
    #[error("relation matrix has {matrix} rows but {elements} elements were given")]
    DimensionMismatch { matrix: usize, elements: usize },
    #[error("relation matrix is not {n}x{n}")]
    NotSquare { n: usize },
    #[error("relation entry s[{i}][{j}] = {value} is outside [0, 1]")]
    OutOfRange { i: usize, j: usize, value: f64 },
    #[error("relation diagonal s[{i}][{i}] = {value}, expected 0.5")]
    Diagonal { i: usize, value: f64 },
    #[error("s[{i}][{j}] + s[{j}][{i}] = {sum}, expected 1")]
    NotComplementary { i: usize, j: usize, sum: f64 },
    #[error("reading {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("relation fixture is not valid JSON: {0}")]
    Json(#[from] serde_json::Error),
}

/// Square matrix of pairwise precedence scores.
#[derive(Debug, Clone, PartialEq)]
pub struct RelationMatrix {
    n: usize,
    s: Vec<f64>,
}

impl RelationMatrix {
    pub fn new(rows: Vec<Vec<f64>>) -> Result<Self, OrderError> {
        let n = rows.len();
        if rows.iter().any(|r| r.len() != n) {
            return Err(OrderError::NotSquare { n });
        }
        let s: Vec<f64> = rows.into_iter().flatten().collect();
        let m = RelationMatrix { n, s };
        m.validate()?;
        Ok(m)
    }

    fn validate(&self) -> Result<(), OrderError> {
        for i in 0..self.n {
            for j in 0..self.n {
                let v = self.get(i, j);
                if !(0.0..=1.0).contains(&v) {
                    return Err(OrderError::OutOfRange { i, j, value: v });
                }
                if i == j {
                    if v != 0.5 {
                        return Err(OrderError::Diagonal { i, value: v });
                    }
                    continue;
                }
                let sum = v + self.get(j, i);
                if (sum - 1.0).abs() > COMPLEMENT_TOLERANCE {
                    return Err(OrderError::NotComplementary { i, j, sum });
                }
            }
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.n
    }

    pub fn is_empty(&self) -> bool {
        self.n == 0
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.s[i * self.n + j]
    }

    pub fn rows(&self) -> Vec<Vec<f64>> {
        self.s.chunks(self.n.max(1)).take(self.n).map(<[f64]>::to_vec).collect()
    }

    /// Whether `i` is read before `j` after thresholding at 0.5.
    pub fn precedes(&self, i: usize, j: usize) -> bool {
        self.get(i, j) > 0.5
    }

    /// Apply `f` to every off-diagonal entry. The caller is responsible for
    /// keeping the result complement-consistent; it is re-validated.
    pub fn map(&self, f: impl Fn(f64) -> f64) -> Result<Self, OrderError> {
        let mut s = self.s.clone();
        for i in 0..self.n {
            for j in 0..self.n {
                if i != j {
                    s[i * self.n + j] = f(self.get(i, j));
                }
            }
        }
        let m = RelationMatrix { n: self.n, s };
        m.validate()?;
        Ok(m)
    }
}

#[derive(Deserialize)]
struct RelationFixture {
    n: usize,
    s: Vec<Vec<f64>>,
}

/// Parse a relation fixture `{"n": int, "s": [[...]]}`.
pub fn parse_relation_matrix(text: &str) -> Result<RelationMatrix, OrderError> {
    let f: RelationFixture = serde_json::from_str(text)?;
    if f.s.len() != f.n {
        return Err(OrderError::NotSquare { n: f.n });
    }
    RelationMatrix::new(f.s)
}

pub fn load_relation_matrix(path: impl AsRef<Path>) -> Result<RelationMatrix, OrderError> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|source| OrderError::Io {
        path: path.display().to_string(),
        source,
    })?;
    parse_relation_matrix(&text)
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct OrderResult {
    /// `permutation[k]` is the index (into the element list) read k-th.
    pub permutation: Vec<usize>,
    pub win_counts: Vec<usize>,
}

fn geometric_key(a: &LayoutElement, b: &LayoutElement) -> Ordering {
    a.bbox
        .y0()
        .total_cmp(&b.bbox.y0())
        .then(a.bbox.x0().total_cmp(&b.bbox.x0()))
        .then(a.id.cmp(&b.id))
}

/// Model-free relation scores: column grouping by horizontal overlap, then
/// top-to-bottom within each column.
pub fn geometric_relation_scores(
    elements: &[LayoutElement],
    column_overlap_threshold: f64,
) -> Result<RelationMatrix, OrderError> {
    let n = elements.len();
    if n == 0 {
        return Err(OrderError::EmptyPage);
    }

    // transitive grouping into columns (union-find)
    let mut parent: Vec<usize> = (0..n).collect();
    fn find(parent: &mut [usize], mut x: usize) -> usize {
        while parent[x] != x {
            parent[x] = parent[parent[x]];
            x = parent[x];
        }
        x
    }
    for i in 0..n {
        for j in i + 1..n {
            if x_overlap_ratio(&elements[i].bbox, &elements[j].bbox) >= column_overlap_threshold {
                let (ri, rj) = (find(&mut parent, i), find(&mut parent, j));
                if ri != rj {
                    parent[ri.max(rj)] = ri.min(rj);
                }
            }
        }
    }
    let roots: Vec<usize> = (0..n).map(|i| find(&mut parent, i)).collect();

    // columns ranked by leftmost x0; the smallest member index breaks ties
    let mut columns: Vec<(f64, usize)> = Vec::new();
    for (i, &r) in roots.iter().enumerate() {
        let x0 = elements[i].bbox.x0();
        match columns.iter_mut().find(|(_, root)| *root == r) {
            Some(col) => col.0 = col.0.min(x0),
            None => columns.push((x0, r)),
        }
    }
    columns.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
    let column_rank = |i: usize| columns.iter().position(|c| c.1 == roots[i]).unwrap();

    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| {
        column_rank(a)
            .cmp(&column_rank(b))
            .then_with(|| geometric_key(&elements[a], &elements[b]))
    });
    let mut rank = vec![0usize; n];
    for (pos, &i) in order.iter().enumerate() {
        rank[i] = pos;
    }

    let rows = (0..n)
        .map(|i| {
            (0..n)
                .map(|j| match rank[i].cmp(&rank[j]) {
                    Ordering::Less => GEOMETRIC_PRECEDES,
                    Ordering::Greater => 1.0 - GEOMETRIC_PRECEDES,
                    Ordering::Equal => 0.5,
                })
                .collect()
        })
        .collect();
    RelationMatrix::new(rows)
}

/// Win-accumulation decode. Elements are ranked by how many others they
/// strictly beat; equal counts fall back to (y0, x0, id).
pub fn decode_reading_order(
    m: &RelationMatrix,
    elements: &[LayoutElement],
) -> Result<OrderResult, OrderError> {
    if m.len() != elements.len() {
        return Err(OrderError::DimensionMismatch {
            matrix: m.len(),
            elements: elements.len(),
        });
    }
    let n = m.len();
    let win_counts: Vec<usize> = (0..n)
        .map(|i| (0..n).filter(|&j| j != i && m.precedes(i, j)).count())
        .collect();
    let mut permutation: Vec<usize> = (0..n).collect();
    permutation.sort_by(|&a, &b| {
        win_counts[b]
            .cmp(&win_counts[a])
            .then_with(|| geometric_key(&elements[a], &elements[b]))
    });
    Ok(OrderResult {
        permutation,
        win_counts,
    })
}

/// True when thresholding at 0.5 gives a strict total order.
pub fn is_consistent_tournament(m: &RelationMatrix) -> bool {
    let n = m.len();
    for i in 0..n {
        for j in 0..n {
            if i != j && m.get(i, j) == 0.5 {
                return false;
            }
        }
    }
    for i in 0..n {
        for j in 0..n {
            if i == j || !m.precedes(i, j) {
                continue;
            }
            for k in 0..n {
                if k != i && k != j && m.precedes(j, k) && !m.precedes(i, k) {
                    return false;
                }
            }
        }
    }
    true
}
