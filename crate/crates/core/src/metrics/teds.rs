//! Tree-edit-distance similarity between tables.
//!
//! Both tables are first normalized through [`html_to_grid`], then turned
//! into `table > tr > td` trees. Distances use the Zhang–Shasha keyroot
//! algorithm with unit insert/delete cost.

use crate::metrics::edit_distance::normalized_edit_distance;
use crate::otsl::{html_to_grid, HtmlError, OtslGrid};

#[derive(Debug, Clone, PartialEq)]
pub enum TableNode {
    Table,
    Row,
    Cell {
        rowspan: usize,
        colspan: usize,
        text: String,
    },
}

/// Ordered tree stored as an arena; node 0 is the root.
#[derive(Debug, Clone, PartialEq)]
pub struct TableTree {
    pub nodes: Vec<TableNode>,
    pub children: Vec<Vec<usize>>,
}

impl TableTree {
    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    fn push(&mut self, node: TableNode, parent: Option<usize>) -> usize {
        let id = self.nodes.len();
        self.nodes.push(node);
        self.children.push(Vec::new());
        if let Some(p) = parent {
            self.children[p].push(id);
        }
        id
    }
}

pub fn table_tree(g: &OtslGrid) -> TableTree {
    let mut t = TableTree {
        nodes: Vec::new(),
        children: Vec::new(),
    };
    let root = t.push(TableNode::Table, None);
    let mut regions = g.regions().peekable();
    for r in 0..g.rows() {
        let row = t.push(TableNode::Row, Some(root));
        while let Some(reg) = regions.next_if(|reg| reg.row == r) {
            t.push(
                TableNode::Cell {
                    rowspan: reg.rowspan,
                    colspan: reg.colspan,
                    text: reg.text.unwrap_or("").to_string(),
                },
                Some(row),
            );
        }
    }
    t
}

/// Relabel cost: 0 for identical structural nodes, the cell-text edit
/// distance for cells with matching spans (0 when `structure_only`), 1 otherwise.
pub fn rename_cost(a: &TableNode, b: &TableNode, structure_only: bool) -> f64 {
    match (a, b) {
        (TableNode::Table, TableNode::Table) | (TableNode::Row, TableNode::Row) => 0.0,
        (
            TableNode::Cell {
                rowspan: ra,
                colspan: ca,
                text: ta,
            },
            TableNode::Cell {
                rowspan: rb,
                colspan: cb,
                text: tb,
            },
        ) if ra == rb && ca == cb => {
            if structure_only {
                0.0
            } else {
                normalized_edit_distance(ta, tb)
            }
        }
        _ => 1.0,
    }
}

struct Postorder<'a> {
    labels: Vec<&'a TableNode>,
    /// leftmost leaf descendant, in postorder numbering
    leftmost: Vec<usize>,
    keyroots: Vec<usize>,
}

impl<'a> Postorder<'a> {
    fn new(t: &'a TableTree) -> Self {
        let mut labels = Vec::with_capacity(t.len());
        let mut leftmost = Vec::with_capacity(t.len());
        fn walk<'a>(
            t: &'a TableTree,
            node: usize,
            labels: &mut Vec<&'a TableNode>,
            leftmost: &mut Vec<usize>,
        ) -> usize {
            let mut first_leaf = None;
            for &c in &t.children[node] {
                let l = walk(t, c, labels, leftmost);
                first_leaf.get_or_insert(l);
            }
            let idx = labels.len();
            labels.push(&t.nodes[node]);
            let l = first_leaf.unwrap_or(idx);
            leftmost.push(l);
            l
        }
        if !t.is_empty() {
            walk(t, 0, &mut labels, &mut leftmost);
        }
        let n = labels.len();
        let keyroots = (0..n)
            .filter(|&k| !(k + 1..n).any(|k2| leftmost[k2] == leftmost[k]))
            .collect();
        Postorder {
            labels,
            leftmost,
            keyroots,
        }
    }
}

/// Minimum-cost edit script between two ordered trees.
pub fn tree_edit_distance(a: &TableTree, b: &TableTree, structure_only: bool) -> f64 {
    let pa = Postorder::new(a);
    let pb = Postorder::new(b);
    let (n, m) = (pa.labels.len(), pb.labels.len());
    if n == 0 || m == 0 {
        return (n + m) as f64;
    }
    let mut treedist = vec![vec![0.0f64; m]; n];
    let mut forest = vec![vec![0.0f64; m + 1]; n + 1];

    for &i in &pa.keyroots {
        for &j in &pb.keyroots {
            let (li, lj) = (pa.leftmost[i], pb.leftmost[j]);
            // forest[x][y] covers a[li..li+x) vs b[lj..lj+y)
            let rows = i - li + 1;
            let cols = j - lj + 1;
            forest[0][0] = 0.0;
            for x in 1..=rows {
                forest[x][0] = forest[x - 1][0] + 1.0;
            }
            for y in 1..=cols {
                forest[0][y] = forest[0][y - 1] + 1.0;
            }
            for x in 1..=rows {
                let ai = li + x - 1;
                for y in 1..=cols {
                    let bj = lj + y - 1;
                    let delete = forest[x - 1][y] + 1.0;
                    let insert = forest[x][y - 1] + 1.0;
                    if pa.leftmost[ai] == li && pb.leftmost[bj] == lj {
                        let rename = forest[x - 1][y - 1]
                            + rename_cost(pa.labels[ai], pb.labels[bj], structure_only);
                        let d = delete.min(insert).min(rename);
                        forest[x][y] = d;
                        treedist[ai][bj] = d;
                    } else {
                        let px = pa.leftmost[ai] - li;
                        let py = pb.leftmost[bj] - lj;
                        let subtree = forest[px][py] + treedist[ai][bj];
                        forest[x][y] = delete.min(insert).min(subtree);
                    }
                }
            }
        }
    }
    treedist[n - 1][m - 1]
}

/// `1 - TED / max(|T1|, |T2|)` over normalized table trees.
pub fn teds_grids(pred: &OtslGrid, gt: &OtslGrid, structure_only: bool) -> f64 {
    let (tp, tg) = (table_tree(pred), table_tree(gt));
    let denom = tp.len().max(tg.len()) as f64;
    let d = tree_edit_distance(&tp, &tg, structure_only);
    (1.0 - d / denom).clamp(0.0, 1.0)
}

pub fn teds(pred_html: &str, gt_html: &str, structure_only: bool) -> Result<f64, HtmlError> {
    let pred = html_to_grid(pred_html)?;
    let gt = html_to_grid(gt_html)?;
    Ok(teds_grids(&pred, &gt, structure_only))
}
