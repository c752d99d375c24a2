//! OTSL table token streams.
//!
//! The dialect uses five cell tokens plus a row terminator:
//!
//! | token        | meaning                                         |
//! |--------------|-------------------------------------------------|
//! | `fcel{text}` | cell with content, anchor of its merge region   |
//! | `ecel`       | empty cell, anchor of its merge region          |
//! | `lcel`       | merged with the cell to the left                |
//! | `ucel`       | merged with the cell above                      |
//! | `xcel`       | merged both left and up (interior of a 2D span) |
//! | `nl`         | end of row                                      |
//!
//! The textual form separates tokens with single spaces. Inside `fcel{...}`
//! the characters `}` and `\` are escaped with a backslash; everything else,
//! spaces included, is literal. Parsing accepts any whitespace between tokens
//! and a missing final `nl`.
//!
//! Cell text is trimmed when a grid is built and an `fcel` with blank text
//! becomes `ecel`, so every grid has exactly one canonical HTML form.

use std::fmt::Write as _;

use quick_xml::events::{BytesStart, Event};
use quick_xml::Reader;
use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub enum OtslToken {
    Fcel(String),
    Ecel,
    Lcel,
    Ucel,
    Xcel,
    NewLine,
}

impl OtslToken {
    pub fn name(&self) -> &'static str {
        match self {
            OtslToken::Fcel(_) => "fcel",
            OtslToken::Ecel => "ecel",
            OtslToken::Lcel => "lcel",
            OtslToken::Ucel => "ucel",
            OtslToken::Xcel => "xcel",
            OtslToken::NewLine => "nl",
        }
    }

    fn is_anchor(&self) -> bool {
        matches!(self, OtslToken::Fcel(_) | OtslToken::Ecel)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum OtslError {
    #[error("empty token stream")]
    EmptyStream,
    #[error("row {0} has a different number of cells than row 0")]
    RaggedRows(usize),
    #[error("illegal {token} at row {row}, column {col}")]
    IllegalMerge {
        row: usize,
        col: usize,
        token: &'static str,
    },
    #[error("cannot tokenize OTSL text at byte {offset}: {reason}")]
    Syntax { offset: usize, reason: String },
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum HtmlError {
    #[error("malformed table HTML: {0}")]
    MalformedHtml(String),
    #[error("overlapping cell spans at row {row}, column {col}")]
    OverlappingSpans { row: usize, col: usize },
}

/// A merge region: the anchor cell and how far it extends.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct CellRegion<'a> {
    pub row: usize,
    pub col: usize,
    pub rowspan: usize,
    pub colspan: usize,
    /// `None` for an empty (`ecel`) anchor.
    pub text: Option<&'a str>,
}

/// A validated, rectangular OTSL table.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct OtslGrid {
    rows: usize,
    cols: usize,
    cells: Vec<OtslToken>,
    origins: Vec<(usize, usize)>,
    spans: Vec<(usize, usize)>,
}

impl OtslGrid {
    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn cell(&self, row: usize, col: usize) -> &OtslToken {
        &self.cells[row * self.cols + col]
    }

    /// Anchor position owning `(row, col)`.
    pub fn origin(&self, row: usize, col: usize) -> (usize, usize) {
        self.origins[row * self.cols + col]
    }

    /// Anchor regions in row-major order of their anchors.
    pub fn regions(&self) -> impl Iterator<Item = CellRegion<'_>> {
        (0..self.rows * self.cols).filter_map(move |k| {
            let (row, col) = (k / self.cols, k % self.cols);
            let text = match &self.cells[k] {
                OtslToken::Fcel(t) => Some(t.as_str()),
                OtslToken::Ecel => None,
                _ => return None,
            };
            let (rowspan, colspan) = self.spans[k];
            Some(CellRegion {
                row,
                col,
                rowspan,
                colspan,
                text,
            })
        })
    }

    /// Build a grid from rows of cell tokens (no `NewLine`).
    pub fn from_rows(rows: Vec<Vec<OtslToken>>) -> Result<Self, OtslError> {
        let n_rows = rows.len();
        if n_rows == 0 || rows[0].is_empty() {
            return Err(OtslError::EmptyStream);
        }
        let cols = rows[0].len();
        if let Some(r) = rows.iter().position(|r| r.len() != cols) {
            return Err(OtslError::RaggedRows(r));
        }
        let cells: Vec<OtslToken> = rows
            .into_iter()
            .flatten()
            .map(|t| match t {
                OtslToken::Fcel(text) => {
                    let trimmed = text.trim();
                    if trimmed.is_empty() {
                        OtslToken::Ecel
                    } else if trimmed.len() == text.len() {
                        OtslToken::Fcel(text)
                    } else {
                        OtslToken::Fcel(trimmed.to_string())
                    }
                }
                other => other,
            })
            .collect();
        let at = |r: usize, c: usize| &cells[r * cols + c];
        let illegal = |row, col| OtslError::IllegalMerge {
            row,
            col,
            token: at(row, col).name(),
        };

        const UNSET: (usize, usize) = (usize::MAX, usize::MAX);
        let mut origins = vec![UNSET; n_rows * cols];
        let mut spans = vec![(0, 0); n_rows * cols];
        for r in 0..n_rows {
            for c in 0..cols {
                let tok = at(r, c);
                if *tok == OtslToken::NewLine {
                    return Err(illegal(r, c));
                }
                if !tok.is_anchor() {
                    if origins[r * cols + c] == UNSET {
                        return Err(illegal(r, c));
                    }
                    continue;
                }
                // an anchor inside someone else's region is illegal
                if origins[r * cols + c] != UNSET {
                    return Err(illegal(r, c));
                }
                let mut w = 1;
                while c + w < cols && *at(r, c + w) == OtslToken::Lcel {
                    w += 1;
                }
                let mut h = 1;
                while r + h < n_rows && *at(r + h, c) == OtslToken::Ucel {
                    h += 1;
                }
                for rr in r..r + h {
                    for cc in c..c + w {
                        let expected = match (rr == r, cc == c) {
                            (true, true) => None,
                            (true, false) => Some(OtslToken::Lcel),
                            (false, true) => Some(OtslToken::Ucel),
                            (false, false) => Some(OtslToken::Xcel),
                        };
                        let slot = rr * cols + cc;
                        if let Some(expected) = expected {
                            if *at(rr, cc) != expected || origins[slot] != UNSET {
                                return Err(illegal(rr, cc));
                            }
                        }
                        origins[slot] = (r, c);
                    }
                }
                spans[r * cols + c] = (h, w);
            }
        }
        Ok(OtslGrid {
            rows: n_rows,
            cols,
            cells,
            origins,
            spans,
        })
    }

    /// Token stream with a `NewLine` after every row.
    pub fn to_tokens(&self) -> Vec<OtslToken> {
        let mut out = Vec::with_capacity(self.cells.len() + self.rows);
        for row in self.cells.chunks(self.cols) {
            out.extend(row.iter().cloned());
            out.push(OtslToken::NewLine);
        }
        out
    }

    pub fn to_otsl_string(&self) -> String {
        tokens_to_string(&self.to_tokens())
    }
}

/// Split a token stream on `NewLine` and validate it as a grid.
pub fn parse_otsl(stream: &[OtslToken]) -> Result<OtslGrid, OtslError> {
    if stream.is_empty() {
        return Err(OtslError::EmptyStream);
    }
    let mut rows = Vec::new();
    let mut current = Vec::new();
    for tok in stream {
        if *tok == OtslToken::NewLine {
            rows.push(std::mem::take(&mut current));
        } else {
            current.push(tok.clone());
        }
    }
    if !current.is_empty() {
        rows.push(current);
    }
    if rows.iter().all(Vec::is_empty) {
        return Err(OtslError::EmptyStream);
    }
    OtslGrid::from_rows(rows)
}

/// Tokenize the textual OTSL form.
pub fn tokenize_otsl(text: &str) -> Result<Vec<OtslToken>, OtslError> {
    let bytes = text.as_bytes();
    let mut out = Vec::new();
    let mut i = 0;
    while i < bytes.len() {
        if bytes[i].is_ascii_whitespace() {
            i += 1;
            continue;
        }
        let rest = &text[i..];
        if let Some(body) = rest.strip_prefix("fcel{") {
            let mut cell = String::new();
            let mut chars = body.char_indices();
            let mut closed = None;
            while let Some((k, ch)) = chars.next() {
                match ch {
                    '\\' => match chars.next() {
                        Some((_, esc)) => cell.push(esc),
                        None => break,
                    },
                    '}' => {
                        closed = Some(k);
                        break;
                    }
                    _ => cell.push(ch),
                }
            }
            let Some(k) = closed else {
                return Err(OtslError::Syntax {
                    offset: i,
                    reason: "unterminated fcel payload".into(),
                });
            };
            out.push(OtslToken::Fcel(cell));
            i += "fcel{".len() + k + 1;
            continue;
        }
        let end = rest
            .find(|c: char| c.is_ascii_whitespace())
            .unwrap_or(rest.len());
        let tok = match &rest[..end] {
            "ecel" => OtslToken::Ecel,
            "lcel" => OtslToken::Lcel,
            "ucel" => OtslToken::Ucel,
            "xcel" => OtslToken::Xcel,
            "nl" => OtslToken::NewLine,
            other => {
                return Err(OtslError::Syntax {
                    offset: i,
                    reason: format!("unknown token {other:?}"),
                })
            }
        };
        out.push(tok);
        i += end;
    }
    Ok(out)
}

pub fn tokens_to_string(tokens: &[OtslToken]) -> String {
    let mut out = String::new();
    for (k, t) in tokens.iter().enumerate() {
        if k > 0 {
            out.push(' ');
        }
        match t {
            OtslToken::Fcel(text) => {
                out.push_str("fcel{");
                for ch in text.chars() {
                    if ch == '}' || ch == '\\' {
                        out.push('\\');
                    }
                    out.push(ch);
                }
                out.push('}');
            }
            other => out.push_str(other.name()),
        }
    }
    out
}

/// Tokenize and parse the textual form in one step.
pub fn parse_otsl_text(text: &str) -> Result<OtslGrid, OtslError> {
    parse_otsl(&tokenize_otsl(text)?)
}

fn escape_html(text: &str, out: &mut String) {
    for ch in text.chars() {
        match ch {
            '&' => out.push_str("&amp;"),
            '<' => out.push_str("&lt;"),
            '>' => out.push_str("&gt;"),
            '"' => out.push_str("&quot;"),
            _ => out.push(ch),
        }
    }
}

/// Canonical HTML: bare `<table>`, one `<tr>` per grid row, one `<td>` per
/// merge region anchored in that row, `rowspan` before `colspan`.
pub fn grid_to_html(g: &OtslGrid) -> String {
    let mut out = String::from("<table>");
    let mut regions = g.regions().peekable();
    for r in 0..g.rows() {
        out.push_str("<tr>");
        while let Some(reg) = regions.next_if(|reg| reg.row == r) {
            out.push_str("<td");
            if reg.rowspan > 1 {
                let _ = write!(out, " rowspan=\"{}\"", reg.rowspan);
            }
            if reg.colspan > 1 {
                let _ = write!(out, " colspan=\"{}\"", reg.colspan);
            }
            out.push('>');
            if let Some(t) = reg.text {
                escape_html(t, &mut out);
            }
            out.push_str("</td>");
        }
        out.push_str("</tr>");
    }
    out.push_str("</table>");
    out
}

struct HtmlCell {
    rowspan: usize,
    colspan: usize,
    text: String,
}

fn span_attr(e: &BytesStart<'_>, name: &[u8]) -> Result<usize, HtmlError> {
    for attr in e.attributes() {
        let attr = attr.map_err(|err| HtmlError::MalformedHtml(err.to_string()))?;
        if attr.key.as_ref().eq_ignore_ascii_case(name) {
            let raw = String::from_utf8_lossy(&attr.value).into_owned();
            return match raw.trim().parse::<usize>() {
                Ok(v) if v >= 1 => Ok(v),
                _ => Err(HtmlError::MalformedHtml(format!(
                    "bad {} value {raw:?}",
                    String::from_utf8_lossy(name)
                ))),
            };
        }
    }
    Ok(1)
}

fn resolve_entity(name: &str) -> Option<&'static str> {
    match name {
        "nbsp" => Some(" "),
        other => quick_xml::escape::resolve_predefined_entity(other),
    }
}

/// Parse one `<table>` into rows of cells. `thead`/`tbody`/`tfoot` wrappers
/// are flattened, `th` counts as `td`, inline markup inside cells contributes
/// only its text.
fn parse_table_html(h: &str) -> Result<Vec<Vec<HtmlCell>>, HtmlError> {
    let malformed = |msg: String| HtmlError::MalformedHtml(msg);
    let mut reader = Reader::from_str(h);
    reader.config_mut().trim_text(false);
    let mut rows: Vec<Vec<HtmlCell>> = Vec::new();
    let mut depth_table = 0usize;
    let mut seen_table = false;
    let mut in_row = false;
    let mut cell: Option<HtmlCell> = None;
    loop {
        let event = reader
            .read_event()
            .map_err(|e| malformed(format!("at byte {}: {e}", reader.buffer_position())))?;
        match event {
            Event::Start(e) | Event::Empty(e) if cell.is_some() => {
                let name = e.local_name().as_ref().to_ascii_lowercase();
                match name.as_slice() {
                    b"table" | b"tr" | b"td" | b"th" => {
                        return Err(malformed("nested table structure inside a cell".into()))
                    }
                    b"br" => cell.as_mut().unwrap().text.push(' '),
                    _ => {}
                }
            }
            Event::Start(e) => {
                let name = e.local_name().as_ref().to_ascii_lowercase();
                match name.as_slice() {
                    b"table" => {
                        if seen_table {
                            return Err(malformed("more than one table".into()));
                        }
                        seen_table = true;
                        depth_table += 1;
                    }
                    b"thead" | b"tbody" | b"tfoot" if depth_table == 1 && !in_row => {}
                    b"tr" if depth_table == 1 && !in_row => {
                        in_row = true;
                        rows.push(Vec::new());
                    }
                    b"td" | b"th" if in_row => {
                        cell = Some(HtmlCell {
                            rowspan: span_attr(&e, b"rowspan")?,
                            colspan: span_attr(&e, b"colspan")?,
                            text: String::new(),
                        });
                    }
                    other => {
                        return Err(malformed(format!(
                            "unexpected <{}>",
                            String::from_utf8_lossy(other)
                        )))
                    }
                }
            }
            Event::Empty(e) => {
                let name = e.local_name().as_ref().to_ascii_lowercase();
                match name.as_slice() {
                    b"td" | b"th" if in_row => rows.last_mut().unwrap().push(HtmlCell {
                        rowspan: span_attr(&e, b"rowspan")?,
                        colspan: span_attr(&e, b"colspan")?,
                        text: String::new(),
                    }),
                    b"tr" if depth_table == 1 && !in_row => rows.push(Vec::new()),
                    other => {
                        return Err(malformed(format!(
                            "unexpected <{}/>",
                            String::from_utf8_lossy(other)
                        )))
                    }
                }
            }
            Event::End(e) => {
                let name = e.local_name().as_ref().to_ascii_lowercase();
                match name.as_slice() {
                    b"td" | b"th" if cell.is_some() => {
                        rows.last_mut().unwrap().push(cell.take().unwrap());
                    }
                    _ if cell.is_some() => {}
                    b"tr" if in_row => in_row = false,
                    b"thead" | b"tbody" | b"tfoot" if !in_row => {}
                    b"table" if !in_row && depth_table == 1 => depth_table = 0,
                    other => {
                        return Err(malformed(format!(
                            "unexpected </{}>",
                            String::from_utf8_lossy(other)
                        )))
                    }
                }
            }
            Event::Text(t) => {
                let text = t
                    .unescape_with(resolve_entity)
                    .map_err(|e| malformed(e.to_string()))?;
                match cell.as_mut() {
                    Some(c) => c.text.push_str(&text),
                    None if text.trim().is_empty() => {}
                    None => return Err(malformed(format!("stray text {:?}", text.trim()))),
                }
            }
            Event::CData(t) => {
                if let Some(c) = cell.as_mut() {
                    c.text.push_str(&String::from_utf8_lossy(&t));
                }
            }
            Event::Comment(_) | Event::Decl(_) | Event::PI(_) | Event::DocType(_) => {}
            Event::Eof => break,
        }
    }
    if !seen_table || depth_table != 0 || in_row || cell.is_some() {
        return Err(malformed("unterminated or missing <table>".into()));
    }
    Ok(rows)
}

/// Inverse of [`grid_to_html`]; also accepts common ground-truth HTML
/// (`thead`/`tbody`, `th`, inline markup). Short rows are padded with `ecel`.
pub fn html_to_grid(h: &str) -> Result<OtslGrid, HtmlError> {
    let rows = parse_table_html(h)?;
    let n_rows = rows.len();
    if n_rows == 0 {
        return Err(HtmlError::MalformedHtml("table has no rows".into()));
    }
    // placement[r] = (col, cell) with the standard HTML column cursor
    let mut occupied: Vec<Vec<bool>> = vec![Vec::new(); n_rows];
    let mut placed: Vec<(usize, usize, HtmlCell)> = Vec::new();
    for (r, row) in rows.into_iter().enumerate() {
        let mut col = 0;
        for cell in row {
            while occupied[r].get(col).copied().unwrap_or(false) {
                col += 1;
            }
            if r + cell.rowspan > n_rows {
                return Err(HtmlError::MalformedHtml(format!(
                    "rowspan {} at row {r} runs past the last row",
                    cell.rowspan
                )));
            }
            for (rr, occ) in occupied.iter_mut().enumerate().skip(r).take(cell.rowspan) {
                for cc in col..col + cell.colspan {
                    if occ.len() <= cc {
                        occ.resize(cc + 1, false);
                    }
                    if occ[cc] {
                        return Err(HtmlError::OverlappingSpans { row: rr, col: cc });
                    }
                    occ[cc] = true;
                }
            }
            let width = cell.colspan;
            placed.push((r, col, cell));
            col += width;
        }
    }
    let cols = occupied.iter().map(Vec::len).max().unwrap_or(0);
    if cols == 0 {
        return Err(HtmlError::MalformedHtml("table has no cells".into()));
    }
    let mut grid = vec![vec![OtslToken::Ecel; cols]; n_rows];
    for (r, c, cell) in placed {
        for (rr, grid_row) in grid.iter_mut().enumerate().skip(r).take(cell.rowspan) {
            for (cc, slot) in grid_row.iter_mut().enumerate().skip(c).take(cell.colspan) {
                *slot = match (rr == r, cc == c) {
                    (true, true) => OtslToken::Fcel(cell.text.clone()),
                    (true, false) => OtslToken::Lcel,
                    (false, true) => OtslToken::Ucel,
                    (false, false) => OtslToken::Xcel,
                };
            }
        }
    }
    OtslGrid::from_rows(grid).map_err(|e| HtmlError::MalformedHtml(e.to_string()))
}

fn escape_markdown_cell(text: &str) -> String {
    text.replace('|', "\\|")
        .replace(['\n', '\r'], " ")
}

/// Pipe table with the first grid row as header. Spanned cells keep their
/// anchor text once; covered positions are blank.
pub fn grid_to_markdown(g: &OtslGrid) -> String {
    let row_line = |r: usize| {
        let cells: Vec<String> = (0..g.cols())
            .map(|c| match g.cell(r, c) {
                OtslToken::Fcel(t) => escape_markdown_cell(t),
                _ => String::new(),
            })
            .collect();
        format!("| {} |", cells.join(" | "))
    };
    let mut lines = vec![row_line(0)];
    lines.push(format!("|{}", " --- |".repeat(g.cols())));
    lines.extend((1..g.rows()).map(row_line));
    lines.join("\n")
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use OtslToken::*;

    fn f(t: &str) -> OtslToken {
        Fcel(t.to_string())
    }

    #[test]
    fn minimal_table() {
        let g = parse_otsl(&[f("A"), NewLine]).unwrap();
        assert_eq!((g.rows(), g.cols()), (1, 1));
        assert_eq!(g.cell(0, 0), &f("A"));
        assert_eq!(grid_to_html(&g), "<table><tr><td>A</td></tr></table>");
    }

    #[test]
    fn horizontal_merge() {
        let g = parse_otsl(&[f("Name"), Lcel, NewLine, f("a"), f("b"), NewLine]).unwrap();
        assert_eq!((g.rows(), g.cols()), (2, 2));
        assert_eq!(g.origin(0, 1), (0, 0));
        let r: Vec<_> = g.regions().collect();
        assert_eq!((r[0].rowspan, r[0].colspan), (1, 2));
        assert_eq!(
            grid_to_html(&g),
            "<table><tr><td colspan=\"2\">Name</td></tr><tr><td>a</td><td>b</td></tr></table>"
        );
        assert_eq!(grid_to_markdown(&g), "| Name |  |\n| --- | --- |\n| a | b |");
    }

    #[test]
    fn vertical_merge_html() {
        let g = parse_otsl(&[f("X"), f("b"), NewLine, Ucel, f("c"), NewLine]).unwrap();
        assert_eq!(
            grid_to_html(&g),
            "<table><tr><td rowspan=\"2\">X</td><td>b</td></tr><tr><td>c</td></tr></table>"
        );
    }

    #[test]
    fn ragged_rows() {
        assert_eq!(
            parse_otsl(&[f("x"), NewLine, f("a"), f("b"), NewLine]),
            Err(OtslError::RaggedRows(1))
        );
    }

    #[test]
    fn illegal_merges() {
        assert_eq!(
            parse_otsl(&[Lcel, NewLine]),
            Err(OtslError::IllegalMerge { row: 0, col: 0, token: "lcel" })
        );
        assert_eq!(
            parse_otsl(&[Ucel, NewLine]),
            Err(OtslError::IllegalMerge { row: 0, col: 0, token: "ucel" })
        );
        // xcel whose left neighbour is not part of a vertical span
        assert!(parse_otsl(&[f("a"), f("b"), NewLine, Ucel, Xcel, NewLine]).is_err());
        // non-rectangular region: L-shape
        assert!(parse_otsl(&[f("a"), Lcel, NewLine, Ucel, f("b"), NewLine]).is_err());
        // 2x2 region closed properly
        assert!(parse_otsl(&[f("a"), Lcel, NewLine, Ucel, Xcel, NewLine]).is_ok());
    }

    #[test]
    fn empty_streams() {
        assert_eq!(parse_otsl(&[]), Err(OtslError::EmptyStream));
        assert_eq!(parse_otsl(&[NewLine, NewLine]), Err(OtslError::EmptyStream));
    }

    #[test]
    fn missing_final_newline_accepted() {
        assert_eq!(
            parse_otsl(&[f("a"), f("b")]).unwrap(),
            parse_otsl(&[f("a"), f("b"), NewLine]).unwrap()
        );
    }

    #[test]
    fn text_form() {
        let toks = tokenize_otsl("fcel{a b} lcel nl fcel{x\\}y\\\\} ecel nl").unwrap();
        assert_eq!(toks, vec![f("a b"), Lcel, NewLine, f("x}y\\"), Ecel, NewLine]);
        assert_eq!(tokens_to_string(&toks), "fcel{a b} lcel nl fcel{x\\}y\\\\} ecel nl");
        assert!(tokenize_otsl("fcel{oops").is_err());
        assert!(tokenize_otsl("fcel{a} zcel").is_err());
        let g = parse_otsl_text("fcel{A} nl").unwrap();
        assert_eq!(g.cell(0, 0), &f("A"));
    }

    #[test]
    fn blank_fcel_normalized() {
        let g = parse_otsl(&[f("  "), f(" a "), NewLine]).unwrap();
        assert_eq!(g.cell(0, 0), &Ecel);
        assert_eq!(g.cell(0, 1), &f("a"));
    }

    #[test]
    fn html_rowspan_example() {
        let g = html_to_grid(
            "<table><tr><td rowspan=\"2\">a</td><td>b</td></tr><tr><td>c</td></tr></table>",
        )
        .unwrap();
        assert_eq!((g.rows(), g.cols()), (2, 2));
        assert_eq!(g.cell(1, 0), &Ucel);
        assert_eq!(g.cell(1, 1), &f("c"));
    }

    #[test]
    fn html_overlap_detected() {
        let h = "<table><tr><td rowspan=\"2\">a</td><td>b</td></tr>\
                 <tr><td colspan=\"2\">c</td><td>d</td></tr></table>";
        // c starts at column 1 (column 0 taken), no overlap; build one that does overlap
        assert!(html_to_grid(h).is_ok());
        let h = "<table><tr><td>a</td><td rowspan=\"2\">b</td></tr>\
                 <tr><td colspan=\"2\">c</td></tr></table>";
        assert_eq!(
            html_to_grid(h),
            Err(HtmlError::OverlappingSpans { row: 1, col: 1 })
        );
    }

    #[test]
    fn html_malformed() {
        assert!(matches!(html_to_grid("<table><tr><td>a</tr></table>"), Err(HtmlError::MalformedHtml(_))));
        assert!(matches!(html_to_grid("<div>x</div>"), Err(HtmlError::MalformedHtml(_))));
        assert!(matches!(html_to_grid("<table></table>"), Err(HtmlError::MalformedHtml(_))));
        assert!(matches!(
            html_to_grid("<table><tr><td rowspan=\"3\">a</td></tr></table>"),
            Err(HtmlError::MalformedHtml(_))
        ));
    }

    #[test]
    fn html_ground_truth_variants() {
        let h = "<table><thead><tr><th>H &amp; K</th><th>v</th></tr></thead>\
                 <tbody><tr><td><b>1</b></td></tr></tbody></table>";
        let g = html_to_grid(h).unwrap();
        assert_eq!(g.cell(0, 0), &f("H & K"));
        assert_eq!(g.cell(1, 0), &f("1"));
        assert_eq!(g.cell(1, 1), &Ecel);
    }

    #[test]
    fn markdown_examples() {
        let g = parse_otsl(&[f("a"), f("b"), NewLine]).unwrap();
        assert_eq!(grid_to_markdown(&g), "| a | b |\n| --- | --- |");
        let g = parse_otsl(&[f("a|b"), f("c"), NewLine, f("1"), f("2"), NewLine]).unwrap();
        assert_eq!(grid_to_markdown(&g), "| a\\|b | c |\n| --- | --- |\n| 1 | 2 |");
    }

    #[test]
    fn html_escaping_round_trips() {
        let g = parse_otsl(&[f("<a & \"b\">"), NewLine]).unwrap();
        let h = grid_to_html(&g);
        assert_eq!(h, "<table><tr><td>&lt;a &amp; &quot;b&quot;&gt;</td></tr></table>");
        assert_eq!(html_to_grid(&h).unwrap(), g);
    }

    #[test]
    fn row_fully_covered_by_rowspans() {
        let g = parse_otsl(&[f("a"), NewLine, Ucel, NewLine]).unwrap();
        let h = grid_to_html(&g);
        assert_eq!(h, "<table><tr><td rowspan=\"2\">a</td></tr><tr></tr></table>");
        assert_eq!(html_to_grid(&h).unwrap(), g);
    }

    proptest! {
        #[test]
        fn text_form_round_trip(texts in proptest::collection::vec("[a-z{}\\\\ |]{0,6}", 1..6)) {
            let mut toks: Vec<OtslToken> = texts.iter().map(|t| Fcel(t.clone())).collect();
            toks.push(NewLine);
            let s = tokens_to_string(&toks);
            prop_assert_eq!(tokenize_otsl(&s).unwrap(), toks);
        }
    }
}
