//! Final document assembly into Markdown and structured JSON.
//!
//! JSON layout (keys sorted, coordinates with two decimals):
//!
//! ```json
//! {"metadata":{"page_count":1,"schema_version":"1.0","source":"doc1","tool_version":"0.1.0"},
//!  "pages":[[{"bbox":[10.00,20.00,300.00,40.00],"category":"title",
//!             "content":{"type":"text","value":"Results"},"id":0,"order":0,"score":0.98}]]}
//! ```
//!
//! `content.type` is one of `text`, `table` (canonical HTML), `formula`
//! (with `display`), `chart` (pipe table), `figure` (relative image path)
//! or `error` (recognition failure message).

use std::io;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;
use uuid::Uuid;

use crate::domain::{BBox, Category, LayoutElement};
use crate::otsl::{grid_to_html, grid_to_markdown, html_to_grid};
use crate::recognizer::RecognizedContent;

/// Version of the JSON output schema.
pub const SCHEMA_VERSION: &str = "1.0";
pub const TOOL_VERSION: &str = env!("CARGO_PKG_VERSION");
pub const DISPLAY_MATH_DELIMITER: &str = "$$";

#[derive(Debug, Clone, PartialEq)]
pub enum ElementContent {
    Recognized(RecognizedContent),
    /// Relative path of the saved figure crop.
    Figure(String),
    /// Recognition failed for this element; the message says why.
    Failed(String),
}

#[derive(Debug, Clone, PartialEq)]
pub struct DocElement {
    pub order_index: usize,
    pub source: LayoutElement,
    pub content: ElementContent,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DocumentMetadata {
    pub page_count: usize,
    pub schema_version: String,
    pub source: String,
    pub tool_version: String,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Document {
    pub metadata: DocumentMetadata,
    /// Elements of each page, in reading order.
    pub pages: Vec<Vec<DocElement>>,
}

impl Document {
    pub fn new(source: impl Into<String>, pages: Vec<Vec<DocElement>>) -> Self {
        Self {
            metadata: DocumentMetadata {
                page_count: pages.len(),
                schema_version: SCHEMA_VERSION.to_string(),
                source: source.into(),
                tool_version: TOOL_VERSION.to_string(),
            },
            pages,
        }
    }

    pub fn elements(&self) -> impl Iterator<Item = &DocElement> {
        self.pages.iter().flatten()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct AssemblyOptions {
    pub include_headers_footers: bool,
    pub image_dir: String,
}

impl Default for AssemblyOptions {
    fn default() -> Self {
        Self {
            include_headers_footers: false,
            image_dir: "images".to_string(),
        }
    }
}

impl AssemblyOptions {
    pub fn validate(&self) -> Result<(), String> {
        if self.image_dir.trim().is_empty() {
            return Err("assembly.image_dir must not be empty".into());
        }
        Ok(())
    }
}

/// Deterministic figure file name for an element of a document.
pub fn figure_path(image_dir: &str, source: &str, page: usize, element_id: usize) -> String {
    let name = format!("{source}#page={page}&element={element_id}");
    let id = Uuid::new_v5(&Uuid::NAMESPACE_URL, name.as_bytes());
    format!("{}/{}.png", image_dir.trim_end_matches('/'), id)
}

fn markdown_block(el: &DocElement) -> String {
    match &el.content {
        ElementContent::Figure(path) => format!("![]({path})"),
        ElementContent::Failed(msg) => {
            format!("<!-- recognition failed: {} -->", msg.replace("--", "- -"))
        }
        ElementContent::Recognized(RecognizedContent::TextMd(text)) => {
            if el.source.category == Category::Title {
                format!("# {text}")
            } else {
                text.clone()
            }
        }
        ElementContent::Recognized(RecognizedContent::FormulaLatex { latex, display: true }) => {
            format!("{DISPLAY_MATH_DELIMITER}\n{latex}\n{DISPLAY_MATH_DELIMITER}")
        }
        ElementContent::Recognized(RecognizedContent::FormulaLatex { latex, display: false }) => {
            format!("\\({latex}\\)")
        }
        ElementContent::Recognized(RecognizedContent::TableGrid(g)) => grid_to_markdown(g),
        ElementContent::Recognized(RecognizedContent::ChartTable(md)) => md.clone(),
    }
}

pub fn assemble_markdown(doc: &Document, opts: &AssemblyOptions) -> String {
    let blocks: Vec<String> = doc
        .pages
        .iter()
        .flat_map(|page| {
            let mut page: Vec<&DocElement> = page.iter().collect();
            page.sort_by_key(|e| e.order_index);
            page
        })
        .filter(|e| opts.include_headers_footers || !e.source.category.is_page_furniture())
        .map(markdown_block)
        .collect();
    if blocks.is_empty() {
        return String::new();
    }
    let mut out = blocks.join("\n\n");
    out.push('\n');
    out
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct JsonContent {
    #[serde(skip_serializing_if = "Option::is_none", default)]
    display: Option<bool>,
    #[serde(rename = "type")]
    kind: String,
    value: String,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct JsonElement {
    bbox: [f64; 4],
    category: Category,
    content: JsonContent,
    id: usize,
    order: usize,
    score: f32,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct JsonDocument {
    metadata: DocumentMetadata,
    pages: Vec<Vec<JsonElement>>,
}

fn json_content(content: &ElementContent) -> JsonContent {
    let (kind, value, display) = match content {
        ElementContent::Figure(p) => ("figure", p.clone(), None),
        ElementContent::Failed(m) => ("error", m.clone(), None),
        ElementContent::Recognized(RecognizedContent::TextMd(t)) => ("text", t.clone(), None),
        ElementContent::Recognized(RecognizedContent::TableGrid(g)) => ("table", grid_to_html(g), None),
        ElementContent::Recognized(RecognizedContent::FormulaLatex { latex, display }) => {
            ("formula", latex.clone(), Some(*display))
        }
        ElementContent::Recognized(RecognizedContent::ChartTable(md)) => ("chart", md.clone(), None),
    };
    JsonContent {
        display,
        kind: kind.to_string(),
        value,
    }
}

/// Compact formatter printing every `f64` with two decimals. Scores are
/// `f32` and keep their shortest round-trip form.
struct FixedCoordinates;

impl serde_json::ser::Formatter for FixedCoordinates {
    fn write_f64<W: ?Sized + io::Write>(&mut self, writer: &mut W, value: f64) -> io::Result<()> {
        write!(writer, "{value:.2}")
    }
}

pub fn assemble_json(doc: &Document) -> String {
    let json = JsonDocument {
        metadata: doc.metadata.clone(),
        pages: doc
            .pages
            .iter()
            .map(|page| {
                let mut page: Vec<&DocElement> = page.iter().collect();
                page.sort_by_key(|e| e.order_index);
                page.into_iter()
                    .map(|e| JsonElement {
                        bbox: e.source.bbox.to_array(),
                        category: e.source.category,
                        content: json_content(&e.content),
                        id: e.source.id,
                        order: e.order_index,
                        score: e.source.score,
                    })
                    .collect()
            })
            .collect(),
    };
    let mut buf = Vec::new();
    let mut ser = serde_json::Serializer::with_formatter(&mut buf, FixedCoordinates);
    json.serialize(&mut ser).expect("document serializes");
    let mut out = String::from_utf8(buf).expect("serde_json emits UTF-8");
    out.push('\n');
    out
}

#[derive(Debug, Error)]
pub enum DocumentJsonError {
    #[error("document JSON: {0}")]
    Json(#[from] serde_json::Error),
    #[error("document JSON page {page} element {element}: {detail}")]
    Element {
        page: usize,
        element: usize,
        detail: String,
    },
}

/// Parse [`assemble_json`] output back into a [`Document`].
pub fn parse_document_json(text: &str) -> Result<Document, DocumentJsonError> {
    let json: JsonDocument = serde_json::from_str(text)?;
    let mut pages = Vec::with_capacity(json.pages.len());
    for (p, page) in json.pages.into_iter().enumerate() {
        let mut out = Vec::with_capacity(page.len());
        for (k, e) in page.into_iter().enumerate() {
            let err = |detail: String| DocumentJsonError::Element {
                page: p,
                element: k,
                detail,
            };
            let bbox = BBox::try_from(e.bbox).map_err(|x| err(x.to_string()))?;
            let source = LayoutElement::new(e.id, p, bbox, e.category, e.score)
                .map_err(|x| err(x.to_string()))?;
            let c = e.content;
            let content = match (c.kind.as_str(), c.display) {
                ("figure", None) => ElementContent::Figure(c.value),
                ("error", None) => ElementContent::Failed(c.value),
                ("text", None) => ElementContent::Recognized(RecognizedContent::TextMd(c.value)),
                ("chart", None) => ElementContent::Recognized(RecognizedContent::ChartTable(c.value)),
                ("table", None) => ElementContent::Recognized(RecognizedContent::TableGrid(
                    html_to_grid(&c.value).map_err(|x| err(x.to_string()))?,
                )),
                ("formula", Some(display)) => {
                    ElementContent::Recognized(RecognizedContent::FormulaLatex {
                        latex: c.value,
                        display,
                    })
                }
                (kind, display) => {
                    return Err(err(format!("unexpected content type {kind:?} (display {display:?})")))
                }
            };
            out.push(DocElement {
                order_index: e.order,
                source,
                content,
            });
        }
        pages.push(out);
    }
    Ok(Document {
        metadata: json.metadata,
        pages,
    })
}

/// Write `<out>/<name>.md`, `<out>/<name>.json` and the figure crops
/// (paths relative to `out`).
pub fn write_outputs(
    out_dir: &Path,
    name: &str,
    doc: &Document,
    figures: &[(String, Vec<u8>)],
    opts: &AssemblyOptions,
) -> io::Result<()> {
    std::fs::create_dir_all(out_dir)?;
    for (rel, png) in figures {
        let path = out_dir.join(rel);
        if let Some(parent) = path.parent() {
            std::fs::create_dir_all(parent)?;
        }
        std::fs::write(path, png)?;
    }
    std::fs::write(out_dir.join(format!("{name}.md")), assemble_markdown(doc, opts))?;
    std::fs::write(out_dir.join(format!("{name}.json")), assemble_json(doc))?;
    Ok(())
}
