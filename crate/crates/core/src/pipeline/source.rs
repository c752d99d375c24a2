//! File inputs: page-image directories, single images and PDFs, with
//! detections read from layout fixtures next to them.

use std::path::{Path, PathBuf};
use std::sync::Arc;

use crate::imaging::{load_page_image, natural_key, render_pdf, RendererConfig};
use crate::layout::{load_layout, PageLayout};
use crate::pipeline::{Detector, PageImage, PageSource, PipelineError};

const IMAGE_EXTENSIONS: [&str; 3] = ["png", "jpg", "jpeg"];

fn has_extension(p: &Path, exts: &[&str]) -> bool {
    p.extension()
        .and_then(|e| e.to_str())
        .is_some_and(|e| exts.iter().any(|x| e.eq_ignore_ascii_case(x)))
}

/// Name used for output files: the directory name or the file stem.
pub fn document_name(input: &Path) -> String {
    let raw = if input.is_dir() {
        input.file_name()
    } else {
        input.file_stem()
    };
    raw.map(|s| s.to_string_lossy().into_owned())
        .filter(|s| !s.is_empty())
        .unwrap_or_else(|| "document".to_string())
}

/// Loads inputs from disk.
///
/// * a directory holds page images (ordered naturally by name) and an
///   optional `layout.json`;
/// * an image file is a one-page document with optional `<stem>.layout.json`;
/// * a PDF is rasterized by the configured renderer, with optional
///   `<stem>.layout.json`.
#[derive(Debug, Clone, Default)]
pub struct FileSource {
    renderer: RendererConfig,
}

impl FileSource {
    pub fn new(renderer: RendererConfig) -> Self {
        Self { renderer }
    }
}

fn sibling_layout(input: &Path) -> PathBuf {
    input.with_file_name(format!("{}.layout.json", document_name(input)))
}

impl PageSource for FileSource {
    fn load(&self, input: &Path, emit: &mut dyn FnMut(PageImage)) -> Result<usize, PipelineError> {
        let label = input.display().to_string();
        let io_err = |detail: String| PipelineError::Io {
            input: label.clone(),
            detail,
        };
        let decode_err = |detail: String| PipelineError::Decode {
            input: label.clone(),
            detail,
        };
        let meta = std::fs::metadata(input).map_err(|e| io_err(e.to_string()))?;

        let layout_path = if meta.is_dir() {
            input.join("layout.json")
        } else {
            sibling_layout(input)
        };
        let layouts = if layout_path.exists() {
            Some(load_layout(&layout_path).map_err(|e| PipelineError::Layout {
                input: label.clone(),
                detail: e.to_string(),
            })?)
        } else {
            None
        };
        let attach = |index: usize, image: image::RgbImage| -> Result<PageImage, PipelineError> {
            let layout = match &layouts {
                None => None,
                Some(pages) => Some(match pages.iter().find(|p| p.page_index == index) {
                    Some(p) => {
                        let (w, h) = image.dimensions();
                        if p.page_width != f64::from(w) || p.page_height != f64::from(h) {
                            return Err(decode_err(format!(
                                "page {index} is {w}x{h} but its layout is {}x{}",
                                p.page_width, p.page_height
                            )));
                        }
                        p.clone()
                    }
                    None => PageLayout {
                        page_index: index,
                        page_width: f64::from(image.width()),
                        page_height: f64::from(image.height()),
                        elements: Vec::new(),
                    },
                }),
            };
            Ok(PageImage {
                index,
                image: Arc::new(image),
                layout,
            })
        };

        if meta.is_dir() {
            let mut files: Vec<PathBuf> = std::fs::read_dir(input)
                .map_err(|e| io_err(e.to_string()))?
                .filter_map(|e| e.ok().map(|e| e.path()))
                .filter(|p| p.is_file() && has_extension(p, &IMAGE_EXTENSIONS))
                .collect();
            files.sort_by_key(|p| natural_key(p));
            for (i, f) in files.iter().enumerate() {
                let image = load_page_image(f).map_err(|e| decode_err(e.to_string()))?;
                emit(attach(i, image)?);
            }
            Ok(files.len())
        } else if has_extension(input, &["pdf"]) {
            let pages = render_pdf(input, &self.renderer).map_err(|e| decode_err(e.to_string()))?;
            let n = pages.len();
            for (i, image) in pages.into_iter().enumerate() {
                emit(attach(i, image)?);
            }
            Ok(n)
        } else if has_extension(input, &IMAGE_EXTENSIONS) {
            let image = load_page_image(input).map_err(|e| decode_err(e.to_string()))?;
            emit(attach(0, image)?);
            Ok(1)
        } else {
            Err(decode_err("unsupported input type".into()))
        }
    }
}

/// Uses the detections loaded with the page.
#[derive(Debug, Clone, Copy, Default)]
pub struct FixtureDetector;

impl Detector for FixtureDetector {
    fn detect(&self, input: &str, page: &PageImage) -> Result<PageLayout, PipelineError> {
        page.layout.clone().ok_or_else(|| PipelineError::Layout {
            input: input.to_string(),
            detail: format!("no layout fixture for page {}", page.index),
        })
    }
}
