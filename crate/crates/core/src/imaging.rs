//! Page images: decoding, cropping, PNG encoding and PDF rasterization
//! through an external renderer command.

use std::io::Cursor;
use std::path::{Path, PathBuf};
use std::process::Command;

use image::{ImageFormat, RgbImage};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::domain::BBox;

#[derive(Debug, Error)]
pub enum ImageError {
    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}: cannot decode image: {detail}")]
    Decode { path: String, detail: String },
    #[error("cannot encode crop: {0}")]
    Encode(String),
    #[error("renderer {command:?} failed: {detail}")]
    Render { command: String, detail: String },
}

pub fn load_page_image(path: &Path) -> Result<RgbImage, ImageError> {
    let bytes = std::fs::read(path).map_err(|source| ImageError::Io {
        path: path.display().to_string(),
        source,
    })?;
    image::load_from_memory(&bytes)
        .map(|img| img.to_rgb8())
        .map_err(|e| ImageError::Decode {
            path: path.display().to_string(),
            detail: e.to_string(),
        })
}

/// Pixel rectangle covering `bbox` (outward rounding), clipped to the image.
fn pixel_rect(img: &RgbImage, bbox: &BBox) -> (u32, u32, u32, u32) {
    let (w, h) = (img.width(), img.height());
    let x0 = (bbox.x0().floor() as u32).min(w.saturating_sub(1));
    let y0 = (bbox.y0().floor() as u32).min(h.saturating_sub(1));
    let x1 = (bbox.x1().ceil() as u32).clamp(x0 + 1, w.max(x0 + 1));
    let y1 = (bbox.y1().ceil() as u32).clamp(y0 + 1, h.max(y0 + 1));
    (x0, y0, (x1 - x0).min(w - x0), (y1 - y0).min(h - y0))
}

/// Cut `bbox` out of the page and encode it as PNG.
pub fn encode_crop(img: &RgbImage, bbox: &BBox) -> Result<Vec<u8>, ImageError> {
    if img.width() == 0 || img.height() == 0 {
        return Err(ImageError::Encode("empty page image".into()));
    }
    let (x, y, w, h) = pixel_rect(img, bbox);
    let crop = image::imageops::crop_imm(img, x, y, w, h).to_image();
    let mut out = Cursor::new(Vec::new());
    crop.write_to(&mut out, ImageFormat::Png)
        .map_err(|e| ImageError::Encode(e.to_string()))?;
    Ok(out.into_inner())
}

/// External PDF rasterizer. `{input}`, `{out_prefix}` and `{dpi}` in `args`
/// are substituted; the command must write `<out_prefix>*.png`, one per page.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RendererConfig {
    pub command: String,
    pub args: Vec<String>,
    pub dpi: u32,
}

impl Default for RendererConfig {
    fn default() -> Self {
        Self {
            command: "pdftoppm".into(),
            args: ["-r", "{dpi}", "-png", "{input}", "{out_prefix}"]
                .map(String::from)
                .to_vec(),
            dpi: 200,
        }
    }
}

/// Rasterize a PDF into page images, ordered by page.
pub fn render_pdf(pdf: &Path, cfg: &RendererConfig) -> Result<Vec<RgbImage>, ImageError> {
    let render_err = |detail: String| ImageError::Render {
        command: cfg.command.clone(),
        detail,
    };
    let dir = tempfile::tempdir().map_err(|e| render_err(e.to_string()))?;
    let prefix = dir.path().join("page");
    let args: Vec<String> = cfg
        .args
        .iter()
        .map(|a| {
            a.replace("{input}", &pdf.display().to_string())
                .replace("{out_prefix}", &prefix.display().to_string())
                .replace("{dpi}", &cfg.dpi.to_string())
        })
        .collect();
    let output = Command::new(&cfg.command)
        .args(&args)
        .output()
        .map_err(|e| render_err(e.to_string()))?;
    if !output.status.success() {
        return Err(render_err(format!(
            "exit {}: {}",
            output.status,
            String::from_utf8_lossy(&output.stderr).trim()
        )));
    }
    let mut pages: Vec<PathBuf> = std::fs::read_dir(dir.path())
        .map_err(|e| render_err(e.to_string()))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|x| x.eq_ignore_ascii_case("png")))
        .collect();
    pages.sort_by_key(|p| natural_key(p));
    pages.iter().map(|p| load_page_image(p)).collect()
}

/// Sort key that orders `page-2.png` before `page-10.png`.
pub(crate) fn natural_key(p: &Path) -> (String, u64) {
    let stem = p.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
    let digits: String = stem
        .chars()
        .rev()
        .take_while(char::is_ascii_digit)
        .collect::<Vec<_>>()
        .into_iter()
        .rev()
        .collect();
    let prefix = stem[..stem.len() - digits.len()].to_string();
    (prefix, digits.parse().unwrap_or(0))
}
