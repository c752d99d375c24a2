//! Plug an in-memory page source and a toy detector into the pipeline in
//! place of files and layout fixtures.
//!
//!     cargo run --example custom_stages

use std::path::{Path, PathBuf};
use std::sync::Arc;

use docparse::layout::PageLayout;
use docparse::mock::{Fallback, MockRecognizer};
use docparse::pipeline::{Detector, PageImage, PageSource};
use docparse::{assemble_markdown, BBox, Category, LayoutElement, Pipeline, PipelineConfig, PipelineError};
use image::{Rgb, RgbImage};

/// Every input becomes three blank pages.
struct BlankPages;

impl PageSource for BlankPages {
    fn load(&self, _input: &Path, emit: &mut dyn FnMut(PageImage)) -> Result<usize, PipelineError> {
        for index in 0..3 {
            let img = RgbImage::from_pixel(200, 120, Rgb([255 - index as u8 * 40, 255, 255]));
            emit(PageImage {
                index,
                image: Arc::new(img),
                layout: None,
            });
        }
        Ok(3)
    }
}

/// Splits each page into a title band and a body band.
struct Bands;

impl Detector for Bands {
    fn detect(&self, _input: &str, page: &PageImage) -> Result<PageLayout, PipelineError> {
        let (w, h) = (page.image.width() as f64, page.image.height() as f64);
        let band = |id, category, y0, y1| {
            LayoutElement::new(id, page.index, BBox::new(0.0, y0, w, y1).unwrap(), category, 0.95).unwrap()
        };
        Ok(PageLayout {
            page_index: page.index,
            page_width: w,
            page_height: h,
            elements: vec![band(0, Category::Text, h * 0.3, h), band(1, Category::Title, 0.0, h * 0.25)],
        })
    }
}

fn main() {
    let output = Pipeline::new(PipelineConfig::default(), Arc::new(MockRecognizer::new(Fallback::Describe)))
        .with_source(Arc::new(BlankPages))
        .with_detector(Arc::new(Bands))
        .run(&[PathBuf::from("memo"), PathBuf::from("letter")])
        .unwrap();
    for doc in output.documents {
        let doc = doc.unwrap();
        println!("== {} ==", doc.name);
        print!("{}", assemble_markdown(&doc.document, &Default::default()));
    }
    for q in &output.stats.queues {
        println!("{:<12} in={} out={} max_depth={}/{}", q.stage, q.items_in, q.items_out, q.max_depth, q.capacity);
    }
}
