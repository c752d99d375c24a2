//! Detector output ingestion: fixture loading, per-class proposal
//! thresholds and crop planning.
//!
//! Layout fixture schema (all fields required):
//!
//! ```json
//! {"pages": [{"page_index": 0, "width": 800, "height": 1000,
//!             "elements": [{"bbox": [x0, y0, x1, y1], "category": "text", "score": 0.97}]}]}
//! ```

use std::collections::{BTreeMap, HashSet};
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::domain::{parse_category, BBox, Category, LayoutElement};

#[derive(Debug, Error)]
pub enum LayoutError {
    #[error("reading {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("layout fixture: invalid {field} on page {page}: {detail}")]
    Schema {
        field: String,
        page: usize,
        detail: String,
    },
    #[error("layout fixture is not valid JSON: {0}")]
    Json(#[from] serde_json::Error),
}

impl LayoutError {
    fn schema(field: &str, page: usize, detail: impl Into<String>) -> Self {
        LayoutError::Schema {
            field: field.to_string(),
            page,
            detail: detail.into(),
        }
    }
}

/// Detections for one page.
#[derive(Debug, Clone, PartialEq)]
pub struct PageLayout {
    pub page_index: usize,
    pub page_width: f64,
    pub page_height: f64,
    pub elements: Vec<LayoutElement>,
}

impl PageLayout {
    fn renumber(&mut self) {
        for (i, e) in self.elements.iter_mut().enumerate() {
            e.id = i;
            e.page_index = self.page_index;
        }
    }
}

/// Per-class score thresholds used to keep foreground proposals.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ThresholdConfig {
    pub default: f32,
    pub per_class: BTreeMap<Category, f32>,
}

impl Default for ThresholdConfig {
    fn default() -> Self {
        Self {
            default: 0.5,
            per_class: BTreeMap::new(),
        }
    }
}

impl ThresholdConfig {
    pub fn threshold(&self, category: Category) -> f32 {
        self.per_class.get(&category).copied().unwrap_or(self.default)
    }

    pub fn validate(&self) -> Result<(), String> {
        let in_range = |v: f32| (0.0..=1.0).contains(&v);
        if !in_range(self.default) {
            return Err(format!("default threshold {} outside [0, 1]", self.default));
        }
        for (c, v) in &self.per_class {
            if !in_range(*v) {
                return Err(format!("threshold for {c} ({v}) outside [0, 1]"));
            }
        }
        Ok(())
    }
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct FixtureFile {
    pages: Vec<FixturePage>,
}

#[derive(Deserialize)]
struct FixturePage {
    page_index: usize,
    width: f64,
    height: f64,
    elements: Vec<FixtureElement>,
}

#[derive(Deserialize)]
struct FixtureElement {
    bbox: Vec<f64>,
    category: String,
    score: f64,
}

pub fn load_layout(path: impl AsRef<Path>) -> Result<Vec<PageLayout>, LayoutError> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|source| LayoutError::Io {
        path: path.display().to_string(),
        source,
    })?;
    parse_layout(&text)
}

/// Parse and validate a layout fixture document. Pages come back sorted by
/// index, boxes clamped to the page, element ids dense in file order.
pub fn parse_layout(text: &str) -> Result<Vec<PageLayout>, LayoutError> {
    let file: FixtureFile = serde_json::from_str(text)?;
    let mut seen = HashSet::new();
    let mut pages = Vec::with_capacity(file.pages.len());
    for p in file.pages {
        let page = p.page_index;
        if !seen.insert(page) {
            return Err(LayoutError::schema("page_index", page, "duplicate page"));
        }
        if !(p.width.is_finite() && p.width > 0.0) {
            return Err(LayoutError::schema("width", page, "must be > 0"));
        }
        if !(p.height.is_finite() && p.height > 0.0) {
            return Err(LayoutError::schema("height", page, "must be > 0"));
        }
        let mut elements = Vec::with_capacity(p.elements.len());
        for (i, e) in p.elements.into_iter().enumerate() {
            let [x0, y0, x1, y1]: [f64; 4] = e.bbox.as_slice().try_into().map_err(|_| {
                LayoutError::schema("bbox", page, format!("element {i}: expected 4 numbers"))
            })?;
            let raw = BBox::new(x0, y0, x1, y1)
                .map_err(|err| LayoutError::schema("bbox", page, format!("element {i}: {err}")))?;
            let bbox = raw.expand_clamped(0.0, p.width, p.height).ok_or_else(|| {
                LayoutError::schema("bbox", page, format!("element {i}: outside the page"))
            })?;
            let category = parse_category(&e.category)
                .map_err(|err| LayoutError::schema("category", page, format!("element {i}: {err}")))?;
            if !(0.0..=1.0).contains(&e.score) {
                return Err(LayoutError::schema(
                    "score",
                    page,
                    format!("element {i}: {} outside [0, 1]", e.score),
                ));
            }
            let element = LayoutElement::new(i, page, bbox, category, e.score as f32)
                .map_err(|err| LayoutError::schema("score", page, err.to_string()))?;
            elements.push(element);
        }
        pages.push(PageLayout {
            page_index: page,
            page_width: p.width,
            page_height: p.height,
            elements,
        });
    }
    pages.sort_by_key(|p| p.page_index);
    Ok(pages)
}

/// Keep proposals whose score reaches their class threshold (inclusive).
pub fn filter_proposals(layout: &PageLayout, cfg: &ThresholdConfig) -> PageLayout {
    let mut out = PageLayout {
        elements: layout
            .elements
            .iter()
            .filter(|e| e.score >= cfg.threshold(e.category))
            .cloned()
            .collect(),
        ..layout.clone()
    };
    out.renumber();
    out
}

/// A region to cut out of the page image for one element.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CropPlan {
    pub element_id: usize,
    pub crop: BBox,
    /// Figures are cropped for the image directory, never recognized.
    pub recognize: bool,
}

pub fn plan_crops(layout: &PageLayout, padding: f64) -> Vec<CropPlan> {
    assert!(padding >= 0.0, "crop padding must be non-negative");
    layout
        .elements
        .iter()
        .map(|e| CropPlan {
            element_id: e.id,
            // the element already lies inside the page, so the clamped box is never empty
            crop: e
                .bbox
                .expand_clamped(padding, layout.page_width, layout.page_height)
                .unwrap_or(e.bbox),
            recognize: e.category != Category::Figure,
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn page(elements: &[(Category, f32)]) -> PageLayout {
        PageLayout {
            page_index: 0,
            page_width: 100.0,
            page_height: 100.0,
            elements: elements
                .iter()
                .enumerate()
                .map(|(i, (c, s))| {
                    let y = i as f64;
                    LayoutElement::new(i, 0, BBox::new(0.0, y, 10.0, y + 1.0).unwrap(), *c, *s)
                        .unwrap()
                })
                .collect(),
        }
    }

    #[test]
    fn loads_single_page() {
        let json = r#"{"pages":[{"page_index":0,"width":100,"height":100,"elements":[
            {"bbox":[0,0,10,10],"category":"text","score":0.9},
            {"bbox":[0,20,10,30],"category":"table","score":0.8},
            {"bbox":[0,40,10,50],"category":"figure","score":0.7}]}]}"#;
        let pages = parse_layout(json).unwrap();
        assert_eq!(pages.len(), 1);
        let ids: Vec<_> = pages[0].elements.iter().map(|e| e.id).collect();
        assert_eq!(ids, vec![0, 1, 2]);
    }

    #[test]
    fn rejects_inverted_bbox() {
        let json = r#"{"pages":[{"page_index":0,"width":100,"height":100,"elements":[
            {"bbox":[10,0,5,10],"category":"text","score":0.9}]}]}"#;
        match parse_layout(json) {
            Err(LayoutError::Schema { field, page, .. }) => {
                assert_eq!(field, "bbox");
                assert_eq!(page, 0);
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn rejects_unknown_category_and_bad_score() {
        let bad_cat = r#"{"pages":[{"page_index":3,"width":10,"height":10,"elements":[
            {"bbox":[0,0,5,5],"category":"tabel","score":0.9}]}]}"#;
        assert!(matches!(
            parse_layout(bad_cat),
            Err(LayoutError::Schema { ref field, page: 3, .. }) if field == "category"
        ));
        let bad_score = r#"{"pages":[{"page_index":0,"width":10,"height":10,"elements":[
            {"bbox":[0,0,5,5],"category":"text","score":1.2}]}]}"#;
        assert!(matches!(
            parse_layout(bad_score),
            Err(LayoutError::Schema { ref field, .. }) if field == "score"
        ));
    }

    #[test]
    fn pages_sorted_and_boxes_clamped() {
        let json = r#"{"pages":[
            {"page_index":1,"width":50,"height":50,"elements":[{"bbox":[40,40,60,70],"category":"text","score":1}]},
            {"page_index":0,"width":50,"height":50,"elements":[]}]}"#;
        let pages = parse_layout(json).unwrap();
        assert_eq!(pages[0].page_index, 0);
        assert_eq!(pages[1].page_index, 1);
        assert_eq!(pages[1].elements[0].bbox.to_array(), [40.0, 40.0, 50.0, 50.0]);
        assert_eq!(pages[1].elements[0].page_index, 1);
    }

    #[test]
    fn duplicate_page_rejected() {
        let json = r#"{"pages":[{"page_index":0,"width":5,"height":5,"elements":[]},
                                {"page_index":0,"width":5,"height":5,"elements":[]}]}"#;
        assert!(matches!(parse_layout(json), Err(LayoutError::Schema { .. })));
    }

    #[test]
    fn threshold_boundaries() {
        let mut cfg = ThresholdConfig::default();
        cfg.per_class.insert(Category::Text, 0.5);
        let out = filter_proposals(&page(&[(Category::Text, 0.49)]), &cfg);
        assert!(out.elements.is_empty());
        let out = filter_proposals(&page(&[(Category::Text, 0.5)]), &cfg);
        assert_eq!(out.elements.len(), 1);
        // chart unconfigured, falls back to default 0.5
        let out = filter_proposals(&page(&[(Category::Chart, 0.6)]), &cfg);
        assert_eq!(out.elements.len(), 1);
    }

    #[test]
    fn filter_renumbers_densely() {
        let out = filter_proposals(
            &page(&[(Category::Text, 0.1), (Category::Title, 0.9), (Category::Text, 0.8)]),
            &ThresholdConfig::default(),
        );
        let ids: Vec<_> = out.elements.iter().map(|e| (e.id, e.category)).collect();
        assert_eq!(ids, vec![(0, Category::Title), (1, Category::Text)]);
    }

    #[test]
    fn crop_examples() {
        let mk = |bb: [f64; 4], cat| PageLayout {
            page_index: 0,
            page_width: 100.0,
            page_height: 100.0,
            elements: vec![LayoutElement::new(0, 0, bb.try_into().unwrap(), cat, 1.0).unwrap()],
        };
        let c = plan_crops(&mk([10., 10., 20., 20.], Category::Text), 2.0);
        assert_eq!(c[0].crop.to_array(), [8., 8., 22., 22.]);
        assert!(c[0].recognize);
        let c = plan_crops(&mk([0., 0., 5., 5.], Category::Text), 2.0);
        assert_eq!(c[0].crop.to_array(), [0., 0., 7., 7.]);
        let c = plan_crops(&mk([10., 10., 20., 20.], Category::Figure), 0.0);
        assert_eq!(c[0].crop.to_array(), [10., 10., 20., 20.]);
        assert!(!c[0].recognize);
    }

    fn arb_page() -> impl Strategy<Value = (PageLayout, ThresholdConfig)> {
        let el = (0usize..11, 0.0f32..=1.0, 0.0..90.0f64, 0.0..90.0f64, 1.0..10.0f64);
        (
            proptest::collection::vec(el, 0..20),
            proptest::collection::vec(0.0f32..=1.0, 11),
            0.0f32..=1.0,
        )
            .prop_map(|(els, ths, default)| {
                let elements = els
                    .into_iter()
                    .enumerate()
                    .map(|(i, (c, s, x, y, w))| {
                        LayoutElement::new(
                            i,
                            0,
                            BBox::new(x, y, x + w, y + w).unwrap(),
                            Category::ALL[c],
                            s,
                        )
                        .unwrap()
                    })
                    .collect();
                let mut cfg = ThresholdConfig { default, ..Default::default() };
                for (c, t) in Category::ALL.iter().zip(ths).step_by(2) {
                    cfg.per_class.insert(*c, t);
                }
                (
                    PageLayout { page_index: 0, page_width: 100.0, page_height: 100.0, elements },
                    cfg,
                )
            })
    }

    proptest! {
        #[test]
        fn filter_idempotent_and_order_preserving((layout, cfg) in arb_page()) {
            let once = filter_proposals(&layout, &cfg);
            let twice = filter_proposals(&once, &cfg);
            prop_assert_eq!(&once, &twice);
            // subsequence check on (bbox, category)
            let mut it = layout.elements.iter();
            for kept in &once.elements {
                prop_assert!(it.any(|e| e.bbox == kept.bbox && e.category == kept.category));
            }
        }

        #[test]
        fn crops_inside_page((layout, _) in arb_page(), pad in 0.0..30.0f64) {
            for c in plan_crops(&layout, pad) {
                prop_assert!(c.crop.contained_in(layout.page_width, layout.page_height));
            }
        }
    }
}
