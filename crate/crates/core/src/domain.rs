//! Geometric and categorical types shared by every stage.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum DomainError {
    #[error("unknown category {0:?}")]
    UnknownCategory(String),
    #[error("invalid bbox [{x0}, {y0}, {x1}, {y1}]: {reason}")]
    InvalidBBox {
        x0: String,
        y0: String,
        x1: String,
        y1: String,
        reason: &'static str,
    },
    #[error("score {0} outside [0, 1]")]
    InvalidScore(f32),
}

/// Axis-aligned box in page pixels, origin at the top-left corner.
///
/// Construction rejects degenerate, negative and non-finite boxes, so every
/// `BBox` in circulation has positive width and height.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct BBox {
    x0: f64,
    y0: f64,
    x1: f64,
    y1: f64,
}

impl BBox {
    pub fn new(x0: f64, y0: f64, x1: f64, y1: f64) -> Result<Self, DomainError> {
        let invalid = |reason| DomainError::InvalidBBox {
            x0: x0.to_string(),
            y0: y0.to_string(),
            x1: x1.to_string(),
            y1: y1.to_string(),
            reason,
        };
        if ![x0, y0, x1, y1].iter().all(|v| v.is_finite()) {
            return Err(invalid("non-finite coordinate"));
        }
        if x0 < 0.0 || y0 < 0.0 {
            return Err(invalid("negative coordinate"));
        }
        if x0 >= x1 || y0 >= y1 {
            return Err(invalid("empty extent"));
        }
        Ok(Self { x0, y0, x1, y1 })
    }

    pub fn x0(&self) -> f64 {
        self.x0
    }
    pub fn y0(&self) -> f64 {
        self.y0
    }
    pub fn x1(&self) -> f64 {
        self.x1
    }
    pub fn y1(&self) -> f64 {
        self.y1
    }

    pub fn width(&self) -> f64 {
        self.x1 - self.x0
    }

    pub fn height(&self) -> f64 {
        self.y1 - self.y0
    }

    pub fn area(&self) -> f64 {
        self.width() * self.height()
    }

    pub fn to_array(&self) -> [f64; 4] {
        [self.x0, self.y0, self.x1, self.y1]
    }

    /// Grow by `padding` on every side and clip to `[0, width] x [0, height]`.
    /// Returns `None` when nothing of the box is left inside the page.
    pub fn expand_clamped(&self, padding: f64, width: f64, height: f64) -> Option<BBox> {
        BBox::new(
            (self.x0 - padding).max(0.0),
            (self.y0 - padding).max(0.0),
            (self.x1 + padding).min(width),
            (self.y1 + padding).min(height),
        )
        .ok()
    }

    pub fn contained_in(&self, width: f64, height: f64) -> bool {
        self.x1 <= width && self.y1 <= height
    }
}

impl TryFrom<[f64; 4]> for BBox {
    type Error = DomainError;

    fn try_from(v: [f64; 4]) -> Result<Self, Self::Error> {
        BBox::new(v[0], v[1], v[2], v[3])
    }
}

impl<'de> Deserialize<'de> for BBox {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let raw = <[f64; 4]>::deserialize(d)?;
        BBox::try_from(raw).map_err(serde::de::Error::custom)
    }
}

/// Intersection over union; 0 for disjoint boxes.
pub fn iou(a: &BBox, b: &BBox) -> f64 {
    let iw = (a.x1.min(b.x1) - a.x0.max(b.x0)).max(0.0);
    let ih = (a.y1.min(b.y1) - a.y0.max(b.y0)).max(0.0);
    let inter = iw * ih;
    if inter == 0.0 {
        return 0.0;
    }
    inter / (a.area() + b.area() - inter)
}

/// Overlap of the two x-intervals relative to the narrower one.
pub fn x_overlap_ratio(a: &BBox, b: &BBox) -> f64 {
    let overlap = (a.x1.min(b.x1) - a.x0.max(b.x0)).max(0.0);
    overlap / a.width().min(b.width())
}

/// Layout classes produced by the detector.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Category {
    Text,
    Title,
    Table,
    Formula,
    Chart,
    Figure,
    Header,
    Footer,
    FigureCaption,
    TableCaption,
    Footnote,
}

impl Category {
    pub const ALL: [Category; 11] = [
        Category::Text,
        Category::Title,
        Category::Table,
        Category::Formula,
        Category::Chart,
        Category::Figure,
        Category::Header,
        Category::Footer,
        Category::FigureCaption,
        Category::TableCaption,
        Category::Footnote,
    ];

    pub fn as_str(&self) -> &'static str {
        match self {
            Category::Text => "text",
            Category::Title => "title",
            Category::Table => "table",
            Category::Formula => "formula",
            Category::Chart => "chart",
            Category::Figure => "figure",
            Category::Header => "header",
            Category::Footer => "footer",
            Category::FigureCaption => "figure_caption",
            Category::TableCaption => "table_caption",
            Category::Footnote => "footnote",
        }
    }

    pub fn is_page_furniture(&self) -> bool {
        matches!(self, Category::Header | Category::Footer)
    }
}

/// Exact, case-sensitive lookup of a canonical category name.
pub fn parse_category(name: &str) -> Result<Category, DomainError> {
    Category::ALL
        .iter()
        .copied()
        .find(|c| c.as_str() == name)
        .ok_or_else(|| DomainError::UnknownCategory(name.to_string()))
}

impl FromStr for Category {
    type Err = DomainError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        parse_category(s)
    }
}

impl fmt::Display for Category {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl Serialize for Category {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(self.as_str())
    }
}

impl<'de> Deserialize<'de> for Category {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let name = String::deserialize(d)?;
        parse_category(&name).map_err(serde::de::Error::custom)
    }
}

/// One detected region of a page.
#[derive(Debug, Clone, PartialEq)]
pub struct LayoutElement {
    pub id: usize,
    pub page_index: usize,
    pub bbox: BBox,
    pub category: Category,
    pub score: f32,
}

impl LayoutElement {
    pub fn new(
        id: usize,
        page_index: usize,
        bbox: BBox,
        category: Category,
        score: f32,
    ) -> Result<Self, DomainError> {
        if !(0.0..=1.0).contains(&score) {
            return Err(DomainError::InvalidScore(score));
        }
        Ok(Self {
            id,
            page_index,
            bbox,
            category,
            score,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn b(x0: f64, y0: f64, x1: f64, y1: f64) -> BBox {
        BBox::new(x0, y0, x1, y1).unwrap()
    }

    #[test]
    fn category_lookup() {
        assert_eq!(parse_category("table").unwrap(), Category::Table);
        assert_eq!(parse_category("formula").unwrap(), Category::Formula);
        assert_eq!(
            parse_category("tabel"),
            Err(DomainError::UnknownCategory("tabel".into()))
        );
        assert!(parse_category("Table").is_err());
    }

    #[test]
    fn category_round_trip() {
        for c in Category::ALL {
            assert_eq!(parse_category(c.as_str()).unwrap(), c);
            let json = serde_json::to_string(&c).unwrap();
            assert_eq!(serde_json::from_str::<Category>(&json).unwrap(), c);
        }
    }

    #[test]
    fn iou_examples() {
        assert_eq!(iou(&b(0., 0., 1., 1.), &b(0., 0., 1., 1.)), 1.0);
        assert_eq!(iou(&b(0., 0., 10., 10.), &b(20., 20., 30., 30.)), 0.0);
        // intersection 5x10 = 50, union 100 + 100 - 50 = 150
        let v = iou(&b(0., 0., 10., 10.), &b(5., 0., 15., 10.));
        assert!((v - 50.0 / 150.0).abs() < 1e-12);
    }

    #[test]
    fn x_overlap_examples() {
        assert_eq!(x_overlap_ratio(&b(0., 0., 10., 5.), &b(0., 9., 10., 20.)), 1.0);
        assert_eq!(x_overlap_ratio(&b(0., 0., 10., 5.), &b(11., 0., 20., 5.)), 0.0);
        // overlap [5,10] = 5, shorter width 10
        assert_eq!(x_overlap_ratio(&b(0., 0., 10., 5.), &b(5., 0., 25., 5.)), 0.5);
    }

    #[test]
    fn degenerate_boxes_rejected() {
        assert!(BBox::new(5., 0., 5., 10.).is_err());
        assert!(BBox::new(0., 10., 5., 2.).is_err());
        assert!(BBox::new(-1., 0., 5., 5.).is_err());
        assert!(BBox::new(0., 0., f64::NAN, 5.).is_err());
        assert!(serde_json::from_str::<BBox>("[10, 0, 2, 5]").is_err());
    }

    #[test]
    fn score_range_checked() {
        let bb = b(0., 0., 1., 1.);
        assert!(LayoutElement::new(0, 0, bb, Category::Text, 1.5).is_err());
        assert!(LayoutElement::new(0, 0, bb, Category::Text, 1.0).is_ok());
    }

    fn arb_box() -> impl Strategy<Value = BBox> {
        (0.0..500.0f64, 0.0..500.0f64, 0.1..300.0f64, 0.1..300.0f64)
            .prop_map(|(x, y, w, h)| BBox::new(x, y, x + w, y + h).unwrap())
    }

    proptest! {
        #[test]
        fn iou_symmetric_and_bounded(a in arb_box(), c in arb_box()) {
            let l = iou(&a, &c);
            prop_assert_eq!(l, iou(&c, &a));
            prop_assert!((0.0..=1.0).contains(&l));
        }

        #[test]
        fn iou_self_is_one(a in arb_box()) {
            prop_assert_eq!(iou(&a, &a), 1.0);
        }
    }
}
