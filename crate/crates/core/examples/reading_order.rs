//! Order a two-column page with the geometric scorer, then decode a
//! hand-written relation matrix that contains a cycle.
//!
//!     cargo run --example reading_order

use docparse::reading_order::{
    decode_reading_order, geometric_relation_scores, is_consistent_tournament, RelationMatrix,
};
use docparse::{BBox, Category, LayoutElement};

fn element(id: usize, category: Category, bbox: [f64; 4]) -> LayoutElement {
    let [x0, y0, x1, y1] = bbox;
    LayoutElement::new(id, 0, BBox::new(x0, y0, x1, y1).unwrap(), category, 0.9).unwrap()
}

fn main() {
    // listed in detector order, not reading order
    let page = vec![
        element(0, Category::Text, [310.0, 120.0, 580.0, 400.0]),
        element(1, Category::Title, [20.0, 20.0, 580.0, 80.0]),
        element(2, Category::Text, [20.0, 120.0, 290.0, 300.0]),
        element(3, Category::Table, [20.0, 320.0, 290.0, 500.0]),
        element(4, Category::Footnote, [310.0, 420.0, 580.0, 500.0]),
    ];

    let scores = geometric_relation_scores(&page, 0.5).unwrap();
    let order = decode_reading_order(&scores, &page).unwrap();
    println!("geometric order:");
    for (k, &i) in order.permutation.iter().enumerate() {
        let e = &page[i];
        println!("  {k}: #{} {:<9} wins={}", e.id, e.category.to_string(), order.win_counts[i]);
    }

    // 0 beats 1, 1 beats 2, 2 beats 0: every element wins once
    let cycle = RelationMatrix::new(vec![
        vec![0.5, 0.8, 0.3],
        vec![0.2, 0.5, 0.7],
        vec![0.7, 0.3, 0.5],
    ])
    .unwrap();
    println!("cycle is a consistent tournament: {}", is_consistent_tournament(&cycle));
    let order = decode_reading_order(&cycle, &page[..3]).unwrap();
    println!("cycle order (ties broken top-to-bottom): {:?}", order.permutation);
}
