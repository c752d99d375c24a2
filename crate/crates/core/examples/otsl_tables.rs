//! Parse an OTSL table with merged cells and convert it to HTML, Markdown
//! and back.
//!
//!     cargo run --example otsl_tables

use docparse::otsl::{grid_to_html, grid_to_markdown, html_to_grid, parse_otsl_text};

const TABLE: &str = "\
fcel{Region} fcel{2023} lcel nl
ucel fcel{H1} fcel{H2} nl
fcel{North} fcel{12} fcel{15} nl
fcel{South} fcel{9} ecel nl";

fn main() {
    let grid = parse_otsl_text(TABLE).unwrap();
    println!("{} rows x {} cols", grid.rows(), grid.cols());
    for region in grid.regions() {
        println!("  {region:?}");
    }

    let html = grid_to_html(&grid);
    println!("\nHTML:\n{html}");
    println!("\nMarkdown:\n{}", grid_to_markdown(&grid));

    let back = html_to_grid(&html).unwrap();
    assert_eq!(back, grid);
    println!("OTSL from HTML: {}", back.to_otsl_string());

    // a vertical merge with no cell above it is rejected
    match parse_otsl_text("ucel fcel{x} nl") {
        Ok(_) => unreachable!(),
        Err(e) => println!("illegal stream: {e}"),
    }
}
