//! Generates trainee instruction pages for the bundled spec.
//!
//! cargo run --example instruction_pages

use surgsafe::harness::{golden_catalog, golden_spec};
use surgsafe::specparse::generate_instructions;

fn main() {
    let catalog = golden_catalog();
    let spec = golden_spec(&catalog);
    println!("{}", spec.title);
    for page in generate_instructions(&spec, &catalog) {
        println!("\n{}", serde_json::to_string_pretty(&page).unwrap());
    }
}
