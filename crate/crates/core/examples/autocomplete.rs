//! Prefix completion and name resolution over the bundled catalog.
//!
//! cargo run --example autocomplete -- Cys

use surgsafe::harness::golden_catalog;

fn main() {
    let catalog = golden_catalog();
    let prefix = std::env::args().nth(1).unwrap_or_else(|| "Cys".to_string());

    println!("completions for {prefix:?}:");
    for name in catalog.complete(&prefix) {
        println!("  {name}");
    }

    for written in ["common bile", "Cystic", "Gallbladder", "Liver"] {
        match catalog.resolve_simlet(written) {
            Ok(id) => println!("{written:?} -> {id}"),
            Err(e) => println!("{written:?} -> {e}"),
        }
    }
}
