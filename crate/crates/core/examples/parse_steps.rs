//! Parses authored safety clauses into typed rules and prints the
//! canonical text each one formats back to.
//!
//! cargo run --example parse_steps

use surgsafe::harness::golden_catalog;
use surgsafe::specparse::{format_safety, parse_safety};

fn main() {
    let catalog = golden_catalog();
    let dissector = catalog.resolve_tool("Curved Maryland Dissector").unwrap();

    let clauses = [
        "not too close to Common bile duct",
        "not too close to common bile duct (3.5 mm, always)",
        "max force 2 N on Cystic artery; no foreign objects",
        "do not overstretch Cystic duct",
        "clips: 2 proximal, 1 distal on Cystic duct before cut",
        "not to close to Common bile duct",
        "max force 1 N on Cystic",
    ];
    for text in clauses {
        println!("{text}");
        match parse_safety(text, &catalog, Some(&dissector)) {
            Ok(rules) => {
                for r in &rules {
                    println!("  rule: {}", serde_json::to_string(r).unwrap());
                }
                println!("  canonical: {}", format_safety(&rules, &catalog));
            }
            Err(e) => println!("  error: {e}"),
        }
    }
}
