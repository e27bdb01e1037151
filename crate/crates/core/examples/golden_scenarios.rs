//! Generates every scripted scenario, replays it and prints the verdict.
//!
//! cargo run --example golden_scenarios -- [out-dir]

use std::path::PathBuf;

use surgsafe::harness::{replay, write_scenario, ReplayOptions, Scenario};

fn main() -> anyhow::Result<()> {
    let out = std::env::args().nth(1).map(PathBuf::from).unwrap_or_else(|| std::env::temp_dir().join("surgsafe-scenarios"));
    let inputs = out.join("inputs");
    for s in Scenario::ALL {
        let traj = write_scenario(s, &inputs)?;
        let report = replay(&traj, &out.join("reports"), &ReplayOptions::default())?;
        let types: Vec<String> = report.violations.iter().map(|v| format!("{}", v.error_type)).collect();
        println!(
            "{:<6} proficient={:<5} violations=[{}]",
            s.name(),
            report.proficient,
            types.join(", ")
        );
    }
    println!("written under {}", out.display());
    Ok(())
}
