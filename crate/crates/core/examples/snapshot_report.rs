//! Runs the clip-layout scenario, writes its report and snapshots, and
//! prints the trainee message.
//!
//! cargo run --example snapshot_report -- [out-dir]

use std::path::PathBuf;

use surgsafe::harness::{gen_scenario, golden_catalog, Scenario, SessionRun};
use surgsafe::report::{parse_snapshot_name, session_id};
use surgsafe::specparse::parse_spec;

fn main() -> anyhow::Result<()> {
    let out = std::env::args().nth(1).map(PathBuf::from).unwrap_or_else(|| std::env::temp_dir().join("surgsafe-report"));
    let catalog = golden_catalog();
    let spec = parse_spec(&Scenario::ErrIV.spec_document(), &catalog).map_err(|f| anyhow::anyhow!("{f:?}"))?;
    let mut run = SessionRun::start(spec, &catalog, session_id(Some(4)))?;
    for e in gen_scenario(Scenario::ErrIV).events {
        run.apply(&e)?;
    }
    let report = run.finish(&out)?;
    print!("{}", report.message_text);
    for v in &report.violations {
        let name = format!("{}.svg", v.snapshot_base_name);
        println!("{name} -> {:?}", parse_snapshot_name(&name));
    }
    println!("files under {}", out.join(&report.snapshot_dir).display());
    Ok(())
}
