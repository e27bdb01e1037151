//! Feeds events one at a time through the compiled monitors and prints
//! alerts and violations as they happen.
//!
//! cargo run --example live_monitor

use surgsafe::catalog::compose_for_spec;
use surgsafe::harness::{golden_catalog, golden_spec};
use surgsafe::model::{EventKind, SimEvent, Vec3};
use surgsafe::monitor::{compile_monitors, MonitorOutput};

fn main() {
    let catalog = golden_catalog();
    let spec = golden_spec(&catalog);
    let scene = compose_for_spec(&catalog, &spec).unwrap();
    let mut monitors = compile_monitors(&spec, &scene, &catalog).unwrap();
    println!("{:?}", monitors.counts());

    // The dissector tip dips toward the bile duct twice; the middle sample
    // sits inside the hysteresis band so the first episode does not end.
    let mut events: Vec<SimEvent> = [12.0, 8.0, 7.0, 9.2, 7.5, 9.6, 8.5]
        .iter()
        .enumerate()
        .map(|(i, x)| {
            SimEvent::new(
                i as u64 * 100,
                EventKind::ToolPose {
                    tool_id: "maryland_dissector".into(),
                    tip: Vec3::new(*x, 0.0, 50.0),
                    activated: true,
                },
            )
        })
        .collect();
    events.push(SimEvent::new(
        800,
        EventKind::ForceSample {
            anatomy_id: "cystic_duct".into(),
            force: 1.2,
            stretch: 1.62,
        },
    ));
    events.push(SimEvent::new(900, EventKind::SessionEnd));

    for e in &events {
        for out in monitors.step(e).unwrap() {
            match out {
                MonitorOutput::Alert(a) => println!("t={:>4} alert {:?} on {}", a.t, a.kind, a.subject_id),
                MonitorOutput::Violation(v) => println!("t={:>4} type {} -> {}", v.t, v.error_type, v.snapshot_base_name),
            }
        }
    }
    let (achievements, violations) = monitors.finalize();
    println!("{} achievements, {} violations", achievements.len(), violations.len());
}
