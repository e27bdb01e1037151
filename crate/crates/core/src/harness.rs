//! Trajectory files, the golden cholecystectomy fixtures, scripted
//! scenarios and batch replay.
//!
//! A trajectory is JSON Lines. The first line is a header, every further
//! line one event:
//!
//! ```text
//! {"specRef":"spec.json","catalogRef":"catalog.json","sessionSeed":1}
//! {"t":0,"type":"toolPose","toolId":"maryland_dissector","tip":[40.0,20.0,40.0],"activated":false}
//! {"t":100,"type":"forceSample","anatomyId":"cystic_duct","force":1.2,"stretch":1.1}
//! {"t":200,"type":"sessionEnd"}
//! ```

use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::catalog::{compose_for_spec, load_catalog, Catalog, Scene};
use crate::model::{EventKind, Finding, ProcedureSpec, SessionReport, SimEvent, Vec3};
use crate::monitor::{compile_monitors, MonitorError, MonitorOutput, MonitorSet};
use crate::report::{build_report, session_id, snapshot, snapshot_dir, write_report};
use crate::specparse::{check_document, parse_spec, SpecDocument};

pub const GOLDEN_CATALOG_JSON: &str = include_str!("../data/golden/catalog.json");
pub const GOLDEN_SPEC_JSON: &str = include_str!("../data/golden/spec.json");
pub const GOLDEN_SUTURE_SPEC_JSON: &str = include_str!("../data/golden/suture_spec.json");

pub fn golden_catalog() -> Catalog {
    load_catalog(GOLDEN_CATALOG_JSON.as_bytes()).expect("golden catalog is valid")
}

pub fn golden_spec_document() -> SpecDocument {
    serde_json::from_str(GOLDEN_SPEC_JSON).expect("golden spec is valid JSON")
}

pub fn golden_suture_spec_document() -> SpecDocument {
    serde_json::from_str(GOLDEN_SUTURE_SPEC_JSON).expect("golden suture spec is valid JSON")
}

pub fn golden_spec(catalog: &Catalog) -> ProcedureSpec {
    parse_spec(&golden_spec_document(), catalog).expect("golden spec parses")
}

pub fn golden_suture_spec(catalog: &Catalog) -> ProcedureSpec {
    parse_spec(&golden_suture_spec_document(), catalog).expect("golden suture spec parses")
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase", deny_unknown_fields)]
pub struct TrajectoryHeader {
    pub spec_ref: String,
    pub catalog_ref: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub session_seed: Option<u64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    pub header: TrajectoryHeader,
    pub events: Vec<SimEvent>,
}

impl Trajectory {
    pub fn to_jsonl(&self) -> String {
        let mut s = serde_json::to_string(&self.header).expect("header serializes");
        s.push('\n');
        for e in &self.events {
            s.push_str(&serde_json::to_string(e).expect("event serializes"));
            s.push('\n');
        }
        s
    }
}

/// Everything that makes an input unusable. Maps to exit status 2.
#[derive(Debug, Error)]
pub enum InputError {
    #[error("{}: {source}", path.display())]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("{}: {message}", path.display())]
    Catalog { path: PathBuf, message: String },
    #[error("{}: {}", path.display(), findings_text(findings))]
    Spec {
        path: PathBuf,
        findings: Vec<Finding>,
    },
    #[error("line {line}: {message}")]
    Trajectory { line: usize, message: String },
    #[error("line {line}: {source}")]
    Event { line: usize, source: MonitorError },
    #[error("cannot compile monitors: {0}")]
    Compile(String),
    #[error("cannot write output: {0}")]
    Output(std::io::Error),
}

fn findings_text(findings: &[Finding]) -> String {
    findings
        .iter()
        .map(|f| {
            let mut s = String::new();
            if let Some(i) = f.step {
                s.push_str(&format!("step {i} "));
            }
            if let Some(field) = &f.field {
                s.push_str(&format!("{field} "));
            }
            if let Some(p) = f.position {
                s.push_str(&format!("col {p} "));
            }
            format!("{s}{}", f.message).trim().to_string()
        })
        .collect::<Vec<_>>()
        .join("; ")
}

/// Parses trajectory JSONL; line numbers in errors are 1-based. Blank lines
/// are skipped.
pub fn parse_trajectory(text: &str) -> Result<(Trajectory, Vec<usize>), InputError> {
    let mut lines = text
        .lines()
        .enumerate()
        .map(|(i, l)| (i + 1, l.trim()))
        .filter(|(_, l)| !l.is_empty());
    let (hline, htext) = lines.next().ok_or(InputError::Trajectory {
        line: 1,
        message: "missing header line".into(),
    })?;
    let header: TrajectoryHeader =
        serde_json::from_str(htext).map_err(|e| InputError::Trajectory {
            line: hline,
            message: format!("bad header: {e}"),
        })?;
    let mut events = Vec::new();
    let mut line_numbers = Vec::new();
    for (line, l) in lines {
        let e: SimEvent = serde_json::from_str(l).map_err(|e| InputError::Trajectory {
            line,
            message: e.to_string(),
        })?;
        events.push(e);
        line_numbers.push(line);
    }
    Ok((Trajectory { header, events }, line_numbers))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Scenario {
    Clean,
    ErrI,
    ErrII,
    ErrIII,
    ErrIV,
    ErrV,
    ErrVI,
}

impl Scenario {
    pub const ALL: [Scenario; 7] = [
        Scenario::Clean,
        Scenario::ErrI,
        Scenario::ErrII,
        Scenario::ErrIII,
        Scenario::ErrIV,
        Scenario::ErrV,
        Scenario::ErrVI,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Scenario::Clean => "clean",
            Scenario::ErrI => "errI",
            Scenario::ErrII => "errII",
            Scenario::ErrIII => "errIII",
            Scenario::ErrIV => "errIV",
            Scenario::ErrV => "errV",
            Scenario::ErrVI => "errVI",
        }
    }

    /// Spec document the scenario is written against.
    pub fn spec_file(self) -> &'static str {
        match self {
            Scenario::ErrVI => "suture_spec.json",
            _ => "spec.json",
        }
    }

    pub fn spec_document(self) -> SpecDocument {
        match self {
            Scenario::ErrVI => golden_suture_spec_document(),
            _ => golden_spec_document(),
        }
    }

    fn seed(self) -> u64 {
        1000 + self as u64
    }
}

impl fmt::Display for Scenario {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Scenario {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Scenario::ALL
            .into_iter()
            .find(|x| x.name().eq_ignore_ascii_case(s))
            .ok_or_else(|| {
                format!(
                    "unknown scenario '{s}' (expected one of {})",
                    Scenario::ALL.map(Scenario::name).join(", ")
                )
            })
    }
}

/// Pose sampling interval of the scripted scenarios.
pub const SCRIPT_STEP_MS: u64 = 100;

const DISSECTOR: &str = "maryland_dissector";
const CLIP_APPLIER: &str = "clip_applier";
const SCISSORS: &str = "scissors";
const GRASPER: &str = "grasper";

struct Script {
    t: u64,
    events: Vec<SimEvent>,
}

impl Script {
    fn push(&mut self, kind: EventKind) {
        self.events.push(SimEvent::new(self.t, kind));
        self.t += SCRIPT_STEP_MS;
    }

    fn pose(&mut self, tool: &str, tip: [f64; 3], activated: bool) {
        self.push(EventKind::ToolPose {
            tool_id: tool.into(),
            tip: Vec3::new(tip[0], tip[1], tip[2]),
            activated,
        });
    }

    fn force(&mut self, anatomy: &str, force: f64, stretch: f64) {
        self.push(EventKind::ForceSample {
            anatomy_id: anatomy.into(),
            force,
            stretch,
        });
    }

    fn clip(&mut self, vessel: &str, position: f64) {
        self.push(EventKind::ClipApplied {
            vessel_id: vessel.into(),
            position,
        });
    }

    fn cut(&mut self, anatomy: &str, position: f64) {
        self.push(EventKind::Cut {
            anatomy_id: anatomy.into(),
            position,
        });
    }

    fn detach(&mut self, child: &str, parent: &str) {
        self.push(EventKind::Detach {
            child_id: child.into(),
            parent_id: parent.into(),
        });
    }
}

/// Deterministic event list for a scripted scenario. Each error scenario is
/// the clean run with one deviation.
pub fn gen_scenario(scenario: Scenario) -> Trajectory {
    use Scenario::*;
    let mut s = Script {
        t: 0,
        events: Vec::new(),
    };

    // Dissect the fatty tissue, passing no closer than 6.2 mm to the bile duct.
    s.pose(DISSECTOR, [40.0, 20.0, 40.0], false);
    s.pose(DISSECTOR, [30.0, 12.0, 60.0], false);
    for tip in [[26.0, 8.0, 66.0], [20.0, 6.0, 64.0], [14.0, 4.0, 62.0], [10.0, 2.0, 60.0]] {
        s.pose(DISSECTOR, tip, true);
    }
    if scenario == ErrI {
        for x in [12.0, 10.0, 9.0, 7.0, 9.0, 12.0] {
            s.pose(DISSECTOR, [x, 0.0, 50.0], true);
        }
    }
    for tip in [[16.0, 6.0, 66.0], [24.0, 10.0, 72.0], [30.0, 12.0, 76.0]] {
        s.pose(DISSECTOR, tip, true);
    }
    s.detach("fatty_tissue", "cystic_duct");
    s.detach("fatty_tissue", "cystic_artery");
    s.pose(DISSECTOR, [40.0, 30.0, 40.0], false);

    // Retract the gallbladder, loading the cystic duct moderately.
    s.pose(GRASPER, [70.0, 8.0, 110.0], false);
    s.pose(GRASPER, [70.0, 8.0, 112.0], true);
    s.force("gallbladder", 0.8, 1.05);
    s.force("cystic_duct", 1.0, 1.1);
    s.force("cystic_duct", 1.2, 1.2);
    if scenario == ErrII {
        for f in [1.0, 1.5, 2.0, 2.5, 2.0, 1.5, 1.0] {
            s.force("cystic_duct", f, 1.1);
        }
    }
    s.force("cystic_duct", 0.9, 1.1);

    // Clip the cystic duct: two proximal, one distal.
    s.pose(CLIP_APPLIER, [20.0, -10.0, 60.0], false);
    s.pose(CLIP_APPLIER, [14.0, 0.0, 64.0], true);
    s.clip("cystic_duct", 0.2);
    if scenario != ErrIV {
        s.pose(CLIP_APPLIER, [20.0, 0.0, 67.0], true);
        s.clip("cystic_duct", 0.35);
    }
    s.pose(CLIP_APPLIER, [34.0, 0.0, 74.0], true);
    s.clip("cystic_duct", 0.7);
    if scenario == ErrIII {
        s.pose(CLIP_APPLIER, [22.0, 14.0, 77.0], true);
        s.clip("cystic_artery", 0.4);
    }
    s.pose(CLIP_APPLIER, [30.0, -20.0, 60.0], false);

    // Divide between the clips.
    s.pose(SCISSORS, [26.0, -6.0, 70.0], false);
    s.pose(SCISSORS, [26.0, 0.0, 70.0], true);
    s.cut("cystic_duct", 0.5);
    if scenario == ErrIII {
        s.pose(SCISSORS, [10.0, 14.0, 72.0], true);
        s.cut("cystic_artery", 0.1);
    }
    s.pose(SCISSORS, [26.0, -20.0, 60.0], false);

    // Free and bag the gallbladder.
    s.detach("cystic_duct", "gallbladder");
    s.detach("cystic_artery", "gallbladder");
    s.pose(GRASPER, [60.0, -20.0, 80.0], true);
    s.push(EventKind::Retrieve {
        anatomy_id: if scenario == ErrV { "fatty_tissue" } else { "gallbladder" }.into(),
        via_pouch: true,
    });
    if scenario == ErrVI {
        s.pose(GRASPER, [44.0, 0.0, 82.0], true);
        s.push(EventKind::Suture {
            anatomy_id: "cystic_duct".into(),
            location: Vec3::new(44.0, 0.0, 78.0),
        });
    }
    s.pose(GRASPER, [60.0, -40.0, 60.0], false);
    s.push(EventKind::SessionEnd);

    Trajectory {
        header: TrajectoryHeader {
            spec_ref: scenario.spec_file().into(),
            catalog_ref: "catalog.json".into(),
            session_seed: Some(scenario.seed()),
        },
        events: s.events,
    }
}

/// Writes the scenario trajectory plus the catalog and spec it refers to.
/// Returns the trajectory path.
pub fn write_scenario(scenario: Scenario, dir: &Path) -> std::io::Result<PathBuf> {
    fs::create_dir_all(dir)?;
    fs::write(dir.join("catalog.json"), GOLDEN_CATALOG_JSON)?;
    fs::write(dir.join("spec.json"), GOLDEN_SPEC_JSON)?;
    fs::write(dir.join("suture_spec.json"), GOLDEN_SUTURE_SPEC_JSON)?;
    let path = dir.join(format!("{}.jsonl", scenario.name()));
    fs::write(&path, gen_scenario(scenario).to_jsonl())?;
    Ok(path)
}

/// One monitored session: compiled monitors plus the identity and spec
/// needed to report on it.
#[derive(Debug, Clone)]
pub struct SessionRun {
    pub session_id: String,
    pub spec: ProcedureSpec,
    pub monitors: MonitorSet,
}

impl SessionRun {
    pub fn start(
        spec: ProcedureSpec,
        catalog: &Catalog,
        session_id: String,
    ) -> Result<Self, InputError> {
        let scene = compose_for_spec(catalog, &spec)
            .map_err(|e| InputError::Compile(e.to_string()))?;
        let monitors = compile_monitors(&spec, &scene, catalog)
            .map_err(|e| InputError::Compile(e.to_string()))?;
        Ok(Self {
            session_id,
            spec,
            monitors,
        })
    }

    pub fn scene(&self) -> &Scene {
        self.monitors.scene()
    }

    pub fn apply(&mut self, e: &SimEvent) -> Result<Vec<MonitorOutput>, MonitorError> {
        self.monitors.step(e)
    }

    /// Finalizes, writes snapshots and the report under `out_dir`.
    pub fn finish(&mut self, out_dir: &Path) -> std::io::Result<SessionReport> {
        let (achievements, violations) = self.monitors.finalize();
        let rel = snapshot_dir(&self.session_id);
        let snaps = out_dir.join(&rel);
        if !violations.is_empty() {
            for (v, state) in self.monitors.records() {
                snapshot(state, v, self.monitors.scene(), &snaps)?;
            }
        }
        let report = build_report(&self.session_id, &self.spec, achievements, violations, &rel);
        write_report(&report, out_dir)?;
        Ok(report)
    }
}

fn read(path: &Path) -> Result<String, InputError> {
    fs::read_to_string(path).map_err(|source| InputError::Io {
        path: path.to_path_buf(),
        source,
    })
}

pub fn load_catalog_file(path: &Path) -> Result<Catalog, InputError> {
    load_catalog(read(path)?.as_bytes()).map_err(|e| InputError::Catalog {
        path: path.to_path_buf(),
        message: e.to_string(),
    })
}

/// Reads a spec document; its catalog comes from `catalog_override` or the
/// document's own reference, resolved next to the spec file.
pub fn load_spec_file(
    path: &Path,
    catalog_override: Option<&Path>,
) -> Result<(ProcedureSpec, Catalog), InputError> {
    let doc: SpecDocument = serde_json::from_str(&read(path)?).map_err(|e| InputError::Spec {
        path: path.to_path_buf(),
        findings: vec![Finding {
            step: None,
            field: None,
            position: None,
            message: e.to_string(),
        }],
    })?;
    let catalog_path = match catalog_override {
        Some(p) => p.to_path_buf(),
        None => path.parent().unwrap_or(Path::new(".")).join(&doc.catalog),
    };
    let catalog = load_catalog_file(&catalog_path)?;
    let findings = check_document(&doc, &catalog);
    if !findings.is_empty() {
        return Err(InputError::Spec {
            path: path.to_path_buf(),
            findings,
        });
    }
    let spec = parse_spec(&doc, &catalog).map_err(|findings| InputError::Spec {
        path: path.to_path_buf(),
        findings,
    })?;
    Ok((spec, catalog))
}

#[derive(Debug, Clone, Default)]
pub struct ReplayOptions {
    /// Spec path; defaults to the header's specRef next to the trajectory.
    pub spec: Option<PathBuf>,
    pub catalog: Option<PathBuf>,
    /// Overrides the header's session seed.
    pub seed: Option<u64>,
}

/// Runs an in-memory trajectory against a compiled spec.
pub fn replay_events(
    spec: ProcedureSpec,
    catalog: &Catalog,
    trajectory: &Trajectory,
    line_numbers: Option<&[usize]>,
    seed: Option<u64>,
    out_dir: &Path,
) -> Result<SessionReport, InputError> {
    let seed = seed.or(trajectory.header.session_seed);
    let mut run = SessionRun::start(spec, catalog, session_id(seed))?;
    for (i, e) in trajectory.events.iter().enumerate() {
        run.apply(e).map_err(|source| InputError::Event {
            line: line_numbers.map_or(i + 2, |l| l[i]),
            source,
        })?;
    }
    run.finish(out_dir).map_err(InputError::Output)
}

/// Replays a trajectory file and writes the report under `out_dir`.
pub fn replay(
    trajectory_path: &Path,
    out_dir: &Path,
    opts: &ReplayOptions,
) -> Result<SessionReport, InputError> {
    let (trajectory, lines) = parse_trajectory(&read(trajectory_path)?)?;
    let spec_path = match &opts.spec {
        Some(p) => p.clone(),
        None => trajectory_path
            .parent()
            .unwrap_or(Path::new("."))
            .join(&trajectory.header.spec_ref),
    };
    let (spec, catalog) = load_spec_file(&spec_path, opts.catalog.as_deref())?;
    replay_events(spec, &catalog, &trajectory, Some(&lines), opts.seed, out_dir)
}

/// 0 proficient, 1 violations or incomplete, 2 input error.
pub fn exit_code(result: &Result<SessionReport, InputError>) -> i32 {
    match result {
        Ok(r) if r.proficient => 0,
        Ok(_) => 1,
        Err(_) => 2,
    }
}

/// Replays every `*.jsonl` in `dir` concurrently, in file-name order.
pub fn replay_dir(
    dir: &Path,
    out_dir: &Path,
    opts: &ReplayOptions,
) -> Result<Vec<(PathBuf, Result<SessionReport, InputError>)>, InputError> {
    let mut files: Vec<PathBuf> = fs::read_dir(dir)
        .map_err(|source| InputError::Io {
            path: dir.to_path_buf(),
            source,
        })?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|x| x == "jsonl"))
        .collect();
    files.sort();
    Ok(std::thread::scope(|scope| {
        let handles: Vec<_> = files
            .iter()
            .map(|f| scope.spawn(move || replay(f, out_dir, opts)))
            .collect();
        files
            .iter()
            .cloned()
            .zip(handles.into_iter().map(|h| h.join().expect("replay thread panicked")))
            .collect()
    }))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn scenario_names_round_trip() {
        for s in Scenario::ALL {
            assert_eq!(s.name().parse::<Scenario>().unwrap(), s);
        }
        assert!("errVII".parse::<Scenario>().is_err());
    }

    #[test]
    fn trajectories_are_ordered_and_terminated() {
        for s in Scenario::ALL {
            let tr = gen_scenario(s);
            assert!(tr.events.windows(2).all(|w| w[0].t <= w[1].t));
            assert_eq!(tr.events.last().unwrap().kind, EventKind::SessionEnd);
            let (back, _) = parse_trajectory(&tr.to_jsonl()).unwrap();
            assert_eq!(back, tr);
        }
    }

    #[test]
    fn malformed_line_is_named() {
        let mut text = gen_scenario(Scenario::Clean).to_jsonl();
        let mut lines: Vec<&str> = text.lines().collect();
        lines[6] = "{\"t\": 5, \"type\": \"toolPose\"";
        text = lines.join("\n");
        match parse_trajectory(&text) {
            Err(InputError::Trajectory { line, .. }) => assert_eq!(line, 7),
            other => panic!("expected trajectory error, got {other:?}"),
        }
    }
}
