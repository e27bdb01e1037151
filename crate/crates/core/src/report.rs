//! Snapshots, session reports and the trainee message.
//!
//! A snapshot is a pair of files sharing one base name,
//! `<t:08>ms_type<ROMAN>_<value token>`: the scene state as JSON and an
//! orthographic XY projection as SVG.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::io;
use std::path::{Path, PathBuf};
use std::sync::LazyLock;

use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use regex::Regex;
use serde::{Deserialize, Serialize};

use crate::catalog::{AttachmentEdge, Scene};
use crate::model::{
    Achievement, AchievementKind, ErrorType, GeometryPrimitive, Measurement, ProcedureSpec,
    SessionReport, SimletId, ToolId, Unit, Vec3, Violation,
};

/// Normative snapshot file name pattern.
pub const SNAPSHOT_NAME_PATTERN: &str =
    r"^\d{8}ms_type(I|II|III|IV|V|VI)_[A-Za-z0-9p\-]+\.(json|svg)$";

static SNAPSHOT_NAME: LazyLock<Regex> = LazyLock::new(|| Regex::new(SNAPSHOT_NAME_PATTERN).unwrap());
static NAME_PARTS: LazyLock<Regex> = LazyLock::new(|| {
    Regex::new(r"^(\d{8})ms_type(I|II|III|IV|V|VI)_([A-Za-z0-9p]+)(?:-(\d+))?\.(json|svg)$").unwrap()
});
static CLIP_TOKEN: LazyLock<Regex> = LazyLock::new(|| Regex::new(r"^(\d+)prox(\d+)dist$").unwrap());
static VALUE_TOKEN: LazyLock<Regex> =
    LazyLock::new(|| Regex::new(r"^(\d+)(?:p(\d+))?([A-Za-z]+)$").unwrap());

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ToolState {
    pub tip: Vec3,
    pub activated: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct DroppedClip {
    pub clip_id: String,
    pub vessel_id: SimletId,
    pub position: f64,
}

/// What the monitor knew about the scene when a violation fired.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct SceneState {
    pub t: u64,
    pub tools: BTreeMap<ToolId, ToolState>,
    pub clip_map: BTreeMap<SimletId, Vec<f64>>,
    pub dropped_clips: Vec<DroppedClip>,
    pub attachments: Vec<AttachmentEdge>,
}

/// Contents of a snapshot JSON file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct SnapshotRecord {
    pub violation: Violation,
    pub scene: SceneState,
}

fn unit_token(u: Unit) -> &'static str {
    match u {
        Unit::Millimeter => "mm",
        Unit::Newton => "N",
        Unit::Ratio => "ratio",
        Unit::Clip => "clip",
        Unit::ProximalClips => "prox",
        Unit::DistalClips => "dist",
        Unit::Count => "count",
    }
}

/// Three decimals, trailing zeros trimmed, at least one decimal; '.' → 'p'.
fn decimal_token(v: f64) -> String {
    let s = format!("{:.3}", v.abs());
    let s = s.trim_end_matches('0');
    let s = if s.ends_with('.') { format!("{s}0") } else { s.to_string() };
    s.replace('.', "p")
}

/// Value token for the triggering measurement.
pub fn value_token(error_type: ErrorType, measured: &[Measurement]) -> String {
    match measured {
        [] => "none".to_string(),
        [p, d, ..]
            if error_type == ErrorType::IV
                && p.unit == Unit::ProximalClips
                && d.unit == Unit::DistalClips =>
        {
            format!("{}prox{}dist", p.value as u64, d.value as u64)
        }
        [m, ..] => match m.unit {
            Unit::Clip | Unit::Count | Unit::ProximalClips | Unit::DistalClips => {
                format!("{}{}", m.value.round() as u64, unit_token(m.unit))
            }
            u => format!("{}{}", decimal_token(m.value), unit_token(u)),
        },
    }
}

/// Base name without extension, e.g. `00012345ms_typeI_3p0mm`.
pub fn snapshot_base_name(t: u64, error_type: ErrorType, measured: &[Measurement]) -> String {
    format!(
        "{t:08}ms_type{}_{}",
        error_type.roman(),
        value_token(error_type, measured)
    )
}

pub fn is_snapshot_name(name: &str) -> bool {
    SNAPSHOT_NAME.is_match(name)
}

/// (t, type, values) recovered from a snapshot file name.
#[derive(Debug, Clone, PartialEq)]
pub struct ParsedSnapshotName {
    pub t: u64,
    pub error_type: ErrorType,
    /// One value, or (proximal, distal) for clip-layout snapshots.
    pub values: Vec<f64>,
    pub unit: String,
}

pub fn parse_snapshot_name(name: &str) -> Option<ParsedSnapshotName> {
    if !is_snapshot_name(name) {
        return None;
    }
    let caps = NAME_PARTS.captures(name)?;
    let t = caps[1].parse().ok()?;
    let error_type = caps[2].parse().ok()?;
    let token = &caps[3];
    if let Some(c) = CLIP_TOKEN.captures(token) {
        return Some(ParsedSnapshotName {
            t,
            error_type,
            values: vec![c[1].parse().ok()?, c[2].parse().ok()?],
            unit: "clips".into(),
        });
    }
    let c = VALUE_TOKEN.captures(token)?;
    let frac = c.get(2).map_or("0", |m| m.as_str());
    let value: f64 = format!("{}.{}", &c[1], frac).parse().ok()?;
    Some(ParsedSnapshotName {
        t,
        error_type,
        values: vec![value],
        unit: c[3].to_string(),
    })
}

/// Rounds a measurement the way a snapshot name records it.
pub fn name_precision(v: f64) -> f64 {
    (v * 1000.0).round() / 1000.0
}

/// Writes `<base>.json` and `<base>.svg` into `dir`; returns both names.
pub fn snapshot(
    state: &SceneState,
    v: &Violation,
    scene: &Scene,
    dir: &Path,
) -> io::Result<(String, String)> {
    fs::create_dir_all(dir)?;
    let json_name = format!("{}.json", v.snapshot_base_name);
    let svg_name = format!("{}.svg", v.snapshot_base_name);
    let record = SnapshotRecord {
        violation: v.clone(),
        scene: state.clone(),
    };
    let json = serde_json::to_string_pretty(&record).map_err(io::Error::other)?;
    fs::write(dir.join(&json_name), json + "\n")?;
    fs::write(dir.join(&svg_name), render_svg(state, v, scene))?;
    Ok((json_name, svg_name))
}

const SVG_SIZE: f64 = 480.0;
const SVG_MARGIN: f64 = 24.0;

struct Projection {
    min_x: f64,
    max_y: f64,
    scale: f64,
}

impl Projection {
    fn fit(points: &[(f64, f64)]) -> Self {
        let (mut lo_x, mut hi_x, mut lo_y, mut hi_y) = (f64::MAX, f64::MIN, f64::MAX, f64::MIN);
        for &(x, y) in points {
            lo_x = lo_x.min(x);
            hi_x = hi_x.max(x);
            lo_y = lo_y.min(y);
            hi_y = hi_y.max(y);
        }
        if points.is_empty() {
            (lo_x, hi_x, lo_y, hi_y) = (0.0, 1.0, 0.0, 1.0);
        }
        let span = (hi_x - lo_x).max(hi_y - lo_y).max(1.0);
        Projection {
            min_x: lo_x,
            max_y: hi_y,
            scale: (SVG_SIZE - 2.0 * SVG_MARGIN) / span,
        }
    }

    fn x(&self, x: f64) -> f64 {
        SVG_MARGIN + (x - self.min_x) * self.scale
    }

    fn y(&self, y: f64) -> f64 {
        SVG_MARGIN + (self.max_y - y) * self.scale
    }

    fn len(&self, d: f64) -> f64 {
        d * self.scale
    }
}

fn extent(g: &GeometryPrimitive) -> Vec<(f64, f64)> {
    let around = |c: Vec3, r: f64| vec![(c.x - r, c.y - r), (c.x + r, c.y + r)];
    match g {
        GeometryPrimitive::Sphere { center, radius } => around(*center, *radius),
        GeometryPrimitive::Capsule {
            endpoint_a,
            endpoint_b,
            radius,
        } => {
            let mut v = around(*endpoint_a, *radius);
            v.extend(around(*endpoint_b, *radius));
            v
        }
        GeometryPrimitive::TriangleMesh { vertices, .. } => {
            vertices.iter().map(|p| (p.x, p.y)).collect()
        }
    }
}

fn xml_escape(s: &str) -> String {
    s.replace('&', "&amp;")
        .replace('<', "&lt;")
        .replace('>', "&gt;")
        .replace('"', "&quot;")
}

/// Orthographic XY projection: simlet outlines, clips, one marker per tool
/// tip, and the violation's subjects highlighted.
pub fn render_svg(state: &SceneState, v: &Violation, scene: &Scene) -> String {
    let mut pts: Vec<(f64, f64)> = scene
        .instances
        .values()
        .flat_map(|s| s.geometry.iter().flat_map(extent))
        .collect();
    pts.extend(state.tools.values().map(|t| (t.tip.x, t.tip.y)));
    let pr = Projection::fit(&pts);
    let highlighted = |id: &SimletId| v.subject_ids.iter().any(|s| s == id.as_str());

    let mut out = String::new();
    let _ = writeln!(
        out,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{SVG_SIZE}" height="{h}" viewBox="0 0 {SVG_SIZE} {h}">"#,
        h = SVG_SIZE + 20.0
    );
    let _ = writeln!(
        out,
        r#"  <title>{}</title>"#,
        xml_escape(&v.snapshot_base_name)
    );
    let _ = writeln!(out, r##"  <rect width="100%" height="100%" fill="#fafafa"/>"##);
    for s in scene.instances.values() {
        let (stroke, class) = if highlighted(&s.id) {
            ("#d00000", "simlet subject")
        } else {
            ("#555555", "simlet")
        };
        let _ = writeln!(
            out,
            r#"  <g class="{class}" data-id="{}" stroke="{stroke}" fill="none">"#,
            xml_escape(s.id.as_str())
        );
        for g in &s.geometry {
            match g {
                GeometryPrimitive::Sphere { center, radius } => {
                    let _ = writeln!(
                        out,
                        r#"    <circle cx="{:.2}" cy="{:.2}" r="{:.2}"/>"#,
                        pr.x(center.x),
                        pr.y(center.y),
                        pr.len(*radius)
                    );
                }
                GeometryPrimitive::Capsule {
                    endpoint_a,
                    endpoint_b,
                    radius,
                } => {
                    let _ = writeln!(
                        out,
                        r#"    <line x1="{:.2}" y1="{:.2}" x2="{:.2}" y2="{:.2}" stroke-width="{:.2}" stroke-linecap="round" stroke-opacity="0.35"/>"#,
                        pr.x(endpoint_a.x),
                        pr.y(endpoint_a.y),
                        pr.x(endpoint_b.x),
                        pr.y(endpoint_b.y),
                        pr.len(2.0 * radius)
                    );
                }
                GeometryPrimitive::TriangleMesh {
                    vertices,
                    triangles,
                } => {
                    for tri in triangles {
                        let points = tri
                            .iter()
                            .map(|&i| {
                                format!("{:.2},{:.2}", pr.x(vertices[i].x), pr.y(vertices[i].y))
                            })
                            .collect::<Vec<_>>()
                            .join(" ");
                        let _ = writeln!(out, r#"    <polygon points="{points}"/>"#);
                    }
                }
            }
        }
        let _ = writeln!(out, "  </g>");
    }
    for (vessel, clips) in &state.clip_map {
        let Some(s) = scene.get(vessel) else { continue };
        for &c in clips {
            if let Some(p) = s.axis_point(c) {
                let _ = writeln!(
                    out,
                    r##"  <rect class="clip" x="{:.2}" y="{:.2}" width="4" height="4" fill="#2a6fdb"/>"##,
                    pr.x(p.x) - 2.0,
                    pr.y(p.y) - 2.0
                );
            }
        }
    }
    for (tool, ts) in &state.tools {
        let fill = if ts.activated { "#d00000" } else { "#1b1b1b" };
        let _ = writeln!(
            out,
            r#"  <circle class="tool-tip" data-tool="{}" cx="{:.2}" cy="{:.2}" r="4" fill="{fill}"/>"#,
            xml_escape(tool.as_str()),
            pr.x(ts.tip.x),
            pr.y(ts.tip.y)
        );
    }
    let caption = format!(
        "type {} at {:.3} s: {}",
        v.error_type,
        v.t as f64 / 1000.0,
        v.measured
            .iter()
            .map(Measurement::to_string)
            .collect::<Vec<_>>()
            .join(", ")
    );
    let _ = writeln!(
        out,
        r#"  <text x="{SVG_MARGIN}" y="{:.0}" font-family="sans-serif" font-size="13">{}</text>"#,
        SVG_SIZE + 10.0,
        xml_escape(&caption)
    );
    out.push_str("</svg>\n");
    out
}

/// Session directory name: a UUID, reproducible when a seed is given.
pub fn session_id(seed: Option<u64>) -> String {
    match seed {
        Some(seed) => {
            let mut bytes = [0u8; 16];
            ChaCha8Rng::seed_from_u64(seed).fill_bytes(&mut bytes);
            uuid::Builder::from_random_bytes(bytes).into_uuid().to_string()
        }
        None => uuid::Uuid::new_v4().to_string(),
    }
}

/// Relative snapshot directory for a session.
pub fn snapshot_dir(session_id: &str) -> String {
    format!("{session_id}/snapshots")
}

/// Every step and the completion criterion have an achievement.
pub fn achievements_complete(spec: &ProcedureSpec, achievements: &[Achievement]) -> bool {
    let step_done = |i: usize| {
        achievements
            .iter()
            .any(|a| a.kind == AchievementKind::Step && a.step_index == Some(i))
    };
    spec.steps.iter().all(|s| step_done(s.index))
        && achievements
            .iter()
            .any(|a| a.kind == AchievementKind::Completion)
}

pub fn build_report(
    session_id: &str,
    spec: &ProcedureSpec,
    achievements: Vec<Achievement>,
    violations: Vec<Violation>,
    snapshot_dir: &str,
) -> SessionReport {
    let complete = achievements_complete(spec, &achievements);
    let proficient = violations.is_empty() && complete;
    let message_text = message_text(
        session_id,
        &spec.title,
        &achievements,
        &violations,
        proficient,
        complete,
        snapshot_dir,
    );
    SessionReport {
        session_id: session_id.to_string(),
        spec_title: spec.title.clone(),
        achievements,
        violations,
        proficient,
        snapshot_dir: snapshot_dir.to_string(),
        message_text,
    }
}

fn message_text(
    session_id: &str,
    title: &str,
    achievements: &[Achievement],
    violations: &[Violation],
    proficient: bool,
    complete: bool,
    snapshot_dir: &str,
) -> String {
    let mut m = String::new();
    let _ = writeln!(
        m,
        "TIPS session {session_id}: {} errors, {} achievements",
        violations.len(),
        achievements.len()
    );
    let _ = writeln!(m, "Procedure: {title}");
    let verdict = if proficient {
        "proficient, no safety violations and every achievement recorded".to_string()
    } else if violations.is_empty() && !complete {
        "not proficient, 0 errors but the achievement list is incomplete".to_string()
    } else {
        format!("not proficient, {} safety errors", violations.len())
    };
    let _ = writeln!(m, "Result: {verdict}");
    m.push_str("\nAchievements:\n");
    if achievements.is_empty() {
        m.push_str("  (none)\n");
    }
    for a in achievements {
        let _ = writeln!(m, "  {:>8.3} s  {}", a.t as f64 / 1000.0, a.label);
    }
    m.push_str("\nErrors:\n");
    if violations.is_empty() {
        m.push_str("  (none)\n");
    }
    for v in violations {
        let measured = v
            .measured
            .iter()
            .map(Measurement::to_string)
            .collect::<Vec<_>>()
            .join(", ");
        let _ = writeln!(
            m,
            "  {:>8.3} s  type {}: {} [{}]",
            v.t as f64 / 1000.0,
            v.error_type,
            measured,
            v.subject_ids.join(", ")
        );
    }
    let _ = writeln!(m, "\nSnapshot directory: {snapshot_dir}");
    if violations.is_empty() {
        m.push_str("Snapshot files: (none)\n");
    } else {
        m.push_str("Snapshot files:\n");
        for v in violations {
            let _ = writeln!(m, "  {0}.json\n  {0}.svg", v.snapshot_base_name);
        }
    }
    m
}

/// Writes `report.json` and `message.txt` under `dir/<sessionId>/` and
/// returns that session directory.
pub fn write_report(report: &SessionReport, dir: &Path) -> io::Result<PathBuf> {
    let session_dir = dir.join(&report.session_id);
    fs::create_dir_all(&session_dir)?;
    let json = serde_json::to_string_pretty(report).map_err(io::Error::other)?;
    fs::write(session_dir.join("report.json"), json + "\n")?;
    fs::write(session_dir.join("message.txt"), &report.message_text)?;
    Ok(session_dir)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn m(v: f64, u: Unit) -> Measurement {
        Measurement::new(v, u)
    }

    #[test]
    fn naming_examples() {
        assert_eq!(
            snapshot_base_name(12345, ErrorType::I, &[m(3.0, Unit::Millimeter)]),
            "00012345ms_typeI_3p0mm"
        );
        assert_eq!(
            snapshot_base_name(0, ErrorType::III, &[m(1.0, Unit::Clip)]),
            "00000000ms_typeIII_1clip"
        );
        assert_eq!(value_token(ErrorType::II, &[m(2.5, Unit::Newton)]), "2p5N");
        assert_eq!(
            value_token(
                ErrorType::IV,
                &[m(1.0, Unit::ProximalClips), m(1.0, Unit::DistalClips)]
            ),
            "1prox1dist"
        );
        assert_eq!(value_token(ErrorType::I, &[m(2.99999, Unit::Millimeter)]), "3p0mm");
        assert_eq!(value_token(ErrorType::I, &[m(0.1234, Unit::Millimeter)]), "0p123mm");
    }

    #[test]
    fn names_parse_back() {
        let p = parse_snapshot_name("00012345ms_typeI_3p0mm.json").unwrap();
        assert_eq!((p.t, p.error_type, p.values.clone()), (12345, ErrorType::I, vec![3.0]));
        assert_eq!(p.unit, "mm");
        let p = parse_snapshot_name("00000100ms_typeIV_1prox1dist-2.svg").unwrap();
        assert_eq!(p.values, vec![1.0, 1.0]);
        let p = parse_snapshot_name("00000000ms_typeIII_1clip.json").unwrap();
        assert_eq!(p.values, vec![1.0]);
        assert!(parse_snapshot_name("12345ms_typeI_3p0mm.json").is_none());
        assert!(parse_snapshot_name("00012345ms_typeVII_3p0mm.json").is_none());
    }

    #[test]
    fn seeded_session_ids_are_stable() {
        assert_eq!(session_id(Some(7)), session_id(Some(7)));
        assert_ne!(session_id(Some(7)), session_id(Some(8)));
        assert!(uuid::Uuid::parse_str(&session_id(Some(7))).is_ok());
    }
}
