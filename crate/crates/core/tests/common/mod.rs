//! Independent oracles and fixtures shared by the integration tests.
#![allow(dead_code)]

use std::collections::BTreeSet;
use std::path::Path;

use rand::Rng;
use surgsafe::catalog::{compose_for_spec, Catalog, Scene};
use surgsafe::model::{
    ErrorType, EventKind, GeometryPrimitive, ProcedureSpec, SafetyRule, SimEvent, SimletFlag,
    SimletId, Vec3, Violation,
};

// ---------------------------------------------------------------------------
// Geometry: dense surface sampling.

pub const SURFACE_SAMPLES: usize = 100_000;

fn v(x: f64, y: f64, z: f64) -> Vec3 {
    Vec3::new(x, y, z)
}

/// Fibonacci lattice on a sphere.
pub fn sample_sphere(c: Vec3, r: f64, n: usize) -> Vec<Vec3> {
    let golden = std::f64::consts::PI * (3.0 - 5f64.sqrt());
    (0..n)
        .map(|i| {
            let z = 1.0 - 2.0 * (i as f64 + 0.5) / n as f64;
            let rho = (1.0 - z * z).sqrt();
            let phi = golden * i as f64;
            c + v(rho * phi.cos(), rho * phi.sin(), z) * r
        })
        .collect()
}

fn basis(u: Vec3) -> (Vec3, Vec3) {
    let helper = if u.x.abs() < 0.9 { v(1.0, 0.0, 0.0) } else { v(0.0, 1.0, 0.0) };
    let p = u.cross(helper);
    let p = p * (1.0 / p.norm());
    (p, u.cross(p))
}

/// Cylinder grid plus the two outward hemispheres.
pub fn sample_capsule(a: Vec3, b: Vec3, r: f64, n: usize) -> Vec<Vec3> {
    let axis = b - a;
    let len = axis.norm();
    let u = axis * (1.0 / len);
    let (p, q) = basis(u);
    let cyl_area = 2.0 * std::f64::consts::PI * r * len;
    let cap_area = 4.0 * std::f64::consts::PI * r * r;
    let n_cyl = ((n as f64) * cyl_area / (cyl_area + cap_area)) as usize;
    let n_cap = n - n_cyl;
    let around = ((n_cyl as f64 * 2.0 * std::f64::consts::PI * r / len).sqrt().ceil() as usize).max(8);
    let along = (n_cyl / around).max(2);
    let mut out = Vec::with_capacity(n + 16);
    for i in 0..along {
        let s = i as f64 / (along - 1) as f64;
        for j in 0..around {
            let th = 2.0 * std::f64::consts::PI * j as f64 / around as f64;
            out.push(a + u * (s * len) + (p * th.cos() + q * th.sin()) * r);
        }
    }
    for s in sample_sphere(a, r, n_cap) {
        if (s - a).dot(u) <= 0.0 {
            out.push(s);
        }
    }
    for s in sample_sphere(b, r, n_cap) {
        if (s - b).dot(u) >= 0.0 {
            out.push(s);
        }
    }
    out
}

/// Barycentric grid with about `n` points.
pub fn sample_triangle(a: Vec3, b: Vec3, c: Vec3, n: usize) -> Vec<Vec3> {
    let k = (((2 * n) as f64).sqrt() as usize).max(2);
    let mut out = Vec::with_capacity(n);
    for i in 0..=k {
        for j in 0..=(k - i) {
            let (s, t) = (i as f64 / k as f64, j as f64 / k as f64);
            out.push(a + (b - a) * s + (c - a) * t);
        }
    }
    out
}

pub fn sample_primitive(g: &GeometryPrimitive, n: usize) -> Vec<Vec3> {
    match g {
        GeometryPrimitive::Sphere { center, radius } => sample_sphere(*center, *radius, n),
        GeometryPrimitive::Capsule {
            endpoint_a,
            endpoint_b,
            radius,
        } => sample_capsule(*endpoint_a, *endpoint_b, *radius, n),
        GeometryPrimitive::TriangleMesh {
            vertices,
            triangles,
        } => triangles
            .iter()
            .flat_map(|t| {
                sample_triangle(vertices[t[0]], vertices[t[1]], vertices[t[2]], n / triangles.len())
            })
            .collect(),
    }
}

pub fn min_sample_distance(p: Vec3, samples: &[Vec3]) -> f64 {
    samples
        .iter()
        .map(|s| (*s - p).norm_squared())
        .fold(f64::INFINITY, f64::min)
        .sqrt()
}

/// Solid containment, written without the crate's kernels.
pub fn inside_solid(p: Vec3, g: &GeometryPrimitive) -> bool {
    match g {
        GeometryPrimitive::Sphere { center, radius } => (p - *center).norm() < *radius,
        GeometryPrimitive::Capsule {
            endpoint_a,
            endpoint_b,
            radius,
        } => {
            // Sample the axis finely; containment only needs a coarse answer.
            (0..=2000).any(|i| {
                let s = i as f64 / 2000.0;
                let c = *endpoint_a + (*endpoint_b - *endpoint_a) * s;
                (p - c).norm() < *radius
            })
        }
        GeometryPrimitive::TriangleMesh { .. } => false,
    }
}

fn rv(rng: &mut impl Rng, lo: f64, hi: f64) -> Vec3 {
    v(
        rng.random_range(lo..hi),
        rng.random_range(lo..hi),
        rng.random_range(lo..hi),
    )
}

/// Small random primitive near the origin.
pub fn random_primitive(rng: &mut impl Rng) -> GeometryPrimitive {
    match rng.random_range(0..3) {
        0 => GeometryPrimitive::Sphere {
            center: rv(rng, -5.0, 5.0),
            radius: rng.random_range(0.5..4.0),
        },
        1 => {
            let a = rv(rng, -6.0, 6.0);
            let mut b = rv(rng, -6.0, 6.0);
            while (b - a).norm() < 1.0 {
                b = rv(rng, -6.0, 6.0);
            }
            GeometryPrimitive::Capsule {
                endpoint_a: a,
                endpoint_b: b,
                radius: rng.random_range(0.5..2.5),
            }
        }
        _ => {
            let nv = rng.random_range(3..6);
            let vertices: Vec<Vec3> = (0..nv).map(|_| rv(rng, -6.0, 6.0)).collect();
            let nt = rng.random_range(1..4);
            let triangles = (0..nt)
                .map(|_| {
                    let mut idx: Vec<usize> = (0..nv).collect();
                    for i in 0..3 {
                        let j = rng.random_range(i..nv);
                        idx.swap(i, j);
                    }
                    [idx[0], idx[1], idx[2]]
                })
                .collect();
            GeometryPrimitive::TriangleMesh {
                vertices,
                triangles,
            }
        }
    }
}

// ---------------------------------------------------------------------------
// Monitor: brute-force re-scan oracle.

/// Violation identity used for multiset comparison.
pub type Sig = (u64, ErrorType, i64, i64);

fn q(x: f64) -> i64 {
    (x * 1e6).round() as i64
}

pub fn signature(v: &Violation) -> Sig {
    let second = v.measured.get(1).map_or(0, |m| q(m.value));
    (v.t, v.error_type, q(v.measured[0].value), second)
}

pub fn signatures(vs: &[Violation]) -> Vec<Sig> {
    let mut s: Vec<Sig> = vs.iter().map(signature).collect();
    s.sort();
    s
}

fn segment_distance(p: Vec3, a: Vec3, b: Vec3) -> f64 {
    let ab = b - a;
    let t = ((p - a).dot(ab) / ab.dot(ab)).clamp(0.0, 1.0);
    (p - (a + ab * t)).norm()
}

fn surface_distance(p: Vec3, g: &GeometryPrimitive) -> f64 {
    match g {
        GeometryPrimitive::Sphere { center, radius } => ((p - *center).norm() - radius).max(0.0),
        GeometryPrimitive::Capsule {
            endpoint_a,
            endpoint_b,
            radius,
        } => (segment_distance(p, *endpoint_a, *endpoint_b) - radius).max(0.0),
        GeometryPrimitive::TriangleMesh { .. } => {
            panic!("oracle covers the primitives used by protected anatomy only")
        }
    }
}

/// Re-evaluates every rule against every prefix of `events` and returns the
/// violation signatures, including the end-of-session checks.
pub fn oracle_violations(spec: &ProcedureSpec, scene: &Scene, events: &[SimEvent]) -> Vec<Sig> {
    let rules: Vec<(Option<usize>, SafetyRule)> = spec
        .rules()
        .map(|(s, r)| (s.map(|s| s.index), r.clone()))
        .collect();
    let mut out = Vec::new();
    for k in 0..events.len() {
        out.extend(fires_at(spec, scene, &rules, &events[..=k]));
    }
    if let Some(last) = events.last() {
        out.extend(at_end(scene, &rules, events, last.t));
    }
    out.sort();
    out
}

fn is_suture_step(spec: &ProcedureSpec, step: Option<usize>) -> bool {
    step.and_then(|i| spec.steps.iter().find(|s| s.index == i))
        .is_some_and(|s| s.action.to_lowercase().starts_with("sutur"))
}

/// Clips left on `vessel` after the events in `history`.
fn remaining_clips(history: &[SimEvent], vessel: &SimletId) -> (Vec<f64>, usize) {
    let mut clips: Vec<f64> = Vec::new();
    let mut dropped = 0;
    for e in history {
        match &e.kind {
            EventKind::ClipApplied {
                vessel_id,
                position,
            } if vessel_id == vessel => clips.push(*position),
            EventKind::Cut {
                anatomy_id,
                position,
            } if anatomy_id == vessel => {
                if !clips.is_empty() && clips.iter().all(|c| position < c) {
                    dropped += clips.len();
                    clips.clear();
                }
            }
            _ => {}
        }
    }
    (clips, dropped)
}

fn edges_after(scene: &Scene, history: &[SimEvent]) -> Vec<(SimletId, SimletId)> {
    let mut edges: Vec<(SimletId, SimletId)> = scene
        .attachment_graph
        .iter()
        .map(|e| (e.child_id.clone(), e.parent_id.clone()))
        .collect();
    for e in history {
        if let EventKind::Detach {
            child_id,
            parent_id,
        } = &e.kind
        {
            edges.retain(|(a, b)| !((a == child_id && b == parent_id) || (a == parent_id && b == child_id)));
        }
    }
    edges
}

fn fires_at(
    spec: &ProcedureSpec,
    scene: &Scene,
    rules: &[(Option<usize>, SafetyRule)],
    prefix: &[SimEvent],
) -> Vec<Sig> {
    let (last, history) = prefix.split_last().unwrap();
    let t = last.t;
    let mut out = Vec::new();
    for (step, rule) in rules {
        match (rule, &last.kind) {
            (
                SafetyRule::Proximity {
                    tool_id,
                    protected_anatomy_id,
                    min_distance,
                    active_only,
                },
                EventKind::ToolPose {
                    tool_id: tid,
                    tip,
                    activated,
                },
            ) if tid == tool_id => {
                let simlet = &scene.instances[protected_anatomy_id];
                let dist = |p: Vec3| {
                    simlet
                        .geometry
                        .iter()
                        .map(|g| surface_distance(p, g))
                        .fold(f64::INFINITY, f64::min)
                };
                let breach = |p: Vec3, on: bool| (on || !active_only) && dist(p) < *min_distance;
                let reset =
                    |p: Vec3, on: bool| (*active_only && !on) || dist(p) >= min_distance * 1.1;
                if !breach(*tip, *activated) {
                    continue;
                }
                // Onset iff the latest earlier pose that breached or reset was a reset.
                let earlier = history.iter().rev().find_map(|e| match &e.kind {
                    EventKind::ToolPose {
                        tool_id: x,
                        tip,
                        activated,
                    } if x == tool_id => {
                        if breach(*tip, *activated) {
                            Some(false)
                        } else if reset(*tip, *activated) {
                            Some(true)
                        } else {
                            None
                        }
                    }
                    _ => None,
                });
                if earlier.unwrap_or(true) {
                    let ty = if is_suture_step(spec, *step) { ErrorType::VI } else { ErrorType::I };
                    out.push((t, ty, q(dist(*tip)), 0));
                }
            }
            (
                SafetyRule::ForceLimit {
                    anatomy_id,
                    max_force,
                    max_stretch,
                },
                EventKind::ForceSample {
                    anatomy_id: a,
                    force,
                    stretch,
                },
            ) if a == anatomy_id => {
                let over = |f: f64, s: f64| f > *max_force || max_stretch.is_some_and(|m| s > m);
                let calm = |f: f64, s: f64| {
                    f <= max_force * 0.9 && max_stretch.is_none_or(|m| s <= m * 0.9)
                };
                if !over(*force, *stretch) {
                    continue;
                }
                let earlier = history.iter().rev().find_map(|e| match &e.kind {
                    EventKind::ForceSample {
                        anatomy_id: x,
                        force,
                        stretch,
                    } if x == anatomy_id => {
                        if over(*force, *stretch) {
                            Some(false)
                        } else if calm(*force, *stretch) {
                            Some(true)
                        } else {
                            None
                        }
                    }
                    _ => None,
                });
                if earlier.unwrap_or(true) {
                    let (first, second) = if *force > *max_force {
                        (*force, *stretch)
                    } else {
                        (*stretch, *force)
                    };
                    out.push((t, ErrorType::II, q(first), q(second)));
                }
            }
            (
                SafetyRule::ClipLayout {
                    vessel_id,
                    required_proximal,
                    required_distal,
                    must_precede_cut: true,
                },
                EventKind::Cut {
                    anatomy_id,
                    position,
                },
            ) if anatomy_id == vessel_id => {
                let (clips, _) = remaining_clips(history, vessel_id);
                let p = clips.iter().filter(|c| **c < *position).count() as u32;
                let d = clips.iter().filter(|c| **c > *position).count() as u32;
                if p < *required_proximal || d < *required_distal {
                    out.push((t, ErrorType::IV, q(p as f64), q(d as f64)));
                }
            }
            (
                SafetyRule::Completion {
                    target_anatomy_id, ..
                },
                EventKind::Retrieve { anatomy_id, .. },
            ) if anatomy_id != target_anatomy_id => {
                out.push((t, ErrorType::V, 0, 0));
            }
            (
                SafetyRule::SutureRegion {
                    anatomy_id,
                    region_id,
                },
                EventKind::Suture {
                    anatomy_id: a,
                    location,
                },
            ) if a == anatomy_id => {
                // Counted once per event: only the first governing rule reports.
                let governing: Vec<&GeometryPrimitive> = rules
                    .iter()
                    .filter_map(|(_, r)| match r {
                        SafetyRule::SutureRegion {
                            anatomy_id: x,
                            region_id: rid,
                        } if x == anatomy_id => scene.instances[x]
                            .suture_region(rid)
                            .map(|sr| &sr.geometry),
                        _ => None,
                    })
                    .collect();
                let first = rules.iter().find_map(|(_, r)| match r {
                    SafetyRule::SutureRegion {
                        anatomy_id: x,
                        region_id: rid,
                    } if x == anatomy_id => Some(rid),
                    _ => None,
                });
                if first != Some(region_id) {
                    continue;
                }
                let d = governing
                    .iter()
                    .map(|g| surface_distance(*location, g))
                    .fold(f64::INFINITY, f64::min);
                if d > 0.0 {
                    out.push((t, ErrorType::VI, q(d), 0));
                }
            }
            _ => {}
        }
    }
    // Wrong-location cuts are judged against the catalog, not a rule.
    if let EventKind::Cut { anatomy_id, .. } = &last.kind {
        let s = &scene.instances[anatomy_id];
        let named = spec.steps.iter().any(|st| {
            &st.anatomy_id == anatomy_id && {
                let a = st.action.to_lowercase();
                a.starts_with("cut") || a.starts_with("dissect") || a.starts_with("incise")
            }
        });
        let ok = s.has(SimletFlag::Cuttable) && (s.has(SimletFlag::Clippable) || named);
        if !ok {
            out.push((t, ErrorType::I, 0, 0));
        }
    }
    out
}

fn at_end(
    scene: &Scene,
    rules: &[(Option<usize>, SafetyRule)],
    events: &[SimEvent],
    t: u64,
) -> Vec<Sig> {
    let mut out = Vec::new();
    let foreign = rules
        .iter()
        .any(|(_, r)| matches!(r, SafetyRule::NoForeignBodies));
    if foreign {
        let vessels: BTreeSet<&SimletId> = scene
            .instances
            .values()
            .filter(|s| s.has(SimletFlag::Clippable))
            .map(|s| &s.id)
            .collect();
        for v in vessels {
            let (_, dropped) = remaining_clips(events, v);
            for _ in 0..dropped {
                out.push((t, ErrorType::III, q(1.0), 0));
            }
        }
    }
    for (_, rule) in rules {
        if let SafetyRule::Completion {
            target_anatomy_id,
            must_be_freed,
            must_be_retrieved_via_pouch,
        } = rule
        {
            let wrong = events.iter().any(|e| {
                matches!(&e.kind, EventKind::Retrieve { anatomy_id, .. } if anatomy_id != target_anatomy_id)
            });
            let achieved = (0..events.len()).any(|k| match &events[k].kind {
                EventKind::Retrieve {
                    anatomy_id,
                    via_pouch,
                } if anatomy_id == target_anatomy_id => {
                    let free = edges_after(scene, &events[..k])
                        .iter()
                        .all(|(a, b)| a != anatomy_id && b != anatomy_id);
                    (!must_be_freed || free) && (!must_be_retrieved_via_pouch || *via_pouch)
                }
                _ => false,
            });
            if !achieved && !wrong {
                out.push((t, ErrorType::V, 0, 0));
            }
        }
    }
    out
}

/// Random valid event stream of at most `max_len` events over the scene.
pub fn random_stream(
    rng: &mut impl Rng,
    catalog: &Catalog,
    scene: &Scene,
    max_len: usize,
) -> Vec<SimEvent> {
    let simlets: Vec<SimletId> = scene.instances.keys().cloned().collect();
    let clippable: Vec<SimletId> = scene
        .instances
        .values()
        .filter(|s| s.has(SimletFlag::Clippable))
        .map(|s| s.id.clone())
        .collect();
    let tools: Vec<_> = catalog.tools().map(|t| t.id.clone()).collect();
    let pick = |rng: &mut _, xs: &[SimletId]| xs[Rng::random_range(rng, 0..xs.len())].clone();
    let n = rng.random_range(1..=max_len);
    let end = rng.random_bool(0.5);
    let mut t = 0u64;
    let mut out = Vec::with_capacity(n);
    for i in 0..n {
        t += 50 * rng.random_range(0..3u64);
        if end && i == n - 1 {
            out.push(SimEvent::new(t, EventKind::SessionEnd));
            break;
        }
        let kind = match rng.random_range(0..100) {
            0..=39 => EventKind::ToolPose {
                tool_id: if rng.random_bool(0.6) {
                    "maryland_dissector".into()
                } else {
                    tools[rng.random_range(0..tools.len())].clone()
                },
                tip: v(
                    rng.random_range(-12.0..14.0),
                    rng.random_range(-6.0..6.0),
                    rng.random_range(-8.0..108.0),
                ),
                activated: rng.random_bool(0.7),
            },
            40..=59 => EventKind::ForceSample {
                anatomy_id: if rng.random_bool(0.7) {
                    "cystic_duct".into()
                } else {
                    pick(rng, &simlets)
                },
                force: rng.random_range(0.0..3.0),
                stretch: rng.random_range(0.9..1.8),
            },
            60..=71 => EventKind::ClipApplied {
                vessel_id: pick(rng, &clippable),
                position: rng.random_range(0.0..1.0),
            },
            72..=81 => EventKind::Cut {
                anatomy_id: if rng.random_bool(0.6) {
                    pick(rng, &clippable)
                } else {
                    pick(rng, &simlets)
                },
                position: rng.random_range(0.0..1.0),
            },
            82..=89 => {
                let edges: Vec<_> = scene.attachment_graph.iter().collect();
                let e = edges[rng.random_range(0..edges.len())];
                EventKind::Detach {
                    child_id: e.child_id.clone(),
                    parent_id: e.parent_id.clone(),
                }
            }
            90..=95 => EventKind::Retrieve {
                anatomy_id: if rng.random_bool(0.6) {
                    "gallbladder".into()
                } else {
                    pick(rng, &simlets)
                },
                via_pouch: rng.random_bool(0.7),
            },
            _ => EventKind::Suture {
                anatomy_id: pick(rng, &simlets),
                location: v(
                    rng.random_range(0.0..40.0),
                    rng.random_range(-5.0..5.0),
                    rng.random_range(55.0..85.0),
                ),
            },
        };
        out.push(SimEvent::new(t, kind));
    }
    out
}

pub fn golden_scene(catalog: &Catalog, spec: &ProcedureSpec) -> Scene {
    compose_for_spec(catalog, spec).unwrap()
}

// ---------------------------------------------------------------------------
// Service fixture.

/// Starts the service on an ephemeral port; returns its base URL.
pub async fn spawn_service(catalog: Catalog, out: &Path) -> String {
    let state = surgsafe::service::AppState::new(catalog, out.to_path_buf(), None);
    let listener = tokio::net::TcpListener::bind("127.0.0.1:0").await.unwrap();
    let addr = listener.local_addr().unwrap();
    tokio::spawn(surgsafe::service::serve(listener, state));
    format!("http://{addr}")
}

pub fn events_jsonl(events: &[SimEvent]) -> String {
    events
        .iter()
        .map(|e| serde_json::to_string(e).unwrap() + "\n")
        .collect()
}

/// Report JSON with the session id masked out.
pub fn masked(report: &surgsafe::model::SessionReport) -> String {
    serde_json::to_string(report)
        .unwrap()
        .replace(&report.session_id, "<session>")
}
