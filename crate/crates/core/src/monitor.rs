//! Compiles a validated spec into stateful monitors and runs them over a
//! session's event stream.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::catalog::{AttachmentEdge, Catalog, Scene};
use crate::geom::{dist_point_primitive, dist_point_simlet};
use crate::model::{
    Achievement, AchievementKind, ActionKind, ErrorType, EventKind, GeometryPrimitive,
    Measurement, ProcedureSpec, SafetyRule, SimEvent, SimletFlag, SimletId, TaskStep, ToolId,
    Unit, Violation,
};
use crate::report::{snapshot_base_name, DroppedClip, SceneState, ToolState};

/// Episode exit for proximity: distance back above this multiple of the limit.
pub const PROXIMITY_EXIT_FACTOR: f64 = 1.1;
/// Episode exit for force: every value at or below this multiple of its limit.
pub const FORCE_EXIT_FACTOR: f64 = 0.9;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum CompileError {
    #[error("rule references '{0}', which is not in the scene")]
    MissingAnatomy(String),
    #[error("rule references unknown tool '{0}'")]
    UnknownTool(String),
    #[error("suture region '{region}' is not declared on '{anatomy}'")]
    UnknownRegion { anatomy: String, region: String },
    #[error("procedure completion must be a retrieve rule")]
    BadCompletion,
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum MonitorError {
    #[error("t={t}: unknown id '{id}'")]
    UnknownId { t: u64, id: String },
    #[error("t={t}: timestamp decreases (previous event at t={previous})")]
    DecreasingTimestamp { t: u64, previous: u64 },
    #[error("t={t}: {message}")]
    OutOfRange { t: u64, message: String },
    #[error("t={t}: event after session end")]
    AfterEnd { t: u64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub enum AlertKind {
    ToolTipRed,
    VesselFlash,
}

/// Presentation cue at the onset of a breach episode.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct ImmediateAlert {
    pub t: u64,
    pub kind: AlertKind,
    pub subject_id: String,
    pub measured: Measurement,
    pub threshold: Measurement,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "output", rename_all = "camelCase")]
pub enum MonitorOutput {
    Alert(ImmediateAlert),
    Violation(Violation),
}

impl MonitorOutput {
    pub fn as_violation(&self) -> Option<&Violation> {
        match self {
            MonitorOutput::Violation(v) => Some(v),
            MonitorOutput::Alert(_) => None,
        }
    }
}

#[derive(Debug, Clone)]
pub struct ProximityMonitor {
    pub tool_id: ToolId,
    pub protected_id: SimletId,
    pub min_distance: f64,
    pub active_only: bool,
    /// VI when the rule belongs to a suture step, I otherwise.
    pub error_type: ErrorType,
    pub in_episode: bool,
}

#[derive(Debug, Clone)]
pub struct ForceMonitor {
    pub anatomy_id: SimletId,
    pub max_force: f64,
    pub max_stretch: Option<f64>,
    pub in_episode: bool,
    pub peak_force: f64,
    pub peak_stretch: f64,
}

#[derive(Debug, Clone)]
pub struct ClipLayoutMonitor {
    pub vessel_id: SimletId,
    pub required_proximal: u32,
    pub required_distal: u32,
    pub must_precede_cut: bool,
}

#[derive(Debug, Clone)]
pub struct SutureMonitor {
    pub anatomy_id: SimletId,
    pub region_id: String,
    pub region: GeometryPrimitive,
}

#[derive(Debug, Clone)]
pub struct CompletionMonitor {
    pub target_id: SimletId,
    pub must_be_freed: bool,
    pub via_pouch: bool,
    pub achieved: bool,
    pub wrong_retrieval: bool,
}

#[derive(Debug, Clone)]
struct StepGoal {
    index: usize,
    kind: ActionKind,
    anatomy_id: SimletId,
    label: String,
    /// Clips needed on the anatomy before a clip step counts as done.
    clips_needed: usize,
    done: bool,
}

/// Counts of each monitor family, for inspection.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct MonitorCounts {
    pub proximity: usize,
    pub force: usize,
    pub clip_layout: usize,
    pub foreign_body: usize,
    pub suture: usize,
    pub completion: usize,
}

/// All per-session monitor state.
#[derive(Debug, Clone)]
pub struct MonitorSet {
    scene: Scene,
    tools: BTreeSet<ToolId>,
    pub proximity: Vec<ProximityMonitor>,
    pub force: Vec<ForceMonitor>,
    pub clip_layouts: Vec<ClipLayoutMonitor>,
    pub foreign_bodies: bool,
    pub sutures: Vec<SutureMonitor>,
    pub completion: CompletionMonitor,
    clip_map: BTreeMap<SimletId, Vec<f64>>,
    clips_applied: BTreeMap<SimletId, usize>,
    dropped: Vec<DroppedClip>,
    first_cut: BTreeMap<SimletId, f64>,
    attachments: BTreeSet<AttachmentEdge>,
    steps: Vec<StepGoal>,
    achievements: Vec<Achievement>,
    tool_states: BTreeMap<ToolId, ToolState>,
    records: Vec<(Violation, SceneState)>,
    used_names: BTreeSet<String>,
    last_t: Option<u64>,
    finalized: bool,
}

/// Builds one monitor per safety rule of the spec.
pub fn compile_monitors(
    spec: &ProcedureSpec,
    scene: &Scene,
    catalog: &Catalog,
) -> Result<MonitorSet, CompileError> {
    let in_scene = |id: &SimletId| {
        if scene.contains(id) {
            Ok(())
        } else {
            Err(CompileError::MissingAnatomy(id.to_string()))
        }
    };

    let mut proximity = Vec::new();
    let mut force = Vec::new();
    let mut clip_layouts = Vec::new();
    let mut foreign_bodies = false;
    let mut sutures = Vec::new();
    let mut completion = None;

    for (step, rule) in spec.rules() {
        for id in rule.anatomy_refs() {
            in_scene(id)?;
        }
        match rule {
            SafetyRule::Proximity {
                tool_id,
                protected_anatomy_id,
                min_distance,
                active_only,
            } => {
                if catalog.tool(tool_id).is_none() {
                    return Err(CompileError::UnknownTool(tool_id.to_string()));
                }
                let suture_step =
                    step.is_some_and(|s: &TaskStep| s.action_kind() == ActionKind::Suture);
                proximity.push(ProximityMonitor {
                    tool_id: tool_id.clone(),
                    protected_id: protected_anatomy_id.clone(),
                    min_distance: *min_distance,
                    active_only: *active_only,
                    error_type: if suture_step { ErrorType::VI } else { ErrorType::I },
                    in_episode: false,
                });
            }
            SafetyRule::ForceLimit {
                anatomy_id,
                max_force,
                max_stretch,
            } => force.push(ForceMonitor {
                anatomy_id: anatomy_id.clone(),
                max_force: *max_force,
                max_stretch: *max_stretch,
                in_episode: false,
                peak_force: 0.0,
                peak_stretch: 0.0,
            }),
            SafetyRule::NoForeignBodies => foreign_bodies = true,
            SafetyRule::ClipLayout {
                vessel_id,
                required_proximal,
                required_distal,
                must_precede_cut,
            } => clip_layouts.push(ClipLayoutMonitor {
                vessel_id: vessel_id.clone(),
                required_proximal: *required_proximal,
                required_distal: *required_distal,
                must_precede_cut: *must_precede_cut,
            }),
            SafetyRule::Completion {
                target_anatomy_id,
                must_be_freed,
                must_be_retrieved_via_pouch,
            } => {
                if step.is_some() {
                    return Err(CompileError::BadCompletion);
                }
                completion = Some(CompletionMonitor {
                    target_id: target_anatomy_id.clone(),
                    must_be_freed: *must_be_freed,
                    via_pouch: *must_be_retrieved_via_pouch,
                    achieved: false,
                    wrong_retrieval: false,
                });
            }
            SafetyRule::SutureRegion {
                anatomy_id,
                region_id,
            } => {
                let region = scene
                    .get(anatomy_id)
                    .and_then(|s| s.suture_region(region_id))
                    .ok_or_else(|| CompileError::UnknownRegion {
                        anatomy: anatomy_id.to_string(),
                        region: region_id.clone(),
                    })?;
                sutures.push(SutureMonitor {
                    anatomy_id: anatomy_id.clone(),
                    region_id: region_id.clone(),
                    region: region.geometry.clone(),
                });
            }
        }
    }
    let completion = completion.ok_or(CompileError::BadCompletion)?;

    let steps = spec
        .steps
        .iter()
        .map(|s| {
            in_scene(&s.anatomy_id)?;
            let clips_needed = s
                .safety
                .iter()
                .filter_map(|r| match r {
                    SafetyRule::ClipLayout {
                        vessel_id,
                        required_proximal,
                        required_distal,
                        ..
                    } if vessel_id == &s.anatomy_id => {
                        Some((required_proximal + required_distal) as usize)
                    }
                    _ => None,
                })
                .max()
                .unwrap_or(1);
            Ok(StepGoal {
                index: s.index,
                kind: s.action_kind(),
                anatomy_id: s.anatomy_id.clone(),
                label: format!(
                    "Step {}: {} {}",
                    s.index,
                    s.action,
                    scene.get(&s.anatomy_id).map_or("", |x| x.name.as_str())
                ),
                clips_needed,
                done: false,
            })
        })
        .collect::<Result<Vec<_>, CompileError>>()?;

    let clip_map = scene
        .instances
        .values()
        .filter(|s| s.has(SimletFlag::Clippable))
        .map(|s| (s.id.clone(), Vec::new()))
        .collect();

    Ok(MonitorSet {
        scene: scene.clone(),
        tools: catalog.tools().map(|t| t.id.clone()).collect(),
        proximity,
        force,
        clip_layouts,
        foreign_bodies,
        sutures,
        completion,
        clip_map,
        clips_applied: BTreeMap::new(),
        dropped: Vec::new(),
        first_cut: BTreeMap::new(),
        attachments: scene.attachment_graph.clone(),
        steps,
        achievements: Vec::new(),
        tool_states: BTreeMap::new(),
        records: Vec::new(),
        used_names: BTreeSet::new(),
        last_t: None,
        finalized: false,
    })
}

fn mm(v: f64) -> Measurement {
    Measurement::new(v, Unit::Millimeter)
}

impl MonitorSet {
    pub fn counts(&self) -> MonitorCounts {
        MonitorCounts {
            proximity: self.proximity.len(),
            force: self.force.len(),
            clip_layout: self.clip_layouts.len(),
            foreign_body: usize::from(self.foreign_bodies),
            suture: self.sutures.len(),
            completion: 1,
        }
    }

    pub fn scene(&self) -> &Scene {
        &self.scene
    }

    pub fn clip_map(&self) -> &BTreeMap<SimletId, Vec<f64>> {
        &self.clip_map
    }

    pub fn dropped_clips(&self) -> &[DroppedClip] {
        &self.dropped
    }

    pub fn attachments(&self) -> &BTreeSet<AttachmentEdge> {
        &self.attachments
    }

    pub fn achievements(&self) -> &[Achievement] {
        &self.achievements
    }

    pub fn violations(&self) -> Vec<Violation> {
        self.records.iter().map(|(v, _)| v.clone()).collect()
    }

    /// Each violation with the scene state captured when it fired.
    pub fn records(&self) -> &[(Violation, SceneState)] {
        &self.records
    }

    pub fn is_finalized(&self) -> bool {
        self.finalized
    }

    pub fn last_t(&self) -> Option<u64> {
        self.last_t
    }

    /// True when every step and the completion criterion were achieved.
    pub fn achievements_complete(&self) -> bool {
        self.completion.achieved && self.steps.iter().all(|s| s.done)
    }

    pub fn scene_state(&self, t: u64) -> SceneState {
        SceneState {
            t,
            tools: self.tool_states.clone(),
            clip_map: self.clip_map.clone(),
            dropped_clips: self.dropped.clone(),
            attachments: self.attachments.iter().cloned().collect(),
        }
    }

    /// Validates an event against the current state without applying it.
    pub fn check(&self, e: &SimEvent) -> Result<(), MonitorError> {
        let t = e.t;
        if self.finalized {
            return Err(MonitorError::AfterEnd { t });
        }
        if let Some(previous) = self.last_t {
            if t < previous {
                return Err(MonitorError::DecreasingTimestamp { t, previous });
            }
        }
        e.check_ranges()
            .map_err(|message| MonitorError::OutOfRange { t, message })?;
        let simlet = |id: &SimletId| {
            if self.scene.contains(id) {
                Ok(())
            } else {
                Err(MonitorError::UnknownId {
                    t,
                    id: id.to_string(),
                })
            }
        };
        match &e.kind {
            EventKind::ToolPose { tool_id, .. } => {
                if !self.tools.contains(tool_id) {
                    return Err(MonitorError::UnknownId {
                        t,
                        id: tool_id.to_string(),
                    });
                }
                Ok(())
            }
            EventKind::ForceSample { anatomy_id, .. }
            | EventKind::Cut { anatomy_id, .. }
            | EventKind::Suture { anatomy_id, .. }
            | EventKind::Retrieve { anatomy_id, .. } => simlet(anatomy_id),
            EventKind::ClipApplied { vessel_id, .. } => {
                simlet(vessel_id)?;
                if self.clip_map.contains_key(vessel_id) {
                    Ok(())
                } else {
                    Err(MonitorError::OutOfRange {
                        t,
                        message: format!("'{vessel_id}' is not clippable"),
                    })
                }
            }
            EventKind::Detach {
                child_id,
                parent_id,
            } => {
                simlet(child_id)?;
                simlet(parent_id)
            }
            EventKind::SessionEnd => Ok(()),
        }
    }

    /// Applies one event. On error the state is left unchanged.
    pub fn step(&mut self, e: &SimEvent) -> Result<Vec<MonitorOutput>, MonitorError> {
        self.check(e)?;
        self.last_t = Some(e.t);
        let t = e.t;
        let mut out = Vec::new();
        match &e.kind {
            EventKind::ToolPose {
                tool_id,
                tip,
                activated,
            } => {
                self.tool_states.insert(
                    tool_id.clone(),
                    ToolState {
                        tip: *tip,
                        activated: *activated,
                    },
                );
                for i in 0..self.proximity.len() {
                    let m = &self.proximity[i];
                    if &m.tool_id != tool_id {
                        continue;
                    }
                    let armed = *activated || !m.active_only;
                    let d = dist_point_simlet(*tip, &self.scene.instances[&m.protected_id]);
                    if m.in_episode {
                        if !armed || d >= m.min_distance * PROXIMITY_EXIT_FACTOR {
                            self.proximity[i].in_episode = false;
                        }
                    } else if armed && d < m.min_distance {
                        self.proximity[i].in_episode = true;
                        let m = &self.proximity[i];
                        let (kind, subject, min) =
                            (m.error_type, m.protected_id.to_string(), m.min_distance);
                        out.push(MonitorOutput::Alert(ImmediateAlert {
                            t,
                            kind: AlertKind::ToolTipRed,
                            subject_id: tool_id.to_string(),
                            measured: mm(d),
                            threshold: mm(min),
                        }));
                        out.push(self.violate(
                            t,
                            kind,
                            vec![mm(d)],
                            vec![mm(min)],
                            vec![subject, tool_id.to_string()],
                        ));
                    }
                }
            }
            EventKind::ForceSample {
                anatomy_id,
                force,
                stretch,
            } => {
                for i in 0..self.force.len() {
                    let m = &mut self.force[i];
                    if &m.anatomy_id != anatomy_id {
                        continue;
                    }
                    let force_over = *force > m.max_force;
                    let stretch_over = m.max_stretch.is_some_and(|s| *stretch > s);
                    if m.in_episode {
                        m.peak_force = m.peak_force.max(*force);
                        m.peak_stretch = m.peak_stretch.max(*stretch);
                        let calm = *force <= m.max_force * FORCE_EXIT_FACTOR
                            && m.max_stretch
                                .is_none_or(|s| *stretch <= s * FORCE_EXIT_FACTOR);
                        if calm {
                            m.in_episode = false;
                        }
                    } else if force_over || stretch_over {
                        m.in_episode = true;
                        m.peak_force = *force;
                        m.peak_stretch = *stretch;
                        let f = Measurement::new(*force, Unit::Newton);
                        let s = Measurement::new(*stretch, Unit::Ratio);
                        let fmax = Measurement::new(m.max_force, Unit::Newton);
                        let (measured, mut threshold) = if force_over {
                            (vec![f, s], vec![fmax])
                        } else {
                            (vec![s, f], vec![])
                        };
                        if let Some(x) = m.max_stretch {
                            threshold.push(Measurement::new(x, Unit::Ratio));
                        }
                        if !force_over {
                            threshold.push(fmax);
                        }
                        out.push(MonitorOutput::Alert(ImmediateAlert {
                            t,
                            kind: AlertKind::VesselFlash,
                            subject_id: anatomy_id.to_string(),
                            measured: measured[0],
                            threshold: threshold[0],
                        }));
                        out.push(self.violate(
                            t,
                            ErrorType::II,
                            measured,
                            threshold,
                            vec![anatomy_id.to_string()],
                        ));
                    }
                }
                self.mark_steps(t, anatomy_id, |k| {
                    matches!(k, ActionKind::Retract | ActionKind::Other)
                });
            }
            EventKind::ClipApplied {
                vessel_id,
                position,
            } => {
                let clips = self.clip_map.get_mut(vessel_id).expect("checked clippable");
                let at = clips.partition_point(|c| c <= position);
                clips.insert(at, *position);
                *self.clips_applied.entry(vessel_id.clone()).or_default() += 1;
                let count = clips.len();
                for i in 0..self.steps.len() {
                    let g = &self.steps[i];
                    if !g.done
                        && &g.anatomy_id == vessel_id
                        && matches!(g.kind, ActionKind::Clip | ActionKind::Other)
                        && count >= g.clips_needed
                    {
                        self.achieve_step(i, t);
                    }
                }
            }
            EventKind::Cut {
                anatomy_id,
                position,
            } => self.on_cut(t, anatomy_id, *position, &mut out),
            EventKind::Suture {
                anatomy_id,
                location,
            } => {
                let governing: Vec<&SutureMonitor> = self
                    .sutures
                    .iter()
                    .filter(|m| &m.anatomy_id == anatomy_id)
                    .collect();
                if !governing.is_empty() {
                    let d = governing
                        .iter()
                        .map(|m| dist_point_primitive(*location, &m.region))
                        .fold(f64::INFINITY, f64::min);
                    if d > 0.0 {
                        let regions = governing
                            .iter()
                            .map(|m| m.region_id.clone())
                            .collect::<Vec<_>>();
                        let mut subjects = vec![anatomy_id.to_string()];
                        subjects.extend(regions);
                        out.push(self.violate(t, ErrorType::VI, vec![mm(d)], vec![mm(0.0)], subjects));
                    }
                }
                self.mark_steps(t, anatomy_id, |k| {
                    matches!(k, ActionKind::Suture | ActionKind::Other)
                });
            }
            EventKind::Detach {
                child_id,
                parent_id,
            } => self.on_detach(t, child_id, parent_id),
            EventKind::Retrieve {
                anatomy_id,
                via_pouch,
            } => {
                self.mark_steps(t, anatomy_id, |k| {
                    matches!(k, ActionKind::Retrieve | ActionKind::Other)
                });
                let c = &self.completion;
                if anatomy_id != &c.target_id {
                    self.completion.wrong_retrieval = true;
                    let target = self.completion.target_id.to_string();
                    out.push(self.violate(
                        t,
                        ErrorType::V,
                        vec![Measurement::new(0.0, Unit::Count)],
                        vec![Measurement::new(1.0, Unit::Count)],
                        vec![anatomy_id.to_string(), target],
                    ));
                } else if !c.achieved
                    && (!c.must_be_freed || self.edge_count(anatomy_id) == 0)
                    && (!c.via_pouch || *via_pouch)
                {
                    self.completion.achieved = true;
                    let label = format!(
                        "retrieved {}{}",
                        self.name(anatomy_id),
                        if *via_pouch { " via pouch" } else { "" }
                    );
                    self.achievements.push(Achievement {
                        kind: AchievementKind::Completion,
                        step_index: None,
                        t,
                        label,
                    });
                }
            }
            EventKind::SessionEnd => {
                let before = self.records.len();
                self.finalize_at(t);
                out.extend(
                    self.records[before..]
                        .iter()
                        .map(|(v, _)| MonitorOutput::Violation(v.clone())),
                );
            }
        }
        Ok(out)
    }

    /// End-of-session checks. Idempotent; also reached through `SessionEnd`.
    pub fn finalize(&mut self) -> (Vec<Achievement>, Vec<Violation>) {
        if !self.finalized {
            self.finalize_at(self.last_t.unwrap_or(0));
        }
        (self.achievements.clone(), self.violations())
    }

    fn finalize_at(&mut self, t: u64) {
        self.finalized = true;
        for i in 0..self.clip_layouts.len() {
            let m = &self.clip_layouts[i];
            if m.must_precede_cut {
                continue;
            }
            let Some(&cut) = self.first_cut.get(&m.vessel_id) else {
                continue;
            };
            let m = m.clone();
            if let Some(v) = self.judge_layout(t, &m, cut) {
                self.push_record(v, t);
            }
        }
        if self.foreign_bodies {
            for clip in self.dropped.clone() {
                let v = self.violation(
                    t,
                    ErrorType::III,
                    vec![Measurement::new(1.0, Unit::Clip)],
                    vec![Measurement::new(0.0, Unit::Clip)],
                    vec![clip.clip_id.clone(), clip.vessel_id.to_string()],
                );
                self.push_record(v, t);
            }
        }
        if !self.completion.achieved && !self.completion.wrong_retrieval {
            let v = self.violation(
                t,
                ErrorType::V,
                vec![Measurement::new(0.0, Unit::Count)],
                vec![Measurement::new(1.0, Unit::Count)],
                vec![self.completion.target_id.to_string()],
            );
            self.push_record(v, t);
        }
    }

    fn on_cut(&mut self, t: u64, anatomy_id: &SimletId, position: f64, out: &mut Vec<MonitorOutput>) {
        self.first_cut.entry(anatomy_id.clone()).or_insert(position);
        let simlet = &self.scene.instances[anatomy_id];
        let clippable = simlet.has(SimletFlag::Clippable);
        let named_by_step = self.steps.iter().any(|g| {
            &g.anatomy_id == anatomy_id
                && matches!(g.kind, ActionKind::Cut | ActionKind::Dissect)
        });
        let sanctioned = simlet.has(SimletFlag::Cuttable) && (clippable || named_by_step);
        if !sanctioned {
            out.push(self.violate(
                t,
                ErrorType::I,
                vec![mm(0.0)],
                vec![mm(0.0)],
                vec![anatomy_id.to_string()],
            ));
        }
        if clippable {
            let rules: Vec<ClipLayoutMonitor> = self
                .clip_layouts
                .iter()
                .filter(|m| &m.vessel_id == anatomy_id && m.must_precede_cut)
                .cloned()
                .collect();
            for m in rules {
                if let Some(v) = self.judge_layout(t, &m, position) {
                    self.push_record(v.clone(), t);
                    out.push(MonitorOutput::Violation(v));
                }
            }
            let clips = &self.clip_map[anatomy_id];
            if !clips.is_empty() && clips.iter().all(|&c| position < c) {
                let stranded = std::mem::take(self.clip_map.get_mut(anatomy_id).unwrap());
                let applied = self.clips_applied[anatomy_id];
                let first = applied - stranded.len();
                for (k, p) in stranded.into_iter().enumerate() {
                    self.dropped.push(DroppedClip {
                        clip_id: format!("{anatomy_id}#{}", first + k + 1),
                        vessel_id: anatomy_id.clone(),
                        position: p,
                    });
                }
            }
        }
        self.mark_steps(t, anatomy_id, |k| {
            matches!(k, ActionKind::Cut | ActionKind::Dissect | ActionKind::Other)
        });
    }

    fn judge_layout(&self, t: u64, m: &ClipLayoutMonitor, cut: f64) -> Option<Violation> {
        let clips = &self.clip_map[&m.vessel_id];
        let proximal = clips.iter().filter(|&&c| c < cut).count() as u32;
        let distal = clips.iter().filter(|&&c| c > cut).count() as u32;
        if proximal >= m.required_proximal && distal >= m.required_distal {
            return None;
        }
        Some(self.violation(
            t,
            ErrorType::IV,
            vec![
                Measurement::new(f64::from(proximal), Unit::ProximalClips),
                Measurement::new(f64::from(distal), Unit::DistalClips),
            ],
            vec![
                Measurement::new(f64::from(m.required_proximal), Unit::ProximalClips),
                Measurement::new(f64::from(m.required_distal), Unit::DistalClips),
            ],
            vec![m.vessel_id.to_string()],
        ))
    }

    fn on_detach(&mut self, t: u64, child: &SimletId, parent: &SimletId) {
        let Some(edge) = self
            .attachments
            .iter()
            .find(|e| e.joins(child, parent))
            .cloned()
        else {
            return;
        };
        self.attachments.remove(&edge);
        for id in [child, parent] {
            if self.edge_count(id) > 0 {
                continue;
            }
            if self.scene.instances[id].has(SimletFlag::RemovalTarget) {
                self.achievements.push(Achievement {
                    kind: AchievementKind::Freed,
                    step_index: None,
                    t,
                    label: format!("freed {}", self.name(id)),
                });
            }
            self.mark_steps(t, id, |k| matches!(k, ActionKind::Dissect | ActionKind::Other));
        }
    }

    fn edge_count(&self, id: &SimletId) -> usize {
        self.attachments.iter().filter(|e| e.touches(id)).count()
    }

    fn name(&self, id: &SimletId) -> String {
        self.scene
            .get(id)
            .map_or_else(|| id.to_string(), |s| s.name.clone())
    }

    fn mark_steps(&mut self, t: u64, anatomy_id: &SimletId, kinds: impl Fn(ActionKind) -> bool) {
        for i in 0..self.steps.len() {
            let g = &self.steps[i];
            if !g.done && &g.anatomy_id == anatomy_id && kinds(g.kind) {
                self.achieve_step(i, t);
            }
        }
    }

    fn achieve_step(&mut self, i: usize, t: u64) {
        let g = &mut self.steps[i];
        g.done = true;
        self.achievements.push(Achievement {
            kind: AchievementKind::Step,
            step_index: Some(g.index),
            t,
            label: g.label.clone(),
        });
    }

    fn violation(
        &self,
        t: u64,
        error_type: ErrorType,
        measured: Vec<Measurement>,
        threshold: Vec<Measurement>,
        subject_ids: Vec<String>,
    ) -> Violation {
        let base = snapshot_base_name(t, error_type, &measured);
        let mut name = base.clone();
        let mut k = 2;
        while self.used_names.contains(&name) {
            name = format!("{base}-{k}");
            k += 1;
        }
        Violation {
            t,
            error_type,
            measured,
            threshold,
            subject_ids,
            snapshot_base_name: name,
        }
    }

    fn push_record(&mut self, v: Violation, t: u64) {
        self.used_names.insert(v.snapshot_base_name.clone());
        let state = self.scene_state(t);
        self.records.push((v, state));
    }

    fn violate(
        &mut self,
        t: u64,
        error_type: ErrorType,
        measured: Vec<Measurement>,
        threshold: Vec<Measurement>,
        subject_ids: Vec<String>,
    ) -> MonitorOutput {
        let v = self.violation(t, error_type, measured, threshold, subject_ids);
        self.push_record(v.clone(), t);
        MonitorOutput::Violation(v)
    }
}
