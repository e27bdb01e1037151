use serde::{Deserialize, Serialize};

use super::{SimletId, ToolId};

/// A monitorable safety criterion. Each variant maps onto one of the six
/// surgical error classes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "rule", rename_all = "camelCase")]
pub enum SafetyRule {
    /// Tool must keep `min_distance` mm from the protected anatomy.
    #[serde(rename_all = "camelCase")]
    Proximity {
        tool_id: ToolId,
        protected_anatomy_id: SimletId,
        min_distance: f64,
        active_only: bool,
    },
    #[serde(rename_all = "camelCase")]
    ForceLimit {
        anatomy_id: SimletId,
        max_force: f64,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        max_stretch: Option<f64>,
    },
    NoForeignBodies,
    #[serde(rename_all = "camelCase")]
    ClipLayout {
        vessel_id: SimletId,
        required_proximal: u32,
        required_distal: u32,
        must_precede_cut: bool,
    },
    #[serde(rename_all = "camelCase")]
    Completion {
        target_anatomy_id: SimletId,
        must_be_freed: bool,
        must_be_retrieved_via_pouch: bool,
    },
    #[serde(rename_all = "camelCase")]
    SutureRegion {
        anatomy_id: SimletId,
        region_id: String,
    },
}

impl SafetyRule {
    /// Simlets the rule refers to, in declaration order.
    pub fn anatomy_refs(&self) -> Vec<&SimletId> {
        match self {
            SafetyRule::Proximity {
                protected_anatomy_id,
                ..
            } => vec![protected_anatomy_id],
            SafetyRule::ForceLimit { anatomy_id, .. } => vec![anatomy_id],
            SafetyRule::NoForeignBodies => vec![],
            SafetyRule::ClipLayout { vessel_id, .. } => vec![vessel_id],
            SafetyRule::Completion {
                target_anatomy_id, ..
            } => vec![target_anatomy_id],
            SafetyRule::SutureRegion { anatomy_id, .. } => vec![anatomy_id],
        }
    }

    /// Local invariants (positive thresholds, non-empty clip layout).
    pub fn check(&self) -> Vec<String> {
        let mut out = Vec::new();
        match self {
            SafetyRule::Proximity { min_distance, .. } => {
                if !(min_distance.is_finite() && *min_distance > 0.0) {
                    out.push(format!("proximity distance must be positive, got {min_distance}"));
                }
            }
            SafetyRule::ForceLimit {
                max_force,
                max_stretch,
                ..
            } => {
                if !(max_force.is_finite() && *max_force > 0.0) {
                    out.push(format!("force limit must be positive, got {max_force}"));
                }
                if let Some(s) = max_stretch {
                    if !(s.is_finite() && *s > 0.0) {
                        out.push(format!("stretch limit must be positive, got {s}"));
                    }
                }
            }
            SafetyRule::ClipLayout {
                required_proximal,
                required_distal,
                ..
            } => {
                if required_proximal + required_distal == 0 {
                    out.push("clip rule requires at least one clip".to_string());
                }
            }
            SafetyRule::NoForeignBodies
            | SafetyRule::Completion { .. }
            | SafetyRule::SutureRegion { .. } => {}
        }
        out
    }
}

/// Coarse classification of a step's action verb. Decides which events
/// count as performing the step and how proximity breaches are classified.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ActionKind {
    Dissect,
    Clip,
    Cut,
    Retract,
    Retrieve,
    Suture,
    Other,
}

impl ActionKind {
    pub fn classify(action: &str) -> ActionKind {
        let verb = action
            .split_whitespace()
            .next()
            .unwrap_or("")
            .to_lowercase();
        match verb.as_str() {
            "dissect" | "mobilize" | "mobilise" | "free" | "separate" | "detach" => {
                ActionKind::Dissect
            }
            "clip" | "ligate" | "staple" | "clamp" => ActionKind::Clip,
            "cut" | "incise" | "divide" | "transect" | "cauterize" | "cauterise" => {
                ActionKind::Cut
            }
            "retract" | "grasp" | "hold" | "expose" | "pull" => ActionKind::Retract,
            "retrieve" | "remove" | "extract" | "bag" => ActionKind::Retrieve,
            "suture" | "stitch" | "close" => ActionKind::Suture,
            _ => ActionKind::Other,
        }
    }
}

/// One authored step in the five-field format, with its parsed rules.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct TaskStep {
    /// 1-based position in the procedure.
    pub index: usize,
    pub action: String,
    pub anatomy_id: SimletId,
    pub tool_id: ToolId,
    pub safety: Vec<SafetyRule>,
    pub safety_text: String,
    pub comment: String,
}

impl TaskStep {
    pub fn action_kind(&self) -> ActionKind {
        ActionKind::classify(&self.action)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct ProcedureSpec {
    pub title: String,
    pub catalog_ref: String,
    pub steps: Vec<TaskStep>,
    /// Always a [`SafetyRule::Completion`].
    pub completion_rule: SafetyRule,
    /// Clause text the completion rule was parsed from.
    #[serde(default)]
    pub completion_text: String,
}

impl ProcedureSpec {
    /// Every rule in declaration order: step rules first, then the completion rule.
    pub fn rules(&self) -> impl Iterator<Item = (Option<&TaskStep>, &SafetyRule)> {
        self.steps
            .iter()
            .flat_map(|s| s.safety.iter().map(move |r| (Some(s), r)))
            .chain(std::iter::once((None, &self.completion_rule)))
    }
}
