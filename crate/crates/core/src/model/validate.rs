use serde::{Deserialize, Serialize};

use super::{ProcedureSpec, SafetyRule, SimletFlag};
use crate::catalog::Catalog;
use crate::specparse::{parse_completion, parse_safety};

/// One problem found in a spec. Findings are data, not failures.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct Finding {
    /// 1-based step index; `None` for procedure-level findings.
    pub step: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub field: Option<String>,
    /// 1-based column within the field text, for clause errors.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub position: Option<usize>,
    pub message: String,
}

impl Finding {
    fn at(step: Option<usize>, field: &str, message: impl Into<String>) -> Self {
        Finding {
            step,
            field: Some(field.to_string()),
            position: None,
            message: message.into(),
        }
    }
}

/// Checks every id, every invariant, and that each stored safety text
/// re-parses to the stored rules. Empty result means the spec compiles.
pub fn validate_spec(spec: &ProcedureSpec, catalog: &Catalog) -> Vec<Finding> {
    let mut out = Vec::new();
    if spec.steps.is_empty() {
        out.push(Finding::at(None, "steps", "procedure has no steps"));
    }
    for (pos, step) in spec.steps.iter().enumerate() {
        let at = Some(step.index);
        if step.index != pos + 1 {
            out.push(Finding::at(
                at,
                "index",
                format!("step index {} out of order (expected {})", step.index, pos + 1),
            ));
        }
        if step.action.trim().is_empty() {
            out.push(Finding::at(at, "action", "action is empty"));
        }
        if catalog.simlet(&step.anatomy_id).is_none() {
            out.push(Finding::at(
                at,
                "anatomy",
                format!("unresolved anatomy '{}'", step.anatomy_id),
            ));
        }
        let tool_ok = catalog.tool(&step.tool_id).is_some();
        if !tool_ok {
            out.push(Finding::at(
                at,
                "tool",
                format!("unresolved tool '{}'", step.tool_id),
            ));
        }
        let mut refs_ok = true;
        for rule in &step.safety {
            let before = out.len();
            check_rule(rule, catalog, at, "safety", &mut out);
            refs_ok &= out.len() == before;
            if matches!(rule, SafetyRule::Completion { .. }) {
                out.push(Finding::at(
                    at,
                    "safety",
                    "completion belongs in the procedure header, not in a step",
                ));
            }
        }
        if refs_ok && tool_ok {
            match parse_safety(&step.safety_text, catalog, Some(&step.tool_id)) {
                Ok(rules) if rules == step.safety => {}
                Ok(_) => out.push(Finding::at(
                    at,
                    "safety",
                    "safety text does not re-parse to the stored rules",
                )),
                Err(e) => out.push(Finding {
                    step: at,
                    field: Some("safety".into()),
                    position: Some(e.column),
                    message: e.to_string(),
                }),
            }
        }
    }

    match &spec.completion_rule {
        rule @ SafetyRule::Completion { .. } => {
            let before = out.len();
            check_rule(rule, catalog, None, "completion", &mut out);
            if out.len() == before && !spec.completion_text.trim().is_empty() {
                match parse_completion(&spec.completion_text, catalog) {
                    Ok(parsed) if &parsed == rule => {}
                    Ok(_) => out.push(Finding::at(
                        None,
                        "completion",
                        "completion text does not re-parse to the stored rule",
                    )),
                    Err(e) => out.push(Finding {
                        step: None,
                        field: Some("completion".into()),
                        position: e.position(),
                        message: e.kind.to_string(),
                    }),
                }
            }
        }
        _ => out.push(Finding::at(
            None,
            "completion",
            "procedure completion must be a retrieve rule",
        )),
    }
    out
}

fn check_rule(
    rule: &SafetyRule,
    catalog: &Catalog,
    step: Option<usize>,
    field: &str,
    out: &mut Vec<Finding>,
) {
    for msg in rule.check() {
        out.push(Finding::at(step, field, msg));
    }
    for id in rule.anatomy_refs() {
        if catalog.simlet(id).is_none() {
            out.push(Finding::at(step, field, format!("unresolved anatomy '{id}'")));
        }
    }
    match rule {
        SafetyRule::Proximity { tool_id, .. } if catalog.tool(tool_id).is_none() => {
            out.push(Finding::at(step, field, format!("unresolved tool '{tool_id}'")));
        }
        SafetyRule::ClipLayout { vessel_id, .. } => {
            if let Some(s) = catalog.simlet(vessel_id) {
                if !s.has(SimletFlag::Clippable) {
                    out.push(Finding::at(
                        step,
                        field,
                        format!("clip rule on '{vessel_id}', which is not clippable"),
                    ));
                }
            }
        }
        SafetyRule::SutureRegion {
            anatomy_id,
            region_id,
        } => {
            if let Some(s) = catalog.simlet(anatomy_id) {
                if s.suture_region(region_id).is_none() {
                    out.push(Finding::at(
                        step,
                        field,
                        format!("'{anatomy_id}' declares no suture region '{region_id}'"),
                    ));
                }
            }
        }
        _ => {}
    }
}
