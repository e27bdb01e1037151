//! The five-field step format (action, anatomy, tool, safety, comment),
//! the safety-clause language, canonical formatting and instruction pages.

mod clause;
mod instructions;
mod lexer;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::catalog::{Catalog, ResolveError};
use crate::model::{validate_spec, Finding, ProcedureSpec, SafetyRule, TaskStep};

pub use clause::{
    default_max_force, default_max_stretch, format_rule, format_safety, parse_safety,
    ClauseError, ClauseErrorKind, DEFAULT_MAX_FORCE_N, DEFAULT_MAX_STRETCH,
    DEFAULT_MIN_DISTANCE_MM, DEFAULT_TUBULAR_MAX_FORCE_N,
};
pub use instructions::{generate_instructions, write_instruction_pages, InstructionPage};

/// The five author-facing text fields of one step.
#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StepFields {
    pub action: String,
    pub anatomy: String,
    pub tool: String,
    #[serde(default)]
    pub safety: String,
    #[serde(default)]
    pub comment: String,
}

impl StepFields {
    pub fn new(action: &str, anatomy: &str, tool: &str, safety: &str, comment: &str) -> Self {
        Self {
            action: action.into(),
            anatomy: anatomy.into(),
            tool: tool.into(),
            safety: safety.into(),
            comment: comment.into(),
        }
    }
}

/// On-disk spec document: a header plus the step records.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SpecDocument {
    pub title: String,
    /// Path of the catalog file, relative to the spec file.
    pub catalog: String,
    /// Procedure-wide completion clause, e.g. `free and retrieve Gallbladder via pouch`.
    pub completion: String,
    pub steps: Vec<StepFields>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "camelCase")]
pub enum StepField {
    Action,
    Anatomy,
    Tool,
    Safety,
    Completion,
}

impl StepField {
    pub fn name(self) -> &'static str {
        match self {
            StepField::Action => "action",
            StepField::Anatomy => "anatomy",
            StepField::Tool => "tool",
            StepField::Safety => "safety",
            StepField::Completion => "completion",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum StepErrorKind {
    #[error("action is empty")]
    EmptyAction,
    #[error("{0}")]
    Name(ResolveError),
    #[error("{0}")]
    Clause(ClauseError),
    #[error("completion entry must be exactly one retrieve clause")]
    NotACompletion,
}

#[derive(Debug, Clone, PartialEq, Error)]
#[error("{} field: {kind}", field.name())]
pub struct StepError {
    pub field: StepField,
    pub kind: StepErrorKind,
}

impl StepError {
    fn new(field: StepField, kind: StepErrorKind) -> Self {
        Self { field, kind }
    }

    /// Column in the offending field, when known.
    pub fn position(&self) -> Option<usize> {
        match &self.kind {
            StepErrorKind::Clause(c) => Some(c.column),
            _ => None,
        }
    }

    fn finding(&self, step: Option<usize>) -> Finding {
        Finding {
            step,
            field: Some(self.field.name().to_string()),
            position: self.position(),
            message: self.kind.to_string(),
        }
    }
}

/// Parses one five-field record. The stored safety text is the canonical
/// rendering of the parsed rules.
pub fn parse_step(
    index: usize,
    fields: &StepFields,
    catalog: &Catalog,
) -> Result<TaskStep, StepError> {
    let action = fields.action.trim();
    if action.is_empty() {
        return Err(StepError::new(StepField::Action, StepErrorKind::EmptyAction));
    }
    let anatomy_id = catalog
        .resolve_simlet(&fields.anatomy)
        .map_err(|e| StepError::new(StepField::Anatomy, StepErrorKind::Name(e)))?;
    let tool_id = catalog
        .resolve_tool(&fields.tool)
        .map_err(|e| StepError::new(StepField::Tool, StepErrorKind::Name(e)))?;
    let safety = parse_safety(&fields.safety, catalog, Some(&tool_id))
        .map_err(|e| StepError::new(StepField::Safety, StepErrorKind::Clause(e)))?;
    Ok(TaskStep {
        index,
        action: action.to_string(),
        anatomy_id,
        tool_id,
        safety_text: format_safety(&safety, catalog),
        safety,
        comment: fields.comment.clone(),
    })
}

/// Canonical five-field text for a step.
pub fn format_step(step: &TaskStep, catalog: &Catalog) -> StepFields {
    StepFields {
        action: step.action.clone(),
        anatomy: catalog.simlet_name(&step.anatomy_id).to_string(),
        tool: catalog.tool_name(&step.tool_id).to_string(),
        safety: format_safety(&step.safety, catalog),
        comment: step.comment.clone(),
    }
}

pub fn parse_completion(text: &str, catalog: &Catalog) -> Result<SafetyRule, StepError> {
    let rules = parse_safety(text, catalog, None)
        .map_err(|e| StepError::new(StepField::Completion, StepErrorKind::Clause(e)))?;
    match rules.as_slice() {
        [rule @ SafetyRule::Completion { .. }] => Ok(rule.clone()),
        _ => Err(StepError::new(
            StepField::Completion,
            StepErrorKind::NotACompletion,
        )),
    }
}

/// Parses a whole document, collecting every step error as a finding.
pub fn parse_spec(doc: &SpecDocument, catalog: &Catalog) -> Result<ProcedureSpec, Vec<Finding>> {
    let mut findings = Vec::new();
    let mut steps = Vec::new();
    for (i, fields) in doc.steps.iter().enumerate() {
        match parse_step(i + 1, fields, catalog) {
            Ok(s) => steps.push(s),
            Err(e) => findings.push(e.finding(Some(i + 1))),
        }
    }
    let completion = match parse_completion(&doc.completion, catalog) {
        Ok(rule) => Some(rule),
        Err(e) => {
            findings.push(e.finding(None));
            None
        }
    };
    match completion {
        Some(completion_rule) if findings.is_empty() => Ok(ProcedureSpec {
            title: doc.title.clone(),
            catalog_ref: doc.catalog.clone(),
            steps,
            completion_text: format_rule(&completion_rule, catalog),
            completion_rule,
        }),
        _ => Err(findings),
    }
}

/// Parse findings when the document does not parse, validation findings
/// otherwise. Empty means the document is ready to compile.
pub fn check_document(doc: &SpecDocument, catalog: &Catalog) -> Vec<Finding> {
    match parse_spec(doc, catalog) {
        Ok(spec) => validate_spec(&spec, catalog),
        Err(findings) => findings,
    }
}

pub fn format_spec(spec: &ProcedureSpec, catalog: &Catalog) -> SpecDocument {
    SpecDocument {
        title: spec.title.clone(),
        catalog: spec.catalog_ref.clone(),
        completion: format_rule(&spec.completion_rule, catalog),
        steps: spec.steps.iter().map(|s| format_step(s, catalog)).collect(),
    }
}
