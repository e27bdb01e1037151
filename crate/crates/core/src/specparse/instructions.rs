use std::fs;
use std::io;
use std::path::{Path, PathBuf};

use serde::Serialize;

use crate::catalog::Catalog;
use crate::model::{ProcedureSpec, SafetyRule};

/// Trainee-facing page for one step.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
#[serde(rename_all = "camelCase")]
pub struct InstructionPage {
    pub step_index: usize,
    pub heading: String,
    pub body: String,
    pub callouts: Vec<String>,
    pub comment: String,
}

impl InstructionPage {
    pub fn to_markdown(&self) -> String {
        let mut md = format!("# {}\n\n{}\n", self.heading, self.body);
        if !self.callouts.is_empty() {
            md.push('\n');
            for c in &self.callouts {
                md.push_str(&format!("> **Safety:** {c}\n"));
            }
        }
        if !self.comment.trim().is_empty() {
            md.push_str(&format!("\n{}\n", self.comment.trim()));
        }
        md
    }

    pub fn file_name(&self) -> String {
        format!("step-{:02}.md", self.step_index)
    }
}

fn callout(rule: &SafetyRule, catalog: &Catalog) -> String {
    match rule {
        SafetyRule::Proximity {
            protected_anatomy_id,
            min_distance,
            active_only,
            ..
        } => format!(
            "Keep ≥ {} mm from {}{}",
            min_distance,
            catalog.simlet_name(protected_anatomy_id),
            if *active_only { "" } else { " at all times" }
        ),
        SafetyRule::ForceLimit {
            anatomy_id,
            max_force,
            max_stretch,
        } => {
            let mut s = format!(
                "Do not exceed {} N on {}",
                max_force,
                catalog.simlet_name(anatomy_id)
            );
            if let Some(x) = max_stretch {
                s.push_str(&format!(" or stretch it beyond {x}x its rest length"));
            }
            s
        }
        SafetyRule::NoForeignBodies => {
            "Leave no foreign objects (clips, tools) in the body".to_string()
        }
        SafetyRule::ClipLayout {
            vessel_id,
            required_proximal,
            required_distal,
            must_precede_cut,
        } => format!(
            "Place {} clip{} proximal and {} distal on {}{}",
            required_proximal,
            if *required_proximal == 1 { "" } else { "s" },
            required_distal,
            catalog.simlet_name(vessel_id),
            if *must_precede_cut { " before cutting" } else { "" }
        ),
        SafetyRule::Completion {
            target_anatomy_id,
            must_be_freed,
            must_be_retrieved_via_pouch,
        } => format!(
            "{}etrieve {}{}",
            if *must_be_freed { "Free and r" } else { "R" },
            catalog.simlet_name(target_anatomy_id),
            if *must_be_retrieved_via_pouch {
                " via the pouch"
            } else {
                ""
            }
        ),
        SafetyRule::SutureRegion {
            anatomy_id,
            region_id,
        } => format!(
            "Suture only within the {} of {}",
            region_id,
            catalog.simlet_name(anatomy_id)
        ),
    }
}

/// One page per step, in step order.
pub fn generate_instructions(spec: &ProcedureSpec, catalog: &Catalog) -> Vec<InstructionPage> {
    spec.steps
        .iter()
        .map(|step| InstructionPage {
            step_index: step.index,
            heading: format!("Step {}: {}", step.index, step.action),
            body: format!(
                "{} {} using {}",
                step.action,
                catalog.simlet_name(&step.anatomy_id),
                catalog.tool_name(&step.tool_id)
            ),
            callouts: step.safety.iter().map(|r| callout(r, catalog)).collect(),
            comment: step.comment.clone(),
        })
        .collect()
}

/// Writes `step-NN.md` files into `dir` and returns their paths.
pub fn write_instruction_pages(pages: &[InstructionPage], dir: &Path) -> io::Result<Vec<PathBuf>> {
    fs::create_dir_all(dir)?;
    pages
        .iter()
        .map(|p| {
            let path = dir.join(p.file_name());
            fs::write(&path, p.to_markdown())?;
            Ok(path)
        })
        .collect()
}
