//! Shared domain types: geometry, simlets, tools, safety rules, procedure
//! specs, simulation events and session outcomes.
//!
//! Units are fixed crate-wide: millimeters, newtons, milliseconds and a
//! dimensionless stretch ratio (current length / rest length).

mod event;
mod outcome;
mod rule;
mod validate;
mod vec3;

use std::collections::BTreeSet;
use std::fmt;

use serde::{Deserialize, Serialize};

pub use event::{EventKind, SimEvent};
pub use outcome::{
    Achievement, AchievementKind, ErrorType, Measurement, SessionReport, Unit, Violation,
};
pub use rule::{ActionKind, ProcedureSpec, SafetyRule, TaskStep};
pub use validate::{validate_spec, Finding};
pub use vec3::Vec3;

macro_rules! id_newtype {
    ($(#[$meta:meta])* $name:ident) => {
        $(#[$meta])*
        #[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
        #[serde(transparent)]
        pub struct $name(pub String);

        impl $name {
            pub fn new(id: impl Into<String>) -> Self {
                Self(id.into())
            }

            pub fn as_str(&self) -> &str {
                &self.0
            }
        }

        impl fmt::Display for $name {
            fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
                f.write_str(&self.0)
            }
        }

        impl From<&str> for $name {
            fn from(s: &str) -> Self {
                Self(s.to_string())
            }
        }
    };
}

id_newtype!(
    /// Identifier of a simlet (a piece of anatomy) in the catalog.
    SimletId
);
id_newtype!(
    /// Identifier of a laparoscopic tool in the catalog.
    ToolId
);

/// A geometric building block of a simlet. All lengths in millimeters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "camelCase")]
pub enum GeometryPrimitive {
    Sphere {
        center: Vec3,
        radius: f64,
    },
    #[serde(rename_all = "camelCase")]
    Capsule {
        endpoint_a: Vec3,
        endpoint_b: Vec3,
        radius: f64,
    },
    #[serde(rename = "mesh")]
    TriangleMesh {
        vertices: Vec<Vec3>,
        triangles: Vec<[usize; 3]>,
    },
}

impl GeometryPrimitive {
    /// Checks the primitive's invariants, returning a description of the
    /// first one that fails.
    pub fn check(&self) -> Result<(), String> {
        match self {
            GeometryPrimitive::Sphere { center, radius } => {
                if !center.is_finite() {
                    return Err("sphere center is not finite".into());
                }
                check_radius(*radius)
            }
            GeometryPrimitive::Capsule {
                endpoint_a,
                endpoint_b,
                radius,
            } => {
                if !endpoint_a.is_finite() || !endpoint_b.is_finite() {
                    return Err("capsule endpoint is not finite".into());
                }
                if endpoint_a == endpoint_b {
                    return Err("capsule endpoints coincide".into());
                }
                check_radius(*radius)
            }
            GeometryPrimitive::TriangleMesh {
                vertices,
                triangles,
            } => {
                if triangles.is_empty() {
                    return Err("mesh has no triangles".into());
                }
                if let Some(v) = vertices.iter().find(|v| !v.is_finite()) {
                    return Err(format!("mesh vertex {v:?} is not finite"));
                }
                for tri in triangles {
                    if let Some(i) = tri.iter().find(|&&i| i >= vertices.len()) {
                        return Err(format!(
                            "triangle index {i} out of range for {} vertices",
                            vertices.len()
                        ));
                    }
                }
                Ok(())
            }
        }
    }
}

fn check_radius(radius: f64) -> Result<(), String> {
    if radius.is_finite() && radius > 0.0 {
        Ok(())
    } else {
        Err(format!("radius must be positive, got {radius}"))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub enum SimletKind {
    Organ,
    Vessel,
    Duct,
    FattyTissue,
    Pouch,
}

impl SimletKind {
    pub fn is_tubular(self) -> bool {
        matches!(self, SimletKind::Vessel | SimletKind::Duct)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub enum SimletFlag {
    Sensitive,
    Clippable,
    Cuttable,
    Suturable,
    RemovalTarget,
}

/// Which capsule endpoint is the proximal end (parameter 0, stays in the body).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub enum ProximalEnd {
    #[default]
    A,
    B,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct SutureRegion {
    pub region_id: String,
    pub geometry: GeometryPrimitive,
}

/// A physics-annotated piece of anatomy.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct Simlet {
    pub id: SimletId,
    pub name: String,
    pub kind: SimletKind,
    pub geometry: Vec<GeometryPrimitive>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub youngs_modulus: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub force_threshold: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub stretch_threshold: Option<f64>,
    #[serde(default)]
    pub flags: BTreeSet<SimletFlag>,
    #[serde(default)]
    pub suture_regions: Vec<SutureRegion>,
    #[serde(default)]
    pub attachments: Vec<SimletId>,
    #[serde(default)]
    pub proximal_end: ProximalEnd,
}

impl Simlet {
    pub fn has(&self, flag: SimletFlag) -> bool {
        self.flags.contains(&flag)
    }

    /// Point at `param` along the vessel axis, 0 being the proximal end.
    /// Uses the first capsule primitive; `None` for non-tubular geometry.
    pub fn axis_point(&self, param: f64) -> Option<Vec3> {
        self.geometry.iter().find_map(|g| match g {
            GeometryPrimitive::Capsule {
                endpoint_a,
                endpoint_b,
                ..
            } => {
                let (prox, dist) = match self.proximal_end {
                    ProximalEnd::A => (*endpoint_a, *endpoint_b),
                    ProximalEnd::B => (*endpoint_b, *endpoint_a),
                };
                Some(prox + (dist - prox) * param)
            }
            _ => None,
        })
    }

    pub fn suture_region(&self, region_id: &str) -> Option<&SutureRegion> {
        self.suture_regions.iter().find(|r| r.region_id == region_id)
    }

    /// Violated invariants that can be checked on the simlet alone.
    pub fn check(&self) -> Vec<String> {
        let mut problems = Vec::new();
        if self.id.as_str().trim().is_empty() {
            problems.push("simlet id is empty".to_string());
        }
        if self.geometry.is_empty() {
            problems.push(format!("simlet '{}' has no geometry", self.id));
        }
        for g in &self.geometry {
            if let Err(e) = g.check() {
                problems.push(format!("simlet '{}': {e}", self.id));
            }
        }
        if self.has(SimletFlag::Clippable) && !self.kind.is_tubular() {
            problems.push(format!(
                "simlet '{}' is clippable but is not a vessel or duct",
                self.id
            ));
        }
        if self.has(SimletFlag::Suturable) && self.suture_regions.is_empty() {
            problems.push(format!(
                "simlet '{}' is suturable but declares no suture regions",
                self.id
            ));
        }
        for r in &self.suture_regions {
            if let Err(e) = r.geometry.check() {
                problems.push(format!(
                    "simlet '{}' suture region '{}': {e}",
                    self.id, r.region_id
                ));
            }
        }
        for (label, v) in [
            ("forceThreshold", self.force_threshold),
            ("stretchThreshold", self.stretch_threshold),
            ("youngsModulus", self.youngs_modulus),
        ] {
            if let Some(v) = v {
                if !(v.is_finite() && v > 0.0) {
                    problems.push(format!("simlet '{}': {label} must be positive", self.id));
                }
            }
        }
        problems
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub enum Capability {
    Cauterize,
    Dissect,
    Cut,
    ClipApply,
    Grasp,
    Suture,
    Retrieve,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct ToolSpec {
    pub id: ToolId,
    pub name: String,
    pub capabilities: BTreeSet<Capability>,
}
