//! The simlet database: loading, case-insensitive prefix completion over
//! display names, and composition of simlets into a scene.

use std::collections::{BTreeMap, BTreeSet, VecDeque};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::model::{ProcedureSpec, SafetyRule, Simlet, SimletId, SimletKind, ToolId, ToolSpec};

#[derive(Debug, Error, PartialEq)]
pub enum CatalogError {
    #[error("malformed document at line {line}, column {column}: {message}")]
    Malformed {
        line: usize,
        column: usize,
        message: String,
    },
    #[error("duplicate id '{id}' at {location}")]
    DuplicateId { id: String, location: String },
    #[error("duplicate display name '{name}' at {location}")]
    DuplicateName { name: String, location: String },
    #[error("dangling attachment '{target}' at {location}")]
    DanglingAttachment { target: String, location: String },
    #[error("invariant violation at {location}: {message}")]
    Invariant { location: String, message: String },
}

#[derive(Debug, Error, PartialEq)]
pub enum ComposeError {
    #[error("empty selection")]
    Empty,
    #[error("unknown id '{0}'")]
    UnknownId(String),
    #[error("duplicate id '{0}' in selection")]
    DuplicateId(String),
}

/// On-disk catalog document.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CatalogDocument {
    pub simlets: Vec<Simlet>,
    pub tools: Vec<ToolSpec>,
}

/// What a display name refers to.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum EntryRef {
    Simlet(SimletId),
    Tool(ToolId),
}

#[derive(Debug, Clone)]
struct IndexEntry {
    display: String,
    target: EntryRef,
}

/// Sorted map from case-folded display name to entry; prefix queries are
/// a range scan.
#[derive(Debug, Clone, Default)]
struct NameIndex {
    by_folded: BTreeMap<String, IndexEntry>,
}

impl NameIndex {
    fn prefixed<'a>(&'a self, prefix: &str) -> impl Iterator<Item = &'a IndexEntry> + 'a {
        let folded = fold(prefix);
        self.by_folded
            .range(folded.clone()..)
            .take_while(move |(k, _)| k.starts_with(&folded))
            .map(|(_, e)| e)
    }
}

/// Simple case folding used for all name comparisons.
pub fn fold(s: &str) -> String {
    s.to_lowercase()
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ResolveError {
    #[error("unknown name '{0}'")]
    Unknown(String),
    #[error("ambiguous name '{written}' (candidates: {})", candidates.join(", "))]
    Ambiguous {
        written: String,
        candidates: Vec<String>,
    },
}

/// Immutable simlet and tool database.
#[derive(Debug, Clone)]
pub struct Catalog {
    simlets: BTreeMap<SimletId, Simlet>,
    tools: BTreeMap<ToolId, ToolSpec>,
    names: NameIndex,
}

/// Parses and validates a catalog document.
pub fn load_catalog(source: &[u8]) -> Result<Catalog, CatalogError> {
    let doc: CatalogDocument =
        serde_json::from_slice(source).map_err(|e| CatalogError::Malformed {
            line: e.line(),
            column: e.column(),
            message: e.to_string(),
        })?;
    Catalog::from_document(doc)
}

impl Catalog {
    pub fn from_document(doc: CatalogDocument) -> Result<Self, CatalogError> {
        let mut simlets = BTreeMap::new();
        let mut tools = BTreeMap::new();
        let mut names = NameIndex::default();

        let add_name =
            |names: &mut NameIndex, name: &str, target: EntryRef, location: String| {
                let key = fold(name);
                if key.trim().is_empty() {
                    return Err(CatalogError::Invariant {
                        location,
                        message: "display name is empty".into(),
                    });
                }
                if names.by_folded.contains_key(&key) {
                    return Err(CatalogError::DuplicateName {
                        name: name.to_string(),
                        location,
                    });
                }
                names.by_folded.insert(
                    key,
                    IndexEntry {
                        display: name.to_string(),
                        target,
                    },
                );
                Ok(())
            };

        for (i, s) in doc.simlets.into_iter().enumerate() {
            let location = format!("simlets[{i}] ('{}')", s.id);
            if let Some(message) = s.check().into_iter().next() {
                return Err(CatalogError::Invariant { location, message });
            }
            if simlets.contains_key(&s.id) {
                return Err(CatalogError::DuplicateId {
                    id: s.id.to_string(),
                    location,
                });
            }
            add_name(&mut names, &s.name, EntryRef::Simlet(s.id.clone()), location)?;
            simlets.insert(s.id.clone(), s);
        }
        for (i, t) in doc.tools.into_iter().enumerate() {
            let location = format!("tools[{i}] ('{}')", t.id);
            if t.id.as_str().trim().is_empty() {
                return Err(CatalogError::Invariant {
                    location,
                    message: "tool id is empty".into(),
                });
            }
            if t.capabilities.is_empty() {
                return Err(CatalogError::Invariant {
                    location,
                    message: "tool has no capabilities".into(),
                });
            }
            if tools.contains_key(&t.id) {
                return Err(CatalogError::DuplicateId {
                    id: t.id.to_string(),
                    location,
                });
            }
            add_name(&mut names, &t.name, EntryRef::Tool(t.id.clone()), location)?;
            tools.insert(t.id.clone(), t);
        }
        for s in simlets.values() {
            for (j, a) in s.attachments.iter().enumerate() {
                if !simlets.contains_key(a) {
                    return Err(CatalogError::DanglingAttachment {
                        target: a.to_string(),
                        location: format!("simlet '{}' attachments[{j}]", s.id),
                    });
                }
            }
        }
        Ok(Catalog {
            simlets,
            tools,
            names,
        })
    }

    pub fn to_document(&self) -> CatalogDocument {
        CatalogDocument {
            simlets: self.simlets.values().cloned().collect(),
            tools: self.tools.values().cloned().collect(),
        }
    }

    pub fn simlet(&self, id: &SimletId) -> Option<&Simlet> {
        self.simlets.get(id)
    }

    pub fn tool(&self, id: &ToolId) -> Option<&ToolSpec> {
        self.tools.get(id)
    }

    pub fn simlets(&self) -> impl Iterator<Item = &Simlet> {
        self.simlets.values()
    }

    pub fn tools(&self) -> impl Iterator<Item = &ToolSpec> {
        self.tools.values()
    }

    /// Display names whose case-folded form starts with the case-folded
    /// prefix, ordered by case-folded byte order.
    pub fn complete(&self, prefix: &str) -> Vec<String> {
        self.names
            .prefixed(prefix)
            .map(|e| e.display.clone())
            .collect()
    }

    /// Resolves a written anatomy name to a simlet id.
    pub fn resolve_simlet(&self, written: &str) -> Result<SimletId, ResolveError> {
        self.resolve(written, |t| match t {
            EntryRef::Simlet(id) => Some(id.clone()),
            EntryRef::Tool(_) => None,
        })
    }

    /// Resolves a written tool name to a tool id.
    pub fn resolve_tool(&self, written: &str) -> Result<ToolId, ResolveError> {
        self.resolve(written, |t| match t {
            EntryRef::Tool(id) => Some(id.clone()),
            EntryRef::Simlet(_) => None,
        })
    }

    /// A name resolves when its completions (restricted to the wanted kind)
    /// contain an exact case-insensitive match or exactly one candidate.
    fn resolve<T>(
        &self,
        written: &str,
        pick: impl Fn(&EntryRef) -> Option<T>,
    ) -> Result<T, ResolveError> {
        let written = written.trim();
        if written.is_empty() {
            return Err(ResolveError::Unknown(String::new()));
        }
        let folded = fold(written);
        let mut candidates: Vec<(&IndexEntry, T)> = self
            .names
            .prefixed(written)
            .filter_map(|e| pick(&e.target).map(|t| (e, t)))
            .collect();
        if let Some(pos) = candidates
            .iter()
            .position(|(e, _)| fold(&e.display) == folded)
        {
            return Ok(candidates.swap_remove(pos).1);
        }
        match candidates.len() {
            0 => Err(ResolveError::Unknown(written.to_string())),
            1 => Ok(candidates.pop().expect("one candidate").1),
            _ => Err(ResolveError::Ambiguous {
                written: written.to_string(),
                candidates: candidates.iter().map(|(e, _)| e.display.clone()).collect(),
            }),
        }
    }

    pub fn simlet_name<'a>(&'a self, id: &'a SimletId) -> &'a str {
        self.simlets.get(id).map(|s| s.name.as_str()).unwrap_or(id.as_str())
    }

    pub fn tool_name<'a>(&'a self, id: &'a ToolId) -> &'a str {
        self.tools.get(id).map(|t| t.name.as_str()).unwrap_or(id.as_str())
    }
}

/// An undirected attachment between two instantiated simlets, kept in the
/// orientation it was declared (child lists parent).
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct AttachmentEdge {
    pub child_id: SimletId,
    pub parent_id: SimletId,
}

impl AttachmentEdge {
    pub fn touches(&self, id: &SimletId) -> bool {
        &self.child_id == id || &self.parent_id == id
    }

    pub fn joins(&self, a: &SimletId, b: &SimletId) -> bool {
        (&self.child_id == a && &self.parent_id == b) || (&self.child_id == b && &self.parent_id == a)
    }
}

/// A selected subset of simlets and the attachment graph they induce.
#[derive(Debug, Clone, PartialEq)]
pub struct Scene {
    pub instances: BTreeMap<SimletId, Simlet>,
    pub attachment_graph: BTreeSet<AttachmentEdge>,
}

impl Scene {
    pub fn contains(&self, id: &SimletId) -> bool {
        self.instances.contains_key(id)
    }

    pub fn get(&self, id: &SimletId) -> Option<&Simlet> {
        self.instances.get(id)
    }
}

/// Combines the selected simlets into a scene.
pub fn compose(catalog: &Catalog, ids: &[SimletId]) -> Result<Scene, ComposeError> {
    if ids.is_empty() {
        return Err(ComposeError::Empty);
    }
    let mut instances = BTreeMap::new();
    for id in ids {
        let s = catalog
            .simlet(id)
            .ok_or_else(|| ComposeError::UnknownId(id.to_string()))?;
        if instances.insert(id.clone(), s.clone()).is_some() {
            return Err(ComposeError::DuplicateId(id.to_string()));
        }
    }
    let mut graph = BTreeSet::new();
    for s in instances.values() {
        for parent in &s.attachments {
            if !instances.contains_key(parent) || parent == &s.id {
                continue;
            }
            let edge = AttachmentEdge {
                child_id: s.id.clone(),
                parent_id: parent.clone(),
            };
            if !graph.iter().any(|e: &AttachmentEdge| e.joins(&edge.child_id, &edge.parent_id)) {
                graph.insert(edge);
            }
        }
    }
    Ok(Scene {
        instances,
        attachment_graph: graph,
    })
}

/// Builds the scene a spec needs: every simlet it references, closed under
/// attachment in both directions, plus pouches when the completion rule
/// requires retrieval via pouch.
pub fn compose_for_spec(catalog: &Catalog, spec: &ProcedureSpec) -> Result<Scene, ComposeError> {
    let mut wanted: BTreeSet<SimletId> = BTreeSet::new();
    for step in &spec.steps {
        wanted.insert(step.anatomy_id.clone());
    }
    for (_, rule) in spec.rules() {
        wanted.extend(rule.anatomy_refs().into_iter().cloned());
    }
    for id in &wanted {
        if catalog.simlet(id).is_none() {
            return Err(ComposeError::UnknownId(id.to_string()));
        }
    }
    let mut queue: VecDeque<SimletId> = wanted.iter().cloned().collect();
    while let Some(id) = queue.pop_front() {
        let mut linked: Vec<SimletId> = catalog
            .simlet(&id)
            .map(|s| s.attachments.clone())
            .unwrap_or_default();
        linked.extend(
            catalog
                .simlets()
                .filter(|s| s.attachments.contains(&id))
                .map(|s| s.id.clone()),
        );
        for other in linked {
            if wanted.insert(other.clone()) {
                queue.push_back(other);
            }
        }
    }
    if let SafetyRule::Completion {
        must_be_retrieved_via_pouch: true,
        ..
    } = spec.completion_rule
    {
        wanted.extend(
            catalog
                .simlets()
                .filter(|s| s.kind == SimletKind::Pouch)
                .map(|s| s.id.clone()),
        );
    }
    compose(catalog, &wanted.into_iter().collect::<Vec<_>>())
}

#[cfg(test)]
mod tests {
    use super::*;

    const SMALL: &str = r#"{
      "simlets": [
        {"id": "a", "name": "Alpha duct", "kind": "duct",
         "geometry": [{"type": "sphere", "center": [0,0,0], "radius": 1}],
         "attachments": ["b"]},
        {"id": "b", "name": "beta organ", "kind": "organ",
         "geometry": [{"type": "sphere", "center": [5,0,0], "radius": 1}]}
      ],
      "tools": [{"id": "g", "name": "Grasper", "capabilities": ["grasp"]}]
    }"#;

    #[test]
    fn empty_document_is_malformed() {
        assert!(matches!(load_catalog(b""), Err(CatalogError::Malformed { .. })));
    }

    #[test]
    fn duplicate_ids_are_rejected() {
        let doc = SMALL.replace(r#""id": "b""#, r#""id": "a""#);
        let err = load_catalog(doc.as_bytes()).unwrap_err();
        assert!(matches!(err, CatalogError::DuplicateId { ref id, .. } if id == "a"), "{err}");
    }

    #[test]
    fn dangling_attachment_is_rejected() {
        let doc = SMALL.replace(r#"["b"]"#, r#"["liver"]"#);
        let err = load_catalog(doc.as_bytes()).unwrap_err();
        assert!(
            matches!(err, CatalogError::DanglingAttachment { ref target, .. } if target == "liver")
        );
        assert!(err.to_string().starts_with("dangling attachment"));
    }

    #[test]
    fn tool_without_capabilities_is_rejected() {
        let doc = SMALL.replace(r#"["grasp"]"#, "[]");
        assert!(matches!(
            load_catalog(doc.as_bytes()),
            Err(CatalogError::Invariant { .. })
        ));
    }

    #[test]
    fn completion_is_case_insensitive_and_sorted() {
        let c = load_catalog(SMALL.as_bytes()).unwrap();
        assert_eq!(c.complete("AL"), vec!["Alpha duct"]);
        assert_eq!(c.complete(""), vec!["Alpha duct", "beta organ", "Grasper"]);
        assert!(c.complete("zzz").is_empty());
    }

    #[test]
    fn resolution_is_scoped_by_kind() {
        let c = load_catalog(SMALL.as_bytes()).unwrap();
        assert_eq!(c.resolve_simlet("alpha").unwrap(), SimletId::from("a"));
        assert!(matches!(c.resolve_simlet("Grasper"), Err(ResolveError::Unknown(_))));
        assert_eq!(c.resolve_tool("gr").unwrap(), ToolId::from("g"));
    }

    #[test]
    fn compose_errors() {
        let c = load_catalog(SMALL.as_bytes()).unwrap();
        assert_eq!(compose(&c, &[]), Err(ComposeError::Empty));
        assert_eq!(
            compose(&c, &["nonexistent".into()]),
            Err(ComposeError::UnknownId("nonexistent".into()))
        );
        assert_eq!(
            compose(&c, &["a".into(), "a".into()]),
            Err(ComposeError::DuplicateId("a".into()))
        );
        assert_eq!(compose(&c, &["b".into()]).unwrap().attachment_graph.len(), 0);
        assert_eq!(compose(&c, &["a".into(), "b".into()]).unwrap().attachment_graph.len(), 1);
    }
}
