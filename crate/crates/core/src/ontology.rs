//! Scenario vocabulary: a hierarchy of Node / Enum / Value / Param entities.
//!
//! Nodes build the hierarchy, enums group symbolic values, and params are the
//! quantities a scenario constraint can bound. Every param carries a unit and,
//! optionally, physical bounds plus the direction in which it gets worse for
//! the function under test.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::interval::Interval;
use crate::report::ValidationReport;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum OntologyError {
    #[error("syntax error at line {line}, column {column}: {message}")]
    Syntax {
        line: usize,
        column: usize,
        message: String,
    },
    #[error("invalid entity id `{id}`: {reason}")]
    InvalidId { id: String, reason: String },
    #[error("duplicate entity id `{0}`")]
    DuplicateId(String),
    #[error("entity `{id}` references unknown parent `{parent}`")]
    DanglingParent { id: String, parent: String },
    #[error("no entity `{0}`")]
    NotFound(String),
    #[error("entity `{id}` is a {kind}, not a PARAM")]
    WrongKind { id: String, kind: EntityKind },
}

impl OntologyError {
    pub(crate) fn from_json(err: &serde_json::Error) -> Self {
        OntologyError::Syntax {
            line: err.line(),
            column: err.column(),
            message: err.to_string(),
        }
    }

    /// The entity a load error is about, if any.
    pub fn entity(&self) -> Option<&str> {
        match self {
            OntologyError::Syntax { .. } => None,
            OntologyError::InvalidId { id, .. }
            | OntologyError::DanglingParent { id, .. }
            | OntologyError::WrongKind { id, .. } => Some(id),
            OntologyError::DuplicateId(id) | OntologyError::NotFound(id) => Some(id),
        }
    }
}

/// Slash-separated path of lowercase segments, e.g. `environment/ambient/visibility`.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct EntityId(Vec<String>);

impl EntityId {
    pub fn parse(s: &str) -> Result<Self, OntologyError> {
        let invalid = |reason: &str| OntologyError::InvalidId {
            id: s.to_string(),
            reason: reason.to_string(),
        };
        if s.is_empty() {
            return Err(invalid("empty path"));
        }
        let mut segments = Vec::new();
        for seg in s.split('/') {
            if seg.is_empty() {
                return Err(invalid("empty segment"));
            }
            if !seg
                .bytes()
                .all(|b| b.is_ascii_lowercase() || b.is_ascii_digit() || b == b'_')
            {
                return Err(invalid("segments must match [a-z0-9_]+"));
            }
            segments.push(seg.to_string());
        }
        Ok(EntityId(segments))
    }

    pub fn segments(&self) -> &[String] {
        &self.0
    }

    /// Last path segment.
    pub fn name(&self) -> &str {
        self.0.last().map(String::as_str).unwrap_or_default()
    }
}

impl fmt::Display for EntityId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0.join("/"))
    }
}

impl FromStr for EntityId {
    type Err = OntologyError;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        EntityId::parse(s)
    }
}

impl Serialize for EntityId {
    fn serialize<S: serde::Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        serializer.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for EntityId {
    fn deserialize<D: serde::Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let s = String::deserialize(deserializer)?;
        EntityId::parse(&s).map_err(serde::de::Error::custom)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "UPPERCASE")]
pub enum EntityKind {
    Node,
    Enum,
    Value,
    Param,
}

impl fmt::Display for EntityKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            EntityKind::Node => "NODE",
            EntityKind::Enum => "ENUM",
            EntityKind::Value => "VALUE",
            EntityKind::Param => "PARAM",
        })
    }
}

/// Which end of a param's range is the adverse one.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum LimitingDirection {
    #[default]
    LowerIsWorse,
    HigherIsWorse,
}

#[derive(Debug, Clone, PartialEq)]
pub struct OntologyEntity {
    pub id: EntityId,
    pub kind: EntityKind,
    pub parent: Option<EntityId>,
    pub unit: Option<String>,
    pub physical_bounds: Option<Interval>,
    pub limiting_direction: Option<LimitingDirection>,
}

impl OntologyEntity {
    pub fn node(id: &str, parent: Option<&str>) -> Self {
        Self::bare(id, EntityKind::Node, parent)
    }

    pub fn param(id: &str, parent: &str, unit: &str, bounds: Option<Interval>) -> Self {
        OntologyEntity {
            unit: Some(unit.to_string()),
            physical_bounds: bounds,
            ..Self::bare(id, EntityKind::Param, Some(parent))
        }
    }

    pub fn bare(id: &str, kind: EntityKind, parent: Option<&str>) -> Self {
        OntologyEntity {
            id: EntityId::parse(id).expect("static entity id"),
            kind,
            parent: parent.map(|p| EntityId::parse(p).expect("static entity id")),
            unit: None,
            physical_bounds: None,
            limiting_direction: None,
        }
    }

    /// Effective limiting direction (params default to lower-is-worse).
    pub fn direction(&self) -> LimitingDirection {
        self.limiting_direction.unwrap_or_default()
    }

    /// Physical bounds, or the whole real line when none are declared.
    pub fn bounds_or_unbounded(&self) -> Interval {
        self.physical_bounds.unwrap_or(Interval::UNBOUNDED)
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct EntityRecord {
    id: String,
    kind: EntityKind,
    #[serde(default)]
    parent: Option<String>,
    #[serde(default)]
    unit: Option<String>,
    #[serde(default)]
    physical_bounds: Option<[f64; 2]>,
    #[serde(default)]
    limiting_direction: Option<LimitingDirection>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct OntologyDocument {
    entities: Vec<EntityRecord>,
}

/// A linked entity hierarchy. Immutable once built.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct Ontology {
    entities: BTreeMap<EntityId, OntologyEntity>,
    roots: Vec<EntityId>,
}

impl Ontology {
    /// Links entities. Fails on duplicate ids and parents that do not resolve;
    /// every other structural rule is left to [`validate_ontology`].
    pub fn from_entities(
        list: impl IntoIterator<Item = OntologyEntity>,
    ) -> Result<Self, OntologyError> {
        let mut entities = BTreeMap::new();
        for e in list {
            if entities.contains_key(&e.id) {
                return Err(OntologyError::DuplicateId(e.id.to_string()));
            }
            entities.insert(e.id.clone(), e);
        }
        for e in entities.values() {
            if let Some(parent) = &e.parent {
                if !entities.contains_key(parent) {
                    return Err(OntologyError::DanglingParent {
                        id: e.id.to_string(),
                        parent: parent.to_string(),
                    });
                }
            }
        }
        let roots = entities
            .values()
            .filter(|e| e.parent.is_none())
            .map(|e| e.id.clone())
            .collect();
        Ok(Ontology { entities, roots })
    }

    pub fn get(&self, id: &EntityId) -> Option<&OntologyEntity> {
        self.entities.get(id)
    }

    pub fn entities(&self) -> impl Iterator<Item = &OntologyEntity> {
        self.entities.values()
    }

    pub fn roots(&self) -> &[EntityId] {
        &self.roots
    }

    pub fn len(&self) -> usize {
        self.entities.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entities.is_empty()
    }

    pub fn children<'a>(&'a self, id: &'a EntityId) -> impl Iterator<Item = &'a OntologyEntity> {
        self.entities
            .values()
            .filter(move |e| e.parent.as_ref() == Some(id))
    }

    /// Looks up a PARAM by path.
    pub fn resolve_param(&self, path: &EntityId) -> Result<&OntologyEntity, OntologyError> {
        let e = self
            .entities
            .get(path)
            .ok_or_else(|| OntologyError::NotFound(path.to_string()))?;
        if e.kind != EntityKind::Param {
            return Err(OntologyError::WrongKind {
                id: path.to_string(),
                kind: e.kind,
            });
        }
        Ok(e)
    }

    /// Serializes to the JSON document format, entities ordered by id.
    pub fn to_document(&self) -> String {
        let doc = OntologyDocument {
            entities: self
                .entities
                .values()
                .map(|e| EntityRecord {
                    id: e.id.to_string(),
                    kind: e.kind,
                    parent: e.parent.as_ref().map(ToString::to_string),
                    unit: e.unit.clone(),
                    physical_bounds: e.physical_bounds.map(|b| [b.lo, b.hi]),
                    limiting_direction: e.limiting_direction,
                })
                .collect(),
        };
        serde_json::to_string_pretty(&doc).expect("ontology serializes")
    }
}

/// Parses and links an ontology document.
pub fn load_ontology(document: &str) -> Result<Ontology, OntologyError> {
    let doc: OntologyDocument =
        serde_json::from_str(document).map_err(|e| OntologyError::from_json(&e))?;
    let mut entities = Vec::with_capacity(doc.entities.len());
    for r in doc.entities {
        let id = EntityId::parse(&r.id)?;
        let parent = r.parent.as_deref().map(EntityId::parse).transpose()?;
        if let Some([lo, hi]) = r.physical_bounds {
            if !lo.is_finite() || !hi.is_finite() {
                return Err(OntologyError::Syntax {
                    line: 0,
                    column: 0,
                    message: format!("non-finite physical_bounds on `{id}`"),
                });
            }
        }
        entities.push(OntologyEntity {
            id,
            kind: r.kind,
            parent,
            unit: r.unit,
            physical_bounds: r.physical_bounds.map(|[lo, hi]| Interval::new(lo, hi)),
            limiting_direction: r.limiting_direction,
        });
    }
    Ontology::from_entities(entities)
}

/// Checks every structural rule of the hierarchy. Problems are reported, not
/// raised; an empty report means the ontology is well formed.
pub fn validate_ontology(o: &Ontology) -> ValidationReport {
    let mut report = ValidationReport::new();
    if o.roots.is_empty() {
        report.warning("", "no roots");
    }

    for e in o.entities.values() {
        let id = e.id.to_string();
        let parent_kind = e
            .parent
            .as_ref()
            .map(|p| o.entities.get(p).map(|pe| pe.kind));
        match (e.kind, parent_kind) {
            (_, Some(None)) => report.error(&id, "parent does not resolve"),
            (EntityKind::Node, None | Some(Some(EntityKind::Node))) => {}
            (EntityKind::Node, _) => report.error(&id, "NODE parent must be NODE"),
            (EntityKind::Enum | EntityKind::Param, Some(Some(EntityKind::Node))) => {}
            (EntityKind::Enum, _) => report.error(&id, "ENUM parent must be NODE"),
            (EntityKind::Param, _) => report.error(&id, "PARAM parent must be NODE"),
            (EntityKind::Value, Some(Some(EntityKind::Enum))) => {}
            (EntityKind::Value, _) => report.error(&id, "VALUE parent must be ENUM"),
        }

        if e.kind == EntityKind::Param {
            match &e.unit {
                None => report.error(&id, "PARAM must have a unit"),
                Some(u) if u.trim().is_empty() => report.error(&id, "PARAM unit is empty"),
                Some(_) => {}
            }
            if let Some(b) = e.physical_bounds {
                if !(b.is_valid() && b.is_finite()) {
                    report.error(&id, format!("physical_bounds {b} is empty"));
                }
            }
        } else {
            if e.unit.is_some() {
                report.error(&id, format!("{} must not have a unit", e.kind));
            }
            if e.physical_bounds.is_some() {
                report.error(&id, format!("{} must not have physical_bounds", e.kind));
            }
            if e.limiting_direction.is_some() {
                report.error(&id, format!("{} must not have limiting_direction", e.kind));
            }
        }

        if e.kind == EntityKind::Enum
            && !o.children(&e.id).any(|c| c.kind == EntityKind::Value)
        {
            report.error(&id, "ENUM has no VALUE children");
        }
    }

    for cycle in find_cycles(o) {
        let names: Vec<String> = cycle.iter().map(ToString::to_string).collect();
        report.error(
            cycle[0].to_string(),
            format!("cycle detected: {}", names.join(" -> ")),
        );
    }

    report.finish()
}

/// Every distinct parent cycle, each rotated to start at its smallest member.
fn find_cycles(o: &Ontology) -> Vec<Vec<EntityId>> {
    let mut seen_cycles: BTreeSet<EntityId> = BTreeSet::new();
    let mut cycles = Vec::new();
    for start in o.entities.keys() {
        let mut path: Vec<&EntityId> = vec![start];
        let mut cur = start;
        // A walk longer than the entity count must revisit something.
        for _ in 0..=o.entities.len() {
            let Some(parent) = o.entities.get(cur).and_then(|e| e.parent.as_ref()) else {
                break;
            };
            if let Some(pos) = path.iter().position(|p| *p == parent) {
                let members = &path[pos..];
                let min_pos = members
                    .iter()
                    .enumerate()
                    .min_by_key(|(_, id)| **id)
                    .map(|(i, _)| i)
                    .unwrap_or(0);
                let mut cycle: Vec<EntityId> = members[min_pos..]
                    .iter()
                    .chain(&members[..min_pos])
                    .map(|id| (*id).clone())
                    .collect();
                if seen_cycles.insert(cycle[0].clone()) {
                    cycle.push(cycle[0].clone());
                    cycles.push(cycle);
                }
                break;
            }
            path.push(parent);
            cur = parent;
        }
    }
    cycles
}

/// Loads and validates a document in one step, turning load failures into
/// report entries so every problem names the entity it concerns.
pub fn lint_ontology(document: &str) -> ValidationReport {
    match load_ontology(document) {
        Ok(o) => validate_ontology(&o),
        Err(err) => {
            let mut report = ValidationReport::new();
            report.error(err.entity().unwrap_or("<document>"), err.to_string());
            report.finish()
        }
    }
}
