//! File-based store for ontologies, scenarios and triggering conditions.
//!
//! Layout under the root directory:
//!
//! ```text
//! catalog.json            index: kind, id, relative path, SHA-256 digest
//! ontologies/<id>.json
//! scenarios/<id>.json
//! tcs/<id>.json
//! .catalog.lock           advisory writer lock
//! ```
//!
//! Writers take an exclusive lock on `.catalog.lock`. Every file is written
//! to a temporary sibling and renamed into place, so readers see either the
//! old index or the new one.

use std::collections::BTreeMap;
use std::fs::{self, File, OpenOptions};
use std::io::{self, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::constraints::{load_condition, validate_condition, TriggeringCondition};
use crate::ontology::{load_ontology, validate_ontology, Ontology};
use crate::report::ValidationReport;
use crate::scenario::{load_scenario, validate_scenario, Scenario};

pub const INDEX_FILE: &str = "catalog.json";
pub const LOCK_FILE: &str = ".catalog.lock";
pub const DEFAULT_ONTOLOGY: &str = "default";

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "UPPERCASE")]
pub enum Kind {
    Ontology,
    Scenario,
    Tc,
}

impl Kind {
    pub const ALL: [Kind; 3] = [Kind::Ontology, Kind::Scenario, Kind::Tc];

    pub fn dir(self) -> &'static str {
        match self {
            Kind::Ontology => "ontologies",
            Kind::Scenario => "scenarios",
            Kind::Tc => "tcs",
        }
    }
}

impl std::fmt::Display for Kind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Kind::Ontology => "ONTOLOGY",
            Kind::Scenario => "SCENARIO",
            Kind::Tc => "TC",
        })
    }
}

impl std::str::FromStr for Kind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        match s.to_ascii_lowercase().as_str() {
            "ontology" => Ok(Kind::Ontology),
            "scenario" => Ok(Kind::Scenario),
            "tc" => Ok(Kind::Tc),
            _ => Err(format!("unknown kind `{s}` (expected ontology, scenario or tc)")),
        }
    }
}

#[derive(Debug, Error)]
pub enum CatalogError {
    #[error("{kind} `{id}` failed validation:\n{report}")]
    ValidationFailed {
        kind: Kind,
        id: String,
        report: ValidationReport,
    },
    #[error("{kind} `{id}` already exists")]
    DuplicateId { kind: Kind, id: String },
    #[error("{kind} `{id}` not found")]
    NotFound { kind: Kind, id: String },
    #[error("digest mismatch for {kind} `{id}`: index has {expected}, file has {actual}")]
    DigestMismatch {
        kind: Kind,
        id: String,
        expected: String,
        actual: String,
    },
    #[error("invalid catalog id `{0}`: use letters, digits, `_` or `-`")]
    InvalidId(String),
    #[error("catalog has no ontology (add one, or name it `default` when there are several)")]
    NoOntology,
    #[error("corrupt catalog: {0}")]
    Corrupt(String),
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: io::Error },
}

impl CatalogError {
    fn io(path: &Path) -> impl FnOnce(io::Error) -> CatalogError + '_ {
        move |source| CatalogError::Io {
            path: path.to_path_buf(),
            source,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CatalogEntry {
    pub kind: Kind,
    pub id: String,
    /// Relative to the catalog root, `/`-separated.
    pub path: String,
    /// Lowercase hex SHA-256 of the file contents.
    pub digest: String,
}

/// Entries sorted by (kind, id); ids are unique per kind.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CatalogIndex {
    pub entries: Vec<CatalogEntry>,
}

impl CatalogIndex {
    pub fn find(&self, kind: Kind, id: &str) -> Option<&CatalogEntry> {
        self.entries.iter().find(|e| e.kind == kind && e.id == id)
    }

    fn insert(&mut self, entry: CatalogEntry) {
        self.entries.push(entry);
        self.entries.sort();
    }

    pub fn to_document(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("index serializes");
        s.push('\n');
        s
    }
}

pub fn digest(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

pub fn check_id(id: &str) -> Result<(), CatalogError> {
    let ok = !id.is_empty()
        && id.len() <= 128
        && id
            .chars()
            .all(|c| c.is_ascii_alphanumeric() || c == '_' || c == '-');
    if ok {
        Ok(())
    } else {
        Err(CatalogError::InvalidId(id.to_string()))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum CatalogObject {
    Ontology(Ontology),
    Scenario(Scenario),
    Tc(TriggeringCondition),
}

/// Scenario predicate for [`Catalog::list`]. Unset fields match everything;
/// a set field excludes every non-scenario entry.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct ListFilter {
    pub odd_tag: Option<String>,
    pub element_kind: Option<String>,
}

impl ListFilter {
    pub fn is_empty(&self) -> bool {
        self.odd_tag.is_none() && self.element_kind.is_none()
    }

    pub fn matches(&self, s: &Scenario) -> bool {
        self.odd_tag
            .as_ref()
            .is_none_or(|t| s.odd_tags.iter().any(|x| x == t))
            && self
                .element_kind
                .as_ref()
                .is_none_or(|k| s.elements().any(|(_, e)| &e.kind == k))
    }
}

/// Handle on a catalog directory. Holds no cached state; every call reads
/// the index afresh.
#[derive(Debug, Clone)]
pub struct Catalog {
    root: PathBuf,
}

/// An add whose files are written but not yet renamed into place. Holds the
/// writer lock until committed or dropped; dropping removes the temporaries
/// and leaves the catalog as it was.
#[derive(Debug)]
pub struct PendingAdd {
    entry: CatalogEntry,
    object_tmp: PathBuf,
    object_path: PathBuf,
    index_tmp: PathBuf,
    index_path: PathBuf,
    committed: bool,
    _lock: File,
}

impl PendingAdd {
    pub fn entry(&self) -> &CatalogEntry {
        &self.entry
    }

    pub fn commit(mut self) -> Result<CatalogEntry, CatalogError> {
        fs::rename(&self.object_tmp, &self.object_path).map_err(CatalogError::io(&self.object_path))?;
        fs::rename(&self.index_tmp, &self.index_path).map_err(CatalogError::io(&self.index_path))?;
        self.committed = true;
        Ok(self.entry.clone())
    }
}

impl Drop for PendingAdd {
    fn drop(&mut self) {
        if !self.committed {
            let _ = fs::remove_file(&self.object_tmp);
            let _ = fs::remove_file(&self.index_tmp);
        }
    }
}

fn write_synced(path: &Path, bytes: &[u8]) -> Result<(), CatalogError> {
    let mut f = File::create(path).map_err(CatalogError::io(path))?;
    f.write_all(bytes).map_err(CatalogError::io(path))?;
    f.sync_all().map_err(CatalogError::io(path))
}

fn tmp_sibling(path: &Path) -> PathBuf {
    let name = path.file_name().and_then(|n| n.to_str()).unwrap_or("file");
    path.with_file_name(format!(".{name}.tmp-{}", std::process::id()))
}

impl Catalog {
    /// Opens an existing catalog; `catalog.json` must exist.
    pub fn open(root: impl Into<PathBuf>) -> Result<Self, CatalogError> {
        let cat = Catalog { root: root.into() };
        cat.index()?;
        Ok(cat)
    }

    /// Creates the directory layout and an empty index where missing.
    pub fn init(root: impl Into<PathBuf>) -> Result<Self, CatalogError> {
        let cat = Catalog { root: root.into() };
        for kind in Kind::ALL {
            let dir = cat.root.join(kind.dir());
            fs::create_dir_all(&dir).map_err(CatalogError::io(&dir))?;
        }
        let index = cat.index_path();
        if !index.exists() {
            let tmp = tmp_sibling(&index);
            write_synced(&tmp, CatalogIndex::default().to_document().as_bytes())?;
            fs::rename(&tmp, &index).map_err(CatalogError::io(&index))?;
        }
        Ok(cat)
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    fn index_path(&self) -> PathBuf {
        self.root.join(INDEX_FILE)
    }

    fn object_rel(kind: Kind, id: &str) -> String {
        format!("{}/{id}.json", kind.dir())
    }

    pub fn index(&self) -> Result<CatalogIndex, CatalogError> {
        let path = self.index_path();
        let text = fs::read_to_string(&path).map_err(CatalogError::io(&path))?;
        let index: CatalogIndex = serde_json::from_str(&text)
            .map_err(|e| CatalogError::Corrupt(format!("{}: {e}", path.display())))?;
        for e in &index.entries {
            if e.path != Self::object_rel(e.kind, &e.id) || check_id(&e.id).is_err() {
                return Err(CatalogError::Corrupt(format!(
                    "index entry {} `{}` has path `{}`",
                    e.kind, e.id, e.path
                )));
            }
        }
        Ok(index)
    }

    fn lock(&self) -> Result<File, CatalogError> {
        let path = self.root.join(LOCK_FILE);
        let f = OpenOptions::new()
            .create(true)
            .truncate(false)
            .write(true)
            .open(&path)
            .map_err(CatalogError::io(&path))?;
        f.lock().map_err(CatalogError::io(&path))?;
        Ok(f)
    }

    /// Catalog ontology: the only one, else the one named `default`.
    pub fn ontology(&self) -> Result<Ontology, CatalogError> {
        let index = self.index()?;
        let ids: Vec<&str> = index
            .entries
            .iter()
            .filter(|e| e.kind == Kind::Ontology)
            .map(|e| e.id.as_str())
            .collect();
        let id = match ids.as_slice() {
            [only] => *only,
            _ if ids.contains(&DEFAULT_ONTOLOGY) => DEFAULT_ONTOLOGY,
            _ => return Err(CatalogError::NoOntology),
        };
        self.get_ontology(id)
    }

    pub fn conditions(&self) -> Result<BTreeMap<String, TriggeringCondition>, CatalogError> {
        let index = self.index()?;
        let mut out = BTreeMap::new();
        for e in index.entries.iter().filter(|e| e.kind == Kind::Tc) {
            out.insert(e.id.clone(), self.get_condition(&e.id)?);
        }
        Ok(out)
    }

    fn parse(kind: Kind, id: &str, text: &str) -> Result<CatalogObject, String> {
        let obj = match kind {
            Kind::Ontology => CatalogObject::Ontology(load_ontology(text).map_err(|e| e.to_string())?),
            Kind::Scenario => CatalogObject::Scenario(load_scenario(text).map_err(|e| e.to_string())?),
            Kind::Tc => CatalogObject::Tc(load_condition(text).map_err(|e| e.to_string())?),
        };
        let inner_id = match &obj {
            CatalogObject::Ontology(_) => id,
            CatalogObject::Scenario(s) => &s.id,
            CatalogObject::Tc(t) => &t.id,
        };
        if inner_id != id {
            return Err(format!("document id `{inner_id}` does not match `{id}`"));
        }
        Ok(obj)
    }

    fn validate(&self, kind: Kind, id: &str, document: &str) -> Result<(), CatalogError> {
        let failed = |report: ValidationReport| CatalogError::ValidationFailed {
            kind,
            id: id.to_string(),
            report,
        };
        let single = |msg: String| {
            let mut r = ValidationReport::new();
            r.error(id, msg);
            failed(r)
        };
        let obj = Self::parse(kind, id, document).map_err(single)?;
        let report = match obj {
            CatalogObject::Ontology(o) => validate_ontology(&o),
            CatalogObject::Scenario(s) => validate_scenario(&s, &self.ontology()?),
            CatalogObject::Tc(tc) => {
                validate_condition(&tc, &self.ontology()?, Some(&self.conditions()?))
            }
        };
        if report.has_errors() {
            return Err(failed(report));
        }
        Ok(())
    }

    /// Validates and stages an add for a scenario or condition, taking the
    /// id from the document.
    pub fn prepare_add(&self, kind: Kind, document: &str) -> Result<PendingAdd, CatalogError> {
        let id = match kind {
            Kind::Ontology => Ok(DEFAULT_ONTOLOGY.to_string()),
            Kind::Scenario => load_scenario(document).map(|s| s.id).map_err(|e| e.to_string()),
            Kind::Tc => load_condition(document).map(|t| t.id).map_err(|e| e.to_string()),
        }
        .map_err(|msg: String| {
            let mut report = ValidationReport::new();
            report.error(format!("<{kind}>"), msg);
            CatalogError::ValidationFailed {
                kind,
                id: String::new(),
                report,
            }
        })?;
        self.prepare_add_as(kind, &id, document)
    }

    /// Validates and stages an add under an explicit id. Ontologies carry no
    /// id of their own and are named here.
    pub fn prepare_add_as(&self, kind: Kind, id: &str, document: &str) -> Result<PendingAdd, CatalogError> {
        check_id(id)?;
        let lock = self.lock()?;
        let mut index = self.index()?;
        if index.find(kind, id).is_some() {
            return Err(CatalogError::DuplicateId {
                kind,
                id: id.to_string(),
            });
        }
        self.validate(kind, id, document)?;

        let rel = Self::object_rel(kind, id);
        let object_path = self.root.join(&rel);
        let dir = self.root.join(kind.dir());
        fs::create_dir_all(&dir).map_err(CatalogError::io(&dir))?;
        let entry = CatalogEntry {
            kind,
            id: id.to_string(),
            path: rel,
            digest: digest(document.as_bytes()),
        };
        index.insert(entry.clone());

        let object_tmp = tmp_sibling(&object_path);
        let index_path = self.index_path();
        let index_tmp = tmp_sibling(&index_path);
        let pending = PendingAdd {
            entry,
            object_tmp,
            object_path,
            index_tmp,
            index_path,
            committed: false,
            _lock: lock,
        };
        write_synced(&pending.object_tmp, document.as_bytes())?;
        write_synced(&pending.index_tmp, index.to_document().as_bytes())?;
        Ok(pending)
    }

    pub fn add(&self, kind: Kind, document: &str) -> Result<CatalogEntry, CatalogError> {
        self.prepare_add(kind, document)?.commit()
    }

    pub fn add_as(&self, kind: Kind, id: &str, document: &str) -> Result<CatalogEntry, CatalogError> {
        self.prepare_add_as(kind, id, document)?.commit()
    }

    /// Stored text of an entry, digest-checked.
    pub fn read(&self, kind: Kind, id: &str) -> Result<String, CatalogError> {
        let index = self.index()?;
        let entry = index.find(kind, id).ok_or_else(|| CatalogError::NotFound {
            kind,
            id: id.to_string(),
        })?;
        let path = self.root.join(&entry.path);
        let bytes = fs::read(&path).map_err(CatalogError::io(&path))?;
        let actual = digest(&bytes);
        if actual != entry.digest {
            return Err(CatalogError::DigestMismatch {
                kind,
                id: id.to_string(),
                expected: entry.digest.clone(),
                actual,
            });
        }
        String::from_utf8(bytes).map_err(|_| CatalogError::Corrupt(format!("{} is not UTF-8", path.display())))
    }

    pub fn get(&self, kind: Kind, id: &str) -> Result<CatalogObject, CatalogError> {
        let text = self.read(kind, id)?;
        Self::parse(kind, id, &text).map_err(|msg| CatalogError::Corrupt(format!("{kind} `{id}`: {msg}")))
    }

    pub fn get_ontology(&self, id: &str) -> Result<Ontology, CatalogError> {
        match self.get(Kind::Ontology, id)? {
            CatalogObject::Ontology(o) => Ok(o),
            _ => unreachable!("parsed by kind"),
        }
    }

    pub fn get_scenario(&self, id: &str) -> Result<Scenario, CatalogError> {
        match self.get(Kind::Scenario, id)? {
            CatalogObject::Scenario(s) => Ok(s),
            _ => unreachable!("parsed by kind"),
        }
    }

    pub fn get_condition(&self, id: &str) -> Result<TriggeringCondition, CatalogError> {
        match self.get(Kind::Tc, id)? {
            CatalogObject::Tc(t) => Ok(t),
            _ => unreachable!("parsed by kind"),
        }
    }

    /// Entries of `kind` (all kinds when `None`) that pass `filter`, sorted
    /// by kind then id.
    pub fn list(&self, kind: Option<Kind>, filter: &ListFilter) -> Result<Vec<CatalogEntry>, CatalogError> {
        let mut out = Vec::new();
        for e in self.index()?.entries {
            if kind.is_some_and(|k| k != e.kind) {
                continue;
            }
            if !filter.is_empty() && (e.kind != Kind::Scenario || !filter.matches(&self.get_scenario(&e.id)?)) {
                continue;
            }
            out.push(e);
        }
        Ok(out)
    }

    /// Index recomputed from the object directories. Stored documents must
    /// parse and carry the id their file name gives.
    pub fn scan(&self) -> Result<CatalogIndex, CatalogError> {
        let mut index = CatalogIndex::default();
        for kind in Kind::ALL {
            let dir = self.root.join(kind.dir());
            if !dir.exists() {
                continue;
            }
            for item in fs::read_dir(&dir).map_err(CatalogError::io(&dir))? {
                let path = item.map_err(CatalogError::io(&dir))?.path();
                let Some(name) = path.file_name().and_then(|n| n.to_str()) else {
                    continue;
                };
                let Some(id) = name.strip_suffix(".json") else {
                    continue;
                };
                if name.starts_with('.') || !path.is_file() {
                    continue;
                }
                check_id(id)?;
                let bytes = fs::read(&path).map_err(CatalogError::io(&path))?;
                let text = std::str::from_utf8(&bytes)
                    .map_err(|_| CatalogError::Corrupt(format!("{} is not UTF-8", path.display())))?;
                Self::parse(kind, id, text)
                    .map_err(|msg| CatalogError::Corrupt(format!("{}: {msg}", path.display())))?;
                index.entries.push(CatalogEntry {
                    kind,
                    id: id.to_string(),
                    path: Self::object_rel(kind, id),
                    digest: digest(&bytes),
                });
            }
        }
        index.entries.sort();
        Ok(index)
    }

    /// Replaces the index with [`Catalog::scan`].
    pub fn rebuild(&self) -> Result<CatalogIndex, CatalogError> {
        let _lock = self.lock()?;
        let index = self.scan()?;
        let path = self.index_path();
        let tmp = tmp_sibling(&path);
        write_synced(&tmp, index.to_document().as_bytes())?;
        fs::rename(&tmp, &path).map_err(CatalogError::io(&path))?;
        Ok(index)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus;

    #[test]
    fn bundled_index_matches_scan() {
        let cat = Catalog::open(corpus::catalog_dir()).unwrap();
        assert_eq!(cat.index().unwrap(), cat.scan().unwrap());
    }

    #[test]
    fn list_highway() {
        let cat = Catalog::open(corpus::catalog_dir()).unwrap();
        let filter = ListFilter {
            odd_tag: Some("highway".into()),
            ..Default::default()
        };
        let ids: Vec<String> = cat
            .list(Some(Kind::Scenario), &filter)
            .unwrap()
            .into_iter()
            .map(|e| e.id)
            .collect();
        assert_eq!(ids, ["highway_lead_brake", "highway_slow_lead"]);
    }

    #[test]
    fn ids_are_path_safe() {
        assert!(check_id("heavy_snow").is_ok());
        assert!(check_id("a-b_C9").is_ok());
        for bad in ["", "../x", "a/b", ".hidden", "a b"] {
            assert!(check_id(bad).is_err(), "{bad}");
        }
    }

    #[test]
    fn kind_parses() {
        assert_eq!("tc".parse::<Kind>(), Ok(Kind::Tc));
        assert_eq!("SCENARIO".parse::<Kind>(), Ok(Kind::Scenario));
        assert!("layer".parse::<Kind>().is_err());
    }
}
