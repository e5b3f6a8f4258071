//! Six-layer scenario descriptions and their data and logic checks.
//!
//! Layers: 1 road network and traffic guidance, 2 roadside structures,
//! 3 temporary modifications of 1 and 2, 4 dynamic objects, 5 environmental
//! conditions, 6 digital information.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::interval::Interval;
use crate::ontology::{EntityId, Ontology};
use crate::report::ValidationReport;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ScenarioError {
    #[error("syntax error at line {line}, column {column}: {message}")]
    Syntax {
        line: usize,
        column: usize,
        message: String,
    },
    #[error("duplicate id `{0}`")]
    DuplicateId(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct LayerId(u8);

impl LayerId {
    pub const ALL: [LayerId; 6] = [
        LayerId(1),
        LayerId(2),
        LayerId(3),
        LayerId(4),
        LayerId(5),
        LayerId(6),
    ];
    pub const DYNAMIC_OBJECTS: LayerId = LayerId(4);

    pub fn new(n: u8) -> Option<Self> {
        (1..=6).contains(&n).then_some(LayerId(n))
    }

    pub fn number(self) -> u8 {
        self.0
    }

    /// Element kinds permitted on this layer.
    pub fn vocabulary(self) -> &'static [&'static str] {
        match self.0 {
            1 => &[
                "road_segment",
                "lane_marking",
                "traffic_sign",
                "traffic_light",
                "junction",
            ],
            2 => &[
                "building",
                "vegetation",
                "street_lamp",
                "advertising_board",
                "guard_rail",
            ],
            3 => &["roadwork_sign", "temporary_marking", "covered_marking"],
            4 => &[
                "ego_vehicle",
                "lead_vehicle",
                "vehicle",
                "pedestrian",
                "trailer",
                "animal",
            ],
            5 => &["illumination", "precipitation", "road_weather", "fog"],
            _ => &["traffic_light_state", "switchable_sign", "v2x_message"],
        }
    }
}

impl fmt::Display for LayerId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

impl Serialize for LayerId {
    fn serialize<S: serde::Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        serializer.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for LayerId {
    fn deserialize<D: serde::Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let s = String::deserialize(deserializer)?;
        s.parse::<u8>()
            .ok()
            .and_then(LayerId::new)
            .ok_or_else(|| serde::de::Error::custom(format!("layer `{s}` outside 1..6")))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum AttrValue {
    Number(f64),
    Text(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SceneElement {
    pub id: String,
    pub kind: String,
    #[serde(default)]
    pub attrs: BTreeMap<String, AttrValue>,
}

impl SceneElement {
    pub fn number(&self, key: &str) -> Option<f64> {
        match self.attrs.get(key) {
            Some(AttrValue::Number(v)) => Some(*v),
            _ => None,
        }
    }

    pub fn text(&self, key: &str) -> Option<&str> {
        match self.attrs.get(key) {
            Some(AttrValue::Text(s)) => Some(s),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ParamValue {
    Fixed(f64),
    /// Free parameter, sampled by the test generator.
    Range(Interval),
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawAssignment {
    param: EntityId,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    value: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    range: Option<[f64; 2]>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawAssignment", into = "RawAssignment")]
pub struct ParamAssignment {
    pub param: EntityId,
    pub value: ParamValue,
}

impl TryFrom<RawAssignment> for ParamAssignment {
    type Error = String;
    fn try_from(raw: RawAssignment) -> Result<Self, Self::Error> {
        let value = match (raw.value, raw.range) {
            (Some(v), None) => ParamValue::Fixed(v),
            (None, Some([lo, hi])) => ParamValue::Range(Interval::new(lo, hi)),
            _ => {
                return Err(format!(
                    "assignment for `{}` needs exactly one of `value` or `range`",
                    raw.param
                ))
            }
        };
        Ok(ParamAssignment {
            param: raw.param,
            value,
        })
    }
}

impl From<ParamAssignment> for RawAssignment {
    fn from(a: ParamAssignment) -> Self {
        match a.value {
            ParamValue::Fixed(v) => RawAssignment {
                param: a.param,
                value: Some(v),
                range: None,
            },
            ParamValue::Range(iv) => RawAssignment {
                param: a.param,
                value: None,
                range: Some([iv.lo, iv.hi]),
            },
        }
    }
}

/// Perception-and-brake model of the driving function under test.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FunctionUnderTest {
    /// Sensor range in clear conditions, m.
    pub sensor_max_range: f64,
    /// Delay between detection and brake onset, s.
    pub reaction_time: f64,
    /// Deceleration achievable at friction 1.0, m/s².
    pub max_decel_at_mu1: f64,
    /// Illuminance at and above which detection is unimpaired, lux.
    pub illum_full: f64,
    /// Detection range factor at 0 lux.
    pub illum_floor_factor: f64,
}

impl Default for FunctionUnderTest {
    fn default() -> Self {
        FunctionUnderTest {
            sensor_max_range: 200.0,
            reaction_time: 0.5,
            max_decel_at_mu1: 6.0,
            illum_full: 1000.0,
            illum_floor_factor: 0.5,
        }
    }
}

impl FunctionUnderTest {
    /// Names of fields violating their invariants.
    pub fn problems(&self) -> Vec<(&'static str, String)> {
        let mut out = Vec::new();
        for (name, v) in [
            ("sensor_max_range", self.sensor_max_range),
            ("reaction_time", self.reaction_time),
            ("max_decel_at_mu1", self.max_decel_at_mu1),
            ("illum_full", self.illum_full),
            ("illum_floor_factor", self.illum_floor_factor),
        ] {
            if !(v.is_finite() && v > 0.0) {
                out.push((name, format!("{name} must be positive, got {v}")));
            }
        }
        if self.illum_floor_factor > 1.0 {
            out.push((
                "illum_floor_factor",
                format!("illum_floor_factor must be <= 1, got {}", self.illum_floor_factor),
            ));
        }
        out
    }
}

/// Per-scenario overrides of [`FunctionUnderTest::default`].
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FunctionOverrides {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sensor_max_range: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub reaction_time: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub max_decel_at_mu1: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub illum_full: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub illum_floor_factor: Option<f64>,
}

impl FunctionOverrides {
    pub fn apply(&self, base: FunctionUnderTest) -> FunctionUnderTest {
        FunctionUnderTest {
            sensor_max_range: self.sensor_max_range.unwrap_or(base.sensor_max_range),
            reaction_time: self.reaction_time.unwrap_or(base.reaction_time),
            max_decel_at_mu1: self.max_decel_at_mu1.unwrap_or(base.max_decel_at_mu1),
            illum_full: self.illum_full.unwrap_or(base.illum_full),
            illum_floor_factor: self.illum_floor_factor.unwrap_or(base.illum_floor_factor),
        }
    }
}

pub const EGO_KIND: &str = "ego_vehicle";
pub const LEAD_KIND: &str = "lead_vehicle";
pub const LEAD_PROFILES: [&str; 3] = ["constant_speed", "stopped", "scripted_decel"];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Scenario {
    pub id: String,
    #[serde(default)]
    pub odd_tags: Vec<String>,
    #[serde(default)]
    pub layers: BTreeMap<LayerId, Vec<SceneElement>>,
    #[serde(default)]
    pub params: Vec<ParamAssignment>,
    #[serde(default)]
    pub function: Option<FunctionOverrides>,
}

impl Scenario {
    pub fn elements(&self) -> impl Iterator<Item = (LayerId, &SceneElement)> {
        self.layers
            .iter()
            .flat_map(|(layer, els)| els.iter().map(move |e| (*layer, e)))
    }

    pub fn elements_of_kind<'a>(&'a self, kind: &'a str) -> impl Iterator<Item = &'a SceneElement> {
        self.elements().map(|(_, e)| e).filter(move |e| e.kind == kind)
    }

    pub fn assignment(&self, param: &EntityId) -> Option<&ParamAssignment> {
        self.params.iter().find(|a| &a.param == param)
    }

    /// Params the test generator has to sample.
    pub fn free_params(&self) -> impl Iterator<Item = &ParamAssignment> {
        self.params
            .iter()
            .filter(|a| matches!(a.value, ParamValue::Range(_)))
    }

    pub fn function_under_test(&self) -> FunctionUnderTest {
        self.function
            .as_ref()
            .map(|o| o.apply(FunctionUnderTest::default()))
            .unwrap_or_default()
    }

    pub fn to_document(&self) -> String {
        serde_json::to_string_pretty(self).expect("scenario serializes")
    }
}

pub fn load_scenario(document: &str) -> Result<Scenario, ScenarioError> {
    let s: Scenario = serde_json::from_str(document).map_err(|e| ScenarioError::Syntax {
        line: e.line(),
        column: e.column(),
        message: e.to_string(),
    })?;
    let mut element_ids = BTreeSet::new();
    for (_, e) in s.elements() {
        if !element_ids.insert(e.id.as_str()) {
            return Err(ScenarioError::DuplicateId(e.id.clone()));
        }
    }
    let mut params = BTreeSet::new();
    for a in &s.params {
        if !params.insert(&a.param) {
            return Err(ScenarioError::DuplicateId(a.param.to_string()));
        }
    }
    Ok(s)
}

fn check_number(
    report: &mut ValidationReport,
    e: &SceneElement,
    key: &str,
    ok: impl Fn(f64) -> bool,
    rule: &str,
) {
    match e.attrs.get(key) {
        Some(AttrValue::Number(v)) if v.is_finite() && ok(*v) => {}
        Some(AttrValue::Number(v)) => {
            report.error(&e.id, format!("attribute `{key}` = {v} must be {rule}"))
        }
        Some(AttrValue::Text(_)) => report.error(&e.id, format!("attribute `{key}` must be a number")),
        None => report.error(&e.id, format!("missing attribute `{key}`")),
    }
}

/// Data and logic checks: references resolve, values respect physical
/// bounds, element kinds match their layer, and layer 4 holds exactly one ego.
pub fn validate_scenario(s: &Scenario, o: &Ontology) -> ValidationReport {
    let mut report = ValidationReport::new();
    if s.id.trim().is_empty() {
        report.error("<scenario>", "empty scenario id");
    }
    for tag in &s.odd_tags {
        if tag.trim().is_empty() {
            report.error(&s.id, "empty odd tag");
        }
    }

    for (layer, e) in s.elements() {
        if !layer.vocabulary().contains(&e.kind.as_str()) {
            report.error(
                &e.id,
                format!("element kind `{}` is not allowed on layer {layer}", e.kind),
            );
        }
        match e.kind.as_str() {
            EGO_KIND => check_number(&mut report, e, "speed", |v| v >= 0.0, "non-negative"),
            LEAD_KIND => {
                check_number(&mut report, e, "gap", |v| v > 0.0, "positive");
                check_number(&mut report, e, "speed", |v| v >= 0.0, "non-negative");
                match e.text("profile") {
                    Some("scripted_decel") => {
                        check_number(&mut report, e, "decel_start", |v| v >= 0.0, "non-negative");
                        check_number(&mut report, e, "decel", |v| v > 0.0, "positive");
                    }
                    Some(p) if LEAD_PROFILES.contains(&p) => {}
                    Some(p) => report.error(&e.id, format!("unknown lead profile `{p}`")),
                    None => report.error(&e.id, "missing attribute `profile`"),
                }
            }
            _ => {}
        }
    }

    let egos = s
        .layers
        .get(&LayerId::DYNAMIC_OBJECTS)
        .map(|els| els.iter().filter(|e| e.kind == EGO_KIND).count())
        .unwrap_or(0);
    if egos != 1 {
        report.error(
            &s.id,
            format!("layer 4 must contain exactly one ego_vehicle, found {egos}"),
        );
    }

    for a in &s.params {
        let name = a.param.to_string();
        let entity = match o.resolve_param(&a.param) {
            Ok(entity) => entity,
            Err(e) => {
                report.error(&name, format!("unresolved param: {e}"));
                continue;
            }
        };
        let span = match a.value {
            ParamValue::Fixed(v) => Interval::point(v),
            ParamValue::Range(iv) => iv,
        };
        if !span.is_finite() {
            report.error(&name, "value must be finite");
            continue;
        }
        if !span.is_valid() {
            report.error(&name, format!("range {span} has lo > hi"));
            continue;
        }
        if let Some(b) = entity.physical_bounds {
            if span.lo < b.lo {
                report.error(&name, format!("{} below physical bounds {b}", span.lo));
            }
            if span.hi > b.hi {
                report.error(&name, format!("{} above physical bounds {b}", span.hi));
            }
        }
    }

    for (_, problem) in s.function_under_test().problems() {
        report.error("function", problem);
    }

    report.finish()
}

/// Layer keys of a raw document that are not 1..6.
fn unknown_layers(document: &str) -> Vec<String> {
    let Ok(serde_json::Value::Object(root)) = serde_json::from_str(document) else {
        return Vec::new();
    };
    match root.get("layers") {
        Some(serde_json::Value::Object(layers)) => layers
            .keys()
            .filter(|k| k.parse::<u8>().ok().and_then(LayerId::new).is_none())
            .cloned()
            .collect(),
        _ => Vec::new(),
    }
}

/// Loads and validates in one step; load failures become report entries.
pub fn lint_scenario(document: &str, o: &Ontology) -> ValidationReport {
    match load_scenario(document) {
        Ok(s) => validate_scenario(&s, o),
        Err(err) => {
            let mut report = ValidationReport::new();
            let bad_layers = unknown_layers(document);
            match &err {
                ScenarioError::Syntax { .. } if !bad_layers.is_empty() => {
                    for key in bad_layers {
                        report.error(format!("layers/{key}"), format!("unknown layer `{key}`, layers are 1..6"));
                    }
                }
                ScenarioError::Syntax { .. } => report.error("<document>", err.to_string()),
                ScenarioError::DuplicateId(id) => report.error(id, err.to_string()),
            }
            report.finish()
        }
    }
}
