//! Test-side oracles and fixtures. Nothing here calls into the code under
//! test except to build inputs.

#![allow(dead_code)]

use std::collections::{BTreeMap, HashSet};

use proptest::prelude::*;
use serde_json::{json, Value};
use sotif_core::constraints::{Bound, ScenarioConstraint, SourcedConstraint};
use sotif_core::ontology::{EntityKind, LimitingDirection, OntologyEntity};
use sotif_core::{EntityId, Interval, Ontology};

// ---------------------------------------------------------------- merge

pub const LOW_PARAM: &str = "env/low";
pub const HIGH_PARAM: &str = "env/high";
pub const BOUNDS: Interval = Interval { lo: 0.0, hi: 100.0 };
pub const TC_IDS: [&str; 4] = ["a", "b", "c", "d"];

/// Two bounded params on [0, 100], one per limiting direction.
pub fn merge_ontology() -> Ontology {
    let mut low = OntologyEntity::param(LOW_PARAM, "env", "u", Some(BOUNDS));
    low.limiting_direction = Some(LimitingDirection::LowerIsWorse);
    let mut high = OntologyEntity::param(HIGH_PARAM, "env", "u", Some(BOUNDS));
    high.limiting_direction = Some(LimitingDirection::HigherIsWorse);
    Ontology::from_entities([OntologyEntity::bare("env", EntityKind::Node, None), low, high]).unwrap()
}

pub fn id(s: &str) -> EntityId {
    EntityId::parse(s).unwrap()
}

pub fn bound_strategy() -> impl Strategy<Value = Bound> {
    let v = || (0u32..=100).prop_map(f64::from);
    prop_oneof![
        4 => v().prop_map(Bound::Max),
        4 => v().prop_map(Bound::Min),
        4 => (v(), v()).prop_map(|(a, b)| Bound::Range(Interval::new(a.min(b), a.max(b)))),
        3 => (1u32..=10).prop_map(|k| Bound::Factor(f64::from(k) / 10.0)),
        1 => prop::sample::select(vec![20.0, 40.0]).prop_map(Bound::Fixed),
    ]
}

pub fn constraint_strategy() -> impl Strategy<Value = SourcedConstraint> {
    (
        prop::sample::select(TC_IDS.to_vec()),
        prop::sample::select(vec![LOW_PARAM, HIGH_PARAM]),
        bound_strategy(),
    )
        .prop_map(|(tc, p, b)| SourcedConstraint::new(tc, ScenarioConstraint::new(id(p), b)))
}

pub fn constraint_set(max: usize) -> impl Strategy<Value = Vec<SourcedConstraint>> {
    prop::collection::vec(constraint_strategy(), 0..=max)
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExpectedMerge {
    pub interval: Option<Interval>,
    pub factor: f64,
    /// Winning condition when the override path is taken.
    pub override_winner: Option<String>,
    pub tie_warning: bool,
}

/// Reference merge for a single param, written from the rules directly:
/// intersect; if the intersection is empty, or a single point the sources
/// disagree on, keep the candidate with the most limiting endpoint (then the
/// narrowest, then the smallest id). `None` for two distinct FIXED values.
pub fn oracle_merge(
    direction: LimitingDirection,
    bounds: Interval,
    items: &[(String, Bound)],
) -> Option<ExpectedMerge> {
    let mut fixed: Vec<f64> = items
        .iter()
        .filter_map(|(_, b)| match b {
            Bound::Fixed(v) => Some(*v),
            _ => None,
        })
        .collect();
    fixed.sort_by(f64::total_cmp);
    fixed.dedup();
    if fixed.len() > 1 {
        return None;
    }

    let mut factor = 1.0;
    let mut cands: Vec<(String, Interval)> = Vec::new();
    for (tc, b) in items {
        match *b {
            Bound::Factor(f) => factor *= f,
            Bound::Max(v) => cands.push((tc.clone(), Interval { lo: bounds.lo, hi: v })),
            Bound::Min(v) => cands.push((tc.clone(), Interval { lo: v, hi: bounds.hi })),
            Bound::Range(iv) => cands.push((tc.clone(), iv)),
            Bound::Fixed(v) => cands.push((tc.clone(), Interval { lo: v, hi: v })),
        }
    }
    if cands.is_empty() {
        return Some(ExpectedMerge {
            interval: None,
            factor,
            override_winner: None,
            tie_warning: false,
        });
    }
    let lo = cands.iter().map(|c| c.1.lo).fold(f64::NEG_INFINITY, f64::max);
    let hi = cands.iter().map(|c| c.1.hi).fold(f64::INFINITY, f64::min);
    let agree = cands.iter().all(|c| c.1 == cands[0].1);
    if lo < hi || (lo == hi && agree) {
        return Some(ExpectedMerge {
            interval: Some(Interval { lo, hi }),
            factor,
            override_winner: None,
            tie_warning: false,
        });
    }
    let key = |iv: &Interval| match direction {
        LimitingDirection::LowerIsWorse => iv.lo,
        LimitingDirection::HigherIsWorse => -iv.hi,
    };
    let best = cands.iter().map(|c| key(&c.1)).fold(f64::INFINITY, f64::min);
    let mut tied: Vec<&(String, Interval)> = cands.iter().filter(|c| key(&c.1) == best).collect();
    tied.sort_by(|a, b| {
        (a.1.hi - a.1.lo)
            .partial_cmp(&(b.1.hi - b.1.lo))
            .unwrap()
            .then_with(|| a.0.cmp(&b.0))
    });
    let winner = tied[0].clone();
    let tie_warning = tied.iter().any(|c| c.1 != winner.1);
    Some(ExpectedMerge {
        interval: Some(winner.1),
        factor,
        override_winner: Some(winner.0),
        tie_warning,
    })
}

pub fn group_by_param(set: &[SourcedConstraint]) -> BTreeMap<EntityId, Vec<(String, Bound)>> {
    let mut out: BTreeMap<EntityId, Vec<(String, Bound)>> = BTreeMap::new();
    for c in set {
        out.entry(c.constraint.param.clone())
            .or_default()
            .push((c.tc_id.clone(), c.constraint.bound));
    }
    out
}

pub fn direction_of(param: &EntityId) -> LimitingDirection {
    if param.to_string() == HIGH_PARAM {
        LimitingDirection::HigherIsWorse
    } else {
        LimitingDirection::LowerIsWorse
    }
}

pub fn close(a: f64, b: f64) -> bool {
    (a - b).abs() <= 1e-12 * a.abs().max(b.abs()).max(1.0)
}

// ---------------------------------------------------------------- pairs

/// Every (param i, level a, param j, level b) with i < j that no row covers.
pub fn uncovered_pairs(sizes: &[usize], rows: &[Vec<usize>]) -> Vec<(usize, usize, usize, usize)> {
    let mut seen = HashSet::new();
    for r in rows {
        for i in 0..sizes.len() {
            for j in i + 1..sizes.len() {
                seen.insert((i, r[i], j, r[j]));
            }
        }
    }
    let mut missing = Vec::new();
    for i in 0..sizes.len() {
        for j in i + 1..sizes.len() {
            for a in 0..sizes[i] {
                for b in 0..sizes[j] {
                    if !seen.contains(&(i, a, j, b)) {
                        missing.push((i, a, j, b));
                    }
                }
            }
        }
    }
    missing
}

pub fn rows_in_range(sizes: &[usize], rows: &[Vec<usize>]) -> bool {
    rows.iter()
        .all(|r| r.len() == sizes.len() && r.iter().zip(sizes).all(|(v, n)| v < n))
}

// ---------------------------------------------------------------- kinematics

/// Distance covered from detection to standstill: reaction travel plus
/// braking distance at `a * mu`.
pub fn closed_form_stopping_distance(v: f64, t_r: f64, a: f64, mu: f64) -> f64 {
    v * t_r + v * v / (2.0 * a * mu)
}

/// 50 (v, t_r, a, mu) combinations, friction 0.8 included.
pub fn kinematic_sweep() -> Vec<(f64, f64, f64, f64)> {
    let mut out = Vec::new();
    for v in [10.0, 15.0, 20.0, 25.0, 30.0] {
        for t_r in [0.5, 1.0] {
            for (a, mu) in [(6.0, 1.0), (6.0, 0.8), (8.0, 0.8), (5.0, 0.6), (9.0, 1.0)] {
                out.push((v, t_r, a, mu));
            }
        }
    }
    out
}

// ---------------------------------------------------------------- documents

/// Sets `value` at `path`; numeric segments index arrays, other containers
/// are indexed by key.
pub fn set_path(doc: &mut serde_json::Value, path: &[&str], value: serde_json::Value) {
    let mut cur = doc;
    for key in path {
        cur = match (cur.is_array(), key.parse::<usize>()) {
            (true, Ok(i)) => &mut cur[i],
            _ => &mut cur[*key],
        };
    }
    *cur = value;
}

// ---------------------------------------------------------------- mutations

/// (description, entity the report must name, mutation of the clean document)
pub type Mutation = (&'static str, &'static str, fn(&mut Value));

fn entity_index(doc: &Value, id: &str) -> usize {
    doc["entities"]
        .as_array()
        .unwrap()
        .iter()
        .position(|e| e["id"] == id)
        .unwrap_or_else(|| panic!("no entity {id}"))
}

fn set_entity(doc: &mut Value, id: &str, field: &str, value: Value) {
    let i = entity_index(doc, id);
    doc["entities"][i][field] = value;
}

const VIS: &str = "environment/ambient/visibility";
const AMBIENT: &str = "environment/ambient";
const SNOW: &str = "environment/weather/snowfall";
const HEAVY: &str = "environment/weather/snowfall/heavy_snow";
const RAIN: &str = "environment/weather/rainfall";

pub fn ontology_mutations() -> Vec<Mutation> {
    vec![
        ("param without unit", VIS, |d| {
            let i = entity_index(d, VIS);
            d["entities"][i].as_object_mut().unwrap().remove("unit");
        }),
        ("param with blank unit", VIS, |d| set_entity(d, VIS, "unit", json!("  "))),
        ("reversed bounds", VIS, |d| set_entity(d, VIS, "physical_bounds", json!([100, 0]))),
        ("node with unit", AMBIENT, |d| set_entity(d, AMBIENT, "unit", json!("m"))),
        ("node with bounds", AMBIENT, |d| set_entity(d, AMBIENT, "physical_bounds", json!([0, 1]))),
        ("enum with direction", SNOW, |d| set_entity(d, SNOW, "limiting_direction", json!("LOWER_IS_WORSE"))),
        ("value with unit", HEAVY, |d| set_entity(d, HEAVY, "unit", json!("mm"))),
        ("value under node", HEAVY, |d| set_entity(d, HEAVY, "parent", json!("environment/weather"))),
        ("enum under param", SNOW, |d| set_entity(d, SNOW, "parent", json!(VIS))),
        ("param under enum", VIS, |d| set_entity(d, VIS, "parent", json!("environment/time_of_day"))),
        ("node under enum", AMBIENT, |d| set_entity(d, AMBIENT, "parent", json!(SNOW))),
        ("enum without values", RAIN, |d| {
            d["entities"]
                .as_array_mut()
                .unwrap()
                .retain(|e| e["parent"] != RAIN);
        }),
        ("dangling parent", VIS, |d| set_entity(d, VIS, "parent", json!("environment/nowhere"))),
        ("duplicate id", VIS, |d| {
            let copy = d["entities"][entity_index(d, VIS)].clone();
            d["entities"].as_array_mut().unwrap().push(copy);
        }),
        ("malformed id", "Environment/Bad Id", |d| {
            d["entities"].as_array_mut().unwrap().push(json!({ "id": "Environment/Bad Id", "kind": "NODE" }));
        }),
        ("parent cycle", "environment", |d| set_entity(d, "environment", "parent", json!("environment/weather"))),
    ]
}

pub fn scenario_mutations() -> Vec<Mutation> {
    vec![
        ("kind outside layer vocabulary", "median_barrier", |d| {
            set_path(d, &["layers", "2", "0", "kind"], json!("road_segment"))
        }),
        ("unknown layer", "layers/7", |d| {
            d["layers"]["7"] = json!([]);
        }),
        ("two egos", "highway_lead_brake", |d| {
            d["layers"]["4"]
                .as_array_mut()
                .unwrap()
                .push(json!({ "id": "ego2", "kind": "ego_vehicle", "attrs": { "speed": 10 } }));
        }),
        ("no ego", "highway_lead_brake", |d| {
            d["layers"]["4"].as_array_mut().unwrap().retain(|e| e["kind"] != "ego_vehicle");
        }),
        ("negative ego speed", "ego", |d| set_path(d, &["layers", "4", "0", "attrs", "speed"], json!(-3))),
        ("ego speed as text", "ego", |d| set_path(d, &["layers", "4", "0", "attrs", "speed"], json!("fast"))),
        ("zero lead gap", "lead", |d| set_path(d, &["layers", "4", "1", "attrs", "gap"], json!(0))),
        ("unknown lead profile", "lead", |d| set_path(d, &["layers", "4", "1", "attrs", "profile"], json!("zigzag"))),
        ("scripted decel without rate", "lead", |d| {
            d["layers"]["4"][1]["attrs"].as_object_mut().unwrap().remove("decel");
        }),
        ("unresolved param", "environment/ambient/fogginess", |d| {
            set_path(d, &["params", "0", "param"], json!("environment/ambient/fogginess"))
        }),
        ("param path names a node", AMBIENT, |d| set_path(d, &["params", "0", "param"], json!(AMBIENT))),
        ("range below bounds", "environment/ambient/illuminance", |d| {
            set_path(d, &["params", "0", "range"], json!([-5, 100]))
        }),
        ("value above bounds", "road/surface/asphalt_friction", |d| {
            set_path(d, &["params", "1", "value"], json!(1.5))
        }),
        ("reversed range", "environment/ambient/illuminance", |d| {
            set_path(d, &["params", "0", "range"], json!([100, 1]))
        }),
        ("non-positive reaction time", "function", |d| {
            d["function"] = json!({ "reaction_time": -1.0 });
        }),
        ("duplicate element id", "lead", |d| {
            d["layers"]["1"]
                .as_array_mut()
                .unwrap()
                .push(json!({ "id": "lead", "kind": "junction" }));
        }),
        ("duplicate param", "road/surface/asphalt_friction", |d| {
            d["params"]
                .as_array_mut()
                .unwrap()
                .push(json!({ "param": "road/surface/asphalt_friction", "value": 0.5 }));
        }),
        ("blank odd tag", "highway_lead_brake", |d| {
            d["odd_tags"].as_array_mut().unwrap().push(json!(" "));
        }),
    ]
}

pub fn condition_mutations() -> Vec<Mutation> {
    vec![
        ("unresolved constraint param", "environment/ambient/haze", |d| {
            set_path(d, &["constraints", "0", "param"], json!("environment/ambient/haze"))
        }),
        ("max above bounds", VIS, |d| set_path(d, &["constraints", "0", "value"], json!(20000))),
        ("factor above one", "road/surface/asphalt_friction", |d| {
            set_path(d, &["constraints", "2", "value"], json!(1.5))
        }),
        ("reversed range", "environment/ambient/illuminance", |d| {
            set_path(d, &["constraints", "1", "value"], json!([2000, 1]))
        }),
    ]
}
