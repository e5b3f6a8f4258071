//! Bundled example data: the default ontology, the heavy-snow / night-time
//! conditions and a few longitudinal scenarios.
//!
//! The same files live on disk under `corpus/` as a ready-made catalog.

use std::collections::BTreeMap;
use std::path::PathBuf;

use crate::constraints::{load_condition, TriggeringCondition};
use crate::ontology::{load_ontology, Ontology};
use crate::scenario::{load_scenario, Scenario};

pub const ONTOLOGY: &str = include_str!("../corpus/ontologies/default.json");

pub const CONDITIONS: [(&str, &str); 3] = [
    ("heavy_snow", include_str!("../corpus/tcs/heavy_snow.json")),
    ("heavy_snow_night", include_str!("../corpus/tcs/heavy_snow_night.json")),
    ("night_time", include_str!("../corpus/tcs/night_time.json")),
];

pub const SCENARIOS: [(&str, &str); 3] = [
    ("highway_lead_brake", include_str!("../corpus/scenarios/highway_lead_brake.json")),
    ("highway_slow_lead", include_str!("../corpus/scenarios/highway_slow_lead.json")),
    ("rural_stopped_vehicle", include_str!("../corpus/scenarios/rural_stopped_vehicle.json")),
];

/// On-disk location of the bundled catalog (valid in a source checkout).
pub fn catalog_dir() -> PathBuf {
    PathBuf::from(concat!(env!("CARGO_MANIFEST_DIR"), "/corpus"))
}

pub fn ontology() -> Ontology {
    load_ontology(ONTOLOGY).expect("bundled ontology loads")
}

pub fn conditions() -> BTreeMap<String, TriggeringCondition> {
    CONDITIONS
        .iter()
        .map(|(id, doc)| {
            let tc = load_condition(doc).expect("bundled condition loads");
            debug_assert_eq!(&tc.id, id);
            (tc.id.clone(), tc)
        })
        .collect()
}

pub fn condition(id: &str) -> Option<TriggeringCondition> {
    conditions().remove(id)
}

pub fn scenario(id: &str) -> Option<Scenario> {
    SCENARIOS
        .iter()
        .find(|(sid, _)| *sid == id)
        .map(|(_, doc)| load_scenario(doc).expect("bundled scenario loads"))
}

pub fn scenarios() -> Vec<Scenario> {
    SCENARIOS
        .iter()
        .map(|(_, doc)| load_scenario(doc).expect("bundled scenario loads"))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::constraints::validate_condition;
    use crate::ontology::validate_ontology;
    use crate::scenario::validate_scenario;

    #[test]
    fn bundled_corpus_is_clean() {
        let o = ontology();
        let r = validate_ontology(&o);
        assert!(r.is_empty(), "{r}");
        let tcs = conditions();
        for tc in tcs.values() {
            let r = validate_condition(tc, &o, Some(&tcs));
            assert!(r.is_empty(), "{}: {r}", tc.id);
        }
        for s in scenarios() {
            let r = validate_scenario(&s, &o);
            assert!(r.is_empty(), "{}: {r}", s.id);
        }
    }

    #[test]
    fn highway_scenario_has_two_dynamic_objects() {
        let s = scenario("highway_lead_brake").unwrap();
        assert_eq!(s.layers[&crate::scenario::LayerId::DYNAMIC_OBJECTS].len(), 2);
    }
}
