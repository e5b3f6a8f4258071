//! Scenario constraints, triggering conditions, and the merge that turns a
//! set of conditions into one effective constraint per parameter.
//!
//! Merge semantics per parameter:
//!
//! 1. every MAX / MIN / RANGE / FIXED constraint becomes a closed interval,
//!    with the open side of MAX and MIN taken from the param's physical bounds
//!    (or infinity when it has none);
//! 2. the intervals are intersected;
//! 3. when the intersection is empty, or collapses to a single point that the
//!    sources disagree on, the most limiting interval wins outright: the one
//!    reaching furthest in the param's adverse direction. Ties on that
//!    endpoint go to the narrower interval, then to the smaller condition id,
//!    and are reported as a warning;
//! 4. FACTOR constraints never conflict and multiply together.
//!
//! Two distinct FIXED values on one param cannot be reconciled by the override
//! and are rejected as infeasible.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::interval::Interval;
use crate::ontology::{EntityId, LimitingDirection, Ontology, OntologyEntity};
use crate::report::ValidationReport;
use crate::scenario::{ParamValue, Scenario};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ConstraintError {
    #[error("syntax error at line {line}, column {column}: {message}")]
    Syntax {
        line: usize,
        column: usize,
        message: String,
    },
    #[error("constraint on `{param}` does not resolve: {reason}")]
    UnresolvedParam { param: String, reason: String },
    #[error("invalid constraint on `{param}` in `{tc_id}`: {reason}")]
    InvalidConstraint {
        tc_id: String,
        param: String,
        reason: String,
    },
    #[error("`{tc_id}` references unknown sub-condition `{sub}`")]
    UnknownSubCondition { tc_id: String, sub: String },
    #[error("cyclic composition: {}", .0.join(" -> "))]
    CyclicComposition(Vec<String>),
    #[error("infeasible constraints on `{param}`: {reason}")]
    Infeasible { param: String, reason: String },
    #[error("empty sampling range for `{param}`: scenario {scenario} and admissible {admissible} are disjoint")]
    EmptySamplingRange {
        param: String,
        scenario: Interval,
        admissible: Interval,
    },
    #[error("`{param}` is left free by the scenario and its admissible interval {admissible} is unbounded")]
    UnboundedSamplingRange { param: String, admissible: Interval },
    #[error("`{param}` has a factor but no value in the scenario to apply it to")]
    MissingBaseValue { param: String },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "UPPERCASE")]
pub enum ConstraintType {
    Max,
    Min,
    Range,
    Factor,
    Fixed,
}

impl fmt::Display for ConstraintType {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ConstraintType::Max => "MAX",
            ConstraintType::Min => "MIN",
            ConstraintType::Range => "RANGE",
            ConstraintType::Factor => "FACTOR",
            ConstraintType::Fixed => "FIXED",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum ConstraintValue {
    Scalar(f64),
    Pair([f64; 2]),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Bound {
    Max(f64),
    Min(f64),
    Range(Interval),
    Factor(f64),
    Fixed(f64),
}

impl Bound {
    pub fn ctype(&self) -> ConstraintType {
        match self {
            Bound::Max(_) => ConstraintType::Max,
            Bound::Min(_) => ConstraintType::Min,
            Bound::Range(_) => ConstraintType::Range,
            Bound::Factor(_) => ConstraintType::Factor,
            Bound::Fixed(_) => ConstraintType::Fixed,
        }
    }

    fn value(&self) -> ConstraintValue {
        match *self {
            Bound::Max(v) | Bound::Min(v) | Bound::Factor(v) | Bound::Fixed(v) => {
                ConstraintValue::Scalar(v)
            }
            Bound::Range(iv) => ConstraintValue::Pair([iv.lo, iv.hi]),
        }
    }

    /// Interval form for everything except FACTOR.
    pub fn to_interval(&self, bounds: Interval) -> Option<Interval> {
        match *self {
            Bound::Max(v) => Some(Interval::new(bounds.lo, v)),
            Bound::Min(v) => Some(Interval::new(v, bounds.hi)),
            Bound::Range(iv) => Some(iv),
            Bound::Fixed(v) => Some(Interval::point(v)),
            Bound::Factor(_) => None,
        }
    }

    fn sort_key(&self) -> (ConstraintType, u64, u64) {
        let (a, b) = match *self {
            Bound::Max(v) | Bound::Min(v) | Bound::Factor(v) | Bound::Fixed(v) => (v, 0.0),
            Bound::Range(iv) => (iv.lo, iv.hi),
        };
        (self.ctype(), ordered_bits(a), ordered_bits(b))
    }
}

/// Maps an f64 to a u64 whose unsigned order matches the float order.
fn ordered_bits(v: f64) -> u64 {
    let bits = v.to_bits();
    if bits >> 63 == 1 {
        !bits
    } else {
        bits | (1 << 63)
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawConstraint {
    param: EntityId,
    #[serde(rename = "type")]
    ctype: ConstraintType,
    value: ConstraintValue,
}

/// A typed bound on one PARAM.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawConstraint", into = "RawConstraint")]
pub struct ScenarioConstraint {
    pub param: EntityId,
    pub bound: Bound,
}

impl TryFrom<RawConstraint> for ScenarioConstraint {
    type Error = String;
    fn try_from(raw: RawConstraint) -> Result<Self, Self::Error> {
        let bound = match (raw.ctype, raw.value) {
            (ConstraintType::Max, ConstraintValue::Scalar(v)) => Bound::Max(v),
            (ConstraintType::Min, ConstraintValue::Scalar(v)) => Bound::Min(v),
            (ConstraintType::Factor, ConstraintValue::Scalar(v)) => Bound::Factor(v),
            (ConstraintType::Fixed, ConstraintValue::Scalar(v)) => Bound::Fixed(v),
            (ConstraintType::Range, ConstraintValue::Pair([lo, hi])) => {
                Bound::Range(Interval::new(lo, hi))
            }
            (ConstraintType::Range, _) => return Err("RANGE value must be [lo, hi]".into()),
            (t, _) => return Err(format!("{t} value must be a single number")),
        };
        Ok(ScenarioConstraint {
            param: raw.param,
            bound,
        })
    }
}

impl From<ScenarioConstraint> for RawConstraint {
    fn from(c: ScenarioConstraint) -> Self {
        RawConstraint {
            param: c.param,
            ctype: c.bound.ctype(),
            value: c.bound.value(),
        }
    }
}

impl ScenarioConstraint {
    pub fn new(param: EntityId, bound: Bound) -> Self {
        ScenarioConstraint { param, bound }
    }

    /// Checks the value against the param it constrains.
    pub fn check(&self, param: &OntologyEntity) -> Result<(), String> {
        let finite = match self.bound {
            Bound::Range(iv) => iv.is_finite(),
            Bound::Max(v) | Bound::Min(v) | Bound::Factor(v) | Bound::Fixed(v) => v.is_finite(),
        };
        if !finite {
            return Err("value must be finite".into());
        }
        match self.bound {
            Bound::Range(iv) if !iv.is_valid() => Err(format!("RANGE {iv} has lo > hi")),
            Bound::Factor(f) if !(f > 0.0 && f <= 1.0) => {
                Err(format!("FACTOR {f} outside (0, 1]"))
            }
            Bound::Max(v) | Bound::Min(v) | Bound::Fixed(v) => match param.physical_bounds {
                Some(b) if !b.contains(v) => {
                    Err(format!("{} {v} outside physical bounds {b}", self.bound.ctype()))
                }
                _ => Ok(()),
            },
            _ => Ok(()),
        }
    }
}

/// A named combination of scenario constraints and other conditions.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TriggeringCondition {
    pub id: String,
    pub name: String,
    #[serde(default)]
    pub constraints: Vec<ScenarioConstraint>,
    #[serde(default)]
    pub sub_conditions: Vec<String>,
}

pub fn load_condition(document: &str) -> Result<TriggeringCondition, ConstraintError> {
    serde_json::from_str(document).map_err(|e| ConstraintError::Syntax {
        line: e.line(),
        column: e.column(),
        message: e.to_string(),
    })
}

/// Anything that can look a triggering condition up by id.
pub trait ConditionSource {
    fn condition(&self, id: &str) -> Option<&TriggeringCondition>;
}

impl ConditionSource for BTreeMap<String, TriggeringCondition> {
    fn condition(&self, id: &str) -> Option<&TriggeringCondition> {
        self.get(id)
    }
}

impl ConditionSource for [TriggeringCondition] {
    fn condition(&self, id: &str) -> Option<&TriggeringCondition> {
        self.iter().find(|tc| tc.id == id)
    }
}

impl ConditionSource for Vec<TriggeringCondition> {
    fn condition(&self, id: &str) -> Option<&TriggeringCondition> {
        self.as_slice().condition(id)
    }
}

/// A constraint together with the condition that declared it.
#[derive(Debug, Clone, PartialEq)]
pub struct SourcedConstraint {
    pub tc_id: String,
    pub constraint: ScenarioConstraint,
}

impl SourcedConstraint {
    pub fn new(tc_id: impl Into<String>, constraint: ScenarioConstraint) -> Self {
        SourcedConstraint {
            tc_id: tc_id.into(),
            constraint,
        }
    }
}

/// Depth-first collection of a condition's constraints: its own first, then
/// each sub-condition in declaration order.
pub fn flatten(
    tc: &TriggeringCondition,
    source: &(impl ConditionSource + ?Sized),
) -> Result<Vec<SourcedConstraint>, ConstraintError> {
    let mut out = Vec::new();
    let mut stack = Vec::new();
    flatten_into(tc, source, &mut stack, &mut out)?;
    Ok(out)
}

fn flatten_into(
    tc: &TriggeringCondition,
    source: &(impl ConditionSource + ?Sized),
    stack: &mut Vec<String>,
    out: &mut Vec<SourcedConstraint>,
) -> Result<(), ConstraintError> {
    if stack.contains(&tc.id) {
        let mut path = stack.clone();
        path.push(tc.id.clone());
        return Err(ConstraintError::CyclicComposition(path));
    }
    stack.push(tc.id.clone());
    out.extend(
        tc.constraints
            .iter()
            .map(|c| SourcedConstraint::new(tc.id.clone(), c.clone())),
    );
    for sub_id in &tc.sub_conditions {
        let sub = source
            .condition(sub_id)
            .ok_or_else(|| ConstraintError::UnknownSubCondition {
                tc_id: tc.id.clone(),
                sub: sub_id.clone(),
            })?;
        flatten_into(sub, source, stack, out)?;
    }
    stack.pop();
    Ok(())
}

/// Checks a condition's constraints against the ontology and, when a source
/// is given, that its composition resolves without cycles.
pub fn validate_condition(
    tc: &TriggeringCondition,
    ontology: &Ontology,
    source: Option<&dyn ConditionSource>,
) -> ValidationReport {
    let mut report = ValidationReport::new();
    if tc.id.trim().is_empty() {
        report.error("<condition>", "empty condition id");
    }
    for c in &tc.constraints {
        let param = c.param.to_string();
        match ontology.resolve_param(&c.param) {
            Err(e) => report.error(&param, format!("unresolved param: {e}")),
            Ok(entity) => {
                if let Err(reason) = c.check(entity) {
                    report.error(&param, reason);
                }
            }
        }
    }
    if let Some(source) = source {
        struct Chained<'a> {
            tc: &'a TriggeringCondition,
            rest: &'a dyn ConditionSource,
        }
        impl ConditionSource for Chained<'_> {
            fn condition(&self, id: &str) -> Option<&TriggeringCondition> {
                if id == self.tc.id {
                    Some(self.tc)
                } else {
                    self.rest.condition(id)
                }
            }
        }
        if let Err(e) = flatten(tc, &Chained { tc, rest: source }) {
            report.error(&tc.id, e.to_string());
        }
    }
    report.finish()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum Role {
    /// Contributed to the admissible interval.
    Applied,
    /// Lost to a more limiting interval.
    Overridden,
    /// Multiplied into the factor.
    Factor,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ProvenanceEntry {
    pub tc_id: String,
    pub constraint: ScenarioConstraint,
    pub role: Role,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Resolution {
    /// Only FACTOR constraints; the interval is left to the scenario.
    FactorOnly,
    Intersection,
    Override { winner: String },
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EffectiveConstraint {
    pub interval: Option<Interval>,
    pub factor: f64,
    pub resolution: Resolution,
    pub provenance: Vec<ProvenanceEntry>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MergeWarning {
    pub param: EntityId,
    pub message: String,
}

/// Output of [`merge`]: one entry per constrained PARAM.
#[derive(Debug, Clone, PartialEq, Default, Serialize)]
pub struct EffectiveConstraintSet {
    /// Conditions this set was built from.
    pub conditions: Vec<String>,
    pub params: BTreeMap<EntityId, EffectiveConstraint>,
    pub warnings: Vec<MergeWarning>,
}

impl EffectiveConstraintSet {
    pub fn get(&self, param: &EntityId) -> Option<&EffectiveConstraint> {
        self.params.get(param)
    }

    pub fn is_empty(&self) -> bool {
        self.params.is_empty()
    }

    /// Re-expresses the merged result as plain constraints, one interval
    /// constraint and at most one factor per param.
    pub fn to_constraints(&self, tc_id: &str) -> Vec<SourcedConstraint> {
        let mut out = Vec::new();
        for (param, entry) in &self.params {
            if let Some(iv) = entry.interval {
                let bound = match (iv.lo.is_finite(), iv.hi.is_finite()) {
                    _ if iv.is_point() => Some(Bound::Fixed(iv.lo)),
                    (true, true) => Some(Bound::Range(iv)),
                    (false, true) => Some(Bound::Max(iv.hi)),
                    (true, false) => Some(Bound::Min(iv.lo)),
                    (false, false) => None,
                };
                if let Some(bound) = bound {
                    out.push(SourcedConstraint::new(
                        tc_id,
                        ScenarioConstraint::new(param.clone(), bound),
                    ));
                }
            }
            if entry.factor != 1.0 || entry.interval.is_none() {
                out.push(SourcedConstraint::new(
                    tc_id,
                    ScenarioConstraint::new(param.clone(), Bound::Factor(entry.factor)),
                ));
            }
        }
        out
    }
}

fn canonical_order(a: &SourcedConstraint, b: &SourcedConstraint) -> std::cmp::Ordering {
    a.tc_id
        .cmp(&b.tc_id)
        .then_with(|| a.constraint.bound.sort_key().cmp(&b.constraint.bound.sort_key()))
}

/// Merges constraints into one effective constraint per param.
pub fn merge(
    constraints: &[SourcedConstraint],
    ontology: &Ontology,
) -> Result<EffectiveConstraintSet, ConstraintError> {
    let mut by_param: BTreeMap<&EntityId, Vec<&SourcedConstraint>> = BTreeMap::new();
    for c in constraints {
        by_param.entry(&c.constraint.param).or_default().push(c);
    }

    let mut set = EffectiveConstraintSet {
        conditions: constraints
            .iter()
            .map(|c| c.tc_id.clone())
            .collect::<BTreeSet<_>>()
            .into_iter()
            .collect(),
        ..Default::default()
    };

    for (param, mut group) in by_param {
        let entity =
            ontology
                .resolve_param(param)
                .map_err(|e| ConstraintError::UnresolvedParam {
                    param: param.to_string(),
                    reason: e.to_string(),
                })?;
        group.sort_by(|a, b| canonical_order(a, b));
        for c in &group {
            c.constraint
                .check(entity)
                .map_err(|reason| ConstraintError::InvalidConstraint {
                    tc_id: c.tc_id.clone(),
                    param: param.to_string(),
                    reason,
                })?;
        }
        let (entry, warning) = merge_param(entity, &group)?;
        if let Some(message) = warning {
            set.warnings.push(MergeWarning {
                param: param.clone(),
                message,
            });
        }
        set.params.insert(param.clone(), entry);
    }
    Ok(set)
}

/// `group` must be in canonical order.
fn merge_param(
    entity: &OntologyEntity,
    group: &[&SourcedConstraint],
) -> Result<(EffectiveConstraint, Option<String>), ConstraintError> {
    let fixed: BTreeSet<u64> = group
        .iter()
        .filter_map(|c| match c.constraint.bound {
            Bound::Fixed(v) => Some(ordered_bits(v)),
            _ => None,
        })
        .collect();
    if fixed.len() > 1 {
        let values: Vec<String> = group
            .iter()
            .filter(|c| c.constraint.bound.ctype() == ConstraintType::Fixed)
            .map(|c| format!("{} from {}", c.constraint.bound.value_string(), c.tc_id))
            .collect();
        return Err(ConstraintError::Infeasible {
            param: entity.id.to_string(),
            reason: format!("conflicting FIXED values: {}", values.join(", ")),
        });
    }

    let bounds = entity.bounds_or_unbounded();
    let mut factors: Vec<f64> = Vec::new();
    let mut candidates: Vec<(usize, Interval)> = Vec::new();
    for (i, c) in group.iter().enumerate() {
        match c.constraint.bound {
            Bound::Factor(f) => factors.push(f),
            b => candidates.push((i, b.to_interval(bounds).expect("non-factor bound"))),
        }
    }
    factors.sort_by(f64::total_cmp);
    let factor = factors.iter().product::<f64>();

    let mut roles = vec![Role::Factor; group.len()];
    let mut warning = None;
    let (interval, resolution) = if candidates.is_empty() {
        (None, Resolution::FactorOnly)
    } else {
        let lo = candidates.iter().map(|(_, iv)| iv.lo).fold(f64::NEG_INFINITY, f64::max);
        let hi = candidates.iter().map(|(_, iv)| iv.hi).fold(f64::INFINITY, f64::min);
        let all_same = candidates.windows(2).all(|w| w[0].1 == w[1].1);
        if lo < hi || (lo == hi && all_same) {
            for (i, _) in &candidates {
                roles[*i] = Role::Applied;
            }
            (Some(Interval::new(lo, hi)), Resolution::Intersection)
        } else {
            let direction = entity.direction();
            let extreme = |iv: &Interval| match direction {
                LimitingDirection::LowerIsWorse => iv.lo,
                LimitingDirection::HigherIsWorse => -iv.hi,
            };
            // Candidates are already in canonical (tc id) order, so a stable
            // sort on (endpoint, width) leaves the id tie-break in place.
            let mut ranked = candidates.clone();
            ranked.sort_by(|(_, a), (_, b)| {
                extreme(a)
                    .total_cmp(&extreme(b))
                    .then(a.width().total_cmp(&b.width()))
            });
            let (winner_idx, winner) = ranked[0];
            let tied: Vec<&(usize, Interval)> = ranked
                .iter()
                .filter(|(_, iv)| extreme(iv) == extreme(&winner) && *iv != winner)
                .collect();
            if !tied.is_empty() {
                let others: Vec<String> = tied
                    .iter()
                    .map(|(i, iv)| format!("{iv} from {}", group[*i].tc_id))
                    .collect();
                warning = Some(format!(
                    "degenerate override: {winner} from {} ties with {}; narrower interval kept",
                    group[winner_idx].tc_id,
                    others.join(", ")
                ));
            }
            for (i, _) in &candidates {
                roles[*i] = Role::Overridden;
            }
            roles[winner_idx] = Role::Applied;
            (
                Some(winner),
                Resolution::Override {
                    winner: group[winner_idx].tc_id.clone(),
                },
            )
        }
    };

    let provenance = group
        .iter()
        .zip(roles)
        .map(|(c, role)| ProvenanceEntry {
            tc_id: c.tc_id.clone(),
            constraint: c.constraint.clone(),
            role,
        })
        .collect();

    Ok((
        EffectiveConstraint {
            interval,
            factor,
            resolution,
            provenance,
        },
        warning,
    ))
}

impl Bound {
    fn value_string(&self) -> String {
        match self {
            Bound::Range(iv) => iv.to_string(),
            Bound::Max(v) | Bound::Min(v) | Bound::Factor(v) | Bound::Fixed(v) => v.to_string(),
        }
    }
}

/// Flattens each named condition and merges the lot.
pub fn compose(
    tc_ids: &[String],
    source: &(impl ConditionSource + ?Sized),
    ontology: &Ontology,
) -> Result<EffectiveConstraintSet, ConstraintError> {
    let mut all = Vec::new();
    for id in tc_ids {
        let tc = source
            .condition(id)
            .ok_or_else(|| ConstraintError::UnknownSubCondition {
                tc_id: "<request>".into(),
                sub: id.clone(),
            })?;
        all.extend(flatten(tc, source)?);
    }
    let mut set = merge(&all, ontology)?;
    set.conditions = tc_ids.to_vec();
    Ok(set)
}

/// Where a test case's parameter values came from.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum Provenance {
    Nominal,
    TcSet(Vec<String>),
}

impl Provenance {
    pub fn label(&self) -> String {
        match self {
            Provenance::Nominal => "nominal".to_string(),
            Provenance::TcSet(ids) => ids.join("+"),
        }
    }
}

/// Sampling domain for one param after constraints are applied.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ParamDomain {
    /// Interval to sample from, before the factor; a point for fixed params.
    pub range: Interval,
    pub factor: f64,
    /// Physical bounds the scaled value is clamped to.
    pub bounds: Interval,
}

impl ParamDomain {
    pub fn is_fixed(&self) -> bool {
        self.range.is_point()
    }

    /// Scales a value drawn from `range` and clamps it to the physical bounds.
    pub fn realize(&self, sampled: f64) -> f64 {
        self.bounds.clamp(sampled * self.factor)
    }
}

/// A scenario with every param's sampling domain resolved.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ConstrainedScenario {
    pub scenario_id: String,
    pub provenance: Provenance,
    pub params: BTreeMap<EntityId, ParamDomain>,
}

impl ConstrainedScenario {
    /// The scenario's own ranges, with no condition applied.
    pub fn nominal(s: &Scenario, ontology: &Ontology) -> Result<Self, ConstraintError> {
        apply_to_scenario(&EffectiveConstraintSet::default(), s, ontology)
    }
}

/// Narrows a scenario's sampling ranges by an effective constraint set.
pub fn apply_to_scenario(
    ecs: &EffectiveConstraintSet,
    s: &Scenario,
    ontology: &Ontology,
) -> Result<ConstrainedScenario, ConstraintError> {
    let resolve = |param: &EntityId| {
        ontology
            .resolve_param(param)
            .map_err(|e| ConstraintError::UnresolvedParam {
                param: param.to_string(),
                reason: e.to_string(),
            })
    };

    let mut params = BTreeMap::new();
    for a in &s.params {
        let entity = resolve(&a.param)?;
        let own = match a.value {
            ParamValue::Fixed(v) => Interval::point(v),
            ParamValue::Range(iv) => iv,
        };
        let (range, factor) = match ecs.get(&a.param) {
            None => (own, 1.0),
            Some(eff) => {
                let range = match eff.interval {
                    None => own,
                    Some(adm) => own.intersect(&adm).ok_or_else(|| {
                        ConstraintError::EmptySamplingRange {
                            param: a.param.to_string(),
                            scenario: own,
                            admissible: adm,
                        }
                    })?,
                };
                (range, eff.factor)
            }
        };
        params.insert(
            a.param.clone(),
            ParamDomain {
                range,
                factor,
                bounds: entity.bounds_or_unbounded(),
            },
        );
    }

    for (param, eff) in &ecs.params {
        if params.contains_key(param) {
            continue;
        }
        let entity = resolve(param)?;
        let Some(adm) = eff.interval else {
            return Err(ConstraintError::MissingBaseValue {
                param: param.to_string(),
            });
        };
        if !adm.is_finite() {
            return Err(ConstraintError::UnboundedSamplingRange {
                param: param.to_string(),
                admissible: adm,
            });
        }
        params.insert(
            param.clone(),
            ParamDomain {
                range: adm,
                factor: eff.factor,
                bounds: entity.bounds_or_unbounded(),
            },
        );
    }

    let provenance = if ecs.conditions.is_empty() {
        Provenance::Nominal
    } else {
        Provenance::TcSet(ecs.conditions.clone())
    };
    Ok(ConstrainedScenario {
        scenario_id: s.id.clone(),
        provenance,
        params,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ontology::{EntityKind, OntologyEntity};

    fn id(s: &str) -> EntityId {
        EntityId::parse(s).unwrap()
    }

    fn ontology() -> Ontology {
        let mut friction = OntologyEntity::param(
            "road/asphalt_friction",
            "road",
            "dimensionless",
            Some(Interval::new(0.0, 1.0)),
        );
        friction.limiting_direction = Some(LimitingDirection::LowerIsWorse);
        let mut rain = OntologyEntity::param(
            "env/rain_rate",
            "env",
            "mm/h",
            Some(Interval::new(0.0, 200.0)),
        );
        rain.limiting_direction = Some(LimitingDirection::HigherIsWorse);
        Ontology::from_entities([
            OntologyEntity::node("env", None),
            OntologyEntity::node("road", None),
            OntologyEntity::param("env/visibility", "env", "m", Some(Interval::new(0.0, 10000.0))),
            OntologyEntity::param("env/illuminance", "env", "lux", Some(Interval::new(0.0, 150000.0))),
            OntologyEntity::param("env/free", "env", "m", None),
            OntologyEntity::bare("env/sky", EntityKind::Enum, Some("env")),
            friction,
            rain,
        ])
        .unwrap()
    }

    fn sc(tc: &str, param: &str, bound: Bound) -> SourcedConstraint {
        SourcedConstraint::new(tc, ScenarioConstraint::new(id(param), bound))
    }

    #[test]
    fn max_normalizes_against_physical_bounds() {
        let set = merge(&[sc("heavy_snow", "env/visibility", Bound::Max(500.0))], &ontology()).unwrap();
        let e = set.get(&id("env/visibility")).unwrap();
        assert_eq!(e.interval, Some(Interval::new(0.0, 500.0)));
        assert_eq!(e.factor, 1.0);
        assert_eq!(e.resolution, Resolution::Intersection);
    }

    #[test]
    fn max_without_bounds_is_half_open() {
        let set = merge(&[sc("a", "env/free", Bound::Max(3.0))], &ontology()).unwrap();
        let iv = set.get(&id("env/free")).unwrap().interval.unwrap();
        assert_eq!(iv.lo, f64::NEG_INFINITY);
        assert_eq!(iv.hi, 3.0);
    }

    #[test]
    fn point_intersection_with_disagreeing_sources_overrides() {
        let set = merge(
            &[
                sc("heavy_snow", "env/illuminance", Bound::Range(Interval::new(1.0, 2000.0))),
                sc("night_time", "env/illuminance", Bound::Max(1.0)),
            ],
            &ontology(),
        )
        .unwrap();
        let e = set.get(&id("env/illuminance")).unwrap();
        assert_eq!(e.interval, Some(Interval::new(0.0, 1.0)));
        assert_eq!(
            e.resolution,
            Resolution::Override {
                winner: "night_time".into()
            }
        );
        let roles: Vec<(&str, Role)> =
            e.provenance.iter().map(|p| (p.tc_id.as_str(), p.role)).collect();
        assert_eq!(
            roles,
            vec![("heavy_snow", Role::Overridden), ("night_time", Role::Applied)]
        );
        assert!(set.warnings.is_empty());
    }

    #[test]
    fn identical_points_do_not_override() {
        let set = merge(
            &[
                sc("a", "env/visibility", Bound::Fixed(40.0)),
                sc("b", "env/visibility", Bound::Range(Interval::new(40.0, 40.0))),
            ],
            &ontology(),
        )
        .unwrap();
        let e = set.get(&id("env/visibility")).unwrap();
        assert_eq!(e.interval, Some(Interval::point(40.0)));
        assert_eq!(e.resolution, Resolution::Intersection);
    }

    #[test]
    fn factors_multiply() {
        let set = merge(
            &[
                sc("a", "road/asphalt_friction", Bound::Factor(0.8)),
                sc("b", "road/asphalt_friction", Bound::Factor(0.9)),
            ],
            &ontology(),
        )
        .unwrap();
        let e = set.get(&id("road/asphalt_friction")).unwrap();
        assert!((e.factor - 0.72).abs() < 1e-12);
        assert_eq!(e.interval, None);
        assert_eq!(e.resolution, Resolution::FactorOnly);
    }

    #[test]
    fn empty_input_gives_empty_set() {
        assert!(merge(&[], &ontology()).unwrap().is_empty());
    }

    #[test]
    fn higher_is_worse_override_keeps_highest_upper_end() {
        let set = merge(
            &[
                sc("drizzle", "env/rain_rate", Bound::Max(2.0)),
                sc("storm", "env/rain_rate", Bound::Min(50.0)),
            ],
            &ontology(),
        )
        .unwrap();
        let e = set.get(&id("env/rain_rate")).unwrap();
        assert_eq!(e.interval, Some(Interval::new(50.0, 200.0)));
        assert_eq!(e.resolution, Resolution::Override { winner: "storm".into() });
    }

    #[test]
    fn tie_on_extreme_endpoint_prefers_narrower_and_warns() {
        let set = merge(
            &[
                sc("a", "env/visibility", Bound::Range(Interval::new(0.0, 50.0))),
                sc("b", "env/visibility", Bound::Range(Interval::new(0.0, 20.0))),
                sc("c", "env/visibility", Bound::Min(100.0)),
            ],
            &ontology(),
        )
        .unwrap();
        let e = set.get(&id("env/visibility")).unwrap();
        assert_eq!(e.interval, Some(Interval::new(0.0, 20.0)));
        assert_eq!(e.resolution, Resolution::Override { winner: "b".into() });
        assert_eq!(set.warnings.len(), 1);
    }

    #[test]
    fn same_width_tie_goes_to_smaller_id() {
        let set = merge(
            &[
                sc("zeta", "env/visibility", Bound::Range(Interval::new(0.0, 20.0))),
                sc("alpha", "env/visibility", Bound::Range(Interval::new(0.0, 20.0))),
                sc("c", "env/visibility", Bound::Min(100.0)),
            ],
            &ontology(),
        )
        .unwrap();
        let e = set.get(&id("env/visibility")).unwrap();
        assert_eq!(e.resolution, Resolution::Override { winner: "alpha".into() });
        // identical intervals are not an ambiguity
        assert!(set.warnings.is_empty());
    }

    #[test]
    fn conflicting_fixed_values_are_infeasible() {
        let err = merge(
            &[
                sc("a", "env/visibility", Bound::Fixed(5.0)),
                sc("b", "env/visibility", Bound::Fixed(7.0)),
            ],
            &ontology(),
        )
        .unwrap_err();
        assert!(matches!(err, ConstraintError::Infeasible { .. }));
    }

    #[test]
    fn invalid_constraints_rejected() {
        let o = ontology();
        for bad in [
            sc("t", "env/visibility", Bound::Max(-5.0)),
            sc("t", "env/visibility", Bound::Range(Interval::new(5.0, 1.0))),
            sc("t", "road/asphalt_friction", Bound::Factor(0.0)),
            sc("t", "road/asphalt_friction", Bound::Factor(1.5)),
        ] {
            assert!(matches!(
                merge(&[bad], &o),
                Err(ConstraintError::InvalidConstraint { .. })
            ));
        }
        assert!(matches!(
            merge(&[sc("t", "env/sky", Bound::Max(1.0))], &o),
            Err(ConstraintError::UnresolvedParam { .. })
        ));
    }

    #[test]
    fn constraint_json_shape_enforced() {
        let ok: ScenarioConstraint =
            serde_json::from_str(r#"{ "param": "a/b", "type": "RANGE", "value": [1, 2000] }"#).unwrap();
        assert_eq!(ok.bound, Bound::Range(Interval::new(1.0, 2000.0)));
        assert!(serde_json::from_str::<ScenarioConstraint>(
            r#"{ "param": "a/b", "type": "MAX", "value": [1, 2] }"#
        )
        .is_err());
        assert!(serde_json::from_str::<ScenarioConstraint>(
            r#"{ "param": "a/b", "type": "RANGE", "value": 3 }"#
        )
        .is_err());
    }

    fn tc(id: &str, constraints: Vec<ScenarioConstraint>, subs: &[&str]) -> TriggeringCondition {
        TriggeringCondition {
            id: id.into(),
            name: id.into(),
            constraints,
            sub_conditions: subs.iter().map(|s| s.to_string()).collect(),
        }
    }

    #[test]
    fn flatten_orders_parent_then_subs() {
        let c = |p: &str, b| ScenarioConstraint::new(id(p), b);
        let catalog = vec![
            tc("a", vec![c("env/visibility", Bound::Max(1.0))], &["b", "c"]),
            tc("b", vec![c("env/illuminance", Bound::Max(2.0))], &[]),
            tc("c", vec![c("env/rain_rate", Bound::Min(3.0))], &[]),
        ];
        let flat = flatten(&catalog[0], &catalog).unwrap();
        let ids: Vec<&str> = flat.iter().map(|s| s.tc_id.as_str()).collect();
        assert_eq!(ids, ["a", "b", "c"]);
    }

    #[test]
    fn flatten_detects_cycles_and_unknown_subs() {
        let catalog = vec![tc("a", vec![], &["b"]), tc("b", vec![], &["a"])];
        assert!(matches!(
            flatten(&catalog[0], &catalog),
            Err(ConstraintError::CyclicComposition(p)) if p == ["a", "b", "a"]
        ));
        let lone = vec![tc("x", vec![], &["missing"])];
        assert!(matches!(
            flatten(&lone[0], &lone),
            Err(ConstraintError::UnknownSubCondition { .. })
        ));
    }

    #[test]
    fn re_expressed_set_merges_to_itself() {
        let o = ontology();
        let set = merge(
            &[
                sc("a", "env/visibility", Bound::Max(500.0)),
                sc("a", "env/illuminance", Bound::Range(Interval::new(1.0, 2000.0))),
                sc("b", "env/illuminance", Bound::Max(1.0)),
                sc("a", "road/asphalt_friction", Bound::Factor(0.8)),
                sc("a", "env/free", Bound::Min(2.0)),
            ],
            &o,
        )
        .unwrap();
        let again = merge(&set.to_constraints("merged"), &o).unwrap();
        for (param, e) in &set.params {
            let f = again.get(param).unwrap();
            assert_eq!(e.interval, f.interval, "{param}");
            assert_eq!(e.factor, f.factor, "{param}");
        }
        assert_eq!(set.params.len(), again.params.len());
    }
}
