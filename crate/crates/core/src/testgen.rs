//! Test matrix generation: full factorial grids and pairwise-reduced
//! covering arrays over the sampling domains of a constrained scenario.

use std::collections::{BTreeMap, HashSet};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::constraints::{ConstrainedScenario, ConstraintError, Provenance};
use crate::interval::Interval;
use crate::ontology::{EntityId, Ontology};
use crate::scenario::Scenario;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum TestgenError {
    #[error("number of levels must be at least 1")]
    InvalidLevels,
    #[error(transparent)]
    Constraint(#[from] ConstraintError),
    #[error("matrix line {line}: {message}")]
    Parse { line: usize, message: String },
}

/// `k` values spread uniformly over `iv`, endpoints included; a single level
/// is the midpoint. Degenerate intervals collapse to one value.
pub fn discretize(iv: Interval, k: usize) -> Result<Vec<f64>, TestgenError> {
    if k == 0 {
        return Err(TestgenError::InvalidLevels);
    }
    if k == 1 || iv.is_point() {
        return Ok(vec![iv.midpoint()]);
    }
    let step = iv.width() / (k - 1) as f64;
    let mut out: Vec<f64> = (0..k)
        .map(|i| if i == k - 1 { iv.hi } else { iv.lo + step * i as f64 })
        .collect();
    out.dedup();
    Ok(out)
}

/// Number of levels per free param.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Levels {
    pub default: usize,
    pub per_param: BTreeMap<EntityId, usize>,
}

impl Levels {
    pub fn uniform(k: usize) -> Self {
        Levels {
            default: k,
            per_param: BTreeMap::new(),
        }
    }

    pub fn with(mut self, param: EntityId, k: usize) -> Self {
        self.per_param.insert(param, k);
        self
    }

    pub fn for_param(&self, param: &EntityId) -> usize {
        self.per_param.get(param).copied().unwrap_or(self.default)
    }
}

/// Level lists per param, in param path order.
pub type Domains = BTreeMap<EntityId, Vec<f64>>;

/// Post-factor, post-clamp level values for every param of the scenario.
pub fn domains(cs: &ConstrainedScenario, levels: &Levels) -> Result<Domains, TestgenError> {
    let mut out = Domains::new();
    for (param, dom) in &cs.params {
        let raw = discretize(dom.range, levels.for_param(param))?;
        let mut values: Vec<f64> = raw.into_iter().map(|v| dom.realize(v)).collect();
        values.dedup();
        out.insert(param.clone(), values);
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TestCase {
    pub case_index: usize,
    pub scenario_id: String,
    pub provenance: Provenance,
    pub assignment: BTreeMap<EntityId, f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TestMatrix {
    pub scenario_id: String,
    pub provenance: Provenance,
    pub domains: Domains,
    pub cases: Vec<TestCase>,
}

impl TestMatrix {
    fn from_rows(cs: &ConstrainedScenario, domains: Domains, rows: Vec<Vec<usize>>) -> Self {
        let params: Vec<&EntityId> = domains.keys().collect();
        let cases = rows
            .into_iter()
            .enumerate()
            .map(|(case_index, row)| TestCase {
                case_index,
                scenario_id: cs.scenario_id.clone(),
                provenance: cs.provenance.clone(),
                assignment: params
                    .iter()
                    .zip(row)
                    .map(|(p, level)| ((*p).clone(), domains[*p][level]))
                    .collect(),
            })
            .collect();
        TestMatrix {
            scenario_id: cs.scenario_id.clone(),
            provenance: cs.provenance.clone(),
            domains,
            cases,
        }
    }

    pub fn len(&self) -> usize {
        self.cases.len()
    }

    pub fn is_empty(&self) -> bool {
        self.cases.is_empty()
    }

    /// One JSON object per line, one line per case.
    pub fn to_jsonl(&self) -> String {
        let mut out = String::new();
        for case in &self.cases {
            out.push_str(&serde_json::to_string(case).expect("test case serializes"));
            out.push('\n');
        }
        out
    }
}

/// Parses a JSON-lines matrix file. Blank lines are skipped.
pub fn read_cases(text: &str) -> Result<Vec<TestCase>, TestgenError> {
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, l)| {
            serde_json::from_str(l).map_err(|e| TestgenError::Parse {
                line: i + 1,
                message: e.to_string(),
            })
        })
        .collect()
}

fn grid_size(sizes: &[usize]) -> usize {
    sizes.iter().fold(1usize, |acc, &s| acc.saturating_mul(s))
}

/// Full factorial over level indices, last param varying fastest.
pub fn factorial_rows(sizes: &[usize]) -> Vec<Vec<usize>> {
    if sizes.contains(&0) {
        return Vec::new();
    }
    let mut rows = Vec::with_capacity(grid_size(sizes));
    let mut row = vec![0; sizes.len()];
    loop {
        rows.push(row.clone());
        let mut i = sizes.len();
        loop {
            if i == 0 {
                return rows;
            }
            i -= 1;
            row[i] += 1;
            if row[i] < sizes[i] {
                break;
            }
            row[i] = 0;
        }
    }
}

/// Pairwise covering rows over level indices.
///
/// In-parameter-order growth: start from the full factorial of the two
/// largest domains, then add one parameter at a time. Each existing row gets
/// the level covering the most still-uncovered pairs (lowest level on ties);
/// pairs left over are placed into rows with a free slot for the earlier
/// parameter, or into new rows. Slots never constrained are filled with
/// `(row + seed) % levels`. The result never exceeds the full factorial.
pub fn pairwise_rows(sizes: &[usize], seed: u64) -> Vec<Vec<usize>> {
    let n = sizes.len();
    if n <= 2 || sizes.contains(&0) {
        return factorial_rows(sizes);
    }

    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| sizes[b].cmp(&sizes[a]).then(a.cmp(&b)));

    let mut rows: Vec<Vec<Option<usize>>> = Vec::new();
    for a in 0..sizes[order[0]] {
        for b in 0..sizes[order[1]] {
            let mut row = vec![None; n];
            row[order[0]] = Some(a);
            row[order[1]] = Some(b);
            rows.push(row);
        }
    }

    for k in 2..n {
        let p = order[k];
        let earlier = &order[..k];
        let mut uncovered: HashSet<(usize, usize, usize)> = HashSet::new();
        for &q in earlier {
            for lq in 0..sizes[q] {
                for lp in 0..sizes[p] {
                    uncovered.insert((q, lq, lp));
                }
            }
        }

        // horizontal growth
        for row in rows.iter_mut() {
            let mut best = 0;
            let mut best_gain = 0;
            for lp in 0..sizes[p] {
                let gain = earlier
                    .iter()
                    .filter(|&&q| row[q].is_some_and(|lq| uncovered.contains(&(q, lq, lp))))
                    .count();
                if gain > best_gain {
                    best = lp;
                    best_gain = gain;
                }
            }
            row[p] = Some(best);
            for &q in earlier {
                if let Some(lq) = row[q] {
                    uncovered.remove(&(q, lq, best));
                }
            }
        }

        // vertical growth
        let mut remaining: Vec<(usize, usize, usize)> = uncovered.into_iter().collect();
        remaining.sort_by_key(|&(q, lq, lp)| {
            (earlier.iter().position(|&x| x == q).unwrap_or(n), lq, lp)
        });
        for (q, lq, lp) in remaining {
            if let Some(row) = rows
                .iter_mut()
                .find(|r| r[q].is_none() && r[p] == Some(lp))
            {
                row[q] = Some(lq);
            } else {
                let mut row = vec![None; n];
                row[q] = Some(lq);
                row[p] = Some(lp);
                rows.push(row);
            }
        }
    }

    let mut seen = HashSet::new();
    let filled: Vec<Vec<usize>> = rows
        .into_iter()
        .enumerate()
        .map(|(r, row)| {
            row.into_iter()
                .enumerate()
                .map(|(i, v)| {
                    v.unwrap_or_else(|| {
                        ((r as u64).wrapping_add(seed) % sizes[i] as u64) as usize
                    })
                })
                .collect::<Vec<usize>>()
        })
        .filter(|row| seen.insert(row.clone()))
        .collect();

    if filled.len() >= grid_size(sizes) {
        factorial_rows(sizes)
    } else {
        filled
    }
}

/// Pairwise-reduced assignments over explicit level lists.
pub fn reduce_pairwise(domains: &Domains, seed: u64) -> Vec<BTreeMap<EntityId, f64>> {
    let sizes: Vec<usize> = domains.values().map(Vec::len).collect();
    pairwise_rows(&sizes, seed)
        .into_iter()
        .map(|row| {
            domains
                .iter()
                .zip(row)
                .map(|((p, levels), l)| (p.clone(), levels[l]))
                .collect()
        })
        .collect()
}

pub fn generate_grid(cs: &ConstrainedScenario, levels: &Levels) -> Result<TestMatrix, TestgenError> {
    let domains = domains(cs, levels)?;
    let sizes: Vec<usize> = domains.values().map(Vec::len).collect();
    let rows = factorial_rows(&sizes);
    Ok(TestMatrix::from_rows(cs, domains, rows))
}

pub fn generate_pairwise(
    cs: &ConstrainedScenario,
    levels: &Levels,
    seed: u64,
) -> Result<TestMatrix, TestgenError> {
    let domains = domains(cs, levels)?;
    let sizes: Vec<usize> = domains.values().map(Vec::len).collect();
    let rows = pairwise_rows(&sizes, seed);
    Ok(TestMatrix::from_rows(cs, domains, rows))
}

/// Grid over the scenario's own ranges, no triggering condition applied.
pub fn generate_nominal(
    s: &Scenario,
    ontology: &Ontology,
    levels: &Levels,
) -> Result<TestMatrix, TestgenError> {
    let cs = ConstrainedScenario::nominal(s, ontology)?;
    generate_grid(&cs, levels)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::constraints::ParamDomain;

    fn id(s: &str) -> EntityId {
        EntityId::parse(s).unwrap()
    }

    #[test]
    fn discretize_examples() {
        assert_eq!(discretize(Interval::new(0.0, 500.0), 3).unwrap(), vec![0.0, 250.0, 500.0]);
        assert_eq!(discretize(Interval::point(7.0), 5).unwrap(), vec![7.0]);
        assert_eq!(discretize(Interval::new(1.0, 2000.0), 2).unwrap(), vec![1.0, 2000.0]);
        assert_eq!(discretize(Interval::new(0.0, 10.0), 1).unwrap(), vec![5.0]);
        assert_eq!(discretize(Interval::new(0.0, 1.0), 0), Err(TestgenError::InvalidLevels));
    }

    fn scenario_domains(ranges: &[(&str, Interval, f64)]) -> ConstrainedScenario {
        ConstrainedScenario {
            scenario_id: "s".into(),
            provenance: Provenance::Nominal,
            params: ranges
                .iter()
                .map(|(p, iv, f)| {
                    (
                        id(p),
                        ParamDomain {
                            range: *iv,
                            factor: *f,
                            bounds: Interval::new(0.0, 10000.0),
                        },
                    )
                })
                .collect(),
        }
    }

    #[test]
    fn grid_order_and_first_case() {
        let cs = scenario_domains(&[
            ("env/visibility", Interval::new(100.0, 500.0), 1.0),
            ("env/illuminance", Interval::new(0.0, 1.0), 1.0),
        ]);
        let levels = Levels::uniform(3).with(id("env/illuminance"), 2);
        let m = generate_grid(&cs, &levels).unwrap();
        assert_eq!(m.len(), 6);
        let first = &m.cases[0].assignment;
        assert_eq!(first[&id("env/visibility")], 100.0);
        assert_eq!(first[&id("env/illuminance")], 0.0);
        // illuminance sorts first, so visibility varies fastest
        assert_eq!(m.cases[1].assignment[&id("env/visibility")], 300.0);
        assert_eq!(m.cases[3].assignment[&id("env/illuminance")], 1.0);
    }

    #[test]
    fn grid_cardinality_and_fixed_only() {
        let cs = scenario_domains(&[
            ("a/x", Interval::new(0.0, 1.0), 1.0),
            ("a/y", Interval::new(0.0, 1.0), 1.0),
            ("a/z", Interval::new(0.0, 1.0), 1.0),
        ]);
        assert_eq!(generate_grid(&cs, &Levels::uniform(4)).unwrap().len(), 64);
        let fixed = scenario_domains(&[("a/x", Interval::point(1.0), 0.8)]);
        let m = generate_grid(&fixed, &Levels::uniform(4)).unwrap();
        assert_eq!(m.len(), 1);
        assert_eq!(m.cases[0].assignment[&id("a/x")], 0.8);
    }

    #[test]
    fn factor_and_clamp_applied_to_levels() {
        let mut cs = scenario_domains(&[("a/x", Interval::new(0.5, 1.0), 0.8)]);
        cs.params.get_mut(&id("a/x")).unwrap().bounds = Interval::new(0.5, 1.0);
        let d = domains(&cs, &Levels::uniform(3)).unwrap();
        // 0.5*0.8 = 0.4 clamps to 0.5, 0.75*0.8 = 0.6, 1.0*0.8 = 0.8
        assert_eq!(d[&id("a/x")], vec![0.5, 0.6000000000000001, 0.8]);
    }

    #[test]
    fn pairwise_two_params_is_factorial() {
        assert_eq!(pairwise_rows(&[3, 2], 0), factorial_rows(&[3, 2]));
        assert_eq!(pairwise_rows(&[5], 0).len(), 5);
        assert_eq!(pairwise_rows(&[], 0), vec![Vec::<usize>::new()]);
    }

    #[test]
    fn pairwise_three_by_four() {
        let rows = pairwise_rows(&[4, 4, 4], 0);
        assert!(rows.len() >= 16 && rows.len() <= 64, "{}", rows.len());
        for (i, j) in [(0, 1), (0, 2), (1, 2)] {
            for a in 0..4 {
                for b in 0..4 {
                    assert!(rows.iter().any(|r| r[i] == a && r[j] == b));
                }
            }
        }
    }

    #[test]
    fn jsonl_round_trip() {
        let cs = scenario_domains(&[("env/visibility", Interval::new(100.0, 500.0), 1.0)]);
        let m = generate_grid(&cs, &Levels::uniform(3)).unwrap();
        let text = m.to_jsonl();
        assert_eq!(text.lines().count(), 3);
        assert_eq!(read_cases(&text).unwrap(), m.cases);
        assert!(text.starts_with(r#"{"case_index":0,"scenario_id":"s","provenance":"NOMINAL""#));
    }
}
