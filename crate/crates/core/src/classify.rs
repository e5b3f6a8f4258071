//! Tolerable windows, per-run verdicts, triggering-condition classification
//! against the nominal baseline, and hazard threshold search.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::constraints::Provenance;
use crate::ontology::EntityId;
use crate::scenario::{FunctionUnderTest, Scenario};
use crate::simkernel::{simulate, CaseResult, SimConfig, SimError, SpiReport};
use crate::testgen::TestCase;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ClassifyError {
    #[error("empty matrix: {0}")]
    EmptyMatrix(&'static str),
    #[error("runs belong to different scenarios: `{0}` and `{1}`")]
    ScenarioMismatch(String, String),
    #[error("invalid tolerable window: {0}")]
    InvalidWindow(String),
    #[error("tolerance must be positive and finite, got {0}")]
    InvalidTolerance(f64),
    #[error("not bracketed: verdict is {verdict} at both {lo} and {hi}")]
    NotBracketed { lo: f64, hi: f64, verdict: VerdictKind },
    #[error(transparent)]
    Sim(#[from] SimError),
}

/// Acceptance predicate per indicator. A collision is never tolerable.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TolerableWindow {
    /// Lowest acceptable time to collision, s.
    pub min_ttc: f64,
    /// Longest acceptable time below the safe distance, s.
    pub max_msdv_duration: f64,
}

impl Default for TolerableWindow {
    fn default() -> Self {
        TolerableWindow {
            min_ttc: 1.5,
            max_msdv_duration: 0.0,
        }
    }
}

impl TolerableWindow {
    pub fn check(&self) -> Result<(), ClassifyError> {
        for (name, v) in [("min_ttc", self.min_ttc), ("max_msdv_duration", self.max_msdv_duration)] {
            if !(v.is_finite() && v >= 0.0) {
                return Err(ClassifyError::InvalidWindow(format!(
                    "{name} must be finite and non-negative, got {v}"
                )));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "UPPERCASE")]
pub enum VerdictKind {
    Pass,
    Hazardous,
}

impl std::fmt::Display for VerdictKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            VerdictKind::Pass => "PASS",
            VerdictKind::Hazardous => "HAZARDOUS",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Verdict {
    pub kind: VerdictKind,
    pub violated: Vec<&'static str>,
}

impl Verdict {
    pub fn is_hazardous(&self) -> bool {
        self.kind == VerdictKind::Hazardous
    }
}

pub fn verdict(r: &SpiReport, w: &TolerableWindow) -> Verdict {
    let mut violated = Vec::new();
    if r.min_ttc.is_some_and(|ttc| ttc < w.min_ttc) {
        violated.push("min_ttc");
    }
    if r.msdv_duration > w.max_msdv_duration {
        violated.push("msdv_duration");
    }
    if r.collision {
        violated.push("collision");
    }
    let kind = if violated.is_empty() {
        VerdictKind::Pass
    } else {
        VerdictKind::Hazardous
    };
    Verdict { kind, violated }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum TcStatus {
    ConfirmedTriggeringCondition,
    NotRelevant,
    Inconclusive,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Threshold {
    pub param: EntityId,
    pub value: f64,
    pub tol: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TcClassification {
    pub tc_id: String,
    pub status: TcStatus,
    pub nominal_hazard_rate: f64,
    pub tc_hazard_rate: f64,
    pub thresholds: Vec<Threshold>,
    pub windows: TolerableWindow,
}

impl TcClassification {
    pub fn to_markdown(&self) -> String {
        let status = match self.status {
            TcStatus::ConfirmedTriggeringCondition => "confirmed triggering condition",
            TcStatus::NotRelevant => "not relevant",
            TcStatus::Inconclusive => "inconclusive (nominal already always hazardous)",
        };
        let mut out = String::new();
        let _ = writeln!(out, "# Classification: `{}`\n", self.tc_id);
        let _ = writeln!(out, "**Status:** {status}\n");
        let _ = writeln!(out, "| | hazard rate |\n|---|---|");
        let _ = writeln!(out, "| nominal | {:.3} |", self.nominal_hazard_rate);
        let _ = writeln!(out, "| with condition | {:.3} |\n", self.tc_hazard_rate);
        let _ = writeln!(
            out,
            "Tolerable window: min TTC >= {} s, MSDV duration <= {} s, no collision.",
            self.windows.min_ttc, self.windows.max_msdv_duration
        );
        if !self.thresholds.is_empty() {
            let _ = writeln!(out, "\n## Thresholds\n\n| param | boundary | tol |\n|---|---|---|");
            for t in &self.thresholds {
                let _ = writeln!(out, "| `{}` | {} | {} |", t.param, t.value, t.tol);
            }
        }
        out
    }
}

fn hazard_rate(runs: &[CaseResult], w: &TolerableWindow) -> f64 {
    let hazardous = runs
        .iter()
        .filter(|r| verdict(&r.report, w).is_hazardous())
        .count();
    hazardous as f64 / runs.len() as f64
}

/// Status from the two hazard rates alone.
pub fn status_from_rates(nominal: f64, tc: f64) -> TcStatus {
    if nominal == 1.0 && tc == 1.0 {
        TcStatus::Inconclusive
    } else if tc > nominal && tc > 0.0 {
        TcStatus::ConfirmedTriggeringCondition
    } else {
        TcStatus::NotRelevant
    }
}

/// Compares runs with a condition injected against nominal runs of the same
/// scenario by the fraction of hazardous cases.
pub fn classify_tc(
    nominal: &[CaseResult],
    tc_runs: &[CaseResult],
    w: &TolerableWindow,
) -> Result<TcClassification, ClassifyError> {
    w.check()?;
    if nominal.is_empty() {
        return Err(ClassifyError::EmptyMatrix("nominal runs"));
    }
    if tc_runs.is_empty() {
        return Err(ClassifyError::EmptyMatrix("triggering-condition runs"));
    }
    let scenario = &nominal[0].scenario_id;
    if let Some(other) = nominal
        .iter()
        .chain(tc_runs)
        .find(|r| &r.scenario_id != scenario)
    {
        return Err(ClassifyError::ScenarioMismatch(
            scenario.clone(),
            other.scenario_id.clone(),
        ));
    }
    let nominal_rate = hazard_rate(nominal, w);
    let tc_rate = hazard_rate(tc_runs, w);
    let tc_id = match &tc_runs[0].provenance {
        Provenance::TcSet(ids) => ids.join("+"),
        Provenance::Nominal => "nominal".to_string(),
    };
    Ok(TcClassification {
        tc_id,
        status: status_from_rates(nominal_rate, tc_rate),
        nominal_hazard_rate: nominal_rate,
        tc_hazard_rate: tc_rate,
        thresholds: Vec::new(),
        windows: *w,
    })
}

pub const MONOTONE_SWEEP_POINTS: usize = 8;

#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum ThresholdOutcome {
    /// Verdict changes within `value ± tol / 2`.
    Boundary { value: f64, tol: f64, iterations: usize },
    /// The pre-check sweep saw the verdict flip more than once.
    NonMonotone { sweep: Vec<(f64, VerdictKind)> },
}

/// Bisection for the point where `hazardous` flips on `[lo, hi]`.
///
/// The ends must disagree. An evenly spaced sweep of
/// [`MONOTONE_SWEEP_POINTS`] points (ends included) must show a single flip,
/// otherwise no boundary is claimed.
pub fn search_boundary<F>(
    mut hazardous: F,
    lo: f64,
    hi: f64,
    tol: f64,
) -> Result<ThresholdOutcome, ClassifyError>
where
    F: FnMut(f64) -> Result<bool, ClassifyError>,
{
    if !(tol > 0.0 && tol.is_finite()) {
        return Err(ClassifyError::InvalidTolerance(tol));
    }
    let kind = |h: bool| if h { VerdictKind::Hazardous } else { VerdictKind::Pass };
    let at_lo = hazardous(lo)?;
    let at_hi = hazardous(hi)?;
    if at_lo == at_hi || lo.is_nan() || hi.is_nan() || lo >= hi {
        return Err(ClassifyError::NotBracketed {
            lo,
            hi,
            verdict: kind(at_lo),
        });
    }

    let n = MONOTONE_SWEEP_POINTS;
    let mut sweep = Vec::with_capacity(n);
    for i in 0..n {
        let x = if i == n - 1 {
            hi
        } else {
            lo + (hi - lo) * i as f64 / (n - 1) as f64
        };
        let h = match i {
            0 => at_lo,
            _ if i == n - 1 => at_hi,
            _ => hazardous(x)?,
        };
        sweep.push((x, h));
    }
    let flips = sweep.windows(2).filter(|w| w[0].1 != w[1].1).count();
    if flips != 1 {
        return Ok(ThresholdOutcome::NonMonotone {
            sweep: sweep.into_iter().map(|(x, h)| (x, kind(h))).collect(),
        });
    }

    let (mut a, mut b) = (lo, hi);
    let mut iterations = 0;
    while b - a > tol {
        let mid = a + (b - a) / 2.0;
        if hazardous(mid)? == at_lo {
            a = mid;
        } else {
            b = mid;
        }
        iterations += 1;
    }
    Ok(ThresholdOutcome::Boundary {
        value: a + (b - a) / 2.0,
        tol,
        iterations,
    })
}

/// One-factor-at-a-time threshold on `param`, every other param held at
/// `fixed`.
#[allow(clippy::too_many_arguments)]
pub fn find_threshold(
    param: &EntityId,
    lo: f64,
    hi: f64,
    fixed: &BTreeMap<EntityId, f64>,
    s: &Scenario,
    fut: &FunctionUnderTest,
    w: &TolerableWindow,
    tol: f64,
    cfg: &SimConfig,
) -> Result<ThresholdOutcome, ClassifyError> {
    w.check()?;
    let mut case = TestCase {
        case_index: 0,
        scenario_id: s.id.clone(),
        provenance: Provenance::Nominal,
        assignment: fixed.clone(),
    };
    search_boundary(
        |x| {
            case.assignment.insert(param.clone(), x);
            let (_, report) = simulate(&case, s, fut, cfg)?;
            Ok(verdict(&report, w).is_hazardous())
        },
        lo,
        hi,
        tol,
    )
}

#[cfg(test)]
mod tests {
    use super::*;

    fn report(min_ttc: Option<f64>, msdv: f64, collision: bool) -> SpiReport {
        SpiReport {
            min_ttc,
            min_gap: 10.0,
            msdv_duration: msdv,
            collision,
            detection_range: 100.0,
            detection_time: None,
            brake_onset: None,
        }
    }

    #[test]
    fn verdict_examples() {
        let w = TolerableWindow::default();
        assert_eq!(verdict(&report(Some(2.0), 0.0, false), &w).kind, VerdictKind::Pass);
        let v = verdict(&report(Some(2.0), 0.0, true), &w);
        assert_eq!((v.kind, v.violated), (VerdictKind::Hazardous, vec!["collision"]));
        let v = verdict(&report(Some(1.0), 0.0, false), &w);
        assert_eq!((v.kind, v.violated), (VerdictKind::Hazardous, vec!["min_ttc"]));
        assert_eq!(verdict(&report(None, 0.0, false), &w).kind, VerdictKind::Pass);
        assert_eq!(verdict(&report(None, 0.2, false), &w).violated, vec!["msdv_duration"]);
    }

    fn runs(scenario: &str, hazardous: &[bool], tc: Option<&str>) -> Vec<CaseResult> {
        hazardous
            .iter()
            .enumerate()
            .map(|(i, &h)| CaseResult {
                case_index: i,
                scenario_id: scenario.into(),
                provenance: tc.map_or(Provenance::Nominal, |t| Provenance::TcSet(vec![t.into()])),
                assignment: BTreeMap::new(),
                report: report(Some(5.0), 0.0, h),
            })
            .collect()
    }

    #[test]
    fn classification_examples() {
        let w = TolerableWindow::default();
        let c = classify_tc(
            &runs("s", &[false; 5], None),
            &runs("s", &[true, true, false, false, false], Some("heavy_snow")),
            &w,
        )
        .unwrap();
        assert_eq!(c.status, TcStatus::ConfirmedTriggeringCondition);
        assert_eq!(c.tc_hazard_rate, 0.4);
        assert_eq!(c.tc_id, "heavy_snow");

        let c = classify_tc(&runs("s", &[false; 3], None), &runs("s", &[false; 3], Some("x")), &w).unwrap();
        assert_eq!(c.status, TcStatus::NotRelevant);

        let c = classify_tc(&runs("s", &[true; 3], None), &runs("s", &[true; 2], Some("x")), &w).unwrap();
        assert_eq!(c.status, TcStatus::Inconclusive);
    }

    #[test]
    fn classification_errors() {
        let w = TolerableWindow::default();
        assert!(matches!(
            classify_tc(&[], &runs("s", &[true], Some("x")), &w),
            Err(ClassifyError::EmptyMatrix(_))
        ));
        assert!(matches!(
            classify_tc(&runs("a", &[true], None), &runs("b", &[true], Some("x")), &w),
            Err(ClassifyError::ScenarioMismatch(..))
        ));
        let bad = TolerableWindow {
            min_ttc: -1.0,
            ..w
        };
        assert!(matches!(
            classify_tc(&runs("a", &[true], None), &runs("a", &[true], Some("x")), &bad),
            Err(ClassifyError::InvalidWindow(_))
        ));
    }

    #[test]
    fn search_on_step_function() {
        let out = search_boundary(|x| Ok(x < 43.33), 10.0, 500.0, 0.5).unwrap();
        match out {
            ThresholdOutcome::Boundary { value, .. } => assert!((value - 43.33).abs() <= 0.5),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn search_not_bracketed() {
        assert!(matches!(
            search_boundary(|_| Ok(false), 0.0, 1.0, 0.1),
            Err(ClassifyError::NotBracketed { verdict: VerdictKind::Pass, .. })
        ));
    }

    #[test]
    fn degenerate_tolerance_returns_midpoint() {
        match search_boundary(|x| Ok(x < 3.0), 0.0, 10.0, 10.0).unwrap() {
            ThresholdOutcome::Boundary { value, iterations, .. } => {
                assert_eq!(value, 5.0);
                assert_eq!(iterations, 0);
            }
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn non_monotone_flagged() {
        // ends disagree, but a hazardous band sits inside the passing side
        let out = search_boundary(|x| Ok(x < 2.0 || (4.0..5.0).contains(&x)), 0.0, 7.0, 0.1).unwrap();
        assert!(matches!(out, ThresholdOutcome::NonMonotone { .. }), "{out:?}");
    }

    #[test]
    fn invalid_tolerance() {
        assert_eq!(
            search_boundary(|x| Ok(x < 1.0), 0.0, 2.0, 0.0),
            Err(ClassifyError::InvalidTolerance(0.0))
        );
    }
}
