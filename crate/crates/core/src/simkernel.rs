//! Longitudinal ego-with-emergency-braking versus lead vehicle simulation.
//!
//! One dimension, fixed-step explicit Euler. The ego cruises at its set speed
//! until the lead comes within detection range, waits its reaction time, then
//! brakes at `max_decel_at_mu1 * friction`. Per-step time-to-collision, gap
//! and safe-distance checks are folded into an [`SpiReport`].
//!
//! The illuminance model is synthetic: detection range scales affinely from
//! `illum_floor_factor` at 0 lux up to 1 at `illum_full`.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::constraints::Provenance;
use crate::ontology::EntityId;
use crate::scenario::{FunctionUnderTest, Scenario, EGO_KIND, LEAD_KIND};
use crate::testgen::TestCase;

pub const VISIBILITY_PARAM: &str = "environment/ambient/visibility";
pub const ILLUMINANCE_PARAM: &str = "environment/ambient/illuminance";
pub const FRICTION_PARAM: &str = "road/surface/asphalt_friction";

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SimError {
    #[error("scenario `{scenario}` is not simulatable: {reason}")]
    NotSimulatable { scenario: String, reason: String },
    #[error("non-finite state at t = {t}")]
    NonFiniteState { t: f64 },
    #[error("effective friction must be positive, got {0}")]
    DegenerateFriction(f64),
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SimConfig {
    /// Step, s.
    pub dt: f64,
    /// Simulated duration, s.
    pub horizon: f64,
    /// Gravitational acceleration, m/s². Caps the deceleration at friction 1.
    pub g: f64,
}

impl Default for SimConfig {
    fn default() -> Self {
        SimConfig {
            dt: 0.01,
            horizon: 30.0,
            g: 9.81,
        }
    }
}

impl SimConfig {
    pub fn check(&self) -> Result<(), SimError> {
        if !(self.dt > 0.0 && self.dt.is_finite()) {
            return Err(SimError::InvalidConfig(format!("dt must be positive, got {}", self.dt)));
        }
        if !(self.horizon >= self.dt && self.horizon.is_finite()) {
            return Err(SimError::InvalidConfig(format!(
                "horizon {} shorter than dt {}",
                self.horizon, self.dt
            )));
        }
        if self.g.is_nan() || self.g <= 0.0 {
            return Err(SimError::InvalidConfig("g must be positive".into()));
        }
        Ok(())
    }
}

/// Range at which the lead is detected, m.
pub fn detection_range(fut: &FunctionUnderTest, visibility: f64, illuminance: f64) -> f64 {
    let illum_factor = if illuminance >= fut.illum_full {
        1.0
    } else {
        fut.illum_floor_factor
            + (1.0 - fut.illum_floor_factor) * (illuminance.max(0.0) / fut.illum_full)
    };
    fut.sensor_max_range.min(visibility.max(0.0)) * illum_factor
}

/// Time to collision, `None` when the gap is not closing.
pub fn compute_ttc(gap: f64, closing_speed: f64) -> Option<f64> {
    (closing_speed > 0.0).then(|| gap / closing_speed)
}

/// Longitudinal safe following distance:
/// `v_ego * t_r + v_ego² / 2a - v_lead² / 2a`, floored at zero,
/// with `a = max_decel_at_mu1 * mu_eff`.
pub fn compute_safe_distance(
    v_ego: f64,
    v_lead: f64,
    fut: &FunctionUnderTest,
    mu_eff: f64,
) -> Result<f64, SimError> {
    if mu_eff.is_nan() || mu_eff <= 0.0 {
        return Err(SimError::DegenerateFriction(mu_eff));
    }
    let a = fut.max_decel_at_mu1 * mu_eff;
    let d = v_ego * fut.reaction_time + v_ego * v_ego / (2.0 * a) - v_lead * v_lead / (2.0 * a);
    Ok(d.max(0.0))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum LeadProfile {
    ConstantSpeed,
    Stopped,
    ScriptedDecel { start: f64, decel: f64 },
}

/// Initial conditions read from layer 4.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Actors {
    pub ego_speed: f64,
    pub lead_gap: f64,
    pub lead_speed: f64,
    pub lead_profile: LeadProfile,
}

impl Actors {
    pub fn from_scenario(s: &Scenario) -> Result<Self, SimError> {
        let not_sim = |reason: String| SimError::NotSimulatable {
            scenario: s.id.clone(),
            reason,
        };
        let egos: Vec<_> = s.elements_of_kind(EGO_KIND).collect();
        let leads: Vec<_> = s.elements_of_kind(LEAD_KIND).collect();
        if egos.len() != 1 {
            return Err(not_sim(format!("expected one ego_vehicle, found {}", egos.len())));
        }
        if leads.len() != 1 {
            return Err(not_sim(format!("expected one lead_vehicle, found {}", leads.len())));
        }
        let (ego, lead) = (egos[0], leads[0]);
        let num = |e: &crate::scenario::SceneElement, key: &str| {
            e.number(key)
                .filter(|v| v.is_finite())
                .ok_or_else(|| not_sim(format!("`{}` lacks numeric `{key}`", e.id)))
        };
        let ego_speed = num(ego, "speed")?;
        let lead_gap = num(lead, "gap")?;
        if lead_gap <= 0.0 {
            return Err(not_sim("initial gap must be positive".into()));
        }
        let lead_profile = match lead.text("profile") {
            Some("constant_speed") => LeadProfile::ConstantSpeed,
            Some("stopped") => LeadProfile::Stopped,
            Some("scripted_decel") => LeadProfile::ScriptedDecel {
                start: num(lead, "decel_start")?,
                decel: num(lead, "decel")?,
            },
            other => return Err(not_sim(format!("unknown lead profile {other:?}"))),
        };
        let lead_speed = match lead_profile {
            LeadProfile::Stopped => 0.0,
            _ => num(lead, "speed")?,
        };
        if ego_speed < 0.0 || lead_speed < 0.0 {
            return Err(not_sim("speeds must be non-negative".into()));
        }
        Ok(Actors {
            ego_speed,
            lead_gap,
            lead_speed,
            lead_profile,
        })
    }
}

/// Environmental inputs of one run.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Environment {
    pub visibility: f64,
    pub illuminance: f64,
    pub friction: f64,
}

impl Environment {
    /// Reads the bound params, defaulting to clear daylight on dry asphalt.
    pub fn from_assignment(assignment: &BTreeMap<EntityId, f64>) -> Self {
        let get = |path: &str| {
            EntityId::parse(path)
                .ok()
                .and_then(|id| assignment.get(&id).copied())
        };
        Environment {
            visibility: get(VISIBILITY_PARAM).unwrap_or(f64::INFINITY),
            illuminance: get(ILLUMINANCE_PARAM).unwrap_or(f64::INFINITY),
            friction: get(FRICTION_PARAM).unwrap_or(1.0),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SimState {
    pub t: f64,
    pub ego_pos: f64,
    pub ego_vel: f64,
    pub lead_pos: f64,
    pub lead_vel: f64,
    pub gap: f64,
    pub ttc: Option<f64>,
    pub safe_distance: f64,
    pub detected: bool,
    pub brake_active: bool,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct SimTrace {
    pub rows: Vec<SimState>,
}

impl SimTrace {
    pub const CSV_HEADER: &'static str =
        "t,ego_pos,ego_vel,lead_pos,lead_vel,gap,ttc,safe_distance,detected,brake_active";

    /// CSV with [`Self::CSV_HEADER`]; an empty `ttc` cell means not closing.
    pub fn to_csv(&self) -> String {
        let mut out = String::with_capacity(self.rows.len() * 80);
        out.push_str(Self::CSV_HEADER);
        out.push('\n');
        for r in &self.rows {
            let ttc = r.ttc.map(|v| v.to_string()).unwrap_or_default();
            let _ = writeln!(
                out,
                "{},{},{},{},{},{},{},{},{},{}",
                r.t,
                r.ego_pos,
                r.ego_vel,
                r.lead_pos,
                r.lead_vel,
                r.gap,
                ttc,
                r.safe_distance,
                u8::from(r.detected),
                u8::from(r.brake_active)
            );
        }
        out
    }
}

/// Safety performance indicators of one run.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SpiReport {
    /// Smallest time to collision, `None` if the gap never closed.
    pub min_ttc: Option<f64>,
    pub min_gap: f64,
    /// Total time with the gap below the safe distance, s.
    pub msdv_duration: f64,
    pub collision: bool,
    pub detection_range: f64,
    pub detection_time: Option<f64>,
    pub brake_onset: Option<f64>,
}

impl SpiReport {
    pub fn indicators(&self) -> [(&'static str, Option<f64>); 4] {
        [
            ("min_ttc", self.min_ttc),
            ("min_gap", Some(self.min_gap)),
            ("msdv_duration", Some(self.msdv_duration)),
            ("collision", Some(if self.collision { 1.0 } else { 0.0 })),
        ]
    }
}

pub fn simulate(
    case: &TestCase,
    s: &Scenario,
    fut: &FunctionUnderTest,
    cfg: &SimConfig,
) -> Result<(SimTrace, SpiReport), SimError> {
    let actors = Actors::from_scenario(s)?;
    let env = Environment::from_assignment(&case.assignment);
    simulate_actors(&actors, &env, fut, cfg)
}

pub fn simulate_actors(
    actors: &Actors,
    env: &Environment,
    fut: &FunctionUnderTest,
    cfg: &SimConfig,
) -> Result<(SimTrace, SpiReport), SimError> {
    cfg.check()?;
    if let Some((_, problem)) = fut.problems().into_iter().next() {
        return Err(SimError::InvalidConfig(problem));
    }
    if fut.max_decel_at_mu1 > cfg.g {
        return Err(SimError::InvalidConfig(format!(
            "max_decel_at_mu1 {} exceeds g {}",
            fut.max_decel_at_mu1, cfg.g
        )));
    }
    let mu = env.friction;
    if mu.is_nan() || mu <= 0.0 {
        return Err(SimError::DegenerateFriction(mu));
    }
    let decel = fut.max_decel_at_mu1 * mu;
    let range = detection_range(fut, env.visibility, env.illuminance);
    let dt = cfg.dt;
    let n_steps = (cfg.horizon / dt).round() as usize;
    let reaction_steps = (fut.reaction_time / dt).round() as usize;

    let mut ego_pos = 0.0;
    let mut ego_vel = actors.ego_speed;
    let mut lead_pos = actors.lead_gap;
    let mut lead_vel = actors.lead_speed;
    let mut detect_step: Option<usize> = None;
    let mut brake_step: Option<usize> = None;
    let mut collided = false;
    let mut msdv_steps = 0usize;
    let mut min_ttc: Option<f64> = None;
    let mut min_gap = f64::INFINITY;
    let mut rows = Vec::with_capacity(n_steps + 1);

    for step in 0..=n_steps {
        let t = step as f64 * dt;
        let mut gap = lead_pos - ego_pos;
        let just_collided = !collided && gap <= 0.0;
        if just_collided {
            // contact is recorded at gap 0; the last step's overshoot is dropped
            collided = true;
            ego_pos = lead_pos;
            gap = 0.0;
        }
        if detect_step.is_none() && gap <= range {
            detect_step = Some(step);
        }
        let brake_active = detect_step.is_some_and(|d| step >= d + reaction_steps);
        if brake_active && brake_step.is_none() {
            brake_step = Some(step);
        }

        let ttc = if just_collided {
            Some(0.0)
        } else if collided {
            None
        } else {
            compute_ttc(gap, ego_vel - lead_vel)
        };
        let safe_distance = compute_safe_distance(ego_vel, lead_vel, fut, mu)?;

        if let Some(v) = ttc {
            min_ttc = Some(min_ttc.map_or(v, |m: f64| m.min(v)));
        }
        min_gap = min_gap.min(gap);
        rows.push(SimState {
            t,
            ego_pos,
            ego_vel,
            lead_pos,
            lead_vel,
            gap,
            ttc,
            safe_distance,
            detected: detect_step.is_some(),
            brake_active,
        });

        if step == n_steps {
            break;
        }
        if collided {
            // positions freeze after impact
            ego_vel = 0.0;
            lead_vel = 0.0;
            continue;
        }
        if gap < safe_distance {
            msdv_steps += 1;
        }

        let ego_acc = if brake_active { -decel } else { 0.0 };
        let lead_acc = match actors.lead_profile {
            LeadProfile::ScriptedDecel { start, decel } if t >= start => -decel,
            _ => 0.0,
        };
        ego_pos += ego_vel * dt;
        lead_pos += lead_vel * dt;
        ego_vel = (ego_vel + ego_acc * dt).max(0.0);
        lead_vel = (lead_vel + lead_acc * dt).max(0.0);
        if ![ego_pos, ego_vel, lead_pos, lead_vel].iter().all(|v| v.is_finite()) {
            return Err(SimError::NonFiniteState { t: t + dt });
        }
    }

    let report = SpiReport {
        min_ttc,
        min_gap,
        msdv_duration: msdv_steps as f64 * dt,
        collision: collided,
        detection_range: range,
        detection_time: detect_step.map(|s| s as f64 * dt),
        brake_onset: brake_step.map(|s| s as f64 * dt),
    };
    Ok((SimTrace { rows }, report))
}

/// One line of a results file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CaseResult {
    pub case_index: usize,
    pub scenario_id: String,
    pub provenance: Provenance,
    pub assignment: BTreeMap<EntityId, f64>,
    pub report: SpiReport,
}

impl CaseResult {
    pub fn case(&self) -> TestCase {
        TestCase {
            case_index: self.case_index,
            scenario_id: self.scenario_id.clone(),
            provenance: self.provenance.clone(),
            assignment: self.assignment.clone(),
        }
    }
}

pub fn results_to_jsonl(results: &[CaseResult]) -> String {
    let mut out = String::new();
    for r in results {
        out.push_str(&serde_json::to_string(r).expect("result serializes"));
        out.push('\n');
    }
    out
}

pub fn read_results(text: &str) -> Result<Vec<CaseResult>, String> {
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, l)| serde_json::from_str(l).map_err(|e| format!("line {}: {e}", i + 1)))
        .collect()
}

type Run = (CaseResult, Option<SimTrace>);

/// Simulates every case on `workers` threads. Results come back ordered by
/// case index regardless of completion order; traces only when asked for.
pub fn run_matrix(
    cases: &[TestCase],
    s: &Scenario,
    fut: &FunctionUnderTest,
    cfg: &SimConfig,
    workers: usize,
    keep_traces: bool,
) -> Result<Vec<(CaseResult, Option<SimTrace>)>, SimError> {
    let next = AtomicUsize::new(0);
    let slots: Mutex<Vec<Option<Result<Run, SimError>>>> = Mutex::new(vec![None; cases.len()]);
    std::thread::scope(|scope| {
        for _ in 0..workers.max(1).min(cases.len().max(1)) {
            scope.spawn(|| loop {
                let i = next.fetch_add(1, Ordering::Relaxed);
                let Some(case) = cases.get(i) else { break };
                let outcome = simulate(case, s, fut, cfg).map(|(trace, report)| {
                    (
                        CaseResult {
                            case_index: case.case_index,
                            scenario_id: case.scenario_id.clone(),
                            provenance: case.provenance.clone(),
                            assignment: case.assignment.clone(),
                            report,
                        },
                        keep_traces.then_some(trace),
                    )
                });
                slots.lock().expect("result slots")[i] = Some(outcome);
            });
        }
    });
    let mut out = slots
        .into_inner()
        .expect("result slots")
        .into_iter()
        .map(|slot| slot.expect("every case simulated"))
        .collect::<Result<Vec<_>, _>>()?;
    out.sort_by_key(|(r, _)| r.case_index);
    Ok(out)
}
