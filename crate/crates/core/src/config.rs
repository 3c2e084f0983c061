//! Scenario configuration.
//!
//! The format is flat `key = value` text. `#` starts a comment, repeated
//! keys build lists, and boundary vectors use `.` for a free component:
//!
//! ```text
//! x_init = 0 0.75 0 0.5 0 0 . . 0 0
//! init = fy1 19.62        # free ends of fy1 start at 19.62
//! init = px1 track px     # px1 follows px
//! lambda_j = K1_1 1e8     # per-constraint weight override
//! ```

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::constraints::{build_locomotion_constraints, ConstraintSpec, LocomotionOptions};
use crate::error::{Error, Result};
use crate::extraction::{AuditTolerances, ControlRule};
use crate::metric::{PenaltyMatrix, Problem};
use crate::model::terrain::{terrain_registry, SplineTable};
use crate::model::{system_registry, ControlAffineSystem, LeggedSystem, RobotParams, StateLayout, Terrain};
use crate::registry::Registry;
use crate::schedule::{equal_ratio_schedule, ContactSchedule, LegSchedule, SmoothingParams};
use crate::solver::{BoundarySpec, BoundaryValue, InitHint, SolverConfig};

/// Smallest grid accepted from a config file.
pub const MIN_NODES: usize = 41;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum ScheduleSpec {
    /// Equal stance/flight durations, one offset per leg.
    EqualRatio { hops: usize, offsets: Vec<f64> },
    /// Stance intervals per leg.
    Explicit(Vec<Vec<(f64, f64)>>),
}

/// Initial-curve hint for a free boundary component, by state name.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum HintSpec {
    Constant(f64),
    Track(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScenarioConfig {
    pub name: String,
    /// System registry spec; `legged` uses `robot`.
    pub system: String,
    pub robot: RobotParams,
    /// Terrain registry spec, e.g. `sinusoid 0.1 12.566`.
    pub terrain: String,
    pub horizon: f64,
    pub schedule: ScheduleSpec,
    pub x_init: Vec<BoundaryValue>,
    pub x_fin: Vec<BoundaryValue>,
    /// Initial-curve hints keyed by state name.
    pub hints: Vec<(String, HintSpec)>,
    pub lambda: f64,
    /// Penalties solved first, each warm-starting the next.
    pub continuation: Vec<f64>,
    pub lambda_overrides: Vec<(String, f64)>,
    pub torso_margin: Option<f64>,
    pub smoothing: SmoothingParams,
    pub n_t: usize,
    pub solver: SolverConfig,
    pub control_rule: ControlRule,
    pub tolerances: AuditTolerances,
    /// Target for the final CoM check; defaults to the pinned `x_fin` CoM.
    pub com_target: Option<[f64; 2]>,
    /// Largest accepted distance of `x̃(T)` from the pinned `x_fin` values.
    pub final_state_tol: f64,
    pub checkpoints: Vec<f64>,
    pub output_dir: PathBuf,
}

fn field_err(line: usize, key: &str, msg: impl std::fmt::Display) -> Error {
    Error::config(key, format!("line {line}: {msg}"))
}

fn number(line: usize, key: &str, raw: &str) -> Result<f64> {
    let v: f64 = raw
        .parse()
        .map_err(|_| field_err(line, key, format!("`{raw}` is not a number")))?;
    if !v.is_finite() {
        return Err(field_err(line, key, "must be finite"));
    }
    Ok(v)
}

fn numbers(line: usize, key: &str, raw: &str) -> Result<Vec<f64>> {
    raw.split_whitespace().map(|w| number(line, key, w)).collect()
}

fn count(line: usize, key: &str, raw: &str) -> Result<usize> {
    raw.parse()
        .map_err(|_| field_err(line, key, format!("`{raw}` is not a nonnegative integer")))
}

fn boundary(line: usize, key: &str, raw: &str) -> Result<Vec<BoundaryValue>> {
    raw.split_whitespace()
        .map(|w| match w {
            "." | "·" => Ok(BoundaryValue::Free),
            _ => number(line, key, w).map(BoundaryValue::Fixed),
        })
        .collect()
}

/// `(line, key, value)` triples; `#` comments and blank lines dropped.
fn entries(text: &str) -> Result<Vec<(usize, String, String)>> {
    let mut out = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let (k, v) = line
            .split_once('=')
            .ok_or_else(|| field_err(i + 1, "syntax", format!("expected `key = value`, got `{line}`")))?;
        out.push((i + 1, k.trim().to_string(), v.trim().to_string()));
    }
    Ok(out)
}

impl ScenarioConfig {
    pub fn parse(text: &str) -> Result<Self> {
        Self::parse_in(text, None)
    }

    /// Like `parse`, resolving a relative `terrain = table <path>` against `base`.
    pub fn parse_in(text: &str, base: Option<&Path>) -> Result<Self> {
        let mut robot = RobotParams::default();
        let mut cfg = ScenarioConfig {
            name: "scenario".into(),
            system: "legged".into(),
            robot,
            terrain: "flat".into(),
            horizon: 0.0,
            schedule: ScheduleSpec::EqualRatio {
                hops: 0,
                offsets: vec![],
            },
            x_init: vec![],
            x_fin: vec![],
            hints: vec![],
            lambda: 1e6,
            continuation: vec![],
            lambda_overrides: vec![],
            torso_margin: None,
            smoothing: SmoothingParams::default(),
            n_t: 201,
            solver: SolverConfig::default(),
            control_rule: ControlRule::CentralDifference,
            tolerances: AuditTolerances::default(),
            com_target: None,
            final_state_tol: 0.05,
            checkpoints: vec![],
            output_dir: PathBuf::new(),
        };
        let mut hops = None;
        let mut offsets = Vec::new();
        let mut stance: BTreeMap<usize, Vec<(f64, f64)>> = BTreeMap::new();
        let mut output_dir = None;
        let mut seen = std::collections::HashSet::new();
        const REPEATABLE: [&str; 4] = ["offset", "init", "lambda_j", "stance"];
        for (line, key, value) in entries(text)? {
            if !REPEATABLE.contains(&key.as_str()) && !seen.insert(key.clone()) {
                return Err(field_err(line, &key, "given twice"));
            }
            let k = key.as_str();
            let v = value.as_str();
            match k {
                "name" => cfg.name = v.to_string(),
                "system" => cfg.system = v.to_string(),
                "legs" => robot.legs = count(line, k, v)?,
                "mass" => robot.mass = number(line, k, v)?,
                "inertia" => robot.inertia = number(line, k, v)?,
                "gravity" => robot.gravity = number(line, k, v)?,
                "reach" => robot.reach = number(line, k, v)?,
                "clearance" => robot.clearance = number(line, k, v)?,
                "friction" => robot.friction = number(line, k, v)?,
                "terrain" => cfg.terrain = v.to_string(),
                "horizon" | "T" => cfg.horizon = number(line, k, v)?,
                "hops" => hops = Some(count(line, k, v)?),
                "offset" => offsets.push(number(line, k, v)?),
                "stance" => {
                    let nums = numbers(line, k, v)?;
                    if nums.len() != 3 || nums[0] < 1.0 || nums[0].fract() != 0.0 {
                        return Err(field_err(line, k, "expected `<leg> <landing> <takeoff>`"));
                    }
                    stance.entry(nums[0] as usize - 1).or_default().push((nums[1], nums[2]));
                }
                "x_init" => cfg.x_init = boundary(line, k, v)?,
                "x_fin" => cfg.x_fin = boundary(line, k, v)?,
                "init" => {
                    let parts: Vec<&str> = v.split_whitespace().collect();
                    let hint = match parts.as_slice() {
                        [name, "track", other] => (name.to_string(), HintSpec::Track(other.to_string())),
                        [name, c] => (name.to_string(), HintSpec::Constant(number(line, k, c)?)),
                        _ => return Err(field_err(line, k, "expected `<state> <value>` or `<state> track <state>`")),
                    };
                    cfg.hints.push(hint);
                }
                "lambda" => cfg.lambda = number(line, k, v)?,
                "continuation" => cfg.continuation = numbers(line, k, v)?,
                "lambda_j" => {
                    let (id, w) = v
                        .split_once(char::is_whitespace)
                        .ok_or_else(|| field_err(line, k, "expected `<constraint id> <weight>`"))?;
                    cfg.lambda_overrides.push((id.to_string(), number(line, k, w.trim())?));
                }
                "torso_margin" => cfg.torso_margin = Some(number(line, k, v)?),
                "alpha" => cfg.smoothing.alpha = number(line, k, v)?,
                "beta" => cfg.smoothing.beta = number(line, k, v)?,
                "constraint_alpha" => cfg.smoothing.constraint_alpha = number(line, k, v)?,
                "n_t" | "N_t" => cfg.n_t = count(line, k, v)?,
                "scheme" => cfg.solver.scheme = v.to_string(),
                "s_max" => cfg.solver.s_max = number(line, k, v)?,
                "initial_step" => cfg.solver.initial_step = Some(number(line, k, v)?),
                "max_step" => cfg.solver.max_step = number(line, k, v)?,
                "max_steps" => cfg.solver.max_steps = count(line, k, v)?,
                "stationary_tol" => cfg.solver.stationary_tol = Some(number(line, k, v)?),
                "energy_slack" => cfg.solver.energy_slack = number(line, k, v)?,
                "stagnation_window" => cfg.solver.stagnation_window = count(line, k, v)?,
                "stagnation_tol" => cfg.solver.stagnation_tol = number(line, k, v)?,
                "control_rule" => cfg.control_rule = v.parse()?,
                "tol_flight_force" => cfg.tolerances.flight_force = number(line, k, v)?,
                "tol_contact_force" => cfg.tolerances.contact_force = number(line, k, v)?,
                "tol_geometric" => cfg.tolerances.geometric = number(line, k, v)?,
                "tol_stance_drift" => cfg.tolerances.stance_drift = number(line, k, v)?,
                "tol_final_state" => cfg.final_state_tol = number(line, k, v)?,
                "tol_com" => cfg.tolerances.com = number(line, k, v)?,
                "com_target" => {
                    let c = numbers(line, k, v)?;
                    if c.len() != 2 {
                        return Err(field_err(line, k, "expected two numbers"));
                    }
                    cfg.com_target = Some([c[0], c[1]]);
                }
                "checkpoints" => cfg.checkpoints = numbers(line, k, v)?,
                "output_dir" => output_dir = Some(PathBuf::from(v)),
                _ => return Err(field_err(line, k, "unknown key")),
            }
        }
        cfg.robot = robot;
        cfg.schedule = if stance.is_empty() {
            let legged = cfg.system.split_whitespace().next() == Some("legged");
            let hops = match hops {
                Some(h) => h,
                None if legged => return Err(Error::config("hops", "missing (or give `stance` lines)")),
                None => 0,
            };
            ScheduleSpec::EqualRatio { hops, offsets }
        } else {
            if hops.is_some() || !offsets.is_empty() {
                return Err(Error::config("stance", "cannot be combined with hops/offset"));
            }
            let legs = stance.keys().max().map_or(0, |m| m + 1);
            ScheduleSpec::Explicit((0..legs).map(|l| stance.remove(&l).unwrap_or_default()).collect())
        };
        cfg.output_dir = output_dir.unwrap_or_else(|| PathBuf::from("out").join(&cfg.name));
        if let (Some(rest), Some(dir)) = (cfg.terrain.strip_prefix("table "), base) {
            let p = Path::new(rest.trim());
            if p.is_relative() {
                cfg.terrain = format!("table {}", dir.join(p).display());
            }
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn from_file(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::config("config", format!("{}: {e}", path.display())))?;
        Self::parse_in(&text, path.parent())
    }

    /// Built-in scenario name or path to a config file.
    pub fn load(name_or_path: &str) -> Result<Self> {
        let path = Path::new(name_or_path);
        if !path.exists() {
            let builtins = scenario_registry();
            if builtins.contains(name_or_path) {
                return builtins.build(name_or_path, &[]).map(|c| (*c).clone());
            }
        }
        Self::from_file(path)
    }

    pub fn is_legged(&self) -> bool {
        self.system.split_whitespace().next() == Some("legged")
    }

    pub fn state_names(&self) -> Vec<String> {
        if self.is_legged() {
            StateLayout::new(self.robot.legs).state_names()
        } else {
            (0..self.x_init.len()).map(|i| format!("x{}", i + 1)).collect()
        }
    }

    pub fn control_names(&self) -> Result<Vec<String>> {
        if self.is_legged() {
            Ok(StateLayout::new(self.robot.legs).control_names())
        } else {
            let m = self.build_system()?.control_dim();
            Ok((0..m).map(|i| format!("u{}", i + 1)).collect())
        }
    }

    fn validate(&self) -> Result<()> {
        if !(self.horizon > 0.0) {
            return Err(Error::config("horizon", "must be positive"));
        }
        if self.n_t < MIN_NODES {
            return Err(Error::config("n_t", format!("need at least {MIN_NODES} nodes")));
        }
        let t = &self.tolerances;
        let tols = [
            ("tol_flight_force", t.flight_force),
            ("tol_contact_force", t.contact_force),
            ("tol_geometric", t.geometric),
            ("tol_stance_drift", t.stance_drift),
            ("tol_com", t.com),
            ("tol_final_state", self.final_state_tol),
        ];
        if let Some((field, _)) = tols.iter().find(|(_, v)| !(*v > 0.0)) {
            return Err(Error::config(*field, "must be positive"));
        }
        if !(self.lambda > 0.0) {
            return Err(Error::config("lambda", "must be positive"));
        }
        if self.continuation.iter().any(|l| !(*l > 0.0)) {
            return Err(Error::config("continuation", "penalties must be positive"));
        }
        self.smoothing.validate()?;
        self.solver.validate()?;
        crate::solver::scheme_registry().build_from_spec(&self.solver.scheme)?;
        if self.is_legged() {
            self.robot.validate()?;
        }
        let system = self.build_system()?;
        let n = system.dim();
        for (field, v) in [("x_init", &self.x_init), ("x_fin", &self.x_fin)] {
            if v.len() != n {
                return Err(Error::config(field, format!("has {} entries, the system has {n} states", v.len())));
            }
        }
        self.resolve_hints()?;
        self.build_schedule()?;
        self.build_terrain()?;
        self.constraints(self.lambda)?;
        Ok(())
    }

    pub fn build_system(&self) -> Result<Arc<dyn ControlAffineSystem>> {
        if self.is_legged() {
            return Ok(Arc::new(LeggedSystem::new(self.robot)));
        }
        system_registry().build_from_spec(&self.system)
    }

    pub fn build_terrain(&self) -> Result<Arc<dyn Terrain>> {
        if let Some(rest) = self.terrain.strip_prefix("table ") {
            return Ok(Arc::new(SplineTable::from_csv(Path::new(rest.trim()))?));
        }
        terrain_registry().build_from_spec(&self.terrain)
    }

    pub fn build_schedule(&self) -> Result<ContactSchedule> {
        let legs = if self.is_legged() { self.robot.legs } else { 0 };
        match &self.schedule {
            ScheduleSpec::EqualRatio { hops, offsets } => {
                if legs == 0 {
                    return ContactSchedule::new(self.horizon, vec![]);
                }
                if *hops == 0 {
                    return Err(Error::config("hops", "must be at least 1"));
                }
                let offsets = match offsets.len() {
                    0 => vec![0.0; legs],
                    n if n == legs => offsets.clone(),
                    n => return Err(Error::config("offset", format!("{n} offsets for {legs} legs"))),
                };
                let parts = offsets
                    .iter()
                    .map(|&o| equal_ratio_schedule(*hops, self.horizon, o))
                    .collect::<Result<Vec<_>>>()?;
                ContactSchedule::stack(parts)
            }
            ScheduleSpec::Explicit(per_leg) => {
                if per_leg.len() > legs {
                    return Err(Error::config("stance", format!("intervals for leg {} of {legs}", per_leg.len())));
                }
                let mut all: Vec<LegSchedule> = per_leg.iter().map(|s| LegSchedule { stance: s.clone() }).collect();
                all.resize(legs, LegSchedule { stance: vec![] });
                ContactSchedule::new(self.horizon, all)
            }
        }
    }

    pub fn boundary(&self) -> Result<BoundarySpec> {
        BoundarySpec::new(self.x_init.clone(), self.x_fin.clone())
    }

    /// Hints as a per-component vector.
    pub fn resolve_hints(&self) -> Result<Vec<Option<InitHint>>> {
        let names = self.state_names();
        let index = |name: &str| {
            names
                .iter()
                .position(|n| n == name)
                .ok_or_else(|| Error::config("init", format!("unknown state `{name}` (known: {})", names.join(", "))))
        };
        let mut out = vec![None; names.len()];
        for (name, hint) in &self.hints {
            out[index(name)?] = Some(match hint {
                HintSpec::Constant(v) => InitHint::Constant(*v),
                HintSpec::Track(other) => InitHint::Track(index(other)?),
            });
        }
        Ok(out)
    }

    pub fn constraints(&self, lambda: f64) -> Result<Vec<ConstraintSpec>> {
        if !self.is_legged() {
            if let Some((id, _)) = self.lambda_overrides.first() {
                return Err(Error::config("lambda_j", format!("no constraint `{id}` on this system")));
            }
            return Ok(vec![]);
        }
        let options = LocomotionOptions {
            torso_margin: self.torso_margin,
        };
        let mut specs = build_locomotion_constraints(&self.robot, self.build_terrain()?, self.robot.legs, lambda, options);
        for (id, w) in &self.lambda_overrides {
            let spec = specs
                .iter_mut()
                .find(|s| &s.id == id)
                .ok_or_else(|| Error::config("lambda_j", format!("no constraint `{id}`")))?;
            spec.weight = *w;
        }
        Ok(specs)
    }

    /// The penalized problem at penalty `lambda`.
    pub fn problem(&self, lambda: f64) -> Result<Problem> {
        let system = self.build_system()?;
        let penalty = if self.is_legged() {
            PenaltyMatrix::legged(self.robot.legs, lambda)
        } else {
            PenaltyMatrix::uniform(system.dim(), system.control_dim(), lambda)
        };
        Problem::new(system, penalty, self.constraints(lambda)?, self.build_schedule()?, self.smoothing)
    }

    pub fn com_target(&self) -> Option<[f64; 2]> {
        if self.com_target.is_some() || !self.is_legged() {
            return self.com_target;
        }
        match (self.x_fin[0].fixed(), self.x_fin[1].fixed()) {
            (Some(x), Some(y)) => Some([x, y]),
            _ => None,
        }
    }
}

pub fn scenario_registry() -> Registry<ScenarioConfig> {
    let mut reg: Registry<ScenarioConfig> = Registry::new("scenario");
    reg.register("oneleg", "one leg, three hops over flat ground", |_| {
        ScenarioConfig::parse(include_str!("../scenarios/oneleg.cfg")).map(Arc::new)
    });
    reg.register("twoleg", "two legs, three hops over a sinusoidal floor", |_| {
        ScenarioConfig::parse(include_str!("../scenarios/twoleg.cfg")).map(Arc::new)
    });
    reg
}
