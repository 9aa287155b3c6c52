//! Metrics, baselines and the benchmark experiments.

mod fdm_bench;
mod finetune;
mod plan_bench;

pub use fdm_bench::{evaluate_on, fdm_metrics, fdm_report_csv, heldout_samples, run_fdm_benchmark, step_error_csv, step_error_svg, final_error_svg, FdmEnvReport, FdmMetrics, FDM_REPORT_HEADER};
pub use finetune::{finetune_report_csv, run_finetune_experiment, FinetuneReport, FinetuneRow};
pub use plan_bench::{
    bootstrap_success_ci, episodes_csv, plan_report_csv, reachable_cells, run_planning_benchmark, sample_reachable_goal, EpisodeSummary,
    PlanEnvReport, PlanMethod, PlanMetrics, Reachability, PLAN_REPORT_HEADER,
};

use crate::config::{parse_value, unknown_key, Section};
use crate::error::{FdmError, Result};
use crate::geom::{integrate_twist, ActionSeq, PoseTrajectory, Se2Pose};
use crate::terrain::TerrainKind;

/// Commanded twists integrated as given.
pub fn constant_velocity_predict(actions: &ActionSeq) -> PoseTrajectory {
    let bounds = crate::geom::ActionBounds {
        min: [f64::NEG_INFINITY; 3],
        max: [f64::INFINITY; 3],
    };
    integrate_twist(&Se2Pose::IDENTITY, actions, None, &bounds)
}

/// Per-trajectory failure classification counts.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct Confusion {
    pub tp: usize,
    pub fp: usize,
    pub fn_: usize,
    pub tn: usize,
}

impl Confusion {
    pub fn total(&self) -> usize {
        self.tp + self.fp + self.fn_ + self.tn
    }

    /// True when nothing was predicted positive; precision is then reported as 0.
    pub fn precision_undefined(&self) -> bool {
        self.tp + self.fp == 0
    }

    pub fn precision(&self) -> f64 {
        if self.precision_undefined() {
            0.0
        } else {
            self.tp as f64 / (self.tp + self.fp) as f64
        }
    }

    pub fn recall(&self) -> f64 {
        if self.tp + self.fn_ == 0 {
            0.0
        } else {
            self.tp as f64 / (self.tp + self.fn_) as f64
        }
    }

    pub fn accuracy(&self) -> f64 {
        if self.total() == 0 {
            0.0
        } else {
            (self.tp + self.tn) as f64 / self.total() as f64
        }
    }

    pub fn f1(&self) -> f64 {
        let (p, r) = (self.precision(), self.recall());
        if p + r == 0.0 {
            0.0
        } else {
            2.0 * p * r / (p + r)
        }
    }
}

/// A trajectory is positive when any step exceeds `delta_risk`.
pub fn failure_confusion(pred_risks: &[Vec<f64>], label_positive: &[bool], delta_risk: f64) -> Result<Confusion> {
    if pred_risks.is_empty() {
        return Err(FdmError::Empty("no trajectories to classify".into()));
    }
    if pred_risks.len() != label_positive.len() {
        return Err(FdmError::Shape(format!("{} predictions for {} labels", pred_risks.len(), label_positive.len())));
    }
    let mut c = Confusion::default();
    for (r, &l) in pred_risks.iter().zip(label_positive) {
        let p = r.iter().any(|&v| v > delta_risk);
        match (p, l) {
            (true, true) => c.tp += 1,
            (true, false) => c.fp += 1,
            (false, true) => c.fn_ += 1,
            (false, false) => c.tn += 1,
        }
    }
    Ok(c)
}

/// Linear-interpolation quantile of sorted data.
pub fn quantile_sorted(sorted: &[f64], q: f64) -> f64 {
    if sorted.is_empty() {
        return f64::NAN;
    }
    let pos = q.clamp(0.0, 1.0) * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    sorted[lo] + (sorted[hi] - sorted[lo]) * (pos - lo as f64)
}

pub fn mean_std(v: &[f64]) -> (f64, f64) {
    if v.is_empty() {
        return (f64::NAN, f64::NAN);
    }
    let m = v.iter().sum::<f64>() / v.len() as f64;
    let var = v.iter().map(|x| (x - m).powi(2)).sum::<f64>() / v.len() as f64;
    (m, var.sqrt())
}

/// Benchmark settings shared by the experiments.
#[derive(Debug, Clone, PartialEq)]
pub struct EvalConfig {
    pub kinds: Vec<TerrainKind>,
    pub samples_per_env: usize,
    pub episodes: usize,
    /// Seeds for held-out terrains and episodes; keep them apart from training.
    pub seed: u64,
    pub terrain_seed: u64,
    pub terrains_per_kind: usize,
    pub max_time: f64,
    pub goal_tolerance: f64,
    pub goal_min: f64,
    pub goal_max: f64,
    pub bootstrap: usize,
}

impl Default for EvalConfig {
    fn default() -> Self {
        Self {
            kinds: TerrainKind::ALL.to_vec(),
            samples_per_env: 5000,
            episodes: 200,
            seed: 1_000_003,
            terrain_seed: 7919,
            terrains_per_kind: 4,
            max_time: 60.0,
            goal_tolerance: 0.5,
            goal_min: 3.0,
            goal_max: 6.0,
            bootstrap: 2000,
        }
    }
}

impl EvalConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(FdmError::Config(m.to_string()));
        if self.kinds.is_empty() {
            return bad("eval.kinds must not be empty");
        }
        if self.samples_per_env == 0 || self.episodes == 0 || self.terrains_per_kind == 0 {
            return bad("eval counts must be positive");
        }
        if !(self.max_time >= 0.0 && self.goal_tolerance > 0.0) {
            return bad("eval.max_time or eval.goal_tolerance out of range");
        }
        if !(self.goal_min > 0.0 && self.goal_max > self.goal_min) {
            return bad("eval goal range must satisfy 0 < goal_min < goal_max");
        }
        Ok(())
    }

    pub fn limits(&self) -> crate::mppi::EpisodeLimits {
        crate::mppi::EpisodeLimits {
            max_time: self.max_time,
            goal_tolerance: self.goal_tolerance,
            record_plan: false,
        }
    }
}

impl Section for EvalConfig {
    fn name(&self) -> &'static str {
        "eval"
    }

    fn set(&mut self, key: &str, value: &str) -> Result<()> {
        let s = "eval";
        match key {
            "kinds" => {
                self.kinds = value
                    .split(',')
                    .map(|k| k.trim().parse())
                    .collect::<std::result::Result<Vec<TerrainKind>, _>>()?
            }
            "samples_per_env" => self.samples_per_env = parse_value(s, key, value)?,
            "episodes" => self.episodes = parse_value(s, key, value)?,
            "seed" => self.seed = parse_value(s, key, value)?,
            "terrain_seed" => self.terrain_seed = parse_value(s, key, value)?,
            "terrains_per_kind" => self.terrains_per_kind = parse_value(s, key, value)?,
            "max_time" => self.max_time = parse_value(s, key, value)?,
            "goal_tolerance" => self.goal_tolerance = parse_value(s, key, value)?,
            "goal_min" => self.goal_min = parse_value(s, key, value)?,
            "goal_max" => self.goal_max = parse_value(s, key, value)?,
            "bootstrap" => self.bootstrap = parse_value(s, key, value)?,
            _ => return Err(unknown_key(s, key)),
        }
        Ok(())
    }

    fn entries(&self) -> Vec<(&'static str, String)> {
        vec![
            ("kinds", self.kinds.iter().map(|k| k.as_str()).collect::<Vec<_>>().join(",")),
            ("samples_per_env", self.samples_per_env.to_string()),
            ("episodes", self.episodes.to_string()),
            ("seed", self.seed.to_string()),
            ("terrain_seed", self.terrain_seed.to_string()),
            ("terrains_per_kind", self.terrains_per_kind.to_string()),
            ("max_time", self.max_time.to_string()),
            ("goal_tolerance", self.goal_tolerance.to_string()),
            ("goal_min", self.goal_min.to_string()),
            ("goal_max", self.goal_max.to_string()),
            ("bootstrap", self.bootstrap.to_string()),
        ]
    }

    fn check(&self) -> Result<()> {
        self.validate()
    }
}
