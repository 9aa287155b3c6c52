//! Receding-horizon execution of the planner in the simulator.

use super::{plan, MppiConfig, PlanResult, PlannerModel};
use crate::error::{FdmError, Result};
use crate::geom::{se2_relative, ActionSeq, Se2Pose, Twist};
use crate::model::{EpisodeSim, Fdm, Observation, PlannerHook};
use crate::par::Parallelism;
use crate::plot::{path_overlay, ramp_color, Path2};
use crate::replay::steps_per_prediction;
use crate::rng::{stream_rng, FdmRng};
use crate::terrain::{SimParams, TerrainGrid};

pub const EPISODE_HEADER: &str = "t,x,y,yaw,vx_cmd,vy_cmd,w_cmd,failed";

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EpisodeLimits {
    /// Simulated seconds.
    pub max_time: f64,
    pub goal_tolerance: f64,
    /// Keep the first plan for plotting.
    pub record_plan: bool,
}

impl Default for EpisodeLimits {
    fn default() -> Self {
        Self {
            max_time: 60.0,
            goal_tolerance: 0.5,
            record_plan: false,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Outcome {
    Success,
    Failure,
    Timeout,
}

impl Outcome {
    pub fn as_str(&self) -> &'static str {
        match self {
            Outcome::Success => "success",
            Outcome::Failure => "failure",
            Outcome::Timeout => "timeout",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EpisodeRow {
    pub t: f64,
    pub pose: Se2Pose,
    pub cmd: Twist,
    pub failed: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EpisodeLog {
    pub goal: Se2Pose,
    pub rows: Vec<EpisodeRow>,
    pub outcome: Outcome,
    pub path_length: f64,
    pub path_time: f64,
    pub replans: usize,
    /// Robot pose and result of the first plan, when recorded.
    pub first_plan: Option<(Se2Pose, PlanResult)>,
}

impl EpisodeLog {
    pub fn succeeded(&self) -> bool {
        self.outcome == Outcome::Success
    }
}

/// Summed planar distance between consecutive rows.
pub fn path_length(rows: &[EpisodeRow]) -> f64 {
    rows.windows(2).map(|w| w[0].pose.distance_xy(&w[1].pose)).sum()
}

/// Drives from `start` towards `goal` (world frame), replanning every
/// `cfg.replan_period` seconds from the shifted previous solution.
#[allow(clippy::too_many_arguments)]
pub fn run_receding_horizon(
    grid: &TerrainGrid,
    params: &SimParams,
    start: Se2Pose,
    goal: Se2Pose,
    model: &PlannerModel,
    cfg: &MppiConfig,
    limits: &EpisodeLimits,
    seed: u64,
    par: Parallelism,
) -> Result<EpisodeLog> {
    cfg.validate()?;
    let fcfg = model.cfg();
    let stride = steps_per_prediction(fcfg.dt_h, fcfg.dt_p)?;
    let hold_ticks = ((cfg.replan_period / fcfg.dt_h).round() as usize).max(1);
    let mut sim_rng = stream_rng(seed, 0);
    let mut plan_rng = stream_rng(seed, 1);
    let mut sim = EpisodeSim::new(grid, *params, start, fcfg.dt_h);
    let mut warm = ActionSeq::constant(Twist::ZERO, fcfg.n, fcfg.dt_p);
    let mut first_plan = None;
    let mut replans = 0;
    let time = |sim: &EpisodeSim| (sim.traj.len() - 1) as f64 * fcfg.dt_h;
    let reached = |sim: &EpisodeSim| sim.state.pose.distance_xy(&goal) < limits.goal_tolerance;
    let outcome = 'run: loop {
        if sim.state.failed {
            break Outcome::Failure;
        }
        if reached(&sim) {
            break Outcome::Success;
        }
        if time(&sim) >= limits.max_time - 1e-9 {
            break Outcome::Timeout;
        }
        let obs: Option<Observation> = model.needs_observation().then(|| sim.observe(fcfg));
        let local_goal = se2_relative(&sim.state.pose, &goal);
        let res = plan(model, obs.as_ref().map(|o| o.as_obs()), &local_goal, &warm, cfg, &mut plan_rng, par)?;
        replans += 1;
        for tick in 0..hold_ticks {
            let cmd = res.best_actions.twists[(tick / stride).min(fcfg.n - 1)];
            sim.hold(cmd, 1, &mut sim_rng);
            if sim.state.failed {
                break 'run Outcome::Failure;
            }
            if reached(&sim) {
                break 'run Outcome::Success;
            }
            if time(&sim) >= limits.max_time - 1e-9 {
                break 'run Outcome::Timeout;
            }
        }
        warm = res.best_actions.clone();
        for _ in 0..hold_ticks / stride {
            warm = warm.shifted();
        }
        if limits.record_plan && first_plan.is_none() {
            first_plan = Some((sim.traj.records[sim.traj.len() - 1 - hold_ticks].sim_state.pose, res));
        }
    };
    let rows: Vec<EpisodeRow> = sim
        .traj
        .records
        .iter()
        .map(|r| EpisodeRow {
            t: r.time,
            pose: r.sim_state.pose,
            cmd: r.cmd,
            failed: r.sim_state.failed,
        })
        .collect();
    Ok(EpisodeLog {
        goal,
        path_length: path_length(&rows),
        path_time: rows.last().map_or(0.0, |r| r.t),
        rows,
        outcome,
        replans,
        first_plan,
    })
}

/// Values use the shortest exact representation so the log parses back bit-identically.
pub fn episode_csv(rows: &[EpisodeRow]) -> String {
    let mut out = String::from(EPISODE_HEADER);
    out.push('\n');
    for r in rows {
        out.push_str(&format!(
            "{},{},{},{},{},{},{},{}\n",
            r.t,
            r.pose.x,
            r.pose.y,
            r.pose.yaw,
            r.cmd.vx,
            r.cmd.vy,
            r.cmd.omega,
            u8::from(r.failed)
        ));
    }
    out
}

pub fn parse_episode_csv(text: &str) -> Result<Vec<EpisodeRow>> {
    let mut lines = text.lines();
    if lines.next().map(str::trim) != Some(EPISODE_HEADER) {
        return Err(FdmError::Format("missing episode header".into()));
    }
    lines
        .filter(|l| !l.trim().is_empty())
        .map(|l| {
            let v: Vec<&str> = l.split(',').collect();
            if v.len() != 8 {
                return Err(FdmError::Format(format!("bad episode row '{l}'")));
            }
            let f = |i: usize| v[i].trim().parse::<f64>().map_err(|e| FdmError::Format(format!("bad value '{}': {e}", v[i])));
            Ok(EpisodeRow {
                t: f(0)?,
                pose: Se2Pose { x: f(1)?, y: f(2)?, yaw: f(3)? },
                cmd: Twist::new(f(4)?, f(5)?, f(6)?),
                failed: match v[7].trim() {
                    "0" => false,
                    "1" => true,
                    o => return Err(FdmError::Format(format!("bad failed flag '{o}'"))),
                },
            })
        })
        .collect()
}

/// Top-down view: first-plan candidates coloured by reward rank (red is
/// best), executed path in black, start and goal markers.
pub fn plan_overlay_svg(grid: &TerrainGrid, log: &EpisodeLog, title: &str) -> String {
    let mut paths = Vec::new();
    if let Some((base, res)) = &log.first_plan {
        let mut order: Vec<usize> = (0..res.rewards.len()).collect();
        order.sort_by(|&a, &b| res.rewards[a].total_cmp(&res.rewards[b]).then(a.cmp(&b)));
        let denom = (order.len().max(2) - 1) as f64;
        for (rank, &i) in order.iter().enumerate() {
            let mut pts = vec![(base.x, base.y)];
            pts.extend(res.candidate_poses[i].iter().map(|p| {
                let w = base.compose(p);
                (w.x, w.y)
            }));
            paths.push(Path2 {
                points: pts,
                color: ramp_color(rank as f64 / denom),
                width: 0.6,
            });
        }
    }
    paths.push(Path2 {
        points: log.rows.iter().map(|r| (r.pose.x, r.pose.y)).collect(),
        color: "black".into(),
        width: 2.0,
    });
    let mut markers = vec![((log.goal.x, log.goal.y), "green")];
    if let Some(r) = log.rows.first() {
        markers.push(((r.pose.x, r.pose.y), "blue"));
    }
    path_overlay(title, Some(grid), &paths, &markers)
}

/// Planner used by data collection: one plan from a zero warm start per segment.
#[derive(Debug, Clone)]
pub struct MppiHook {
    pub cfg: MppiConfig,
}

impl PlannerHook for MppiHook {
    fn plan_segment(&self, fdm: &Fdm, obs: &Observation, goal: &Se2Pose, rng: &mut FdmRng) -> Option<ActionSeq> {
        let model = PlannerModel::fdm(fdm);
        let warm = ActionSeq::constant(Twist::ZERO, fdm.cfg.n, fdm.cfg.dt_p);
        plan(&model, Some(obs.as_obs()), goal, &warm, &self.cfg, rng, Parallelism::Sequential)
            .ok()
            .map(|r| r.best_actions)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::FdmConfig;

    fn cv() -> PlannerModel {
        PlannerModel::ConstantVelocity(FdmConfig::default())
    }

    fn quiet() -> SimParams {
        SimParams {
            slip_std: 0.0,
            ..SimParams::default()
        }
    }

    #[test]
    fn reaches_goal_on_plane() {
        let grid = TerrainGrid::flat(200, 200, 0.1);
        let start = Se2Pose::new(5.0, 10.0, 0.0);
        let goal = Se2Pose::new(9.0, 10.0, 0.0);
        let limits = EpisodeLimits { record_plan: true, ..EpisodeLimits::default() };
        let log = run_receding_horizon(&grid, &quiet(), start, goal, &cv(), &MppiConfig::default(), &limits, 3, Parallelism::default()).unwrap();
        assert_eq!(log.outcome, Outcome::Success);
        assert!((log.path_length - 4.0).abs() <= 0.5, "path length {}", log.path_length);
        assert!(log.path_time > 0.0 && log.replans > 0);
        let svg = plan_overlay_svg(&grid, &log, "plane");
        assert!(svg.contains("<polyline"));
        let back = parse_episode_csv(&episode_csv(&log.rows)).unwrap();
        assert_eq!(back, log.rows);
        assert_eq!(path_length(&back), log.path_length);
    }

    #[test]
    fn sealed_box_is_never_reached() {
        let mut grid = TerrainGrid::flat(200, 200, 0.1);
        for k in 120..=160 {
            for (i, j) in [(k, 120), (k, 160), (120, k), (160, k)] {
                grid.set(i, j, 1.0);
            }
        }
        let goal = Se2Pose::new(14.0, 14.0, 0.0);
        let limits = EpisodeLimits { max_time: 20.0, ..EpisodeLimits::default() };
        let log = run_receding_horizon(&grid, &quiet(), Se2Pose::new(9.0, 9.0, 0.0), goal, &cv(), &MppiConfig::default(), &limits, 1, Parallelism::default()).unwrap();
        assert_ne!(log.outcome, Outcome::Success);
    }

    #[test]
    fn zero_time_is_timeout() {
        let grid = TerrainGrid::flat(100, 100, 0.1);
        let limits = EpisodeLimits { max_time: 0.0, ..EpisodeLimits::default() };
        let log = run_receding_horizon(&grid, &quiet(), Se2Pose::new(2.0, 2.0, 0.0), Se2Pose::new(6.0, 2.0, 0.0), &cv(), &MppiConfig::default(), &limits, 0, Parallelism::Sequential).unwrap();
        assert_eq!(log.outcome, Outcome::Timeout);
        assert_eq!(log.rows.len(), 1);
        assert_eq!(log.replans, 0);
    }

    #[test]
    fn bad_csv_is_rejected() {
        assert!(parse_episode_csv("t,x\n").is_err());
        assert!(parse_episode_csv(&format!("{EPISODE_HEADER}\n1,2,3\n")).is_err());
        assert!(parse_episode_csv(&format!("{EPISODE_HEADER}\n0,0,0,0,0,0,0,2\n")).is_err());
    }

    #[test]
    fn hook_returns_bounded_segment() {
        let fdm = Fdm::new(FdmConfig::default(), 0).unwrap();
        let grid = TerrainGrid::flat(100, 100, 0.1);
        let mut sim = EpisodeSim::new(&grid, quiet(), Se2Pose::new(5.0, 5.0, 0.0), fdm.cfg.dt_h);
        let mut rng = stream_rng(0, 0);
        sim.hold(Twist::new(0.3, 0.0, 0.0), 5, &mut rng);
        let hook = MppiHook { cfg: MppiConfig { population: 16, iterations: 1, ..MppiConfig::default() } };
        let seq = hook.plan_segment(&fdm, &sim.observe(&fdm.cfg), &Se2Pose::new(3.0, 0.0, 0.0), &mut rng).unwrap();
        assert_eq!(seq.len(), fdm.cfg.n);
        assert!(seq.twists.iter().all(|t| fdm.cfg.bounds.contains(t)));
    }
}

