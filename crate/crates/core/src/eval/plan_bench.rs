//! Closed-loop planning benchmark: success rate, path length and path time.

use std::collections::VecDeque;

use rand::Rng;

use super::{quantile_sorted, EvalConfig};
use crate::error::{FdmError, Result};
use crate::geom::Se2Pose;
use crate::model::{terrain_pool, CollectConfig, Fdm, FdmConfig};
use crate::mppi::{run_receding_horizon, EpisodeLog, MppiConfig, Outcome, PlannerModel};
use crate::par::{map_indexed, Parallelism};
use crate::rng::{derive_seed, rng_from_seed, stream_rng};
use crate::terrain::{check_failure, sample_free_pose, SimParams, TerrainGrid, TerrainKind, TerrainSize};

/// Connected traversable regions of a terrain on a coarse lattice.
#[derive(Debug, Clone, PartialEq)]
pub struct Reachability {
    pub width: usize,
    pub height: usize,
    /// Lattice spacing in metres.
    pub spacing: f64,
    /// Component id per lattice point; `None` where the robot cannot stand.
    pub component: Vec<Option<u32>>,
}

impl Reachability {
    fn index(&self, x: f64, y: f64) -> Option<usize> {
        let i = (x / self.spacing).round();
        let j = (y / self.spacing).round();
        if i < 0.0 || j < 0.0 || i >= self.width as f64 || j >= self.height as f64 {
            return None;
        }
        Some(j as usize * self.width + i as usize)
    }

    pub fn component_at(&self, x: f64, y: f64) -> Option<u32> {
        self.index(x, y).and_then(|k| self.component[k])
    }

    /// Whether both points lie in the same traversable component.
    pub fn connected(&self, a: (f64, f64), b: (f64, f64)) -> bool {
        matches!((self.component_at(a.0, a.1), self.component_at(b.0, b.1)), (Some(x), Some(y)) if x == y)
    }
}

/// A lattice point is traversable when the failure rule passes for at least
/// one of four headings; components are 8-connected.
pub fn reachable_cells(grid: &TerrainGrid, params: &SimParams, spacing: f64) -> Reachability {
    let (w, h) = grid.extent();
    let width = (w / spacing).floor() as usize + 1;
    let height = (h / spacing).floor() as usize + 1;
    let yaws = [0.0, std::f64::consts::FRAC_PI_4, std::f64::consts::FRAC_PI_2, 3.0 * std::f64::consts::FRAC_PI_4];
    let free: Vec<bool> = (0..width * height)
        .map(|k| {
            let (x, y) = ((k % width) as f64 * spacing, (k / width) as f64 * spacing);
            yaws.iter().any(|&yaw| !check_failure(&Se2Pose::new(x, y, yaw), grid, params))
        })
        .collect();
    let mut component = vec![None; width * height];
    let mut next = 0u32;
    let mut queue = VecDeque::new();
    for s in 0..width * height {
        if !free[s] || component[s].is_some() {
            continue;
        }
        component[s] = Some(next);
        queue.push_back(s);
        while let Some(k) = queue.pop_front() {
            let (i, j) = ((k % width) as i64, (k / width) as i64);
            for dj in -1..=1 {
                for di in -1..=1 {
                    let (ni, nj) = (i + di, j + dj);
                    if ni < 0 || nj < 0 || ni >= width as i64 || nj >= height as i64 {
                        continue;
                    }
                    let nk = nj as usize * width + ni as usize;
                    if free[nk] && component[nk].is_none() {
                        component[nk] = Some(next);
                        queue.push_back(nk);
                    }
                }
            }
        }
        next += 1;
    }
    Reachability {
        width,
        height,
        spacing,
        component,
    }
}

/// Goal between `min` and `max` metres from `start`, reachable from it.
pub fn sample_reachable_goal<R: Rng + ?Sized>(reach: &Reachability, start: &Se2Pose, min: f64, max: f64, rng: &mut R) -> Option<Se2Pose> {
    for _ in 0..500 {
        let d = rng.random_range(min..max);
        let a = rng.random_range(-std::f64::consts::PI..std::f64::consts::PI);
        let (x, y) = (start.x + d * a.cos(), start.y + d * a.sin());
        if reach.connected((start.x, start.y), (x, y)) {
            return Some(Se2Pose::new(x, y, 0.0));
        }
    }
    None
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum PlanMethod {
    Fdm,
    FdmNoRisk,
    ConstantVelocity,
}

impl PlanMethod {
    pub const ALL: [PlanMethod; 3] = [PlanMethod::Fdm, PlanMethod::FdmNoRisk, PlanMethod::ConstantVelocity];

    pub fn as_str(&self) -> &'static str {
        match self {
            PlanMethod::Fdm => "mppi_fdm",
            PlanMethod::FdmNoRisk => "mppi_fdm_norisk",
            PlanMethod::ConstantVelocity => "mppi_cv",
        }
    }

    pub fn needs_model(&self) -> bool {
        !matches!(self, PlanMethod::ConstantVelocity)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EpisodeSummary {
    pub episode: usize,
    pub outcome: Outcome,
    pub path_length: f64,
    pub path_time: f64,
}

impl From<(usize, &EpisodeLog)> for EpisodeSummary {
    fn from((episode, log): (usize, &EpisodeLog)) -> Self {
        Self {
            episode,
            outcome: log.outcome,
            path_length: log.path_length,
            path_time: log.path_time,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PlanMetrics {
    pub episodes: usize,
    /// Percent.
    pub success: f64,
    pub success_ci: (f64, f64),
    /// Mean path length over successful and over all episodes.
    pub mpl_suc: f64,
    pub mpl_all: f64,
    pub mpt_suc: f64,
    pub mpt_all: f64,
}

/// Percentile bootstrap interval of the success rate in percent.
pub fn bootstrap_success_ci(successes: &[bool], resamples: usize, seed: u64) -> (f64, f64) {
    let n = successes.len();
    if n == 0 {
        return (0.0, 0.0);
    }
    let rate = 100.0 * successes.iter().filter(|&&s| s).count() as f64 / n as f64;
    if resamples == 0 {
        return (rate, rate);
    }
    let mut rng = rng_from_seed(seed);
    let mut means: Vec<f64> = (0..resamples)
        .map(|_| 100.0 * (0..n).filter(|_| successes[rng.random_range(0..n)]).count() as f64 / n as f64)
        .collect();
    means.sort_by(f64::total_cmp);
    (quantile_sorted(&means, 0.025), quantile_sorted(&means, 0.975))
}

fn mean_or_zero(v: impl Iterator<Item = f64>) -> f64 {
    let (s, n) = v.fold((0.0, 0usize), |(s, n), x| (s + x, n + 1));
    if n == 0 {
        0.0
    } else {
        s / n as f64
    }
}

impl PlanMetrics {
    pub fn from_episodes(eps: &[EpisodeSummary], resamples: usize, seed: u64) -> Self {
        let ok: Vec<bool> = eps.iter().map(|e| e.outcome == Outcome::Success).collect();
        let n = eps.len();
        let success = if n == 0 { 0.0 } else { 100.0 * ok.iter().filter(|&&s| s).count() as f64 / n as f64 };
        let suc = || eps.iter().filter(|e| e.outcome == Outcome::Success);
        Self {
            episodes: n,
            success,
            success_ci: bootstrap_success_ci(&ok, resamples, seed),
            mpl_suc: mean_or_zero(suc().map(|e| e.path_length)),
            mpl_all: mean_or_zero(eps.iter().map(|e| e.path_length)),
            mpt_suc: mean_or_zero(suc().map(|e| e.path_time)),
            mpt_all: mean_or_zero(eps.iter().map(|e| e.path_time)),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PlanEnvReport {
    pub kind: TerrainKind,
    pub method: PlanMethod,
    pub metrics: PlanMetrics,
    pub episodes: Vec<EpisodeSummary>,
    /// Full log of the first episode, with its first plan.
    pub first_log: Option<EpisodeLog>,
}

struct Setup {
    grid: usize,
    start: Se2Pose,
    goal: Se2Pose,
}

fn episode_setups(grids: &[TerrainGrid], reach: &[Reachability], sim: &SimParams, ecfg: &EvalConfig, kind: TerrainKind) -> Result<Vec<Setup>> {
    (0..ecfg.episodes)
        .map(|i| {
            let mut rng = stream_rng(derive_seed(ecfg.seed, 0x504c_414e_0000 | kind as u64), i as u64);
            let g = i % grids.len();
            for _ in 0..200 {
                let Some(start) = sample_free_pose(&grids[g], sim, &mut rng) else { continue };
                if let Some(goal) = sample_reachable_goal(&reach[g], &start, ecfg.goal_min, ecfg.goal_max, &mut rng) {
                    return Ok(Setup { grid: g, start, goal });
                }
            }
            Err(FdmError::Empty(format!("no reachable start and goal on {kind} terrain {g}")))
        })
        .collect()
}

/// Runs every method on the same start and goal pairs, `ecfg.episodes` per
/// terrain kind. `fdm` is required for the model-based methods.
#[allow(clippy::too_many_arguments)]
pub fn run_planning_benchmark(
    fdm: Option<&Fdm>,
    methods: &[PlanMethod],
    sim: &SimParams,
    terrain_size: TerrainSize,
    mppi: &MppiConfig,
    ecfg: &EvalConfig,
    par: Parallelism,
) -> Result<Vec<PlanEnvReport>> {
    ecfg.validate()?;
    mppi.validate()?;
    let fdm_model = match fdm {
        Some(f) => Some(PlannerModel::fdm(f)),
        None if methods.iter().any(|m| m.needs_model()) => return Err(FdmError::Config("model-based methods need a checkpoint".into())),
        None => None,
    };
    let cv_model = PlannerModel::ConstantVelocity(fdm.map_or_else(FdmConfig::default, |f| f.cfg.clone()));
    let no_risk = MppiConfig { lambda_risk: 0.0, ..mppi.clone() };
    let limits = ecfg.limits();
    let mut reports = Vec::new();
    for &kind in &ecfg.kinds {
        let pool = terrain_pool(&CollectConfig {
            kinds: vec![kind],
            terrain_size,
            terrains_per_kind: ecfg.terrains_per_kind,
            terrain_seed: ecfg.terrain_seed,
            ..CollectConfig::default()
        })?;
        let grids = &pool[&kind];
        let reach: Vec<Reachability> = map_indexed(grids.len(), par, |g| reachable_cells(&grids[g], sim, 0.2));
        let setups = episode_setups(grids, &reach, sim, ecfg, kind)?;
        let jobs: Vec<(usize, PlanMethod)> = (0..setups.len()).flat_map(|i| methods.iter().map(move |&m| (i, m))).collect();
        let logs = map_indexed(jobs.len(), par, |j| {
            let (i, method) = jobs[j];
            let s = &setups[i];
            let (model, cfg) = match method {
                PlanMethod::Fdm => (fdm_model.as_ref().expect("checked above"), mppi),
                PlanMethod::FdmNoRisk => (fdm_model.as_ref().expect("checked above"), &no_risk),
                PlanMethod::ConstantVelocity => (&cv_model, mppi),
            };
            let lim = crate::mppi::EpisodeLimits { record_plan: i == 0, ..limits };
            let seed = derive_seed(ecfg.seed, (kind as u64) << 32 | i as u64);
            run_receding_horizon(&grids[s.grid], sim, s.start, s.goal, model, cfg, &lim, seed, Parallelism::Sequential)
        });
        let mut by_method: Vec<(Vec<EpisodeSummary>, Option<EpisodeLog>)> = methods.iter().map(|_| (Vec::new(), None)).collect();
        for (j, log) in logs.into_iter().enumerate() {
            let log = log?;
            let (i, m) = jobs[j];
            let slot = &mut by_method[methods.iter().position(|x| *x == m).expect("listed")];
            slot.0.push(EpisodeSummary::from((i, &log)));
            if i == 0 {
                slot.1 = Some(log);
            }
        }
        for (m, (eps, first)) in methods.iter().zip(by_method) {
            let metrics = PlanMetrics::from_episodes(&eps, ecfg.bootstrap, derive_seed(ecfg.seed, (kind as u64) << 8 | *m as u64));
            reports.push(PlanEnvReport {
                kind,
                method: *m,
                metrics,
                episodes: eps,
                first_log: first,
            });
        }
    }
    Ok(reports)
}

pub const PLAN_REPORT_HEADER: &str = "env,method,episodes,success,success_lo,success_hi,mpl_suc,mpl_all,mpt_suc,mpt_all";

pub fn plan_report_csv(reports: &[PlanEnvReport]) -> String {
    let mut out = format!("{PLAN_REPORT_HEADER}\n");
    for r in reports {
        let m = &r.metrics;
        out.push_str(&format!(
            "{},{},{},{:.2},{:.2},{:.2},{:.4},{:.4},{:.4},{:.4}\n",
            r.kind,
            r.method.as_str(),
            m.episodes,
            m.success,
            m.success_ci.0,
            m.success_ci.1,
            m.mpl_suc,
            m.mpl_all,
            m.mpt_suc,
            m.mpt_all
        ));
    }
    out
}

pub fn episodes_csv(reports: &[PlanEnvReport]) -> String {
    let mut out = String::from("env,method,episode,outcome,path_length,path_time\n");
    for r in reports {
        for e in &r.episodes {
            out.push_str(&format!("{},{},{},{},{},{}\n", r.kind, r.method.as_str(), e.episode, e.outcome.as_str(), e.path_length, e.path_time));
        }
    }
    out
}
