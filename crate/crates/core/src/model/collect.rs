//! Simulated data collection: episodes on generated terrains, split into
//! training samples.

use std::collections::BTreeMap;

use rand::seq::index::sample as sample_indices;
use rand::Rng;

use super::net::ObsRef;
use super::{Fdm, FdmConfig};
use crate::error::{FdmError, Result};
use crate::geom::{se2_relative, ActionSeq, Se2Pose, Twist};
use crate::par::{map_indexed, Parallelism};
use crate::replay::{extract_from, steps_per_prediction, FdmSample, TransitionRecord, Trajectory};
use crate::rng::{derive_seed, stream_rng, FdmRng};
use crate::sampling::{sample_exploration, uses_planner, SamplerConfig};
use crate::terrain::{
    generate_terrain, make_proprio_obs, sample_free_pose, sample_height_scan, step_dynamics, HeightScan, SimParams, SimState,
    TerrainGrid, TerrainKind, TerrainSize, PROPRIO_DIM,
};

#[derive(Debug, Clone, PartialEq)]
pub struct CollectConfig {
    pub sim: SimParams,
    pub sampler: SamplerConfig,
    pub kinds: Vec<TerrainKind>,
    pub terrain_size: TerrainSize,
    pub terrains_per_kind: usize,
    pub terrain_seed: u64,
    /// Command segments of `n` steps per episode.
    pub segments: usize,
    pub starts_per_episode: usize,
    /// Episodes simulated per parallel wave.
    pub envs: usize,
}

impl Default for CollectConfig {
    fn default() -> Self {
        Self {
            sim: SimParams::default(),
            sampler: SamplerConfig::default(),
            kinds: TerrainKind::ALL.to_vec(),
            terrain_size: TerrainSize::default(),
            terrains_per_kind: 4,
            terrain_seed: 0,
            segments: 3,
            starts_per_episode: 4,
            envs: 256,
        }
    }
}

/// What a robot knows at one instant: its recent history at `dt_h` and the
/// current scan, all in the current base frame.
#[derive(Debug, Clone, PartialEq)]
pub struct Observation {
    pub history_states: Vec<[f32; 3]>,
    pub history_proprio: Vec<[f32; PROPRIO_DIM]>,
    pub scan: HeightScan,
}

impl Observation {
    pub fn as_obs(&self) -> ObsRef<'_> {
        ObsRef {
            history_states: &self.history_states,
            history_proprio: &self.history_proprio,
            scan: &self.scan,
        }
    }
}

/// Observation at the last of `records`, padded with the earliest one.
pub fn observe(records: &[TransitionRecord], grid: &TerrainGrid, params: &SimParams, cfg: &FdmConfig) -> Observation {
    let last = records.len() - 1;
    let base = records[last].sim_state.pose;
    let mut history_states = Vec::with_capacity(cfg.n);
    let mut history_proprio = Vec::with_capacity(cfg.n);
    for j in 0..cfg.n {
        let r = &records[last.saturating_sub(cfg.n - 1 - j)];
        let p = se2_relative(&base, &r.sim_state.pose);
        history_states.push([p.x as f32, p.y as f32, p.yaw as f32]);
        history_proprio.push(r.proprio.to_array().map(|v| v as f32));
    }
    Observation {
        history_states,
        history_proprio,
        scan: sample_height_scan(&base, grid, params, &cfg.scan),
    }
}

/// Lets the collector ask a planner for a command segment. `goal` is in the
/// robot's base frame.
pub trait PlannerHook: Sync {
    fn plan_segment(&self, fdm: &Fdm, obs: &Observation, goal: &Se2Pose, rng: &mut FdmRng) -> Option<ActionSeq>;
}

/// Ground-truth rollout bookkeeping for one episode.
pub struct EpisodeSim<'a> {
    pub grid: &'a TerrainGrid,
    pub params: SimParams,
    pub state: SimState,
    pub last_cmd: Twist,
    pub traj: Trajectory,
    pub dt_h: f64,
}

impl<'a> EpisodeSim<'a> {
    pub fn new(grid: &'a TerrainGrid, params: SimParams, start: Se2Pose, dt_h: f64) -> Self {
        let state = SimState::at(start);
        let mut sim = Self {
            grid,
            params,
            state,
            last_cmd: Twist::ZERO,
            traj: Trajectory::default(),
            dt_h,
        };
        sim.push_record(Twist::ZERO);
        sim
    }

    fn push_record(&mut self, cmd: Twist) {
        let time = self.traj.records.len() as f64 * self.dt_h;
        self.traj.records.push(TransitionRecord {
            time,
            sim_state: self.state,
            proprio: make_proprio_obs(&self.state, &self.last_cmd, self.grid, &self.params),
            scan_ref: None,
            cmd,
        });
    }

    /// Holds `cmd` for `ticks` simulator steps.
    pub fn hold<R: Rng + ?Sized>(&mut self, cmd: Twist, ticks: usize, rng: &mut R) {
        for _ in 0..ticks {
            self.traj.records.last_mut().expect("non-empty").cmd = cmd;
            self.state = step_dynamics(&self.state, &cmd, self.grid, &self.params, rng);
            self.last_cmd = cmd;
            self.push_record(cmd);
        }
    }

    pub fn observe(&self, cfg: &FdmConfig) -> Observation {
        observe(&self.traj.records, self.grid, &self.params, cfg)
    }
}

/// Deterministic terrain pool, `terrains_per_kind` grids per kind.
pub fn terrain_pool(ccfg: &CollectConfig) -> Result<BTreeMap<TerrainKind, Vec<TerrainGrid>>> {
    let mut pool = BTreeMap::new();
    for &kind in &ccfg.kinds {
        let grids = (0..ccfg.terrains_per_kind.max(1))
            .map(|i| generate_terrain(kind, derive_seed(ccfg.terrain_seed, (kind as u64) << 32 | i as u64), ccfg.terrain_size))
            .collect::<Result<Vec<_>>>()?;
        pool.insert(kind, grids);
    }
    Ok(pool)
}

/// Goal 3 to 6 m away inside the map, in the base frame of `pose`.
fn random_goal<R: Rng + ?Sized>(pose: &Se2Pose, grid: &TerrainGrid, rng: &mut R) -> Se2Pose {
    let (w, h) = grid.extent();
    for _ in 0..100 {
        let d = rng.random_range(3.0..6.0);
        let a = rng.random_range(-std::f64::consts::PI..std::f64::consts::PI);
        let (x, y) = (pose.x + d * a.cos(), pose.y + d * a.sin());
        if x > 0.5 && y > 0.5 && x < w - 0.5 && y < h - 0.5 {
            return se2_relative(pose, &Se2Pose::new(x, y, 0.0));
        }
    }
    Se2Pose::new(3.0, 0.0, 0.0)
}

fn run_episode(
    cfg: &FdmConfig,
    ccfg: &CollectConfig,
    grid: &TerrainGrid,
    planner: Option<(&Fdm, &dyn PlannerHook)>,
    rng: &mut FdmRng,
) -> Result<Vec<FdmSample>> {
    let stride = steps_per_prediction(cfg.dt_h, cfg.dt_p)?;
    let jitter = ccfg.sim.traction_jitter;
    let params = if jitter > 0.0 {
        ccfg.sim.with_traction_scale(rng.random_range(1.0 - jitter..=1.0))
    } else {
        ccfg.sim
    };
    let start = sample_free_pose(grid, &params, rng).ok_or_else(|| FdmError::Empty("no free start pose".into()))?;
    let mut sim = EpisodeSim::new(grid, params, start, cfg.dt_h);
    let sampler = SamplerConfig {
        bounds: cfg.bounds,
        ..ccfg.sampler
    };
    for _ in 0..ccfg.segments {
        let seq = match planner {
            Some((fdm, hook)) if !sim.state.failed => {
                let obs = sim.observe(cfg);
                let goal = random_goal(&sim.state.pose, grid, rng);
                hook.plan_segment(fdm, &obs, &goal, rng)
                    .filter(|s| s.len() == cfg.n)
                    .unwrap_or_else(|| sample_exploration(&SamplerConfig { mode: crate::sampling::SamplerMode::Linear, ..sampler }, cfg.n, cfg.dt_p, rng))
            }
            _ => sample_exploration(&sampler, cfg.n, cfg.dt_p, rng),
        };
        for t in &seq.twists {
            sim.hold(*t, stride, rng);
        }
    }
    let mut traj = sim.traj;
    let horizon = cfg.n * stride;
    let fail = traj.first_failure().unwrap_or(usize::MAX);
    let candidates: Vec<usize> = (0..traj.len())
        .step_by(stride)
        .filter(|&t| t + horizon < traj.len() && t < fail)
        .collect();
    let take = ccfg.starts_per_episode.min(candidates.len());
    let mut starts: Vec<usize> = sample_indices(rng, candidates.len(), take).into_iter().map(|i| candidates[i]).collect();
    starts.sort_unstable();
    for &t0 in &starts {
        let pose = traj.records[t0].sim_state.pose;
        traj.scans.push(sample_height_scan(&pose, grid, &params, &cfg.scan));
        traj.records[t0].scan_ref = Some(traj.scans.len() - 1);
    }
    starts.iter().map(|&t0| extract_from(&traj, t0, cfg.n, cfg.dt_h, cfg.dt_p)).collect()
}

/// Collects exactly `count` samples. Episode `i` uses the planner when
/// `uses_planner(i, planner_share)` holds and a planner is given.
pub fn collect_dataset(
    cfg: &FdmConfig,
    ccfg: &CollectConfig,
    count: usize,
    planner_share: f64,
    planner: Option<(&Fdm, Option<&dyn PlannerHook>)>,
    seed: u64,
    parallelism: Parallelism,
) -> Result<Vec<FdmSample>> {
    if ccfg.kinds.is_empty() {
        return Err(FdmError::Config("no terrain kinds configured".into()));
    }
    let pool = terrain_pool(ccfg)?;
    let kinds: Vec<TerrainKind> = pool.keys().copied().collect();
    let planner = match planner {
        Some((fdm, Some(h))) => Some((fdm, h)),
        _ => None,
    };
    let mut out = Vec::with_capacity(count);
    let mut next = 0usize;
    let wave = ccfg.envs.max(1);
    while out.len() < count {
        let first = next;
        let results = map_indexed(wave, parallelism, |i| {
            let ep = first + i;
            let mut rng = stream_rng(seed, ep as u64);
            let kind = kinds[ep % kinds.len()];
            let grids = &pool[&kind];
            let grid = &grids[rng.random_range(0..grids.len())];
            let p = planner.filter(|_| uses_planner(ep, planner_share));
            run_episode(cfg, ccfg, grid, p, &mut rng)
        });
        next += wave;
        for r in results {
            out.extend(r?);
        }
        if next > 1000 * count.max(1) {
            return Err(FdmError::Empty("episodes yield no samples".into()));
        }
    }
    out.truncate(count);
    Ok(out)
}
