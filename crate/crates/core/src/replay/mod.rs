//! Trajectory storage, training-sample extraction and normalization.

mod augment;
mod io;

pub use augment::{augment_sample, AugmentConfig};
pub use io::{dataset_from_bytes, dataset_to_bytes, read_dataset, write_dataset, Dataset, DATASET_MAGIC};

use std::collections::VecDeque;

use crate::error::{FdmError, Result};
use crate::geom::{se2_relative, ActionSeq, Se2Pose, Twist};
use crate::terrain::{HeightScan, ProprioObs, SimState, PROPRIO_DIM};

/// One simulator tick. `cmd` is the command applied from this record to the next.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TransitionRecord {
    pub time: f64,
    pub sim_state: SimState,
    pub proprio: ProprioObs,
    /// Index into the owning trajectory's scan store, present on records
    /// eligible as a sample start.
    pub scan_ref: Option<usize>,
    pub cmd: Twist,
}

#[derive(Debug, Clone, Default)]
pub struct Trajectory {
    pub records: Vec<TransitionRecord>,
    pub scans: Vec<HeightScan>,
}

impl Trajectory {
    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    /// Index of the first failed record, if any.
    pub fn first_failure(&self) -> Option<usize> {
        self.records.iter().position(|r| r.sim_state.failed)
    }
}

/// Whole-trajectory FIFO store.
#[derive(Debug, Clone)]
pub struct ReplayBuffer {
    capacity: usize,
    dt_h: f64,
    next_id: u64,
    trajectories: VecDeque<(u64, Trajectory)>,
}

impl ReplayBuffer {
    pub fn new(capacity: usize, dt_h: f64) -> Self {
        Self {
            capacity: capacity.max(1),
            dt_h,
            next_id: 0,
            trajectories: VecDeque::new(),
        }
    }

    pub fn len(&self) -> usize {
        self.trajectories.len()
    }

    pub fn is_empty(&self) -> bool {
        self.trajectories.is_empty()
    }

    pub fn clear(&mut self) {
        self.trajectories.clear();
    }

    pub fn ids(&self) -> impl Iterator<Item = u64> + '_ {
        self.trajectories.iter().map(|(id, _)| *id)
    }

    pub fn get(&self, id: u64) -> Option<&Trajectory> {
        self.trajectories.iter().find(|(i, _)| *i == id).map(|(_, t)| t)
    }

    /// Appends a trajectory, evicting the oldest ones past capacity.
    /// Records must be spaced exactly `dt_h` apart.
    pub fn push_trajectory(&mut self, traj: Trajectory) -> Result<u64> {
        let tol = 1e-6 * self.dt_h.max(1.0);
        for (k, w) in traj.records.windows(2).enumerate() {
            let gap = w[1].time - w[0].time;
            if !(gap > 0.0) || (gap - self.dt_h).abs() > tol {
                return Err(FdmError::Unordered(format!(
                    "records {k} and {} are {gap} s apart, expected {}",
                    k + 1,
                    self.dt_h
                )));
            }
        }
        for r in &traj.records {
            if let Some(s) = r.scan_ref {
                if s >= traj.scans.len() {
                    return Err(FdmError::Shape(format!("scan reference {s} out of range")));
                }
            }
        }
        let id = self.next_id;
        self.next_id += 1;
        self.trajectories.push_back((id, traj));
        while self.trajectories.len() > self.capacity {
            self.trajectories.pop_front();
        }
        Ok(id)
    }
}

/// One training record, stored in single precision. All poses are in the
/// base frame at the sample start.
#[derive(Debug, Clone, PartialEq)]
pub struct FdmSample {
    /// Oldest first; the last entry is the start pose, i.e. zero.
    pub history_states: Vec<[f32; 3]>,
    pub history_proprio: Vec<[f32; PROPRIO_DIM]>,
    pub scan: HeightScan,
    pub actions: Vec<[f32; 3]>,
    pub label_poses: Vec<[f32; 3]>,
    pub label_risks: Vec<u8>,
}

impl FdmSample {
    pub fn horizon(&self) -> usize {
        self.actions.len()
    }

    pub fn action_seq(&self, dt_p: f64) -> ActionSeq {
        ActionSeq::new(
            self.actions.iter().map(|a| Twist::new(a[0] as f64, a[1] as f64, a[2] as f64)).collect(),
            dt_p,
        )
    }

    pub fn label_pose(&self, k: usize) -> Se2Pose {
        let p = self.label_poses[k];
        Se2Pose::new(p[0] as f64, p[1] as f64, p[2] as f64)
    }

    pub fn failed(&self) -> bool {
        self.label_risks.iter().any(|&r| r != 0)
    }

    /// Label freeze: from the first positive risk onward every pose equals
    /// the failure pose and every risk is positive.
    pub fn labels_frozen(&self) -> bool {
        match self.label_risks.iter().position(|&r| r != 0) {
            None => true,
            Some(k) => (k..self.label_risks.len())
                .all(|j| self.label_risks[j] == 1 && self.label_poses[j] == self.label_poses[k]),
        }
    }
}

fn pose_f32(p: &Se2Pose) -> [f32; 3] {
    [p.x as f32, p.y as f32, p.yaw as f32]
}

fn proprio_f32(p: &ProprioObs) -> [f32; PROPRIO_DIM] {
    p.to_array().map(|v| v as f32)
}

/// Number of simulator ticks per prediction step.
pub fn steps_per_prediction(dt_h: f64, dt_p: f64) -> Result<usize> {
    let ratio = dt_p / dt_h;
    let k = ratio.round();
    if k < 1.0 || (ratio - k).abs() > 1e-6 {
        return Err(FdmError::Config(format!("dt_p {dt_p} is not a multiple of dt_h {dt_h}")));
    }
    Ok(k as usize)
}

/// Cuts a sample starting at record `t0`. History is gathered backward at
/// `dt_h` and repeat-padded with the earliest record; labels are read
/// forward at `dt_p`.
pub fn extract_sample(buffer: &ReplayBuffer, traj_id: u64, t0: usize, n: usize, dt_h: f64, dt_p: f64) -> Result<FdmSample> {
    let traj = buffer
        .get(traj_id)
        .ok_or_else(|| FdmError::Empty(format!("no trajectory with id {traj_id}")))?;
    extract_from(traj, t0, n, dt_h, dt_p)
}

pub fn extract_from(traj: &Trajectory, t0: usize, n: usize, dt_h: f64, dt_p: f64) -> Result<FdmSample> {
    if n == 0 {
        return Err(FdmError::Config("horizon must be at least 1".into()));
    }
    let stride = steps_per_prediction(dt_h, dt_p)?;
    let recs = &traj.records;
    if t0 + n * stride >= recs.len() {
        return Err(FdmError::InsufficientLength(format!(
            "start {t0} needs {} records, trajectory has {}",
            t0 + n * stride + 1,
            recs.len()
        )));
    }
    let start = &recs[t0];
    let scan_idx = start
        .scan_ref
        .ok_or_else(|| FdmError::InsufficientLength(format!("record {t0} has no scan")))?;
    let base = start.sim_state.pose;

    let mut history_states = Vec::with_capacity(n);
    let mut history_proprio = Vec::with_capacity(n);
    for j in 0..n {
        let back = n - 1 - j;
        let r = &recs[t0.saturating_sub(back)];
        history_states.push(pose_f32(&se2_relative(&base, &r.sim_state.pose)));
        history_proprio.push(proprio_f32(&r.proprio));
    }

    let mut actions = Vec::with_capacity(n);
    let mut label_poses = Vec::with_capacity(n);
    let mut label_risks = Vec::with_capacity(n);
    let mut frozen: Option<[f32; 3]> = None;
    for k in 0..n {
        let c = recs[t0 + k * stride].cmd;
        actions.push([c.vx as f32, c.vy as f32, c.omega as f32]);
        let s = &recs[t0 + (k + 1) * stride].sim_state;
        if frozen.is_none() && s.failed {
            let fp = s.fail_pose.unwrap_or(s.pose);
            frozen = Some(pose_f32(&se2_relative(&base, &fp)));
        }
        match frozen {
            Some(p) => {
                label_poses.push(p);
                label_risks.push(1);
            }
            None => {
                label_poses.push(pose_f32(&se2_relative(&base, &s.pose)));
                label_risks.push(0);
            }
        }
    }

    Ok(FdmSample {
        history_states,
        history_proprio,
        scan: traj.scans[scan_idx].clone(),
        actions,
        label_poses,
        label_risks,
    })
}

pub const STD_FLOOR: f64 = 1e-6;

/// Per-channel proprioception statistics.
#[derive(Debug, Clone, PartialEq)]
pub struct NormStats {
    pub mean: [f64; PROPRIO_DIM],
    pub std: [f64; PROPRIO_DIM],
}

impl NormStats {
    pub fn identity() -> Self {
        Self {
            mean: [0.0; PROPRIO_DIM],
            std: [1.0; PROPRIO_DIM],
        }
    }

    pub fn normalize(&self, v: &[f32; PROPRIO_DIM]) -> [f64; PROPRIO_DIM] {
        std::array::from_fn(|i| (v[i] as f64 - self.mean[i]) / self.std[i])
    }
}

/// Mean and population standard deviation over every history entry.
pub fn compute_norm_stats(samples: &[FdmSample]) -> Result<NormStats> {
    if samples.len() < 2 {
        return Err(FdmError::Empty(format!("need at least 2 samples, got {}", samples.len())));
    }
    let mut sum = [0.0f64; PROPRIO_DIM];
    let mut count = 0.0;
    for s in samples {
        for p in &s.history_proprio {
            for i in 0..PROPRIO_DIM {
                sum[i] += p[i] as f64;
            }
            count += 1.0;
        }
    }
    if count == 0.0 {
        return Err(FdmError::Empty("samples carry no history".into()));
    }
    let mean = sum.map(|s| s / count);
    let mut var = [0.0f64; PROPRIO_DIM];
    for s in samples {
        for p in &s.history_proprio {
            for i in 0..PROPRIO_DIM {
                let d = p[i] as f64 - mean[i];
                var[i] += d * d;
            }
        }
    }
    let std = var.map(|v| (v / count).sqrt().max(STD_FLOOR));
    Ok(NormStats { mean, std })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geom::{ActionBounds, integrate_twist};
    use crate::terrain::{make_proprio_obs, step_dynamics, SimParams, TerrainGrid};

    const DT_H: f64 = 0.05;
    const DT_P: f64 = 0.5;

    fn record(time: f64, pose: Se2Pose, failed: bool, cmd: Twist, scan_ref: Option<usize>) -> TransitionRecord {
        let sim_state = SimState {
            pose,
            body_vel: cmd,
            failed,
            fail_pose: failed.then_some(pose),
        };
        TransitionRecord {
            time,
            sim_state,
            proprio: ProprioObs {
                cmd_twist: cmd,
                projected_gravity: [0.0, 0.0, -1.0],
                base_lin_vel: [cmd.vx, cmd.vy, 0.0],
                base_ang_vel: [0.0, 0.0, cmd.omega],
            },
            scan_ref,
            cmd,
        }
    }

    /// Straight run on a plane through the real simulator, no slip.
    fn straight_run(ticks: usize) -> Trajectory {
        let grid = TerrainGrid::flat(400, 100, 0.1);
        let params = SimParams {
            slip_std: 0.0,
            ..SimParams::default()
        };
        let mut rng = crate::rng::rng_from_seed(0);
        let cmd = Twist::new(1.0, 0.0, 0.0);
        let mut state = SimState::at(Se2Pose::new(2.0, 5.0, 0.0));
        let mut traj = Trajectory::default();
        traj.scans.push(HeightScan::zeros(4, 4));
        for i in 0..ticks {
            traj.records.push(TransitionRecord {
                time: i as f64 * DT_H,
                sim_state: state,
                proprio: make_proprio_obs(&state, &cmd, &grid, &params),
                scan_ref: Some(0),
                cmd,
            });
            state = step_dynamics(&state, &cmd, &grid, &params, &mut rng);
        }
        traj
    }

    #[test]
    fn push_counts_and_evicts_oldest() {
        let mut buf = ReplayBuffer::new(2, DT_H);
        let a = buf.push_trajectory(straight_run(5)).unwrap();
        assert_eq!(buf.len(), 1);
        let b = buf.push_trajectory(straight_run(5)).unwrap();
        let c = buf.push_trajectory(straight_run(5)).unwrap();
        assert_eq!(buf.len(), 2);
        assert!(buf.get(a).is_none());
        assert!(buf.get(b).is_some() && buf.get(c).is_some());
        buf.clear();
        assert_eq!(buf.ids().count(), 0);
        assert!(extract_sample(&buf, b, 0, 10, DT_H, DT_P).is_err());
    }

    #[test]
    fn unordered_records_rejected() {
        let mut t = straight_run(5);
        t.records.swap(1, 2);
        let mut buf = ReplayBuffer::new(4, DT_H);
        assert!(matches!(buf.push_trajectory(t), Err(FdmError::Unordered(_))));
        let mut t = straight_run(5);
        t.records[3].time += 0.01;
        assert!(buf.push_trajectory(t).is_err());
        assert!(buf.is_empty());
    }

    #[test]
    fn straight_run_labels() {
        let mut buf = ReplayBuffer::new(4, DT_H);
        let id = buf.push_trajectory(straight_run(140)).unwrap();
        let s = extract_sample(&buf, id, 20, 10, DT_H, DT_P).unwrap();
        for (k, p) in s.label_poses.iter().enumerate() {
            let want = 0.5 * (k + 1) as f32;
            assert!((p[0] - want).abs() < 1e-5, "step {k}: {p:?}");
            assert!(p[1].abs() < 1e-6 && p[2].abs() < 1e-6);
        }
        assert!(s.label_risks.iter().all(|&r| r == 0));
        // history at 20 Hz ending at the start pose
        assert_eq!(s.history_states[9], [0.0, 0.0, 0.0]);
        assert!((s.history_states[0][0] + 0.45).abs() < 1e-5);
        // same labels as integrating the commanded twists
        let cv = integrate_twist(&Se2Pose::IDENTITY, &s.action_seq(DT_P), None, &ActionBounds::default());
        for (k, p) in cv.poses.iter().enumerate() {
            assert!((p.x - s.label_poses[k][0] as f64).abs() < 1e-5);
        }
    }

    #[test]
    fn history_padded_at_start() {
        let traj = straight_run(140);
        let s = extract_from(&traj, 3, 10, DT_H, DT_P).unwrap();
        // records 0..=3 exist; entries 0..=6 repeat record 0
        let first = se2_relative(&traj.records[3].sim_state.pose, &traj.records[0].sim_state.pose);
        for j in 0..7 {
            assert_eq!(s.history_states[j], pose_f32(&first));
            assert_eq!(s.history_proprio[j], proprio_f32(&traj.records[0].proprio));
        }
        for j in 7..10 {
            let r = &traj.records[j - 6];
            assert_eq!(s.history_states[j], pose_f32(&se2_relative(&traj.records[3].sim_state.pose, &r.sim_state.pose)));
        }
    }

    #[test]
    fn insufficient_future_is_an_error() {
        let traj = straight_run(100);
        assert!(matches!(extract_from(&traj, 0, 10, DT_H, DT_P), Err(FdmError::InsufficientLength(_))));
        assert!(extract_from(&traj, 0, 9, DT_H, DT_P).is_ok());
    }

    #[test]
    fn failure_freezes_labels() {
        // failure lands between label steps 3 and 4 (ticks 41..=50)
        let mut traj = Trajectory::default();
        traj.scans.push(HeightScan::zeros(2, 2));
        let cmd = Twist::new(1.0, 0.0, 0.0);
        let fail_tick = 47;
        let fail_pose = Se2Pose::new(fail_tick as f64 * DT_H, 0.0, 0.0);
        for i in 0..=100 {
            let failed = i >= fail_tick;
            let pose = if failed { fail_pose } else { Se2Pose::new(i as f64 * DT_H, 0.0, 0.0) };
            traj.records.push(record(i as f64 * DT_H, pose, failed, cmd, Some(0)));
        }
        let s = extract_from(&traj, 0, 10, DT_H, DT_P).unwrap();
        assert_eq!(&s.label_risks[..4], &[0, 0, 0, 0]);
        assert!(s.label_risks[4..].iter().all(|&r| r == 1));
        for k in 4..10 {
            assert_eq!(s.label_poses[k], pose_f32(&fail_pose));
        }
        assert!(s.labels_frozen());
    }

    #[test]
    fn stationary_robot_labels_at_origin() {
        let mut traj = Trajectory::default();
        traj.scans.push(HeightScan::zeros(2, 2));
        let p = Se2Pose::new(3.0, -1.0, 2.0);
        for i in 0..=20 {
            traj.records.push(record(i as f64 * DT_H, p, false, Twist::ZERO, Some(0)));
        }
        let s = extract_from(&traj, 0, 2, DT_H, DT_P).unwrap();
        assert_eq!(s.label_poses[0], [0.0, 0.0, 0.0]);
    }

    #[test]
    fn extraction_is_deterministic() {
        let traj = straight_run(140);
        assert_eq!(extract_from(&traj, 25, 10, DT_H, DT_P).unwrap(), extract_from(&traj, 25, 10, DT_H, DT_P).unwrap());
    }

    fn with_channel0(values: &[f32]) -> Vec<FdmSample> {
        values
            .iter()
            .map(|&v| {
                let mut p = [3.5f32; PROPRIO_DIM];
                p[0] = v;
                FdmSample {
                    history_states: vec![[0.0; 3]],
                    history_proprio: vec![p],
                    scan: HeightScan::zeros(1, 1),
                    actions: vec![[0.0; 3]],
                    label_poses: vec![[0.0; 3]],
                    label_risks: vec![0],
                }
            })
            .collect()
    }

    #[test]
    fn norm_stats_examples() {
        let st = compute_norm_stats(&with_channel0(&[0.0, 2.0])).unwrap();
        assert_eq!(st.mean[0], 1.0);
        assert_eq!(st.std[0], 1.0);
        assert_eq!(st.mean[1], 3.5);
        assert_eq!(st.std[1], STD_FLOOR);
        assert!(compute_norm_stats(&[]).is_err());
        assert!(compute_norm_stats(&with_channel0(&[1.0])).is_err());
    }

    #[test]
    fn normalized_dataset_is_standardized() {
        let traj = straight_run(300);
        let mut samples: Vec<FdmSample> = (0..150).map(|t0| extract_from(&traj, t0, 10, DT_H, DT_P).unwrap()).collect();
        // vary channels so every one has spread
        let mut rng = crate::rng::rng_from_seed(3);
        for s in samples.iter_mut() {
            for p in s.history_proprio.iter_mut() {
                for v in p.iter_mut() {
                    *v += rand::Rng::random_range(&mut rng, -1.0..1.0f32);
                }
            }
        }
        let st = compute_norm_stats(&samples).unwrap();
        // recompute moments of the normalized data independently
        let mut m = [0.0f64; PROPRIO_DIM];
        let mut m2 = [0.0f64; PROPRIO_DIM];
        let mut c = 0.0;
        for s in &samples {
            for p in &s.history_proprio {
                let z = st.normalize(p);
                for i in 0..PROPRIO_DIM {
                    m[i] += z[i];
                    m2[i] += z[i] * z[i];
                }
                c += 1.0;
            }
        }
        for i in 0..PROPRIO_DIM {
            let mean = m[i] / c;
            let std = (m2[i] / c - mean * mean).sqrt();
            assert!(mean.abs() < 1e-6, "channel {i} mean {mean}");
            assert!((std - 1.0).abs() < 1e-6, "channel {i} std {std}");
        }
    }
}
