use rand::Rng;
use rand_distr::{Distribution, Normal};

use super::TerrainGrid;
use crate::geom::{step_pose, Se2Pose, Twist};

/// Ground-truth dynamics parameters of the disc robot.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SimParams {
    pub traction_flat: f64,
    pub traction_rough: f64,
    pub slip_std: f64,
    pub max_step_height: f64,
    pub max_slope: f64,
    pub footprint_radius: f64,
    pub dt_sim: f64,
    /// Per-episode traction is scaled by `U(1 - jitter, 1)` during collection.
    pub traction_jitter: f64,
    /// Height range under the footprint above which the ground counts as rough.
    pub rough_threshold: f64,
    pub seed: u64,
}

impl Default for SimParams {
    fn default() -> Self {
        Self {
            traction_flat: 1.0,
            traction_rough: 0.6,
            slip_std: 0.02,
            max_step_height: 0.25,
            max_slope: 0.7,
            footprint_radius: 0.3,
            dt_sim: 0.05,
            traction_jitter: 0.15,
            rough_threshold: 0.04,
            seed: 0,
        }
    }
}

impl SimParams {
    /// Low-traction, slippery regime unseen by the default preset.
    pub fn shifted() -> Self {
        Self {
            traction_flat: 0.6,
            traction_rough: 0.4,
            slip_std: 0.1,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<(), String> {
        let ok_traction = |t: f64| t > 0.0 && t <= 1.0;
        if !ok_traction(self.traction_flat) || !ok_traction(self.traction_rough) {
            return Err("traction gains must lie in (0, 1]".into());
        }
        if !(self.dt_sim > 0.0) {
            return Err("dt_sim must be positive".into());
        }
        if self.slip_std < 0.0 || self.footprint_radius <= 0.0 || !(0.0..1.0).contains(&self.traction_jitter) {
            return Err("slip_std, footprint_radius or traction_jitter out of range".into());
        }
        Ok(())
    }

    /// Copy with both traction gains scaled by `factor`.
    pub fn with_traction_scale(&self, factor: f64) -> Self {
        Self {
            traction_flat: (self.traction_flat * factor).clamp(1e-3, 1.0),
            traction_rough: (self.traction_rough * factor).clamp(1e-3, 1.0),
            ..*self
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SimState {
    pub pose: Se2Pose,
    pub body_vel: Twist,
    pub failed: bool,
    pub fail_pose: Option<Se2Pose>,
}

impl SimState {
    pub fn at(pose: Se2Pose) -> Self {
        Self {
            pose,
            body_vel: Twist::ZERO,
            failed: false,
            fail_pose: None,
        }
    }
}

/// Summary of the terrain under the robot's disc.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FootprintStats {
    pub out_of_bounds: bool,
    pub max_jump: f64,
    pub min_height: f64,
    pub max_height: f64,
    pub mean_height: f64,
    /// Least-squares plane gradient (dh/dx, dh/dy) in the world frame.
    pub gradient: (f64, f64),
}

/// Scans the cells whose centers fall within the footprint disc.
pub fn footprint_stats(pose: &Se2Pose, grid: &TerrainGrid, radius: f64) -> FootprintStats {
    let cs = grid.cell_size;
    let r2 = radius * radius;
    let i0 = ((pose.x - radius) / cs).floor() as i64;
    let i1 = ((pose.x + radius) / cs).floor() as i64;
    let j0 = ((pose.y - radius) / cs).floor() as i64;
    let j1 = ((pose.y + radius) / cs).floor() as i64;
    let inside = |i: i64, j: i64| {
        let cx = (i as f64 + 0.5) * cs - pose.x;
        let cy = (j as f64 + 0.5) * cs - pose.y;
        cx * cx + cy * cy <= r2
    };
    let in_grid = |i: i64, j: i64| i >= 0 && j >= 0 && (i as usize) < grid.width && (j as usize) < grid.height;

    let mut out = false;
    let mut max_jump = 0.0f64;
    let (mut lo, mut hi) = (f64::INFINITY, f64::NEG_INFINITY);
    // normal-equation sums for h = a·dx + b·dy + c
    let (mut sxx, mut sxy, mut syy, mut sx, mut sy, mut n) = (0.0, 0.0, 0.0, 0.0, 0.0, 0.0);
    let (mut sxh, mut syh, mut sh) = (0.0, 0.0, 0.0);
    for j in j0..=j1 {
        for i in i0..=i1 {
            if !inside(i, j) {
                continue;
            }
            if !in_grid(i, j) {
                out = true;
                continue;
            }
            let h = grid.get(i as usize, j as usize);
            lo = lo.min(h);
            hi = hi.max(h);
            for (ni, nj) in [(i + 1, j), (i, j + 1)] {
                if inside(ni, nj) && in_grid(ni, nj) {
                    max_jump = max_jump.max((grid.get(ni as usize, nj as usize) - h).abs());
                }
            }
            let dx = (i as f64 + 0.5) * cs - pose.x;
            let dy = (j as f64 + 0.5) * cs - pose.y;
            sxx += dx * dx;
            sxy += dx * dy;
            syy += dy * dy;
            sx += dx;
            sy += dy;
            n += 1.0;
            sxh += dx * h;
            syh += dy * h;
            sh += h;
        }
    }
    if n == 0.0 {
        return FootprintStats {
            out_of_bounds: true,
            max_jump: 0.0,
            min_height: 0.0,
            max_height: 0.0,
            mean_height: 0.0,
            gradient: (0.0, 0.0),
        };
    }
    // solve [sxx sxy sx; sxy syy sy; sx sy n] [a b c]ᵀ = [sxh syh sh]ᵀ
    let m = [[sxx, sxy, sx], [sxy, syy, sy], [sx, sy, n]];
    let rhs = [sxh, syh, sh];
    let det3 = |m: &[[f64; 3]; 3]| {
        m[0][0] * (m[1][1] * m[2][2] - m[1][2] * m[2][1]) - m[0][1] * (m[1][0] * m[2][2] - m[1][2] * m[2][0])
            + m[0][2] * (m[1][0] * m[2][1] - m[1][1] * m[2][0])
    };
    let d = det3(&m);
    let gradient = if d.abs() < 1e-12 {
        (0.0, 0.0)
    } else {
        let mut ma = m;
        let mut mb = m;
        for r in 0..3 {
            ma[r][0] = rhs[r];
            mb[r][1] = rhs[r];
        }
        (det3(&ma) / d, det3(&mb) / d)
    };
    FootprintStats {
        out_of_bounds: out,
        max_jump,
        min_height: lo,
        max_height: hi,
        mean_height: sh / n,
        gradient,
    }
}

/// True iff the disc at `pose` straddles a height jump above the step limit,
/// faces a slope steeper than the slope limit, or leaves the grid.
pub fn check_failure(pose: &Se2Pose, grid: &TerrainGrid, params: &SimParams) -> bool {
    let st = footprint_stats(pose, grid, params.footprint_radius);
    if st.out_of_bounds {
        return true;
    }
    if st.max_jump > params.max_step_height {
        return true;
    }
    let (s, c) = pose.yaw.sin_cos();
    let along = st.gradient.0 * c + st.gradient.1 * s;
    along.abs() > params.max_slope
}

pub fn is_rough(pose: &Se2Pose, grid: &TerrainGrid, params: &SimParams) -> bool {
    let st = footprint_stats(pose, grid, params.footprint_radius);
    st.max_height - st.min_height > params.rough_threshold
}

/// One simulator tick. Failure is absorbing: a failed state is returned as is.
pub fn step_dynamics<R: Rng + ?Sized>(
    state: &SimState,
    cmd: &Twist,
    grid: &TerrainGrid,
    params: &SimParams,
    rng: &mut R,
) -> SimState {
    if state.failed {
        return *state;
    }
    let traction = if is_rough(&state.pose, grid, params) {
        params.traction_rough
    } else {
        params.traction_flat
    };
    let mut realized = Twist::new(cmd.vx * traction, cmd.vy * traction, cmd.omega * traction);
    if params.slip_std > 0.0 {
        let slip = Normal::new(0.0, params.slip_std).expect("finite slip std");
        realized.vx += slip.sample(rng);
        realized.vy += slip.sample(rng);
    }
    let pose = step_pose(&state.pose, &realized, params.dt_sim);
    if check_failure(&pose, grid, params) {
        SimState {
            pose,
            body_vel: Twist::ZERO,
            failed: true,
            fail_pose: Some(pose),
        }
    } else {
        SimState {
            pose,
            body_vel: realized,
            failed: false,
            fail_pose: None,
        }
    }
}

pub const PROPRIO_DIM: usize = 12;

/// Proprioceptive reading: command, gravity direction in the body frame and
/// realized body velocities.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ProprioObs {
    pub cmd_twist: Twist,
    pub projected_gravity: [f64; 3],
    pub base_lin_vel: [f64; 3],
    pub base_ang_vel: [f64; 3],
}

impl ProprioObs {
    pub fn to_array(&self) -> [f64; PROPRIO_DIM] {
        let c = self.cmd_twist.to_array();
        let g = self.projected_gravity;
        let l = self.base_lin_vel;
        let a = self.base_ang_vel;
        [c[0], c[1], c[2], g[0], g[1], g[2], l[0], l[1], l[2], a[0], a[1], a[2]]
    }

    pub fn from_array(v: &[f64; PROPRIO_DIM]) -> Self {
        Self {
            cmd_twist: Twist::new(v[0], v[1], v[2]),
            projected_gravity: [v[3], v[4], v[5]],
            base_lin_vel: [v[6], v[7], v[8]],
            base_ang_vel: [v[9], v[10], v[11]],
        }
    }
}

fn cross(a: [f64; 3], b: [f64; 3]) -> [f64; 3] {
    [
        a[1] * b[2] - a[2] * b[1],
        a[2] * b[0] - a[0] * b[2],
        a[0] * b[1] - a[1] * b[0],
    ]
}

fn dot(a: [f64; 3], b: [f64; 3]) -> f64 {
    a[0] * b[0] + a[1] * b[1] + a[2] * b[2]
}

fn normalize(a: [f64; 3]) -> [f64; 3] {
    let n = dot(a, a).sqrt();
    [a[0] / n, a[1] / n, a[2] / n]
}

/// Gravity `(0, 0, -1)` in a body frame whose z axis is the terrain normal
/// under the footprint and whose x axis is the heading projected onto it.
pub fn projected_gravity(pose: &Se2Pose, grid: &TerrainGrid, radius: f64) -> [f64; 3] {
    let st = footprint_stats(pose, grid, radius);
    let (gx, gy) = st.gradient;
    let bz = normalize([-gx, -gy, 1.0]);
    let (s, c) = pose.yaw.sin_cos();
    let h = [c, s, 0.0];
    let hn = dot(h, bz);
    let bx = normalize([h[0] - hn * bz[0], h[1] - hn * bz[1], h[2] - hn * bz[2]]);
    let by = cross(bz, bx);
    let g = [0.0, 0.0, -1.0];
    [dot(g, bx), dot(g, by), dot(g, bz)]
}

pub fn make_proprio_obs(state: &SimState, cmd: &Twist, grid: &TerrainGrid, params: &SimParams) -> ProprioObs {
    let v = state.body_vel;
    ProprioObs {
        cmd_twist: *cmd,
        projected_gravity: projected_gravity(&state.pose, grid, params.footprint_radius),
        base_lin_vel: [v.vx, v.vy, 0.0],
        base_ang_vel: [0.0, 0.0, v.omega],
    }
}

/// Uniformly drawn pose that does not start in a failure state.
pub fn sample_free_pose<R: Rng + ?Sized>(grid: &TerrainGrid, params: &SimParams, rng: &mut R) -> Option<Se2Pose> {
    let (w, h) = grid.extent();
    let m = params.footprint_radius + 0.3;
    for _ in 0..1000 {
        let pose = Se2Pose::new(
            rng.random_range(m..w - m),
            rng.random_range(m..h - m),
            rng.random_range(-std::f64::consts::PI..std::f64::consts::PI),
        );
        if !check_failure(&pose, grid, params) {
            return Some(pose);
        }
    }
    None
}
