//! Planar rigid-body geometry: poses, twists and constant-twist integration.

use std::f64::consts::PI;

/// Twist component bounds applied when commands are clipped.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ActionBounds {
    pub min: [f64; 3],
    pub max: [f64; 3],
}

impl Default for ActionBounds {
    fn default() -> Self {
        Self {
            min: [-1.0, -1.0, -1.0],
            max: [1.0, 1.0, 1.0],
        }
    }
}

impl ActionBounds {
    pub fn clip(&self, t: Twist) -> Twist {
        let a = t.to_array();
        Twist::from_array(std::array::from_fn(|i| a[i].clamp(self.min[i], self.max[i])))
    }

    /// Whether `t` lies within the bounds on every axis.
    pub fn contains(&self, t: &Twist) -> bool {
        let a = t.to_array();
        (0..3).all(|i| a[i] >= self.min[i] && a[i] <= self.max[i])
    }
}

/// Wraps an angle to `(-pi, pi]`.
pub fn wrap_angle(a: f64) -> f64 {
    if a > -PI && a <= PI {
        return a;
    }
    let mut r = a.rem_euclid(2.0 * PI);
    if r > PI {
        r -= 2.0 * PI;
    }
    if r <= -PI {
        r += 2.0 * PI;
    }
    r
}

/// Planar pose. `yaw` is kept in `(-pi, pi]`.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct Se2Pose {
    pub x: f64,
    pub y: f64,
    pub yaw: f64,
}

impl Se2Pose {
    pub const IDENTITY: Se2Pose = Se2Pose {
        x: 0.0,
        y: 0.0,
        yaw: 0.0,
    };

    pub fn new(x: f64, y: f64, yaw: f64) -> Self {
        Self {
            x,
            y,
            yaw: wrap_angle(yaw),
        }
    }

    /// `self ∘ other`: `other` expressed in this frame, mapped to the parent frame.
    pub fn compose(&self, other: &Se2Pose) -> Se2Pose {
        let (s, c) = self.yaw.sin_cos();
        Se2Pose::new(
            self.x + c * other.x - s * other.y,
            self.y + s * other.x + c * other.y,
            self.yaw + other.yaw,
        )
    }

    pub fn inverse(&self) -> Se2Pose {
        let (s, c) = self.yaw.sin_cos();
        Se2Pose::new(
            -c * self.x - s * self.y,
            s * self.x - c * self.y,
            -self.yaw,
        )
    }

    /// Maps a point given in this frame to the parent frame.
    pub fn transform_point(&self, px: f64, py: f64) -> (f64, f64) {
        let (s, c) = self.yaw.sin_cos();
        (self.x + c * px - s * py, self.y + s * px + c * py)
    }

    pub fn distance_xy(&self, other: &Se2Pose) -> f64 {
        (self.x - other.x).hypot(self.y - other.y)
    }

    pub fn to_array(&self) -> [f64; 3] {
        [self.x, self.y, self.yaw]
    }
}

pub fn se2_compose(a: &Se2Pose, b: &Se2Pose) -> Se2Pose {
    a.compose(b)
}

/// `base⁻¹ ∘ world`: the pose `world` expressed in the frame `base`.
pub fn se2_relative(base: &Se2Pose, world: &Se2Pose) -> Se2Pose {
    let (s, c) = base.yaw.sin_cos();
    let dx = world.x - base.x;
    let dy = world.y - base.y;
    Se2Pose::new(c * dx + s * dy, -s * dx + c * dy, world.yaw - base.yaw)
}

/// Body-frame velocity command.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct Twist {
    pub vx: f64,
    pub vy: f64,
    pub omega: f64,
}

impl Twist {
    pub const ZERO: Twist = Twist {
        vx: 0.0,
        vy: 0.0,
        omega: 0.0,
    };

    pub fn new(vx: f64, vy: f64, omega: f64) -> Self {
        Self { vx, vy, omega }
    }

    pub fn to_array(&self) -> [f64; 3] {
        [self.vx, self.vy, self.omega]
    }

    pub fn from_array(a: [f64; 3]) -> Self {
        Self::new(a[0], a[1], a[2])
    }

    pub fn add(&self, o: &Twist) -> Twist {
        Twist::new(self.vx + o.vx, self.vy + o.vy, self.omega + o.omega)
    }
}

/// A fixed-length sequence of twists, each held for `dt` seconds.
#[derive(Debug, Clone, PartialEq)]
pub struct ActionSeq {
    pub twists: Vec<Twist>,
    pub dt: f64,
}

impl ActionSeq {
    pub fn new(twists: Vec<Twist>, dt: f64) -> Self {
        debug_assert!(dt > 0.0);
        Self { twists, dt }
    }

    pub fn constant(t: Twist, n: usize, dt: f64) -> Self {
        Self::new(vec![t; n], dt)
    }

    pub fn len(&self) -> usize {
        self.twists.len()
    }

    pub fn is_empty(&self) -> bool {
        self.twists.is_empty()
    }

    /// Drops the first twist and repeats the last one (warm-start shift).
    pub fn shifted(&self) -> ActionSeq {
        let mut twists: Vec<Twist> = self.twists.iter().skip(1).copied().collect();
        if let Some(last) = self.twists.last() {
            twists.push(*last);
        }
        ActionSeq::new(twists, self.dt)
    }

    pub fn clipped(&self, bounds: &ActionBounds) -> ActionSeq {
        ActionSeq::new(self.twists.iter().map(|t| bounds.clip(*t)).collect(), self.dt)
    }
}

/// Predicted or recorded poses, optionally with per-step failure risk.
#[derive(Debug, Clone, PartialEq)]
pub struct PoseTrajectory {
    pub poses: Vec<Se2Pose>,
    pub risks: Option<Vec<f64>>,
}

impl PoseTrajectory {
    pub fn terminal(&self) -> Option<&Se2Pose> {
        self.poses.last()
    }
}

const SERIES_CUTOFF: f64 = 1e-4;

/// `sin(phi)/phi` and its derivative, exact near zero.
pub(crate) fn sinc_terms(phi: f64) -> (f64, f64) {
    if phi.abs() < SERIES_CUTOFF {
        let p2 = phi * phi;
        (1.0 - p2 / 6.0 + p2 * p2 / 120.0, -phi / 3.0 + phi * p2 / 30.0)
    } else {
        let (s, c) = phi.sin_cos();
        (s / phi, (phi * c - s) / (phi * phi))
    }
}

/// `(1 - cos(phi))/phi` and its derivative, exact near zero.
pub(crate) fn cosc_terms(phi: f64) -> (f64, f64) {
    if phi.abs() < SERIES_CUTOFF {
        let p2 = phi * phi;
        (
            phi / 2.0 - phi * p2 / 24.0 + phi * p2 * p2 / 720.0,
            0.5 - p2 / 8.0 + p2 * p2 / 144.0,
        )
    } else {
        let (s, c) = phi.sin_cos();
        ((1.0 - c) / phi, (phi * s - (1.0 - c)) / (phi * phi))
    }
}

/// Body-frame displacement of holding `t` constant for `dt` (SE(2) exponential).
pub fn twist_displacement(t: &Twist, dt: f64) -> Se2Pose {
    let phi = t.omega * dt;
    let (sc, _) = sinc_terms(phi);
    let (cc, _) = cosc_terms(phi);
    Se2Pose::new(
        dt * (t.vx * sc - t.vy * cc),
        dt * (t.vx * cc + t.vy * sc),
        phi,
    )
}

/// Advances `pose` by the exact exponential of `t` over `dt`.
pub fn step_pose(pose: &Se2Pose, t: &Twist, dt: f64) -> Se2Pose {
    pose.compose(&twist_displacement(t, dt))
}

/// Integrates an action sequence from `start`; the applied twist per step is
/// `clip(a + residual)` when residuals are given, otherwise `a` itself.
pub fn integrate_twist(
    start: &Se2Pose,
    actions: &ActionSeq,
    residuals: Option<&[Twist]>,
    bounds: &ActionBounds,
) -> PoseTrajectory {
    let mut pose = *start;
    let mut poses = Vec::with_capacity(actions.len());
    for (k, a) in actions.twists.iter().enumerate() {
        let applied = match residuals {
            Some(r) => bounds.clip(a.add(&r[k])),
            None => *a,
        };
        pose = step_pose(&pose, &applied, actions.dt);
        poses.push(pose);
    }
    PoseTrajectory { poses, risks: None }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;

    fn close(a: &Se2Pose, b: &Se2Pose, tol: f64) -> bool {
        (a.x - b.x).abs() < tol
            && (a.y - b.y).abs() < tol
            && wrap_angle(a.yaw - b.yaw).abs() < tol
    }

    #[test]
    fn compose_examples() {
        let p = se2_compose(&Se2Pose::IDENTITY, &Se2Pose::new(1.0, 2.0, 0.3));
        assert!(close(&p, &Se2Pose::new(1.0, 2.0, 0.3), 1e-15));
        let p = se2_compose(&Se2Pose::new(1.0, 0.0, 0.0), &Se2Pose::new(1.0, 0.0, 0.0));
        assert!(close(&p, &Se2Pose::new(2.0, 0.0, 0.0), 1e-15));
        let p = se2_compose(&Se2Pose::new(0.0, 0.0, PI / 2.0), &Se2Pose::new(1.0, 0.0, 0.0));
        assert!(close(&p, &Se2Pose::new(0.0, 1.0, PI / 2.0), 1e-15));
    }

    #[test]
    fn relative_examples() {
        let w = Se2Pose::new(3.0, 4.0, 1.0);
        assert!(close(&se2_relative(&w, &w), &Se2Pose::IDENTITY, 1e-15));
        assert!(close(&se2_relative(&Se2Pose::IDENTITY, &w), &w, 1e-15));
        let r = se2_relative(&Se2Pose::new(1.0, 0.0, PI / 2.0), &Se2Pose::new(1.0, 1.0, PI / 2.0));
        assert!(close(&r, &Se2Pose::new(1.0, 0.0, 0.0), 1e-15));
    }

    #[test]
    fn wrap_is_half_open() {
        assert_eq!(wrap_angle(PI), PI);
        assert_abs_diff_eq!(wrap_angle(-PI), PI, epsilon = 1e-15);
        assert_abs_diff_eq!(wrap_angle(3.0 * PI), PI, epsilon = 1e-12);
        assert_abs_diff_eq!(wrap_angle(2.5), 2.5);
    }

    #[test]
    fn integrate_straight_and_spin() {
        let b = ActionBounds::default();
        let seq = ActionSeq::constant(Twist::new(1.0, 0.0, 0.0), 10, 0.5);
        let tr = integrate_twist(&Se2Pose::IDENTITY, &seq, None, &b);
        assert!(close(tr.terminal().unwrap(), &Se2Pose::new(5.0, 0.0, 0.0), 1e-12));

        let seq = ActionSeq::constant(Twist::new(0.0, 0.0, 0.5), 10, 0.5);
        let tr = integrate_twist(&Se2Pose::IDENTITY, &seq, None, &b);
        let end = tr.terminal().unwrap();
        assert_abs_diff_eq!(end.x, 0.0);
        assert_abs_diff_eq!(end.y, 0.0);
        assert_abs_diff_eq!(end.yaw, 2.5, epsilon = 1e-12);
    }

    #[test]
    fn integrate_arc_matches_hand_exponential() {
        // vx = 1, omega = pi held 0.5 s: quarter circle of radius 1/pi.
        let seq = ActionSeq::constant(Twist::new(1.0, 0.0, PI), 1, 0.5);
        let bounds = ActionBounds {
            min: [-1.0, -1.0, -4.0],
            max: [1.0, 1.0, 4.0],
        };
        let tr = integrate_twist(&Se2Pose::IDENTITY, &seq, None, &bounds);
        let end = tr.poses[0];
        assert_abs_diff_eq!(end.x, 1.0 / PI, epsilon = 1e-14);
        assert_abs_diff_eq!(end.y, 1.0 / PI, epsilon = 1e-14);
        assert_abs_diff_eq!(end.yaw, PI / 2.0, epsilon = 1e-14);
    }

    #[test]
    fn residuals_are_clipped() {
        let b = ActionBounds::default();
        let seq = ActionSeq::constant(Twist::new(1.0, 0.0, 0.0), 2, 0.5);
        let res = vec![Twist::new(0.5, 0.0, 0.0); 2];
        let tr = integrate_twist(&Se2Pose::IDENTITY, &seq, Some(&res), &b);
        assert_abs_diff_eq!(tr.poses[1].x, 1.0, epsilon = 1e-15);
    }

    #[test]
    fn series_branch_is_continuous() {
        for &phi in &[1e-4, 1.0001e-4, 9.999e-5, -1e-4] {
            let (s1, d1) = sinc_terms(phi);
            let (c1, e1) = cosc_terms(phi);
            let (s, c) = (phi as f64).sin_cos();
            assert_abs_diff_eq!(s1, s / phi, epsilon = 1e-13);
            assert_abs_diff_eq!(c1, (1.0 - c) / phi, epsilon = 1e-12);
            assert_abs_diff_eq!(d1, -phi / 3.0, epsilon = 1e-10);
            assert_abs_diff_eq!(e1, 0.5, epsilon = 1e-8);
        }
    }

    fn pose_strategy() -> impl Strategy<Value = Se2Pose> {
        (-10.0..10.0f64, -10.0..10.0f64, -PI..PI).prop_map(|(x, y, t)| Se2Pose::new(x, y, t))
    }

    proptest! {
        #[test]
        fn relative_round_trips(base in pose_strategy(), world in pose_strategy()) {
            let back = se2_compose(&base, &se2_relative(&base, &world));
            prop_assert!(close(&back, &world, 1e-12));
        }

        #[test]
        fn compose_is_associative(a in pose_strategy(), b in pose_strategy(), c in pose_strategy()) {
            let l = a.compose(&b).compose(&c);
            let r = a.compose(&b.compose(&c));
            prop_assert!(close(&l, &r, 1e-10));
        }

        #[test]
        fn identity_is_neutral(a in pose_strategy()) {
            prop_assert!(close(&a.compose(&Se2Pose::IDENTITY), &a, 1e-15));
            prop_assert!(a.yaw > -PI && a.yaw <= PI);
        }

        #[test]
        fn zero_twists_stay_put(start in pose_strategy(), n in 1usize..12) {
            let seq = ActionSeq::constant(Twist::ZERO, n, 0.5);
            let tr = integrate_twist(&start, &seq, None, &ActionBounds::default());
            prop_assert_eq!(tr.poses.len(), n);
            for p in &tr.poses {
                prop_assert!(close(p, &start, 1e-15));
            }
        }

        #[test]
        fn straight_line_without_rotation(start in pose_strategy(), vx in -1.0..1.0f64, n in 1usize..12) {
            let seq = ActionSeq::constant(Twist::new(vx, 0.0, 0.0), n, 0.5);
            let tr = integrate_twist(&start, &seq, None, &ActionBounds::default());
            for (k, p) in tr.poses.iter().enumerate() {
                let d = vx * 0.5 * (k + 1) as f64;
                let (ex, ey) = start.transform_point(d, 0.0);
                prop_assert!((p.x - ex).abs() < 1e-12 && (p.y - ey).abs() < 1e-12);
            }
        }
    }
}
