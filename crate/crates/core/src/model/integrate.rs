//! Batched residual-twist integration with its reverse pass.

use ndarray::{Array2, ArrayView2};

use crate::geom::{cosc_terms, sinc_terms, step_pose, ActionBounds, Se2Pose, Twist};

/// Forward state kept for the reverse pass. Row-major over `(row, step)`.
#[derive(Debug, Clone)]
pub struct IntegrateCache {
    n: usize,
    dt: f64,
    applied: Vec<Twist>,
    /// Axes where the clip was inactive.
    pass: Vec<[bool; 3]>,
    poses: Vec<Se2Pose>,
}

impl IntegrateCache {
    pub fn poses(&self) -> &[Se2Pose] {
        &self.poses
    }

    pub fn applied(&self) -> &[Twist] {
        &self.applied
    }
}

/// Integrates `clip(a + Δa)` from the origin for every row. `actions` holds
/// `B·n` twists row-major, `resid` is `[B, 3n]`.
pub fn integrate_batch(actions: &[[f64; 3]], resid: &ArrayView2<f64>, n: usize, dt: f64, bounds: &ActionBounds) -> IntegrateCache {
    let b = resid.nrows();
    debug_assert_eq!(actions.len(), b * n);
    let mut applied = Vec::with_capacity(b * n);
    let mut pass = Vec::with_capacity(b * n);
    let mut poses = Vec::with_capacity(b * n);
    for i in 0..b {
        let mut pose = Se2Pose::IDENTITY;
        for k in 0..n {
            let a = actions[i * n + k];
            let mut t = [0.0; 3];
            let mut p = [true; 3];
            for c in 0..3 {
                let raw = a[c] + resid[[i, 3 * k + c]];
                t[c] = raw.clamp(bounds.min[c], bounds.max[c]);
                p[c] = raw >= bounds.min[c] && raw <= bounds.max[c];
            }
            let tw = Twist::from_array(t);
            pose = step_pose(&pose, &tw, dt);
            applied.push(tw);
            pass.push(p);
            poses.push(pose);
        }
    }
    IntegrateCache { n, dt, applied, pass, poses }
}

/// Maps gradients on every pose `(x, y, yaw)` back to the residuals.
pub fn integrate_batch_backward(cache: &IntegrateCache, d_poses: &[[f64; 3]]) -> Array2<f64> {
    let n = cache.n;
    let dt = cache.dt;
    let b = cache.poses.len() / n.max(1);
    let mut d_resid = Array2::zeros((b, 3 * n));
    for i in 0..b {
        let (mut gx, mut gy, mut gth) = (0.0, 0.0, 0.0);
        for k in (0..n).rev() {
            let idx = i * n + k;
            gx += d_poses[idx][0];
            gy += d_poses[idx][1];
            gth += d_poses[idx][2];
            let yaw = if k == 0 { 0.0 } else { cache.poses[idx - 1].yaw };
            let (s, c) = yaw.sin_cos();
            let t = cache.applied[idx];
            let phi = t.omega * dt;
            let (sc, dsc) = sinc_terms(phi);
            let (cc, dcc) = cosc_terms(phi);
            let dx = dt * (t.vx * sc - t.vy * cc);
            let dy = dt * (t.vx * cc + t.vy * sc);

            let gdx = gx * c + gy * s;
            let gdy = -gx * s + gy * c;
            let gvx = dt * (gdx * sc + gdy * cc);
            let gvy = dt * (-gdx * cc + gdy * sc);
            let gphi = gth + gdx * dt * (t.vx * dsc - t.vy * dcc) + gdy * dt * (t.vx * dcc + t.vy * dsc);
            let gw = gphi * dt;

            let p = cache.pass[idx];
            for (c_, g) in [gvx, gvy, gw].into_iter().enumerate() {
                d_resid[[i, 3 * k + c_]] = if p[c_] { g } else { 0.0 };
            }
            gth += gx * (-s * dx - c * dy) + gy * (c * dx - s * dy);
        }
    }
    d_resid
}
