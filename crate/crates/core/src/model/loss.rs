//! Pose, risk and stop losses.

use super::{FdmConfig, FdmPrediction};
use crate::error::{FdmError, Result};
use crate::geom::Se2Pose;
use crate::nn::sigmoid;
use crate::replay::FdmSample;

const PROB_CLAMP: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct Losses {
    pub pose: f64,
    pub risk: f64,
    pub stop: f64,
    pub total: f64,
}

impl Losses {
    pub fn weighted(pose: f64, risk: f64, stop: f64, cfg: &FdmConfig) -> Self {
        Self {
            pose,
            risk,
            stop,
            total: cfg.w_pose * pose + cfg.w_risk * risk + cfg.w_stop * stop,
        }
    }

    pub fn is_finite(&self) -> bool {
        self.pose.is_finite() && self.risk.is_finite() && self.stop.is_finite() && self.total.is_finite()
    }
}

/// Supervision targets for one sample.
#[derive(Debug, Clone, PartialEq)]
pub struct FdmLabels {
    pub poses: Vec<Se2Pose>,
    pub risks: Vec<f64>,
}

impl From<&FdmSample> for FdmLabels {
    fn from(s: &FdmSample) -> Self {
        Self {
            poses: (0..s.horizon()).map(|k| s.label_pose(k)).collect(),
            risks: s.label_risks.iter().map(|&r| r as f64).collect(),
        }
    }
}

/// Losses with gradients on poses and risk logits, all over `B·n` entries.
#[derive(Debug, Clone)]
pub struct LossTerms {
    pub losses: Losses,
    pub d_poses: Vec<[f64; 3]>,
    pub d_logits: Vec<f64>,
    /// Steps that entered the stop loss.
    pub gate: Vec<bool>,
}

fn features(p: &Se2Pose) -> [f64; 4] {
    let (s, c) = p.yaw.sin_cos();
    [p.x, p.y, s, c]
}

fn pose_sq(p: &Se2Pose, l: &Se2Pose) -> f64 {
    let (a, b) = (features(p), features(l));
    (0..4).map(|i| (a[i] - b[i]).powi(2)).sum()
}

/// Gradient of `pose_sq` with respect to `(x, y, yaw)` of `p`.
fn pose_sq_grad(p: &Se2Pose, l: &Se2Pose) -> [f64; 3] {
    let (a, b) = (features(p), features(l));
    let (s, c) = (a[2], a[3]);
    [
        2.0 * (a[0] - b[0]),
        2.0 * (a[1] - b[1]),
        2.0 * (a[2] - b[2]) * c - 2.0 * (a[3] - b[3]) * s,
    ]
}

/// Pose and gated stop losses plus their pose gradients (unweighted).
fn pose_and_stop(poses: &[Se2Pose], labels: &[Se2Pose], gate: &[bool]) -> (f64, f64, Vec<[f64; 3]>, Vec<[f64; 3]>) {
    let m = poses.len() as f64;
    let gated = gate.iter().filter(|&&g| g).count() as f64;
    let mut pose = 0.0;
    let mut stop = 0.0;
    let mut dp = Vec::with_capacity(poses.len());
    let mut ds = Vec::with_capacity(poses.len());
    for ((p, l), &g) in poses.iter().zip(labels).zip(gate) {
        let sq = pose_sq(p, l);
        let gr = pose_sq_grad(p, l);
        pose += sq;
        dp.push(gr.map(|v| v / (4.0 * m)));
        if g {
            stop += sq;
            ds.push(gr.map(|v| v / (4.0 * gated)));
        } else {
            ds.push([0.0; 3]);
        }
    }
    let stop = if gated > 0.0 { stop / (4.0 * gated) } else { 0.0 };
    (pose / (4.0 * m), stop, dp, ds)
}

/// Loss terms from risk logits. BCE is evaluated in the logit domain. The
/// stop gate is `σ(logit) > δ_risk` unless `gate` fixes it.
pub fn loss_terms_from_logits(
    poses: &[Se2Pose],
    logits: &[f64],
    label_poses: &[Se2Pose],
    label_risks: &[f64],
    gate: Option<&[bool]>,
    cfg: &FdmConfig,
) -> LossTerms {
    let m = poses.len();
    let gate: Vec<bool> = match gate {
        Some(g) => g.to_vec(),
        None => logits.iter().map(|&z| sigmoid(z) > cfg.delta_risk).collect(),
    };
    let (pose, stop, dp, ds) = pose_and_stop(poses, label_poses, &gate);
    let mut risk = 0.0;
    let mut d_logits = Vec::with_capacity(m);
    for (&z, &y) in logits.iter().zip(label_risks) {
        // max(z, 0) - z·y + ln(1 + e^{-|z|})
        risk += z.max(0.0) - z * y + (-z.abs()).exp().ln_1p();
        d_logits.push(cfg.w_risk * (sigmoid(z) - y) / m as f64);
    }
    let risk = risk / m as f64;
    let d_poses = dp
        .iter()
        .zip(&ds)
        .map(|(a, b)| std::array::from_fn(|i| cfg.w_pose * a[i] + cfg.w_stop * b[i]))
        .collect();
    LossTerms {
        losses: Losses::weighted(pose, risk, stop, cfg),
        d_poses,
        d_logits,
        gate,
    }
}

fn bce(r: f64, y: f64) -> f64 {
    let r = r.clamp(PROB_CLAMP, 1.0 - PROB_CLAMP);
    let pos = if y > 0.0 { -y * r.ln() } else { 0.0 };
    let neg = if y < 1.0 { -(1.0 - y) * (1.0 - r).ln() } else { 0.0 };
    pos + neg
}

/// Mean losses over a set of predictions from their risk probabilities.
pub fn compute_losses(preds: &[FdmPrediction], labels: &[FdmLabels], cfg: &FdmConfig) -> Result<Losses> {
    if preds.len() != labels.len() || preds.is_empty() {
        return Err(FdmError::Shape(format!("{} predictions for {} labels", preds.len(), labels.len())));
    }
    let mut poses = Vec::new();
    let mut lposes = Vec::new();
    let mut risk = 0.0;
    let mut gate = Vec::new();
    for (p, l) in preds.iter().zip(labels) {
        let n = p.poses.len();
        if l.poses.len() != n || l.risks.len() != n || p.risks.len() != n {
            return Err(FdmError::Shape(format!("label length {} for horizon {n}", l.poses.len())));
        }
        poses.extend_from_slice(&p.poses);
        lposes.extend_from_slice(&l.poses);
        for (&r, &y) in p.risks.iter().zip(&l.risks) {
            risk += bce(r, y);
            gate.push(r > cfg.delta_risk);
        }
    }
    let (pose, stop, _, _) = pose_and_stop(&poses, &lposes, &gate);
    Ok(Losses::weighted(pose, risk / poses.len() as f64, stop, cfg))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geom::Twist;
    use crate::nn::finite_diff_vector;
    use std::f64::consts::PI;

    fn pred(poses: Vec<Se2Pose>, risks: Vec<f64>) -> FdmPrediction {
        let n = poses.len();
        FdmPrediction {
            residual_twists: vec![Twist::ZERO; n],
            applied_twists: vec![Twist::ZERO; n],
            poses,
            risks,
        }
    }

    #[test]
    fn perfect_prediction_has_zero_loss() {
        let poses = vec![Se2Pose::new(0.5, 0.1, 0.2), Se2Pose::new(1.0, 0.3, -0.4)];
        let l = FdmLabels {
            poses: poses.clone(),
            risks: vec![0.0, 1.0],
        };
        let got = compute_losses(&[pred(poses, vec![0.0, 1.0])], &[l], &FdmConfig::default()).unwrap();
        assert_eq!(got.pose, 0.0);
        assert!(got.risk < 1e-10);
        assert_eq!(got.stop, 0.0);
        assert!(got.total < 1e-10);
    }

    #[test]
    fn half_probability_costs_ln2() {
        let p = vec![Se2Pose::IDENTITY];
        let l = FdmLabels {
            poses: p.clone(),
            risks: vec![1.0],
        };
        let got = compute_losses(&[pred(p.clone(), vec![0.5])], &[l], &FdmConfig::default()).unwrap();
        assert!((got.risk - std::f64::consts::LN_2).abs() < 1e-12);
        // logit 0 is the same point
        let t = loss_terms_from_logits(&p, &[0.0], &p, &[1.0], None, &FdmConfig::default());
        assert!((t.losses.risk - 0.6931471805599453).abs() < 1e-12);
    }

    #[test]
    fn stop_loss_needs_a_confident_failure() {
        let cfg = FdmConfig::default();
        let p = vec![Se2Pose::new(1.0, 0.0, 0.0), Se2Pose::new(2.0, 0.0, 0.0)];
        let l = vec![Se2Pose::new(1.0, 0.0, 0.0), Se2Pose::new(1.0, 0.0, 0.0)];
        let lab = FdmLabels {
            poses: l.clone(),
            risks: vec![0.0, 1.0],
        };
        let low = compute_losses(&[pred(p.clone(), vec![0.1, 0.4])], &[lab.clone()], &cfg).unwrap();
        assert_eq!(low.stop, 0.0);
        let high = compute_losses(&[pred(p.clone(), vec![0.1, 0.9])], &[lab], &cfg).unwrap();
        // one gated step, (2 - 1)^2 over 4 features
        assert!((high.stop - 0.25).abs() < 1e-12);
        assert!((high.pose - 0.125).abs() < 1e-12);
    }

    #[test]
    fn yaw_encoding_is_continuous_across_pi() {
        let a = Se2Pose {
            x: 0.0,
            y: 0.0,
            yaw: PI - 1e-6,
        };
        let b = Se2Pose {
            x: 0.0,
            y: 0.0,
            yaw: -PI + 1e-6,
        };
        let l = FdmLabels {
            poses: vec![b],
            risks: vec![0.0],
        };
        let got = compute_losses(&[pred(vec![a], vec![0.0])], &[l], &FdmConfig::default()).unwrap();
        assert!(got.pose < 1e-11, "{}", got.pose);
    }

    #[test]
    fn total_is_zero_only_with_all_parts_zero() {
        let cfg = FdmConfig::default();
        let p = vec![Se2Pose::new(0.1, 0.0, 0.0)];
        let l = FdmLabels {
            poses: vec![Se2Pose::IDENTITY],
            risks: vec![0.0],
        };
        let got = compute_losses(&[pred(p, vec![0.0])], &[l], &cfg).unwrap();
        assert!(got.total > 0.0 && got.pose > 0.0);
    }

    #[test]
    fn gradients_match_differences() {
        let cfg = FdmConfig::default();
        let lp = vec![Se2Pose::new(0.3, -0.2, 2.9), Se2Pose::new(0.9, 0.4, -1.0), Se2Pose::new(1.0, 0.1, 0.5)];
        let risks = [0.0, 1.0, 1.0];
        let gate = [false, true, true];
        let x0 = vec![0.1, 0.0, 3.0, 1.0, 0.5, -0.7, 1.2, 0.0, 0.4, -0.3, 2.0, 0.8];
        let f = |x: &[f64]| {
            let poses: Vec<Se2Pose> = (0..3).map(|k| Se2Pose { x: x[3 * k], y: x[3 * k + 1], yaw: x[3 * k + 2] }).collect();
            loss_terms_from_logits(&poses, &x[9..], &lp, &risks, Some(&gate), &cfg).losses.total
        };
        let poses: Vec<Se2Pose> = (0..3).map(|k| Se2Pose { x: x0[3 * k], y: x0[3 * k + 1], yaw: x0[3 * k + 2] }).collect();
        let t = loss_terms_from_logits(&poses, &x0[9..], &lp, &risks, Some(&gate), &cfg);
        let mut g: Vec<f64> = t.d_poses.iter().flatten().copied().collect();
        g.extend(&t.d_logits);
        let rep = finite_diff_vector(f, &x0, &g, 1e-6);
        assert!(rep.max_rel_error < 1e-6, "{rep:?}");
    }
}
