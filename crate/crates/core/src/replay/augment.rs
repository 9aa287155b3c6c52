use rand::Rng;

use super::FdmSample;

/// Half-widths of the uniform noise added per channel, and missing-patch
/// settings for the scan.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AugmentConfig {
    pub gravity: f32,
    pub lin_vel: f32,
    pub ang_vel: f32,
    pub scan: f32,
    pub patch_prob: f64,
    pub patch_max_area: f64,
}

impl Default for AugmentConfig {
    fn default() -> Self {
        Self {
            gravity: 0.05,
            lin_vel: 0.1,
            ang_vel: 0.2,
            scan: 0.1,
            patch_prob: 0.3,
            patch_max_area: 0.25,
        }
    }
}

impl AugmentConfig {
    pub fn none() -> Self {
        Self {
            gravity: 0.0,
            lin_vel: 0.0,
            ang_vel: 0.0,
            scan: 0.0,
            patch_prob: 0.0,
            patch_max_area: 0.0,
        }
    }
}

fn jitter<R: Rng + ?Sized>(half: f32, rng: &mut R) -> f32 {
    if half > 0.0 {
        rng.random_range(-half..=half)
    } else {
        0.0
    }
}

/// Noisy copy of `sample`. Only channels that vary on a rigid planar base are
/// perturbed: all of gravity, linear velocity x/y and yaw rate. The command
/// channels are left alone.
pub fn augment_sample<R: Rng + ?Sized>(sample: &FdmSample, cfg: &AugmentConfig, rng: &mut R) -> FdmSample {
    let mut out = sample.clone();
    for p in out.history_proprio.iter_mut() {
        for g in &mut p[3..6] {
            *g += jitter(cfg.gravity, rng);
        }
        p[6] += jitter(cfg.lin_vel, rng);
        p[7] += jitter(cfg.lin_vel, rng);
        p[11] += jitter(cfg.ang_vel, rng);
    }
    let scan = &mut out.scan;
    if cfg.scan > 0.0 {
        for v in scan.values.iter_mut() {
            *v += jitter(cfg.scan, rng);
        }
    }
    if cfg.patch_prob > 0.0 && cfg.patch_max_area > 0.0 && rng.random_bool(cfg.patch_prob.min(1.0)) {
        let (u, v) = (scan.u, scan.v);
        let max_cells = ((u * v) as f64 * cfg.patch_max_area).floor() as usize;
        if max_cells >= 1 {
            let pu = rng.random_range(1..=u);
            let pv = rng.random_range(1..=(max_cells / pu).clamp(1, v));
            let a0 = rng.random_range(0..=u - pu);
            let b0 = rng.random_range(0..=v - pv);
            // fill with the patch cell closest to the scan centre, standing in
            // for the occluder that would cast the shadow
            let (cu, cv) = ((u as f64 - 1.0) / 2.0, (v as f64 - 1.0) / 2.0);
            let mut near = (a0, b0);
            let mut best = f64::INFINITY;
            for a in a0..a0 + pu {
                for b in b0..b0 + pv {
                    let d = (a as f64 - cu).hypot(b as f64 - cv);
                    if d < best {
                        best = d;
                        near = (a, b);
                    }
                }
            }
            let fill = scan.values[near.0 * v + near.1];
            for a in a0..a0 + pu {
                for b in b0..b0 + pv {
                    scan.values[a * v + b] = fill;
                    scan.occluded[a * v + b] = true;
                }
            }
        }
    }
    out
}
