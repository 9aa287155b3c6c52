//! Prediction accuracy of the model against the constant-velocity baseline.

use super::{constant_velocity_predict, failure_confusion, mean_std, quantile_sorted, Confusion, EvalConfig};
use crate::error::Result;
use crate::geom::Se2Pose;
use crate::model::{collect_dataset, CollectConfig, Fdm, FdmConfig};
use crate::par::{map_indexed, Parallelism};
use crate::plot::{box_chart, line_chart, Series};
use crate::replay::FdmSample;
use crate::rng::derive_seed;
use crate::terrain::TerrainKind;

#[derive(Debug, Clone, PartialEq)]
pub struct FdmMetrics {
    pub samples: usize,
    /// Position error per prediction step.
    pub step_mean: Vec<f64>,
    pub step_std: Vec<f64>,
    pub final_mean: f64,
    /// Final-step error: min, 25%, 50%, 75% and 95% quantiles.
    pub final_quantiles: [f64; 5],
    /// Absent for models without a risk output.
    pub confusion: Option<Confusion>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FdmEnvReport {
    pub kind: TerrainKind,
    pub fdm: FdmMetrics,
    pub cv: FdmMetrics,
}

/// Held-out samples of one terrain kind: terrains and episodes seeded from
/// `ecfg`, not from the training run.
pub fn heldout_samples(cfg: &FdmConfig, ccfg: &CollectConfig, ecfg: &EvalConfig, kind: TerrainKind, count: usize, par: Parallelism) -> Result<Vec<FdmSample>> {
    let c = CollectConfig {
        kinds: vec![kind],
        terrain_seed: ecfg.terrain_seed,
        terrains_per_kind: ecfg.terrains_per_kind,
        ..ccfg.clone()
    };
    collect_dataset(cfg, &c, count, 0.0, None, derive_seed(ecfg.seed, kind as u64), par)
}

/// Errors of predicted poses against the sample labels.
pub fn fdm_metrics(poses: &[Vec<Se2Pose>], risks: Option<&[Vec<f64>]>, samples: &[FdmSample], delta_risk: f64) -> Result<FdmMetrics> {
    let n = samples.first().map_or(0, |s| s.horizon());
    let mut per_step = vec![Vec::with_capacity(samples.len()); n];
    for (p, s) in poses.iter().zip(samples) {
        for (k, errs) in per_step.iter_mut().enumerate() {
            errs.push(p[k].distance_xy(&s.label_pose(k)));
        }
    }
    let (step_mean, step_std): (Vec<f64>, Vec<f64>) = per_step.iter().map(|v| mean_std(v)).unzip();
    let mut last = per_step.last().cloned().unwrap_or_default();
    let final_mean = mean_std(&last).0;
    last.sort_by(f64::total_cmp);
    let final_quantiles = [0.0, 0.25, 0.5, 0.75, 0.95].map(|q| quantile_sorted(&last, q));
    let confusion = match risks {
        Some(r) => {
            let labels: Vec<bool> = samples.iter().map(|s| s.failed()).collect();
            Some(failure_confusion(r, &labels, delta_risk)?)
        }
        None => None,
    };
    Ok(FdmMetrics {
        samples: samples.len(),
        step_mean,
        step_std,
        final_mean,
        final_quantiles,
        confusion,
    })
}

/// Model and constant-velocity metrics on `samples`.
pub fn evaluate_on(fdm: &Fdm, samples: &[FdmSample], par: Parallelism) -> Result<(FdmMetrics, FdmMetrics)> {
    let preds = fdm.predict_samples(samples, par)?;
    let poses: Vec<Vec<Se2Pose>> = preds.iter().map(|p| p.poses.clone()).collect();
    let risks: Vec<Vec<f64>> = preds.into_iter().map(|p| p.risks).collect();
    let m = fdm_metrics(&poses, Some(&risks), samples, fdm.cfg.delta_risk)?;
    let cv_poses: Vec<Vec<Se2Pose>> = map_indexed(samples.len(), par, |i| constant_velocity_predict(&samples[i].action_seq(fdm.cfg.dt_p)).poses);
    let cv = fdm_metrics(&cv_poses, None, samples, fdm.cfg.delta_risk)?;
    Ok((m, cv))
}

pub fn run_fdm_benchmark(fdm: &Fdm, ccfg: &CollectConfig, ecfg: &EvalConfig, par: Parallelism) -> Result<Vec<FdmEnvReport>> {
    ecfg.validate()?;
    ecfg.kinds
        .iter()
        .map(|&kind| {
            let samples = heldout_samples(&fdm.cfg, ccfg, ecfg, kind, ecfg.samples_per_env, par)?;
            let (m, cv) = evaluate_on(fdm, &samples, par)?;
            Ok(FdmEnvReport { kind, fdm: m, cv })
        })
        .collect()
}

pub const FDM_REPORT_HEADER: &str =
    "env,model,samples,final_mean,final_q25,final_q50,final_q75,final_q95,precision,recall,accuracy,f1,precision_undefined";

fn metrics_row(env: &str, model: &str, m: &FdmMetrics) -> String {
    let q = m.final_quantiles;
    let cls = match &m.confusion {
        Some(c) => format!(
            "{:.6},{:.6},{:.6},{:.6},{}",
            c.precision(),
            c.recall(),
            c.accuracy(),
            c.f1(),
            u8::from(c.precision_undefined())
        ),
        None => ",,,,".to_string(),
    };
    format!("{env},{model},{},{:.6},{:.6},{:.6},{:.6},{:.6},{cls}", m.samples, m.final_mean, q[1], q[2], q[3], q[4])
}

/// One row per environment and model.
pub fn fdm_report_csv(reports: &[FdmEnvReport], label: &str) -> String {
    let mut out = format!("{FDM_REPORT_HEADER}\n");
    for r in reports {
        out.push_str(&metrics_row(r.kind.as_str(), label, &r.fdm));
        out.push('\n');
        out.push_str(&metrics_row(r.kind.as_str(), "constant_velocity", &r.cv));
        out.push('\n');
    }
    out
}

pub fn step_error_csv(reports: &[FdmEnvReport], label: &str) -> String {
    let mut out = String::from("env,model,step,mean,std\n");
    for r in reports {
        for (name, m) in [(label, &r.fdm), ("constant_velocity", &r.cv)] {
            for (k, (a, s)) in m.step_mean.iter().zip(&m.step_std).enumerate() {
                out.push_str(&format!("{},{name},{},{a:.6},{s:.6}\n", r.kind, k + 1));
            }
        }
    }
    out
}

/// Mean position error per prediction step.
pub fn step_error_svg(reports: &[FdmEnvReport], label: &str, dt_p: f64) -> String {
    let mut series = Vec::new();
    for r in reports {
        for (name, m) in [(label, &r.fdm), ("cv", &r.cv)] {
            series.push(Series {
                label: format!("{} {name}", r.kind),
                points: m.step_mean.iter().enumerate().map(|(k, v)| ((k + 1) as f64 * dt_p, *v)).collect(),
            });
        }
    }
    line_chart("Position error over the horizon", "time [s]", "error [m]", &series)
}

/// Final-step error boxes, whiskers capped at the 95% quantile.
pub fn final_error_svg(reports: &[FdmEnvReport], label: &str) -> String {
    let groups: Vec<(String, [f64; 5])> = reports
        .iter()
        .flat_map(|r| [(format!("{} {label}", r.kind), r.fdm.final_quantiles), (format!("{} cv", r.kind), r.cv.final_quantiles)])
        .collect();
    box_chart("Final-step position error", "error [m]", &groups)
}
