//! Domain-shift experiment: error before and after fine-tuning.

use super::fdm_bench::evaluate_on;
use super::EvalConfig;
use crate::error::Result;
use crate::model::{collect_dataset, fine_tune, CollectConfig, Fdm, MetricsRow, TrainConfig};
use crate::par::Parallelism;
use crate::rng::derive_seed;
use crate::terrain::{SimParams, TerrainKind};

#[derive(Debug, Clone, PartialEq)]
pub struct FinetuneRow {
    pub domain: String,
    /// Mean final-step position error in metres.
    pub pre: f64,
    pub post: f64,
}

impl FinetuneRow {
    pub fn reduction_pct(&self) -> f64 {
        if self.pre > 0.0 {
            100.0 * (self.pre - self.post) / self.pre
        } else {
            0.0
        }
    }
}

#[derive(Debug, Clone)]
pub struct FinetuneReport {
    pub rows: Vec<FinetuneRow>,
    pub model: Fdm,
    pub metrics: Vec<MetricsRow>,
}

impl FinetuneReport {
    pub fn row(&self, domain: &str) -> Option<&FinetuneRow> {
        self.rows.iter().find(|r| r.domain == domain)
    }
}

fn collect_mixed(fdm: &Fdm, ccfg: &CollectConfig, kinds: &[TerrainKind], terrain_seed: u64, count: usize, seed: u64, par: Parallelism) -> Result<Vec<crate::replay::FdmSample>> {
    let c = CollectConfig {
        kinds: kinds.to_vec(),
        terrain_seed,
        ..ccfg.clone()
    };
    collect_dataset(&fdm.cfg, &c, count, 0.0, None, seed, par)
}

/// Fine-tunes `fdm` on `train_count` samples from `shifted` dynamics mixed
/// with as many base samples, then compares held-out final-step error on
/// both domains. Training data uses the collection terrains, held-out data
/// the evaluation terrains.
pub fn run_finetune_experiment(
    fdm: &Fdm,
    tcfg: &TrainConfig,
    ccfg: &CollectConfig,
    shifted: &SimParams,
    ecfg: &EvalConfig,
    train_count: usize,
    par: Parallelism,
) -> Result<FinetuneReport> {
    ecfg.validate()?;
    let shifted_ccfg = CollectConfig { sim: *shifted, ..ccfg.clone() };
    let s = |k: u64| derive_seed(ecfg.seed, 0x4654_0000 | k);
    let shifted_train = collect_mixed(fdm, &shifted_ccfg, &ccfg.kinds, ccfg.terrain_seed, train_count, s(1), par)?;
    let base_train = collect_mixed(fdm, ccfg, &ccfg.kinds, ccfg.terrain_seed, train_count, s(2), par)?;
    let shifted_test = collect_mixed(fdm, &shifted_ccfg, &ecfg.kinds, ecfg.terrain_seed, ecfg.samples_per_env, s(3), par)?;
    let base_test = collect_mixed(fdm, ccfg, &ecfg.kinds, ecfg.terrain_seed, ecfg.samples_per_env, s(4), par)?;
    let (model, metrics) = fine_tune(fdm, &base_train, &shifted_train, tcfg)?;
    let mut rows = Vec::new();
    for (domain, test) in [("shifted", &shifted_test), ("base", &base_test)] {
        let pre = evaluate_on(fdm, test, par)?.0.final_mean;
        let post = evaluate_on(&model, test, par)?.0.final_mean;
        rows.push(FinetuneRow {
            domain: domain.to_string(),
            pre,
            post,
        });
    }
    Ok(FinetuneReport { rows, model, metrics })
}

pub fn finetune_report_csv(report: &FinetuneReport) -> String {
    let mut out = String::from("domain,pre_error,post_error,reduction_pct\n");
    for r in &report.rows {
        out.push_str(&format!("{},{:.6},{:.6},{:.2}\n", r.domain, r.pre, r.post, r.reduction_pct()));
    }
    out
}
