//! Alternating collection and training, and constant-rate fine-tuning.

use ndarray::Array2;
use rand::seq::SliceRandom;
use rand::Rng;

use super::collect::{collect_dataset, CollectConfig, PlannerHook};
use super::integrate::{integrate_batch, integrate_batch_backward};
use super::loss::{loss_terms_from_logits, LossTerms, Losses};
use super::net::{Batch, FdmNet};
use super::{Fdm, FdmConfig};
use crate::config::{parse_value, unknown_key, Section};
use crate::error::{FdmError, Result};
use crate::geom::Se2Pose;
use crate::nn::{cosine_lr, finite_diff_check, grad_norm, scale_all, AdamW, FdReport, Mode, Params};
use crate::par::{map_indexed, Parallelism};
use crate::replay::{augment_sample, compute_norm_stats, AugmentConfig, FdmSample, NormStats};
use crate::rng::{derive_seed, stream_rng};

pub const METRICS_HEADER: &str = "round,epoch,L_pose,L_risk,L_stop,L_total";

#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub rounds: usize,
    pub samples_per_round: usize,
    pub epochs: usize,
    pub batch: usize,
    /// Rows per gradient work item. Fixed so results do not depend on the
    /// number of threads.
    pub chunk: usize,
    pub lr_max: f64,
    pub lr_min: f64,
    pub weight_decay: f64,
    /// Global gradient norm cap, 0 disables.
    pub grad_clip: f64,
    pub augment: AugmentConfig,
    pub finetune_lr: f64,
    pub finetune_steps: usize,
    /// Share of shifted-domain samples in a fine-tuning batch.
    pub finetune_mix: f64,
    pub seed: u64,
    pub parallelism: Parallelism,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            rounds: 6,
            samples_per_round: 20_000,
            epochs: 8,
            batch: 512,
            chunk: 128,
            lr_max: 1e-3,
            lr_min: 1e-5,
            weight_decay: 1e-4,
            grad_clip: 5.0,
            augment: AugmentConfig::default(),
            finetune_lr: 1e-4,
            finetune_steps: 400,
            finetune_mix: 0.5,
            seed: 0,
            parallelism: Parallelism::default(),
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(FdmError::Config(m.to_string()));
        if self.batch == 0 || self.chunk == 0 {
            return bad("train.batch and train.chunk must be positive");
        }
        if !(self.lr_max > 0.0 && self.lr_min >= 0.0 && self.lr_min <= self.lr_max) {
            return bad("learning rates must satisfy 0 <= lr_min <= lr_max, lr_max > 0");
        }
        if !(self.finetune_lr > 0.0) || !(0.0..=1.0).contains(&self.finetune_mix) {
            return bad("train.finetune_lr must be positive and finetune_mix in [0, 1]");
        }
        if self.weight_decay < 0.0 || self.grad_clip < 0.0 {
            return bad("weight decay and gradient clip must be non-negative");
        }
        Ok(())
    }
}

impl Section for TrainConfig {
    fn name(&self) -> &'static str {
        "train"
    }

    fn set(&mut self, key: &str, value: &str) -> Result<()> {
        let s = "train";
        match key {
            "rounds" => self.rounds = parse_value(s, key, value)?,
            "samples_per_round" => self.samples_per_round = parse_value(s, key, value)?,
            "epochs" => self.epochs = parse_value(s, key, value)?,
            "batch" => self.batch = parse_value(s, key, value)?,
            "chunk" => self.chunk = parse_value(s, key, value)?,
            "lr_max" => self.lr_max = parse_value(s, key, value)?,
            "lr_min" => self.lr_min = parse_value(s, key, value)?,
            "weight_decay" => self.weight_decay = parse_value(s, key, value)?,
            "grad_clip" => self.grad_clip = parse_value(s, key, value)?,
            "augment" => {
                if !crate::config::parse_bool(s, key, value)? {
                    self.augment = AugmentConfig::none();
                } else if self.augment == AugmentConfig::none() {
                    self.augment = AugmentConfig::default();
                }
            }
            "finetune_lr" => self.finetune_lr = parse_value(s, key, value)?,
            "finetune_steps" => self.finetune_steps = parse_value(s, key, value)?,
            "finetune_mix" => self.finetune_mix = parse_value(s, key, value)?,
            _ => return Err(unknown_key(s, key)),
        }
        Ok(())
    }

    fn entries(&self) -> Vec<(&'static str, String)> {
        vec![
            ("rounds", self.rounds.to_string()),
            ("samples_per_round", self.samples_per_round.to_string()),
            ("epochs", self.epochs.to_string()),
            ("batch", self.batch.to_string()),
            ("chunk", self.chunk.to_string()),
            ("lr_max", self.lr_max.to_string()),
            ("lr_min", self.lr_min.to_string()),
            ("weight_decay", self.weight_decay.to_string()),
            ("grad_clip", self.grad_clip.to_string()),
            ("augment", (self.augment != AugmentConfig::none()).to_string()),
            ("finetune_lr", self.finetune_lr.to_string()),
            ("finetune_steps", self.finetune_steps.to_string()),
            ("finetune_mix", self.finetune_mix.to_string()),
        ]
    }

    fn check(&self) -> Result<()> {
        self.validate()
    }
}

/// Mean training losses of one epoch.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MetricsRow {
    pub round: usize,
    pub epoch: usize,
    pub losses: Losses,
}

impl MetricsRow {
    pub fn csv(&self) -> String {
        let l = &self.losses;
        format!("{},{},{:.9},{:.9},{:.9},{:.9}", self.round, self.epoch, l.pose, l.risk, l.stop, l.total)
    }
}

pub fn metrics_csv(rows: &[MetricsRow]) -> String {
    let mut s = String::from(METRICS_HEADER);
    s.push('\n');
    for r in rows {
        s.push_str(&r.csv());
        s.push('\n');
    }
    s
}

/// Network inputs and flattened labels for a set of samples.
#[derive(Debug, Clone)]
pub struct Prepared {
    pub batch: Batch<f64>,
    pub actions: Vec<[f64; 3]>,
    pub label_poses: Vec<Se2Pose>,
    pub label_risks: Vec<f64>,
}

impl Prepared {
    pub fn new(samples: &[&FdmSample], norm: &NormStats, cfg: &FdmConfig) -> Result<Self> {
        let batch = Batch::from_samples(samples, norm, cfg)?;
        let mut actions = Vec::with_capacity(samples.len() * cfg.n);
        let mut label_poses = Vec::with_capacity(samples.len() * cfg.n);
        let mut label_risks = Vec::with_capacity(samples.len() * cfg.n);
        for s in samples {
            if s.label_poses.len() != cfg.n || s.label_risks.len() != cfg.n {
                return Err(FdmError::Shape(format!("labels of length {} for horizon {}", s.label_poses.len(), cfg.n)));
            }
            actions.extend(s.actions.iter().map(|a| a.map(|v| v as f64)));
            label_poses.extend((0..cfg.n).map(|k| s.label_pose(k)));
            label_risks.extend(s.label_risks.iter().map(|&r| r as f64));
        }
        Ok(Self {
            batch,
            actions,
            label_poses,
            label_risks,
        })
    }
}

/// Full forward pass and loss; accumulates parameter gradients into `grad`
/// when given. `gate` fixes the stop-loss mask.
pub fn loss_and_grad(
    net: &FdmNet<f64>,
    prep: &Prepared,
    cfg: &FdmConfig,
    mode: &mut Mode,
    gate: Option<&[bool]>,
    grad: Option<&mut FdmNet<f64>>,
) -> Result<LossTerms> {
    let (h0, enc) = net.encode(&prep.batch.hist, &prep.batch.scan, mode)?;
    let (resid, logits, pred) = net.predict(&h0, &prep.batch.actions, mode)?;
    let ic = integrate_batch(&prep.actions, &resid.view(), cfg.n, cfg.dt_p, &cfg.bounds);
    let flat_logits: Vec<f64> = logits.iter().copied().collect();
    let terms = loss_terms_from_logits(ic.poses(), &flat_logits, &prep.label_poses, &prep.label_risks, gate, cfg);
    if let Some(g) = grad {
        let d_resid = integrate_batch_backward(&ic, &terms.d_poses);
        let d_logits = Array2::from_shape_vec(logits.dim(), terms.d_logits.clone()).expect("logit shape");
        let dh0 = net.predict_backward(&pred, &d_resid.view(), &d_logits.view(), g);
        net.encode_backward(&enc, &dh0.view(), g);
    }
    Ok(terms)
}

/// Batch-mean losses and gradient. Chunks are processed independently and
/// reduced in order, so the result does not depend on the thread count.
pub(crate) fn batch_gradient(
    fdm: &Fdm,
    samples: &[&FdmSample],
    tcfg: &TrainConfig,
    augment: &AugmentConfig,
    seed: u64,
) -> Result<(Losses, FdmNet<f64>)> {
    let total = samples.len();
    let chunks: Vec<&[&FdmSample]> = samples.chunks(tcfg.chunk).collect();
    let results = map_indexed(chunks.len(), tcfg.parallelism, |c| -> Result<(Losses, FdmNet<f64>, usize)> {
        let mut rng = stream_rng(seed, c as u64);
        let owned: Vec<FdmSample> = chunks[c].iter().map(|s| augment_sample(s, augment, &mut rng)).collect();
        let refs: Vec<&FdmSample> = owned.iter().collect();
        let prep = Prepared::new(&refs, &fdm.norm, &fdm.cfg)?;
        let mut grad = FdmNet::zeros(&fdm.cfg);
        let mut mode = Mode::Train {
            p: fdm.cfg.dropout,
            rng: &mut rng,
        };
        let terms = loss_and_grad(&fdm.net, &prep, &fdm.cfg, &mut mode, None, Some(&mut grad))?;
        Ok((terms.losses, grad, refs.len()))
    });
    let mut acc = FdmNet::zeros(&fdm.cfg);
    let mut l = Losses::default();
    for r in results {
        let (losses, grad, len) = r?;
        let w = len as f64 / total as f64;
        for (a, g) in acc.tensors_mut().into_iter().zip(grad.tensors()) {
            for (x, y) in a.iter_mut().zip(g.data) {
                *x += w * y;
            }
        }
        l.pose += w * losses.pose;
        l.risk += w * losses.risk;
        l.stop += w * losses.stop;
        l.total += w * losses.total;
    }
    Ok((l, acc))
}

fn apply_step(fdm: &mut Fdm, opt: &mut AdamW, grad: &mut FdmNet<f64>, lr: f64, clip: f64) {
    if clip > 0.0 {
        let norm = grad_norm(grad);
        if norm > clip {
            scale_all(grad, clip / norm);
        }
    }
    opt.step(&mut fdm.net, grad, lr);
}

fn diverged(where_: &str, l: &Losses) -> FdmError {
    FdmError::Diverged(format!(
        "non-finite loss at {where_}: L_pose={} L_risk={} L_stop={}",
        l.pose, l.risk, l.stop
    ))
}

/// Epochs of shuffled mini-batch AdamW on a fixed sample set. `step` and
/// `total_steps` place the run on the cosine schedule.
pub fn train_epochs(
    fdm: &mut Fdm,
    opt: &mut AdamW,
    samples: &[FdmSample],
    tcfg: &TrainConfig,
    round: usize,
    step: &mut usize,
    total_steps: usize,
) -> Result<Vec<MetricsRow>> {
    let mut rows = Vec::with_capacity(tcfg.epochs);
    let mut order: Vec<usize> = (0..samples.len()).collect();
    for epoch in 0..tcfg.epochs {
        let epoch_seed = derive_seed(derive_seed(tcfg.seed, 1 + round as u64), epoch as u64);
        order.shuffle(&mut stream_rng(epoch_seed, u64::MAX));
        let mut sum = Losses::default();
        let mut seen = 0usize;
        for (b, idx) in order.chunks(tcfg.batch).enumerate() {
            let batch: Vec<&FdmSample> = idx.iter().map(|&i| &samples[i]).collect();
            let (l, mut g) = batch_gradient(fdm, &batch, tcfg, &tcfg.augment, derive_seed(epoch_seed, b as u64))?;
            if !l.is_finite() {
                return Err(diverged(&format!("round {round} epoch {epoch} batch {b}"), &l));
            }
            let lr = cosine_lr(*step, total_steps, tcfg.lr_max, tcfg.lr_min);
            apply_step(fdm, opt, &mut g, lr, tcfg.grad_clip);
            *step += 1;
            let w = batch.len() as f64;
            sum.pose += w * l.pose;
            sum.risk += w * l.risk;
            sum.stop += w * l.stop;
            sum.total += w * l.total;
            seen += batch.len();
        }
        let d = seen.max(1) as f64;
        rows.push(MetricsRow {
            round,
            epoch,
            losses: Losses {
                pose: sum.pose / d,
                risk: sum.risk / d,
                stop: sum.stop / d,
                total: sum.total / d,
            },
        });
    }
    Ok(rows)
}

/// Alternates collection rounds with training. Normalization statistics are
/// fixed from the first round. `on_round` sees the model after every round.
pub fn train(
    cfg: &FdmConfig,
    tcfg: &TrainConfig,
    ccfg: &CollectConfig,
    hook: Option<&dyn PlannerHook>,
    mut on_round: impl FnMut(usize, &Fdm, &[MetricsRow]) -> Result<()>,
) -> Result<(Fdm, Vec<MetricsRow>)> {
    tcfg.validate()?;
    let mut fdm = Fdm::new(cfg.clone(), derive_seed(tcfg.seed, 0))?;
    let mut opt = AdamW::new(tcfg.weight_decay);
    let per_round = tcfg.samples_per_round.div_ceil(tcfg.batch);
    let total_steps = (tcfg.rounds * tcfg.epochs * per_round).max(1);
    let mut step = 0;
    let mut rows = Vec::new();
    for round in 0..tcfg.rounds {
        let share = ccfg.sampler.planner_share(round, tcfg.rounds);
        let ds = collect_dataset(
            cfg,
            ccfg,
            tcfg.samples_per_round,
            share,
            if share > 0.0 { Some((&fdm, hook)) } else { None },
            derive_seed(tcfg.seed, 1000 + round as u64),
            tcfg.parallelism,
        )?;
        if round == 0 {
            fdm.norm = compute_norm_stats(&ds)?;
        }
        let r = train_epochs(&mut fdm, &mut opt, &ds, tcfg, round, &mut step, total_steps)?;
        rows.extend_from_slice(&r);
        on_round(round, &fdm, &rows)?;
    }
    Ok((fdm, rows))
}

/// Continues training at a constant rate on batches mixing shifted and base
/// samples. A fresh optimizer state is used.
pub fn fine_tune(fdm: &Fdm, base: &[FdmSample], shifted: &[FdmSample], tcfg: &TrainConfig) -> Result<(Fdm, Vec<MetricsRow>)> {
    tcfg.validate()?;
    let mut out = fdm.clone();
    if tcfg.finetune_steps == 0 {
        return Ok((out, Vec::new()));
    }
    if shifted.is_empty() || (base.is_empty() && tcfg.finetune_mix < 1.0) {
        return Err(FdmError::Empty("fine-tuning needs shifted and base samples".into()));
    }
    let n_shift = if base.is_empty() {
        tcfg.batch
    } else {
        ((tcfg.batch as f64 * tcfg.finetune_mix).round() as usize).min(tcfg.batch)
    };
    let mut opt = AdamW::new(tcfg.weight_decay);
    let mut rng = stream_rng(tcfg.seed, 0xF1E7);
    let mut rows = Vec::new();
    let mut sum = Losses::default();
    let report_every = tcfg.finetune_steps.div_ceil(10).max(1);
    let mut in_window = 0;
    for step in 0..tcfg.finetune_steps {
        let mut batch: Vec<&FdmSample> = Vec::with_capacity(tcfg.batch);
        for _ in 0..n_shift {
            batch.push(&shifted[rng.random_range(0..shifted.len())]);
        }
        for _ in n_shift..tcfg.batch {
            batch.push(&base[rng.random_range(0..base.len())]);
        }
        let (l, mut g) = batch_gradient(&out, &batch, tcfg, &tcfg.augment, derive_seed(tcfg.seed, 0xF000 + step as u64))?;
        if !l.is_finite() {
            return Err(diverged(&format!("fine-tune step {step}"), &l));
        }
        apply_step(&mut out, &mut opt, &mut g, tcfg.finetune_lr, tcfg.grad_clip);
        sum.pose += l.pose;
        sum.risk += l.risk;
        sum.stop += l.stop;
        sum.total += l.total;
        in_window += 1;
        if in_window == report_every || step + 1 == tcfg.finetune_steps {
            let d = in_window as f64;
            rows.push(MetricsRow {
                round: 0,
                epoch: rows.len(),
                losses: Losses {
                    pose: sum.pose / d,
                    risk: sum.risk / d,
                    stop: sum.stop / d,
                    total: sum.total / d,
                },
            });
            sum = Losses::default();
            in_window = 0;
        }
    }
    Ok((out, rows))
}

/// Evaluation-mode losses over a sample set.
pub fn evaluate_losses(fdm: &Fdm, samples: &[FdmSample], parallelism: Parallelism) -> Result<Losses> {
    let refs: Vec<&FdmSample> = samples.iter().collect();
    let chunks: Vec<&[&FdmSample]> = refs.chunks(256).collect();
    let parts = map_indexed(chunks.len(), parallelism, |c| -> Result<(Losses, usize)> {
        let prep = Prepared::new(chunks[c], &fdm.norm, &fdm.cfg)?;
        let t = loss_and_grad(&fdm.net, &prep, &fdm.cfg, &mut Mode::Eval, None, None)?;
        Ok((t.losses, chunks[c].len()))
    });
    let mut l = Losses::default();
    for p in parts {
        let (x, len) = p?;
        let w = len as f64 / samples.len() as f64;
        l.pose += w * x.pose;
        l.risk += w * x.risk;
        l.stop += w * x.stop;
        l.total += w * x.total;
    }
    Ok(l)
}

/// Analytic gradient of the total loss against central differences, with
/// the stop gate held fixed. Probes `per_tensor` coordinates per tensor.
pub fn gradient_check(fdm: &mut Fdm, samples: &[FdmSample], eps: f64, per_tensor: usize, seed: u64) -> Result<FdReport> {
    let cfg = fdm.cfg.clone();
    let refs: Vec<&FdmSample> = samples.iter().collect();
    let prep = Prepared::new(&refs, &fdm.norm, &cfg)?;
    let mut g = FdmNet::zeros(&cfg);
    let t = loss_and_grad(&fdm.net, &prep, &cfg, &mut Mode::Eval, None, Some(&mut g))?;
    let gate = t.gate.clone();
    Ok(finite_diff_check(
        &mut fdm.net,
        &g,
        |net| loss_and_grad(net, &prep, &cfg, &mut Mode::Eval, Some(&gate), None).map_or(f64::NAN, |t| t.losses.total),
        eps,
        Some(per_tensor),
        &mut crate::rng::rng_from_seed(seed),
    ))
}

#[cfg(test)]
pub(crate) mod tests {
    use super::*;
    use crate::rng::rng_from_seed;

    pub(crate) fn small_cfg() -> FdmConfig {
        FdmConfig {
            n: 4,
            hist_hidden: 6,
            pred_hidden: 8,
            action_embed: 5,
            cnn_channels: [2, 3, 4],
            state_head: [7, 6],
            risk_head: 5,
            scan: crate::terrain::ScanConfig {
                u: 24,
                v: 24,
                resolution: 0.2,
            },
            ..FdmConfig::default()
        }
    }

    pub(crate) fn random_samples(cfg: &FdmConfig, count: usize, seed: u64) -> Vec<FdmSample> {
        let mut rng = rng_from_seed(seed);
        (0..count)
            .map(|_| {
                let n = cfg.n;
                let mut scan = crate::terrain::HeightScan::zeros(cfg.scan.u, cfg.scan.v);
                for v in scan.values.iter_mut() {
                    *v = rng.random_range(-1.0..1.0);
                }
                let mut risks = vec![0u8; n];
                let fail = rng.random_range(0..2 * n);
                let mut poses = Vec::new();
                let mut p = [0.0f32; 3];
                for k in 0..n {
                    if k < fail {
                        p = [p[0] + rng.random_range(0.0..0.5), p[1] + rng.random_range(-0.2..0.2), p[2] + rng.random_range(-0.3..0.3)];
                    } else {
                        risks[k] = 1;
                    }
                    poses.push(p);
                }
                FdmSample {
                    history_states: (0..n).map(|j| [-0.1 * (n - 1 - j) as f32, 0.0, 0.0]).collect(),
                    history_proprio: (0..n).map(|_| std::array::from_fn(|_| rng.random_range(-1.0..1.0))).collect(),
                    scan,
                    actions: (0..n).map(|_| [rng.random_range(-0.9..0.9), rng.random_range(-0.9..0.9), rng.random_range(-0.9..0.9)]).collect(),
                    label_poses: poses,
                    label_risks: risks,
                }
            })
            .collect()
    }

    #[test]
    fn whole_model_gradient_matches_differences() {
        let cfg = small_cfg();
        let mut fdm = Fdm::new(cfg.clone(), 3).unwrap();
        let samples = random_samples(&cfg, 3, 1);
        let rep = gradient_check(&mut fdm, &samples, 1e-5, 8, 2).unwrap();
        assert!(rep.max_rel_error < 1e-4, "{rep:?}");
    }

    #[test]
    fn single_chunk_matches_direct_gradient() {
        let cfg = FdmConfig {
            dropout: 0.0,
            ..small_cfg()
        };
        let fdm = Fdm::new(cfg.clone(), 4).unwrap();
        let samples = random_samples(&cfg, 10, 2);
        let refs: Vec<&FdmSample> = samples.iter().collect();
        let tcfg = TrainConfig {
            chunk: 64,
            ..TrainConfig::default()
        };
        let (l, g) = batch_gradient(&fdm, &refs, &tcfg, &AugmentConfig::none(), 7).unwrap();
        let prep = Prepared::new(&refs, &fdm.norm, &cfg).unwrap();
        let mut direct = FdmNet::zeros(&cfg);
        let t = loss_and_grad(&fdm.net, &prep, &cfg, &mut Mode::Eval, None, Some(&mut direct)).unwrap();
        assert!((l.total - t.losses.total).abs() < 1e-12);
        assert_eq!(g, direct);
    }

    #[test]
    fn overfits_a_small_set() {
        let cfg = FdmConfig {
            dropout: 0.0,
            ..FdmConfig::default()
        };
        let samples = random_samples(&cfg, 64, 5);
        let mut fdm = Fdm::new(cfg.clone(), 1).unwrap();
        fdm.norm = compute_norm_stats(&samples).unwrap();
        let tcfg = TrainConfig {
            epochs: 200,
            batch: 16,
            lr_max: 2e-3,
            lr_min: 1e-4,
            augment: AugmentConfig::none(),
            ..TrainConfig::default()
        };
        let mut opt = AdamW::new(tcfg.weight_decay);
        let mut step = 0;
        let before = evaluate_losses(&fdm, &samples, Parallelism::Sequential).unwrap();
        let rows = train_epochs(&mut fdm, &mut opt, &samples, &tcfg, 0, &mut step, 800).unwrap();
        let after = evaluate_losses(&fdm, &samples, Parallelism::Sequential).unwrap();
        assert_eq!(rows.len(), 200);
        assert!(after.total < 0.1 * before.total, "{} -> {}", before.total, after.total);
    }

    #[test]
    fn training_is_reproducible() {
        let cfg = small_cfg();
        let samples = random_samples(&cfg, 40, 6);
        let tcfg = TrainConfig {
            epochs: 2,
            batch: 16,
            chunk: 5,
            ..TrainConfig::default()
        };
        let run = |par| {
            let mut fdm = Fdm::new(cfg.clone(), 1).unwrap();
            let mut opt = AdamW::new(1e-4);
            let mut step = 0;
            let t = TrainConfig {
                parallelism: par,
                ..tcfg.clone()
            };
            let rows = train_epochs(&mut fdm, &mut opt, &samples, &t, 0, &mut step, 10).unwrap();
            (metrics_csv(&rows), fdm.net)
        };
        let (a, na) = run(Parallelism::Sequential);
        let (b, nb) = run(Parallelism::default());
        assert_eq!(a, b);
        assert_eq!(na, nb);
    }

    #[test]
    fn zero_finetune_steps_is_identity() {
        let cfg = small_cfg();
        let fdm = Fdm::new(cfg.clone(), 2).unwrap();
        let s = random_samples(&cfg, 4, 1);
        let t = TrainConfig {
            finetune_steps: 0,
            ..TrainConfig::default()
        };
        let (out, rows) = fine_tune(&fdm, &s, &s, &t).unwrap();
        assert_eq!(out, fdm);
        assert!(rows.is_empty());
    }

    #[test]
    fn non_finite_loss_aborts() {
        let cfg = small_cfg();
        let mut fdm = Fdm::new(cfg.clone(), 2).unwrap();
        fdm.net.state_out.b[0] = f64::NAN;
        let s = random_samples(&cfg, 8, 1);
        let mut opt = AdamW::new(0.0);
        let mut step = 0;
        let t = TrainConfig {
            epochs: 1,
            batch: 8,
            ..TrainConfig::default()
        };
        match train_epochs(&mut fdm, &mut opt, &s, &t, 0, &mut step, 1) {
            Err(FdmError::Diverged(msg)) => assert!(msg.contains("round 0")),
            other => panic!("expected divergence, got {other:?}"),
        }
    }
}
