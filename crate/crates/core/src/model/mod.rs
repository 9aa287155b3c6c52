//! The perceptive forward dynamics model: network, losses, training and
//! fine-tuning.

mod checkpoint;
mod collect;
mod integrate;
mod loss;
mod net;
pub(crate) mod train;

pub use checkpoint::{checkpoint_from_bytes, checkpoint_to_bytes, read_checkpoint, write_checkpoint, CHECKPOINT_MAGIC};
pub use collect::{collect_dataset, observe, terrain_pool, CollectConfig, EpisodeSim, Observation, PlannerHook};
pub use integrate::{integrate_batch, integrate_batch_backward, IntegrateCache};
pub use loss::{compute_losses, loss_terms_from_logits, FdmLabels, LossTerms, Losses};
pub use net::{Batch, EncodeCache, FdmNet, ObsRef, PredictCache, STATE_FEATURES};
pub use train::{evaluate_losses, fine_tune, gradient_check, loss_and_grad, metrics_csv, train, train_epochs, MetricsRow, Prepared, TrainConfig, METRICS_HEADER};

use ndarray::Array2;

use crate::config::{fmt_list, parse_bool, parse_list, parse_value, unknown_key, Section};
use crate::error::{FdmError, Result};
use crate::geom::{ActionBounds, ActionSeq, Se2Pose, Twist};
use crate::nn::{sigmoid, Mode, Params, Scalar};
use crate::replay::{FdmSample, NormStats};
use crate::terrain::ScanConfig;

#[derive(Debug, Clone, PartialEq)]
pub struct FdmConfig {
    pub n: usize,
    pub dt_h: f64,
    pub dt_p: f64,
    pub hist_hidden: usize,
    pub hist_layers: usize,
    pub pred_hidden: usize,
    pub pred_layers: usize,
    pub action_embed: usize,
    pub cnn_channels: [usize; 3],
    pub state_head: [usize; 2],
    pub risk_head: usize,
    pub dropout: f64,
    pub scan: ScanConfig,
    pub bounds: ActionBounds,
    /// Ablation switches: a disabled input is fed as zeros.
    pub use_scan: bool,
    pub use_proprio: bool,
    pub w_pose: f64,
    pub w_risk: f64,
    pub w_stop: f64,
    pub delta_risk: f64,
}

impl Default for FdmConfig {
    fn default() -> Self {
        Self {
            n: 10,
            dt_h: 0.05,
            dt_p: 0.5,
            hist_hidden: 32,
            hist_layers: 2,
            pred_hidden: 64,
            pred_layers: 2,
            action_embed: 16,
            cnn_channels: [8, 16, 32],
            state_head: [48, 32],
            risk_head: 32,
            dropout: 0.2,
            scan: ScanConfig::default(),
            bounds: ActionBounds::default(),
            use_scan: true,
            use_proprio: true,
            w_pose: 1.0,
            w_risk: 1.0,
            w_stop: 0.5,
            delta_risk: 0.5,
        }
    }
}

impl FdmConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(FdmError::Config(m.to_string()));
        if self.n < 1 {
            return bad("fdm.n must be at least 1");
        }
        if !(self.dt_h > 0.0 && self.dt_p > 0.0) {
            return bad("fdm.dt_h and fdm.dt_p must be positive");
        }
        crate::replay::steps_per_prediction(self.dt_h, self.dt_p)?;
        if !(self.w_pose > 0.0 && self.w_risk > 0.0 && self.w_stop > 0.0) {
            return bad("loss weights must be positive");
        }
        if !(self.delta_risk > 0.0 && self.delta_risk < 1.0) {
            return bad("fdm.delta_risk must lie in (0, 1)");
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return bad("fdm.dropout must lie in [0, 1)");
        }
        let sizes = [self.hist_hidden, self.hist_layers, self.pred_hidden, self.pred_layers, self.action_embed, self.risk_head];
        if sizes.iter().chain(&self.cnn_channels).chain(&self.state_head).any(|&s| s == 0) {
            return bad("layer sizes must be positive");
        }
        if (0..3).any(|i| self.bounds.min[i] > self.bounds.max[i]) {
            return bad("action bounds inverted");
        }
        self.cnn_dims().map(|_| ())
    }

    /// Spatial size after each CNN stage: conv 5×5/2, pool 2, conv 3×3/1, conv 3×3/2.
    pub fn cnn_dims(&self) -> Result<[(usize, usize); 4]> {
        let conv = |(h, w): (usize, usize), k: usize, s: usize| {
            if h < k || w < k {
                Err(FdmError::Config(format!("scan {}x{} too small for the encoder", self.scan.u, self.scan.v)))
            } else {
                Ok(((h - k) / s + 1, (w - k) / s + 1))
            }
        };
        let c1 = conv((self.scan.u, self.scan.v), 5, 2)?;
        let p1 = (c1.0 / 2, c1.1 / 2);
        let c2 = conv(p1, 3, 1)?;
        let c3 = conv(c2, 3, 2)?;
        Ok([c1, p1, c2, c3])
    }

    pub fn scan_features(&self) -> usize {
        let [.., c3] = self.cnn_dims().expect("validated config");
        self.cnn_channels[2] * c3.0 * c3.1
    }

    /// Shapes that must agree between a checkpoint and the model loading it.
    pub fn same_architecture(&self, o: &FdmConfig) -> bool {
        self.n == o.n
            && self.hist_hidden == o.hist_hidden
            && self.hist_layers == o.hist_layers
            && self.pred_hidden == o.pred_hidden
            && self.pred_layers == o.pred_layers
            && self.action_embed == o.action_embed
            && self.cnn_channels == o.cnn_channels
            && self.state_head == o.state_head
            && self.risk_head == o.risk_head
            && self.scan.u == o.scan.u
            && self.scan.v == o.scan.v
    }
}

impl Section for FdmConfig {
    fn name(&self) -> &'static str {
        "fdm"
    }

    fn set(&mut self, key: &str, value: &str) -> Result<()> {
        let s = "fdm";
        match key {
            "n" => self.n = parse_value(s, key, value)?,
            "dt_h" => self.dt_h = parse_value(s, key, value)?,
            "dt_p" => self.dt_p = parse_value(s, key, value)?,
            "hist_hidden" => self.hist_hidden = parse_value(s, key, value)?,
            "hist_layers" => self.hist_layers = parse_value(s, key, value)?,
            "pred_hidden" => self.pred_hidden = parse_value(s, key, value)?,
            "pred_layers" => self.pred_layers = parse_value(s, key, value)?,
            "action_embed" => self.action_embed = parse_value(s, key, value)?,
            "cnn_channels" => {
                let v = parse_list(s, key, value, 3)?;
                self.cnn_channels = [v[0], v[1], v[2]];
            }
            "state_head" => {
                let v = parse_list(s, key, value, 2)?;
                self.state_head = [v[0], v[1]];
            }
            "risk_head" => self.risk_head = parse_value(s, key, value)?,
            "dropout" => self.dropout = parse_value(s, key, value)?,
            "scan_u" => self.scan.u = parse_value(s, key, value)?,
            "scan_v" => self.scan.v = parse_value(s, key, value)?,
            "scan_resolution" => self.scan.resolution = parse_value(s, key, value)?,
            "action_min" => {
                let v = parse_list(s, key, value, 3)?;
                self.bounds.min = [v[0], v[1], v[2]];
            }
            "action_max" => {
                let v = parse_list(s, key, value, 3)?;
                self.bounds.max = [v[0], v[1], v[2]];
            }
            "use_scan" => self.use_scan = parse_bool(s, key, value)?,
            "use_proprio" => self.use_proprio = parse_bool(s, key, value)?,
            "w_pose" => self.w_pose = parse_value(s, key, value)?,
            "w_risk" => self.w_risk = parse_value(s, key, value)?,
            "w_stop" => self.w_stop = parse_value(s, key, value)?,
            "delta_risk" => self.delta_risk = parse_value(s, key, value)?,
            _ => return Err(unknown_key(s, key)),
        }
        Ok(())
    }

    fn entries(&self) -> Vec<(&'static str, String)> {
        vec![
            ("n", self.n.to_string()),
            ("dt_h", self.dt_h.to_string()),
            ("dt_p", self.dt_p.to_string()),
            ("hist_hidden", self.hist_hidden.to_string()),
            ("hist_layers", self.hist_layers.to_string()),
            ("pred_hidden", self.pred_hidden.to_string()),
            ("pred_layers", self.pred_layers.to_string()),
            ("action_embed", self.action_embed.to_string()),
            ("cnn_channels", fmt_list(&self.cnn_channels)),
            ("state_head", fmt_list(&self.state_head)),
            ("risk_head", self.risk_head.to_string()),
            ("dropout", self.dropout.to_string()),
            ("scan_u", self.scan.u.to_string()),
            ("scan_v", self.scan.v.to_string()),
            ("scan_resolution", self.scan.resolution.to_string()),
            ("action_min", fmt_list(&self.bounds.min)),
            ("action_max", fmt_list(&self.bounds.max)),
            ("use_scan", self.use_scan.to_string()),
            ("use_proprio", self.use_proprio.to_string()),
            ("w_pose", self.w_pose.to_string()),
            ("w_risk", self.w_risk.to_string()),
            ("w_stop", self.w_stop.to_string()),
            ("delta_risk", self.delta_risk.to_string()),
        ]
    }

    fn check(&self) -> Result<()> {
        self.validate()
    }
}

/// Model output for one observation and action sequence.
#[derive(Debug, Clone, PartialEq)]
pub struct FdmPrediction {
    pub residual_twists: Vec<Twist>,
    pub applied_twists: Vec<Twist>,
    pub poses: Vec<Se2Pose>,
    pub risks: Vec<f64>,
}

/// A trained network with its input normalization.
#[derive(Debug, Clone, PartialEq)]
pub struct Fdm {
    pub cfg: FdmConfig,
    pub net: FdmNet<f64>,
    pub norm: NormStats,
}

impl Fdm {
    pub fn new(cfg: FdmConfig, seed: u64) -> Result<Self> {
        cfg.validate()?;
        let net = FdmNet::init(&cfg, &mut crate::rng::rng_from_seed(seed));
        Ok(Self {
            cfg,
            net,
            norm: NormStats::identity(),
        })
    }

    pub fn param_count(&self) -> usize {
        self.net.param_count()
    }

    /// Inference copy of the network in precision `T`.
    pub fn runner<T: Scalar>(&self) -> FdmRunner<T> {
        FdmRunner {
            net: self.net.cast(),
            cfg: self.cfg.clone(),
            norm: self.norm.clone(),
        }
    }

    /// Predicts every action sequence from one observation.
    pub fn forward_batch(&self, obs: ObsRef, actions: &[ActionSeq]) -> Result<Vec<FdmPrediction>> {
        let r = self.runner::<f64>();
        let h0 = r.encode(obs)?;
        r.rollout(&h0, actions)
    }

    /// Batched predictions for stored samples, in input order.
    pub fn predict_samples(&self, samples: &[FdmSample], parallelism: crate::par::Parallelism) -> Result<Vec<FdmPrediction>> {
        let r = self.runner::<f64>();
        let refs: Vec<&FdmSample> = samples.iter().collect();
        let chunks: Vec<&[&FdmSample]> = refs.chunks(256).collect();
        let parts = crate::par::map_indexed(chunks.len(), parallelism, |c| r.predict_samples(chunks[c]));
        let mut out = Vec::with_capacity(samples.len());
        for p in parts {
            out.extend(p?);
        }
        Ok(out)
    }

    pub fn forward(&self, obs: ObsRef, actions: &ActionSeq) -> Result<FdmPrediction> {
        Ok(self.forward_batch(obs, std::slice::from_ref(actions))?.remove(0))
    }

    /// Zeroes the state head so every residual twist is exactly zero.
    pub fn zero_state_head(&mut self) {
        self.net.state_out.w.fill(0.0);
        self.net.state_out.b.fill(0.0);
    }
}

/// A network cast to one precision for repeated evaluation. The observation
/// is encoded once and shared by all candidate action sequences.
#[derive(Debug, Clone)]
pub struct FdmRunner<T> {
    pub net: FdmNet<T>,
    pub cfg: FdmConfig,
    pub norm: NormStats,
}

impl<T: Scalar> FdmRunner<T> {
    /// Initial prediction state `[1, layers·hidden]`.
    pub fn encode(&self, obs: ObsRef) -> Result<Array2<T>> {
        let (hist, scan) = Batch::<T>::observations(&[obs], &self.norm, &self.cfg)?;
        Ok(self.net.encode(&hist, &scan, &mut Mode::Eval)?.0)
    }

    pub fn rollout(&self, h0: &Array2<T>, actions: &[ActionSeq]) -> Result<Vec<FdmPrediction>> {
        if actions.is_empty() {
            return Ok(Vec::new());
        }
        let rows: Vec<Vec<[f64; 3]>> = actions.iter().map(|a| a.twists.iter().map(|t| t.to_array()).collect()).collect();
        let h = h0.broadcast((actions.len(), h0.ncols())).ok_or_else(|| FdmError::Shape("initial state must have one row".into()))?.to_owned();
        self.decode(&h, &rows)
    }

    /// Predictions for stored samples, each from its own observation.
    pub fn predict_samples(&self, samples: &[&FdmSample]) -> Result<Vec<FdmPrediction>> {
        if samples.is_empty() {
            return Ok(Vec::new());
        }
        let b = Batch::<T>::from_samples(samples, &self.norm, &self.cfg)?;
        let (h0, _) = self.net.encode(&b.hist, &b.scan, &mut Mode::Eval)?;
        let rows: Vec<Vec<[f64; 3]>> = samples
            .iter()
            .map(|s| s.actions.iter().map(|a| [a[0] as f64, a[1] as f64, a[2] as f64]).collect())
            .collect();
        self.decode(&h0, &rows)
    }

    fn decode(&self, h0: &Array2<T>, rows: &[Vec<[f64; 3]>]) -> Result<Vec<FdmPrediction>> {
        let n = self.cfg.n;
        let acts = Batch::<T>::actions(rows.iter().map(|r| r.as_slice()), n)?;
        let (resid, logits, _) = self.net.predict(h0, &acts, &mut Mode::Eval)?;
        let resid = resid.mapv(|v| v.to_f64().unwrap_or(f64::NAN));
        let flat: Vec<[f64; 3]> = rows.iter().flatten().copied().collect();
        let ic = integrate_batch(&flat, &resid.view(), n, self.cfg.dt_p, &self.cfg.bounds);
        Ok((0..rows.len())
            .map(|i| FdmPrediction {
                residual_twists: (0..n).map(|k| Twist::new(resid[[i, 3 * k]], resid[[i, 3 * k + 1]], resid[[i, 3 * k + 2]])).collect(),
                applied_twists: ic.applied()[i * n..(i + 1) * n].to_vec(),
                poses: ic.poses()[i * n..(i + 1) * n].to_vec(),
                risks: (0..n).map(|k| sigmoid(logits[[i, k]].to_f64().unwrap_or(f64::NAN))).collect(),
            })
            .collect())
    }
}
