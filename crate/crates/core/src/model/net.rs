use ndarray::{concatenate, s, Array2, Array4, ArrayView2, Axis};
use rand::Rng;

use super::FdmConfig;
use crate::error::{FdmError, Result};
use crate::nn::{
    leaky_relu, leaky_relu_backward, lit, Conv2d, Dense, GruSeqCache, GruStack, MaxPool2, Mode, Params, Scalar, TensorView,
};
use crate::replay::{FdmSample, NormStats};
use crate::terrain::{HeightScan, PROPRIO_DIM};

/// Per-step state encoding of the history: `x, y, sin yaw, cos yaw`.
pub const STATE_FEATURES: usize = 4;
const HIST_FEATURES: usize = STATE_FEATURES + PROPRIO_DIM;

/// History encoder, scan encoder, action encoder, prediction recurrence and
/// the two heads. The heads read the prediction latents of all steps at once.
#[derive(Debug, Clone, PartialEq)]
pub struct FdmNet<T> {
    pub hist_gru: GruStack<T>,
    pub conv1: Conv2d<T>,
    pub conv2: Conv2d<T>,
    pub conv3: Conv2d<T>,
    pub init: Dense<T>,
    pub action: Dense<T>,
    pub pred_gru: GruStack<T>,
    pub state1: Dense<T>,
    pub state2: Dense<T>,
    pub state_out: Dense<T>,
    pub risk1: Dense<T>,
    pub risk_out: Dense<T>,
}

/// Borrowed observation: history and the scan at the start time.
#[derive(Debug, Clone, Copy)]
pub struct ObsRef<'a> {
    pub history_states: &'a [[f32; 3]],
    pub history_proprio: &'a [[f32; PROPRIO_DIM]],
    pub scan: &'a HeightScan,
}

impl<'a> From<&'a FdmSample> for ObsRef<'a> {
    fn from(s: &'a FdmSample) -> Self {
        Self {
            history_states: &s.history_states,
            history_proprio: &s.history_proprio,
            scan: &s.scan,
        }
    }
}

/// Network inputs for a batch, laid out step-major for the recurrences.
#[derive(Debug, Clone)]
pub struct Batch<T> {
    pub hist: Vec<Array2<T>>,
    pub scan: Array4<T>,
    pub actions: Vec<Array2<T>>,
}

impl<T: Scalar> Batch<T> {
    pub fn observations(obs: &[ObsRef], norm: &NormStats, cfg: &FdmConfig) -> Result<(Vec<Array2<T>>, Array4<T>)> {
        let n = cfg.n;
        let (u, v) = (cfg.scan.u, cfg.scan.v);
        let b = obs.len();
        let mut hist = vec![Array2::zeros((b, HIST_FEATURES)); n];
        let mut scan = Array4::zeros((b, 1, u, v));
        for (i, o) in obs.iter().enumerate() {
            if o.history_states.len() != n || o.history_proprio.len() != n {
                return Err(FdmError::Shape(format!("history of length {} for horizon {n}", o.history_states.len())));
            }
            if o.scan.u != u || o.scan.v != v {
                return Err(FdmError::Shape(format!("scan {}x{}, model expects {u}x{v}", o.scan.u, o.scan.v)));
            }
            for j in 0..n {
                let st = o.history_states[j];
                let mut row = hist[j].row_mut(i);
                let yaw = st[2] as f64;
                row[0] = lit(st[0] as f64);
                row[1] = lit(st[1] as f64);
                row[2] = lit(yaw.sin());
                row[3] = lit(yaw.cos());
                if cfg.use_proprio {
                    let p = norm.normalize(&o.history_proprio[j]);
                    for c in 0..PROPRIO_DIM {
                        row[STATE_FEATURES + c] = lit(p[c]);
                    }
                }
            }
            if cfg.use_scan {
                let dst = scan.slice_mut(s![i, 0, .., ..]);
                for (d, s) in dst.into_iter().zip(&o.scan.values) {
                    *d = lit(*s as f64);
                }
            }
        }
        Ok((hist, scan))
    }

    /// Step-major action tensors from per-row sequences of length `n`.
    pub fn actions<'a, I>(rows: I, n: usize) -> Result<Vec<Array2<T>>>
    where
        I: ExactSizeIterator<Item = &'a [[f64; 3]]>,
    {
        let b = rows.len();
        let mut out = vec![Array2::zeros((b, 3)); n];
        for (i, r) in rows.enumerate() {
            if r.len() != n {
                return Err(FdmError::Shape(format!("action sequence of length {} for horizon {n}", r.len())));
            }
            for (k, a) in r.iter().enumerate() {
                for c in 0..3 {
                    out[k][[i, c]] = lit(a[c]);
                }
            }
        }
        Ok(out)
    }

    pub fn from_samples(samples: &[&FdmSample], norm: &NormStats, cfg: &FdmConfig) -> Result<Self> {
        let obs: Vec<ObsRef> = samples.iter().map(|s| ObsRef::from(*s)).collect();
        let (hist, scan) = Self::observations(&obs, norm, cfg)?;
        let acts: Vec<Vec<[f64; 3]>> = samples
            .iter()
            .map(|s| s.actions.iter().map(|a| [a[0] as f64, a[1] as f64, a[2] as f64]).collect())
            .collect();
        let actions = Self::actions(acts.iter().map(|a| a.as_slice()), cfg.n)?;
        Ok(Self { hist, scan, actions })
    }

    pub fn len(&self) -> usize {
        self.scan.dim().0
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

#[derive(Debug, Clone)]
pub struct EncodeCache<T> {
    hist: GruSeqCache<T>,
    hist_steps: usize,
    x_dim: (usize, usize, usize, usize),
    cols1: Array2<T>,
    pre1: Array4<T>,
    pool_arg: Vec<usize>,
    p1_dim: (usize, usize, usize, usize),
    cols2: Array2<T>,
    pre2: Array4<T>,
    cols3: Array2<T>,
    pre3: Array4<T>,
    cat: Array2<T>,
    h0: Array2<T>,
}

#[derive(Debug, Clone)]
pub struct PredictCache<T> {
    inputs: Vec<Array2<T>>,
    pre_act: Vec<Array2<T>>,
    act_masks: Vec<Option<Array2<T>>>,
    gru: GruSeqCache<T>,
    latents: Array2<T>,
    s1p: Array2<T>,
    s1: Array2<T>,
    s2p: Array2<T>,
    s2d: Array2<T>,
    s2_mask: Option<Array2<T>>,
    r1p: Array2<T>,
    r1: Array2<T>,
}

fn masked<T: Scalar>(x: Array2<T>, m: &Option<Array2<T>>) -> Array2<T> {
    match m {
        Some(m) => x * m,
        None => x,
    }
}

impl<T: Scalar> FdmNet<T> {
    pub fn zeros(cfg: &FdmConfig) -> Self {
        let [c1, c2, c3] = cfg.cnn_channels;
        let flat = cfg.n * cfg.pred_hidden;
        Self {
            hist_gru: GruStack::zeros(HIST_FEATURES, cfg.hist_hidden, cfg.hist_layers),
            conv1: Conv2d::zeros(1, c1, 5, 2),
            conv2: Conv2d::zeros(c1, c2, 3, 1),
            conv3: Conv2d::zeros(c2, c3, 3, 2),
            init: Dense::zeros(cfg.hist_hidden + cfg.scan_features(), cfg.pred_layers * cfg.pred_hidden),
            action: Dense::zeros(3, cfg.action_embed),
            pred_gru: GruStack::zeros(cfg.action_embed, cfg.pred_hidden, cfg.pred_layers),
            state1: Dense::zeros(flat, cfg.state_head[0]),
            state2: Dense::zeros(cfg.state_head[0], cfg.state_head[1]),
            state_out: Dense::zeros(cfg.state_head[1], 3 * cfg.n),
            risk1: Dense::zeros(flat, cfg.risk_head),
            risk_out: Dense::zeros(cfg.risk_head, cfg.n),
        }
    }

    pub fn horizon(&self) -> usize {
        self.risk_out.outputs()
    }

    pub fn cast<U: Scalar>(&self) -> FdmNet<U> {
        FdmNet {
            hist_gru: self.hist_gru.cast(),
            conv1: self.conv1.cast(),
            conv2: self.conv2.cast(),
            conv3: self.conv3.cast(),
            init: self.init.cast(),
            action: self.action.cast(),
            pred_gru: self.pred_gru.cast(),
            state1: self.state1.cast(),
            state2: self.state2.cast(),
            state_out: self.state_out.cast(),
            risk1: self.risk1.cast(),
            risk_out: self.risk_out.cast(),
        }
    }

    /// Encodes history and scan into the initial prediction state
    /// `[B, layers·hidden]`.
    pub fn encode(&self, hist: &[Array2<T>], scan: &Array4<T>, mode: &mut Mode) -> Result<(Array2<T>, EncodeCache<T>)> {
        let (outs, _, hist_cache) = self.hist_gru.forward_seq(hist, None, mode)?;
        let e_hist = outs.last().cloned().ok_or_else(|| FdmError::Shape("empty history".into()))?;

        let (pre1, cols1) = self.conv1.forward(scan)?;
        let a1 = leaky_relu(&pre1.view());
        let (p1, pool_arg) = MaxPool2::forward(&a1);
        let (pre2, cols2) = self.conv2.forward(&p1)?;
        let a2 = leaky_relu(&pre2.view());
        let (pre3, cols3) = self.conv3.forward(&a2)?;
        let a3 = leaky_relu(&pre3.view());
        let b = a3.dim().0;
        let flat = a3.into_shape_with_order((b, self.conv3.out_ch * pre3.dim().2 * pre3.dim().3)).expect("flatten");

        let cat = concatenate(Axis(1), &[e_hist.view(), flat.view()]).expect("matching batch");
        let h0 = self.init.forward(&cat.view()).mapv(|v| v.tanh());
        let cache = EncodeCache {
            hist: hist_cache,
            hist_steps: hist.len(),
            x_dim: scan.dim(),
            cols1,
            pre1,
            pool_arg,
            p1_dim: p1.dim(),
            cols2,
            pre2,
            cols3,
            pre3,
            cat,
            h0: h0.clone(),
        };
        Ok((h0, cache))
    }

    pub fn encode_backward(&self, c: &EncodeCache<T>, dh0: &ArrayView2<T>, g: &mut FdmNet<T>) {
        let mut dpre = dh0.to_owned();
        dpre.zip_mut_with(&c.h0, |d, &h| *d = *d * (T::one() - h * h));
        let dcat = self.init.backward(&c.cat.view(), &dpre.view(), &mut g.init, true).unwrap();
        let hh = self.hist_gru.hidden();
        let d_hist = dcat.slice(s![.., ..hh]).to_owned();
        let d_flat = dcat.slice(s![.., hh..]).to_owned();

        let mut d_out = vec![None; c.hist_steps];
        if let Some(last) = d_out.last_mut() {
            *last = Some(d_hist);
        }
        self.hist_gru.backward_seq(&c.hist, &d_out, &mut g.hist_gru, false);

        let da3 = d_flat.into_shape_with_order(c.pre3.dim()).expect("unflatten");
        let dy3 = leaky_relu_backward(&c.pre3.view(), &da3.view());
        let da2 = self.conv3.backward(c.pre2.dim(), &c.cols3, &dy3, &mut g.conv3, true).unwrap();
        let dy2 = leaky_relu_backward(&c.pre2.view(), &da2.view());
        let dp1 = self.conv2.backward(c.p1_dim, &c.cols2, &dy2, &mut g.conv2, true).unwrap();
        let da1 = MaxPool2::backward(c.pre1.dim(), &c.pool_arg, &dp1);
        let dy1 = leaky_relu_backward(&c.pre1.view(), &da1.view());
        self.conv1.backward(c.x_dim, &c.cols1, &dy1, &mut g.conv1, false);
    }

    /// Runs the prediction recurrence from `h0` over step-major `actions`.
    /// Returns residual twists `[B, 3n]` and risk logits `[B, n]`.
    pub fn predict(&self, h0: &Array2<T>, actions: &[Array2<T>], mode: &mut Mode) -> Result<(Array2<T>, Array2<T>, PredictCache<T>)> {
        let hp = self.pred_gru.hidden();
        let layers = self.pred_gru.layers.len();
        if h0.ncols() != hp * layers {
            return Err(FdmError::Shape(format!("initial state width {} != {}", h0.ncols(), hp * layers)));
        }
        if actions.len() != self.horizon() {
            return Err(FdmError::Shape(format!("{} action steps for horizon {}", actions.len(), self.horizon())));
        }
        let b = h0.nrows();
        let mut pre_act = Vec::with_capacity(actions.len());
        let mut act_masks = Vec::with_capacity(actions.len());
        let mut enc = Vec::with_capacity(actions.len());
        for a in actions {
            if a.nrows() != b {
                return Err(FdmError::Shape(format!("action batch {} != {}", a.nrows(), b)));
            }
            let pre = self.action.forward(&a.view());
            let m = mode.mask::<T>(b, self.action.outputs());
            enc.push(masked(leaky_relu(&pre.view()), &m));
            pre_act.push(pre);
            act_masks.push(m);
        }
        let h0s: Vec<Array2<T>> = (0..layers).map(|l| h0.slice(s![.., l * hp..(l + 1) * hp]).to_owned()).collect();
        let (outs, _, gru) = self.pred_gru.forward_seq(&enc, Some(&h0s), mode)?;
        let views: Vec<ArrayView2<T>> = outs.iter().map(|o| o.view()).collect();
        let latents = concatenate(Axis(1), &views).expect("matching batch");

        let s1p = self.state1.forward(&latents.view());
        let s1 = leaky_relu(&s1p.view());
        let s2p = self.state2.forward(&s1.view());
        let s2_mask = mode.mask::<T>(b, self.state2.outputs());
        let s2d = masked(leaky_relu(&s2p.view()), &s2_mask);
        let resid = self.state_out.forward(&s2d.view());

        let r1p = self.risk1.forward(&latents.view());
        let r1 = leaky_relu(&r1p.view());
        let logits = self.risk_out.forward(&r1.view());

        let cache = PredictCache {
            inputs: actions.to_vec(),
            pre_act,
            act_masks,
            gru,
            latents,
            s1p,
            s1,
            s2p,
            s2d,
            s2_mask,
            r1p,
            r1,
        };
        Ok((resid, logits, cache))
    }

    /// Returns the gradient on `h0`.
    pub fn predict_backward(&self, c: &PredictCache<T>, d_resid: &ArrayView2<T>, d_logits: &ArrayView2<T>, g: &mut FdmNet<T>) -> Array2<T> {
        let d_s2d = self.state_out.backward(&c.s2d.view(), d_resid, &mut g.state_out, true).unwrap();
        let d_s2 = masked(d_s2d, &c.s2_mask);
        let d_s2p = leaky_relu_backward(&c.s2p.view(), &d_s2.view());
        let d_s1 = self.state2.backward(&c.s1.view(), &d_s2p.view(), &mut g.state2, true).unwrap();
        let d_s1p = leaky_relu_backward(&c.s1p.view(), &d_s1.view());
        let mut d_lat = self.state1.backward(&c.latents.view(), &d_s1p.view(), &mut g.state1, true).unwrap();

        let d_r1 = self.risk_out.backward(&c.r1.view(), d_logits, &mut g.risk_out, true).unwrap();
        let d_r1p = leaky_relu_backward(&c.r1p.view(), &d_r1.view());
        d_lat += &self.risk1.backward(&c.latents.view(), &d_r1p.view(), &mut g.risk1, true).unwrap();

        let hp = self.pred_gru.hidden();
        let d_out: Vec<Option<Array2<T>>> = (0..c.inputs.len()).map(|k| Some(d_lat.slice(s![.., k * hp..(k + 1) * hp]).to_owned())).collect();
        let (d_enc, dh0s) = self.pred_gru.backward_seq(&c.gru, &d_out, &mut g.pred_gru, true);
        for k in 0..c.inputs.len() {
            let d_act = masked(d_enc[k].clone(), &c.act_masks[k]);
            let d_pre = leaky_relu_backward(&c.pre_act[k].view(), &d_act.view());
            self.action.backward(&c.inputs[k].view(), &d_pre.view(), &mut g.action, false);
        }
        let views: Vec<ArrayView2<T>> = dh0s.iter().map(|d| d.view()).collect();
        concatenate(Axis(1), &views).expect("matching batch")
    }
}

impl FdmNet<f64> {
    pub fn init<R: Rng + ?Sized>(cfg: &FdmConfig, rng: &mut R) -> Self {
        let leaky = std::f64::consts::SQRT_2;
        let [c1, c2, c3] = cfg.cnn_channels;
        let flat = cfg.n * cfg.pred_hidden;
        Self {
            hist_gru: GruStack::init(HIST_FEATURES, cfg.hist_hidden, cfg.hist_layers, rng),
            conv1: Conv2d::init(1, c1, 5, 2, leaky, rng),
            conv2: Conv2d::init(c1, c2, 3, 1, leaky, rng),
            conv3: Conv2d::init(c2, c3, 3, 2, leaky, rng),
            init: Dense::init(cfg.hist_hidden + cfg.scan_features(), cfg.pred_layers * cfg.pred_hidden, 1.0, rng),
            action: Dense::init(3, cfg.action_embed, leaky, rng),
            pred_gru: GruStack::init(cfg.action_embed, cfg.pred_hidden, cfg.pred_layers, rng),
            state1: Dense::init(flat, cfg.state_head[0], leaky, rng),
            state2: Dense::init(cfg.state_head[0], cfg.state_head[1], leaky, rng),
            // residuals start close to zero
            state_out: Dense::init(cfg.state_head[1], 3 * cfg.n, 0.1, rng),
            risk1: Dense::init(flat, cfg.risk_head, leaky, rng),
            risk_out: Dense::init(cfg.risk_head, cfg.n, 1.0, rng),
        }
    }
}

impl<T: Scalar> Params<T> for FdmNet<T> {
    fn tensors(&self) -> Vec<TensorView<'_, T>> {
        let mut v = self.hist_gru.tensors();
        v.extend(self.conv1.tensors());
        v.extend(self.conv2.tensors());
        v.extend(self.conv3.tensors());
        v.extend(self.init.tensors());
        v.extend(self.action.tensors());
        v.extend(self.pred_gru.tensors());
        v.extend(self.state1.tensors());
        v.extend(self.state2.tensors());
        v.extend(self.state_out.tensors());
        v.extend(self.risk1.tensors());
        v.extend(self.risk_out.tensors());
        v
    }

    fn tensors_mut(&mut self) -> Vec<&mut [T]> {
        let mut v = self.hist_gru.tensors_mut();
        v.extend(self.conv1.tensors_mut());
        v.extend(self.conv2.tensors_mut());
        v.extend(self.conv3.tensors_mut());
        v.extend(self.init.tensors_mut());
        v.extend(self.action.tensors_mut());
        v.extend(self.pred_gru.tensors_mut());
        v.extend(self.state1.tensors_mut());
        v.extend(self.state2.tensors_mut());
        v.extend(self.state_out.tensors_mut());
        v.extend(self.risk1.tensors_mut());
        v.extend(self.risk_out.tensors_mut());
        v
    }
}
