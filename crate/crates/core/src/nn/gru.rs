use ndarray::{Array1, Array2, ArrayView2, Axis};
use rand::Rng;

use super::{lit, Mode, Params, Scalar, TensorKind, TensorView};
use crate::error::{FdmError, Result};

/// GRU cell with gates stacked as `[reset, update, candidate]`:
///
/// ```text
/// r  = σ(W_ir x + b_ir + W_hr h + b_hr)
/// z  = σ(W_iz x + b_iz + W_hz h + b_hz)
/// n  = tanh(W_in x + b_in + r ⊙ (W_hn h + b_hn))
/// h' = (1 − z) ⊙ n + z ⊙ h
/// ```
#[derive(Debug, Clone, PartialEq)]
pub struct GruCell<T> {
    pub w_ih: Array2<T>,
    pub w_hh: Array2<T>,
    pub b_ih: Array1<T>,
    pub b_hh: Array1<T>,
}

#[derive(Debug, Clone)]
pub struct GruStepCache<T> {
    x: Array2<T>,
    h: Array2<T>,
    r: Array2<T>,
    z: Array2<T>,
    n: Array2<T>,
    hn: Array2<T>,
}

impl<T: Scalar> GruCell<T> {
    pub fn zeros(inputs: usize, hidden: usize) -> Self {
        Self {
            w_ih: Array2::zeros((3 * hidden, inputs)),
            w_hh: Array2::zeros((3 * hidden, hidden)),
            b_ih: Array1::zeros(3 * hidden),
            b_hh: Array1::zeros(3 * hidden),
        }
    }

    pub fn hidden(&self) -> usize {
        self.w_hh.ncols()
    }

    pub fn inputs(&self) -> usize {
        self.w_ih.ncols()
    }

    pub fn forward(&self, x: &ArrayView2<T>, h: &ArrayView2<T>) -> Result<Array2<T>> {
        self.step(x, h).map(|(h, _)| h)
    }

    pub fn step(&self, x: &ArrayView2<T>, h: &ArrayView2<T>) -> Result<(Array2<T>, GruStepCache<T>)> {
        let hs = self.hidden();
        if x.ncols() != self.inputs() || h.ncols() != hs || x.nrows() != h.nrows() {
            return Err(FdmError::Shape(format!(
                "gru expects x [B,{}] and h [B,{hs}], got {:?} and {:?}",
                self.inputs(),
                x.shape(),
                h.shape()
            )));
        }
        let batch = x.nrows();
        let mut gi = x.dot(&self.w_ih.t());
        gi += &self.b_ih;
        let mut gh = h.dot(&self.w_hh.t());
        gh += &self.b_hh;
        let mut r = Array2::zeros((batch, hs));
        let mut z = Array2::zeros((batch, hs));
        let mut n = Array2::zeros((batch, hs));
        let mut hn = Array2::zeros((batch, hs));
        let mut out = Array2::zeros((batch, hs));
        let h = h.as_standard_layout();
        let (gi, gh) = (gi.as_standard_layout(), gh.as_standard_layout());
        {
            let (gi, gh, hv) = (gi.as_slice().unwrap(), gh.as_slice().unwrap(), h.as_slice().unwrap());
            let (rs, zs, ns) = (r.as_slice_mut().unwrap(), z.as_slice_mut().unwrap(), n.as_slice_mut().unwrap());
            let (hns, os) = (hn.as_slice_mut().unwrap(), out.as_slice_mut().unwrap());
            for b in 0..batch {
                let g = &gi[b * 3 * hs..(b + 1) * 3 * hs];
                let q = &gh[b * 3 * hs..(b + 1) * 3 * hs];
                for j in 0..hs {
                    let k = b * hs + j;
                    let rv = super::sigmoid(g[j] + q[j]);
                    let zv = super::sigmoid(g[hs + j] + q[hs + j]);
                    let nv = (g[2 * hs + j] + rv * q[2 * hs + j]).tanh();
                    rs[k] = rv;
                    zs[k] = zv;
                    ns[k] = nv;
                    hns[k] = q[2 * hs + j];
                    os[k] = (T::one() - zv) * nv + zv * hv[k];
                }
            }
        }
        let cache = GruStepCache {
            x: x.to_owned(),
            h: h.into_owned(),
            r,
            z,
            n,
            hn,
        };
        Ok((out, cache))
    }

    /// Returns `(dL/dx, dL/dh)` for one step; parameter gradients go to `grad`.
    pub fn step_backward(&self, c: &GruStepCache<T>, dh_new: &ArrayView2<T>, grad: &mut GruCell<T>, need_dx: bool) -> (Option<Array2<T>>, Array2<T>) {
        let hs = self.hidden();
        let batch = c.x.nrows();
        let mut dgi = Array2::zeros((batch, 3 * hs));
        let mut dgh = Array2::zeros((batch, 3 * hs));
        let mut dh = Array2::zeros((batch, hs));
        {
            let dn_all = dh_new.as_standard_layout();
            let d = dn_all.as_slice().unwrap();
            let (r, z, n, hn, h) = (
                c.r.as_slice().unwrap(),
                c.z.as_slice().unwrap(),
                c.n.as_slice().unwrap(),
                c.hn.as_slice().unwrap(),
                c.h.as_slice().unwrap(),
            );
            let (gi, gh, dhs) = (dgi.as_slice_mut().unwrap(), dgh.as_slice_mut().unwrap(), dh.as_slice_mut().unwrap());
            for b in 0..batch {
                for j in 0..hs {
                    let k = b * hs + j;
                    let dout = d[k];
                    let dn = dout * (T::one() - z[k]);
                    let dz = dout * (h[k] - n[k]);
                    dhs[k] = dout * z[k];
                    let dan = dn * (T::one() - n[k] * n[k]);
                    let dr = dan * hn[k];
                    let dar = dr * r[k] * (T::one() - r[k]);
                    let daz = dz * z[k] * (T::one() - z[k]);
                    let o = b * 3 * hs;
                    gi[o + j] = dar;
                    gi[o + hs + j] = daz;
                    gi[o + 2 * hs + j] = dan;
                    gh[o + j] = dar;
                    gh[o + hs + j] = daz;
                    gh[o + 2 * hs + j] = dan * r[k];
                }
            }
        }
        grad.w_ih += &dgi.t().dot(&c.x);
        grad.b_ih += &dgi.sum_axis(Axis(0));
        grad.w_hh += &dgh.t().dot(&c.h);
        grad.b_hh += &dgh.sum_axis(Axis(0));
        dh += &dgh.dot(&self.w_hh);
        let dx = need_dx.then(|| dgi.dot(&self.w_ih));
        (dx, dh)
    }

    pub fn cast<U: Scalar>(&self) -> GruCell<U> {
        let f = |v: &T| lit::<U>(v.to_f64().unwrap());
        GruCell {
            w_ih: self.w_ih.map(f),
            w_hh: self.w_hh.map(f),
            b_ih: self.b_ih.map(f),
            b_hh: self.b_hh.map(f),
        }
    }
}

impl GruCell<f64> {
    /// Every entry uniform in `±1/√hidden`.
    pub fn init<R: Rng + ?Sized>(inputs: usize, hidden: usize, rng: &mut R) -> Self {
        let k = 1.0 / (hidden as f64).sqrt();
        let mut u = || rng.random_range(-k..=k);
        Self {
            w_ih: Array2::from_shape_simple_fn((3 * hidden, inputs), &mut u),
            w_hh: Array2::from_shape_simple_fn((3 * hidden, hidden), &mut u),
            b_ih: Array1::from_shape_simple_fn(3 * hidden, &mut u),
            b_hh: Array1::from_shape_simple_fn(3 * hidden, &mut u),
        }
    }
}

impl<T: Scalar> Params<T> for GruCell<T> {
    fn tensors(&self) -> Vec<TensorView<'_, T>> {
        let v = |kind, a: &[usize], data| TensorView { kind, shape: a.to_vec(), data };
        vec![
            v(TensorKind::GruInputWeight, self.w_ih.shape(), self.w_ih.as_slice().unwrap()),
            v(TensorKind::GruHiddenWeight, self.w_hh.shape(), self.w_hh.as_slice().unwrap()),
            v(TensorKind::GruInputBias, self.b_ih.shape(), self.b_ih.as_slice().unwrap()),
            v(TensorKind::GruHiddenBias, self.b_hh.shape(), self.b_hh.as_slice().unwrap()),
        ]
    }

    fn tensors_mut(&mut self) -> Vec<&mut [T]> {
        vec![
            self.w_ih.as_slice_mut().unwrap(),
            self.w_hh.as_slice_mut().unwrap(),
            self.b_ih.as_slice_mut().unwrap(),
            self.b_hh.as_slice_mut().unwrap(),
        ]
    }
}

/// Multi-layer GRU with dropout on the outputs of every layer but the last.
#[derive(Debug, Clone, PartialEq)]
pub struct GruStack<T> {
    pub layers: Vec<GruCell<T>>,
}

#[derive(Debug, Clone)]
pub struct GruSeqCache<T> {
    steps: Vec<Vec<GruStepCache<T>>>,
    /// `masks[t][l]` multiplies the output of layer `l` before layer `l + 1`.
    masks: Vec<Vec<Option<Array2<T>>>>,
}

impl<T: Scalar> GruStack<T> {
    pub fn zeros(inputs: usize, hidden: usize, layers: usize) -> Self {
        Self {
            layers: (0..layers).map(|l| GruCell::zeros(if l == 0 { inputs } else { hidden }, hidden)).collect(),
        }
    }

    pub fn hidden(&self) -> usize {
        self.layers[0].hidden()
    }

    /// Runs the sequence from `h0` (zeros if absent). Returns the top-layer
    /// output per step, the final hidden state per layer and the cache.
    pub fn forward_seq(
        &self,
        xs: &[Array2<T>],
        h0: Option<&[Array2<T>]>,
        mode: &mut Mode,
    ) -> Result<(Vec<Array2<T>>, Vec<Array2<T>>, GruSeqCache<T>)> {
        let batch = xs.first().map(|x| x.nrows()).unwrap_or(0);
        let hs = self.hidden();
        let mut h: Vec<Array2<T>> = match h0 {
            Some(h0) => {
                if h0.len() != self.layers.len() {
                    return Err(FdmError::Shape(format!("{} initial states for {} layers", h0.len(), self.layers.len())));
                }
                h0.to_vec()
            }
            None => vec![Array2::zeros((batch, hs)); self.layers.len()],
        };
        let mut outputs = Vec::with_capacity(xs.len());
        let mut cache = GruSeqCache {
            steps: Vec::with_capacity(xs.len()),
            masks: Vec::with_capacity(xs.len()),
        };
        let top = self.layers.len() - 1;
        for x in xs {
            let mut input = x.clone();
            let mut step_caches = Vec::with_capacity(self.layers.len());
            let mut step_masks = Vec::with_capacity(self.layers.len());
            for (l, cell) in self.layers.iter().enumerate() {
                let (hn, c) = cell.step(&input.view(), &h[l].view())?;
                step_caches.push(c);
                h[l] = hn;
                if l < top {
                    let m = mode.mask::<T>(batch, hs);
                    input = match &m {
                        Some(m) => &h[l] * m,
                        None => h[l].clone(),
                    };
                    step_masks.push(m);
                } else {
                    step_masks.push(None);
                }
            }
            outputs.push(h[top].clone());
            cache.steps.push(step_caches);
            cache.masks.push(step_masks);
        }
        Ok((outputs, h, cache))
    }

    /// `d_out[t]` is the gradient on the top-layer output at step `t`.
    /// Returns per-step input gradients (if asked) and gradients on `h0`.
    pub fn backward_seq(
        &self,
        cache: &GruSeqCache<T>,
        d_out: &[Option<Array2<T>>],
        grad: &mut GruStack<T>,
        need_dx: bool,
    ) -> (Vec<Array2<T>>, Vec<Array2<T>>) {
        let steps = cache.steps.len();
        let batch = cache.steps.first().map(|s| s[0].x.nrows()).unwrap_or(0);
        let hs = self.hidden();
        let top = self.layers.len() - 1;
        let mut dh: Vec<Array2<T>> = vec![Array2::zeros((batch, hs)); self.layers.len()];
        let mut dxs = vec![Array2::zeros((0, 0)); if need_dx { steps } else { 0 }];
        for t in (0..steps).rev() {
            let mut from_above: Option<Array2<T>> = d_out.get(t).and_then(|d| d.clone());
            for l in (0..=top).rev() {
                let mut dhl = std::mem::replace(&mut dh[l], Array2::zeros((0, 0)));
                if let Some(a) = from_above.take() {
                    dhl += &a;
                }
                let want_dx = l > 0 || need_dx;
                let (dx, dprev) = self.layers[l].step_backward(&cache.steps[t][l], &dhl.view(), &mut grad.layers[l], want_dx);
                dh[l] = dprev;
                if l > 0 {
                    let mut dx = dx.unwrap();
                    if let Some(m) = &cache.masks[t][l - 1] {
                        dx = dx * m;
                    }
                    from_above = Some(dx);
                } else if need_dx {
                    dxs[t] = dx.unwrap();
                }
            }
        }
        (dxs, dh)
    }

    pub fn cast<U: Scalar>(&self) -> GruStack<U> {
        GruStack {
            layers: self.layers.iter().map(|c| c.cast()).collect(),
        }
    }
}

impl GruStack<f64> {
    pub fn init<R: Rng + ?Sized>(inputs: usize, hidden: usize, layers: usize, rng: &mut R) -> Self {
        Self {
            layers: (0..layers).map(|l| GruCell::init(if l == 0 { inputs } else { hidden }, hidden, rng)).collect(),
        }
    }
}

impl<T: Scalar> Params<T> for GruStack<T> {
    fn tensors(&self) -> Vec<TensorView<'_, T>> {
        self.layers.iter().flat_map(|c| c.tensors()).collect()
    }

    fn tensors_mut(&mut self) -> Vec<&mut [T]> {
        self.layers.iter_mut().flat_map(|c| c.tensors_mut()).collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::{finite_diff_check, zero_all};
    use crate::rng::rng_from_seed;
    use ndarray::array;

    #[test]
    fn zero_weights_halve_the_state() {
        let cell = GruCell::<f64>::zeros(3, 2);
        let x = array![[0.4, -1.0, 2.0]];
        assert_eq!(cell.forward(&x.view(), &array![[0.0, 0.0]].view()).unwrap(), array![[0.0, 0.0]]);
        assert_eq!(cell.forward(&x.view(), &array![[1.5, -0.8]].view()).unwrap(), array![[0.75, -0.4]]);
    }

    /// Straight-line scalar evaluation of the cell equations.
    fn scalar_gru(c: &GruCell<f64>, x: &[f64], h: &[f64]) -> Vec<f64> {
        let hs = h.len();
        let sig = |v: f64| 1.0 / (1.0 + (-v).exp());
        let row = |w: &Array2<f64>, i: usize, v: &[f64]| (0..v.len()).map(|k| w[[i, k]] * v[k]).sum::<f64>();
        (0..hs)
            .map(|j| {
                let r = sig(row(&c.w_ih, j, x) + c.b_ih[j] + row(&c.w_hh, j, h) + c.b_hh[j]);
                let z = sig(row(&c.w_ih, hs + j, x) + c.b_ih[hs + j] + row(&c.w_hh, hs + j, h) + c.b_hh[hs + j]);
                let n = (row(&c.w_ih, 2 * hs + j, x) + c.b_ih[2 * hs + j] + r * (row(&c.w_hh, 2 * hs + j, h) + c.b_hh[2 * hs + j])).tanh();
                (1.0 - z) * n + z * h[j]
            })
            .collect()
    }

    #[test]
    fn matches_scalar_reference() {
        let mut c = GruCell::<f64>::zeros(2, 2);
        // identity-style blocks plus small offsets
        for g in 0..3 {
            for i in 0..2 {
                c.w_ih[[g * 2 + i, i]] = 1.0;
                c.w_hh[[g * 2 + i, i]] = 1.0;
            }
        }
        c.b_ih[1] = 0.1;
        c.b_hh[4] = -0.2;
        let x = [0.3, -0.6];
        let h = [0.5, 0.25];
        let got = c.forward(&array![[x[0], x[1]]].view(), &array![[h[0], h[1]]].view()).unwrap();
        let want = scalar_gru(&c, &x, &h);
        for j in 0..2 {
            assert!((got[[0, j]] - want[j]).abs() < 1e-15);
        }
        let rc = GruCell::init(4, 3, &mut rng_from_seed(8));
        let x = [0.1, 0.9, -0.4, 0.3];
        let h = [0.2, -0.7, 0.05];
        let got = rc.forward(&ArrayView2::from_shape((1, 4), &x).unwrap(), &ArrayView2::from_shape((1, 3), &h).unwrap()).unwrap();
        let want = scalar_gru(&rc, &x, &h);
        for j in 0..3 {
            assert!((got[[0, j]] - want[j]).abs() < 1e-15);
        }
    }

    #[test]
    fn shape_mismatch_is_an_error() {
        let c = GruCell::<f64>::zeros(3, 2);
        assert!(c.forward(&Array2::zeros((1, 2)).view(), &Array2::zeros((1, 2)).view()).is_err());
    }

    #[test]
    fn stack_gradients_match_finite_differences() {
        let mut rng = rng_from_seed(3);
        let mut stack = GruStack::init(3, 4, 2, &mut rng);
        let xs: Vec<Array2<f64>> = (0..5).map(|_| Array2::from_shape_simple_fn((2, 3), || rng.random_range(-1.0..1.0))).collect();
        let h0: Vec<Array2<f64>> = (0..2).map(|_| Array2::from_shape_simple_fn((2, 4), || rng.random_range(-0.5..0.5))).collect();
        let coef: Vec<Array2<f64>> = (0..5).map(|_| Array2::from_shape_simple_fn((2, 4), || rng.random_range(-1.0..1.0))).collect();
        let loss = |s: &GruStack<f64>| {
            let (outs, _, _) = s.forward_seq(&xs, Some(&h0), &mut Mode::Eval).unwrap();
            outs.iter().zip(&coef).map(|(o, c)| (o * c).sum()).sum::<f64>()
        };
        let (_, _, cache) = stack.forward_seq(&xs, Some(&h0), &mut Mode::Eval).unwrap();
        let mut grad = stack.clone();
        zero_all(&mut grad);
        let d: Vec<Option<Array2<f64>>> = coef.iter().cloned().map(Some).collect();
        let (dxs, dh0) = stack.backward_seq(&cache, &d, &mut grad, true);
        let rep = finite_diff_check(&mut stack, &grad, loss, 1e-5, None, &mut rng);
        assert!(rep.max_rel_error < 1e-6, "{rep:?}");
        assert_eq!(dxs.len(), 5);
        // gradient on the initial state of layer 0, first entry
        let mut hp = h0.clone();
        hp[0][[0, 0]] += 1e-5;
        let mut hm = h0.clone();
        hm[0][[0, 0]] -= 1e-5;
        let f = |h: &[Array2<f64>]| {
            let (outs, _, _) = stack.forward_seq(&xs, Some(h), &mut Mode::Eval).unwrap();
            outs.iter().zip(&coef).map(|(o, c)| (o * c).sum()).sum::<f64>()
        };
        let fd = (f(&hp) - f(&hm)) / 2e-5;
        assert!((fd - dh0[0][[0, 0]]).abs() < 1e-8);
    }
}
