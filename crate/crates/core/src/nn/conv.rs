use ndarray::{Array1, Array2, Array4, Axis};
use rand::Rng;

use super::{lit, Params, Scalar, TensorKind, TensorView};
use crate::error::{FdmError, Result};

/// Valid (unpadded) strided 2D convolution, lowered to a matrix product via
/// im2col. Weights are `[out_ch, in_ch·k·k]`.
#[derive(Debug, Clone, PartialEq)]
pub struct Conv2d<T> {
    pub w: Array2<T>,
    pub b: Array1<T>,
    pub in_ch: usize,
    pub out_ch: usize,
    pub kernel: usize,
    pub stride: usize,
}

impl<T: Scalar> Conv2d<T> {
    pub fn zeros(in_ch: usize, out_ch: usize, kernel: usize, stride: usize) -> Self {
        Self {
            w: Array2::zeros((out_ch, in_ch * kernel * kernel)),
            b: Array1::zeros(out_ch),
            in_ch,
            out_ch,
            kernel,
            stride,
        }
    }

    pub fn out_size(&self, rows: usize, cols: usize) -> Result<(usize, usize)> {
        if rows < self.kernel || cols < self.kernel {
            return Err(FdmError::Shape(format!("{rows}x{cols} input smaller than {0}x{0} kernel", self.kernel)));
        }
        Ok(((rows - self.kernel) / self.stride + 1, (cols - self.kernel) / self.stride + 1))
    }

    fn im2col(&self, x: &Array4<T>, oh: usize, ow: usize) -> Array2<T> {
        let (batch, c, h, w) = x.dim();
        let k = self.kernel;
        let x = x.as_standard_layout();
        let xs = x.as_slice().expect("standard layout");
        let width = c * k * k;
        let mut cols = Array2::zeros((batch * oh * ow, width));
        let cs = cols.as_slice_mut().unwrap();
        for b in 0..batch {
            for oy in 0..oh {
                for ox in 0..ow {
                    let row = ((b * oh + oy) * ow + ox) * width;
                    for ch in 0..c {
                        for ky in 0..k {
                            let src = ((b * c + ch) * h + oy * self.stride + ky) * w + ox * self.stride;
                            let dst = row + (ch * k + ky) * k;
                            cs[dst..dst + k].copy_from_slice(&xs[src..src + k]);
                        }
                    }
                }
            }
        }
        cols
    }

    /// Returns the output `[B, out_ch, oh, ow]` and the im2col matrix for backward.
    pub fn forward(&self, x: &Array4<T>) -> Result<(Array4<T>, Array2<T>)> {
        let (batch, c, h, w) = x.dim();
        if c != self.in_ch {
            return Err(FdmError::Shape(format!("conv expects {} channels, got {c}", self.in_ch)));
        }
        let (oh, ow) = self.out_size(h, w)?;
        let x = x.as_standard_layout().into_owned();
        let cols = self.im2col(&x, oh, ow);
        let mut y = cols.dot(&self.w.t());
        y += &self.b;
        let y = y
            .into_shape_with_order((batch, oh, ow, self.out_ch))
            .expect("im2col output shape")
            .permuted_axes([0, 3, 1, 2])
            .as_standard_layout()
            .into_owned();
        Ok((y, cols))
    }

    pub fn backward(&self, input_dim: (usize, usize, usize, usize), cols: &Array2<T>, dy: &Array4<T>, grad: &mut Conv2d<T>, need_dx: bool) -> Option<Array4<T>> {
        let (batch, oc, oh, ow) = dy.dim();
        let dy2 = dy
            .view()
            .permuted_axes([0, 2, 3, 1])
            .as_standard_layout()
            .into_owned()
            .into_shape_with_order((batch * oh * ow, oc))
            .expect("gradient shape");
        grad.w += &dy2.t().dot(cols);
        grad.b += &dy2.sum_axis(Axis(0));
        if !need_dx {
            return None;
        }
        let dcols = dy2.dot(&self.w);
        let (_, c, h, w) = input_dim;
        let k = self.kernel;
        let width = c * k * k;
        let mut dx = Array4::<T>::zeros(input_dim);
        let dxs = dx.as_slice_mut().unwrap();
        let dcols = dcols.as_standard_layout();
        let dc = dcols.as_slice().unwrap();
        for b in 0..batch {
            for oy in 0..oh {
                for ox in 0..ow {
                    let row = ((b * oh + oy) * ow + ox) * width;
                    for ch in 0..c {
                        for ky in 0..k {
                            let dst = ((b * c + ch) * h + oy * self.stride + ky) * w + ox * self.stride;
                            let src = row + (ch * k + ky) * k;
                            for kx in 0..k {
                                dxs[dst + kx] = dxs[dst + kx] + dc[src + kx];
                            }
                        }
                    }
                }
            }
        }
        Some(dx)
    }

    pub fn cast<U: Scalar>(&self) -> Conv2d<U> {
        let f = |v: &T| lit::<U>(v.to_f64().unwrap());
        Conv2d {
            w: self.w.map(f),
            b: self.b.map(f),
            in_ch: self.in_ch,
            out_ch: self.out_ch,
            kernel: self.kernel,
            stride: self.stride,
        }
    }
}

impl Conv2d<f64> {
    pub fn init<R: Rng + ?Sized>(in_ch: usize, out_ch: usize, kernel: usize, stride: usize, gain: f64, rng: &mut R) -> Self {
        let fan_in = in_ch * kernel * kernel;
        let bound = gain * (3.0 / fan_in as f64).sqrt();
        let mut c = Self::zeros(in_ch, out_ch, kernel, stride);
        c.w.mapv_inplace(|_| rng.random_range(-bound..=bound));
        c
    }
}

impl<T: Scalar> Params<T> for Conv2d<T> {
    fn tensors(&self) -> Vec<TensorView<'_, T>> {
        vec![
            TensorView {
                kind: TensorKind::ConvWeight,
                shape: vec![self.out_ch, self.in_ch, self.kernel, self.kernel],
                data: self.w.as_slice().unwrap(),
            },
            TensorView {
                kind: TensorKind::ConvBias,
                shape: vec![self.out_ch],
                data: self.b.as_slice().unwrap(),
            },
        ]
    }

    fn tensors_mut(&mut self) -> Vec<&mut [T]> {
        vec![self.w.as_slice_mut().unwrap(), self.b.as_slice_mut().unwrap()]
    }
}

/// 2×2 max-pool with stride 2; odd trailing rows and columns are dropped.
#[derive(Debug, Clone, Copy, Default)]
pub struct MaxPool2;

impl MaxPool2 {
    pub fn out_size(rows: usize, cols: usize) -> (usize, usize) {
        (rows / 2, cols / 2)
    }

    /// Returns the pooled tensor and, per output, the flat input index of the maximum.
    pub fn forward<T: Scalar>(x: &Array4<T>) -> (Array4<T>, Vec<usize>) {
        let (batch, c, h, w) = x.dim();
        let (oh, ow) = Self::out_size(h, w);
        let x = x.as_standard_layout();
        let xs = x.as_slice().unwrap();
        let mut y = Array4::zeros((batch, c, oh, ow));
        let mut arg = Vec::with_capacity(batch * c * oh * ow);
        let ys = y.as_slice_mut().unwrap();
        let mut o = 0;
        for plane in 0..batch * c {
            let base = plane * h * w;
            for oy in 0..oh {
                for ox in 0..ow {
                    let mut best = base + 2 * oy * w + 2 * ox;
                    for (dy, dx) in [(0, 1), (1, 0), (1, 1)] {
                        let i = base + (2 * oy + dy) * w + 2 * ox + dx;
                        if xs[i] > xs[best] {
                            best = i;
                        }
                    }
                    ys[o] = xs[best];
                    arg.push(best);
                    o += 1;
                }
            }
        }
        (y, arg)
    }

    pub fn backward<T: Scalar>(input_dim: (usize, usize, usize, usize), arg: &[usize], dy: &Array4<T>) -> Array4<T> {
        let mut dx = Array4::zeros(input_dim);
        let dxs = dx.as_slice_mut().unwrap();
        let dy = dy.as_standard_layout();
        for (g, &i) in dy.as_slice().unwrap().iter().zip(arg) {
            dxs[i] = dxs[i] + *g;
        }
        dx
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::{finite_diff_check, finite_diff_vector, zero_all};
    use crate::rng::rng_from_seed;

    /// Direct quadruple loop over output position and kernel window.
    fn reference(c: &Conv2d<f64>, x: &Array4<f64>) -> Array4<f64> {
        let (b, ch, h, w) = x.dim();
        let k = c.kernel;
        let oh = (h - k) / c.stride + 1;
        let ow = (w - k) / c.stride + 1;
        let mut y = Array4::zeros((b, c.out_ch, oh, ow));
        for n in 0..b {
            for o in 0..c.out_ch {
                for i in 0..oh {
                    for j in 0..ow {
                        let mut acc = c.b[o];
                        for q in 0..ch {
                            for ky in 0..k {
                                for kx in 0..k {
                                    acc += c.w[[o, (q * k + ky) * k + kx]] * x[[n, q, i * c.stride + ky, j * c.stride + kx]];
                                }
                            }
                        }
                        y[[n, o, i, j]] = acc;
                    }
                }
            }
        }
        y
    }

    #[test]
    fn unit_kernel_is_identity() {
        let mut c = Conv2d::<f64>::zeros(1, 1, 1, 1);
        c.w[[0, 0]] = 1.0;
        let x = Array4::from_shape_fn((1, 1, 4, 5), |(_, _, i, j)| (i * 5 + j) as f64 * 0.3);
        assert_eq!(c.forward(&x).unwrap().0, x);
    }

    #[test]
    fn ones_kernel_on_constant() {
        let mut c = Conv2d::<f64>::zeros(1, 1, 3, 1);
        c.w.fill(1.0);
        let x = Array4::from_elem((1, 1, 6, 6), 0.7);
        let (y, _) = c.forward(&x).unwrap();
        assert_eq!(y.dim(), (1, 1, 4, 4));
        assert!(y.iter().all(|&v| (v - 6.3).abs() < 1e-12));
    }

    #[test]
    fn matches_brute_force() {
        let mut rng = rng_from_seed(10);
        for &(ic, oc, k, s) in &[(1, 3, 3, 1), (2, 4, 3, 2), (3, 2, 5, 2)] {
            let c = Conv2d::init(ic, oc, k, s, 1.0, &mut rng);
            let x = Array4::from_shape_simple_fn((2, ic, 8, 8), || rng.random_range(-1.0..1.0));
            let (y, _) = c.forward(&x).unwrap();
            let r = reference(&c, &x);
            let diff = (&y - &r).iter().fold(0.0f64, |m, v| m.max(v.abs()));
            assert!(diff < 1e-12, "{diff}");
        }
    }

    #[test]
    fn undersized_input_rejected() {
        let c = Conv2d::<f64>::zeros(1, 1, 5, 1);
        assert!(c.forward(&Array4::zeros((1, 1, 4, 9))).is_err());
        assert!(c.forward(&Array4::zeros((1, 2, 9, 9))).is_err());
    }

    #[test]
    fn gradients_match_finite_differences() {
        let mut rng = rng_from_seed(11);
        let mut c = Conv2d::init(2, 3, 3, 2, 1.0, &mut rng);
        let x = Array4::from_shape_simple_fn((2, 2, 7, 7), || rng.random_range(-1.0..1.0));
        let coef = Array4::from_shape_simple_fn((2, 3, 3, 3), || rng.random_range(-1.0..1.0));
        let loss = |c: &Conv2d<f64>| (&c.forward(&x).unwrap().0 * &coef).sum();
        let (_, cols) = c.forward(&x).unwrap();
        let mut g = c.clone();
        zero_all(&mut g);
        let dx = c.backward(x.dim(), &cols, &coef, &mut g, true).unwrap();
        let rep = finite_diff_check(&mut c, &g, loss, 1e-5, None, &mut rng);
        assert!(rep.max_rel_error < 1e-6, "{rep:?}");
        let xv = x.as_slice().unwrap().to_vec();
        let fx = |v: &[f64]| {
            let xa = Array4::from_shape_vec((2, 2, 7, 7), v.to_vec()).unwrap();
            (&c.forward(&xa).unwrap().0 * &coef).sum()
        };
        let rep = finite_diff_vector(fx, &xv, dx.as_slice().unwrap(), 1e-5);
        assert!(rep.max_rel_error < 1e-6, "{rep:?}");
    }

    #[test]
    fn maxpool_routes_gradient_to_maximum() {
        let x = Array4::from_shape_vec((1, 1, 3, 4), vec![1.0, 5.0, 2.0, 0.0, 3.0, 4.0, 9.0, 1.0, 7.0, 7.0, 7.0, 7.0]).unwrap();
        let (y, arg) = MaxPool2::forward(&x);
        assert_eq!(y.as_slice().unwrap(), &[5.0, 9.0]);
        let dx = MaxPool2::backward(x.dim(), &arg, &Array4::from_elem((1, 1, 1, 2), 2.0));
        assert_eq!(dx[[0, 0, 0, 1]], 2.0);
        assert_eq!(dx[[0, 0, 1, 2]], 2.0);
        assert_eq!(dx.sum(), 4.0);
    }
}
