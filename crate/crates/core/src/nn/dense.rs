use ndarray::{Array1, Array2, ArrayView2, Axis};
use rand::Rng;

use super::{lit, Params, Scalar, TensorKind, TensorView};

/// Affine layer `y = x·Wᵀ + b` with `W` stored as `[out, in]`.
#[derive(Debug, Clone, PartialEq)]
pub struct Dense<T> {
    pub w: Array2<T>,
    pub b: Array1<T>,
}

impl<T: Scalar> Dense<T> {
    pub fn zeros(inputs: usize, outputs: usize) -> Self {
        Self {
            w: Array2::zeros((outputs, inputs)),
            b: Array1::zeros(outputs),
        }
    }

    pub fn inputs(&self) -> usize {
        self.w.ncols()
    }

    pub fn outputs(&self) -> usize {
        self.w.nrows()
    }

    pub fn forward(&self, x: &ArrayView2<T>) -> Array2<T> {
        let mut y = x.dot(&self.w.t());
        y += &self.b;
        y
    }

    /// Accumulates parameter gradients into `grad`; returns `dL/dx` if asked.
    pub fn backward(&self, x: &ArrayView2<T>, dy: &ArrayView2<T>, grad: &mut Dense<T>, need_dx: bool) -> Option<Array2<T>> {
        grad.w += &dy.t().dot(x);
        grad.b += &dy.sum_axis(Axis(0));
        need_dx.then(|| dy.dot(&self.w))
    }

    pub fn cast<U: Scalar>(&self) -> Dense<U> {
        Dense {
            w: self.w.mapv(|v| lit::<U>(v.to_f64().unwrap())),
            b: self.b.mapv(|v| lit::<U>(v.to_f64().unwrap())),
        }
    }
}

impl Dense<f64> {
    /// Uniform fan-in initialization with bound `gain·√(3/fan_in)`; biases zero.
    pub fn init<R: Rng + ?Sized>(inputs: usize, outputs: usize, gain: f64, rng: &mut R) -> Self {
        let bound = gain * (3.0 / inputs as f64).sqrt();
        Self {
            w: Array2::from_shape_simple_fn((outputs, inputs), || rng.random_range(-bound..=bound)),
            b: Array1::zeros(outputs),
        }
    }
}

impl<T: Scalar> Params<T> for Dense<T> {
    fn tensors(&self) -> Vec<TensorView<'_, T>> {
        vec![
            TensorView {
                kind: TensorKind::DenseWeight,
                shape: self.w.shape().to_vec(),
                data: self.w.as_slice().expect("standard layout"),
            },
            TensorView {
                kind: TensorKind::DenseBias,
                shape: self.b.shape().to_vec(),
                data: self.b.as_slice().expect("standard layout"),
            },
        ]
    }

    fn tensors_mut(&mut self) -> Vec<&mut [T]> {
        vec![
            self.w.as_slice_mut().expect("standard layout"),
            self.b.as_slice_mut().expect("standard layout"),
        ]
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::{finite_diff_vector, leaky_relu};
    use crate::rng::rng_from_seed;
    use ndarray::array;

    #[test]
    fn identity_passes_positive_input() {
        let mut d = Dense::<f64>::zeros(3, 3);
        d.w = Array2::eye(3);
        let x = array![[0.5, 1.0, 2.0]];
        assert_eq!(leaky_relu(&d.forward(&x.view()).view()), x);
        let neg = array![[-2.0, -1.0, -0.5]];
        assert_eq!(leaky_relu(&d.forward(&neg.view()).view()), array![[-0.02, -0.01, -0.005]]);
    }

    #[test]
    fn squared_loss_gradient_matches_closed_form() {
        // L = |Wx + b - y|², so dL/dW = 2(Wx+b-y)xᵀ and dL/db = 2(Wx+b-y)
        let d = Dense::init(3, 2, 1.0, &mut rng_from_seed(4));
        let x = array![[0.3, -1.2, 0.7]];
        let y = array![[0.1, -0.4]];
        let out = d.forward(&x.view());
        let resid = &out - &y;
        let dy = resid.mapv(|v| 2.0 * v);
        let mut g = Dense::zeros(3, 2);
        d.backward(&x.view(), &dy.view(), &mut g, false);
        for o in 0..2 {
            let r = resid[[0, o]];
            assert!((g.b[o] - 2.0 * r).abs() < 1e-15);
            for i in 0..3 {
                assert!((g.w[[o, i]] - 2.0 * r * x[[0, i]]).abs() < 1e-15);
            }
        }
    }

    #[test]
    fn zero_upstream_gives_zero_gradients() {
        let d = Dense::init(4, 3, 1.0, &mut rng_from_seed(1));
        let x = Array2::from_elem((5, 4), 0.7);
        let mut g = Dense::zeros(4, 3);
        let dx = d.backward(&x.view(), &Array2::zeros((5, 3)).view(), &mut g, true).unwrap();
        assert!(g.w.iter().chain(g.b.iter()).chain(dx.iter()).all(|&v| v == 0.0));
    }

    #[test]
    fn input_gradient_matches_finite_differences() {
        let d = Dense::init(4, 3, 1.0, &mut rng_from_seed(2));
        let x0 = vec![0.2, -0.5, 0.9, 0.1, 0.3, 0.3, -0.7, 1.1];
        let c = array![[1.0, -2.0, 0.5], [0.3, 0.2, -1.0]];
        let f = |x: &[f64]| {
            let xa = ArrayView2::from_shape((2, 4), x).unwrap();
            (&d.forward(&xa) * &c).sum()
        };
        let mut g = Dense::zeros(4, 3);
        let xa = ArrayView2::from_shape((2, 4), &x0).unwrap();
        let dx = d.backward(&xa, &c.view(), &mut g, true).unwrap();
        let rep = finite_diff_vector(f, &x0, dx.as_slice().unwrap(), 1e-5);
        assert!(rep.max_rel_error < 1e-7, "{rep:?}");
    }
}
