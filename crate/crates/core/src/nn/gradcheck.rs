use rand::Rng;

use super::Params;

/// Denominator floor for relative errors on near-zero gradients.
pub const FD_ABS_FLOOR: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FdReport {
    pub max_rel_error: f64,
    pub checked: usize,
    /// `(coordinate, analytic, numeric)` of the worst entry.
    pub worst: Option<(usize, f64, f64)>,
}

pub fn rel_error(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(FD_ABS_FLOOR)
}

impl FdReport {
    fn new() -> Self {
        Self {
            max_rel_error: 0.0,
            checked: 0,
            worst: None,
        }
    }

    fn record(&mut self, coord: usize, a: f64, n: f64) {
        let e = rel_error(a, n);
        self.checked += 1;
        if e > self.max_rel_error || self.worst.is_none() {
            self.max_rel_error = self.max_rel_error.max(e);
            if e >= self.max_rel_error {
                self.worst = Some((coord, a, n));
            }
        }
    }
}

/// Central differences of `f` around `x` against `analytic`.
pub fn finite_diff_vector(mut f: impl FnMut(&[f64]) -> f64, x: &[f64], analytic: &[f64], eps: f64) -> FdReport {
    let mut rep = FdReport::new();
    let mut xv = x.to_vec();
    for i in 0..x.len() {
        xv[i] = x[i] + eps;
        let up = f(&xv);
        xv[i] = x[i] - eps;
        let down = f(&xv);
        xv[i] = x[i];
        rep.record(i, analytic[i], (up - down) / (2.0 * eps));
    }
    rep
}

/// Central differences of a scalar loss over the parameters of `model`.
/// With `per_tensor = Some(k)` only `k` random coordinates of each tensor
/// are probed. Parameters are restored afterwards.
pub fn finite_diff_check<P, G, R>(
    model: &mut P,
    analytic: &G,
    mut loss: impl FnMut(&P) -> f64,
    eps: f64,
    per_tensor: Option<usize>,
    rng: &mut R,
) -> FdReport
where
    P: Params<f64>,
    G: Params<f64>,
    R: Rng + ?Sized,
{
    let grads: Vec<Vec<f64>> = analytic.tensors().iter().map(|t| t.data.to_vec()).collect();
    let mut rep = FdReport::new();
    let mut offset = 0;
    for (ti, g) in grads.iter().enumerate() {
        let coords: Vec<usize> = match per_tensor {
            Some(k) if k < g.len() => (0..k).map(|_| rng.random_range(0..g.len())).collect(),
            _ => (0..g.len()).collect(),
        };
        for &c in &coords {
            let orig = model.tensors_mut()[ti][c];
            model.tensors_mut()[ti][c] = orig + eps;
            let up = loss(model);
            model.tensors_mut()[ti][c] = orig - eps;
            let down = loss(model);
            model.tensors_mut()[ti][c] = orig;
            rep.record(offset + c, g[c], (up - down) / (2.0 * eps));
        }
        offset += g.len();
    }
    rep
}
