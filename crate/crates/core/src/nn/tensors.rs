//! Flat views over parameter tensors, used by the optimizer, gradient
//! checks and checkpoint files.

use super::Scalar;
use crate::error::{FdmError, Result};
use crate::fileio::{put_f64, put_u32, put_u8, Reader};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[repr(u8)]
pub enum TensorKind {
    DenseWeight = 0,
    DenseBias = 1,
    GruInputWeight = 2,
    GruHiddenWeight = 3,
    GruInputBias = 4,
    GruHiddenBias = 5,
    ConvWeight = 6,
    ConvBias = 7,
}

impl TensorKind {
    pub fn from_u8(v: u8) -> Option<Self> {
        use TensorKind::*;
        Some(match v {
            0 => DenseWeight,
            1 => DenseBias,
            2 => GruInputWeight,
            3 => GruHiddenWeight,
            4 => GruInputBias,
            5 => GruHiddenBias,
            6 => ConvWeight,
            7 => ConvBias,
            _ => return None,
        })
    }
}

pub struct TensorView<'a, T> {
    pub kind: TensorKind,
    pub shape: Vec<usize>,
    pub data: &'a [T],
}

#[derive(Debug, Clone, PartialEq)]
pub struct TensorData {
    pub kind: TensorKind,
    pub shape: Vec<usize>,
    pub data: Vec<f64>,
}

/// A fixed, ordered collection of parameter tensors.
pub trait Params<T> {
    fn tensors(&self) -> Vec<TensorView<'_, T>>;
    /// Same order as [`Params::tensors`].
    fn tensors_mut(&mut self) -> Vec<&mut [T]>;

    fn param_count(&self) -> usize {
        self.tensors().iter().map(|t| t.data.len()).sum()
    }
}

pub fn zero_all<T: Scalar, P: Params<T> + ?Sized>(p: &mut P) {
    for t in p.tensors_mut() {
        t.fill(T::zero());
    }
}

pub fn scale_all<T: Scalar, P: Params<T> + ?Sized>(p: &mut P, s: T) {
    for t in p.tensors_mut() {
        t.iter_mut().for_each(|v| *v = *v * s);
    }
}

pub fn grad_norm<P: Params<f64> + ?Sized>(p: &P) -> f64 {
    p.tensors().iter().flat_map(|t| t.data.iter()).map(|v| v * v).sum::<f64>().sqrt()
}

/// Per tensor: `u8 kind, u32 rank, rank × u32 extents, f64 payload`.
pub fn write_tensors<P: Params<f64> + ?Sized>(buf: &mut Vec<u8>, p: &P) {
    for t in p.tensors() {
        put_u8(buf, t.kind as u8);
        put_u32(buf, t.shape.len() as u32);
        for &e in &t.shape {
            put_u32(buf, e as u32);
        }
        for &v in t.data {
            put_f64(buf, v);
        }
    }
}

pub fn read_tensors(r: &mut Reader, count: usize) -> Result<Vec<TensorData>> {
    let mut out = Vec::with_capacity(count);
    for i in 0..count {
        let k = r.u8()?;
        let kind = TensorKind::from_u8(k).ok_or_else(|| FdmError::Format(format!("tensor {i}: unknown kind {k}")))?;
        let rank = r.u32()? as usize;
        if rank > 4 {
            return Err(FdmError::Format(format!("tensor {i}: rank {rank}")));
        }
        let shape = (0..rank).map(|_| r.u32().map(|v| v as usize)).collect::<Result<Vec<_>>>()?;
        let len: usize = shape.iter().product();
        let data = (0..len).map(|_| r.f64()).collect::<Result<Vec<_>>>()?;
        out.push(TensorData { kind, shape, data });
    }
    Ok(out)
}

/// Copies `src` into `dst`, checking kinds and shapes tensor by tensor.
pub fn load_tensors<P: Params<f64> + ?Sized>(dst: &mut P, src: &[TensorData]) -> Result<()> {
    {
        let views = dst.tensors();
        if views.len() != src.len() {
            return Err(FdmError::Incompatible(format!("{} tensors in file, model has {}", src.len(), views.len())));
        }
        for (i, (v, s)) in views.iter().zip(src).enumerate() {
            if v.kind != s.kind || v.shape != s.shape {
                return Err(FdmError::Incompatible(format!(
                    "tensor {i}: file has {:?} {:?}, model expects {:?} {:?}",
                    s.kind, s.shape, v.kind, v.shape
                )));
            }
        }
    }
    for (d, s) in dst.tensors_mut().into_iter().zip(src) {
        d.copy_from_slice(&s.data);
    }
    Ok(())
}
