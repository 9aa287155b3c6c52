//! `FDMRB001` datasets. Header `{u32 count, u32 n, u32 u, u32 v, f32 dt_h,
//! f32 dt_p, u32 proprio_dim}` followed by fixed-size records in sample
//! field order. Scan occlusion flags and risks are one byte each.

use std::path::Path;

use super::FdmSample;
use crate::error::{FdmError, Result};
use crate::fileio::{put_f32, put_u32, put_u8, read_file, write_atomic, Reader};
use crate::terrain::{HeightScan, PROPRIO_DIM};

pub const DATASET_MAGIC: &[u8; 8] = b"FDMRB001";

#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub n: usize,
    pub scan_u: usize,
    pub scan_v: usize,
    pub dt_h: f32,
    pub dt_p: f32,
    pub samples: Vec<FdmSample>,
}

impl Dataset {
    pub fn new(n: usize, scan_u: usize, scan_v: usize, dt_h: f64, dt_p: f64) -> Self {
        Self {
            n,
            scan_u,
            scan_v,
            dt_h: dt_h as f32,
            dt_p: dt_p as f32,
            samples: Vec::new(),
        }
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn check(&self, s: &FdmSample) -> Result<()> {
        let n = self.n;
        let ok = s.history_states.len() == n
            && s.history_proprio.len() == n
            && s.actions.len() == n
            && s.label_poses.len() == n
            && s.label_risks.len() == n
            && s.scan.u == self.scan_u
            && s.scan.v == self.scan_v
            && s.scan.values.len() == self.scan_u * self.scan_v
            && s.scan.occluded.len() == self.scan_u * self.scan_v;
        if ok {
            Ok(())
        } else {
            Err(FdmError::Shape(format!("sample does not match dataset shape n={n} scan={}x{}", self.scan_u, self.scan_v)))
        }
    }

    pub fn push(&mut self, s: FdmSample) -> Result<()> {
        self.check(&s)?;
        self.samples.push(s);
        Ok(())
    }

    fn record_size(&self) -> usize {
        let n = self.n;
        let cells = self.scan_u * self.scan_v;
        4 * (3 * n + PROPRIO_DIM * n + cells + 3 * n + 3 * n) + cells + n
    }
}

pub fn dataset_to_bytes(ds: &Dataset) -> Result<Vec<u8>> {
    let mut buf = Vec::with_capacity(32 + ds.len() * ds.record_size());
    buf.extend_from_slice(DATASET_MAGIC);
    put_u32(&mut buf, ds.samples.len() as u32);
    put_u32(&mut buf, ds.n as u32);
    put_u32(&mut buf, ds.scan_u as u32);
    put_u32(&mut buf, ds.scan_v as u32);
    put_f32(&mut buf, ds.dt_h);
    put_f32(&mut buf, ds.dt_p);
    put_u32(&mut buf, PROPRIO_DIM as u32);
    for s in &ds.samples {
        ds.check(s)?;
        for p in &s.history_states {
            p.iter().for_each(|&x| put_f32(&mut buf, x));
        }
        for p in &s.history_proprio {
            p.iter().for_each(|&x| put_f32(&mut buf, x));
        }
        s.scan.values.iter().for_each(|&x| put_f32(&mut buf, x));
        s.scan.occluded.iter().for_each(|&o| put_u8(&mut buf, o as u8));
        for a in &s.actions {
            a.iter().for_each(|&x| put_f32(&mut buf, x));
        }
        for p in &s.label_poses {
            p.iter().for_each(|&x| put_f32(&mut buf, x));
        }
        s.label_risks.iter().for_each(|&r| put_u8(&mut buf, r));
    }
    Ok(buf)
}

fn triples(r: &mut Reader, n: usize) -> Result<Vec<[f32; 3]>> {
    (0..n).map(|_| Ok([r.f32()?, r.f32()?, r.f32()?])).collect()
}

pub fn dataset_from_bytes(bytes: &[u8]) -> Result<Dataset> {
    let mut r = Reader::new(bytes);
    r.expect_magic(DATASET_MAGIC)?;
    let count = r.u32()? as usize;
    let n = r.u32()? as usize;
    let u = r.u32()? as usize;
    let v = r.u32()? as usize;
    let dt_h = r.f32()?;
    let dt_p = r.f32()?;
    let pd = r.u32()? as usize;
    if pd != PROPRIO_DIM {
        return Err(FdmError::Format(format!("proprio dimension {pd}, expected {PROPRIO_DIM}")));
    }
    let mut ds = Dataset {
        n,
        scan_u: u,
        scan_v: v,
        dt_h,
        dt_p,
        samples: Vec::new(),
    };
    let needed = count.checked_mul(ds.record_size()).ok_or_else(|| FdmError::Format("record count overflow".into()))?;
    if bytes.len() < 36 + needed {
        return Err(FdmError::Format(format!("{count} records need {needed} bytes, file has {}", bytes.len() - 36)));
    }
    ds.samples.reserve(count);
    for _ in 0..count {
        let history_states = triples(&mut r, n)?;
        let history_proprio = (0..n)
            .map(|_| {
                let mut p = [0f32; PROPRIO_DIM];
                for x in p.iter_mut() {
                    *x = r.f32()?;
                }
                Ok(p)
            })
            .collect::<Result<Vec<_>>>()?;
        let values = (0..u * v).map(|_| r.f32()).collect::<Result<Vec<_>>>()?;
        let occluded = (0..u * v)
            .map(|_| match r.u8()? {
                0 => Ok(false),
                1 => Ok(true),
                b => Err(FdmError::Format(format!("occlusion flag {b}"))),
            })
            .collect::<Result<Vec<_>>>()?;
        let actions = triples(&mut r, n)?;
        let label_poses = triples(&mut r, n)?;
        let label_risks = (0..n).map(|_| r.u8()).collect::<Result<Vec<_>>>()?;
        ds.samples.push(FdmSample {
            history_states,
            history_proprio,
            scan: HeightScan { u, v, values, occluded },
            actions,
            label_poses,
            label_risks,
        });
    }
    r.finish()?;
    Ok(ds)
}

pub fn write_dataset(path: &Path, ds: &Dataset) -> Result<()> {
    write_atomic(path, &dataset_to_bytes(ds)?)
}

pub fn read_dataset(path: &Path) -> Result<Dataset> {
    dataset_from_bytes(&read_file(path)?)
}
