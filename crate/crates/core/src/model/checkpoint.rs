//! `FDMCK001` checkpoints: magic, `u32` config length, config text,
//! 12 f64 means, 12 f64 stds, `u32` tensor count, then the tensors.

use std::path::Path;

use super::net::FdmNet;
use super::{Fdm, FdmConfig};
use crate::config::{apply_lines, render_section};
use crate::error::{FdmError, Result};
use crate::fileio::{put_f64, put_u32, read_file, write_atomic, Reader};
use crate::nn::{load_tensors, read_tensors, write_tensors, Params};
use crate::replay::NormStats;
use crate::terrain::PROPRIO_DIM;

pub const CHECKPOINT_MAGIC: &[u8; 8] = b"FDMCK001";

pub fn checkpoint_to_bytes(fdm: &Fdm) -> Vec<u8> {
    let mut buf = Vec::new();
    buf.extend_from_slice(CHECKPOINT_MAGIC);
    let text = render_section(&fdm.cfg);
    put_u32(&mut buf, text.len() as u32);
    buf.extend_from_slice(text.as_bytes());
    for &m in &fdm.norm.mean {
        put_f64(&mut buf, m);
    }
    for &s in &fdm.norm.std {
        put_f64(&mut buf, s);
    }
    put_u32(&mut buf, fdm.net.tensors().len() as u32);
    write_tensors(&mut buf, &fdm.net);
    buf
}

pub fn checkpoint_from_bytes(bytes: &[u8]) -> Result<Fdm> {
    let mut r = Reader::new(bytes);
    r.expect_magic(CHECKPOINT_MAGIC)?;
    let len = r.u32()? as usize;
    let text = std::str::from_utf8(r.take(len)?).map_err(|e| FdmError::Format(format!("config text: {e}")))?;
    let mut cfg = FdmConfig::default();
    apply_lines(&mut cfg, text).map_err(|e| FdmError::Format(format!("embedded config: {e}")))?;
    let mut norm = NormStats::identity();
    for i in 0..PROPRIO_DIM {
        norm.mean[i] = r.f64()?;
    }
    for i in 0..PROPRIO_DIM {
        norm.std[i] = r.f64()?;
    }
    let count = r.u32()? as usize;
    let tensors = read_tensors(&mut r, count)?;
    r.finish()?;
    let mut net = FdmNet::zeros(&cfg);
    load_tensors(&mut net, &tensors)?;
    Ok(Fdm { cfg, net, norm })
}

pub fn write_checkpoint(path: &Path, fdm: &Fdm) -> Result<()> {
    write_atomic(path, &checkpoint_to_bytes(fdm))
}

pub fn read_checkpoint(path: &Path) -> Result<Fdm> {
    checkpoint_from_bytes(&read_file(path)?)
}

impl Fdm {
    /// Replaces the weights with those of `other`, which must share the
    /// architecture.
    pub fn load_weights(&mut self, other: &Fdm) -> Result<()> {
        if !self.cfg.same_architecture(&other.cfg) {
            return Err(FdmError::Incompatible("architectures differ".into()));
        }
        self.net = other.net.clone();
        self.norm = other.norm.clone();
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn model() -> Fdm {
        let cfg = FdmConfig {
            pred_hidden: 12,
            state_head: [10, 9],
            use_proprio: false,
            ..FdmConfig::default()
        };
        let mut f = Fdm::new(cfg, 7).unwrap();
        f.norm.mean[3] = 0.25;
        f.norm.std[7] = 3.5;
        f
    }

    #[test]
    fn bytes_round_trip_exactly() {
        let f = model();
        let bytes = checkpoint_to_bytes(&f);
        assert_eq!(&bytes[..8], b"FDMCK001");
        let back = checkpoint_from_bytes(&bytes).unwrap();
        assert_eq!(back, f);
        assert_eq!(checkpoint_to_bytes(&back), bytes);
    }

    #[test]
    fn file_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("m.fdmck");
        let f = model();
        write_checkpoint(&p, &f).unwrap();
        assert_eq!(read_checkpoint(&p).unwrap(), f);
    }

    #[test]
    fn corrupt_files_rejected() {
        let bytes = checkpoint_to_bytes(&model());
        assert!(checkpoint_from_bytes(&bytes[..bytes.len() - 1]).is_err());
        let mut b = bytes.clone();
        b[0] = b'X';
        assert!(checkpoint_from_bytes(&b).is_err());
        let mut other = Fdm::new(FdmConfig::default(), 1).unwrap();
        assert!(matches!(other.load_weights(&model()), Err(FdmError::Incompatible(_))));
    }
}
