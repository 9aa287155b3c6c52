//! `FDMTG001` terrain files: magic, u32 W, u32 H, f32 cell size, then W·H
//! f32 heights row-major, all little-endian.

use std::path::Path;

use super::{TerrainGrid, TerrainSource};
use crate::error::{FdmError, Result};
use crate::fileio::{put_f32, put_u32, read_file, write_atomic, Reader};

pub const TERRAIN_MAGIC: &[u8; 8] = b"FDMTG001";

pub fn terrain_to_bytes(grid: &TerrainGrid) -> Vec<u8> {
    let mut buf = Vec::with_capacity(20 + 4 * grid.heights.len());
    buf.extend_from_slice(TERRAIN_MAGIC);
    put_u32(&mut buf, grid.width as u32);
    put_u32(&mut buf, grid.height as u32);
    put_f32(&mut buf, grid.cell_size as f32);
    for &h in &grid.heights {
        put_f32(&mut buf, h);
    }
    buf
}

pub fn terrain_from_bytes(bytes: &[u8]) -> Result<TerrainGrid> {
    let mut r = Reader::new(bytes);
    r.expect_magic(TERRAIN_MAGIC)?;
    let width = r.u32()? as usize;
    let height = r.u32()? as usize;
    let cell_size = r.f32()?;
    if !(cell_size > 0.0) || !cell_size.is_finite() {
        return Err(FdmError::Format(format!("bad cell size {cell_size}")));
    }
    let mut heights = Vec::with_capacity(width * height);
    for _ in 0..width * height {
        let h = r.f32()?;
        if !h.is_finite() {
            return Err(FdmError::Format("non-finite height".into()));
        }
        heights.push(h);
    }
    r.finish()?;
    Ok(TerrainGrid {
        width,
        height,
        cell_size: cell_size as f64,
        heights,
        source: TerrainSource::Imported,
    })
}

pub fn write_terrain(path: &Path, grid: &TerrainGrid) -> Result<()> {
    write_atomic(path, &terrain_to_bytes(grid))
}

pub fn read_terrain(path: &Path) -> Result<TerrainGrid> {
    terrain_from_bytes(&read_file(path)?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::terrain::{generate_terrain, TerrainKind, TerrainSize};

    #[test]
    fn bytes_round_trip_exactly() {
        let g = generate_terrain(TerrainKind::Mixed2d3d, 4, TerrainSize::default()).unwrap();
        let bytes = terrain_to_bytes(&g);
        assert_eq!(&bytes[..8], b"FDMTG001");
        assert_eq!(bytes.len(), 20 + 4 * 200 * 200);
        let back = terrain_from_bytes(&bytes).unwrap();
        assert_eq!(back.heights, g.heights);
        assert_eq!(terrain_to_bytes(&back), bytes);
    }

    #[test]
    fn rejects_garbage() {
        assert!(terrain_from_bytes(b"FDMTG002\0\0\0\0").is_err());
        let g = TerrainGrid::flat(3, 2, 0.1);
        let mut bytes = terrain_to_bytes(&g);
        bytes.pop();
        assert!(terrain_from_bytes(&bytes).is_err());
    }

    #[test]
    fn file_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("t.fdmtg");
        let g = generate_terrain(TerrainKind::Stairs3d, 1, TerrainSize { width: 50, height: 40, cell_size: 0.1 }).unwrap();
        write_terrain(&p, &g).unwrap();
        let back = read_terrain(&p).unwrap();
        assert_eq!(back.heights, g.heights);
        assert_eq!((back.width, back.height), (50, 40));
    }
}
