//! 2.5D heightmap worlds, the ground-truth robot dynamics on them, and the
//! observations a robot standing on them would receive.

mod generate;
mod io;
mod scan;
mod sim;

use std::fmt;
use std::str::FromStr;

use crate::error::FdmError;

pub use generate::{generate_terrain, TerrainSize};
pub use io::{read_terrain, terrain_from_bytes, terrain_to_bytes, write_terrain};
pub use scan::{sample_height_scan, HeightScan, ScanConfig};
pub use sim::{
    check_failure, footprint_stats, is_rough, make_proprio_obs, sample_free_pose, step_dynamics,
    FootprintStats, ProprioObs, SimParams, SimState, PROPRIO_DIM,
};

/// Height reported for any query outside the grid.
pub const OUT_OF_BOUNDS_HEIGHT: f64 = 2.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum TerrainKind {
    Plane,
    Obstacles2d,
    Mixed2d3d,
    Stairs3d,
}

impl TerrainKind {
    pub const ALL: [TerrainKind; 4] = [
        TerrainKind::Plane,
        TerrainKind::Obstacles2d,
        TerrainKind::Mixed2d3d,
        TerrainKind::Stairs3d,
    ];

    pub fn as_str(&self) -> &'static str {
        match self {
            TerrainKind::Plane => "plane",
            TerrainKind::Obstacles2d => "obstacles2d",
            TerrainKind::Mixed2d3d => "mixed2d3d",
            TerrainKind::Stairs3d => "stairs3d",
        }
    }
}

impl fmt::Display for TerrainKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for TerrainKind {
    type Err = FdmError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim() {
            "plane" => Ok(TerrainKind::Plane),
            "obstacles2d" => Ok(TerrainKind::Obstacles2d),
            "mixed2d3d" => Ok(TerrainKind::Mixed2d3d),
            "stairs3d" => Ok(TerrainKind::Stairs3d),
            other => Err(FdmError::Config(format!("unknown terrain kind '{other}'"))),
        }
    }
}

/// Where a grid came from.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TerrainSource {
    Generated { kind: TerrainKind, seed: u64 },
    Imported,
}

/// Row-major heightmap; cell `(i, j)` covers `[i·cs, (i+1)·cs) × [j·cs, (j+1)·cs)`
/// with `i` along world x.
#[derive(Debug, Clone, PartialEq)]
pub struct TerrainGrid {
    pub width: usize,
    pub height: usize,
    pub cell_size: f64,
    pub heights: Vec<f32>,
    pub source: TerrainSource,
}

impl TerrainGrid {
    pub fn flat(width: usize, height: usize, cell_size: f64) -> Self {
        Self {
            width,
            height,
            cell_size,
            heights: vec![0.0; width * height],
            source: TerrainSource::Imported,
        }
    }

    pub fn kind(&self) -> Option<TerrainKind> {
        match self.source {
            TerrainSource::Generated { kind, .. } => Some(kind),
            TerrainSource::Imported => None,
        }
    }

    pub fn extent(&self) -> (f64, f64) {
        (self.width as f64 * self.cell_size, self.height as f64 * self.cell_size)
    }

    #[inline]
    pub fn cell_of(&self, x: f64, y: f64) -> Option<(usize, usize)> {
        let fi = (x / self.cell_size).floor();
        let fj = (y / self.cell_size).floor();
        if fi < 0.0 || fj < 0.0 || fi >= self.width as f64 || fj >= self.height as f64 {
            None
        } else {
            Some((fi as usize, fj as usize))
        }
    }

    #[inline]
    pub fn cell_center(&self, i: usize, j: usize) -> (f64, f64) {
        ((i as f64 + 0.5) * self.cell_size, (j as f64 + 0.5) * self.cell_size)
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.heights[j * self.width + i] as f64
    }

    #[inline]
    pub fn set(&mut self, i: usize, j: usize, h: f64) {
        self.heights[j * self.width + i] = h as f32;
    }

    /// Nearest-cell height; [`OUT_OF_BOUNDS_HEIGHT`] outside the grid.
    #[inline]
    pub fn height_at(&self, x: f64, y: f64) -> f64 {
        match self.cell_of(x, y) {
            Some((i, j)) => self.get(i, j),
            None => OUT_OF_BOUNDS_HEIGHT,
        }
    }

    pub fn max_height(&self) -> f64 {
        self.heights.iter().fold(f64::NEG_INFINITY, |m, &h| m.max(h as f64))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn kind_parsing() {
        for k in TerrainKind::ALL {
            assert_eq!(k.as_str().parse::<TerrainKind>().unwrap(), k);
        }
        assert!(matches!("lava".parse::<TerrainKind>(), Err(FdmError::Config(_))));
    }

    #[test]
    fn cell_lookup() {
        let g = TerrainGrid::flat(10, 5, 0.1);
        assert_eq!(g.cell_of(0.05, 0.05), Some((0, 0)));
        assert_eq!(g.cell_of(0.95, 0.45), Some((9, 4)));
        assert_eq!(g.cell_of(1.01, 0.1), None);
        assert_eq!(g.cell_of(-0.01, 0.1), None);
        assert_eq!(g.height_at(-1.0, 0.0), OUT_OF_BOUNDS_HEIGHT);
    }
}
