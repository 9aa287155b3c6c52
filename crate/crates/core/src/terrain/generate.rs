use rand::Rng;

use super::{TerrainGrid, TerrainKind, TerrainSource};
use crate::error::{FdmError, Result};
use crate::rng::rng_from_seed;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TerrainSize {
    pub width: usize,
    pub height: usize,
    pub cell_size: f64,
}

impl Default for TerrainSize {
    fn default() -> Self {
        Self {
            width: 200,
            height: 200,
            cell_size: 0.1,
        }
    }
}

/// Direction a ramp or staircase climbs in.
#[derive(Debug, Clone, Copy)]
enum Axis {
    PosX,
    NegX,
    PosY,
    NegY,
}

/// Axis-aligned feature rectangle in meters.
#[derive(Debug, Clone, Copy)]
struct Rect {
    x0: f64,
    y0: f64,
    x1: f64,
    y1: f64,
}

impl Rect {
    fn overlaps(&self, o: &Rect, margin: f64) -> bool {
        self.x0 - margin < o.x1 && o.x0 - margin < self.x1 && self.y0 - margin < o.y1 && o.y0 - margin < self.y1
    }
}

struct Builder<'a, R: Rng> {
    grid: &'a mut TerrainGrid,
    rng: &'a mut R,
}

impl<R: Rng> Builder<'_, R> {
    fn world_extent(&self) -> (f64, f64) {
        self.grid.extent()
    }

    fn for_cells_in(&mut self, r: &Rect, mut f: impl FnMut(&mut TerrainGrid, usize, usize, f64, f64)) {
        let cs = self.grid.cell_size;
        let i0 = ((r.x0 / cs).floor().max(0.0)) as usize;
        let j0 = ((r.y0 / cs).floor().max(0.0)) as usize;
        let i1 = ((r.x1 / cs).ceil() as usize).min(self.grid.width);
        let j1 = ((r.y1 / cs).ceil() as usize).min(self.grid.height);
        for j in j0..j1 {
            for i in i0..i1 {
                let (cx, cy) = self.grid.cell_center(i, j);
                if cx >= r.x0 && cx < r.x1 && cy >= r.y0 && cy < r.y1 {
                    f(self.grid, i, j, cx, cy);
                }
            }
        }
    }

    fn random_rect(&mut self, len_along: f64, len_across: f64, axis: Axis, margin: f64) -> Rect {
        let (w, h) = self.world_extent();
        let (dx, dy) = match axis {
            Axis::PosX | Axis::NegX => (len_along, len_across),
            Axis::PosY | Axis::NegY => (len_across, len_along),
        };
        let x0 = self.rng.random_range(margin..(w - margin - dx).max(margin + 1e-3));
        let y0 = self.rng.random_range(margin..(h - margin - dy).max(margin + 1e-3));
        Rect {
            x0,
            y0,
            x1: x0 + dx,
            y1: y0 + dy,
        }
    }

    fn random_axis(&mut self) -> Axis {
        match self.rng.random_range(0..4) {
            0 => Axis::PosX,
            1 => Axis::NegX,
            2 => Axis::PosY,
            _ => Axis::NegY,
        }
    }

    /// Sets heights inside `rect` from a profile over the climb coordinate.
    fn extrude(&mut self, rect: &Rect, axis: Axis, profile: impl Fn(f64) -> f64) {
        self.for_cells_in(rect, |g, i, j, cx, cy| {
            let s = match axis {
                Axis::PosX => cx - rect.x0,
                Axis::NegX => rect.x1 - cx,
                Axis::PosY => cy - rect.y0,
                Axis::NegY => rect.y1 - cy,
            };
            g.set(i, j, profile(s));
        });
    }

    fn wall(&mut self) {
        let (w, h) = self.world_extent();
        let len = self.rng.random_range(1.0..4.0);
        let thick = self.rng.random_range(0.2..0.4);
        let height = self.rng.random_range(1.0..2.0);
        let ax = self.rng.random_range(0.5..w - 0.5);
        let ay = self.rng.random_range(0.5..h - 0.5);
        let ang: f64 = self.rng.random_range(0.0..std::f64::consts::PI);
        let (bx, by) = (ax + len * ang.cos(), ay + len * ang.sin());
        let r = Rect {
            x0: ax.min(bx) - thick,
            y0: ay.min(by) - thick,
            x1: ax.max(bx) + thick,
            y1: ay.max(by) + thick,
        };
        self.for_cells_in(&r, |g, i, j, cx, cy| {
            let (vx, vy) = (bx - ax, by - ay);
            let t = (((cx - ax) * vx + (cy - ay) * vy) / (vx * vx + vy * vy)).clamp(0.0, 1.0);
            let d = (cx - ax - t * vx).hypot(cy - ay - t * vy);
            if d <= thick / 2.0 {
                g.set(i, j, height);
            }
        });
    }

    fn pillar(&mut self) {
        let (w, h) = self.world_extent();
        let size = self.rng.random_range(0.4..1.0);
        let height = self.rng.random_range(1.0..2.0);
        let cx0 = self.rng.random_range(0.5..w - 0.5);
        let cy0 = self.rng.random_range(0.5..h - 0.5);
        let round = self.rng.random_bool(0.5);
        let r = Rect {
            x0: cx0 - size / 2.0,
            y0: cy0 - size / 2.0,
            x1: cx0 + size / 2.0,
            y1: cy0 + size / 2.0,
        };
        self.for_cells_in(&r, |g, i, j, cx, cy| {
            if !round || (cx - cx0).hypot(cy - cy0) <= size / 2.0 {
                g.set(i, j, height);
            }
        });
    }

    fn rough_patch(&mut self) {
        let axis = Axis::PosX;
        let a = self.rng.random_range(1.5..4.0);
        let b = self.rng.random_range(1.5..4.0);
        let r = self.random_rect(a, b, axis, 0.5);
        let mut noise: Vec<f64> = Vec::new();
        self.for_cells_in(&r, |_, _, _, _, _| noise.push(0.0));
        for n in noise.iter_mut() {
            *n = self.rng.random_range(0.0..0.06);
        }
        let mut k = 0;
        self.for_cells_in(&r, |g, i, j, _, _| {
            g.set(i, j, g.get(i, j) + noise[k]);
            k += 1;
        });
    }

    /// Staircase up to a plateau and back down. Returns the footprint.
    fn staircase(&mut self, riser: f64, tread: f64, steps: usize, placed: &mut Vec<Rect>) -> Option<Rect> {
        let plateau = self.rng.random_range(0.8..2.0);
        let width = self.rng.random_range(1.5..3.0);
        let len = 2.0 * steps as f64 * tread + plateau;
        let axis = self.random_axis();
        let rect = self.place(len, width, axis, placed)?;
        let up = steps as f64 * tread;
        self.extrude(&rect, axis, |s| {
            if s < up {
                riser * ((s / tread).floor() + 1.0).min(steps as f64)
            } else if s < up + plateau {
                riser * steps as f64
            } else {
                let k = ((s - up - plateau) / tread).floor();
                (riser * (steps as f64 - k)).max(riser)
            }
        });
        Some(rect)
    }

    /// Ramp up to a plateau, then down at the same slope or a sheer drop.
    fn ramp(&mut self, slope: f64, rise: f64, placed: &mut Vec<Rect>) -> Option<Rect> {
        let plateau = self.rng.random_range(0.8..2.0);
        let width = self.rng.random_range(1.5..3.0);
        let up = rise / slope;
        let descend = self.rng.random_bool(0.5);
        let len = up + plateau + if descend { up } else { 0.0 };
        let axis = self.random_axis();
        let rect = self.place(len, width, axis, placed)?;
        self.extrude(&rect, axis, |s| {
            if s < up {
                slope * s
            } else if s < up + plateau {
                rise
            } else {
                (rise - slope * (s - up - plateau)).max(0.0)
            }
        });
        Some(rect)
    }

    fn block(&mut self, placed: &mut Vec<Rect>) {
        let a = self.rng.random_range(0.6..2.0);
        let b = self.rng.random_range(0.6..2.0);
        let height = self.rng.random_range(0.3..0.6);
        if let Some(rect) = self.place(a, b, Axis::PosX, placed) {
            self.extrude(&rect, Axis::PosX, |_| height);
        }
    }

    fn place(&mut self, along: f64, across: f64, axis: Axis, placed: &mut Vec<Rect>) -> Option<Rect> {
        for _ in 0..50 {
            let r = self.random_rect(along, across, axis, 0.5);
            if placed.iter().all(|p| !p.overlaps(&r, 0.8)) {
                placed.push(r);
                return Some(r);
            }
        }
        None
    }

    fn obstacles(&mut self, walls: usize, pillars: usize) {
        for _ in 0..walls {
            self.wall();
        }
        for _ in 0..pillars {
            self.pillar();
        }
    }

    fn structures(&mut self, count: usize) {
        let mut placed = Vec::new();
        for _ in 0..count / 2 {
            self.rough_patch();
        }
        // The first two are always present: one climbable staircase and one
        // ramp too steep for the default slope limit.
        let steps = self.rng.random_range(3..6);
        self.staircase(0.17, 0.4, steps, &mut placed);
        let slope = self.rng.random_range(0.95..1.4);
        let rise = self.rng.random_range(0.9..1.4);
        self.ramp(slope, rise, &mut placed);
        for _ in 0..count {
            match self.rng.random_range(0..5) {
                0 | 1 => {
                    let riser = self.rng.random_range(0.10..0.17);
                    let tread = self.rng.random_range(0.3..0.45f64).max(2.0 * riser);
                    let steps = self.rng.random_range(2..6);
                    self.staircase(riser, tread, steps, &mut placed);
                }
                2 => {
                    let slope = self.rng.random_range(0.15..0.45);
                    let rise = self.rng.random_range(0.3..0.8);
                    self.ramp(slope, rise, &mut placed);
                }
                3 => {
                    let slope = self.rng.random_range(0.9..1.5);
                    let rise = self.rng.random_range(0.4..0.9);
                    self.ramp(slope, rise, &mut placed);
                }
                _ => self.block(&mut placed),
            }
        }
    }
}

/// Deterministic world for `(kind, seed, size)`.
///
/// Obstacle worlds hold walls and pillars at least 1 m tall on flat ground;
/// structured worlds hold staircases (risers ≤ 0.17 m), ramps of both
/// climbable and too-steep slope, low blocks and rough patches. Every
/// structured world contains at least one climbable staircase and one ramp
/// steeper than 0.9.
pub fn generate_terrain(kind: TerrainKind, seed: u64, size: TerrainSize) -> Result<TerrainGrid> {
    if size.width == 0 || size.height == 0 || size.cell_size <= 0.0 || !size.cell_size.is_finite() {
        return Err(FdmError::Config(format!("invalid terrain size {size:?}")));
    }
    let mut grid = TerrainGrid {
        width: size.width,
        height: size.height,
        cell_size: size.cell_size,
        heights: vec![0.0; size.width * size.height],
        source: TerrainSource::Generated { kind, seed },
    };
    let area = grid.extent().0 * grid.extent().1;
    let mut rng = rng_from_seed(seed ^ 0x7E44_A1_u64.wrapping_mul(kind as u64 + 1));
    let mut b = Builder {
        grid: &mut grid,
        rng: &mut rng,
    };
    let per100 = |k: f64| ((k * area / 100.0).round() as usize).max(1);
    match kind {
        TerrainKind::Plane => {}
        TerrainKind::Obstacles2d => b.obstacles(per100(4.5), per100(7.0)),
        TerrainKind::Stairs3d => b.structures(per100(4.0)),
        TerrainKind::Mixed2d3d => {
            b.structures(per100(2.0));
            b.obstacles(per100(2.5), per100(3.5));
        }
    }
    Ok(grid)
}
