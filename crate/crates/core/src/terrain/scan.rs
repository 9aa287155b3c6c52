use super::{footprint_stats, SimParams, TerrainGrid};
use crate::geom::Se2Pose;

pub const SCAN_CLIP: f32 = 2.0;
/// Virtual camera height above the base.
pub const CAMERA_HEIGHT: f64 = 0.4;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ScanConfig {
    /// Cells along the robot's x axis.
    pub u: usize,
    /// Cells along the robot's y axis.
    pub v: usize,
    pub resolution: f64,
}

impl Default for ScanConfig {
    fn default() -> Self {
        Self {
            u: 32,
            v: 32,
            resolution: 0.2,
        }
    }
}

/// Robot-centred, yaw-aligned height grid relative to the base height.
/// `values[a * v + b]` is the cell `a` steps along body x and `b` along body y.
#[derive(Debug, Clone, PartialEq)]
pub struct HeightScan {
    pub u: usize,
    pub v: usize,
    pub values: Vec<f32>,
    pub occluded: Vec<bool>,
}

impl HeightScan {
    pub fn zeros(u: usize, v: usize) -> Self {
        Self {
            u,
            v,
            values: vec![0.0; u * v],
            occluded: vec![false; u * v],
        }
    }

    pub fn get(&self, a: usize, b: usize) -> f32 {
        self.values[a * self.v + b]
    }
}

impl ScanConfig {
    /// Body-frame offset of scan cell `(a, b)`.
    pub fn cell_offset(&self, a: usize, b: usize) -> (f64, f64) {
        (
            (a as f64 - (self.u as f64 - 1.0) / 2.0) * self.resolution,
            (b as f64 - (self.v as f64 - 1.0) / 2.0) * self.resolution,
        )
    }
}

/// Max height over a 2×2 subsample of a scan cell so thin walls are not missed.
fn cell_height(grid: &TerrainGrid, x: f64, y: f64, res: f64) -> f64 {
    let q = res / 4.0;
    let mut m = f64::NEG_INFINITY;
    for (dx, dy) in [(-q, -q), (q, -q), (-q, q), (q, q)] {
        m = m.max(grid.height_at(x + dx, y + dy));
    }
    m
}

/// Marches from the camera towards the target. Returns `None` if the line of
/// sight is clear, otherwise the height of the first terrain sample above it.
fn first_blocker(grid: &TerrainGrid, cam: (f64, f64, f64), target: (f64, f64, f64), stop_short: f64) -> Option<f64> {
    let (dx, dy) = (target.0 - cam.0, target.1 - cam.1);
    let dist = dx.hypot(dy);
    let reach = dist - stop_short;
    if reach <= 0.0 {
        return None;
    }
    let step = grid.cell_size;
    let mut d = step;
    while d < reach {
        let s = d / dist;
        let h = grid.height_at(cam.0 + s * dx, cam.1 + s * dy);
        let line = cam.2 + s * (target.2 - cam.2);
        if h > line + 1e-3 {
            return Some(h);
        }
        d += step;
    }
    None
}

/// Samples the scan around `pose`. A cell is visible if either virtual camera
/// (front and rear edge of the footprint, `CAMERA_HEIGHT` above the base) has
/// a clear line of sight to it; otherwise it is flagged and takes the height
/// of the first occluding surface seen from the nearer camera.
pub fn sample_height_scan(pose: &Se2Pose, grid: &TerrainGrid, params: &SimParams, cfg: &ScanConfig) -> HeightScan {
    let base = {
        let st = footprint_stats(pose, grid, params.footprint_radius);
        if st.out_of_bounds && st.min_height > st.max_height {
            0.0
        } else {
            st.mean_height
        }
    };
    let r = params.footprint_radius;
    let cams = [pose.transform_point(r, 0.0), pose.transform_point(-r, 0.0)];
    let cam_z = base + CAMERA_HEIGHT;
    let mut scan = HeightScan::zeros(cfg.u, cfg.v);
    for a in 0..cfg.u {
        for b in 0..cfg.v {
            let (ox, oy) = cfg.cell_offset(a, b);
            let (tx, ty) = pose.transform_point(ox, oy);
            let th = cell_height(grid, tx, ty, cfg.resolution);
            let mut order = [0usize, 1];
            let d0 = (cams[0].0 - tx).hypot(cams[0].1 - ty);
            let d1 = (cams[1].0 - tx).hypot(cams[1].1 - ty);
            if d1 < d0 {
                order = [1, 0];
            }
            let mut fill = None;
            for (k, &c) in order.iter().enumerate() {
                match first_blocker(grid, (cams[c].0, cams[c].1, cam_z), (tx, ty, th), cfg.resolution) {
                    None => {
                        fill = None;
                        break;
                    }
                    Some(h) => {
                        if k == 0 {
                            fill = Some(h);
                        }
                    }
                }
            }
            let idx = a * cfg.v + b;
            let (h, occ) = match fill {
                None => (th, false),
                Some(h) => (h, true),
            };
            scan.values[idx] = ((h - base) as f32).clamp(-SCAN_CLIP, SCAN_CLIP);
            scan.occluded[idx] = occ;
        }
    }
    scan
}

#[cfg(test)]
mod tests {
    use super::*;

    fn params() -> SimParams {
        SimParams::default()
    }

    #[test]
    fn plane_scan_is_zero_and_clear() {
        let g = TerrainGrid::flat(200, 200, 0.1);
        let s = sample_height_scan(&Se2Pose::new(10.0, 10.0, 0.7), &g, &params(), &ScanConfig::default());
        assert!(s.values.iter().all(|&v| v == 0.0));
        assert!(s.occluded.iter().all(|&o| !o));
    }

    /// Wall at x in [11.6, 11.8) for all y; robot at (10, 10) facing +x.
    fn walled() -> TerrainGrid {
        let mut g = TerrainGrid::flat(200, 200, 0.1);
        for j in 0..200 {
            for i in 116..118 {
                g.set(i, j, 1.2);
            }
        }
        g
    }

    #[test]
    fn wall_is_seen_and_shadows_cells_behind() {
        let g = walled();
        let cfg = ScanConfig::default();
        let s = sample_height_scan(&Se2Pose::new(10.0, 10.0, 0.0), &g, &params(), &cfg);
        let mut saw_wall = false;
        let mut shadowed = 0;
        for a in 0..cfg.u {
            for b in 0..cfg.v {
                let (ox, _) = cfg.cell_offset(a, b);
                let x = 10.0 + ox;
                let v = s.get(a, b);
                let occ = s.occluded[a * cfg.v + b];
                if (11.6..11.8).contains(&x) {
                    assert!(!occ);
                    assert!((v - 1.2).abs() < 1e-6, "wall cell reads {v}");
                    saw_wall = true;
                }
                if x > 12.2 {
                    assert!(occ, "cell behind wall at x={x} visible");
                    assert!((v - 1.2).abs() < 1e-6);
                    shadowed += 1;
                }
                if x < 11.3 {
                    assert!(!occ);
                    assert_eq!(v, 0.0);
                }
            }
        }
        assert!(saw_wall);
        assert!(shadowed > 0);
    }

    #[test]
    fn occluded_cells_have_visible_occluder_on_ray() {
        let g = crate::terrain::generate_terrain(
            crate::terrain::TerrainKind::Mixed2d3d,
            11,
            crate::terrain::TerrainSize::default(),
        )
        .unwrap();
        let p = params();
        let cfg = ScanConfig::default();
        let mut rng = crate::rng::rng_from_seed(1);
        let mut checked = 0;
        for _ in 0..10 {
            let pose = crate::terrain::sample_free_pose(&g, &p, &mut rng).unwrap();
            let s = sample_height_scan(&pose, &g, &p, &cfg);
            let base = footprint_stats(&pose, &g, p.footprint_radius).mean_height;
            for (idx, occ) in s.occluded.iter().enumerate() {
                if !*occ {
                    continue;
                }
                let (a, b) = (idx / cfg.v, idx % cfg.v);
                let (ox, oy) = cfg.cell_offset(a, b);
                let (tx, ty) = pose.transform_point(ox, oy);
                // walk the ray from each camera; some sample before the target
                // must carry the fill height and itself be visible
                let fill = s.values[idx] as f64 + base;
                let mut found = false;
                for sign in [1.0, -1.0] {
                    let c = pose.transform_point(sign * p.footprint_radius, 0.0);
                    let dist = (tx - c.0).hypot(ty - c.1);
                    let mut d = g.cell_size;
                    while d < dist {
                        let (px, py) = (c.0 + (tx - c.0) * d / dist, c.1 + (ty - c.1) * d / dist);
                        let h = g.height_at(px, py);
                        if (h - fill).abs() < 1e-4 || (fill >= base + 2.0 && h >= fill) {
                            let vis = first_blocker(&g, (c.0, c.1, base + CAMERA_HEIGHT), (px, py, h), 0.0);
                            if vis.is_none() {
                                found = true;
                                break;
                            }
                        }
                        d += g.cell_size;
                    }
                    if found {
                        break;
                    }
                }
                assert!(found, "occluded cell {idx} without visible occluder");
                checked += 1;
            }
        }
        assert!(checked > 0);
    }

    #[test]
    fn values_are_clipped() {
        let mut g = TerrainGrid::flat(100, 100, 0.1);
        for j in 0..100 {
            for i in 60..62 {
                g.set(i, j, 5.0);
            }
        }
        let s = sample_height_scan(&Se2Pose::new(5.0, 5.0, 0.0), &g, &params(), &ScanConfig::default());
        assert!(s.values.iter().all(|v| (-2.0..=2.0).contains(v)));
        assert!(s.values.iter().any(|&v| v == 2.0));
    }
}
