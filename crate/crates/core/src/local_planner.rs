//! Rolling local costmap and elastic-band smoothing of the global path.
//!
//! The costmap is a world-aligned window around the robot, rebuilt every
//! tick from the static traversable map plus the current laser scan. The
//! band is a chain of overlapping bubbles whose radius is the obstacle
//! clearance at their center.

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::env_model::{Laser, Pose};
use crate::error::{NavError, Result};
use crate::global_planner::Point;
use crate::grid::{distance_transform, supercover, CellState, Grid2, GridGeometry};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct LocalConfig {
    /// Window extent along x, meters.
    pub width: f64,
    /// Window extent along y, meters.
    pub length: f64,
    pub robot_radius: f64,
    /// Contraction gain.
    pub k_int: f64,
    /// Repulsion gain.
    pub k_ext: f64,
    /// Clearance below which bubbles are pushed away from obstacles.
    pub influence: f64,
    /// Optimization sweeps per control tick.
    pub sweeps: usize,
}

impl Default for LocalConfig {
    fn default() -> Self {
        Self { width: 3.0, length: 4.0, robot_radius: 0.3, k_int: 0.4, k_ext: 0.6, influence: 0.8, sweeps: 20 }
    }
}

impl LocalConfig {
    pub fn validate(&self) -> Result<()> {
        let positive = [("local.width", self.width), ("local.length", self.length), ("local.influence", self.influence)];
        for (field, v) in positive {
            if !(v > 0.0) || !v.is_finite() {
                return Err(NavError::param(field, "must be finite and > 0"));
            }
        }
        if !(self.robot_radius >= 0.0) {
            return Err(NavError::param("local.robot_radius", "must be >= 0"));
        }
        for (field, v) in [("local.k_int", self.k_int), ("local.k_ext", self.k_ext)] {
            if !(0.0..=1.0).contains(&v) {
                return Err(NavError::param(field, "must be in [0, 1]"));
            }
        }
        Ok(())
    }
}

/// Distance in meters from every cell center to the nearest Occupied or
/// Unknown cell center. Cells past the grid border count as free; with no
/// obstacles at all the field is capped at the grid diagonal.
pub fn clearance_field(grid: &Grid2<CellState>) -> Vec<f64> {
    let g = grid.geometry;
    let field = distance_transform(g, |i| grid.data[i] != CellState::Free);
    let cap = (g.width as f64).hypot(g.height as f64) * g.resolution;
    (0..g.len()).map(|i| field.meters(i).min(cap)).collect()
}

/// Returns are marked this far behind the reported surface so the occupied
/// cell is the solid one, not the free cell in front of it.
const HIT_DEPTH: f64 = 1e-3;

/// Robot-centered trinary window fused from the static map and one scan.
#[derive(Debug, Clone)]
pub struct LocalCostmap {
    grid: Grid2<CellState>,
    clearance: Vec<f64>,
    width_cells: usize,
    length_cells: usize,
}

impl LocalCostmap {
    /// An empty window with `width x length` meters at the static map's
    /// resolution.
    pub fn new(static_geometry: &GridGeometry, width: f64, length: f64) -> Result<Self> {
        if !(width > 0.0 && length > 0.0) {
            return Err(NavError::param("costmap", "window extents must be > 0"));
        }
        let r = static_geometry.resolution;
        let width_cells = ((width / r).round() as usize).max(1);
        let length_cells = ((length / r).round() as usize).max(1);
        let geometry = GridGeometry::new(static_geometry.origin, r, width_cells, length_cells);
        Ok(Self {
            grid: Grid2::filled(geometry, CellState::Unknown),
            clearance: vec![0.0; width_cells * length_cells],
            width_cells,
            length_cells,
        })
    }

    pub fn geometry(&self) -> &GridGeometry {
        &self.grid.geometry
    }

    pub fn grid(&self) -> &Grid2<CellState> {
        &self.grid
    }

    pub fn contains(&self, p: Point) -> bool {
        self.grid.geometry.index_of(p[0], p[1]).is_some()
    }

    /// Clearance of the cell containing `p`; points outside the window take
    /// the nearest border cell.
    pub fn clearance_at(&self, p: Point) -> f64 {
        let g = &self.grid.geometry;
        let (cx, cy) = g.cell_of(p[0], p[1]);
        let cx = cx.clamp(0, g.width as i64 - 1) as usize;
        let cy = cy.clamp(0, g.height as i64 - 1) as usize;
        self.clearance[g.index(cx, cy)]
    }

    /// Central-difference gradient of the clearance field at `p`.
    pub fn clearance_gradient(&self, p: Point) -> Point {
        let h = self.grid.geometry.resolution;
        let gx = (self.clearance_at([p[0] + h, p[1]]) - self.clearance_at([p[0] - h, p[1]])) / (2.0 * h);
        let gy = (self.clearance_at([p[0], p[1] + h]) - self.clearance_at([p[0], p[1] - h])) / (2.0 * h);
        [gx, gy]
    }

    /// Re-centers the window on `pose` and fuses the static map with the
    /// scan: laser endpoints become Occupied, cells swept before an endpoint
    /// become Free unless the static map has them Occupied. `pitch` is the
    /// robot's nose-up pitch, used to project beams onto the ground plane.
    pub fn update(&mut self, pose: &Pose, pitch: f64, ranges: &[f64], laser: &Laser, static_map: &Grid2<CellState>) {
        let sg = static_map.geometry;
        let r = sg.resolution;
        let half_w = self.width_cells as f64 * r / 2.0;
        let half_l = self.length_cells as f64 * r / 2.0;
        let ox = sg.origin[0] + ((pose.x - half_w - sg.origin[0]) / r).round() * r;
        let oy = sg.origin[1] + ((pose.y - half_l - sg.origin[1]) / r).round() * r;
        let g = GridGeometry::new([ox, oy], r, self.width_cells, self.length_cells);
        self.grid.geometry = g;
        let shift_x = ((ox - sg.origin[0]) / r).round() as i64;
        let shift_y = ((oy - sg.origin[1]) / r).round() as i64;
        for cy in 0..g.height {
            for cx in 0..g.width {
                let s = static_map.get(cx as i64 + shift_x, cy as i64 + shift_y).copied().unwrap_or(CellState::Unknown);
                self.grid.data[cy * g.width + cx] = s;
            }
        }

        let (sin_y, cos_y) = pose.yaw.sin_cos();
        let cos_p = pitch.cos();
        // the mount leans back along the heading when pitched up
        let lean = laser.mount_height * pitch.sin();
        let origin = [pose.x - lean * cos_y, pose.y - lean * sin_y];
        let mut hit = vec![false; g.len()];
        let mut endpoints = Vec::with_capacity(ranges.len());
        for (i, &range) in ranges.iter().enumerate() {
            let a = laser.beam_angle(i);
            let (bx, by) = (a.cos() * cos_p, a.sin());
            let dir = [cos_y * bx - sin_y * by, sin_y * bx + cos_y * by];
            let is_hit = range < laser.max_range;
            let reach = if is_hit { range + HIT_DEPTH } else { range };
            let end = [origin[0] + reach * dir[0], origin[1] + reach * dir[1]];
            if is_hit {
                if let Some(idx) = g.index_of(end[0], end[1]) {
                    hit[idx] = true;
                }
            }
            endpoints.push((end, is_hit));
        }
        for (end, is_hit) in endpoints {
            let end_cell = g.cell_of(end[0], end[1]);
            supercover(g.origin, r, origin, end, |c| {
                if !g.in_grid(c[0], c[1]) {
                    return false;
                }
                if is_hit && (c[0], c[1]) == end_cell {
                    return false;
                }
                let idx = g.index(c[0] as usize, c[1] as usize);
                if !hit[idx] && self.grid.data[idx] == CellState::Unknown {
                    self.grid.data[idx] = CellState::Free;
                }
                true
            });
        }
        for (idx, &h) in hit.iter().enumerate() {
            if h {
                self.grid.data[idx] = CellState::Occupied;
            }
        }
        self.clearance = clearance_field(&self.grid);
    }

    /// Laser-made obstacles: Occupied window cells that are not Occupied in
    /// the static map, as world cell centers.
    pub fn observed_obstacles(&self, static_map: &Grid2<CellState>) -> Vec<Point> {
        let g = &self.grid.geometry;
        (0..g.len())
            .filter(|&i| self.grid.data[i] == CellState::Occupied)
            .map(|i| g.center_of_index(i))
            .filter(|c| static_map.at(c[0], c[1]) != Some(&CellState::Occupied))
            .collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Bubble {
    pub center: Point,
    pub radius: f64,
}

/// Ordered bubbles from the robot to the window-side anchor.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct Band {
    pub bubbles: Vec<Bubble>,
}

impl Band {
    pub fn len(&self) -> usize {
        self.bubbles.len()
    }

    pub fn is_empty(&self) -> bool {
        self.bubbles.is_empty()
    }

    pub fn centers(&self) -> Vec<Point> {
        self.bubbles.iter().map(|b| b.center).collect()
    }

    pub fn length(&self) -> f64 {
        crate::global_planner::path_length(&self.centers())
    }

    pub fn min_clearance(&self) -> f64 {
        self.bubbles.iter().map(|b| b.radius).fold(f64::INFINITY, f64::min)
    }

    /// CSV rows `tick,bubble,x,y,radius` for this band.
    pub fn trace_rows(&self, tick: usize, out: &mut String) {
        for (i, b) in self.bubbles.iter().enumerate() {
            let _ = writeln!(out, "{tick},{i},{:.6},{:.6},{:.6}", b.center[0], b.center[1], b.radius);
        }
    }
}

pub const BAND_TRACE_HEADER: &str = "tick,bubble,x,y,radius\n";

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BandFailure {
    /// A waypoint (or required intermediate point) has clearance at or
    /// below the robot radius.
    Collision { index: usize },
    /// Overlap could not be restored by subdivision.
    Gap { index: usize },
}

fn dist(a: Point, b: Point) -> f64 {
    (a[0] - b[0]).hypot(a[1] - b[1])
}

/// Consecutive bubbles overlap once the robot radius is taken off both, so
/// the robot fits everywhere on the segment between their centers.
fn overlaps(a: &Bubble, b: &Bubble, robot_radius: f64) -> bool {
    dist(a.center, b.center) < (a.radius - robot_radius) + (b.radius - robot_radius)
}

const MAX_BUBBLES: usize = 4096;

/// Inserts midpoints until every consecutive pair overlaps. Inserted
/// bubbles must clear `floor`.
fn subdivide(
    bubbles: Vec<Bubble>,
    costmap: &LocalCostmap,
    robot_radius: f64,
    floor: f64,
) -> std::result::Result<Vec<Bubble>, BandFailure> {
    let min_gap = costmap.geometry().resolution * 0.25;
    let mut out: Vec<Bubble> = Vec::with_capacity(bubbles.len() * 2);
    let mut stack: Vec<Bubble> = bubbles.into_iter().rev().collect();
    while let Some(next) = stack.pop() {
        let Some(&prev) = out.last() else {
            out.push(next);
            continue;
        };
        if overlaps(&prev, &next, robot_radius) {
            out.push(next);
            continue;
        }
        if dist(prev.center, next.center) < min_gap || out.len() + stack.len() > MAX_BUBBLES {
            return Err(BandFailure::Gap { index: out.len() - 1 });
        }
        let mid = [(prev.center[0] + next.center[0]) / 2.0, (prev.center[1] + next.center[1]) / 2.0];
        let radius = costmap.clearance_at(mid);
        if radius <= robot_radius || radius < floor {
            return Err(BandFailure::Collision { index: out.len() });
        }
        stack.push(next);
        stack.push(Bubble { center: mid, radius });
    }
    Ok(out)
}

/// Seeds a band with one bubble per waypoint and subdivides until it is
/// connected.
pub fn build_band(path: &[Point], costmap: &LocalCostmap, robot_radius: f64) -> std::result::Result<Band, BandFailure> {
    let mut bubbles = Vec::with_capacity(path.len());
    for (index, &p) in path.iter().enumerate() {
        let radius = costmap.clearance_at(p);
        if radius <= robot_radius {
            return Err(BandFailure::Collision { index });
        }
        bubbles.push(Bubble { center: p, radius });
    }
    let bubbles = subdivide(bubbles, costmap, robot_radius, 0.0)?;
    Ok(Band { bubbles })
}

/// Smooths the band: every interior bubble is pulled toward the midpoint of
/// its neighbours and pushed up the clearance gradient while it is closer
/// than `influence` to an obstacle. Endpoints stay fixed. A move is only
/// taken if it keeps clearance at or above the band's initial minimum.
/// Stops after `sweeps`, when no center moves more than 1e-4 m, or when a
/// sweep leaves a gap that cannot be bridged (that sweep is undone).
pub fn optimize_band(band: &Band, costmap: &LocalCostmap, cfg: &LocalConfig, sweeps: usize) -> Band {
    let floor = band.min_clearance().max(cfg.robot_radius + f64::EPSILON);
    let tiny = costmap.geometry().resolution * 0.25;
    let mut bubbles = band.bubbles.clone();
    for _ in 0..sweeps {
        if bubbles.len() < 3 {
            break;
        }
        let old = bubbles.clone();
        let mut max_move: f64 = 0.0;
        for i in 1..old.len() - 1 {
            let c = old[i].center;
            let mid = [(old[i - 1].center[0] + old[i + 1].center[0]) / 2.0, (old[i - 1].center[1] + old[i + 1].center[1]) / 2.0];
            let push = cfg.k_ext * (cfg.influence - old[i].radius).max(0.0);
            let grad = costmap.clearance_gradient(c);
            let cand = [c[0] + cfg.k_int * (mid[0] - c[0]) + push * grad[0], c[1] + cfg.k_int * (mid[1] - c[1]) + push * grad[1]];
            let radius = costmap.clearance_at(cand);
            if radius >= floor && radius > cfg.robot_radius {
                max_move = max_move.max(dist(c, cand));
                bubbles[i] = Bubble { center: cand, radius };
            }
        }
        // drop interior bubbles that collapsed onto a neighbour
        let mut kept: Vec<Bubble> = Vec::with_capacity(bubbles.len());
        let last = bubbles.len() - 1;
        for (i, b) in bubbles.iter().enumerate() {
            if i != 0 && i != last && kept.last().is_some_and(|p| dist(p.center, b.center) < tiny) {
                continue;
            }
            kept.push(*b);
        }
        match subdivide(kept, costmap, cfg.robot_radius, floor) {
            Ok(b) => bubbles = b,
            Err(_) => {
                // this sweep cannot be reconnected safely: keep the last good band
                bubbles = old;
                break;
            }
        }
        if max_move < 1e-4 {
            break;
        }
    }
    Band { bubbles }
}

/// True when every bubble clears the robot and consecutive bubbles overlap
/// under the current costmap.
pub fn band_valid(band: &Band, costmap: &LocalCostmap, robot_radius: f64) -> bool {
    if band.bubbles.is_empty() {
        return false;
    }
    let fresh: Vec<Bubble> =
        band.bubbles.iter().map(|b| Bubble { center: b.center, radius: costmap.clearance_at(b.center) }).collect();
    fresh.iter().all(|b| b.radius > robot_radius) && fresh.windows(2).all(|w| overlaps(&w[0], &w[1], robot_radius))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn window(states: Grid2<CellState>) -> LocalCostmap {
        let g = states.geometry;
        let clearance = clearance_field(&states);
        LocalCostmap { grid: states, clearance, width_cells: g.width, length_cells: g.height }
    }

    fn free(w: usize, h: usize, r: f64) -> Grid2<CellState> {
        Grid2::filled(GridGeometry::new([0.0, 0.0], r, w, h), CellState::Free)
    }

    #[test]
    fn clearance_examples() {
        let open = clearance_field(&free(5, 5, 1.0));
        assert!(open.iter().all(|&c| (c - 50f64.sqrt()).abs() < 1e-12));

        let mut g = free(9, 9, 0.1);
        g.data[4 * 9 + 4] = CellState::Occupied;
        let c = clearance_field(&g);
        assert!((c[0] - 32f64.sqrt() * 0.1).abs() < 1e-12);
        assert_eq!(c[4 * 9 + 4], 0.0);

        let full = Grid2::filled(GridGeometry::new([0.0, 0.0], 1.0, 3, 3), CellState::Occupied);
        assert!(clearance_field(&full).iter().all(|&c| c == 0.0));
    }

    #[test]
    fn band_construction() {
        // 10 m square of free space, clearance capped at the diagonal
        let mut g = free(100, 100, 0.1);
        for i in 0..100 {
            g.data[i] = CellState::Occupied;
            g.data[99 * 100 + i] = CellState::Occupied;
            g.data[i * 100] = CellState::Occupied;
            g.data[i * 100 + 99] = CellState::Occupied;
        }
        let cm = window(g);
        let two = build_band(&[[5.0, 5.0], [5.5, 5.0]], &cm, 0.3).unwrap();
        assert_eq!(two.len(), 2);
        assert!(band_valid(&two, &cm, 0.3));

        // clearance ~1 m near the wall: 3 m apart needs intermediate bubbles
        let far = build_band(&[[1.05, 3.0], [1.05, 6.0]], &cm, 0.3).unwrap();
        assert!(far.len() >= 3);
        assert!(band_valid(&far, &cm, 0.3));

        assert!(matches!(build_band(&[[0.05, 5.0], [5.0, 5.0]], &cm, 0.3), Err(BandFailure::Collision { index: 0 })));
    }

    fn corridor() -> Grid2<CellState> {
        // 1.5 m wide corridor along x between two walls
        let mut g = free(80, 17, 0.1);
        for x in 0..80 {
            g.data[x] = CellState::Occupied;
            g.data[16 * 80 + x] = CellState::Occupied;
        }
        g
    }

    #[test]
    fn centered_band_is_a_fixed_point() {
        let cm = window(corridor());
        let pts: Vec<Point> = (0..8).map(|i| [1.05 + 0.5 * i as f64, 0.85]).collect();
        let band = build_band(&pts, &cm, 0.3).unwrap();
        let out = optimize_band(&band, &cm, &LocalConfig::default(), 1);
        for (a, b) in band.bubbles.iter().zip(&out.bubbles) {
            assert!(dist(a.center, b.center) < 1e-4);
        }
    }

    #[test]
    fn band_moves_off_a_wall_and_keeps_endpoints() {
        let cm = window(corridor());
        let pts: Vec<Point> = (0..10).map(|i| [1.05 + 0.3 * i as f64, 0.55]).collect();
        let band = build_band(&pts, &cm, 0.3).unwrap();
        let before = band.min_clearance();
        let out = optimize_band(&band, &cm, &LocalConfig::default(), 50);
        assert!(out.bubbles[1..out.len() - 1].iter().all(|b| b.radius >= before));
        let interior_gain = out.bubbles[1..out.len() - 1].iter().map(|b| b.radius).fold(f64::INFINITY, f64::min);
        assert!(interior_gain > before);
        assert_eq!(out.bubbles[0].center, band.bubbles[0].center);
        assert_eq!(out.bubbles.last().unwrap().center, band.bubbles.last().unwrap().center);
        assert!(band_valid(&out, &cm, 0.3));
    }

    #[test]
    fn dog_leg_does_not_grow() {
        let mut g = free(60, 60, 0.1);
        for y in 0..40 {
            for x in 0..40 {
                g.data[y * 60 + x] = CellState::Occupied;
            }
        }
        let cm = window(g);
        let pts = vec![[0.5, 5.0], [4.5, 5.0], [4.5, 4.5], [4.5, 0.5]];
        let band = build_band(&pts, &cm, 0.3).unwrap();
        let out = optimize_band(&band, &cm, &LocalConfig::default(), 100);
        assert!(out.length() <= band.length() * 1.01);
        assert!(band_valid(&out, &cm, 0.3));
    }

    #[test]
    fn obstacles_invalidate_bands() {
        let base = corridor();
        let cm = window(base.clone());
        let pts: Vec<Point> = (0..8).map(|i| [1.05 + 0.5 * i as f64, 0.85]).collect();
        let band = build_band(&pts, &cm, 0.3).unwrap();
        assert!(band_valid(&band, &cm, 0.3));

        let mut blocked = base.clone();
        let (cx, cy) = blocked.geometry.cell_of(2.05, 0.85);
        blocked.data[cy as usize * 80 + cx as usize] = CellState::Occupied;
        assert!(!band_valid(&band, &window(blocked), 0.3));

        // pinch: obstacles from both walls leave too little room
        let mut pinched = base;
        for y in [3, 4, 5, 11, 12, 13] {
            pinched.data[y * 80 + 30] = CellState::Occupied;
        }
        assert!(!band_valid(&band, &window(pinched), 0.3));
    }

    #[test]
    fn laser_hits_override_static_free() {
        let static_map = free(100, 100, 0.1);
        let mut cm = LocalCostmap::new(&static_map.geometry, 3.0, 4.0).unwrap();
        let laser = Laser { fov: 1e-3, beams: 1, max_range: 30.0, mount_height: 0.3 };
        let pose = Pose::planar(5.0, 5.0, 0.0);
        cm.update(&pose, 0.0, &[1.0], &laser, &static_map);
        assert_eq!(cm.geometry().width, 30);
        assert_eq!(cm.geometry().height, 40);
        assert!(cm.contains([5.0, 5.0]));
        assert_eq!(cm.grid().at(6.0 + 1e-6, 5.0), Some(&CellState::Occupied));
        assert_eq!(cm.grid().at(5.5, 5.0), Some(&CellState::Free));
        let seen = cm.observed_obstacles(&static_map);
        assert_eq!(seen.len(), 1);
        assert_eq!(cm.clearance_at([6.05, 5.05]), 0.0);
    }
}
