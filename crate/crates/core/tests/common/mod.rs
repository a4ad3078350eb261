//! Fixtures and brute-force oracles shared by the integration tests.
#![allow(dead_code)]

use std::collections::VecDeque;

use rand::Rng;
use uneven_nav::env_model::EnvironmentSpec;
use uneven_nav::global_planner::PlanSpace;
use uneven_nav::grid::{distance_transform, CellState, Grid2, GridGeometry};
use uneven_nav::pipeline::{stage_map, stage_traverse};
use uneven_nav::scenario::Scenario;
use uneven_nav::traversability::TraversableMap;

pub const SCENARIO: &str = concat!(env!("CARGO_MANIFEST_DIR"), "/fixtures/caffe_scenario.json");

pub fn scenario() -> Scenario {
    Scenario::load(SCENARIO).expect("fixture scenario loads")
}

/// Mapping sweep plus layer classification on the fixture world.
pub fn caffe_map(s: &Scenario) -> (EnvironmentSpec, TraversableMap) {
    let env = s.load_environment().unwrap();
    let (tree, _) = stage_map(s, &env, None).unwrap();
    let (_, map) = stage_traverse(s, &tree, None).unwrap();
    (env, map)
}

/// Fixture regions, in cell-center coordinates.
pub fn in_ramp_interior(c: [f64; 2]) -> bool {
    c[0] > 10.1 && c[0] < 11.9 && c[1] > 2.0 && c[1] < 6.0
}

/// One cell column along each lateral ramp border, above the toe where the
/// ramp is still flush with the floor.
pub fn in_ramp_border(c: [f64; 2]) -> bool {
    (c[0] > 10.0 && c[0] < 10.05 || c[0] > 11.95 && c[0] < 12.0) && c[1] > 2.2 && c[1] < 6.0
}

/// First cell row above each stair riser.
pub fn in_riser_row(c: [f64; 2]) -> bool {
    c[0] > 8.2 && c[0] < 9.6 && [4.8, 5.1, 5.4, 5.7].iter().any(|y| c[1] > *y && c[1] < y + 0.05)
}

/// Random planning map: rectangles, plus on most maps a full-height wall
/// that is either sealed or pierced by one gap.
pub fn random_map(rng: &mut impl Rng, n: usize, resolution: f64) -> Grid2<CellState> {
    let mut grid = Grid2::filled(GridGeometry::new([0.0, 0.0], resolution, n, n), CellState::Free);
    let fill = |grid: &mut Grid2<CellState>, x0: usize, y0: usize, w: usize, h: usize| {
        for y in y0..(y0 + h).min(n) {
            for x in x0..(x0 + w).min(n) {
                *grid.get_mut(x as i64, y as i64).unwrap() = CellState::Occupied;
            }
        }
    };
    for _ in 0..rng.random_range(3..9) {
        let (w, h) = (rng.random_range(2..10), rng.random_range(2..10));
        let (x0, y0) = (rng.random_range(0..n), rng.random_range(0..n));
        fill(&mut grid, x0, y0, w, h);
    }
    if rng.random_bool(0.7) {
        let wall_x = rng.random_range(n / 3..2 * n / 3);
        fill(&mut grid, wall_x, 0, 2, n);
        if rng.random_bool(0.5) {
            let gap_y = rng.random_range(2..n - 8);
            for y in gap_y..gap_y + 6 {
                for x in wall_x..wall_x + 2 {
                    *grid.get_mut(x as i64, y as i64).unwrap() = CellState::Free;
                }
            }
        }
    }
    grid
}

/// 8-connected breadth-first reachability over cells accepted by `passable`.
pub fn bfs_reachable(g: &GridGeometry, start: (i64, i64), goal: (i64, i64), passable: impl Fn(i64, i64) -> bool) -> bool {
    if !passable(start.0, start.1) || !passable(goal.0, goal.1) {
        return false;
    }
    let (w, h) = (g.width as i64, g.height as i64);
    let mut seen = vec![false; g.len()];
    let mut queue = VecDeque::from([start]);
    seen[(start.1 * w + start.0) as usize] = true;
    while let Some((x, y)) = queue.pop_front() {
        if (x, y) == goal {
            return true;
        }
        for dy in -1..=1 {
            for dx in -1..=1 {
                let (nx, ny) = (x + dx, y + dy);
                if nx < 0 || ny < 0 || nx >= w || ny >= h {
                    continue;
                }
                let k = (ny * w + nx) as usize;
                if !seen[k] && passable(nx, ny) {
                    seen[k] = true;
                    queue.push_back((nx, ny));
                }
            }
        }
    }
    false
}

/// Cells of `space` at least `cells` away from every blocked cell and from
/// the map border.
pub fn clearance_mask(space: &PlanSpace, cells: f64) -> Vec<bool> {
    let g = *space.geometry();
    let field = distance_transform(g, |i| {
        let (x, y) = g.coords(i);
        !space.is_free_cell(x as i64, y as i64)
    });
    (0..g.len())
        .map(|i| {
            let (x, y) = g.coords(i);
            let border = x.min(y).min(g.width - 1 - x).min(g.height - 1 - y) as f64;
            field.cells(i) >= cells && border >= cells
        })
        .collect()
}

/// Closed-box / segment intersection by slab clipping.
pub fn segment_touches_box(a: [f64; 3], b: [f64; 3], lo: [f64; 3], hi: [f64; 3]) -> bool {
    let (mut t0, mut t1) = (0.0f64, 1.0f64);
    for k in 0..3 {
        let d = b[k] - a[k];
        if d == 0.0 {
            if a[k] < lo[k] || a[k] > hi[k] {
                return false;
            }
            continue;
        }
        let (mut ta, mut tb) = ((lo[k] - a[k]) / d, (hi[k] - a[k]) / d);
        if ta > tb {
            std::mem::swap(&mut ta, &mut tb);
        }
        t0 = t0.max(ta);
        t1 = t1.min(tb);
        if t0 > t1 {
            return false;
        }
    }
    true
}
