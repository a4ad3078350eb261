//! Seeded RRT benchmark: fixed-step baselines against the variable-step
//! planner on a cluttered comparison map.

use std::fmt::Write as _;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::error::Result;
use crate::global_planner::{plan_fixed, plan_variable, PlanSpace, PlannerConfig, Point};
use crate::grid::{CellState, Grid2, GridGeometry};

/// A planning problem on a fixed map.
#[derive(Debug, Clone)]
pub struct BenchProblem {
    pub grid: Grid2<CellState>,
    pub start: Point,
    pub goal: Point,
    pub connect_tolerance: f64,
}

/// Layout of the comparison map: a 500 x 500 cell field scattered with
/// square blocks. The mean free path between blocks is a few tens of cells,
/// so very long fixed steps are mostly rejected while very short ones need
/// many iterations.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ClutterLayout {
    pub size: usize,
    pub blocks: usize,
    pub block_side: usize,
    /// Seed of the block placement (independent of planner seeds).
    pub layout_seed: u64,
    /// Blocks whose center falls within this radius of start or goal are skipped.
    pub keep_clear: f64,
}

impl Default for ClutterLayout {
    fn default() -> Self {
        Self { size: 500, blocks: 330, block_side: 12, layout_seed: 6, keep_clear: 25.0 }
    }
}

/// The comparison map in cell units (resolution 1), start near one corner
/// and goal near the opposite one.
pub fn clutter_problem() -> BenchProblem {
    clutter_problem_with(&ClutterLayout::default())
}

pub fn clutter_problem_with(layout: &ClutterLayout) -> BenchProblem {
    let n = layout.size;
    let side = layout.block_side.min(n);
    let geometry = GridGeometry::new([0.0, 0.0], 1.0, n, n);
    let mut grid = Grid2::filled(geometry, CellState::Free);
    let start = [40.5, 40.5];
    let goal = [n as f64 - 39.5, n as f64 - 39.5];
    let mut rng = ChaCha8Rng::seed_from_u64(layout.layout_seed);
    for _ in 0..layout.blocks {
        let x0 = rng.random_range(0..n - side);
        let y0 = rng.random_range(0..n - side);
        let c = [(x0 + side / 2) as f64, (y0 + side / 2) as f64];
        let near = |p: Point| (c[0] - p[0]).hypot(c[1] - p[1]) < layout.keep_clear;
        if near(start) || near(goal) {
            continue;
        }
        for y in y0..y0 + side {
            grid.data[y * n + x0..y * n + x0 + side].fill(CellState::Occupied);
        }
    }
    BenchProblem { grid, start, goal, connect_tolerance: 10.0 }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub enum PlannerKind {
    Variable,
    Fixed(f64),
}

impl PlannerKind {
    pub fn name(&self) -> &'static str {
        match self {
            PlannerKind::Variable => "variable",
            PlannerKind::Fixed(_) => "fixed",
        }
    }

    pub fn step(&self) -> Option<f64> {
        match self {
            PlannerKind::Variable => None,
            PlannerKind::Fixed(s) => Some(*s),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct BenchRow {
    pub planner: PlannerKind,
    pub seed: u64,
    pub found: bool,
    pub iterations: usize,
    pub micros: u64,
    /// NaN when no path was found.
    pub length: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct BenchSummary {
    pub planner: PlannerKind,
    pub runs: usize,
    pub successes: usize,
    pub median_iterations: f64,
    pub median_micros: f64,
}

/// Runs every planner once per seed. Failed runs count with the full
/// iteration budget.
pub fn run_benchmark(
    space: &PlanSpace,
    start: Point,
    goal: Point,
    planners: &[PlannerKind],
    seeds: impl IntoIterator<Item = u64> + Clone,
    base: &PlannerConfig,
) -> Result<Vec<BenchRow>> {
    let mut rows = Vec::new();
    for &planner in planners {
        for seed in seeds.clone() {
            let cfg = PlannerConfig { seed, ..*base };
            let out = match planner {
                PlannerKind::Variable => plan_variable(space, start, goal, &cfg)?,
                PlannerKind::Fixed(step) => plan_fixed(space, start, goal, step, &cfg)?,
            };
            let stats = out.stats();
            rows.push(BenchRow {
                planner,
                seed,
                found: out.is_found(),
                iterations: stats.iterations,
                micros: stats.micros,
                length: out.path().map_or(f64::NAN, |p| p.length),
            });
        }
    }
    Ok(rows)
}

pub fn median(values: &mut [f64]) -> f64 {
    if values.is_empty() {
        return f64::NAN;
    }
    values.sort_by(f64::total_cmp);
    let n = values.len();
    if n % 2 == 1 {
        values[n / 2]
    } else {
        0.5 * (values[n / 2 - 1] + values[n / 2])
    }
}

/// One summary per planner, in first-seen order.
pub fn summarize(rows: &[BenchRow]) -> Vec<BenchSummary> {
    let mut kinds: Vec<PlannerKind> = Vec::new();
    for r in rows {
        if !kinds.contains(&r.planner) {
            kinds.push(r.planner);
        }
    }
    kinds
        .into_iter()
        .map(|planner| {
            let mine: Vec<&BenchRow> = rows.iter().filter(|r| r.planner == planner).collect();
            let mut its: Vec<f64> = mine.iter().map(|r| r.iterations as f64).collect();
            let mut us: Vec<f64> = mine.iter().map(|r| r.micros as f64).collect();
            BenchSummary {
                planner,
                runs: mine.len(),
                successes: mine.iter().filter(|r| r.found).count(),
                median_iterations: median(&mut its),
                median_micros: median(&mut us),
            }
        })
        .collect()
}

/// CSV table `planner,step,seed,found,iterations,time_us,length`. With
/// `with_time = false` the time column is left out, which makes the output
/// reproducible byte for byte.
pub fn rows_to_csv(rows: &[BenchRow], with_time: bool) -> String {
    let mut s = String::from(if with_time {
        "planner,step,seed,found,iterations,time_us,length\n"
    } else {
        "planner,step,seed,found,iterations,length\n"
    });
    for r in rows {
        let step = r.planner.step().map_or(String::new(), |v| format!("{v}"));
        let length = if r.length.is_finite() { format!("{:.4}", r.length) } else { String::new() };
        let _ = write!(s, "{},{},{},{},{}", r.planner.name(), step, r.seed, r.found, r.iterations);
        if with_time {
            let _ = write!(s, ",{}", r.micros);
        }
        let _ = writeln!(s, ",{length}");
    }
    s
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn median_handles_odd_and_even() {
        assert_eq!(median(&mut [3.0, 1.0, 2.0]), 2.0);
        assert_eq!(median(&mut [4.0, 1.0, 2.0, 3.0]), 2.5);
        assert!(median(&mut []).is_nan());
    }

    #[test]
    fn benchmark_counts_rows() {
        let p = clutter_problem();
        let space = PlanSpace::new(&p.grid, 0.0).unwrap();
        let cfg = PlannerConfig { connect_tolerance: p.connect_tolerance, ..PlannerConfig::default() };
        let planners = [PlannerKind::Variable, PlannerKind::Fixed(40.0)];
        let rows = run_benchmark(&space, p.start, p.goal, &planners, 0..3u64, &cfg).unwrap();
        assert_eq!(rows.len(), 6);
        let summary = summarize(&rows);
        assert_eq!(summary.len(), 2);
        assert!(summary.iter().all(|s| s.runs == 3));
        let csv = rows_to_csv(&rows, false);
        assert_eq!(csv.lines().count(), 7);
        assert!(csv.lines().nth(1).unwrap().starts_with("variable,,0,"));
    }
}
