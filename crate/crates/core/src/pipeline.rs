//! Batch pipeline: mapping sweep, layer projection, traversable map,
//! navigation tasks. Every stage can write its artifacts to a directory.

use std::fmt::Write as _;
use std::path::Path;

use serde::Serialize;

use crate::env_model::EnvironmentSpec;
use crate::error::Result;
use crate::global_planner::Point;
use crate::mapping::{build_octree, MappingStats};
use crate::nav_sim::{run_task, trace_to_csv, NavWorld, RunMetrics, RunOutput};
use crate::octree_map::OccupancyOctree;
use crate::pgm;
use crate::scenario::Scenario;
use crate::traversability::{build_traversable, compare_maps, heightmap_reference, Agreement, LayerStack, TraversableMap};

/// Name of the file that records the stage in progress (or `complete`).
pub const STAGE_MARKER: &str = "STAGE";

fn mark(out: Option<&Path>, stage: &str) -> Result<()> {
    if let Some(dir) = out {
        std::fs::create_dir_all(dir)?;
        std::fs::write(dir.join(STAGE_MARKER), format!("{stage}\n"))?;
    }
    Ok(())
}

/// Runs the sweep and fuses the octree; writes `octree.bin` and `mapping.json`.
pub fn stage_map(s: &Scenario, env: &EnvironmentSpec, out: Option<&Path>) -> Result<(OccupancyOctree, MappingStats)> {
    mark(out, "map")?;
    let (tree, stats) = build_octree(env, &s.sweep, &s.octree, s.seed)?;
    if let Some(dir) = out {
        tree.save(dir.join("octree.bin"))?;
        std::fs::write(dir.join("mapping.json"), serde_json::to_string_pretty(&stats)?)?;
    }
    Ok((tree, stats))
}

/// Slices the octree and classifies it; writes `layer_<k>.pgm` per layer
/// and the traversable map (`traversable.pgm`, `traversable_labels.pgm`,
/// `traversable.json`).
pub fn stage_traverse(s: &Scenario, tree: &OccupancyOctree, out: Option<&Path>) -> Result<(LayerStack, TraversableMap)> {
    mark(out, "traverse")?;
    let stack = LayerStack::from_octree(tree, &s.layers)?;
    let map = build_traversable(&stack, &s.gradient_params()?)?;
    if let Some(dir) = out {
        for (k, layer) in stack.layers().iter().enumerate() {
            pgm::write_file(dir.join(format!("layer_{k}.pgm")), &pgm::encode_states(&layer.grid))?;
        }
        map.save(dir, "traversable")?;
    }
    Ok((stack, map))
}

/// Analytic reference classification on the same grid as `map`.
pub fn reference_map(s: &Scenario, env: &EnvironmentSpec, map: &TraversableMap) -> Result<TraversableMap> {
    Ok(heightmap_reference(env, *map.geometry(), &s.gradient_params()?, s.layers.spacing, s.layers.top()))
}

pub fn nav_world(s: &Scenario, env: &EnvironmentSpec, map: &TraversableMap) -> Result<NavWorld> {
    let truth = reference_map(s, env, map)?;
    NavWorld::new(env.clone(), map.clone(), &truth, s.sim.inflation)
}

/// Paths as CSV rows `plan,x,y`.
pub fn paths_to_csv(paths: &[Vec<Point>]) -> String {
    let mut s = String::from("plan,x,y\n");
    for (i, p) in paths.iter().enumerate() {
        for q in p {
            let _ = writeln!(s, "{i},{:.6},{:.6}", q[0], q[1]);
        }
    }
    s
}

/// Runs every task; writes `<task>_path.csv`, `<task>_trace.csv`,
/// `<task>_band.csv` and `<task>_metrics.json`.
pub fn stage_simulate(s: &Scenario, world: &NavWorld, out: Option<&Path>) -> Result<Vec<RunOutput>> {
    mark(out, "simulate")?;
    let mut runs = Vec::with_capacity(s.tasks.len());
    for task in &s.tasks {
        let run = run_task(world, task, &s.sim, &s.local, &s.planner, &s.obstacles_for(&task.name))?;
        if let Some(dir) = out {
            let stem = &task.name;
            std::fs::write(dir.join(format!("{stem}_path.csv")), paths_to_csv(&run.paths))?;
            std::fs::write(dir.join(format!("{stem}_trace.csv")), trace_to_csv(&run.trace))?;
            std::fs::write(dir.join(format!("{stem}_band.csv")), &run.band_trace)?;
            std::fs::write(dir.join(format!("{stem}_metrics.json")), run.metrics.to_json())?;
        }
        runs.push(run);
    }
    Ok(runs)
}

/// Table of task outcomes without wall-clock columns.
pub fn summary_csv(metrics: &[RunMetrics]) -> String {
    let mut s = String::from("task,success,replans,distance,elapsed,average_speed,max_speed,min_truth_clearance,rise_ticks\n");
    for m in metrics {
        let _ = writeln!(
            s,
            "{},{},{},{:.4},{:.3},{:.4},{:.4},{:.4},{}",
            m.task,
            m.success,
            m.replans,
            m.distance,
            m.elapsed,
            m.average_speed,
            m.max_speed,
            m.min_truth_clearance,
            m.rise_ticks
        );
    }
    s
}

#[derive(Debug, Clone, Serialize)]
pub struct PipelineReport {
    pub mapping: MappingStats,
    pub agreement: Agreement,
    pub tasks: Vec<RunMetrics>,
}

impl PipelineReport {
    pub fn all_succeeded(&self) -> bool {
        self.tasks.iter().all(|t| t.success)
    }
}

/// Full pipeline. Artifacts go to `out` when given; the stage marker is
/// left at the failing stage on error and reads `complete` otherwise.
pub fn run_pipeline(s: &Scenario, out: Option<&Path>) -> Result<PipelineReport> {
    let env = s.load_environment()?;
    let (tree, mapping) = stage_map(s, &env, out)?;
    let (_, map) = stage_traverse(s, &tree, out)?;
    mark(out, "reference")?;
    let truth = reference_map(s, &env, &map)?;
    let agreement = compare_maps(&map, &truth)?;
    let world = NavWorld::new(env, map, &truth, s.sim.inflation)?;
    let runs = stage_simulate(s, &world, out)?;
    let tasks: Vec<RunMetrics> = runs.into_iter().map(|r| r.metrics).collect();
    let report = PipelineReport { mapping, agreement, tasks };
    if let Some(dir) = out {
        std::fs::write(dir.join("summary.csv"), summary_csv(&report.tasks))?;
        std::fs::write(dir.join("report.json"), serde_json::to_string_pretty(&report)?)?;
    }
    mark(out, "complete")?;
    Ok(report)
}
