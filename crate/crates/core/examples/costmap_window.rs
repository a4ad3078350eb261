//! Compares local costmap window sizes on the ramp-climbing task. A window
//! that reaches the point where the ramp surface crosses the laser plane
//! sees the slope as a wall and replans for nothing.
//!
//! `cargo run --release --example costmap_window`

use uneven_nav::nav_sim::run_task;
use uneven_nav::pipeline::{nav_world, stage_map, stage_traverse};
use uneven_nav::scenario::Scenario;

fn main() -> uneven_nav::Result<()> {
    let scenario = Scenario::load(concat!(env!("CARGO_MANIFEST_DIR"), "/fixtures/caffe_scenario.json"))?;
    let env = scenario.load_environment()?;
    let (tree, _) = stage_map(&scenario, &env, None)?;
    let (_, map) = stage_traverse(&scenario, &tree, None)?;
    let world = nav_world(&scenario, &env, &map)?;
    for (w, l) in [(3.0, 4.0), (8.0, 8.0)] {
        let mut local = scenario.local;
        local.width = w;
        local.length = l;
        for task in &scenario.tasks {
            let run = run_task(&world, task, &scenario.sim, &local, &scenario.planner, &scenario.obstacles_for(&task.name))?;
            let m = &run.metrics;
            println!("{w}x{l} {:8} success={} replans={}", m.task, m.success, m.replans);
        }
    }
    Ok(())
}
