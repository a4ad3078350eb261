//! Steps one navigation task tick by tick and reports progress, including
//! the replan triggered by an obstacle that appears on the way.
//!
//! `cargo run --release --example navigate -- [task]`

use uneven_nav::nav_sim::Simulation;
use uneven_nav::pipeline::{nav_world, stage_map, stage_traverse};
use uneven_nav::scenario::Scenario;

fn main() -> uneven_nav::Result<()> {
    let scenario = Scenario::load(concat!(env!("CARGO_MANIFEST_DIR"), "/fixtures/caffe_scenario.json"))?;
    let name = std::env::args().nth(1).unwrap_or_else(|| "task-5".into());
    let task = scenario.task(&name).cloned().ok_or_else(|| uneven_nav::NavError::param("task", format!("no task `{name}`")))?;
    let env = scenario.load_environment()?;
    let (tree, _) = stage_map(&scenario, &env, None)?;
    let (_, map) = stage_traverse(&scenario, &tree, None)?;
    let world = nav_world(&scenario, &env, &map)?;

    let mut sim = Simulation::new(&world, task, scenario.sim, scenario.local, scenario.planner)?;
    for obstacle in scenario.obstacles_for(&name) {
        sim.inject_obstacle(obstacle)?;
    }
    let mut next_report = 0.0;
    while sim.step() {
        if sim.time() >= next_report {
            let s = sim.state();
            println!("t={:5.2}s  x={:6.2} y={:6.2} v={:.2}", sim.time(), s.pose.x, s.pose.y, s.speed);
            next_report += 1.0;
        }
    }
    let m = sim.run().metrics;
    println!("{}: success={} replans={} distance={:.2} m", m.task, m.success, m.replans, m.distance);
    Ok(())
}
