//! Global planning on the traversable map: the variable-step planner and a
//! fixed-step baseline between the same endpoints, then shortcutting.
//!
//! `cargo run --release --example plan_path`

use uneven_nav::global_planner::{plan_fixed, plan_variable, shortcut, PlanSpace};
use uneven_nav::pipeline::{stage_map, stage_traverse};
use uneven_nav::scenario::Scenario;

fn main() -> uneven_nav::Result<()> {
    let scenario = Scenario::load(concat!(env!("CARGO_MANIFEST_DIR"), "/fixtures/caffe_scenario.json"))?;
    let env = scenario.load_environment()?;
    let (tree, _) = stage_map(&scenario, &env, None)?;
    let (_, map) = stage_traverse(&scenario, &tree, None)?;
    let space = PlanSpace::new(&map.states(), scenario.sim.inflation)?;
    let (start, goal) = ([9.0, 1.0], [11.0, 8.0]);

    let variable = plan_variable(&space, start, goal, &scenario.planner)?;
    let fixed = plan_fixed(&space, start, goal, 0.5, &scenario.planner)?;
    for (name, outcome) in [("variable", &variable), ("fixed 0.5 m", &fixed)] {
        match outcome.path() {
            Some(p) => {
                let short = shortcut(p, &space);
                println!(
                    "{name}: {} iterations, {:.2} m raw, {:.2} m after shortcut ({} waypoints)",
                    p.stats.iterations,
                    p.length,
                    short.length,
                    short.waypoints.len()
                );
            }
            None => println!("{name}: no path in {} iterations", outcome.stats().iterations),
        }
    }
    Ok(())
}
