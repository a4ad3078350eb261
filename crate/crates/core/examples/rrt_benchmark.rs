//! Median iterations to reach the goal on the cluttered comparison map for
//! the variable-step planner and several fixed steps.
//!
//! `cargo run --release --example rrt_benchmark -- [seeds]`

use uneven_nav::benchmark::{clutter_problem, run_benchmark, summarize, PlannerKind};
use uneven_nav::global_planner::{PlanSpace, PlannerConfig};

fn main() -> uneven_nav::Result<()> {
    let seeds: u64 = std::env::args().nth(1).and_then(|s| s.parse().ok()).unwrap_or(100);
    let problem = clutter_problem();
    let space = PlanSpace::new(&problem.grid, 0.0)?;
    let cfg = PlannerConfig { connect_tolerance: problem.connect_tolerance, ..PlannerConfig::default() };
    let planners = [
        PlannerKind::Variable,
        PlannerKind::Fixed(10.0),
        PlannerKind::Fixed(30.0),
        PlannerKind::Fixed(40.0),
        PlannerKind::Fixed(90.0),
    ];
    let rows = run_benchmark(&space, problem.start, problem.goal, &planners, 0..seeds, &cfg)?;
    for s in summarize(&rows) {
        let step = s.planner.step().map_or("-".to_string(), |v| format!("{v}"));
        println!(
            "{:8} step {:>3}: median {:>6.1} iterations, {}/{} found",
            s.planner.name(),
            step,
            s.median_iterations,
            s.successes,
            s.runs
        );
    }
    Ok(())
}
