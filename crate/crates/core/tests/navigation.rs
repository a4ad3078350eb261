//! Closed-loop runs in a walled room whose map comes straight from the
//! analytic heightmap, so no mapping sweep is needed.

use uneven_nav::env_model::EnvironmentSpec;
use uneven_nav::global_planner::PlannerConfig;
use uneven_nav::grid::GridGeometry;
use uneven_nav::local_planner::LocalConfig;
use uneven_nav::nav_sim::{run_task, trace_to_csv, DynamicObstacle, NavWorld, RunOutput, SimConfig, Task, TRACE_HEADER};
use uneven_nav::traversability::{heightmap_reference, GradientParams, LayerConfig};

/// 8 x 6 m room with a pillar and, in the upper right, a closed pen.
const ROOM: &str = r#"{
    "bounds": {"min": [0, 0, 0], "max": [8, 6, 2]},
    "primitives": [
        {"type": "box", "min": [0, 0, 0], "max": [8, 0.1, 1.5]},
        {"type": "box", "min": [0, 5.9, 0], "max": [8, 6, 1.5]},
        {"type": "box", "min": [0, 0, 0], "max": [0.1, 6, 1.5]},
        {"type": "box", "min": [7.9, 0, 0], "max": [8, 6, 1.5]},
        {"type": "box", "min": [3.5, 2.5, 0], "max": [4.0, 3.5, 1.5]},
        {"type": "box", "min": [6.0, 4.0, 0], "max": [6.1, 5.9, 1.5]},
        {"type": "box", "min": [6.0, 4.0, 0], "max": [7.9, 4.1, 1.5]}
    ]
}"#;

fn world() -> NavWorld {
    let env = EnvironmentSpec::from_json(ROOM).unwrap();
    let layers = LayerConfig::default();
    let params = GradientParams::new(20f64.to_radians(), 0.05, 1).unwrap();
    let map = heightmap_reference(&env, GridGeometry::new([0.0, 0.0], 0.05, 160, 120), &params, layers.spacing, layers.top());
    NavWorld::new(env, map.clone(), &map, SimConfig::default().inflation).unwrap()
}

fn task(start: [f64; 3], goal: [f64; 2]) -> Task {
    Task { name: "room".into(), start, goal, success_radius: 0.25, time_budget: 60.0 }
}

fn run(world: &NavWorld, t: &Task, obstacles: &[DynamicObstacle]) -> RunOutput {
    run_task(world, t, &SimConfig::default(), &LocalConfig::default(), &PlannerConfig::default(), obstacles).unwrap()
}

fn check_bookkeeping(out: &RunOutput) {
    let m = &out.metrics;
    let summed: f64 = out.trace.windows(2).map(|w| ((w[1].x - w[0].x).powi(2) + (w[1].y - w[0].y).powi(2)).sqrt()).sum();
    assert!((m.distance - summed).abs() <= 1e-6, "distance {} vs trace {summed}", m.distance);
    if m.elapsed > 0.0 {
        assert!((m.average_speed - m.distance / m.elapsed).abs() <= 1e-9);
    }
    assert!(out.trace.iter().all(|r| r.speed >= 0.0 && r.speed <= SimConfig::default().v_max + 1e-9));
    if m.success {
        assert!(out.trace.last().unwrap().goal);
        assert!(out.trace.iter().all(|r| r.truth_clearance > LocalConfig::default().robot_radius));
    }
}

#[test]
fn crossing_the_room_succeeds() {
    let w = world();
    let out = run(&w, &task([1.0, 1.0, 0.0], [6.5, 2.5]), &[]);
    assert!(out.metrics.success, "{:?}", out.metrics.reason);
    assert_eq!(out.metrics.replans, 0);
    check_bookkeeping(&out);
    assert!(trace_to_csv(&out.trace).starts_with(TRACE_HEADER));
}

#[test]
fn goal_at_start_is_immediate() {
    let w = world();
    let out = run(&w, &task([2.0, 4.0, 30.0], [2.0, 4.0]), &[]);
    let m = &out.metrics;
    assert!(m.success);
    assert!(m.distance < 1e-9);
    assert_eq!(m.replans, 0);
    check_bookkeeping(&out);
}

#[test]
fn obstacle_behind_the_robot_is_ignored() {
    let w = world();
    let behind = DynamicObstacle { min: [0.3, 0.8, 0.0], max: [0.6, 1.2, 1.7], activation: 0.5, velocity: None };
    let out = run(&w, &task([1.2, 1.0, 0.0], [6.5, 1.0]), &[behind]);
    assert!(out.metrics.success);
    assert_eq!(out.metrics.replans, 0);
    check_bookkeeping(&out);
}

#[test]
fn obstacle_on_the_band_forces_a_replan() {
    let w = world();
    let blocker = DynamicObstacle { min: [3.0, 0.6, 0.0], max: [3.5, 1.4, 1.7], activation: 0.5, velocity: None };
    let out = run(&w, &task([1.0, 1.0, 0.0], [6.5, 1.0]), &[blocker]);
    let m = &out.metrics;
    assert!(m.success, "{:?}", m.reason);
    assert!(m.replans >= 1);
    assert_eq!(m.plan_times_us.len(), m.replans + 1);
    // Every replan is flagged in the trace, and only after the obstacle is seen.
    let first_seen = out.trace.iter().position(|r| r.obstacle_seen).expect("obstacle seen");
    assert!(out.trace.iter().take(first_seen).all(|r| !r.replan));
    assert_eq!(out.trace.iter().filter(|r| r.replan).count(), m.replans);
    check_bookkeeping(&out);
}

#[test]
fn sealed_goal_fails_with_a_reason() {
    let w = world();
    let out = run(&w, &task([1.0, 1.0, 0.0], [7.0, 5.0]), &[]);
    let m = &out.metrics;
    assert!(!m.success);
    assert!(m.reason.is_some());
    check_bookkeeping(&out);
}
