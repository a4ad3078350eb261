//! Acceptance run: one PASS/FAIL line per criterion, nonzero exit if any fails.

mod common;

use std::collections::BTreeSet;
use std::path::Path;
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use uneven_nav::benchmark::{clutter_problem, run_benchmark, summarize, PlannerKind};
use uneven_nav::env_model::Aabb;
use uneven_nav::global_planner::{plan_variable, PlanSpace, PlannerConfig};
use uneven_nav::grid::CellState;
use uneven_nav::nav_sim::{run_task, NavWorld, RunOutput};
use uneven_nav::octree_map::{logistic, logit, OccupancyOctree, SensorModel};
use uneven_nav::pipeline::{reference_map, run_pipeline};
use uneven_nav::scenario::Scenario;
use uneven_nav::traversability::{classify_gradient, compare_maps, layer_gradient, TerrainLabel, TraversableMap};

use common::*;

struct Report {
    failures: usize,
}

impl Report {
    fn check(&mut self, id: u32, name: &str, budget_s: f64, f: impl FnOnce() -> (bool, String)) {
        let t = Instant::now();
        let (ok, detail) = f();
        let secs = t.elapsed().as_secs_f64();
        let in_time = secs < budget_s;
        let pass = ok && in_time;
        if !pass {
            self.failures += 1;
        }
        let timing = if in_time { String::new() } else { format!(" over budget {budget_s}s") };
        println!("{} {id} {name}: {detail} [{secs:.2}s{timing}]", if pass { "PASS" } else { "FAIL" });
    }
}

fn gradient_criterion() -> (bool, String) {
    let mut worst = 0.0f64;
    let mut mismatches = 0usize;
    for d in [0.05, 0.25, 0.5] {
        for r in [0.025, 0.05] {
            for v in 1..=1000 {
                let v = v as f64;
                let alpha = layer_gradient(d, r, v).unwrap();
                worst = worst.max((alpha - (d / (r * v)).atan()).abs());
                for theta_deg in [10.0f64, 14.0, 20.0, 30.0, 45.0] {
                    let theta = theta_deg.to_radians();
                    if classify_gradient(alpha, theta) != (v > d / (r * theta.tan())) {
                        mismatches += 1;
                    }
                }
            }
        }
    }
    (worst <= 1e-12 && mismatches == 0, format!("max deviation {worst:.1e}, threshold mismatches {mismatches}"))
}

fn fidelity_criterion(
    s: &Scenario,
    slot: &mut Option<(uneven_nav::env_model::EnvironmentSpec, TraversableMap)>,
) -> (bool, String) {
    let (env, map) = caffe_map(s);
    let truth = reference_map(s, &env, &map).unwrap();
    let agreement = compare_maps(&map, &truth).unwrap();
    let g = *map.geometry();
    let (mut interior, mut interior_free) = (0, 0);
    let (mut border, mut border_occ) = (0, 0);
    let (mut riser, mut riser_occ) = (0, 0);
    for i in 0..g.len() {
        let c = g.center_of_index(i);
        let occupied = map.state(i) == CellState::Occupied;
        if in_ramp_interior(c) {
            interior += 1;
            interior_free += usize::from(map.state(i) == CellState::Free);
        }
        if in_ramp_border(c) {
            border += 1;
            border_occ += usize::from(occupied);
        }
        if in_riser_row(c) {
            riser += 1;
            riser_occ += usize::from(occupied);
        }
    }
    let free_ratio = interior_free as f64 / interior as f64;
    let ok = free_ratio >= 0.97
        && riser > 0
        && riser_occ == riser
        && border > 0
        && border_occ == border
        && agreement.ratio() >= 0.97
        && agreement.unsafe_isolated == 0;
    *slot = Some((env, map));
    (
        ok,
        format!(
            "ramp interior free {:.2}%, risers {riser_occ}/{riser}, borders {border_occ}/{border}, agreement {:.2}%, unsafe beyond one cell {}",
            100.0 * free_ratio,
            100.0 * agreement.ratio(),
            agreement.unsafe_isolated
        ),
    )
}

fn benchmark_criterion() -> (bool, String) {
    let problem = clutter_problem();
    let space = PlanSpace::new(&problem.grid, 0.0).unwrap();
    let cfg = PlannerConfig { connect_tolerance: problem.connect_tolerance, ..PlannerConfig::default() };
    let steps = [10.0, 30.0, 40.0, 90.0];
    let mut planners = vec![PlannerKind::Variable];
    planners.extend(steps.iter().map(|&s| PlannerKind::Fixed(s)));
    let rows = run_benchmark(&space, problem.start, problem.goal, &planners, 0..100u64, &cfg).unwrap();
    let summary = summarize(&rows);
    let median_of = |k: PlannerKind| summary.iter().find(|s| s.planner == k).unwrap().median_iterations;
    let variable = median_of(PlannerKind::Variable);
    let fixed: Vec<f64> = steps.iter().map(|&s| median_of(PlannerKind::Fixed(s))).collect();
    let best = fixed.iter().cloned().fold(f64::INFINITY, f64::min);
    let u_shape = fixed[2] < fixed[1] && fixed[2] < fixed[3];
    (
        variable <= 1.5 * best && u_shape,
        format!("median iterations variable {variable}, fixed 10/30/40/90 = {}/{}/{}/{}", fixed[0], fixed[1], fixed[2], fixed[3]),
    )
}

fn latency_criterion(s: &Scenario, world: &NavWorld) -> (bool, String) {
    let g = world.map().geometry();
    let mut micros: Vec<f64> = (0..100)
        .map(|seed| {
            let cfg = PlannerConfig { seed, ..s.planner };
            let t = Instant::now();
            let out = plan_variable(world.space(), [9.0, 1.0], [11.0, 8.0], &cfg).unwrap();
            let us = t.elapsed().as_secs_f64() * 1e6;
            assert!(out.is_found(), "fixture plan must succeed");
            us
        })
        .collect();
    let median = uneven_nav::benchmark::median(&mut micros) / 1000.0;
    (
        median <= 50.0 && g.width == 260 && g.height == 200,
        format!("median plan time {median:.3} ms on {}x{} cells", g.width, g.height),
    )
}

fn navigation_criterion(s: &Scenario, world: &NavWorld) -> (bool, String) {
    let run = |name: &str| -> RunOutput {
        let task = s.task(name).unwrap();
        run_task(world, task, &s.sim, &s.local, &s.planner, &s.obstacles_for(name)).unwrap()
    };
    let runs: Vec<RunOutput> = ["task-2", "task-4", "task-5"].iter().map(|n| run(n)).collect();
    let mut notes = Vec::new();
    let mut ok = true;
    for r in &runs {
        let m = &r.metrics;
        let safe =
            r.trace.iter().all(|t| t.truth_clearance > s.local.robot_radius) && m.min_truth_clearance > s.local.robot_radius;
        let capped = r.trace.iter().all(|t| t.speed <= s.sim.v_max + 1e-9) && m.max_speed <= s.sim.v_max + 1e-9;
        ok &= m.success && safe && capped;
        notes.push(format!(
            "{} {} ({:.1} m, min clearance {:.3}, max speed {:.3})",
            m.task,
            if m.success { "ok" } else { "failed" },
            m.distance,
            m.min_truth_clearance,
            m.max_speed
        ));
    }
    let rise_cells = runs[1].trace.iter().filter(|t| world.map().label_at(t.x, t.y) == TerrainLabel::Rise).count();
    let t5 = &runs[2].metrics;
    let replan_ms: Vec<f64> = t5.plan_times_us.iter().skip(1).map(|&us| us as f64 / 1000.0).collect();
    let worst_replan = replan_ms.iter().cloned().fold(0.0, f64::max);
    ok &= rise_cells == 0 && t5.replans >= 1 && !replan_ms.is_empty() && worst_replan <= 100.0;
    (
        ok,
        format!(
            "{}; task-4 rise cells {rise_cells}; task-5 replans {} (worst {worst_replan:.2} ms)",
            notes.join(", "),
            t5.replans
        ),
    )
}

fn window_criterion(s: &Scenario, world: &NavWorld) -> (bool, String) {
    let task = s.task("task-2").unwrap();
    let replans = |w: f64, l: f64| {
        let local = uneven_nav::local_planner::LocalConfig { width: w, length: l, ..s.local };
        run_task(world, task, &s.sim, &local, &s.planner, &[]).unwrap().metrics.replans
    };
    let (small, large) = (replans(3.0, 4.0), replans(8.0, 8.0));
    (small == 0 && large >= 1, format!("ramp approach replans: 3x4 window {small}, 8x8 window {large}"))
}

fn octree_criterion() -> (bool, String) {
    // Closed form for repeated hits, with clamps far enough out not to bind.
    let wide = SensorModel { p_min: 1e-9, p_max: 1.0 - 1e-9, ..SensorModel::default() };
    let bounds = Aabb::new([0.0; 3], [1.0; 3]);
    let mut tree = OccupancyOctree::new(bounds, 0.05, wide).unwrap();
    let key = tree.key_of([0.5, 0.5, 0.5]).unwrap();
    let mut closed_worst = 0.0f64;
    for k in 1..=20 {
        tree.update_hit(key);
        let p = logistic(tree.log_odds(key).unwrap());
        closed_worst = closed_worst.max((p - logistic(k as f64 * logit(wide.p_hit))).abs());
    }

    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let mut tree = OccupancyOctree::new(Aabb::new([0.0; 3], [0.2; 3]), 0.05, SensorModel::default()).unwrap();
    let (lo, hi) = tree.clamp_bounds();
    let mut clamp_violations = 0;
    for _ in 0..100_000 {
        let k = [rng.random_range(0..4), rng.random_range(0..4), rng.random_range(0..4)];
        if rng.random_bool(0.5) {
            tree.update_hit(k);
        } else {
            tree.update_miss(k);
        }
        let l = tree.log_odds(k).unwrap();
        if l < lo || l > hi {
            clamp_violations += 1;
        }
    }
    tree.for_each_leaf(|_, l| {
        if l < lo || l > hi {
            clamp_violations += 1;
        }
    });

    let r = 0.05;
    let mut ray_mismatches = 0;
    for _ in 0..1000 {
        let mut tree = OccupancyOctree::new(bounds, r, SensorModel::default()).unwrap();
        let a = [rng.random_range(0.0..1.0), rng.random_range(0.0..1.0), rng.random_range(0.0..1.0)];
        let b = [rng.random_range(0.0..1.0), rng.random_range(0.0..1.0), rng.random_range(0.0..1.0)];
        tree.integrate_scan(a, &[b]).unwrap();
        let end = tree.key_of(b).unwrap();
        let mut misses = BTreeSet::new();
        tree.for_each_leaf(|k, _| {
            if k != end {
                misses.insert(k);
            }
        });
        let mut brute = BTreeSet::new();
        for x in 0..20u32 {
            for y in 0..20u32 {
                for z in 0..20u32 {
                    let lo = [x as f64 * r, y as f64 * r, z as f64 * r];
                    let hi = [lo[0] + r, lo[1] + r, lo[2] + r];
                    if [x, y, z] != end && segment_touches_box(a, b, lo, hi) {
                        brute.insert([x, y, z]);
                    }
                }
            }
        }
        if misses != brute {
            ray_mismatches += 1;
        }
    }
    (
        closed_worst <= 1e-12 && clamp_violations == 0 && ray_mismatches == 0,
        format!(
            "k-hit deviation {closed_worst:.1e}, clamp violations {clamp_violations}, ray set mismatches {ray_mismatches}/1000"
        ),
    )
}

fn soundness_criterion() -> (bool, String) {
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    let (mut false_success, mut clear_cases, mut clear_found, mut unreachable) = (0, 0, 0, 0);
    for map_index in 0..50u64 {
        let grid = random_map(&mut rng, 40, 0.1);
        let space = PlanSpace::new(&grid, 0.0).unwrap();
        let g = *space.geometry();
        let clear = clearance_mask(&space, 2.0);
        let free: Vec<usize> = (0..g.len()).filter(|&i| space.is_free_cell(g.coords(i).0 as i64, g.coords(i).1 as i64)).collect();
        let clear_cells: Vec<usize> = (0..g.len()).filter(|&i| clear[i]).collect();
        let mut queries = vec![];
        for _ in 0..2 {
            queries.push((free[rng.random_range(0..free.len())], free[rng.random_range(0..free.len())]));
        }
        if !clear_cells.is_empty() {
            queries
                .push((clear_cells[rng.random_range(0..clear_cells.len())], clear_cells[rng.random_range(0..clear_cells.len())]));
        }
        for (qi, (si, gi)) in queries.into_iter().enumerate() {
            let (s, t) = (g.coords(si), g.coords(gi));
            let (s, t) = ((s.0 as i64, s.1 as i64), (t.0 as i64, t.1 as i64));
            let reachable = bfs_reachable(&g, s, t, |x, y| space.is_free_cell(x, y));
            let clear_path = bfs_reachable(&g, s, t, |x, y| clear[g.index(x as usize, y as usize)]);
            let cfg = PlannerConfig { seed: map_index * 10 + qi as u64, ..PlannerConfig::default() };
            let out = plan_variable(&space, g.center_of_index(si), g.center_of_index(gi), &cfg).unwrap();
            let found = out.path().is_some_and(|p| p.is_valid(&space));
            if out.is_found() && !reachable || out.is_found() && !found {
                false_success += 1;
            }
            unreachable += usize::from(!reachable);
            if clear_path {
                clear_cases += 1;
                clear_found += usize::from(found);
            }
        }
    }
    let rate = clear_found as f64 / clear_cases.max(1) as f64;
    (
        false_success == 0 && clear_cases > 0 && unreachable > 0 && rate >= 0.95,
        format!(
            "false successes {false_success}, unreachable queries {unreachable}, clearance-2 success {clear_found}/{clear_cases}"
        ),
    )
}

fn artifact_files(dir: &Path) -> Vec<String> {
    let mut names: Vec<String> = std::fs::read_dir(dir)
        .unwrap()
        .filter_map(|e| e.ok())
        .map(|e| e.file_name().to_string_lossy().into_owned())
        .filter(|n| n.ends_with(".csv") || n.ends_with(".pgm"))
        .collect();
    names.sort();
    names
}

fn determinism_criterion(s: &Scenario) -> (bool, String) {
    let (a, b) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
    let ra = run_pipeline(s, Some(a.path())).unwrap();
    let rb = run_pipeline(s, Some(b.path())).unwrap();
    let (fa, fb) = (artifact_files(a.path()), artifact_files(b.path()));
    let differing: Vec<&String> =
        fa.iter().filter(|n| std::fs::read(a.path().join(n)).ok() != std::fs::read(b.path().join(n)).ok()).collect();
    let pgm_count = fa.iter().filter(|n| n.ends_with(".pgm")).count();
    (
        fa == fb && differing.is_empty() && pgm_count >= 5 && ra.all_succeeded() && rb.all_succeeded(),
        format!("{} CSV/PGM files compared, {} differ", fa.len(), differing.len()),
    )
}

fn main() {
    let s = scenario();
    let mut report = Report { failures: 0 };
    let mut shared = None;

    report.check(1, "layer gradient and threshold", 1.0, gradient_criterion);
    report.check(2, "traversable map fidelity", 30.0, || fidelity_criterion(&s, &mut shared));
    report.check(3, "RRT step-size benchmark", 60.0, benchmark_criterion);

    let (env, map) = shared.take().unwrap_or_else(|| caffe_map(&s));
    let truth = reference_map(&s, &env, &map).unwrap();
    let world = NavWorld::new(env, map, &truth, s.sim.inflation).unwrap();
    report.check(4, "planning latency", 30.0, || latency_criterion(&s, &world));
    report.check(5, "navigation tasks", 120.0, || navigation_criterion(&s, &world));
    report.check(6, "costmap window size", 30.0, || window_criterion(&s, &world));
    report.check(7, "occupancy math", 30.0, octree_criterion);
    report.check(8, "planner soundness against BFS", 60.0, soundness_criterion);
    report.check(9, "pipeline determinism", 120.0, || determinism_criterion(&s));

    if report.failures > 0 {
        println!("{} criteria failed", report.failures);
        std::process::exit(1);
    }
    println!("all criteria passed");
}
