use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use uneven_nav::benchmark::{clutter_problem, rows_to_csv, run_benchmark, summarize, PlannerKind};
use uneven_nav::global_planner::{plan_fixed_search, plan_variable_search, shortcut, trees_to_csv, PlanOutcome, PlanSpace};
use uneven_nav::octree_map::OccupancyOctree;
use uneven_nav::pipeline::{nav_world, reference_map, run_pipeline, stage_map, stage_simulate, stage_traverse, summary_csv};
use uneven_nav::scenario::Scenario;
use uneven_nav::traversability::{compare_maps, TraversableMap};
use uneven_nav::{NavError, Result};

#[derive(Parser)]
#[command(name = "uneven-nav", version, about = "Mapping, traversability and navigation on uneven indoor terrain")]
struct Cli {
    #[command(flatten)]
    global: Global,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Global {
    /// Overrides the scenario seed (mapping noise and planner sampling).
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Output directory; defaults to the scenario's `output` entry.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Critical inclination angle in degrees.
    #[arg(long, global = true, allow_negative_numbers = true)]
    theta: Option<f64>,
    /// Local costmap width (lateral), meters.
    #[arg(long = "costmap-w", global = true, allow_negative_numbers = true)]
    costmap_w: Option<f64>,
    /// Local costmap length (along the heading), meters.
    #[arg(long = "costmap-l", global = true, allow_negative_numbers = true)]
    costmap_l: Option<f64>,
}

#[derive(Subcommand)]
enum Command {
    /// Run the mapping sweep and write the octree.
    Map { scenario: PathBuf },
    /// Build the traversable map, reusing a matching `octree.bin` from the output directory.
    Traverse { scenario: PathBuf },
    /// Plan a global path on the traversable map.
    Plan {
        scenario: PathBuf,
        #[arg(long, value_parser = parse_point, allow_hyphen_values = true)]
        start: [f64; 2],
        #[arg(long, value_parser = parse_point, allow_hyphen_values = true)]
        goal: [f64; 2],
        /// Use a fixed step (meters) instead of the variable step.
        #[arg(long)]
        fixed_step: Option<f64>,
    },
    /// Run the full pipeline and every navigation task. Exit status is 0 only if all tasks succeed.
    Simulate {
        scenario: PathBuf,
        /// Run only this task (map stages are still built).
        #[arg(long)]
        task: Option<String>,
    },
    /// Seeded RRT comparison on the cluttered benchmark map.
    Bench {
        #[arg(long, default_value_t = 100)]
        seeds: u64,
        /// Fixed steps in cells, comma separated.
        #[arg(long, value_delimiter = ',', default_values_t = [10.0, 30.0, 40.0, 90.0])]
        steps: Vec<f64>,
        /// Include per-run wall time in the CSV (not reproducible).
        #[arg(long)]
        timed: bool,
    },
}

fn parse_point(s: &str) -> std::result::Result<[f64; 2], String> {
    let parts: Vec<&str> = s.split(',').collect();
    if parts.len() != 2 {
        return Err(format!("expected `x,y`, got `{s}`"));
    }
    let x = parts[0].trim().parse::<f64>().map_err(|e| e.to_string())?;
    let y = parts[1].trim().parse::<f64>().map_err(|e| e.to_string())?;
    Ok([x, y])
}

fn load_scenario(path: &Path, g: &Global) -> Result<Scenario> {
    let mut s = Scenario::load(path)?;
    if let Some(seed) = g.seed {
        s.seed = seed;
        s.planner.seed = seed;
    }
    if let Some(theta) = g.theta {
        s.theta_deg = theta;
    }
    if let Some(w) = g.costmap_w {
        s.local.width = w;
    }
    if let Some(l) = g.costmap_l {
        s.local.length = l;
    }
    s.validate()?;
    Ok(s)
}

fn out_dir(s: &Scenario, g: &Global) -> Result<PathBuf> {
    let dir = g
        .out
        .clone()
        .or_else(|| s.output.clone())
        .ok_or_else(|| NavError::param("out", "no --out given and the scenario has no `output` entry"))?;
    std::fs::create_dir_all(&dir)?;
    Ok(dir)
}

/// Mapping inputs that determine `octree.bin`; a cached octree is reused
/// only when this key matches.
fn mapping_key(s: &Scenario) -> Result<String> {
    Ok(serde_json::to_string(&(&s.environment, s.seed, &s.sweep, &s.octree))?)
}

fn octree_for(s: &Scenario, dir: &Path) -> Result<OccupancyOctree> {
    let key = mapping_key(s)?;
    let cached = dir.join("octree.bin");
    if cached.is_file() && std::fs::read_to_string(dir.join("octree.key")).is_ok_and(|k| k == key) {
        return OccupancyOctree::load(cached);
    }
    let env = s.load_environment()?;
    let tree = stage_map(s, &env, Some(dir))?.0;
    std::fs::write(dir.join("octree.key"), key)?;
    Ok(tree)
}

fn traversable_for(s: &Scenario, dir: &Path) -> Result<TraversableMap> {
    let tree = octree_for(s, dir)?;
    Ok(stage_traverse(s, &tree, Some(dir))?.1)
}

fn run(cli: Cli) -> Result<bool> {
    let g = &cli.global;
    match cli.command {
        Command::Map { scenario } => {
            let s = load_scenario(&scenario, g)?;
            let dir = out_dir(&s, g)?;
            let (_, stats) = stage_map(&s, &s.load_environment()?, Some(&dir))?;
            std::fs::write(dir.join("octree.key"), mapping_key(&s)?)?;
            println!("{}", serde_json::to_string(&stats)?);
        }
        Command::Traverse { scenario } => {
            let s = load_scenario(&scenario, g)?;
            let dir = out_dir(&s, g)?;
            let tree = octree_for(&s, &dir)?;
            let (_, map) = stage_traverse(&s, &tree, Some(&dir))?;
            let truth = reference_map(&s, &s.load_environment()?, &map)?;
            let agreement = compare_maps(&map, &truth)?;
            std::fs::write(dir.join("agreement.json"), serde_json::to_string_pretty(&agreement)?)?;
            println!("agreement {:.4}", agreement.ratio());
        }
        Command::Plan { scenario, start, goal, fixed_step } => {
            let s = load_scenario(&scenario, g)?;
            let dir = out_dir(&s, g)?;
            let map = traversable_for(&s, &dir)?;
            let space = PlanSpace::new(&map.states(), s.sim.inflation)?;
            let search = match fixed_step {
                Some(step) => plan_fixed_search(&space, start, goal, step, &s.planner)?,
                None => plan_variable_search(&space, start, goal, &s.planner)?,
            };
            std::fs::write(dir.join("plan_trees.csv"), trees_to_csv(&search.trees))?;
            match &search.outcome {
                PlanOutcome::Found(path) => {
                    let smooth = shortcut(path, &space);
                    std::fs::write(dir.join("plan_path.csv"), smooth.to_csv())?;
                    std::fs::write(dir.join("plan_stats.json"), smooth.stats_json())?;
                    println!("found length {:.3} iterations {}", smooth.length, smooth.stats.iterations);
                }
                PlanOutcome::Failed(stats) => {
                    std::fs::write(dir.join("plan_stats.json"), serde_json::to_string_pretty(stats)?)?;
                    println!("no path after {} iterations", stats.iterations);
                    return Ok(false);
                }
            }
        }
        Command::Simulate { scenario, task } => {
            let mut s = load_scenario(&scenario, g)?;
            let dir = out_dir(&s, g)?;
            let metrics = match task {
                None => run_pipeline(&s, Some(&dir))?.tasks,
                Some(name) => {
                    let t = s.task(&name).cloned().ok_or_else(|| NavError::param("task", format!("no task named `{name}`")))?;
                    s.tasks = vec![t];
                    let env = s.load_environment()?;
                    let map = traversable_for(&s, &dir)?;
                    let world = nav_world(&s, &env, &map)?;
                    stage_simulate(&s, &world, Some(&dir))?.into_iter().map(|r| r.metrics).collect()
                }
            };
            print!("{}", summary_csv(&metrics));
            return Ok(metrics.iter().all(|m| m.success));
        }
        Command::Bench { seeds, steps, timed } => {
            let problem = clutter_problem();
            let space = PlanSpace::new(&problem.grid, 0.0)?;
            let mut planners = vec![PlannerKind::Variable];
            planners.extend(steps.iter().map(|&s| PlannerKind::Fixed(s)));
            let base =
                uneven_nav::global_planner::PlannerConfig { connect_tolerance: problem.connect_tolerance, ..Default::default() };
            let rows = run_benchmark(&space, problem.start, problem.goal, &planners, 0..seeds, &base)?;
            let summary = summarize(&rows);
            if let Some(dir) = &g.out {
                std::fs::create_dir_all(dir)?;
                std::fs::write(dir.join("bench.csv"), rows_to_csv(&rows, timed))?;
                std::fs::write(dir.join("bench_summary.json"), serde_json::to_string_pretty(&summary)?)?;
            }
            println!("planner,step,runs,successes,median_iterations");
            for r in &summary {
                let step = r.planner.step().map_or(String::new(), |v| v.to_string());
                println!("{},{},{},{},{}", r.planner.name(), step, r.runs, r.successes, r.median_iterations);
            }
        }
    }
    Ok(true)
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
    }
}
