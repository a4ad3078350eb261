//! Experiment description: one strict JSON document binding a world, the
//! mapping sweep, every module's parameters, tasks and scheduled obstacles.

use std::collections::HashSet;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::env_model::EnvironmentSpec;
use crate::error::{NavError, Result};
use crate::global_planner::PlannerConfig;
use crate::local_planner::LocalConfig;
use crate::mapping::{OctreeConfig, SweepConfig};
use crate::nav_sim::{DynamicObstacle, SimConfig, Task};
use crate::traversability::{GradientParams, LayerConfig};

/// A dynamic obstacle bound to one task by name.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScheduledObstacle {
    pub task: String,
    pub min: [f64; 3],
    pub max: [f64; 3],
    pub activation: f64,
    #[serde(default)]
    pub velocity: Option<[f64; 2]>,
}

impl ScheduledObstacle {
    pub fn obstacle(&self) -> DynamicObstacle {
        DynamicObstacle { min: self.min, max: self.max, activation: self.activation, velocity: self.velocity }
    }
}

fn default_edge_width() -> usize {
    1
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Scenario {
    /// World file, relative to the scenario file.
    pub environment: PathBuf,
    #[serde(default)]
    pub seed: u64,
    pub sweep: SweepConfig,
    #[serde(default)]
    pub octree: OctreeConfig,
    #[serde(default)]
    pub layers: LayerConfig,
    pub theta_deg: f64,
    #[serde(default = "default_edge_width")]
    pub edge_width: usize,
    #[serde(default)]
    pub planner: PlannerConfig,
    #[serde(default)]
    pub local: LocalConfig,
    #[serde(default)]
    pub sim: SimConfig,
    pub tasks: Vec<Task>,
    #[serde(default)]
    pub obstacles: Vec<ScheduledObstacle>,
    /// Default output directory, relative to the scenario file.
    #[serde(default)]
    pub output: Option<PathBuf>,
}

fn scenario_err(path: impl Into<String>, reason: impl Into<String>) -> NavError {
    NavError::Scenario { path: path.into(), reason: reason.into() }
}

/// Parses and validates a scenario document. Relative paths are left as
/// written; [`Scenario::load`] resolves them against the file's directory.
pub fn parse_scenario(text: &str) -> Result<Scenario> {
    let de = &mut serde_json::Deserializer::from_str(text);
    let scenario: Scenario = serde_path_to_error::deserialize(de).map_err(|e| {
        let path = e.path().to_string();
        scenario_err(path, e.into_inner().to_string())
    })?;
    scenario.validate()?;
    Ok(scenario)
}

impl Scenario {
    /// Reads a scenario file, resolving `environment` and `output` relative
    /// to its directory.
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| scenario_err(path.display().to_string(), e.to_string()))?;
        let mut s = parse_scenario(&text)?;
        let base = path.parent().unwrap_or(Path::new("."));
        s.environment = base.join(&s.environment);
        s.output = s.output.map(|o| base.join(o));
        if !s.environment.is_file() {
            return Err(scenario_err("environment", format!("{} does not exist", s.environment.display())));
        }
        Ok(s)
    }

    pub fn theta(&self) -> f64 {
        self.theta_deg.to_radians()
    }

    pub fn gradient_params(&self) -> Result<GradientParams> {
        GradientParams::new(self.theta(), self.octree.resolution, self.edge_width)
    }

    pub fn load_environment(&self) -> Result<EnvironmentSpec> {
        EnvironmentSpec::load(&self.environment)
    }

    pub fn task(&self, name: &str) -> Option<&Task> {
        self.tasks.iter().find(|t| t.name == name)
    }

    pub fn obstacles_for(&self, task: &str) -> Vec<DynamicObstacle> {
        self.obstacles.iter().filter(|o| o.task == task).map(ScheduledObstacle::obstacle).collect()
    }

    /// Range and consistency checks; errors name the offending field.
    pub fn validate(&self) -> Result<()> {
        if !(self.theta_deg > 0.0 && self.theta_deg < 90.0) {
            return Err(scenario_err("theta_deg", format!("must lie strictly between 0 and 90, got {}", self.theta_deg)));
        }
        if !(self.octree.resolution > 0.0) {
            return Err(scenario_err("octree.resolution", "must be positive"));
        }
        self.octree.model().validate().map_err(|e| scenario_err("octree", e.to_string()))?;
        if self.layers.count < 2 {
            return Err(scenario_err("layers.count", "needs at least 2 layers"));
        }
        if !(self.layers.spacing > 0.0) {
            return Err(scenario_err("layers.spacing", "must be positive"));
        }
        if !(self.layers.cap_height >= 0.0) {
            return Err(scenario_err("layers.cap_height", "must be >= 0"));
        }
        if self.edge_width < 1 {
            return Err(scenario_err("edge_width", "must be at least 1"));
        }
        if self.sweep.waypoints.is_empty() {
            return Err(scenario_err("sweep.waypoints", "must not be empty"));
        }
        let wrap = |field: &str| {
            let field = field.to_string();
            move |e: NavError| scenario_err(field.clone(), e.to_string())
        };
        self.planner.validate(self.octree.resolution).map_err(wrap("planner"))?;
        self.local.validate().map_err(wrap("local"))?;
        self.sim.validate().map_err(wrap("sim"))?;
        if self.tasks.is_empty() {
            return Err(scenario_err("tasks", "must list at least one task"));
        }
        let mut names = HashSet::new();
        for (i, t) in self.tasks.iter().enumerate() {
            if !names.insert(t.name.as_str()) {
                return Err(scenario_err(format!("tasks[{i}].name"), format!("duplicate task `{}`", t.name)));
            }
            if !(t.success_radius > 0.0) || !(t.time_budget > 0.0) {
                return Err(scenario_err(format!("tasks[{i}]"), "success_radius and time_budget must be > 0"));
            }
        }
        for (i, o) in self.obstacles.iter().enumerate() {
            if !names.contains(o.task.as_str()) {
                return Err(scenario_err(format!("obstacles[{i}].task"), format!("unknown task `{}`", o.task)));
            }
            if !(o.activation >= 0.0) || (0..3).any(|k| o.min[k] > o.max[k]) {
                return Err(scenario_err(format!("obstacles[{i}]"), "needs activation >= 0 and min <= max"));
            }
        }
        Ok(())
    }
}
