//! Closed-loop navigation: a capped-speed unicycle follows the elastic band,
//! the band is rebuilt every tick against the rolling costmap, and the
//! global planner is called again when no valid band can be built.

use std::fmt::Write as _;
use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::env_model::{wrap_angle, Aabb, EnvironmentSpec, Laser, Pose};
use crate::error::{NavError, Result};
use crate::global_planner::{plan_variable, shortcut, PlanOutcome, PlanSpace, PlannerConfig, Point};
use crate::grid::{CellState, Grid2};
use crate::local_planner::{band_valid, build_band, optimize_band, Band, LocalConfig, LocalCostmap, BAND_TRACE_HEADER};
use crate::traversability::{TerrainLabel, TraversableMap};

fn dist(a: Point, b: Point) -> f64 {
    (a[0] - b[0]).hypot(a[1] - b[1])
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SimConfig {
    /// Control period, seconds.
    pub dt: f64,
    pub v_max: f64,
    /// Angular speed cap, rad/s.
    pub w_max: f64,
    /// Pure-pursuit lookahead along the band, meters.
    pub lookahead: f64,
    /// Obstacle inflation used by the global planner, meters.
    pub inflation: f64,
    /// Costmap clearance above the robot radius at which full speed is allowed.
    pub slow_margin: f64,
    pub max_replans: usize,
    pub laser: Laser,
}

impl Default for SimConfig {
    fn default() -> Self {
        Self {
            dt: 0.05,
            v_max: 1.0,
            w_max: 1.5,
            lookahead: 0.6,
            inflation: 0.4,
            slow_margin: 0.3,
            max_replans: 3,
            laser: Laser::default(),
        }
    }
}

impl SimConfig {
    pub fn validate(&self) -> Result<()> {
        for (field, v) in [
            ("sim.dt", self.dt),
            ("sim.v_max", self.v_max),
            ("sim.w_max", self.w_max),
            ("sim.lookahead", self.lookahead),
            ("sim.slow_margin", self.slow_margin),
        ] {
            if !(v > 0.0) || !v.is_finite() {
                return Err(NavError::param(field, "must be finite and > 0"));
            }
        }
        if !(self.inflation >= 0.0) {
            return Err(NavError::param("sim.inflation", "must be >= 0"));
        }
        self.laser.validate()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct RobotState {
    pub pose: Pose,
    /// Commanded planar speed, m/s.
    pub speed: f64,
    pub omega: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Task {
    pub name: String,
    /// `[x, y, yaw_deg]`.
    pub start: [f64; 3],
    pub goal: [f64; 2],
    #[serde(default = "default_success_radius")]
    pub success_radius: f64,
    #[serde(default = "default_time_budget")]
    pub time_budget: f64,
}

fn default_success_radius() -> f64 {
    0.25
}

fn default_time_budget() -> f64 {
    60.0
}

/// A box that appears at `activation` seconds and optionally moves.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DynamicObstacle {
    pub min: [f64; 3],
    pub max: [f64; 3],
    pub activation: f64,
    #[serde(default)]
    pub velocity: Option<[f64; 2]>,
}

impl DynamicObstacle {
    fn footprint_at(&self, t: f64) -> Option<Aabb> {
        if t < self.activation {
            return None;
        }
        let [vx, vy] = self.velocity.unwrap_or([0.0, 0.0]);
        let dt = t - self.activation;
        let (dx, dy) = (vx * dt, vy * dt);
        Some(Aabb::new([self.min[0] + dx, self.min[1] + dy, self.min[2]], [self.max[0] + dx, self.max[1] + dy, self.max[2]]))
    }
}

fn box_distance(b: &Aabb, p: Point) -> f64 {
    let dx = (b.min[0] - p[0]).max(p[0] - b.max[0]).max(0.0);
    let dy = (b.min[1] - p[1]).max(p[1] - b.max[1]).max(0.0);
    dx.hypot(dy)
}

/// Static inputs of a run: the world, the traversable map used for
/// planning, and the ground-truth obstacle grid used only for auditing.
#[derive(Debug, Clone)]
pub struct NavWorld {
    env: EnvironmentSpec,
    map: TraversableMap,
    static_states: Grid2<CellState>,
    space: PlanSpace,
    truth: Grid2<bool>,
}

impl NavWorld {
    /// `truth` is a reference classification of the same world; its
    /// non-Free cells are the obstacles safety is audited against.
    pub fn new(env: EnvironmentSpec, map: TraversableMap, truth: &TraversableMap, inflation: f64) -> Result<Self> {
        if map.geometry() != truth.geometry() {
            return Err(NavError::param("truth", "must share the traversable map's grid"));
        }
        let static_states = map.states();
        let space = PlanSpace::new(&static_states, inflation)?;
        let truth =
            Grid2 { geometry: *truth.geometry(), data: truth.states().data.iter().map(|&s| s != CellState::Free).collect() };
        Ok(Self { env, map, static_states, space, truth })
    }

    pub fn env(&self) -> &EnvironmentSpec {
        &self.env
    }

    pub fn map(&self) -> &TraversableMap {
        &self.map
    }

    pub fn space(&self) -> &PlanSpace {
        &self.space
    }

    /// Distance from `p` to the nearest ground-truth obstacle square or
    /// active box, capped at `reach`.
    pub fn truth_clearance(&self, p: Point, boxes: &[Aabb], reach: f64) -> f64 {
        let g = &self.truth.geometry;
        let r = g.resolution;
        let mut best = reach;
        for b in boxes {
            best = best.min(box_distance(b, p));
        }
        let (lo_x, lo_y) = g.cell_of(p[0] - reach, p[1] - reach);
        let (hi_x, hi_y) = g.cell_of(p[0] + reach, p[1] + reach);
        for cy in lo_y..=hi_y {
            for cx in lo_x..=hi_x {
                // cells off the map count as obstacles
                let blocked = self.truth.get(cx, cy).copied().unwrap_or(true);
                if !blocked {
                    continue;
                }
                let x0 = g.origin[0] + cx as f64 * r;
                let y0 = g.origin[1] + cy as f64 * r;
                let cell = Aabb::new([x0, y0, 0.0], [x0 + r, y0 + r, 0.0]);
                best = best.min(box_distance(&cell, p));
            }
        }
        best
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RunMetrics {
    pub task: String,
    pub success: bool,
    pub reason: Option<String>,
    /// Wall time of every global plan, initial plan first, microseconds.
    pub plan_times_us: Vec<u64>,
    pub replans: usize,
    pub distance: f64,
    pub elapsed: f64,
    pub average_speed: f64,
    pub max_speed: f64,
    /// Smallest ground-truth clearance of the robot center over the run.
    pub min_truth_clearance: f64,
    /// Ticks spent on cells the traversable map labels Rise.
    pub rise_ticks: usize,
    pub ticks: usize,
}

impl RunMetrics {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("metrics serialize")
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct TraceRow {
    pub t: f64,
    pub x: f64,
    pub y: f64,
    pub yaw: f64,
    pub speed: f64,
    pub band_length: f64,
    pub band_clearance: f64,
    pub truth_clearance: f64,
    pub replan: bool,
    pub obstacle_seen: bool,
    pub goal: bool,
}

pub const TRACE_HEADER: &str = "t,x,y,yaw,speed,band_length,band_clearance,truth_clearance,replan,obstacle_seen,goal\n";

/// Per-tick rows as CSV.
pub fn trace_to_csv(rows: &[TraceRow]) -> String {
    let mut s = String::from(TRACE_HEADER);
    for r in rows {
        let _ = writeln!(
            s,
            "{:.3},{:.6},{:.6},{:.6},{:.6},{:.6},{:.6},{:.6},{},{},{}",
            r.t,
            r.x,
            r.y,
            r.yaw,
            r.speed,
            r.band_length,
            r.band_clearance,
            r.truth_clearance,
            u8::from(r.replan),
            u8::from(r.obstacle_seen),
            u8::from(r.goal)
        );
    }
    s
}

/// Point `distance` meters along a polyline (its end if shorter).
fn point_along(points: &[Point], distance: f64) -> Point {
    let mut left = distance;
    for w in points.windows(2) {
        let d = dist(w[0], w[1]);
        if d >= left && d > 0.0 {
            let t = left / d;
            return [w[0][0] + t * (w[1][0] - w[0][0]), w[0][1] + t * (w[1][1] - w[0][1])];
        }
        left -= d;
    }
    *points.last().expect("non-empty polyline")
}

/// One control tick of pure pursuit on the band. Speed is capped by
/// `v_max`, reduced for heading error, for low `clearance`, and near the
/// goal; inside the success radius the robot stops.
pub fn follow_band(
    state: &RobotState,
    band: &Band,
    clearance: f64,
    goal: Point,
    robot_radius: f64,
    cfg: &SimConfig,
) -> RobotState {
    let p = state.pose;
    let here = [p.x, p.y];
    let to_goal = dist(here, goal);
    if band.is_empty() || to_goal <= 1e-9 {
        return RobotState { speed: 0.0, omega: 0.0, ..*state };
    }
    let centers = band.centers();
    let target = if centers.len() == 1 { centers[0] } else { point_along(&centers, cfg.lookahead) };
    let heading = (target[1] - p.y).atan2(target[0] - p.x);
    let err = wrap_angle(heading - p.yaw);

    // full speed when aligned, zero beyond 60 degrees of error
    let turn = ((err.cos() - 0.5) / 0.5).clamp(0.0, 1.0);
    let room = ((clearance - robot_radius) / cfg.slow_margin).clamp(0.3, 1.0);
    let v = (cfg.v_max * turn.min(room)).min(2.0 * to_goal).min(cfg.v_max);

    let curvature = if err.abs() < std::f64::consts::FRAC_PI_2 {
        2.0 * err.sin() / cfg.lookahead
    } else {
        2.0 * err.signum() / cfg.lookahead
    };
    let omega = (v.max(0.3) * curvature).clamp(-cfg.w_max, cfg.w_max);
    let mid_yaw = p.yaw + 0.5 * omega * cfg.dt;
    let pose =
        Pose::new(p.x + v * cfg.dt * mid_yaw.cos(), p.y + v * cfg.dt * mid_yaw.sin(), p.z, wrap_angle(p.yaw + omega * cfg.dt));
    RobotState { pose, speed: v, omega }
}

/// Result of a finished run.
#[derive(Debug, Clone)]
pub struct RunOutput {
    pub metrics: RunMetrics,
    pub trace: Vec<TraceRow>,
    /// Band bubbles per tick, CSV.
    pub band_trace: String,
    /// Global paths in planning order (initial plan first).
    pub paths: Vec<Vec<Point>>,
}

/// A running navigation task.
pub struct Simulation<'w> {
    world: &'w NavWorld,
    task: Task,
    cfg: SimConfig,
    local: LocalConfig,
    planner: PlannerConfig,
    obstacles: Vec<DynamicObstacle>,
    state: RobotState,
    t: f64,
    path: Vec<Point>,
    seg: usize,
    seen: Vec<bool>,
    seen_points: Vec<Point>,
    costmap: LocalCostmap,
    metrics: RunMetrics,
    trace: Vec<TraceRow>,
    band_trace: String,
    paths: Vec<Vec<Point>>,
    finished: bool,
}

impl<'w> Simulation<'w> {
    pub fn new(world: &'w NavWorld, task: Task, cfg: SimConfig, local: LocalConfig, planner: PlannerConfig) -> Result<Self> {
        cfg.validate()?;
        local.validate()?;
        planner.validate(world.space.geometry().resolution)?;
        if !(task.success_radius > 0.0) || !(task.time_budget > 0.0) {
            return Err(NavError::param("task", "success_radius and time_budget must be > 0"));
        }
        let g = world.map.geometry();
        for (what, x, y) in [("task start", task.start[0], task.start[1]), ("task goal", task.goal[0], task.goal[1])] {
            if world.map.state_at(x, y) != CellState::Free {
                return Err(NavError::NotFree { what, x, y });
            }
        }
        let z = world.env.surface_height(task.start[0], task.start[1])?;
        let pose = Pose::new(task.start[0], task.start[1], z, task.start[2].to_radians());
        let costmap = LocalCostmap::new(g, local.width, local.length)?;
        let metrics = RunMetrics {
            task: task.name.clone(),
            success: false,
            reason: None,
            plan_times_us: Vec::new(),
            replans: 0,
            distance: 0.0,
            elapsed: 0.0,
            average_speed: 0.0,
            max_speed: 0.0,
            min_truth_clearance: f64::INFINITY,
            rise_ticks: 0,
            ticks: 0,
        };
        Ok(Self {
            world,
            task,
            cfg,
            local,
            planner,
            obstacles: Vec::new(),
            state: RobotState { pose, speed: 0.0, omega: 0.0 },
            t: 0.0,
            path: Vec::new(),
            seg: 0,
            seen: vec![false; g.len()],
            seen_points: Vec::new(),
            costmap,
            metrics,
            trace: Vec::new(),
            band_trace: String::from(BAND_TRACE_HEADER),
            paths: Vec::new(),
            finished: false,
        })
    }

    /// Schedules a box that becomes visible to the laser from its activation
    /// time on. The static map is never modified.
    pub fn inject_obstacle(&mut self, obstacle: DynamicObstacle) -> Result<()> {
        if obstacle.activation < self.t {
            return Err(NavError::param("obstacle.activation", "must not be in the past"));
        }
        let b = self.world.env.bounds();
        if !(b.contains_xy(obstacle.min[0], obstacle.min[1]) && b.contains_xy(obstacle.max[0], obstacle.max[1])) {
            return Err(NavError::param("obstacle", "footprint must lie inside the world"));
        }
        self.obstacles.push(obstacle);
        Ok(())
    }

    pub fn state(&self) -> &RobotState {
        &self.state
    }

    pub fn time(&self) -> f64 {
        self.t
    }

    pub fn is_finished(&self) -> bool {
        self.finished
    }

    pub fn trace(&self) -> &[TraceRow] {
        &self.trace
    }

    /// Trace so far as CSV (header only before the first tick).
    pub fn record_trace(&self) -> String {
        trace_to_csv(&self.trace)
    }

    fn here(&self) -> Point {
        [self.state.pose.x, self.state.pose.y]
    }

    fn active_boxes(&self) -> Vec<Aabb> {
        self.obstacles.iter().filter_map(|o| o.footprint_at(self.t)).collect()
    }

    fn fail(&mut self, reason: &str) {
        self.metrics.success = false;
        self.metrics.reason = Some(reason.to_string());
        self.finished = true;
    }

    /// Plans from the robot to the goal through the static map plus every
    /// obstacle the laser has reported so far.
    fn plan(&mut self) -> bool {
        let clock = Instant::now();
        let mut space = self.world.space.clone();
        let r = space.geometry().resolution;
        space.block_discs(&self.seen_points, 0.5 * r);
        let here = self.here();
        let start = if space.is_free(here) { Some(here) } else { space.nearest_free(here) };
        let goal = self.task.goal;
        let cfg = PlannerConfig { seed: self.planner.seed.wrapping_add(self.metrics.plan_times_us.len() as u64), ..self.planner };
        let outcome = match start {
            Some(s) if space.is_free(goal) => plan_variable(&space, s, goal, &cfg).ok(),
            _ => None,
        };
        self.metrics.plan_times_us.push(clock.elapsed().as_micros() as u64);
        match outcome {
            Some(PlanOutcome::Found(p)) => {
                let mut pts = shortcut(&p, &space).waypoints;
                if dist(pts[0], here) > 1e-9 {
                    pts.insert(0, here);
                }
                self.paths.push(pts.clone());
                self.path = pts;
                self.seg = 0;
                true
            }
            _ => false,
        }
    }

    /// Moves the path cursor to the segment closest to the robot.
    fn advance(&mut self) {
        let here = self.here();
        let mut best = (self.seg, f64::INFINITY);
        let end = (self.seg + 4).min(self.path.len().saturating_sub(1));
        for i in self.seg..end {
            let (a, b) = (self.path[i], self.path[i + 1]);
            let ab = [b[0] - a[0], b[1] - a[1]];
            let len2 = ab[0] * ab[0] + ab[1] * ab[1];
            let t = if len2 > 0.0 { (((here[0] - a[0]) * ab[0] + (here[1] - a[1]) * ab[1]) / len2).clamp(0.0, 1.0) } else { 0.0 };
            let d = dist(here, [a[0] + t * ab[0], a[1] + t * ab[1]]);
            // prefer later segments on ties so corners are not revisited
            if d <= best.1 + 1e-9 {
                best = (i, d);
            }
        }
        self.seg = best.0;
    }

    /// Robot position followed by the remaining path, cut where it leaves
    /// the costmap window.
    fn band_seed(&self) -> Vec<Point> {
        let g = self.costmap.geometry();
        let r = g.resolution;
        let lo = [g.origin[0] + r, g.origin[1] + r];
        let ext = g.extent();
        let hi = [g.origin[0] + ext[0] - r, g.origin[1] + ext[1] - r];
        let inside = |p: Point| p[0] >= lo[0] && p[0] <= hi[0] && p[1] >= lo[1] && p[1] <= hi[1];
        let mut pts = vec![self.here()];
        for &next in &self.path[self.seg + 1..] {
            let prev = *pts.last().expect("seeded");
            if inside(next) {
                pts.push(next);
                continue;
            }
            // clip prev -> next at the window border
            let mut t_exit: f64 = 1.0;
            for k in 0..2 {
                let d = next[k] - prev[k];
                if d > 0.0 {
                    t_exit = t_exit.min((hi[k] - prev[k]) / d);
                } else if d < 0.0 {
                    t_exit = t_exit.min((lo[k] - prev[k]) / d);
                }
            }
            let t_exit = t_exit.max(0.0);
            let cut = [prev[0] + t_exit * (next[0] - prev[0]), prev[1] + t_exit * (next[1] - prev[1])];
            if dist(cut, prev) > 1e-6 {
                pts.push(cut);
            }
            break;
        }
        pts
    }

    fn make_band(&self) -> Option<Band> {
        let seed = self.band_seed();
        let band = build_band(&seed, &self.costmap, self.local.robot_radius).ok()?;
        let band = optimize_band(&band, &self.costmap, &self.local, self.local.sweeps);
        band_valid(&band, &self.costmap, self.local.robot_radius).then_some(band)
    }

    /// Advances one control tick. Returns false once the run is over.
    pub fn step(&mut self) -> bool {
        if self.finished {
            return false;
        }
        let mut replan = false;
        if self.path.is_empty() && !self.plan() {
            self.fail("no path to goal");
            return false;
        }
        let boxes = self.active_boxes();
        let env_now;
        let env = if boxes.is_empty() {
            &self.world.env
        } else {
            env_now = match self.world.env.with_boxes(&boxes) {
                Ok(e) => e,
                Err(_) => {
                    self.fail("invalid dynamic obstacle");
                    return false;
                }
            };
            &env_now
        };
        let pose = self.state.pose;
        let ranges = env.simulate_laser_scan(&pose, &self.cfg.laser);
        let pitch = env.surface_pitch(pose.x, pose.y, pose.yaw);
        self.costmap.update(&pose, pitch, &ranges, &self.cfg.laser, &self.world.static_states);
        let observed = self.costmap.observed_obstacles(&self.world.static_states);
        let g = *self.world.map.geometry();
        for p in &observed {
            if let Some(idx) = g.index_of(p[0], p[1]) {
                if !self.seen[idx] {
                    self.seen[idx] = true;
                    self.seen_points.push(*p);
                }
            }
        }

        let here = self.here();
        let truth = self.world.truth_clearance(here, &boxes, 1.0);
        self.metrics.min_truth_clearance = self.metrics.min_truth_clearance.min(truth);
        if self.world.map.label_at(here[0], here[1]) == TerrainLabel::Rise {
            self.metrics.rise_ticks += 1;
        }

        let at_goal = dist(here, self.task.goal) <= self.task.success_radius;
        let mut band = None;
        if !at_goal {
            if self.t >= self.task.time_budget {
                self.fail("time budget exhausted");
                return false;
            }
            self.advance();
            band = self.make_band();
            if band.is_none() {
                if self.metrics.replans >= self.cfg.max_replans {
                    self.fail("replan limit reached");
                    return false;
                }
                self.metrics.replans += 1;
                replan = true;
                if !self.plan() {
                    self.fail("no path to goal");
                    return false;
                }
                self.advance();
                band = self.make_band();
            }
        }

        let tick = self.metrics.ticks;
        let (band_length, band_clearance) = match &band {
            Some(b) => {
                b.trace_rows(tick, &mut self.band_trace);
                (b.length(), b.min_clearance())
            }
            None => (0.0, 0.0),
        };
        let next = match (&band, at_goal) {
            (Some(b), false) => {
                let c = self.costmap.clearance_at(here);
                follow_band(&self.state, b, c, self.task.goal, self.local.robot_radius, &self.cfg)
            }
            _ => RobotState { speed: 0.0, omega: 0.0, ..self.state },
        };
        let moved = dist(here, [next.pose.x, next.pose.y]);
        let speed = moved / self.cfg.dt;
        self.trace.push(TraceRow {
            t: self.t,
            x: here[0],
            y: here[1],
            yaw: self.state.pose.yaw,
            speed: self.state.speed,
            band_length,
            band_clearance,
            truth_clearance: truth,
            replan,
            obstacle_seen: !observed.is_empty(),
            goal: at_goal,
        });
        self.metrics.ticks += 1;
        if at_goal {
            self.metrics.success = true;
            self.finished = true;
            return false;
        }
        let z = env.surface_height(next.pose.x, next.pose.y).unwrap_or(self.state.pose.z);
        self.state = RobotState { pose: Pose::new(next.pose.x, next.pose.y, z, next.pose.yaw), ..next };
        self.metrics.distance += moved;
        self.metrics.max_speed = self.metrics.max_speed.max(speed);
        self.t += self.cfg.dt;
        self.metrics.elapsed = self.t;
        self.metrics.average_speed = if self.t > 0.0 { self.metrics.distance / self.t } else { 0.0 };
        true
    }

    pub fn run(mut self) -> RunOutput {
        while self.step() {}
        RunOutput { metrics: self.metrics, trace: self.trace, band_trace: self.band_trace, paths: self.paths }
    }
}

/// Runs one task to completion with the given scheduled obstacles.
pub fn run_task(
    world: &NavWorld,
    task: &Task,
    cfg: &SimConfig,
    local: &LocalConfig,
    planner: &PlannerConfig,
    obstacles: &[DynamicObstacle],
) -> Result<RunOutput> {
    let mut sim = Simulation::new(world, task.clone(), *cfg, *local, *planner)?;
    for o in obstacles {
        sim.inject_obstacle(*o)?;
    }
    Ok(sim.run())
}
