//! Sampling-based global planning on a trinary grid: a bidirectional RRT
//! that connects samples directly (truncating at obstacles) and a classic
//! fixed-step RRT used as a baseline.

use std::fmt::Write as _;
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{NavError, Result};
use crate::grid::{distance_transform, supercover, CellState, Grid2, GridGeometry};

pub type Point = [f64; 2];

fn dist(a: Point, b: Point) -> f64 {
    (a[0] - b[0]).hypot(a[1] - b[1])
}

/// Free space for planning: cells that are `Free` after inflating every
/// occupied or unknown cell by the robot radius. Extra obstacles can be
/// stamped on top (used for obstacles discovered while driving).
#[derive(Debug, Clone)]
pub struct PlanSpace {
    geometry: GridGeometry,
    inflation: f64,
    blocked: Vec<bool>,
    free_cells: Vec<u32>,
}

impl PlanSpace {
    pub fn new(states: &Grid2<CellState>, inflation: f64) -> Result<Self> {
        if !(inflation >= 0.0) || !inflation.is_finite() {
            return Err(NavError::param("inflation", "must be finite and >= 0"));
        }
        if states.geometry.is_empty() {
            return Err(NavError::param("map", "grid is empty"));
        }
        let geometry = states.geometry;
        let blocked = if inflation > 0.0 {
            let field = distance_transform(geometry, |i| states.data[i] != CellState::Free);
            (0..geometry.len()).map(|i| states.data[i] != CellState::Free || field.meters(i) <= inflation + 1e-9).collect()
        } else {
            states.data.iter().map(|&s| s != CellState::Free).collect()
        };
        let mut space = Self { geometry, inflation, blocked, free_cells: Vec::new() };
        space.reindex();
        Ok(space)
    }

    fn reindex(&mut self) {
        self.free_cells = (0..self.blocked.len() as u32).filter(|&i| !self.blocked[i as usize]).collect();
    }

    pub fn geometry(&self) -> &GridGeometry {
        &self.geometry
    }

    pub fn inflation(&self) -> f64 {
        self.inflation
    }

    pub fn free_cell_count(&self) -> usize {
        self.free_cells.len()
    }

    pub fn is_free_cell(&self, cx: i64, cy: i64) -> bool {
        self.geometry.in_grid(cx, cy) && !self.blocked[self.geometry.index(cx as usize, cy as usize)]
    }

    pub fn is_free(&self, p: Point) -> bool {
        let (cx, cy) = self.geometry.cell_of(p[0], p[1]);
        self.is_free_cell(cx, cy)
    }

    /// Marks every cell whose center lies within `radius` plus the inflation
    /// radius of `center` as blocked. Returns the number of newly blocked cells.
    pub fn block_disc(&mut self, center: Point, radius: f64) -> usize {
        self.block_discs(&[center], radius)
    }

    /// [`Self::block_disc`] for many centers at once.
    pub fn block_discs(&mut self, centers: &[Point], radius: f64) -> usize {
        let reach = radius.max(0.0) + self.inflation;
        let g = self.geometry;
        let mut added = 0;
        for &center in centers {
            let (lo_x, lo_y) = g.cell_of(center[0] - reach, center[1] - reach);
            let (hi_x, hi_y) = g.cell_of(center[0] + reach, center[1] + reach);
            for cy in lo_y.max(0)..=hi_y.min(g.height as i64 - 1) {
                for cx in lo_x.max(0)..=hi_x.min(g.width as i64 - 1) {
                    let idx = g.index(cx as usize, cy as usize);
                    if !self.blocked[idx] && dist(g.center(cx, cy), center) <= reach + 1e-9 {
                        self.blocked[idx] = true;
                        added += 1;
                    }
                }
            }
        }
        if added > 0 {
            self.reindex();
        }
        added
    }

    /// The blocked/free grid as trinary states (blocked cells read Occupied).
    pub fn states(&self) -> Grid2<CellState> {
        Grid2 {
            geometry: self.geometry,
            data: self.blocked.iter().map(|&b| if b { CellState::Occupied } else { CellState::Free }).collect(),
        }
    }

    /// Center of the nearest free cell to `p` (Euclidean over cell centers).
    pub fn nearest_free(&self, p: Point) -> Option<Point> {
        self.free_cells
            .iter()
            .map(|&i| self.geometry.center_of_index(i as usize))
            .min_by(|a, b| dist(*a, p).total_cmp(&dist(*b, p)))
    }

    fn sample(&self, rng: &mut ChaCha8Rng) -> Point {
        let idx = self.free_cells[rng.random_range(0..self.free_cells.len())] as usize;
        let (cx, cy) = self.geometry.coords(idx);
        let r = self.geometry.resolution;
        let o = self.geometry.origin;
        // stay strictly inside the cell so the sample maps back to it
        let jx: f64 = rng.random_range(0.001..0.999);
        let jy: f64 = rng.random_range(0.001..0.999);
        [o[0] + (cx as f64 + jx) * r, o[1] + (cy as f64 + jy) * r]
    }

    /// Checks the straight segment `a -> b` against every cell it touches.
    /// On a collision, `last_free` is the center of the last free cell before
    /// the first blocked one, which keeps a one-cell margin from the obstacle.
    pub fn segment_check(&self, a: Point, b: Point) -> Result<SegmentCheck> {
        if !self.is_free(a) {
            return Err(NavError::NotFree { what: "segment start", x: a[0], y: a[1] });
        }
        let g = &self.geometry;
        let mut visited: Vec<[i64; 2]> = Vec::new();
        let mut hit = false;
        supercover(g.origin, g.resolution, a, b, |c| {
            if self.is_free_cell(c[0], c[1]) {
                visited.push(c);
                true
            } else {
                hit = true;
                false
            }
        });
        if !hit {
            return Ok(SegmentCheck::Free);
        }
        // walk back until the shortened segment itself is clear
        for c in visited.iter().rev() {
            let p = g.center(c[0], c[1]);
            if self.segment_free(a, p) {
                return Ok(SegmentCheck::Blocked { last_free: p });
            }
        }
        Ok(SegmentCheck::Blocked { last_free: a })
    }

    /// True when every cell the segment touches is free.
    pub fn segment_free(&self, a: Point, b: Point) -> bool {
        let g = &self.geometry;
        let mut ok = true;
        supercover(g.origin, g.resolution, a, b, |c| {
            ok = self.is_free_cell(c[0], c[1]);
            ok
        });
        ok
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum SegmentCheck {
    Free,
    Blocked { last_free: Point },
}

/// A tree of planar points with parent links, rooted at node 0.
#[derive(Debug, Clone, PartialEq)]
pub struct PlanTree {
    nodes: Vec<Point>,
    parents: Vec<u32>,
}

const NO_PARENT: u32 = u32::MAX;

impl PlanTree {
    pub fn new(root: Point) -> Self {
        Self { nodes: vec![root], parents: vec![NO_PARENT] }
    }

    /// An empty tree, only useful as a placeholder.
    pub fn empty() -> Self {
        Self { nodes: Vec::new(), parents: Vec::new() }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn nodes(&self) -> &[Point] {
        &self.nodes
    }

    pub fn node(&self, i: usize) -> Point {
        self.nodes[i]
    }

    pub fn parent(&self, i: usize) -> Option<usize> {
        let p = self.parents[i];
        (p != NO_PARENT).then_some(p as usize)
    }

    pub fn add(&mut self, p: Point, parent: usize) -> usize {
        assert!(parent < self.nodes.len(), "parent index out of range");
        self.nodes.push(p);
        self.parents.push(parent as u32);
        self.nodes.len() - 1
    }

    /// Index of the closest node; the earliest inserted wins ties.
    pub fn nearest(&self, x: Point) -> Result<usize> {
        if self.nodes.is_empty() {
            return Err(NavError::EmptyTree);
        }
        let mut best = 0;
        let mut best_d = f64::INFINITY;
        for (i, n) in self.nodes.iter().enumerate() {
            let d = (n[0] - x[0]).powi(2) + (n[1] - x[1]).powi(2);
            if d < best_d {
                best = i;
                best_d = d;
            }
        }
        Ok(best)
    }

    /// Points from node `i` back to the root, inclusive.
    pub fn branch(&self, mut i: usize) -> Vec<Point> {
        let mut out = vec![self.nodes[i]];
        while let Some(p) = self.parent(i) {
            out.push(self.nodes[p]);
            i = p;
        }
        out
    }

    /// Edges as `(parent, child)` point pairs.
    pub fn edges(&self) -> impl Iterator<Item = (Point, Point)> + '_ {
        (1..self.nodes.len()).filter_map(|i| self.parent(i).map(|p| (self.nodes[p], self.nodes[i])))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PlannerConfig {
    pub seed: u64,
    pub max_iterations: usize,
    /// Distance at which two nodes (or a node and the goal) count as joined.
    pub connect_tolerance: f64,
    /// Goal sampling probability of the fixed-step baseline.
    pub goal_bias: f64,
}

impl Default for PlannerConfig {
    fn default() -> Self {
        Self { seed: 0, max_iterations: 5000, connect_tolerance: 0.2, goal_bias: 0.05 }
    }
}

impl PlannerConfig {
    pub fn validate(&self, resolution: f64) -> Result<()> {
        if self.max_iterations < 1 {
            return Err(NavError::param("planner.max_iterations", "must be >= 1"));
        }
        if !(self.connect_tolerance >= resolution) || !self.connect_tolerance.is_finite() {
            return Err(NavError::param(
                "planner.connect_tolerance",
                format!("must be finite and >= the map resolution ({resolution})"),
            ));
        }
        if !(0.0..=1.0).contains(&self.goal_bias) {
            return Err(NavError::param("planner.goal_bias", "must be in [0, 1]"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct PlanStats {
    pub iterations: usize,
    pub nodes: usize,
    /// Wall-clock time; not reproducible across runs.
    pub micros: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Path {
    pub waypoints: Vec<Point>,
    pub length: f64,
    pub stats: PlanStats,
}

impl Path {
    pub fn new(waypoints: Vec<Point>, stats: PlanStats) -> Self {
        let length = path_length(&waypoints);
        Self { waypoints, length, stats }
    }

    /// `x,y` rows in meters.
    pub fn to_csv(&self) -> String {
        let mut s = String::from("x,y\n");
        for p in &self.waypoints {
            let _ = writeln!(s, "{:.6},{:.6}", p[0], p[1]);
        }
        s
    }

    /// Stats plus length as a JSON object.
    pub fn stats_json(&self) -> String {
        serde_json::json!({
            "iterations": self.stats.iterations,
            "nodes": self.stats.nodes,
            "wall_time_us": self.stats.micros,
            "length_m": self.length,
            "waypoints": self.waypoints.len(),
        })
        .to_string()
    }

    /// Every consecutive segment is clear in `space`.
    pub fn is_valid(&self, space: &PlanSpace) -> bool {
        self.waypoints.first().is_some_and(|&p| space.is_free(p))
            && self.waypoints.windows(2).all(|w| space.segment_free(w[0], w[1]))
    }
}

pub fn path_length(points: &[Point]) -> f64 {
    points.windows(2).map(|w| dist(w[0], w[1])).sum()
}

#[derive(Debug, Clone, PartialEq)]
pub enum PlanOutcome {
    Found(Path),
    Failed(PlanStats),
}

impl PlanOutcome {
    pub fn path(&self) -> Option<&Path> {
        match self {
            PlanOutcome::Found(p) => Some(p),
            PlanOutcome::Failed(_) => None,
        }
    }

    pub fn stats(&self) -> PlanStats {
        match self {
            PlanOutcome::Found(p) => p.stats,
            PlanOutcome::Failed(s) => *s,
        }
    }

    pub fn is_found(&self) -> bool {
        matches!(self, PlanOutcome::Found(_))
    }
}

/// Result of a search together with the trees it grew.
#[derive(Debug, Clone)]
pub struct Search {
    pub outcome: PlanOutcome,
    pub trees: Vec<PlanTree>,
}

fn check_endpoints(space: &PlanSpace, start: Point, goal: Point) -> Result<()> {
    for (what, p) in [("start", start), ("goal", goal)] {
        if !space.is_free(p) {
            return Err(NavError::NotFree { what, x: p[0], y: p[1] });
        }
    }
    if space.free_cells.is_empty() {
        return Err(NavError::param("map", "no free cells to sample"));
    }
    Ok(())
}

/// Joins the newest node of `a` to its nearest node in `b`. Succeeds when the
/// two share a cell within `tolerance` or the joining segment is clear.
/// Returns the waypoints from `a`'s root to `b`'s root.
pub fn try_connect(a: &PlanTree, b: &PlanTree, space: &PlanSpace, tolerance: f64) -> Option<Vec<Point>> {
    if a.is_empty() || b.is_empty() {
        return None;
    }
    let ia = a.len() - 1;
    let pa = a.node(ia);
    let ib = b.nearest(pa).ok()?;
    let pb = b.node(ib);
    let g = space.geometry();
    let d = dist(pa, pb);
    let same_cell = g.cell_of(pa[0], pa[1]) == g.cell_of(pb[0], pb[1]);
    let joined = (d <= tolerance && same_cell && space.is_free(pa)) || (space.is_free(pa) && space.segment_free(pa, pb));
    if !joined {
        return None;
    }
    let mut out = a.branch(ia);
    out.reverse();
    let tail = b.branch(ib);
    let skip = usize::from(d < 1e-12);
    out.extend(tail.into_iter().skip(skip));
    Some(out)
}

/// Bidirectional RRT that connects each sample directly to its nearest node,
/// stopping short of the first obstacle on the way.
pub fn plan_variable(space: &PlanSpace, start: Point, goal: Point, cfg: &PlannerConfig) -> Result<PlanOutcome> {
    plan_variable_search(space, start, goal, cfg).map(|s| s.outcome)
}

pub fn plan_variable_search(space: &PlanSpace, start: Point, goal: Point, cfg: &PlannerConfig) -> Result<Search> {
    cfg.validate(space.geometry.resolution)?;
    check_endpoints(space, start, goal)?;
    let clock = Instant::now();
    if space.segment_free(start, goal) {
        let stats = PlanStats { iterations: 0, nodes: 2, micros: clock.elapsed().as_micros() as u64 };
        return Ok(Search {
            outcome: PlanOutcome::Found(Path::new(vec![start, goal], stats)),
            trees: vec![PlanTree::new(start), PlanTree::new(goal)],
        });
    }
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut trees = [PlanTree::new(start), PlanTree::new(goal)];
    let min_gain = 0.5 * space.geometry.resolution;
    let stats = |iterations: usize, trees: &[PlanTree; 2]| PlanStats {
        iterations,
        nodes: trees[0].len() + trees[1].len(),
        micros: clock.elapsed().as_micros() as u64,
    };
    for iter in 1..=cfg.max_iterations {
        for tree in trees.iter_mut() {
            let x_rand = space.sample(&mut rng);
            let near = tree.nearest(x_rand)?;
            let x_near = tree.node(near);
            let x_new = match space.segment_check(x_near, x_rand)? {
                SegmentCheck::Free => x_rand,
                SegmentCheck::Blocked { last_free } => last_free,
            };
            if dist(x_new, x_near) >= min_gain {
                tree.add(x_new, near);
            }
        }
        let joined = try_connect(&trees[0], &trees[1], space, cfg.connect_tolerance).or_else(|| {
            try_connect(&trees[1], &trees[0], space, cfg.connect_tolerance).map(|mut w| {
                w.reverse();
                w
            })
        });
        if let Some(waypoints) = joined {
            let s = stats(iter, &trees);
            return Ok(Search { outcome: PlanOutcome::Found(Path::new(waypoints, s)), trees: trees.to_vec() });
        }
    }
    Ok(Search { outcome: PlanOutcome::Failed(stats(cfg.max_iterations, &trees)), trees: trees.to_vec() })
}

/// Single-tree RRT with extensions capped at `step` and goal biasing.
pub fn plan_fixed(space: &PlanSpace, start: Point, goal: Point, step: f64, cfg: &PlannerConfig) -> Result<PlanOutcome> {
    plan_fixed_search(space, start, goal, step, cfg).map(|s| s.outcome)
}

pub fn plan_fixed_search(space: &PlanSpace, start: Point, goal: Point, step: f64, cfg: &PlannerConfig) -> Result<Search> {
    if !(step > 0.0) || !step.is_finite() {
        return Err(NavError::param("step", "must be finite and > 0"));
    }
    cfg.validate(space.geometry.resolution)?;
    check_endpoints(space, start, goal)?;
    let clock = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut tree = PlanTree::new(start);
    for iter in 1..=cfg.max_iterations {
        let x_rand = if rng.random_bool(cfg.goal_bias) { goal } else { space.sample(&mut rng) };
        let near = tree.nearest(x_rand)?;
        let x_near = tree.node(near);
        let d = dist(x_near, x_rand);
        if d < 1e-12 {
            continue;
        }
        let t = (step / d).min(1.0);
        let x_new = [x_near[0] + t * (x_rand[0] - x_near[0]), x_near[1] + t * (x_rand[1] - x_near[1])];
        if !space.segment_free(x_near, x_new) {
            continue;
        }
        let idx = tree.add(x_new, near);
        if dist(x_new, goal) <= cfg.connect_tolerance && space.segment_free(x_new, goal) {
            let mut waypoints = tree.branch(idx);
            waypoints.reverse();
            if dist(x_new, goal) > 1e-12 {
                waypoints.push(goal);
            }
            let stats = PlanStats { iterations: iter, nodes: tree.len(), micros: clock.elapsed().as_micros() as u64 };
            return Ok(Search { outcome: PlanOutcome::Found(Path::new(waypoints, stats)), trees: vec![tree] });
        }
    }
    let stats = PlanStats { iterations: cfg.max_iterations, nodes: tree.len(), micros: clock.elapsed().as_micros() as u64 };
    Ok(Search { outcome: PlanOutcome::Failed(stats), trees: vec![tree] })
}

/// Greedy waypoint elision: from each kept waypoint jump to the farthest
/// later one that is still directly reachable.
pub fn shortcut(path: &Path, space: &PlanSpace) -> Path {
    let w = &path.waypoints;
    if w.len() <= 2 {
        return path.clone();
    }
    let mut out = vec![w[0]];
    let mut i = 0;
    while i < w.len() - 1 {
        let mut j = w.len() - 1;
        while j > i + 1 && !space.segment_free(w[i], w[j]) {
            j -= 1;
        }
        out.push(w[j]);
        i = j;
    }
    Path::new(out, path.stats)
}

/// Tree edges as CSV rows `tree,x0,y0,x1,y1`.
pub fn trees_to_csv(trees: &[PlanTree]) -> String {
    let mut s = String::from("tree,x0,y0,x1,y1\n");
    for (t, tree) in trees.iter().enumerate() {
        for (a, b) in tree.edges() {
            let _ = writeln!(s, "{t},{:.6},{:.6},{:.6},{:.6}", a[0], a[1], b[0], b[1]);
        }
    }
    s
}
