//! Multi-layer traversability analysis.
//!
//! The octree is sliced into `K` horizontal slabs. Each cell gets a surface
//! level (the highest slab holding an occupied voxel). Where the level steps
//! up by one slab, the horizontal run to the next higher level gives the
//! gradient `atan(d / (r * v))`; gentle runs are slopes, short runs and
//! multi-slab jumps are rises. Slope cells bordered laterally by a level
//! change are marked as edges, and everything is fused into one trinary map.
//!
//! Known limitation: a step lower than the slab spacing never changes the
//! level of a cell, so it cannot be resolved as a rise.

use std::f64::consts::FRAC_PI_2;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::env_model::EnvironmentSpec;
use crate::error::{NavError, Result};
use crate::grid::{distance_transform, supercover, CellState, Grid2, GridGeometry};
use crate::octree_map::{LayerGrid, OccupancyOctree};
use crate::pgm;

const COS_45: f64 = std::f64::consts::FRAC_1_SQRT_2;

/// Slab layout used to slice the octree.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct LayerConfig {
    /// Bottom of the lowest slab (m).
    pub z_base: f64,
    /// Slab thickness and spacing (m).
    pub spacing: f64,
    pub count: usize,
    /// Height of the overhead slab above the stack; anything occupied there
    /// is too tall to drive under or onto. Zero disables it.
    pub cap_height: f64,
}

impl Default for LayerConfig {
    fn default() -> Self {
        Self { z_base: 0.05, spacing: 0.25, count: 4, cap_height: 0.5 }
    }
}

impl LayerConfig {
    pub fn top(&self) -> f64 {
        self.z_base + self.count as f64 * self.spacing
    }
}

/// `K >= 2` contiguous layer maps sharing one grid.
#[derive(Debug, Clone)]
pub struct LayerStack {
    layers: Vec<LayerGrid>,
    cap: Option<LayerGrid>,
    z_base: f64,
    spacing: f64,
}

impl LayerStack {
    pub fn new(layers: Vec<LayerGrid>) -> Result<Self> {
        if layers.len() < 2 {
            return Err(NavError::TooFewLayers(layers.len()));
        }
        let geometry = *layers[0].geometry();
        let z_base = layers[0].z0;
        let spacing = layers[0].thickness;
        for (k, layer) in layers.iter().enumerate() {
            if *layer.geometry() != geometry {
                return Err(NavError::param("layers", format!("layer {k} has a different grid")));
            }
            let expected = z_base + k as f64 * spacing;
            if (layer.z0 - expected).abs() > 1e-9 || (layer.thickness - spacing).abs() > 1e-12 {
                return Err(NavError::param("layers", format!("layer {k} is not contiguous with layer 0")));
            }
        }
        Ok(Self { layers, cap: None, z_base, spacing })
    }

    /// Adds an overhead slab starting at the top of the stack.
    pub fn with_cap(mut self, cap: LayerGrid) -> Result<Self> {
        if cap.geometry() != self.geometry() {
            return Err(NavError::param("layers.cap_height", "cap slab has a different grid"));
        }
        if (cap.z0 - self.top()).abs() > 1e-9 {
            return Err(NavError::param("layers.cap_height", "cap slab must start at the top of the stack"));
        }
        self.cap = Some(cap);
        Ok(self)
    }

    pub fn cap(&self) -> Option<&LayerGrid> {
        self.cap.as_ref()
    }

    pub fn top(&self) -> f64 {
        self.z_base + self.layers.len() as f64 * self.spacing
    }

    pub fn from_octree(tree: &OccupancyOctree, config: &LayerConfig) -> Result<Self> {
        if config.count < 2 {
            return Err(NavError::TooFewLayers(config.count));
        }
        let layers = (0..config.count)
            .map(|k| tree.project_layer(config.z_base + k as f64 * config.spacing, config.spacing))
            .collect::<Result<Vec<_>>>()?;
        let stack = Self::new(layers)?;
        let top = config.top();
        let ceiling = (top + config.cap_height).min(tree.bounds().max[2]);
        if config.cap_height > 0.0 && ceiling - top >= tree.resolution() {
            let cap = tree.project_layer(top, ceiling - top)?;
            return stack.with_cap(cap);
        }
        Ok(stack)
    }

    pub fn layers(&self) -> &[LayerGrid] {
        &self.layers
    }

    pub fn len(&self) -> usize {
        self.layers.len()
    }

    pub fn is_empty(&self) -> bool {
        self.layers.is_empty()
    }

    pub fn spacing(&self) -> f64 {
        self.spacing
    }

    pub fn z_base(&self) -> f64 {
        self.z_base
    }

    pub fn geometry(&self) -> &GridGeometry {
        self.layers[0].geometry()
    }
}

/// Classification thresholds.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GradientParams {
    /// Maximum traversable slope angle (rad).
    pub theta: f64,
    /// Cell size (m).
    pub resolution: f64,
    /// Width of the occupied band along slope edges (cells).
    pub edge_width: usize,
}

impl GradientParams {
    pub fn new(theta: f64, resolution: f64, edge_width: usize) -> Result<Self> {
        let p = Self { theta, resolution, edge_width };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.theta > 0.0 && self.theta < FRAC_PI_2) {
            return Err(NavError::param("theta", "must lie strictly between 0 and 90 degrees"));
        }
        if !(self.resolution > 0.0) {
            return Err(NavError::param("resolution", "must be positive"));
        }
        if self.edge_width < 1 {
            return Err(NavError::param("edge_width", "must be at least 1 cell"));
        }
        Ok(())
    }
}

/// Slope angle between two layers `spacing` apart whose boundaries are
/// `offset` cells of size `resolution` apart horizontally. A zero offset is a
/// vertical rise.
pub fn layer_gradient(spacing: f64, resolution: f64, offset: f64) -> Result<f64> {
    if !(spacing > 0.0) || !(resolution > 0.0) {
        return Err(NavError::param("layer_gradient", "spacing and resolution must be positive"));
    }
    if !(offset >= 0.0) || !offset.is_finite() {
        return Err(NavError::param("layer_gradient", "offset must be finite and non-negative"));
    }
    if offset == 0.0 {
        return Ok(FRAC_PI_2);
    }
    Ok((spacing / (resolution * offset)).atan())
}

/// Traversable (`true`) iff the gradient is strictly below the threshold.
pub fn classify_gradient(alpha: f64, theta: f64) -> bool {
    alpha < theta
}

/// Per-cell terrain class.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
#[repr(u8)]
pub enum TerrainLabel {
    Unknown = 0,
    Flat = 1,
    Slope = 2,
    SlopeEdge = 3,
    Rise = 4,
}

impl TerrainLabel {
    pub const ALL: [TerrainLabel; 5] =
        [TerrainLabel::Unknown, TerrainLabel::Flat, TerrainLabel::Slope, TerrainLabel::SlopeEdge, TerrainLabel::Rise];

    pub fn code(self) -> u8 {
        self as u8
    }

    pub fn from_code(c: u8) -> Option<Self> {
        Self::ALL.get(c as usize).copied()
    }

    pub fn state(self) -> CellState {
        match self {
            TerrainLabel::Flat | TerrainLabel::Slope => CellState::Free,
            TerrainLabel::SlopeEdge | TerrainLabel::Rise => CellState::Occupied,
            TerrainLabel::Unknown => CellState::Unknown,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            TerrainLabel::Unknown => "unknown",
            TerrainLabel::Flat => "flat",
            TerrainLabel::Slope => "slope",
            TerrainLabel::SlopeEdge => "slope_edge",
            TerrainLabel::Rise => "rise",
        }
    }
}

/// Fused 2D traversability: trinary state plus terrain label per cell.
#[derive(Debug, Clone, PartialEq)]
pub struct TraversableMap {
    labels: Grid2<TerrainLabel>,
}

#[derive(Debug, Serialize, Deserialize)]
struct Legend {
    origin: [f64; 2],
    resolution: f64,
    width: usize,
    height: usize,
    labels: Vec<LegendEntry>,
}

#[derive(Debug, Serialize, Deserialize)]
struct LegendEntry {
    code: u8,
    name: String,
    state: CellState,
}

impl TraversableMap {
    pub fn from_labels(labels: Grid2<TerrainLabel>) -> Self {
        Self { labels }
    }

    pub fn geometry(&self) -> &GridGeometry {
        &self.labels.geometry
    }

    pub fn labels(&self) -> &Grid2<TerrainLabel> {
        &self.labels
    }

    pub fn label(&self, idx: usize) -> TerrainLabel {
        self.labels.data[idx]
    }

    pub fn state(&self, idx: usize) -> CellState {
        self.labels.data[idx].state()
    }

    pub fn state_at(&self, x: f64, y: f64) -> CellState {
        self.labels.at(x, y).map_or(CellState::Unknown, |l| l.state())
    }

    pub fn label_at(&self, x: f64, y: f64) -> TerrainLabel {
        self.labels.at(x, y).copied().unwrap_or(TerrainLabel::Unknown)
    }

    pub fn states(&self) -> Grid2<CellState> {
        Grid2 { geometry: self.labels.geometry, data: self.labels.data.iter().map(|l| l.state()).collect() }
    }

    pub fn count(&self, label: TerrainLabel) -> usize {
        self.labels.data.iter().filter(|&&l| l == label).count()
    }

    /// Trinary PGM with the standard palette.
    pub fn to_pgm(&self) -> Vec<u8> {
        pgm::encode_states(&self.states())
    }

    /// Label codes as gray values.
    pub fn labels_to_pgm(&self) -> Vec<u8> {
        let gray: Vec<u8> = self.labels.data.iter().map(|l| l.code()).collect();
        pgm::encode(self.labels.width(), self.labels.height(), &gray)
    }

    /// JSON sidecar describing the label codes and grid placement.
    pub fn legend_json(&self) -> String {
        let g = self.geometry();
        let legend = Legend {
            origin: g.origin,
            resolution: g.resolution,
            width: g.width,
            height: g.height,
            labels: TerrainLabel::ALL
                .iter()
                .map(|l| LegendEntry { code: l.code(), name: l.name().to_string(), state: l.state() })
                .collect(),
        };
        serde_json::to_string_pretty(&legend).expect("legend serializes")
    }

    /// Writes `<stem>.pgm`, `<stem>_labels.pgm` and `<stem>.json` into `dir`.
    pub fn save(&self, dir: impl AsRef<Path>, stem: &str) -> Result<()> {
        let dir = dir.as_ref();
        pgm::write_file(dir.join(format!("{stem}.pgm")), &self.to_pgm())?;
        pgm::write_file(dir.join(format!("{stem}_labels.pgm")), &self.labels_to_pgm())?;
        std::fs::write(dir.join(format!("{stem}.json")), self.legend_json())?;
        Ok(())
    }

    /// Reads a map written by [`TraversableMap::save`].
    pub fn load(dir: impl AsRef<Path>, stem: &str) -> Result<Self> {
        let dir = dir.as_ref();
        let legend: Legend = serde_json::from_str(&std::fs::read_to_string(dir.join(format!("{stem}.json")))?)?;
        let (w, h, codes) = pgm::decode(&std::fs::read(dir.join(format!("{stem}_labels.pgm")))?)?;
        if w != legend.width || h != legend.height {
            return Err(NavError::format("traversable map", "label image does not match legend size"));
        }
        let data = codes
            .iter()
            .map(|&c| {
                TerrainLabel::from_code(c).ok_or_else(|| NavError::format("traversable map", format!("unknown label code {c}")))
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(Self::from_labels(Grid2 { geometry: GridGeometry::new(legend.origin, legend.resolution, w, h), data }))
    }
}

const LEVEL_UNKNOWN: i8 = i8::MIN;
const LEVEL_FLOOR: i8 = -1;
const NO_SOURCE: u32 = u32::MAX;

/// Surface level per cell: highest slab holding an occupied voxel, floor if
/// nothing is occupied and the lowest slab is observed free, else unknown.
/// Cells occupied in the cap slab sit one level above the stack.
fn surface_levels(stack: &LayerStack) -> Vec<i8> {
    let n = stack.geometry().len();
    let above = stack.len() as i8;
    (0..n)
        .map(|i| {
            if stack.cap().is_some_and(|c| c.state(i) == CellState::Occupied) {
                return above;
            }
            for (k, layer) in stack.layers().iter().enumerate().rev() {
                if layer.state(i) == CellState::Occupied {
                    return k as i8;
                }
            }
            if stack.layers()[0].state(i) == CellState::Free {
                LEVEL_FLOOR
            } else {
                LEVEL_UNKNOWN
            }
        })
        .collect()
}

fn neighbours4(g: &GridGeometry, idx: usize) -> impl Iterator<Item = (usize, [i64; 2])> + '_ {
    let (x, y) = g.coords(idx);
    [[1i64, 0], [-1, 0], [0, 1], [0, -1]].into_iter().filter_map(move |d| {
        let (nx, ny) = (x as i64 + d[0], y as i64 + d[1]);
        g.in_grid(nx, ny).then(|| (g.index(nx as usize, ny as usize), d))
    })
}

struct Source {
    ascent: [f64; 2],
    reach: u32,
}

/// Multi-source BFS within each band. A cell takes the label and ascent of
/// the first source to reach it; on ties a rise wins and the ascent comes
/// from the earliest source. Each source reaches at most its own run.
fn spread(
    g: &GridGeometry,
    level: &[i8],
    sources: &[Source],
    mut frontier: Vec<usize>,
    labels: &mut [TerrainLabel],
    owner: &mut [u32],
) {
    let mut dist = vec![u32::MAX; labels.len()];
    for &i in &frontier {
        dist[i] = 0;
    }
    let mut step = 0u32;
    while !frontier.is_empty() {
        step += 1;
        let mut next = Vec::new();
        for &i in &frontier {
            let src = owner[i];
            if step > sources[src as usize].reach {
                continue;
            }
            for (j, _) in neighbours4(g, i) {
                if level[j] != level[i] {
                    continue;
                }
                if dist[j] == u32::MAX && labels[j] == TerrainLabel::Unknown {
                    dist[j] = step;
                    owner[j] = src;
                    labels[j] = labels[i];
                    next.push(j);
                } else if dist[j] == step {
                    if labels[i] == TerrainLabel::Rise {
                        labels[j] = TerrainLabel::Rise;
                    }
                    owner[j] = owner[j].min(src);
                }
            }
        }
        frontier = next;
    }
}

/// Builds the fused traversable map from a layer stack.
pub fn build_traversable(stack: &LayerStack, params: &GradientParams) -> Result<TraversableMap> {
    params.validate()?;
    if stack.len() < 2 {
        return Err(NavError::TooFewLayers(stack.len()));
    }
    let g = *stack.geometry();
    if g.is_empty() {
        return Err(NavError::param("layers", "stack has no cells"));
    }
    let top = (stack.len() - 1) as i8;
    let d = stack.spacing();
    let level = surface_levels(stack);
    let n = g.len();

    // distance to the nearest strictly higher cell, one field per level below the top
    let higher: Vec<_> = (0..top).map(|k| distance_transform(g, |i| level[i] != LEVEL_UNKNOWN && level[i] > k)).collect();

    let mut labels = vec![TerrainLabel::Unknown; n];
    let mut owner = vec![NO_SOURCE; n];
    let mut sources: Vec<Source> = Vec::new();

    // lower-boundary cells: direct rises and measured gradients
    for i in 0..n {
        let k = level[i];
        if k < 0 {
            continue;
        }
        if k > top {
            labels[i] = TerrainLabel::Rise;
            continue;
        }
        let mut lowest = k;
        let mut away = [0.0f64; 2];
        for (j, dxy) in neighbours4(&g, i) {
            let kn = level[j];
            if kn != LEVEL_UNKNOWN && kn < k {
                lowest = lowest.min(kn);
                away[0] -= dxy[0] as f64;
                away[1] -= dxy[1] as f64;
            }
        }
        if lowest == k {
            continue;
        }
        if k - lowest >= 2 {
            labels[i] = TerrainLabel::Rise;
            continue;
        }
        if k == top {
            continue;
        }
        let field = &higher[k as usize];
        let Some(site) = field.nearest_site(i) else { continue };
        let (cx, cy) = g.coords(i);
        let (sx, sy) = g.coords(site);
        let u = [sx as f64 - cx as f64, sy as f64 - cy as f64];
        let v = field.cells(i);
        let norm = (away[0] * away[0] + away[1] * away[1]).sqrt();
        if norm == 0.0 || (u[0] * away[0] + u[1] * away[1]) / norm < v * COS_45 - 1e-9 {
            continue;
        }
        let mut inside = true;
        supercover([0.0, 0.0], 1.0, [cx as f64 + 0.5, cy as f64 + 0.5], [sx as f64 + 0.5, sy as f64 + 0.5], |c| {
            if !g.in_grid(c[0], c[1]) {
                inside = false;
                return false;
            }
            let lv = level[g.index(c[0] as usize, c[1] as usize)];
            if lv != LEVEL_UNKNOWN && lv > k {
                return false;
            }
            if lv != k {
                inside = false;
                return false;
            }
            true
        });
        if !inside {
            continue;
        }
        let alpha = layer_gradient(d, g.resolution, v)?;
        let label = if classify_gradient(alpha, params.theta) { TerrainLabel::Slope } else { TerrainLabel::Rise };
        labels[i] = label;
        owner[i] = sources.len() as u32;
        sources.push(Source { ascent: [u[0] / v, u[1] / v], reach: (v * std::f64::consts::SQRT_2).ceil() as u32 + 1 });
    }

    // spread measured labels through their band, limited to the measured run
    let seeds: Vec<usize> = (0..n).filter(|&i| owner[i] != NO_SOURCE).collect();
    spread(&g, &level, &sources, seeds, &mut labels, &mut owner);

    // a plateau entered along a slope continues that slope
    let aligned_slope = |labels: &[TerrainLabel], owner: &[u32], j: usize, dxy: [i64; 2]| {
        labels[j] == TerrainLabel::Slope && owner[j] != NO_SOURCE && {
            // dxy points down the step, the ascent points up it
            let a = sources[owner[j] as usize].ascent;
            -(a[0] * dxy[0] as f64 + a[1] * dxy[1] as f64) >= COS_45 - 1e-9
        }
    };
    let mut entries = Vec::new();
    for i in 0..n {
        let k = level[i];
        if k < 0 || labels[i] != TerrainLabel::Unknown {
            continue;
        }
        let mut via = NO_SOURCE;
        let mut all_aligned = true;
        for (j, dxy) in neighbours4(&g, i) {
            let kn = level[j];
            if kn == LEVEL_UNKNOWN || kn >= k {
                continue;
            }
            if aligned_slope(&labels, &owner, j, dxy) {
                via = via.min(owner[j]);
            } else {
                all_aligned = false;
            }
        }
        if all_aligned && via != NO_SOURCE {
            entries.push((i, via));
        }
    }
    for &(i, via) in &entries {
        labels[i] = TerrainLabel::Slope;
        owner[i] = via;
    }
    spread(&g, &level, &sources, entries.iter().map(|e| e.0).collect(), &mut labels, &mut owner);

    // plateaus and floor
    let mut entry_labels = Vec::new();
    for i in 0..n {
        let k = level[i];
        if k == LEVEL_UNKNOWN || labels[i] != TerrainLabel::Unknown {
            continue;
        }
        if k == LEVEL_FLOOR {
            labels[i] = TerrainLabel::Flat;
            continue;
        }
        let mut verdict = TerrainLabel::Flat;
        for (j, dxy) in neighbours4(&g, i) {
            let kn = level[j];
            if kn == LEVEL_UNKNOWN || kn >= k {
                continue;
            }
            let lower = labels[j];
            if aligned_slope(&labels, &owner, j, dxy) {
                continue;
            }
            if lower == TerrainLabel::Slope {
                if verdict == TerrainLabel::Flat {
                    verdict = TerrainLabel::SlopeEdge;
                }
            } else {
                verdict = TerrainLabel::Rise;
            }
        }
        entry_labels.push((i, verdict));
    }
    for (i, l) in entry_labels {
        labels[i] = l;
    }

    // lateral slope edges
    let mut edges = Vec::new();
    for i in 0..n {
        if labels[i] != TerrainLabel::Slope {
            continue;
        }
        let a = sources[owner[i] as usize].ascent;
        let lateral = neighbours4(&g, i)
            .any(|(j, dxy)| level[j] != level[i] && (a[0] * dxy[0] as f64 + a[1] * dxy[1] as f64).abs() < COS_45);
        // a slope cell on the map border has an unobservable side
        let (x, y) = g.coords(i);
        let on_border = x == 0 || y == 0 || x + 1 == g.width || y + 1 == g.height;
        if lateral || on_border {
            edges.push(i);
        }
    }
    let reach = params.edge_width as i64 - 1;
    for &i in &edges {
        labels[i] = TerrainLabel::SlopeEdge;
    }
    if reach > 0 {
        for &i in &edges {
            let (x, y) = g.coords(i);
            for dy in -reach..=reach {
                for dx in -reach..=reach {
                    let (nx, ny) = (x as i64 + dx, y as i64 + dy);
                    if g.in_grid(nx, ny) {
                        let j = g.index(nx as usize, ny as usize);
                        if labels[j] == TerrainLabel::Slope {
                            labels[j] = TerrainLabel::SlopeEdge;
                        }
                    }
                }
            }
        }
    }

    Ok(TraversableMap::from_labels(Grid2 { geometry: g, data: labels }))
}

/// Reference classification computed directly from the analytic surface,
/// used to cross-check [`build_traversable`].
///
/// Heights are sampled at cell centers. A cell standing at least `spacing`
/// above a 4-neighbour, or above `top`, is a rise (a slope edge when the
/// drop is lateral to a sloped surface); otherwise the local surface
/// gradient, from central differences a few tenths of a millimeter around
/// the center, is classified with `theta`.
pub fn heightmap_reference(
    env: &EnvironmentSpec,
    geometry: GridGeometry,
    params: &GradientParams,
    spacing: f64,
    top: f64,
) -> TraversableMap {
    const PROBE: f64 = 1e-4;
    let g = geometry;
    let heights: Vec<Option<f64>> = (0..g.len())
        .map(|i| {
            let c = g.center_of_index(i);
            env.surface_height(c[0], c[1]).ok()
        })
        .collect();
    let tol = 1e-9;
    let mut labels = vec![TerrainLabel::Unknown; g.len()];
    for i in 0..g.len() {
        let Some(h) = heights[i] else { continue };
        if h > top + tol {
            labels[i] = TerrainLabel::Rise;
            continue;
        }
        let (x, y) = g.coords(i);
        let c = g.center_of_index(i);
        let probe = |px: f64, py: f64| env.surface_height(px, py).unwrap_or(h);
        let grad = [
            (probe(c[0] + PROBE, c[1]) - probe(c[0] - PROBE, c[1])) / (2.0 * PROBE),
            (probe(c[0], c[1] + PROBE) - probe(c[0], c[1] - PROBE)) / (2.0 * PROBE),
        ];
        let slope = grad[0].hypot(grad[1]);

        let mut drops = Vec::new();
        for d in [[1i64, 0], [-1, 0], [0, 1], [0, -1]] {
            let (nx, ny) = (x as i64 + d[0], y as i64 + d[1]);
            if g.in_grid(nx, ny) {
                if let Some(hn) = heights[g.index(nx as usize, ny as usize)] {
                    if h - hn >= spacing - tol {
                        drops.push(d);
                    }
                }
            }
        }
        let alpha = slope.atan();
        let sloped = slope > 1e-9 && classify_gradient(alpha, params.theta);
        labels[i] = if !drops.is_empty() {
            let lateral =
                sloped && drops.iter().all(|d| ((d[0] as f64 * grad[0] + d[1] as f64 * grad[1]) / slope).abs() < COS_45);
            if lateral {
                TerrainLabel::SlopeEdge
            } else {
                TerrainLabel::Rise
            }
        } else if slope <= 1e-9 {
            TerrainLabel::Flat
        } else if sloped {
            TerrainLabel::Slope
        } else {
            TerrainLabel::Rise
        };
    }
    TraversableMap::from_labels(Grid2 { geometry: g, data: labels })
}

/// Cell-level comparison between a layered map and the reference.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Agreement {
    /// Cells known in both maps.
    pub observed: usize,
    /// Observed cells with the same trinary state.
    pub agreeing: usize,
    /// Reference occupied but layered free.
    pub unsafe_cells: usize,
    /// Unsafe cells with no layered occupied cell within one cell.
    pub unsafe_isolated: usize,
}

impl Agreement {
    pub fn ratio(&self) -> f64 {
        if self.observed == 0 {
            1.0
        } else {
            self.agreeing as f64 / self.observed as f64
        }
    }
}

pub fn compare_maps(layered: &TraversableMap, reference: &TraversableMap) -> Result<Agreement> {
    let g = *layered.geometry();
    if g != *reference.geometry() {
        return Err(NavError::param("reference", "maps must share one grid"));
    }
    let mut a = Agreement { observed: 0, agreeing: 0, unsafe_cells: 0, unsafe_isolated: 0 };
    for i in 0..g.len() {
        let (s, t) = (layered.state(i), reference.state(i));
        if s == CellState::Unknown || t == CellState::Unknown {
            continue;
        }
        a.observed += 1;
        if s == t {
            a.agreeing += 1;
            continue;
        }
        if t == CellState::Occupied && s == CellState::Free {
            a.unsafe_cells += 1;
            let (x, y) = g.coords(i);
            let guarded = (-1..=1).any(|dy| {
                (-1..=1).any(|dx| {
                    let (nx, ny) = (x as i64 + dx, y as i64 + dy);
                    g.in_grid(nx, ny) && layered.state(g.index(nx as usize, ny as usize)) == CellState::Occupied
                })
            });
            if !guarded {
                a.unsafe_isolated += 1;
            }
        }
    }
    Ok(a)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn stack_from_levels(levels: &[&str]) -> LayerStack {
        // rows listed top (highest y) first; chars: '.' floor, '0'..'3' level, '?' unknown
        let h = levels.len();
        let w = levels[0].len();
        let g = GridGeometry::new([0.0, 0.0], 0.05, w, h);
        let mut layers: Vec<LayerGrid> = (0..4)
            .map(|k| LayerGrid { grid: Grid2::filled(g, CellState::Unknown), z0: 0.05 + 0.25 * k as f64, thickness: 0.25 })
            .collect();
        for (row, line) in levels.iter().enumerate() {
            let y = h - 1 - row;
            for (x, ch) in line.chars().enumerate() {
                let i = g.index(x, y);
                match ch {
                    '.' => layers.iter_mut().for_each(|l| l.grid.data[i] = CellState::Free),
                    '?' => {}
                    c => {
                        let lv = c.to_digit(10).unwrap() as usize;
                        layers[lv].grid.data[i] = CellState::Occupied;
                        for l in layers.iter_mut().skip(lv + 1) {
                            l.grid.data[i] = CellState::Free;
                        }
                    }
                }
            }
        }
        LayerStack::new(layers).unwrap()
    }

    fn params() -> GradientParams {
        GradientParams::new(20f64.to_radians(), 0.05, 1).unwrap()
    }

    #[test]
    fn gradient_examples() {
        let a = layer_gradient(0.25, 0.05, 20.0).unwrap();
        assert!((a - 0.25f64.atan()).abs() < 1e-15);
        assert!((a.to_degrees() - 14.036).abs() < 1e-3);
        assert!((layer_gradient(0.25, 0.05, 1.0).unwrap() - 5f64.atan()).abs() < 1e-15);
        assert!(layer_gradient(0.25, 0.05, 1e6).unwrap() < 1e-5);
        assert_eq!(layer_gradient(0.25, 0.05, 0.0).unwrap(), FRAC_PI_2);
        assert!(layer_gradient(0.25, 0.05, -1.0).is_err());
        assert!(layer_gradient(0.0, 0.05, 1.0).is_err());
        let theta = 20f64.to_radians();
        assert!(classify_gradient(a, theta));
        assert!(!classify_gradient(theta, theta));
        assert!(!classify_gradient(5f64.atan(), theta));
    }

    #[test]
    fn too_few_layers() {
        let g = GridGeometry::new([0.0; 2], 0.05, 2, 2);
        let one = vec![LayerGrid { grid: Grid2::filled(g, CellState::Free), z0: 0.05, thickness: 0.25 }];
        assert!(matches!(LayerStack::new(one), Err(NavError::TooFewLayers(1))));
        assert!(matches!(LayerStack::new(vec![]), Err(NavError::TooFewLayers(0))));
    }

    #[test]
    fn flat_floor_is_all_flat() {
        let stack = stack_from_levels(&["......", "......", "..??.."]);
        let m = build_traversable(&stack, &params()).unwrap();
        assert_eq!(m.count(TerrainLabel::Flat), 16);
        assert_eq!(m.count(TerrainLabel::Unknown), 2);
        assert_eq!(m.count(TerrainLabel::Slope) + m.count(TerrainLabel::Rise), 0);
    }

    #[test]
    fn wall_is_rise() {
        let stack = stack_from_levels(&["..3..", "..3..", "..3.."]);
        let m = build_traversable(&stack, &params()).unwrap();
        for y in 0..3 {
            assert_eq!(m.label(m.geometry().index(2, y)), TerrainLabel::Rise);
            assert_eq!(m.label(m.geometry().index(0, y)), TerrainLabel::Flat);
        }
    }

    #[test]
    fn long_runs_are_slopes_short_runs_rises() {
        // gentle: each level spans 20 rows; steep: 3 rows
        let gentle: Vec<String> = (0..60)
            .rev()
            .map(|row| {
                let c = match row {
                    0..=4 => '.',
                    5..=24 => '0',
                    25..=44 => '1',
                    _ => '2',
                };
                format!(".{}.", c.to_string().repeat(8))
            })
            .collect();
        let refs: Vec<&str> = gentle.iter().map(|s| s.as_str()).collect();
        let m = build_traversable(&stack_from_levels(&refs), &params()).unwrap();
        let g = *m.geometry();
        assert_eq!(m.label(g.index(4, 5)), TerrainLabel::Slope);
        assert_eq!(m.label(g.index(4, 30)), TerrainLabel::Slope);
        assert_eq!(m.label(g.index(1, 10)), TerrainLabel::SlopeEdge);
        assert_eq!(m.label(g.index(8, 10)), TerrainLabel::SlopeEdge);

        let steep: Vec<String> = (0..14)
            .rev()
            .map(|row| {
                let c = match row {
                    0..=1 => '.',
                    2..=4 => '0',
                    5..=7 => '1',
                    _ => '2',
                };
                c.to_string().repeat(6)
            })
            .collect();
        let refs: Vec<&str> = steep.iter().map(|s| s.as_str()).collect();
        let m = build_traversable(&stack_from_levels(&refs), &params()).unwrap();
        let g = *m.geometry();
        for y in 2..8 {
            assert_eq!(m.label(g.index(3, y)), TerrainLabel::Rise, "row {y}");
        }
        assert_eq!(m.label(g.index(3, 8)), TerrainLabel::Rise);
    }

    #[test]
    fn legend_and_roundtrip() {
        let stack = stack_from_levels(&["..3..", "..?.."]);
        let m = build_traversable(&stack, &params()).unwrap();
        let dir = tempfile::tempdir().unwrap();
        m.save(dir.path(), "trav").unwrap();
        let back = TraversableMap::load(dir.path(), "trav").unwrap();
        assert_eq!(back, m);
        assert!(m.legend_json().contains("slope_edge"));
    }
}
