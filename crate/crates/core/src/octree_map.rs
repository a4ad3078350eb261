//! Probabilistic 3D occupancy octree with log-odds leaves, ray carving of
//! free space, slab projection to 2D layer maps and a binary file format.
//!
//! Binary layout (little endian):
//!
//! ```text
//! magic   [u8; 4] = "UNOT"
//! version u32     = 1
//! resolution f64
//! bounds  min [f64; 3], max [f64; 3]
//! model   p_hit, p_miss, p_min, p_max, p_occ : f64
//! depth   u8
//! nodes   preorder stream from the root:
//!           inner node: u8 child mask, then each present child in order 0..8
//!           leaf:       f64 log-odds
//! ```
//!
//! Child `i` of a node covers the octant with x offset `i & 1`, y offset
//! `(i >> 1) & 1` and z offset `(i >> 2) & 1`.

use std::io::{Read, Write};

use serde::{Deserialize, Serialize};

use crate::env_model::Aabb;
use crate::error::{NavError, Result};
use crate::grid::{cells_for, supercover, CellState, Grid2, GridGeometry};

const MAGIC: &[u8; 4] = b"UNOT";
const VERSION: u32 = 1;
const ABSENT: u32 = 0;
/// Maps with at most this many voxels deduplicate scans through a dense
/// stamp array.
const DENSE_SCRATCH_LIMIT: usize = 1 << 26;

/// Inverse sensor model and decision threshold.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SensorModel {
    pub p_hit: f64,
    pub p_miss: f64,
    /// Clamping bounds on the stored probability.
    pub p_min: f64,
    pub p_max: f64,
    /// Voxels with `p >= p_occ` are occupied.
    pub p_occ: f64,
}

impl Default for SensorModel {
    fn default() -> Self {
        Self { p_hit: 0.7, p_miss: 0.4, p_min: 0.12, p_max: 0.97, p_occ: 0.7 }
    }
}

impl SensorModel {
    pub fn validate(&self) -> Result<()> {
        let open = |v: f64| v > 0.0 && v < 1.0;
        for (name, v) in
            [("p_hit", self.p_hit), ("p_miss", self.p_miss), ("p_min", self.p_min), ("p_max", self.p_max), ("p_occ", self.p_occ)]
        {
            if !open(v) {
                return Err(NavError::param(format!("octree.{name}"), "must lie in (0, 1)"));
            }
        }
        if !(self.p_hit > 0.5) {
            return Err(NavError::param("octree.p_hit", "must exceed 0.5"));
        }
        if !(self.p_miss < 0.5) {
            return Err(NavError::param("octree.p_miss", "must be below 0.5"));
        }
        if !(self.p_min < self.p_max) {
            return Err(NavError::param("octree.p_min", "must be below p_max"));
        }
        Ok(())
    }
}

pub fn logit(p: f64) -> f64 {
    (p / (1.0 - p)).ln()
}

pub fn logistic(l: f64) -> f64 {
    1.0 / (1.0 + (-l).exp())
}

/// Trinary query result.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum VoxelState {
    Occupied(f64),
    Free(f64),
    Unknown,
}

impl VoxelState {
    pub fn cell_state(self) -> CellState {
        match self {
            VoxelState::Occupied(_) => CellState::Occupied,
            VoxelState::Free(_) => CellState::Free,
            VoxelState::Unknown => CellState::Unknown,
        }
    }
}

/// Integer voxel coordinates relative to the map's lower corner.
pub type VoxelKey = [u32; 3];

fn pack(k: VoxelKey) -> u64 {
    k[0] as u64 | (k[1] as u64) << 21 | (k[2] as u64) << 42
}

fn unpack(v: u64) -> VoxelKey {
    const M: u64 = (1 << 21) - 1;
    [(v & M) as u32, (v >> 21 & M) as u32, (v >> 42 & M) as u32]
}

/// Octree-backed occupancy map. Leaves exist only for observed voxels.
#[derive(Debug, Clone)]
pub struct OccupancyOctree {
    resolution: f64,
    bounds: Aabb,
    model: SensorModel,
    dims: [u32; 3],
    depth: u8,
    l_hit: f64,
    l_miss: f64,
    l_min: f64,
    l_max: f64,
    /// Inner nodes; entry 0 is the root. At the last inner level children
    /// are `leaf index + 1`, otherwise `inner index`; 0 means absent.
    inner: Vec<[u32; 8]>,
    leaves: Vec<f64>,
    scratch: Scratch,
}

/// Reusable per-scan bookkeeping; not part of the map state.
#[derive(Debug, Clone, Default)]
struct Scratch {
    stamp: Vec<u32>,
    epoch: u32,
}

impl OccupancyOctree {
    pub fn new(bounds: Aabb, resolution: f64, model: SensorModel) -> Result<Self> {
        if !(resolution > 0.0) {
            return Err(NavError::param("octree.resolution", "must be positive"));
        }
        model.validate()?;
        let mut dims = [0u32; 3];
        for (i, dim) in dims.iter_mut().enumerate() {
            let extent = bounds.max[i] - bounds.min[i];
            if !(extent > 0.0) {
                return Err(NavError::param("octree.bounds", "must have positive extent"));
            }
            let n = cells_for(extent, resolution);
            if n >= 1 << 21 {
                return Err(NavError::param("octree.resolution", "too fine for the bounds"));
            }
            *dim = n as u32;
        }
        let max_dim = *dims.iter().max().unwrap();
        let depth = (32 - (max_dim.max(2) - 1).leading_zeros()) as u8;
        Ok(Self {
            resolution,
            bounds,
            model,
            dims,
            depth,
            l_hit: logit(model.p_hit),
            l_miss: logit(model.p_miss),
            l_min: logit(model.p_min),
            l_max: logit(model.p_max),
            inner: vec![[ABSENT; 8]],
            leaves: Vec::new(),
            scratch: Scratch::default(),
        })
    }

    pub fn resolution(&self) -> f64 {
        self.resolution
    }

    pub fn bounds(&self) -> &Aabb {
        &self.bounds
    }

    pub fn model(&self) -> &SensorModel {
        &self.model
    }

    pub fn depth(&self) -> u8 {
        self.depth
    }

    pub fn dims(&self) -> [u32; 3] {
        self.dims
    }

    pub fn leaf_count(&self) -> usize {
        self.leaves.len()
    }

    pub fn clamp_bounds(&self) -> (f64, f64) {
        (self.l_min, self.l_max)
    }

    pub fn key_of(&self, p: [f64; 3]) -> Option<VoxelKey> {
        if !self.bounds.contains(p) {
            return None;
        }
        let mut k = [0u32; 3];
        for i in 0..3 {
            let c = ((p[i] - self.bounds.min[i]) / self.resolution).floor() as i64;
            k[i] = c.clamp(0, self.dims[i] as i64 - 1) as u32;
        }
        Some(k)
    }

    pub fn voxel_center(&self, k: VoxelKey) -> [f64; 3] {
        let mut c = [0.0; 3];
        for i in 0..3 {
            c[i] = self.bounds.min[i] + (k[i] as f64 + 0.5) * self.resolution;
        }
        c
    }

    fn child_slot(&self, k: VoxelKey, level: u8) -> usize {
        let shift = self.depth - 1 - level;
        ((k[0] >> shift & 1) | (k[1] >> shift & 1) << 1 | (k[2] >> shift & 1) << 2) as usize
    }

    /// Stored log-odds of a voxel, `None` when never observed.
    pub fn log_odds(&self, k: VoxelKey) -> Option<f64> {
        let mut node = 0usize;
        for level in 0..self.depth {
            let c = self.inner[node][self.child_slot(k, level)];
            if c == ABSENT {
                return None;
            }
            if level + 1 == self.depth {
                return Some(self.leaves[c as usize - 1]);
            }
            node = c as usize;
        }
        None
    }

    fn leaf_entry(&mut self, k: VoxelKey) -> &mut f64 {
        let mut node = 0usize;
        for level in 0..self.depth {
            let slot = self.child_slot(k, level);
            let c = self.inner[node][slot];
            if level + 1 == self.depth {
                let idx = if c == ABSENT {
                    self.leaves.push(0.0);
                    let i = self.leaves.len() as u32;
                    self.inner[node][slot] = i;
                    i
                } else {
                    c
                };
                return &mut self.leaves[idx as usize - 1];
            }
            node = if c == ABSENT {
                self.inner.push([ABSENT; 8]);
                let i = (self.inner.len() - 1) as u32;
                self.inner[node][slot] = i;
                i as usize
            } else {
                c as usize
            };
        }
        unreachable!("depth is at least 1")
    }

    fn update(&mut self, k: VoxelKey, delta: f64) {
        let (lo, hi) = (self.l_min, self.l_max);
        let l = self.leaf_entry(k);
        *l = (*l + delta).clamp(lo, hi);
    }

    /// Applies one hit update to a voxel.
    pub fn update_hit(&mut self, k: VoxelKey) {
        self.update(k, self.l_hit);
    }

    /// Applies one miss update to a voxel.
    pub fn update_miss(&mut self, k: VoxelKey) {
        self.update(k, self.l_miss);
    }

    fn state_of(&self, l: f64) -> VoxelState {
        let p = logistic(l);
        if p >= self.model.p_occ {
            VoxelState::Occupied(p)
        } else {
            VoxelState::Free(p)
        }
    }

    pub fn query(&self, p: [f64; 3]) -> Result<VoxelState> {
        let k = self.key_of(p).ok_or(NavError::OutOfBounds { x: p[0], y: p[1], z: p[2] })?;
        Ok(self.query_key(k))
    }

    pub fn query_key(&self, k: VoxelKey) -> VoxelState {
        self.log_odds(k).map_or(VoxelState::Unknown, |l| self.state_of(l))
    }

    /// Clips the segment `a -> b` to the map bounds, returning the exit
    /// point when `b` lies outside.
    fn clip_to_bounds(&self, a: [f64; 3], b: [f64; 3]) -> [f64; 3] {
        let mut t1 = 1.0f64;
        for i in 0..3 {
            let d = b[i] - a[i];
            if d > 0.0 {
                t1 = t1.min((self.bounds.max[i] - a[i]) / d);
            } else if d < 0.0 {
                t1 = t1.min((self.bounds.min[i] - a[i]) / d);
            }
        }
        let t1 = t1.max(0.0);
        [a[0] + t1 * (b[0] - a[0]), a[1] + t1 * (b[1] - a[1]), a[2] + t1 * (b[2] - a[2])]
    }

    /// Keys carved as free by the ray `origin -> end`, and the hit key when
    /// `end` is inside the map.
    fn ray_keys(&self, origin: [f64; 3], end: [f64; 3], misses: &mut Vec<u64>) -> Option<u64> {
        let hit = self.key_of(end);
        let stop = if hit.is_some() { end } else { self.clip_to_bounds(origin, end) };
        let hit_packed = hit.map(pack);
        let dims = self.dims;
        supercover(self.bounds.min, self.resolution, origin, stop, |c| {
            if (0..3).all(|i| c[i] >= 0 && c[i] < dims[i] as i64) {
                let p = pack([c[0] as u32, c[1] as u32, c[2] as u32]);
                if Some(p) != hit_packed {
                    misses.push(p);
                }
            }
            true
        });
        hit_packed
    }

    /// Integrates one point cloud observed from `origin`. Every endpoint
    /// voxel receives a hit, every voxel crossed before it a miss; within one
    /// scan a voxel is updated at most once and a hit wins over a miss.
    /// Returns the number of voxels touched.
    pub fn integrate_scan(&mut self, origin: [f64; 3], cloud: &[[f64; 3]]) -> Result<usize> {
        if self.key_of(origin).is_none() {
            return Err(NavError::OutOfBounds { x: origin[0], y: origin[1], z: origin[2] });
        }
        if cloud.is_empty() {
            return Ok(0);
        }
        let dense = self.dims.iter().map(|&d| d as usize).product::<usize>();
        if dense <= DENSE_SCRATCH_LIMIT {
            return Ok(self.integrate_dense(origin, cloud, dense));
        }
        let mut hits = Vec::with_capacity(cloud.len());
        let mut misses = Vec::new();
        for &p in cloud {
            if let Some(h) = self.ray_keys(origin, p, &mut misses) {
                hits.push(h);
            }
        }
        hits.sort_unstable();
        hits.dedup();
        misses.sort_unstable();
        misses.dedup();
        misses.retain(|m| hits.binary_search(m).is_err());
        for &h in &hits {
            self.update_hit(unpack(h));
        }
        for &m in &misses {
            self.update_miss(unpack(m));
        }
        Ok(hits.len() + misses.len())
    }

    /// Same update as the sort-based path, deduplicating through a dense
    /// per-voxel stamp array instead.
    fn integrate_dense(&mut self, origin: [f64; 3], cloud: &[[f64; 3]], dense: usize) -> usize {
        let mut scratch = std::mem::take(&mut self.scratch);
        if scratch.stamp.len() != dense {
            scratch.stamp = vec![0; dense];
            scratch.epoch = 0;
        }
        if scratch.epoch >= u32::MAX - 2 {
            scratch.stamp.iter_mut().for_each(|s| *s = 0);
            scratch.epoch = 0;
        }
        let hit_mark = scratch.epoch + 1;
        let miss_mark = scratch.epoch + 2;
        scratch.epoch += 2;
        let [dx, dy, dz] = self.dims.map(|d| d as i64);
        let linear = |c: [i64; 3]| (c[0] + dx * (c[1] + dy * c[2])) as usize;

        let mut hits = Vec::with_capacity(cloud.len());
        let mut ends = Vec::with_capacity(cloud.len());
        for &p in cloud {
            match self.key_of(p) {
                Some(k) => {
                    let idx = linear([k[0] as i64, k[1] as i64, k[2] as i64]);
                    if scratch.stamp[idx] != hit_mark {
                        scratch.stamp[idx] = hit_mark;
                        hits.push(k);
                    }
                    ends.push(p);
                }
                None => ends.push(self.clip_to_bounds(origin, p)),
            }
        }
        let mut misses = Vec::new();
        for &end in &ends {
            supercover(self.bounds.min, self.resolution, origin, end, |c| {
                if c[0] >= 0 && c[1] >= 0 && c[2] >= 0 && c[0] < dx && c[1] < dy && c[2] < dz {
                    let idx = linear(c);
                    let s = &mut scratch.stamp[idx];
                    if *s != hit_mark && *s != miss_mark {
                        *s = miss_mark;
                        misses.push([c[0] as u32, c[1] as u32, c[2] as u32]);
                    }
                }
                true
            });
        }
        for &k in &hits {
            self.update_hit(k);
        }
        for &k in &misses {
            self.update_miss(k);
        }
        self.scratch = scratch;
        hits.len() + misses.len()
    }

    /// Visits every stored leaf with its key and log-odds.
    pub fn for_each_leaf(&self, mut f: impl FnMut(VoxelKey, f64)) {
        self.walk(0, 0, [0; 3], &mut f);
    }

    fn walk(&self, node: usize, level: u8, base: VoxelKey, f: &mut impl FnMut(VoxelKey, f64)) {
        let shift = self.depth - 1 - level;
        for (slot, &c) in self.inner[node].iter().enumerate() {
            if c == ABSENT {
                continue;
            }
            let s = slot as u32;
            let key = [base[0] | (s & 1) << shift, base[1] | (s >> 1 & 1) << shift, base[2] | (s >> 2 & 1) << shift];
            if level + 1 == self.depth {
                f(key, self.leaves[c as usize - 1]);
            } else {
                self.walk(c as usize, level + 1, key, f);
            }
        }
    }

    /// Geometry shared by every projected layer.
    pub fn layer_geometry(&self) -> GridGeometry {
        GridGeometry::new([self.bounds.min[0], self.bounds.min[1]], self.resolution, self.dims[0] as usize, self.dims[1] as usize)
    }

    /// Projects the slab `[z0, z0 + d)` onto a 2D trinary grid: occupied if
    /// any voxel centered in the slab is occupied, else free if any is
    /// observed, else unknown.
    pub fn project_layer(&self, z0: f64, d: f64) -> Result<LayerGrid> {
        if !(d >= self.resolution - 1e-12) {
            return Err(NavError::param("layers.spacing", "slab thickness must be at least the resolution"));
        }
        if z0 < self.bounds.min[2] - 1e-9 || z0 + d > self.bounds.max[2] + 1e-9 {
            return Err(NavError::param("layers.z_base", "slab must lie within the map height"));
        }
        let geometry = self.layer_geometry();
        let mut grid = Grid2::filled(geometry, CellState::Unknown);
        self.for_each_leaf(|k, l| {
            let zc = self.bounds.min[2] + (k[2] as f64 + 0.5) * self.resolution;
            if zc < z0 || zc >= z0 + d {
                return;
            }
            let cell = &mut grid.data[geometry.index(k[0] as usize, k[1] as usize)];
            match self.state_of(l) {
                VoxelState::Occupied(_) => *cell = CellState::Occupied,
                _ if *cell == CellState::Unknown => *cell = CellState::Free,
                _ => {}
            }
        });
        Ok(LayerGrid { grid, z0, thickness: d })
    }

    pub fn write_to(&self, mut w: impl Write) -> Result<()> {
        w.write_all(MAGIC)?;
        w.write_all(&VERSION.to_le_bytes())?;
        w.write_all(&self.resolution.to_le_bytes())?;
        for v in self.bounds.min.iter().chain(self.bounds.max.iter()) {
            w.write_all(&v.to_le_bytes())?;
        }
        let m = &self.model;
        for v in [m.p_hit, m.p_miss, m.p_min, m.p_max, m.p_occ] {
            w.write_all(&v.to_le_bytes())?;
        }
        w.write_all(&[self.depth])?;
        let mut buf = Vec::with_capacity(self.inner.len() + self.leaves.len() * 9);
        self.write_node(0, 0, &mut buf);
        w.write_all(&buf)?;
        Ok(())
    }

    fn write_node(&self, node: usize, level: u8, out: &mut Vec<u8>) {
        let children = &self.inner[node];
        let mask = children.iter().enumerate().fold(0u8, |m, (i, &c)| if c != ABSENT { m | 1 << i } else { m });
        out.push(mask);
        for &c in children.iter().filter(|&&c| c != ABSENT) {
            if level + 1 == self.depth {
                out.extend_from_slice(&self.leaves[c as usize - 1].to_le_bytes());
            } else {
                self.write_node(c as usize, level + 1, out);
            }
        }
    }

    pub fn read_from(mut r: impl Read) -> Result<Self> {
        let mut bytes = Vec::new();
        r.read_to_end(&mut bytes)?;
        let mut cur = Cursor { bytes: &bytes, pos: 0 };
        if cur.take(4)? != MAGIC {
            return Err(NavError::format("octree", "bad magic"));
        }
        let version = u32::from_le_bytes(cur.take(4)?.try_into().unwrap());
        if version != VERSION {
            return Err(NavError::format("octree", format!("unsupported version {version}")));
        }
        let resolution = cur.f64()?;
        let mut min = [0.0; 3];
        let mut max = [0.0; 3];
        for v in min.iter_mut().chain(max.iter_mut()) {
            *v = cur.f64()?;
        }
        let model =
            SensorModel { p_hit: cur.f64()?, p_miss: cur.f64()?, p_min: cur.f64()?, p_max: cur.f64()?, p_occ: cur.f64()? };
        let depth = cur.take(1)?[0];
        let mut tree = Self::new(Aabb::new(min, max), resolution, model)?;
        if depth != tree.depth {
            return Err(NavError::format("octree", "depth does not match bounds and resolution"));
        }
        tree.read_node(0, 0, &mut cur)?;
        if cur.pos != bytes.len() {
            return Err(NavError::format("octree", "trailing bytes after node stream"));
        }
        Ok(tree)
    }

    fn read_node(&mut self, node: usize, level: u8, cur: &mut Cursor) -> Result<()> {
        let mask = cur.take(1)?[0];
        for slot in 0..8 {
            if mask & 1 << slot == 0 {
                continue;
            }
            if level + 1 == self.depth {
                let l = cur.f64()?;
                if !(l >= self.l_min - 1e-12 && l <= self.l_max + 1e-12) {
                    return Err(NavError::format("octree", "leaf log-odds outside clamping bounds"));
                }
                self.leaves.push(l);
                self.inner[node][slot] = self.leaves.len() as u32;
            } else {
                self.inner.push([ABSENT; 8]);
                let child = self.inner.len() - 1;
                self.inner[node][slot] = child as u32;
                self.read_node(child, level + 1, cur)?;
            }
        }
        Ok(())
    }

    pub fn save(&self, path: impl AsRef<std::path::Path>) -> Result<()> {
        let f = std::fs::File::create(path)?;
        self.write_to(std::io::BufWriter::new(f))
    }

    pub fn load(path: impl AsRef<std::path::Path>) -> Result<Self> {
        Self::read_from(std::io::BufReader::new(std::fs::File::open(path)?))
    }
}

struct Cursor<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Cursor<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self.pos + n;
        if end > self.bytes.len() {
            return Err(NavError::format("octree", "unexpected end of data"));
        }
        let s = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn f64(&mut self) -> Result<f64> {
        Ok(f64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }
}

/// One horizontal slab of the octree projected to 2D.
#[derive(Debug, Clone, PartialEq)]
pub struct LayerGrid {
    pub grid: Grid2<CellState>,
    pub z0: f64,
    pub thickness: f64,
}

impl LayerGrid {
    pub fn geometry(&self) -> &GridGeometry {
        &self.grid.geometry
    }

    pub fn state(&self, idx: usize) -> CellState {
        self.grid.data[idx]
    }
}
