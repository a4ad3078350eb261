//! Scripted mapping runs: drive a sweep through a world, simulate depth
//! scans along it and fuse them into an occupancy octree.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::env_model::{Aabb, DepthCamera, EnvironmentSpec, Pose, PoseNoise};
use crate::error::{NavError, Result};
use crate::octree_map::{OccupancyOctree, SensorModel};

/// Hits are pushed this far along the ray so the endpoint voxel is the one
/// behind the surface rather than the air cell in front of it.
const SURFACE_NUDGE: f64 = 1e-4;

/// Tele-operation replacement: waypoints `[x, y, yaw_deg]` densified at
/// `spacing`, with one scan per yaw offset at every pose.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepConfig {
    pub waypoints: Vec<[f64; 3]>,
    #[serde(default = "default_spacing")]
    pub spacing: f64,
    #[serde(default = "default_yaw_offsets")]
    pub yaw_offsets_deg: Vec<f64>,
    #[serde(default)]
    pub camera: DepthCamera,
    #[serde(default)]
    pub noise: PoseNoise,
}

fn default_spacing() -> f64 {
    0.5
}

fn default_yaw_offsets() -> Vec<f64> {
    vec![0.0]
}

/// Octree settings for a mapping run.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct OctreeConfig {
    pub resolution: f64,
    pub p_hit: f64,
    pub p_miss: f64,
    pub p_min: f64,
    pub p_max: f64,
    pub p_occ: f64,
}

impl Default for OctreeConfig {
    fn default() -> Self {
        let m = SensorModel::default();
        Self { resolution: 0.05, p_hit: m.p_hit, p_miss: m.p_miss, p_min: m.p_min, p_max: m.p_max, p_occ: m.p_occ }
    }
}

impl OctreeConfig {
    pub fn model(&self) -> SensorModel {
        SensorModel { p_hit: self.p_hit, p_miss: self.p_miss, p_min: self.p_min, p_max: self.p_max, p_occ: self.p_occ }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct MappingStats {
    pub poses: usize,
    pub scans: usize,
    pub points: usize,
    pub leaves: usize,
}

/// Map bounds: the world footprint, from just below the floor to the top.
/// The slack below z = 0 keeps floor hits inside the map.
pub fn map_bounds(env: &EnvironmentSpec, resolution: f64) -> Aabb {
    let b = env.bounds();
    Aabb::new([b.min[0], b.min[1], b.min[2].min(0.0) - 2.0 * resolution], b.max)
}

/// Densified sweep poses, including yaw offsets, in scan order.
pub fn sweep_poses(env: &EnvironmentSpec, sweep: &SweepConfig) -> Result<Vec<Pose>> {
    if sweep.waypoints.is_empty() {
        return Err(NavError::param("sweep.waypoints", "must not be empty"));
    }
    if sweep.yaw_offsets_deg.is_empty() {
        return Err(NavError::param("sweep.yaw_offsets_deg", "must not be empty"));
    }
    let wps: Vec<Pose> = sweep.waypoints.iter().map(|w| Pose::planar(w[0], w[1], w[2].to_radians())).collect();
    let path = env.sweep_trajectory(&wps, sweep.spacing)?;
    Ok(path
        .iter()
        .flat_map(|p| sweep.yaw_offsets_deg.iter().map(move |o| Pose::new(p.x, p.y, p.z, p.yaw + o.to_radians())))
        .collect())
}

/// Runs the sweep and returns the fused octree.
pub fn build_octree(
    env: &EnvironmentSpec,
    sweep: &SweepConfig,
    octree: &OctreeConfig,
    seed: u64,
) -> Result<(OccupancyOctree, MappingStats)> {
    sweep.camera.validate()?;
    let mut tree = OccupancyOctree::new(map_bounds(env, octree.resolution), octree.resolution, octree.model())?;
    let poses = sweep_poses(env, sweep)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut stats = MappingStats { poses: poses.len() / sweep.yaw_offsets_deg.len(), scans: 0, points: 0, leaves: 0 };
    for truth in &poses {
        // scans are taken at the true pose but registered at the believed one
        let believed = sweep.noise.perturb(truth, &mut rng);
        let (origin, cloud_world) = scan_at(env, truth, &sweep.camera);
        let (origin, cloud_world) =
            if sweep.noise.is_zero() { (origin, cloud_world) } else { reregister(truth, &believed, origin, cloud_world) };
        if tree.key_of(origin).is_none() {
            continue;
        }
        stats.points += cloud_world.len();
        tree.integrate_scan(origin, &cloud_world)?;
        stats.scans += 1;
    }
    stats.leaves = tree.leaf_count();
    Ok((tree, stats))
}

fn scan_at(env: &EnvironmentSpec, pose: &Pose, cam: &DepthCamera) -> ([f64; 3], Vec<[f64; 3]>) {
    let mut buf = Vec::with_capacity(cam.width * cam.height);
    let mut origin = [0.0; 3];
    for (o, d) in env.depth_rays(pose, cam) {
        origin = o;
        if let Some(hit) = env.cast_ray_unchecked(o, d, cam.max_range) {
            let p = hit.point;
            buf.push([p[0] + SURFACE_NUDGE * d[0], p[1] + SURFACE_NUDGE * d[1], p[2] + SURFACE_NUDGE * d[2]]);
        }
    }
    (origin, buf)
}

/// Moves a scan taken at `truth` rigidly (planar transform) to `believed`.
fn reregister(truth: &Pose, believed: &Pose, origin: [f64; 3], cloud: Vec<[f64; 3]>) -> ([f64; 3], Vec<[f64; 3]>) {
    let dyaw = believed.yaw - truth.yaw;
    let (s, c) = dyaw.sin_cos();
    let map = |p: [f64; 3]| {
        let (x, y) = (p[0] - truth.x, p[1] - truth.y);
        [believed.x + c * x - s * y, believed.y + s * x + c * y, p[2]]
    };
    (map(origin), cloud.into_iter().map(map).collect())
}
