//! Analytic 3D worlds built from boxes, ramps and staircases, with exact
//! surface-height queries, ray casting and simulated depth/laser sensing.

use std::f64::consts::PI;
use std::path::Path;

use nalgebra::{Rotation3, Vector3};
use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{NavError, Result};

const UNIT_TOL: f64 = 1e-9;

/// Axis-aligned box in meters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Aabb {
    pub min: [f64; 3],
    pub max: [f64; 3],
}

impl Aabb {
    pub fn new(min: [f64; 3], max: [f64; 3]) -> Self {
        Self { min, max }
    }

    pub fn contains(&self, p: [f64; 3]) -> bool {
        (0..3).all(|i| p[i] >= self.min[i] && p[i] <= self.max[i])
    }

    pub fn contains_xy(&self, x: f64, y: f64) -> bool {
        x >= self.min[0] && x <= self.max[0] && y >= self.min[1] && y <= self.max[1]
    }

    fn encloses(&self, other: &Aabb) -> bool {
        (0..3).all(|i| other.min[i] >= self.min[i] - UNIT_TOL && other.max[i] <= self.max[i] + UNIT_TOL)
    }

    fn is_valid(&self) -> bool {
        (0..3).all(|i| self.min[i] <= self.max[i] && self.min[i].is_finite() && self.max[i].is_finite())
    }
}

/// Horizontal direction in which a ramp or staircase climbs.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Axis {
    #[serde(rename = "+x")]
    PosX,
    #[serde(rename = "-x")]
    NegX,
    #[serde(rename = "+y")]
    PosY,
    #[serde(rename = "-y")]
    NegY,
}

impl Axis {
    pub fn unit(self) -> [f64; 2] {
        match self {
            Axis::PosX => [1.0, 0.0],
            Axis::NegX => [-1.0, 0.0],
            Axis::PosY => [0.0, 1.0],
            Axis::NegY => [0.0, -1.0],
        }
    }

    /// Distance along the ascent from the low edge of `[min, max]`, and the
    /// total run length.
    fn progress(self, min: [f64; 2], max: [f64; 2], x: f64, y: f64) -> (f64, f64) {
        match self {
            Axis::PosX => (x - min[0], max[0] - min[0]),
            Axis::NegX => (max[0] - x, max[0] - min[0]),
            Axis::PosY => (y - min[1], max[1] - min[1]),
            Axis::NegY => (max[1] - y, max[1] - min[1]),
        }
    }
}

/// Solid building blocks of a world. Every primitive rests on the floor.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case", deny_unknown_fields)]
pub enum Primitive {
    Box {
        min: [f64; 3],
        max: [f64; 3],
    },
    /// Wedge over a base rectangle whose top rises linearly from `low` to
    /// `high` along `axis`.
    Ramp {
        base_min: [f64; 2],
        base_max: [f64; 2],
        low: f64,
        high: f64,
        axis: Axis,
    },
    /// Steps of equal `rise` and `run`; tread `i` (1-based) tops out at
    /// `i * rise`. The last tread extends to the end of the base.
    Staircase {
        base_min: [f64; 2],
        base_max: [f64; 2],
        steps: u32,
        rise: f64,
        run: f64,
        axis: Axis,
    },
}

impl Primitive {
    fn footprint(&self) -> ([f64; 2], [f64; 2]) {
        match *self {
            Primitive::Box { min, max } => ([min[0], min[1]], [max[0], max[1]]),
            Primitive::Ramp { base_min, base_max, .. } | Primitive::Staircase { base_min, base_max, .. } => (base_min, base_max),
        }
    }

    fn bounding_box(&self) -> Aabb {
        let (lo, hi) = self.footprint();
        let top = match *self {
            Primitive::Box { max, .. } => max[2],
            Primitive::Ramp { low, high, .. } => low.max(high),
            Primitive::Staircase { steps, rise, .. } => steps as f64 * rise,
        };
        let bottom = match *self {
            Primitive::Box { min, .. } => min[2],
            _ => 0.0,
        };
        Aabb::new([lo[0], lo[1], bottom], [hi[0], hi[1], top])
    }

    /// Top surface height at (x, y), `None` outside the footprint.
    pub fn top_at(&self, x: f64, y: f64) -> Option<f64> {
        let (lo, hi) = self.footprint();
        if x < lo[0] || x > hi[0] || y < lo[1] || y > hi[1] {
            return None;
        }
        Some(match *self {
            Primitive::Box { max, .. } => max[2],
            Primitive::Ramp { base_min, base_max, low, high, axis } => {
                let (u, len) = axis.progress(base_min, base_max, x, y);
                low + (high - low) * (u / len).clamp(0.0, 1.0)
            }
            Primitive::Staircase { base_min, base_max, steps, rise, run, axis } => {
                let (u, _) = axis.progress(base_min, base_max, x, y);
                let tread = ((u / run).floor() as i64 + 1).clamp(1, steps as i64);
                tread as f64 * rise
            }
        })
    }

    fn validate(&self, index: usize) -> Result<()> {
        let bad = |msg: &str| NavError::InvalidEnvironment(format!("primitive {index}: {msg}"));
        let (lo, hi) = self.footprint();
        if !(lo[0] < hi[0] && lo[1] < hi[1]) {
            return Err(bad("empty footprint"));
        }
        match *self {
            Primitive::Box { min, max } => {
                if !(min[2] < max[2]) {
                    return Err(bad("box has no height"));
                }
            }
            Primitive::Ramp { low, high, .. } => {
                if !(high >= low && low >= 0.0) {
                    return Err(bad("ramp needs 0 <= low <= high"));
                }
            }
            Primitive::Staircase { base_min, base_max, steps, rise, run, axis } => {
                if steps < 1 || !(rise > 0.0) || !(run > 0.0) {
                    return Err(bad("staircase needs steps >= 1, rise > 0, run > 0"));
                }
                let (_, len) = axis.progress(base_min, base_max, base_min[0], base_min[1]);
                if len + UNIT_TOL < steps as f64 * run {
                    return Err(bad("staircase base shorter than steps * run"));
                }
            }
        }
        Ok(())
    }

    fn solids(&self) -> Vec<ConvexSolid> {
        match *self {
            Primitive::Box { min, max } => vec![ConvexSolid::from_box(min, max)],
            Primitive::Ramp { base_min, base_max, low, high, axis } => {
                let (_, len) = axis.progress(base_min, base_max, base_min[0], base_min[1]);
                let slope = (high - low) / len;
                let [ax, ay] = axis.unit();
                // height = low + slope * (a . p - a . p0) where p0 is on the low edge
                let p0 = match axis {
                    Axis::PosX | Axis::PosY => base_min,
                    Axis::NegX | Axis::NegY => base_max,
                };
                let a_p0 = ax * p0[0] + ay * p0[1];
                let mut s = ConvexSolid::from_box([base_min[0], base_min[1], 0.0], [base_max[0], base_max[1], low.max(high)]);
                // z - slope * (a . p) <= low - slope * a . p0
                s.planes.push(([-slope * ax, -slope * ay, 1.0], low - slope * a_p0));
                vec![s]
            }
            Primitive::Staircase { base_min, base_max, steps, rise, run, axis } => (1..=steps)
                .map(|i| {
                    let start = (i - 1) as f64 * run;
                    let (mut lo, mut hi) = ([base_min[0], base_min[1], 0.0], [base_max[0], base_max[1], i as f64 * rise]);
                    match axis {
                        Axis::PosX => lo[0] = base_min[0] + start,
                        Axis::NegX => hi[0] = base_max[0] - start,
                        Axis::PosY => lo[1] = base_min[1] + start,
                        Axis::NegY => hi[1] = base_max[1] - start,
                    }
                    ConvexSolid::from_box(lo, hi)
                })
                .collect(),
        }
    }
}

/// Intersection of half-spaces `n . p <= c`.
#[derive(Debug, Clone)]
struct ConvexSolid {
    planes: Vec<([f64; 3], f64)>,
}

impl ConvexSolid {
    fn from_box(min: [f64; 3], max: [f64; 3]) -> Self {
        let mut planes = Vec::with_capacity(7);
        for i in 0..3 {
            let mut n = [0.0; 3];
            n[i] = 1.0;
            planes.push((n, max[i]));
            let mut m = [0.0; 3];
            m[i] = -1.0;
            planes.push((m, -min[i]));
        }
        Self { planes }
    }

    fn contains(&self, p: [f64; 3]) -> bool {
        self.planes.iter().all(|(n, c)| dot(*n, p) <= *c)
    }

    /// Entry parameter of the ray within `[0, t_max]`, 0 when the origin is
    /// inside.
    fn ray_entry(&self, o: [f64; 3], d: [f64; 3], t_max: f64) -> Option<f64> {
        let (mut t0, mut t1) = (0.0f64, t_max);
        for (n, c) in &self.planes {
            let denom = dot(*n, d);
            let num = c - dot(*n, o);
            if denom == 0.0 {
                if num < 0.0 {
                    return None;
                }
            } else if denom < 0.0 {
                t0 = t0.max(num / denom);
            } else {
                t1 = t1.min(num / denom);
            }
            if t0 > t1 {
                return None;
            }
        }
        Some(t0)
    }
}

fn dot(a: [f64; 3], b: [f64; 3]) -> f64 {
    a[0] * b[0] + a[1] * b[1] + a[2] * b[2]
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawEnvironment {
    bounds: Aabb,
    primitives: Vec<Primitive>,
}

/// Declarative synthetic world: bounds plus solid primitives, with an
/// implicit floor at z = 0.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(try_from = "RawEnvironment", into = "RawEnvironment")]
pub struct EnvironmentSpec {
    bounds: Aabb,
    primitives: Vec<Primitive>,
    solids: Vec<ConvexSolid>,
}

impl TryFrom<RawEnvironment> for EnvironmentSpec {
    type Error = NavError;

    fn try_from(raw: RawEnvironment) -> Result<Self> {
        EnvironmentSpec::new(raw.bounds, raw.primitives)
    }
}

impl From<EnvironmentSpec> for RawEnvironment {
    fn from(env: EnvironmentSpec) -> Self {
        RawEnvironment { bounds: env.bounds, primitives: env.primitives }
    }
}

/// A ray intersection.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RayHit {
    pub point: [f64; 3],
    pub distance: f64,
}

impl EnvironmentSpec {
    pub fn new(bounds: Aabb, primitives: Vec<Primitive>) -> Result<Self> {
        if !bounds.is_valid() {
            return Err(NavError::InvalidEnvironment("bounds min must not exceed max".into()));
        }
        for (i, p) in primitives.iter().enumerate() {
            p.validate(i)?;
            if !bounds.encloses(&p.bounding_box()) {
                return Err(NavError::InvalidEnvironment(format!("primitive {i} lies outside the bounds")));
            }
        }
        let mut solids = vec![ConvexSolid { planes: vec![([0.0, 0.0, 1.0], 0.0)] }];
        solids.extend(primitives.iter().flat_map(Primitive::solids));
        Ok(Self { bounds, primitives, solids })
    }

    pub fn from_json(text: &str) -> Result<Self> {
        Ok(serde_json::from_str(text)?)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("environment serializes")
    }

    pub fn bounds(&self) -> &Aabb {
        &self.bounds
    }

    pub fn primitives(&self) -> &[Primitive] {
        &self.primitives
    }

    /// Copy of this world with extra boxes (e.g. people) added.
    pub fn with_boxes(&self, boxes: &[Aabb]) -> Result<Self> {
        let mut prims = self.primitives.clone();
        prims.extend(boxes.iter().map(|b| Primitive::Box { min: b.min, max: b.max }));
        Self::new(self.bounds, prims)
    }

    /// Height of the highest primitive top at (x, y); 0 on bare floor.
    pub fn surface_height(&self, x: f64, y: f64) -> Result<f64> {
        if !self.bounds.contains_xy(x, y) {
            return Err(NavError::OutOfBounds { x, y, z: 0.0 });
        }
        Ok(self.surface_height_unchecked(x, y))
    }

    pub(crate) fn surface_height_unchecked(&self, x: f64, y: f64) -> f64 {
        self.primitives.iter().filter_map(|p| p.top_at(x, y)).fold(0.0, f64::max)
    }

    /// Nose-up pitch of a robot at (x, y) heading `yaw`, from the local
    /// surface slope along the heading.
    pub fn surface_pitch(&self, x: f64, y: f64, yaw: f64) -> f64 {
        const H: f64 = 1e-3;
        let (c, s) = (yaw.cos(), yaw.sin());
        let ahead = self.surface_height_unchecked(x + H * c, y + H * s);
        let behind = self.surface_height_unchecked(x - H * c, y - H * s);
        ((ahead - behind) / (2.0 * H)).atan()
    }

    /// True when the point lies inside a solid (floor included).
    pub fn is_solid(&self, p: [f64; 3]) -> bool {
        self.solids.iter().any(|s| s.contains(p))
    }

    /// Nearest surface intersection within `max_range`. A ray starting
    /// inside a solid hits at distance 0.
    pub fn cast_ray(&self, origin: [f64; 3], dir: [f64; 3], max_range: f64) -> Result<Option<RayHit>> {
        let norm = dot(dir, dir).sqrt();
        if (norm - 1.0).abs() > UNIT_TOL {
            return Err(NavError::param("dir", format!("must be a unit vector (|dir| = {norm})")));
        }
        if !(max_range > 0.0) {
            return Err(NavError::param("max_range", "must be positive"));
        }
        Ok(self.cast_ray_unchecked(origin, dir, max_range))
    }

    pub(crate) fn cast_ray_unchecked(&self, origin: [f64; 3], dir: [f64; 3], max_range: f64) -> Option<RayHit> {
        let mut best = f64::INFINITY;
        for s in &self.solids {
            if let Some(t) = s.ray_entry(origin, dir, best.min(max_range)) {
                if t < best {
                    best = t;
                }
            }
        }
        (best <= max_range).then(|| RayHit {
            point: [origin[0] + best * dir[0], origin[1] + best * dir[1], origin[2] + best * dir[2]],
            distance: best,
        })
    }

    /// Body orientation for a robot standing at `pose`.
    fn body_rotation(&self, pose: &Pose) -> Rotation3<f64> {
        let pitch_up = self.surface_pitch(pose.x, pose.y, pose.yaw);
        Rotation3::from_axis_angle(&Vector3::z_axis(), pose.yaw) * Rotation3::from_axis_angle(&Vector3::y_axis(), -pitch_up)
    }

    fn mount_origin(&self, pose: &Pose, body: &Rotation3<f64>, height: f64) -> [f64; 3] {
        let base = Vector3::new(pose.x, pose.y, self.surface_height_unchecked(pose.x, pose.y));
        let o = base + body * Vector3::new(0.0, 0.0, height);
        [o.x, o.y, o.z]
    }

    /// World-frame point cloud seen by the depth camera; one point per pixel
    /// ray that hits within range.
    pub fn simulate_depth_scan(&self, pose: &Pose, cam: &DepthCamera) -> Vec<[f64; 3]> {
        self.depth_rays(pose, cam).filter_map(|(o, d)| self.cast_ray_unchecked(o, d, cam.max_range).map(|h| h.point)).collect()
    }

    /// Camera origin and unit world direction of every pixel ray.
    pub fn depth_rays<'a>(&'a self, pose: &Pose, cam: &'a DepthCamera) -> impl Iterator<Item = ([f64; 3], [f64; 3])> + 'a {
        let body = self.body_rotation(pose);
        let origin = self.mount_origin(pose, &body, cam.mount_height);
        let rot = body * Rotation3::from_axis_angle(&Vector3::y_axis(), cam.tilt);
        let fx = (cam.width as f64 / 2.0) / (cam.hfov / 2.0).tan();
        let (cx, cy) = (cam.width as f64 / 2.0, cam.height as f64 / 2.0);
        (0..cam.height).flat_map(move |v| {
            (0..cam.width).map(move |u| {
                let d = Vector3::new(1.0, -(u as f64 + 0.5 - cx) / fx, -(v as f64 + 0.5 - cy) / fx).normalize();
                let w = rot * d;
                (origin, [w.x, w.y, w.z])
            })
        })
    }

    /// Range per beam of a planar laser pitched with the surface under the
    /// robot; beams without a hit report `max_range`.
    pub fn simulate_laser_scan(&self, pose: &Pose, laser: &Laser) -> Vec<f64> {
        let body = self.body_rotation(pose);
        let origin = self.mount_origin(pose, &body, laser.mount_height);
        (0..laser.beams)
            .map(|i| {
                let a = laser.beam_angle(i);
                let d = body * Vector3::new(a.cos(), a.sin(), 0.0);
                self.cast_ray_unchecked(origin, [d.x, d.y, d.z], laser.max_range).map_or(laser.max_range, |h| h.distance)
            })
            .collect()
    }

    /// Densifies a scripted tour at `spacing`, placing every pose on the
    /// surface. Consecutive waypoints must be joined by a collision-free
    /// segment at robot height.
    pub fn sweep_trajectory(&self, waypoints: &[Pose], spacing: f64) -> Result<Vec<Pose>> {
        const ROBOT_HEIGHT: f64 = 0.3;
        if !(spacing > 0.0) {
            return Err(NavError::param("spacing", "must be positive"));
        }
        for (i, w) in waypoints.iter().enumerate() {
            if !self.bounds.contains_xy(w.x, w.y) {
                return Err(NavError::InvalidWaypoint { index: i, reason: "outside the environment bounds".into() });
            }
        }
        let lifted = |p: &Pose| [p.x, p.y, self.surface_height_unchecked(p.x, p.y) + ROBOT_HEIGHT];
        for (i, w) in waypoints.iter().enumerate() {
            if self.is_solid(lifted(w)) {
                return Err(NavError::InvalidWaypoint { index: i, reason: "inside an obstacle".into() });
            }
        }
        let mut out = Vec::new();
        for (i, pair) in waypoints.windows(2).enumerate() {
            let (a, b) = (&pair[0], &pair[1]);
            let (pa, pb) = (lifted(a), lifted(b));
            let seg = [pb[0] - pa[0], pb[1] - pa[1], pb[2] - pa[2]];
            let len3 = dot(seg, seg).sqrt();
            if len3 > 0.0 {
                let dir = [seg[0] / len3, seg[1] / len3, seg[2] / len3];
                if self.cast_ray_unchecked(pa, dir, len3).is_some() {
                    return Err(NavError::InvalidWaypoint {
                        index: i + 1,
                        reason: "not reachable by an obstacle-free segment".into(),
                    });
                }
            }
            let len = (b.x - a.x).hypot(b.y - a.y);
            let n = ((len / spacing) - 1e-9).ceil().max(1.0) as usize;
            let dyaw = wrap_angle(b.yaw - a.yaw);
            for k in 0..n {
                let f = k as f64 / n as f64;
                let (x, y) = (a.x + f * (b.x - a.x), a.y + f * (b.y - a.y));
                out.push(Pose::new(x, y, self.surface_height_unchecked(x, y), a.yaw + f * dyaw));
            }
        }
        if let Some(last) = waypoints.last() {
            out.push(Pose::new(last.x, last.y, self.surface_height_unchecked(last.x, last.y), last.yaw));
        }
        Ok(out)
    }
}

/// Wraps an angle into (-pi, pi].
pub fn wrap_angle(a: f64) -> f64 {
    let mut w = a.rem_euclid(2.0 * PI);
    if w > PI {
        w -= 2.0 * PI;
    }
    w
}

/// Planar robot pose; `z` is the surface height under the robot.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Pose {
    pub x: f64,
    pub y: f64,
    pub z: f64,
    pub yaw: f64,
}

impl Pose {
    pub fn new(x: f64, y: f64, z: f64, yaw: f64) -> Self {
        Self { x, y, z, yaw: wrap_angle(yaw) }
    }

    pub fn planar(x: f64, y: f64, yaw: f64) -> Self {
        Self::new(x, y, 0.0, yaw)
    }

    pub fn xy(&self) -> [f64; 2] {
        [self.x, self.y]
    }
}

/// Zero-mean Gaussian pose perturbation standing in for odometry error.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PoseNoise {
    pub sigma_xy: f64,
    pub sigma_yaw: f64,
}

impl PoseNoise {
    pub fn is_zero(&self) -> bool {
        self.sigma_xy == 0.0 && self.sigma_yaw == 0.0
    }

    pub fn perturb(&self, pose: &Pose, rng: &mut impl Rng) -> Pose {
        if self.is_zero() {
            return *pose;
        }
        let xy = Normal::new(0.0, self.sigma_xy).expect("sigma_xy is finite");
        let yaw = Normal::new(0.0, self.sigma_yaw).expect("sigma_yaw is finite");
        Pose::new(pose.x + xy.sample(rng), pose.y + xy.sample(rng), pose.z, pose.yaw + yaw.sample(rng))
    }
}

/// Pinhole depth camera mounted above the base, tilted down by `tilt`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DepthCamera {
    pub width: usize,
    pub height: usize,
    /// Horizontal field of view, radians.
    pub hfov: f64,
    pub max_range: f64,
    pub mount_height: f64,
    /// Downward tilt, radians.
    pub tilt: f64,
}

impl Default for DepthCamera {
    fn default() -> Self {
        Self { width: 640, height: 480, hfov: 58f64.to_radians(), max_range: 6.0, mount_height: 1.0, tilt: 25f64.to_radians() }
    }
}

impl DepthCamera {
    pub fn validate(&self) -> Result<()> {
        if self.width == 0 || self.height == 0 {
            return Err(NavError::param("camera.width", "image must be non-empty"));
        }
        if !(self.hfov > 0.0 && self.hfov < 2.0 * PI) {
            return Err(NavError::param("camera.hfov", "must be in (0, 2pi)"));
        }
        if !(self.max_range > 0.0) {
            return Err(NavError::param("camera.max_range", "must be positive"));
        }
        Ok(())
    }
}

/// Planar scanning laser.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Laser {
    /// Angular coverage centered on the heading, radians.
    pub fov: f64,
    pub beams: usize,
    pub max_range: f64,
    pub mount_height: f64,
}

impl Default for Laser {
    fn default() -> Self {
        Self { fov: 270f64.to_radians(), beams: 541, max_range: 30.0, mount_height: 0.3 }
    }
}

impl Laser {
    /// Beam bearing relative to the heading; beam 0 is the rightmost.
    pub fn beam_angle(&self, i: usize) -> f64 {
        if self.beams <= 1 {
            0.0
        } else {
            -self.fov / 2.0 + self.fov * i as f64 / (self.beams - 1) as f64
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.beams == 0 {
            return Err(NavError::param("laser.beams", "must be at least 1"));
        }
        if !(self.fov > 0.0 && self.fov < 2.0 * PI) {
            return Err(NavError::param("laser.fov", "must be in (0, 2pi)"));
        }
        if !(self.max_range > 0.0) {
            return Err(NavError::param("laser.max_range", "must be positive"));
        }
        Ok(())
    }
}

/// Both sensors of the robot.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SensorIntrinsics {
    pub camera: DepthCamera,
    pub laser: Laser,
}
