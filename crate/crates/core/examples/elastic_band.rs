//! Elastic band in a local costmap: a straight path that grazes a laser
//! obstacle is pushed away from it while staying short.
//!
//! `cargo run --release --example elastic_band`

use uneven_nav::env_model::{Aabb, EnvironmentSpec, Laser, Pose};
use uneven_nav::grid::{CellState, Grid2, GridGeometry};
use uneven_nav::local_planner::{band_valid, build_band, optimize_band, LocalConfig, LocalCostmap};

fn main() -> uneven_nav::Result<()> {
    let bounds = Aabb::new([0.0, 0.0, 0.0], [6.0, 4.0, 2.0]);
    let env = EnvironmentSpec::new(bounds, vec![])?.with_boxes(&[Aabb::new([2.9, 1.5, 0.0], [3.3, 1.9, 1.0])])?;
    let static_map = Grid2::filled(GridGeometry::new([0.0, 0.0], 0.05, 120, 80), CellState::Free);

    let cfg = LocalConfig { width: 4.0, length: 6.0, ..LocalConfig::default() };
    let mut costmap = LocalCostmap::new(&static_map.geometry, cfg.width, cfg.length)?;
    let pose = Pose::planar(1.0, 2.3, 0.0);
    let laser = Laser::default();
    costmap.update(&pose, 0.0, &env.simulate_laser_scan(&pose, &laser), &laser, &static_map);

    let path: Vec<[f64; 2]> = (0..=8).map(|i| [1.0 + 0.5 * i as f64, 2.3]).collect();
    let band = match build_band(&path, &costmap, cfg.robot_radius) {
        Ok(b) => b,
        Err(e) => {
            println!("band could not be built: {e:?}");
            return Ok(());
        }
    };
    let tuned = optimize_band(&band, &costmap, &cfg, cfg.sweeps);
    println!("initial: {} bubbles, length {:.3}, min clearance {:.3}", band.len(), band.length(), band.min_clearance());
    println!("optimized: {} bubbles, length {:.3}, min clearance {:.3}", tuned.len(), tuned.length(), tuned.min_clearance());
    println!("valid: {}", band_valid(&tuned, &costmap, cfg.robot_radius));
    Ok(())
}
