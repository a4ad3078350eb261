//! Planar laser returns in the test world: a flat view down the corridor,
//! then a view toward the ramp where the tilted surface crosses the scan
//! plane and shows up as a short-range return.
//!
//! `cargo run --release --example laser_scan`

use uneven_nav::env_model::{EnvironmentSpec, Laser, Pose};

fn main() -> uneven_nav::Result<()> {
    let env = EnvironmentSpec::load(concat!(env!("CARGO_MANIFEST_DIR"), "/fixtures/caffe.json"))?;
    let laser = Laser { mount_height: 0.55, ..Laser::default() };
    let center = laser.beams / 2;
    for (label, pose) in [
        ("corridor, facing +x", Pose::planar(1.5, 1.0, 0.0)),
        ("below the ramp, facing +y", Pose::planar(11.0, 1.0, std::f64::consts::FRAC_PI_2)),
    ] {
        let ranges = env.simulate_laser_scan(&pose, &laser);
        let hits = ranges.iter().filter(|r| r.is_finite() && **r < laser.max_range).count();
        println!("{label}: center beam {:.3} m, {hits}/{} beams returned", ranges[center], ranges.len());
    }
    Ok(())
}
