//! Log-odds fusion in the occupancy octree: repeated hits on one voxel,
//! clamping at the upper bound, and a single scan carving free space.
//!
//! `cargo run --release --example octree_update`

use uneven_nav::env_model::Aabb;
use uneven_nav::octree_map::{logistic, logit, OccupancyOctree, SensorModel};

fn main() -> uneven_nav::Result<()> {
    let model = SensorModel::default();
    let mut tree = OccupancyOctree::new(Aabb::new([0.0; 3], [2.0, 2.0, 1.0]), 0.05, model)?;
    let key = tree.key_of([1.0, 1.0, 0.5]).expect("inside bounds");
    for k in 1..=6 {
        tree.update_hit(key);
        let stored = tree.log_odds(key).unwrap();
        let unclamped = k as f64 * logit(model.p_hit);
        println!("hits {k}: p = {:.4} (unclamped {:.4})", logistic(stored), logistic(unclamped));
    }

    let origin = [0.2, 0.2, 0.5];
    let cloud = [[1.8, 1.5, 0.5], [1.8, 0.4, 0.5]];
    let updated = tree.integrate_scan(origin, &cloud)?;
    println!("scan touched {updated} voxels; midpoint {:?}, endpoint {:?}", tree.query([1.0, 0.85, 0.5])?, tree.query(cloud[0])?);
    Ok(())
}
