//! Maps the test world, slices the octree into layers and classifies every
//! column. Writes the layer and label images to the given directory.
//!
//! `cargo run --release --example traversable_map -- [out_dir]`

use std::path::PathBuf;

use uneven_nav::pipeline::{reference_map, stage_map, stage_traverse};
use uneven_nav::scenario::Scenario;
use uneven_nav::traversability::{compare_maps, TerrainLabel};

fn main() -> uneven_nav::Result<()> {
    let scenario = Scenario::load(concat!(env!("CARGO_MANIFEST_DIR"), "/fixtures/caffe_scenario.json"))?;
    let out = std::env::args().nth(1).map(PathBuf::from);
    let env = scenario.load_environment()?;
    let (tree, stats) = stage_map(&scenario, &env, out.as_deref())?;
    println!("octree: {} leaves from {} scans", tree.leaf_count(), stats.scans);
    let (_, map) = stage_traverse(&scenario, &tree, out.as_deref())?;
    for label in TerrainLabel::ALL {
        println!("{label:?}: {} cells", map.count(label));
    }
    let agreement = compare_maps(&map, &reference_map(&scenario, &env, &map)?)?;
    println!("agreement with the heightmap reference: {:.4}", agreement.ratio());
    Ok(())
}
