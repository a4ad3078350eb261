//! Runs a scenario end to end and prints the task outcomes.
//!
//! `cargo run --release --example pipeline -- [scenario.json] [out_dir]`

use std::path::PathBuf;

use uneven_nav::pipeline::run_pipeline;
use uneven_nav::scenario::Scenario;

fn main() -> uneven_nav::Result<()> {
    let mut args = std::env::args().skip(1);
    let path = args
        .next()
        .map(PathBuf::from)
        .unwrap_or_else(|| PathBuf::from(concat!(env!("CARGO_MANIFEST_DIR"), "/fixtures/caffe_scenario.json")));
    let scenario = Scenario::load(&path)?;
    let out = args.next().map(PathBuf::from);
    let report = run_pipeline(&scenario, out.as_deref())?;
    println!("agreement {:.4}", report.agreement.ratio());
    for t in &report.tasks {
        println!(
            "{:8} success={} replans={} dist={:.2} t={:.2}s vmax={:.2} clearance={:.3} rise_ticks={} plan_us={:?} {}",
            t.task,
            t.success,
            t.replans,
            t.distance,
            t.elapsed,
            t.max_speed,
            t.min_truth_clearance,
            t.rise_ticks,
            t.plan_times_us,
            t.reason.as_deref().unwrap_or("")
        );
    }
    Ok(())
}
