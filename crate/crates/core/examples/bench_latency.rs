//! Median and p95 time of projection and of one policy forward pass.

use asyncnav::harness::{bench_latency, BenchConfig};
use asyncnav::pointcloud::PillarGridSpec;
use asyncnav::policy::PolicyConfig;

fn main() -> asyncnav::Result<()> {
    let spec = PillarGridSpec::paper_default();
    let report = bench_latency(
        &spec,
        &PolicyConfig::for_grid(&spec),
        &BenchConfig::default(),
    )?;
    print!("{}", report.to_table());
    Ok(())
}
