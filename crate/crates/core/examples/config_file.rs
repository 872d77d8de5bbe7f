//! Parses a run configuration and shows what it resolves to.

use asyncnav::harness::RunConfig;

const EXAMPLE: &str = r#"
preset = "toy"
schedule.f_perc = 10
schedule.latency_min = 0.02
schedule.latency_max = 0.08

[train]
iterations = 50
seed = 3
"#;

fn main() -> asyncnav::Result<()> {
    let cfg = RunConfig::parse(EXAMPLE)?;
    let t = &cfg.train;
    println!(
        "preset {} grid {}x{} perception {} Hz latency {:?} iterations {} seed {}",
        cfg.preset,
        t.env.grid.n_phi(),
        t.env.grid.n_theta(),
        t.env.schedule.f_perc,
        t.env.schedule.latency,
        t.iterations,
        t.seed
    );
    match RunConfig::parse("schedule.f_perception = 10") {
        Err(e) => println!("rejected: {e}"),
        Ok(_) => unreachable!("unknown keys are errors"),
    }
    Ok(())
}
