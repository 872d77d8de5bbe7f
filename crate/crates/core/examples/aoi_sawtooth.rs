//! Age of information seen by a 100 Hz controller fed by 10 Hz perception
//! with a 50 ms processing delay.

use asyncnav::schedule::{run_timeline, write_aoi_trace, LatencyModel, ScheduleConfig};

fn main() -> asyncnav::Result<()> {
    let cfg = ScheduleConfig {
        f_ctrl: 100.0,
        f_perc: 10.0,
        latency: LatencyModel::Constant { secs: 0.05 },
        jitter_seed: 0,
    };
    let tl = run_timeline(&cfg, 0.3)?;
    println!("# t_ctrl delta_t");
    write_aoi_trace(std::io::stdout().lock(), &tl.aoi)?;
    Ok(())
}
