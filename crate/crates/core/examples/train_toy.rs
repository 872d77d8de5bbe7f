//! Trains the toy preset for a few iterations and evaluates the result.
//!
//! `cargo run --release --example train_toy -- [iterations] [mode]`

use asyncnav::harness::presets::toy_train;
use asyncnav::harness::{run_modes, EvalSettings, ExperimentConfig, Mode, PolicySet};
use asyncnav::learn::{train, trained_policy};

fn main() -> asyncnav::Result<()> {
    let mut args = std::env::args().skip(1);
    let iterations = args.next().and_then(|s| s.parse().ok()).unwrap_or(20);
    let mode: Mode = args.next().as_deref().unwrap_or("proposed").parse()?;
    let mut base = toy_train();
    base.iterations = iterations;
    base.curriculum.max_sync_iters = base.curriculum.max_sync_iters.min(iterations / 2);
    let cfg = mode.train_config(&base);

    let outcome = train(&cfg, |m, _, _| {
        println!(
            "{:>4} {:<13} return {:>8.2} success {:.3} aoi {:.3}",
            m.iteration,
            format!("{:?}", m.stage),
            m.mean_return,
            m.success_rate,
            m.mean_aoi
        );
    })?;
    println!("switched after {:?}", outcome.switched_after);

    let (net, params) = trained_policy(&outcome)?;
    let mut policies = PolicySet::new();
    policies.insert(mode, net, params);
    let modes: &[Mode] = if mode == Mode::Proposed {
        &[Mode::Ideal, Mode::Proposed]
    } else {
        &[mode]
    };
    let exp = ExperimentConfig {
        mode,
        env: base.env.clone(),
        checkpoint: None,
        eval: EvalSettings {
            trials: 50,
            seed: 1,
            ..EvalSettings::default()
        },
    };
    let (report, _) = run_modes(&exp, modes, &policies)?;
    print!("{}", report.to_table());
    Ok(())
}
