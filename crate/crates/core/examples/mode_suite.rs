//! Flies one hand-set cruise policy through the four evaluation conditions on
//! the same episode seeds and prints the suite report.

use asyncnav::harness::presets::{toy_env, toy_train};
use asyncnav::harness::{
    run_modes, write_episodes_jsonl, EvalSettings, ExperimentConfig, Mode, PolicySet,
};
use asyncnav::policy::PolicyNet;

fn main() -> asyncnav::Result<()> {
    let net = PolicyNet::new(toy_train().policy)?;
    // Zero weights; actor biases put the mean command at 40% of full speed
    // straight ahead.
    let mut params = net.init_params(0);
    params.values.iter_mut().for_each(|v| *v = 0.0);
    let actor = net
        .blocks()
        .into_iter()
        .find(|b| b.name == "actor")
        .expect("actor block");
    let eps = net.config().epsilon;
    let inv_softplus = |y: f64| f64::exp_m1(y - eps).ln();
    let shapes = [5.6, 4.0, 4.0, 2.4, 4.0, 4.0];
    let start = actor.range.end - shapes.len();
    for (slot, s) in params.values[start..actor.range.end].iter_mut().zip(shapes) {
        *slot = inv_softplus(s);
    }

    let mut policies = PolicySet::new();
    for mode in [Mode::Proposed, Mode::NoTem, Mode::SyncBaseline] {
        policies.insert(mode, net.clone(), params.clone());
    }
    let exp = ExperimentConfig {
        mode: Mode::Proposed,
        env: toy_env(),
        checkpoint: None,
        eval: EvalSettings {
            trials: 40,
            seed: 3,
            ..EvalSettings::default()
        },
    };
    let (report, records) = run_modes(&exp, &Mode::ALL, &policies)?;
    print!("{}", report.to_table());
    println!("first episode records:");
    write_episodes_jsonl(std::io::stdout().lock(), &records[..2])?;
    Ok(())
}
