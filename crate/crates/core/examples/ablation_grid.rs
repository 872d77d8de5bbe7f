//! Speed and density sweep for every mode, using a seeded untrained policy.

use asyncnav::harness::presets::{toy_env, toy_train};
use asyncnav::harness::{
    ablation_matrix, AblationAnchors, EvalSettings, ExperimentConfig, Mode, PolicySet,
};
use asyncnav::policy::PolicyNet;

fn main() -> asyncnav::Result<()> {
    let net = PolicyNet::new(toy_train().policy)?;
    let params = net.init_params(9);
    let mut policies = PolicySet::new();
    for mode in [Mode::Proposed, Mode::NoTem, Mode::SyncBaseline] {
        policies.insert(mode, net.clone(), params.clone());
    }
    let exp = ExperimentConfig {
        mode: Mode::Proposed,
        env: toy_env(),
        checkpoint: None,
        eval: EvalSettings {
            trials: 10,
            seed: 5,
            ..EvalSettings::default()
        },
    };
    let anchors = AblationAnchors {
        density: 0.2,
        speed: 3.0,
    };
    let report = ablation_matrix(
        &exp,
        &Mode::ALL,
        &[2.0, 4.0],
        &[0.1, 0.3],
        anchors,
        &policies,
    )?;
    print!("{}", report.to_table());
    Ok(())
}
