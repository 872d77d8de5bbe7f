//! Builds the default policy, assembles one observation, samples an action,
//! and round-trips the parameters through a checkpoint.

use asyncnav::pointcloud::{PillarGridSpec, PseudoImage};
use asyncnav::policy::{
    assemble_observation, mean_action, sample_and_logprob, Checkpoint, PolicyConfig, PolicyNet,
    Tape,
};
use asyncnav::temporal::{encode, DEFAULT_RESOLUTION};
use asyncnav::world::VehicleState;
use nalgebra::Vector3;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn main() -> asyncnav::Result<()> {
    let spec = PillarGridSpec::paper_default();
    let net = PolicyNet::new(PolicyConfig::for_grid(&spec))?;
    let params = net.init_params(42);
    println!("{} parameters", net.param_count());
    for b in net.blocks() {
        println!("  {:<16} {:>6}", b.name, b.range.len());
    }

    let img = PseudoImage::empty(spec);
    let z = net.encode_perception(&params, &img)?;
    let state = VehicleState::at_rest(Vector3::new(0.0, 0.0, 1.5), 0.0);
    let phi = encode(0.07, DEFAULT_RESOLUTION)?;
    let obs = assemble_observation(
        &z,
        &state,
        &Vector3::new(20.0, 0.0, 1.5),
        &[0.0; 3],
        2.5,
        &phi,
    )?;
    let mut tape = Tape::new();
    let (dist, value) = net.forward(&params, &img, &obs.proprio(), &mut tape)?;
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    let s = sample_and_logprob(&dist, net.config().v_max, &mut rng);
    println!("value {value:.4}");
    println!("sampled command {:?} (log-prob {:.3})", s.a, s.log_prob);
    println!(
        "mean command    {:?}",
        mean_action(&dist, net.config().v_max).a
    );

    let ck = Checkpoint::new(net.config().clone(), params.clone());
    let (_, restored) = Checkpoint::from_json(&ck.to_json()?)?.into_net()?;
    assert_eq!(restored, params);
    println!("checkpoint round trip ok");
    Ok(())
}
