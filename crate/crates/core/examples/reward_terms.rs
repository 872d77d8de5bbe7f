//! Reward breakdown for a vehicle flying past an obstacle at two clearances.

use asyncnav::reward::RewardConfig;
use asyncnav::world::EpisodeStatus;
use nalgebra::{UnitQuaternion, Vector3};

fn main() -> asyncnav::Result<()> {
    let cfg = RewardConfig::default();
    let p = Vector3::new(0.0, 0.0, 1.5);
    let v = Vector3::new(2.5, 0.0, 0.0);
    let goal = Vector3::new(20.0, 0.0, 1.5);
    let q = UnitQuaternion::identity();
    for clearance in [2.0, 0.4] {
        let mut beams = vec![10.0; 36];
        beams[0] = clearance;
        beams[1] = clearance + 0.1;
        beams[35] = clearance + 0.1;
        beams[2] = clearance + 0.3;
        let r = cfg.evaluate(&beams, &p, &v, &q, &goal, 2.5, EpisodeStatus::Running)?;
        println!("clearance {clearance:.1} m: {r:?}");
    }
    let crash = cfg.evaluate(&[0.0; 36], &p, &v, &q, &goal, 2.5, EpisodeStatus::Collided)?;
    println!(
        "collision: total {:.3} (terminal {:.1})",
        crash.total, crash.r_terminal
    );
    Ok(())
}
