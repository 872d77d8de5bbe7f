//! Generates a forest, serialises it, and takes one simulated scan from the
//! start pose.

use asyncnav::pointcloud::{project, PillarGridSpec};
use asyncnav::world::{
    generate_forest, raycast_lidar, ForestConfig, ForestWorld, LidarModel, VehicleState,
};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn main() -> asyncnav::Result<()> {
    let world = generate_forest(7, &ForestConfig::default())?;
    let json = world.to_json()?;
    assert_eq!(ForestWorld::from_json(&json)?, world);
    println!(
        "{} obstacles, start {:?}, goal {:?}",
        world.obstacles.len(),
        world.start.as_slice(),
        world.goal.as_slice()
    );
    println!("serialised size {} bytes", json.len());

    let to_goal = world.goal - world.start;
    let state = VehicleState::at_rest(world.start, to_goal.y.atan2(to_goal.x));
    let spec = PillarGridSpec::paper_default();
    let cloud = raycast_lidar(
        &world,
        &state,
        &LidarModel::new(spec, 0.02),
        &mut ChaCha8Rng::seed_from_u64(1),
    );
    let img = project(&spec, &cloud);
    let nearest = img.values().iter().copied().fold(f64::INFINITY, f64::min);
    println!("scan: {} returns, nearest {:.2} m", cloud.len(), nearest);
    Ok(())
}
