use nalgebra::{Vector2, Vector3};
use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use super::{ForestWorld, Obstacle, VehicleState};
use crate::pointcloud::{PillarGridSpec, PointCloud, SphericalPoint};

/// Simulated scanner casting one ray through the centre of every pillar.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LidarModel {
    pub spec: PillarGridSpec,
    /// Standard deviation of additive range noise (m). Draws are truncated at
    /// three standard deviations.
    pub noise_std: f64,
}

impl LidarModel {
    pub fn new(spec: PillarGridSpec, noise_std: f64) -> Self {
        assert!(noise_std >= 0.0, "noise_std must be non-negative");
        Self { spec, noise_std }
    }

    pub fn rays(&self) -> usize {
        self.spec.cells()
    }
}

/// Entry distance of a ray into a prism, if it hits within `t_max`.
fn ray_prism(
    origin: &Vector3<f64>,
    dir: &Vector3<f64>,
    ob: &Obstacle,
    height: f64,
    t_max: f64,
) -> Option<f64> {
    let lo = [
        ob.center.x - ob.half_extents.x,
        ob.center.y - ob.half_extents.y,
        0.0,
    ];
    let hi = [
        ob.center.x + ob.half_extents.x,
        ob.center.y + ob.half_extents.y,
        height,
    ];
    let mut t0 = 0.0f64;
    let mut t1 = t_max;
    for axis in 0..3 {
        let o = origin[axis];
        let d = dir[axis];
        if d == 0.0 {
            if o < lo[axis] || o > hi[axis] {
                return None;
            }
            continue;
        }
        let inv = 1.0 / d;
        let (mut a, mut b) = ((lo[axis] - o) * inv, (hi[axis] - o) * inv);
        if a > b {
            std::mem::swap(&mut a, &mut b);
        }
        t0 = t0.max(a);
        t1 = t1.min(b);
        if t0 > t1 {
            return None;
        }
    }
    Some(t0)
}

/// Distance from an interior point to the walls of the operational box.
fn box_exit(origin: &Vector3<f64>, dir: &Vector3<f64>, world: &ForestWorld) -> Option<f64> {
    let b = &world.bounds;
    if !b.contains(origin) {
        return None;
    }
    let lo = [b.area.min.x, b.area.min.y, b.z_min];
    let hi = [b.area.max.x, b.area.max.y, b.z_max];
    let mut t = f64::INFINITY;
    for axis in 0..3 {
        let d = dir[axis];
        if d > 0.0 {
            t = t.min((hi[axis] - origin[axis]) / d);
        } else if d < 0.0 {
            t = t.min((lo[axis] - origin[axis]) / d);
        }
    }
    t.is_finite().then_some(t)
}

fn nearby<'a>(world: &'a ForestWorld, xy: &Vector2<f64>, reach: f64) -> Vec<&'a Obstacle> {
    world
        .obstacles
        .iter()
        .filter(|ob| ob.distance_to(xy) <= reach)
        .collect()
}

/// Casts the scanner from the vehicle pose. Hits beyond `r_max` and rays that
/// escape the world are omitted. Returned points are in the body frame.
pub fn raycast_lidar<R: Rng + ?Sized>(
    world: &ForestWorld,
    state: &VehicleState,
    model: &LidarModel,
    rng: &mut R,
) -> PointCloud {
    let spec = &model.spec;
    let r_max = spec.r_max();
    let candidates = nearby(world, &state.p.xy(), r_max);
    let noise = (model.noise_std > 0.0).then(|| Normal::new(0.0, model.noise_std).unwrap());
    let mut cloud = PointCloud {
        points: Vec::with_capacity(spec.cells()),
    };
    for j in 0..spec.n_phi() {
        let phi = spec.phi_center(j);
        for i in 0..spec.n_theta() {
            let theta = spec.theta_center(i);
            let dir_body = SphericalPoint { r: 1.0, theta, phi }.to_cartesian();
            let dir = state.q * dir_body;
            let mut hit = box_exit(&state.p, &dir, world).unwrap_or(f64::INFINITY);
            for ob in &candidates {
                if let Some(t) = ray_prism(&state.p, &dir, ob, world.obstacle_height, hit) {
                    hit = hit.min(t);
                }
            }
            if hit > r_max {
                continue;
            }
            let r = match &noise {
                Some(n) => {
                    let cap = 3.0 * model.noise_std;
                    (hit + n.sample(rng).clamp(-cap, cap)).max(0.0)
                }
                None => hit,
            };
            cloud.push(SphericalPoint { r, theta, phi });
        }
    }
    cloud
}

/// Noise-free distances to obstacles along `n_beams` horizontal rays spread
/// evenly over the full circle, starting at the vehicle heading. Rays that hit
/// nothing within `max_range` report `max_range`.
pub fn safety_ranges(
    world: &ForestWorld,
    state: &VehicleState,
    n_beams: usize,
    max_range: f64,
) -> Vec<f64> {
    let candidates = nearby(world, &state.p.xy(), max_range);
    let yaw = state.yaw();
    (0..n_beams)
        .map(|k| {
            let a = yaw + 2.0 * std::f64::consts::PI * k as f64 / n_beams as f64;
            let dir = Vector3::new(a.cos(), a.sin(), 0.0);
            candidates
                .iter()
                .filter_map(|ob| ray_prism(&state.p, &dir, ob, world.obstacle_height, max_range))
                .fold(max_range, f64::min)
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::pointcloud::project;
    use crate::world::Rect;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use std::f64::consts::{FRAC_PI_2, PI};

    fn big_empty() -> ForestWorld {
        let mut w = ForestWorld::empty(
            Rect::new(Vector2::new(-50.0, -50.0), Vector2::new(50.0, 50.0)),
            Vector3::new(0.0, 0.0, 1.5),
            Vector3::new(20.0, 0.0, 1.5),
        );
        w.bounds.z_max = 40.0;
        w.bounds.z_min = -40.0;
        w
    }

    /// 31 azimuth bins and 5 polar bins with centres on theta = 0, phi = pi/2.
    fn centred_grid() -> PillarGridSpec {
        let d = PI / 60.0;
        let dp = PI / 36.0;
        PillarGridSpec::new(
            (-15.5 * d, 15.5 * d),
            (FRAC_PI_2 - 2.5 * dp, FRAC_PI_2 + 2.5 * dp),
            d,
            dp,
            10.0,
        )
        .unwrap()
    }

    fn rng() -> ChaCha8Rng {
        ChaCha8Rng::seed_from_u64(0)
    }

    #[test]
    fn empty_world_gives_empty_image() {
        let w = big_empty();
        let model = LidarModel::new(PillarGridSpec::paper_default(), 0.0);
        let s = VehicleState::at_rest(Vector3::new(0.0, 0.0, 1.5), 0.0);
        let cloud = raycast_lidar(&w, &s, &model, &mut rng());
        assert!(cloud.is_empty());
        assert!(project(&model.spec, &cloud)
            .values()
            .iter()
            .all(|&v| v == 10.0));
    }

    #[test]
    fn obstacle_dead_ahead() {
        let mut w = big_empty();
        // near face at x = 3
        w.obstacles.push(Obstacle {
            center: Vector2::new(3.25, 0.0),
            half_extents: Vector2::new(0.25, 0.25),
        });
        let spec = centred_grid();
        assert_eq!((spec.n_phi(), spec.n_theta()), (5, 31));
        let model = LidarModel::new(spec, 0.0);
        let s = VehicleState::at_rest(Vector3::new(0.0, 0.0, 1.5), 0.0);
        let img = project(&spec, &raycast_lidar(&w, &s, &model, &mut rng()));
        assert!((img.get(2, 15) - 3.0).abs() < 1e-9);
        // off-centre pillars follow the analytic slant range
        let (th, ph) = (spec.theta_center(16), spec.phi_center(1));
        let want = 3.0 / (th.cos() * ph.sin());
        assert!((img.get(1, 16) - want).abs() < 1e-9);
    }

    #[test]
    fn yaw_shifts_azimuth() {
        let mut w = big_empty();
        // obstacle at world bearing +45 degrees
        let c = Vector2::new(4.0, 4.0) / 2f64.sqrt();
        w.obstacles.push(Obstacle {
            center: c,
            half_extents: Vector2::new(0.3, 0.3),
        });
        let spec = PillarGridSpec::new(
            (-PI, PI),
            (FRAC_PI_2 - 0.05, FRAC_PI_2 + 0.05),
            PI / 60.0,
            0.1,
            10.0,
        )
        .unwrap();
        let model = LidarModel::new(spec, 0.0);
        let column_of_min = |yaw: f64| {
            let s = VehicleState::at_rest(Vector3::new(0.0, 0.0, 1.5), yaw);
            let img = project(&spec, &raycast_lidar(&w, &s, &model, &mut rng()));
            (0..spec.n_theta())
                .min_by(|&a, &b| img.get(0, a).total_cmp(&img.get(0, b)))
                .unwrap()
        };
        let before = column_of_min(0.0);
        let after = column_of_min(FRAC_PI_2);
        assert_eq!(before - after, 30);
    }

    #[test]
    fn noisy_ranges_stay_near_truth() {
        let mut w = big_empty();
        w.obstacles.push(Obstacle {
            center: Vector2::new(3.25, 0.0),
            half_extents: Vector2::new(0.25, 3.0),
        });
        let spec = centred_grid();
        let clean = LidarModel::new(spec, 0.0);
        let noisy = LidarModel::new(spec, 0.02);
        let s = VehicleState::at_rest(Vector3::new(0.0, 0.0, 1.5), 0.0);
        let a = raycast_lidar(&w, &s, &clean, &mut rng());
        let b = raycast_lidar(&w, &s, &noisy, &mut rng());
        assert_eq!(a.len(), b.len());
        for (p, q) in a.points.iter().zip(&b.points) {
            assert!(q.r <= p.r + 3.0 * 0.02 + 0.1);
            assert!(q.r >= 0.0);
        }
    }

    #[test]
    fn floor_is_seen_by_downward_rays() {
        let mut w = big_empty();
        w.bounds.z_min = 0.0;
        let spec = PillarGridSpec::new(
            (-0.1, 0.1),
            (3.0 * PI / 4.0 - 0.01, 3.0 * PI / 4.0 + 0.01),
            0.2,
            0.02,
            10.0,
        )
        .unwrap();
        let model = LidarModel::new(spec, 0.0);
        let s = VehicleState::at_rest(Vector3::new(0.0, 0.0, 1.5), 0.0);
        let cloud = raycast_lidar(&w, &s, &model, &mut rng());
        assert_eq!(cloud.len(), 1);
        assert!((cloud.points[0].r - 1.5 * 2f64.sqrt()).abs() < 1e-9);
    }

    #[test]
    fn safety_ring() {
        let mut w = big_empty();
        w.obstacles.push(Obstacle {
            center: Vector2::new(1.25, 0.0),
            half_extents: Vector2::new(0.25, 0.25),
        });
        let s = VehicleState::at_rest(Vector3::new(0.0, 0.0, 1.5), 0.0);
        let r = safety_ranges(&w, &s, 8, 5.0);
        assert_eq!(r.len(), 8);
        assert!((r[0] - 1.0).abs() < 1e-12);
        assert!(r[1..].iter().all(|&x| x == 5.0));
    }
}
