//! Randomised invariants across the perception, world, timing, reward and
//! policy layers.

mod common;

use std::f64::consts::PI;
use std::sync::Arc;

use asyncnav::learn::{clipped_surrogate, loss_and_grad, Objective, PpoConfig, PpoSample};
use asyncnav::pointcloud::{
    cartesian_to_spherical, project, PillarGridSpec, PointCloud, PseudoImage,
};
use asyncnav::policy::{
    sample_and_logprob, BetaParams, PolicyConfig, PolicyNet, Tape, PROPRIO_DIM,
};
use asyncnav::reward::{
    attitude_penalty, height_penalty, total_reward, CorridorParams, DenseTerms, RewardWeights,
};
use asyncnav::schedule::{run_timeline, LatencyModel, ScheduleConfig};
use asyncnav::temporal::{encode, quantize};
use asyncnav::world::{
    generate_forest, raycast_lidar, step_dynamics, ActionCommand, DynamicsParams, EpisodeStatus,
    ForestConfig, LidarModel, Rect, VehicleState,
};
use nalgebra::{UnitQuaternion, Vector2, Vector3};
use proptest::prelude::*;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn grid() -> impl Strategy<Value = PillarGridSpec> {
    (
        0.05f64..0.6,
        0.05f64..0.6,
        1.0f64..20.0,
        0.0f64..1.0,
        0.0f64..1.0,
    )
        .prop_map(|(dt, dp, r_max, a, b)| {
            let t0 = -PI + a * PI;
            let p0 = b * PI / 2.0;
            let t1 = (t0 + dt * 4.0).min(PI);
            let p1 = (p0 + dp * 3.0).min(PI);
            PillarGridSpec::new((t0, t1), (p0, p1), dt, dp, r_max).unwrap()
        })
}

fn cloud(max: usize) -> impl Strategy<Value = Vec<Vector3<f64>>> {
    prop::collection::vec(
        (-25.0f64..25.0, -25.0f64..25.0, -25.0f64..25.0)
            .prop_map(|(x, y, z)| Vector3::new(x, y, z)),
        0..max,
    )
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn projection_cells_stay_in_range(spec in grid(), pts in cloud(400)) {
        let img = project(&spec, &PointCloud::from_cartesian(&pts).unwrap());
        prop_assert!(img.values().iter().all(|&v| (0.0..=spec.r_max()).contains(&v)));
    }

    #[test]
    fn projection_ignores_point_order(spec in grid(), pts in cloud(400), seed in any::<u64>()) {
        let mut shuffled = pts.clone();
        shuffled.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
        let a = project(&spec, &PointCloud::from_cartesian(&pts).unwrap());
        let b = project(&spec, &PointCloud::from_cartesian(&shuffled).unwrap());
        prop_assert_eq!(a.values(), b.values());
    }

    #[test]
    fn adding_a_point_never_raises_a_cell(spec in grid(), pts in cloud(200), extra in cloud(2)) {
        let before = project(&spec, &PointCloud::from_cartesian(&pts).unwrap());
        let mut more = pts.clone();
        more.extend(extra);
        let after = project(&spec, &PointCloud::from_cartesian(&more).unwrap());
        for (a, b) in after.values().iter().zip(before.values()) {
            prop_assert!(a <= b);
        }
    }

    #[test]
    fn spherical_round_trip(x in -100.0f64..100.0, y in -100.0f64..100.0, z in -100.0f64..100.0) {
        let p = Vector3::new(x, y, z);
        prop_assume!(p.norm() > 1e-6);
        let back = cartesian_to_spherical(&p).unwrap().to_cartesian();
        prop_assert!((back - p).norm() <= 1e-9 * p.norm());
    }

    #[test]
    fn forest_is_a_function_of_seed(seed in any::<u64>(), density in 0.0f64..0.5) {
        let cfg = ForestConfig { density, ..ForestConfig::default() };
        let a = generate_forest(seed, &cfg).unwrap();
        let b = generate_forest(seed, &cfg).unwrap();
        prop_assert_eq!(&a, &b);
        let expected = (density * cfg.area.area()).round() as usize;
        prop_assert_eq!(a.obstacles.len(), expected);
    }

    #[test]
    fn trajectories_repeat_exactly(seed in any::<u64>(), steps in 1usize..200) {
        let run = || {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let mut s = VehicleState::at_rest(Vector3::new(0.0, 0.0, 1.5), 0.0);
            let params = DynamicsParams::default();
            let mut out = Vec::new();
            for _ in 0..steps {
                let cmd = ActionCommand::new(
                    rng.random_range(-5.0..5.0),
                    rng.random_range(-5.0..5.0),
                    rng.random_range(-5.0..5.0),
                );
                s = step_dynamics(&s, &cmd, &params, 0.01);
                out.push(s);
            }
            out
        };
        prop_assert_eq!(run(), run());
    }

    #[test]
    fn attitude_stays_a_unit_quaternion(seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut s = VehicleState::at_rest(Vector3::zeros(), rng.random_range(-PI..PI));
        let params = DynamicsParams::default();
        for _ in 0..500 {
            let cmd = ActionCommand::new(
                rng.random_range(-5.0..5.0),
                rng.random_range(-5.0..5.0),
                rng.random_range(-5.0..5.0),
            );
            let next = step_dynamics(&s, &cmd, &params, 0.01);
            prop_assert!((next.q.quaternion().norm() - 1.0).abs() < 1e-9);
            s = next;
        }
    }

    #[test]
    fn aoi_is_never_negative(f_perc in 1u32..50, ratio in 1u32..6, lo in 0.0f64..0.1, width in 0.0f64..0.1, seed in any::<u64>()) {
        let cfg = ScheduleConfig {
            f_ctrl: (f_perc * ratio) as f64,
            f_perc: f_perc as f64,
            latency: LatencyModel::Uniform { lo, hi: lo + width },
            jitter_seed: seed,
        };
        let tl = run_timeline(&cfg, 2.0).unwrap();
        prop_assert!(tl.aoi.iter().all(|s| s.delta_t >= 0.0));
    }

    #[test]
    fn aoi_stays_inside_the_sawtooth_band(f_perc in 2u32..40, ratio in 1u32..8, lo in 0.0f64..0.1, width in 0.0f64..0.1, seed in any::<u64>()) {
        let hi = lo + width;
        let cfg = ScheduleConfig {
            f_ctrl: (f_perc * ratio) as f64,
            f_perc: f_perc as f64,
            latency: LatencyModel::Uniform { lo, hi },
            jitter_seed: seed,
        };
        let tl = run_timeline(&cfg, 3.0).unwrap();
        let warm = hi + 1.0 / cfg.f_perc;
        for s in tl.aoi.iter().filter(|s| s.t_ctrl >= warm) {
            prop_assert!(s.delta_t >= lo - 1e-9, "{s:?} below {lo}");
            prop_assert!(s.delta_t < hi + 1.0 / cfg.f_perc + 1e-9, "{s:?} above band");
        }
    }

    #[test]
    fn staleness_grows_one_period_per_tick(f_perc in 1u32..30, ratio in 2u32..10, lat in 0.0f64..0.2) {
        let cfg = ScheduleConfig {
            f_ctrl: (f_perc * ratio) as f64,
            f_perc: f_perc as f64,
            latency: LatencyModel::Constant { secs: lat },
            jitter_seed: 0,
        };
        let tl = run_timeline(&cfg, 2.0).unwrap();
        let step = 1.0 / cfg.f_ctrl;
        for w in tl.aoi.windows(2) {
            let grew = w[1].delta_t - w[0].delta_t;
            // A drop means a new frame arrived in between.
            if grew >= 0.0 {
                prop_assert!((grew - step).abs() < 1e-9, "{w:?}");
            }
        }
    }

    #[test]
    fn schedule_repeats_for_equal_seeds(seed in any::<u64>()) {
        let cfg = ScheduleConfig::asynchronous_default().with_seed(seed);
        prop_assert_eq!(run_timeline(&cfg, 1.0).unwrap(), run_timeline(&cfg, 1.0).unwrap());
    }

    #[test]
    fn encoding_depends_only_on_the_step(dt in 0.0f64..50.0) {
        let j = quantize(dt, 0.01);
        let snapped = encode(j as f64 * 0.01, 0.01).unwrap();
        let raw = encode(dt, 0.01).unwrap();
        prop_assert_eq!(snapped.phi, raw.phi);
    }

    #[test]
    fn encoding_pairs_lie_on_the_unit_circle(dt in 0.0f64..1e4, res in 1e-3f64..1.0) {
        let e = encode(dt, res).unwrap();
        let [a, b, c, d] = e.phi;
        prop_assert!((a * a + b * b - 1.0).abs() < 1e-12);
        prop_assert!((c * c + d * d - 1.0).abs() < 1e-12);
        prop_assert!(e.phi.iter().all(|v| (-1.0..=1.0).contains(v)));
    }

    #[test]
    fn corridor_penalties_are_non_positive(z in -10.0f64..10.0, r in -1.5f64..1.5, p in -1.5f64..1.5, y in -3.0f64..3.0) {
        let c = CorridorParams::default();
        let h = height_penalty(z, &c);
        prop_assert!(h <= 0.0);
        if (c.z_min..=c.z_max).contains(&z) {
            prop_assert_eq!(h, 0.0);
        }
        let q = UnitQuaternion::from_euler_angles(r, p, y);
        let a = attitude_penalty(&q, &c);
        prop_assert!(a <= 0.0);
        if r.abs() <= c.alpha_max - 1e-9 && p.abs() <= c.alpha_max - 1e-9 {
            prop_assert_eq!(a, 0.0);
        }
    }

    #[test]
    fn total_reward_is_linear_in_weights(
        t in prop::array::uniform4(-5.0f64..5.0),
        w1 in prop::array::uniform4(-2.0f64..2.0),
        w2 in prop::array::uniform4(-2.0f64..2.0),
        s in -3.0f64..3.0,
    ) {
        let terms = DenseTerms { r_static: t[0], r_velocity: t[1], r_height: t[2], r_attitude: t[3] };
        let weights = |w: [f64; 4]| RewardWeights {
            w_static: w[0], w_velocity: w[1], w_height: w[2], w_attitude: w[3],
            ..RewardWeights::default()
        };
        let mixed: [f64; 4] = std::array::from_fn(|k| w1[k] + s * w2[k]);
        let st = EpisodeStatus::Running;
        let lhs = total_reward(&terms, &weights(mixed), st).total;
        let rhs = total_reward(&terms, &weights(w1), st).total + s * total_reward(&terms, &weights(w2), st).total;
        prop_assert!((lhs - rhs).abs() < 1e-9);
    }
}

fn small_net() -> PolicyNet {
    let spec = PillarGridSpec::new(
        (-PI / 2.0, PI / 2.0),
        (PI / 4.0, 3.0 * PI / 4.0),
        PI / 12.0,
        PI / 8.0,
        6.0,
    )
    .unwrap();
    PolicyNet::new(PolicyConfig {
        conv_channels: vec![2, 3],
        feature_dim: 6,
        hidden: vec![8],
        ..PolicyConfig::for_grid(&spec)
    })
    .unwrap()
}

fn random_image<R: Rng>(spec: PillarGridSpec, rng: &mut R) -> PseudoImage {
    let values = (0..spec.cells())
        .map(|_| rng.random_range(0.0..=spec.r_max()))
        .collect();
    PseudoImage::from_values(spec, values).unwrap()
}

fn image_spec(net: &PolicyNet) -> PillarGridSpec {
    let c = net.config();
    PillarGridSpec::new(
        (-PI / 2.0, -PI / 2.0 + c.image_cols as f64 * PI / 12.0),
        (PI / 4.0, PI / 4.0 + c.image_rows as f64 * PI / 8.0),
        PI / 12.0,
        PI / 8.0,
        c.r_max,
    )
    .unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn shape_parameters_exceed_the_floor(seed in any::<u64>(), scale in 0.1f64..30.0) {
        let net = small_net();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut params = net.init_params(seed);
        params.values.iter_mut().for_each(|v| *v *= scale * rng.random_range(-1.0..1.0));
        let img = random_image(image_spec(&net), &mut rng);
        let proprio: [f64; PROPRIO_DIM] = std::array::from_fn(|_| rng.random_range(-50.0..50.0));
        let (bp, value) = net.forward(&params, &img, &proprio, &mut Tape::new()).unwrap();
        let eps = net.config().epsilon;
        prop_assert!(bp.alpha.iter().chain(&bp.beta).all(|&x| x > eps && x.is_finite()));
        prop_assert!(value.is_finite());
    }

    #[test]
    fn sampled_actions_have_finite_log_density(
        alpha in prop::array::uniform3(1.0f64..200.0),
        beta in prop::array::uniform3(1.0f64..200.0),
        seed in any::<u64>(),
    ) {
        let bp = BetaParams { alpha: alpha.to_vec(), beta: beta.to_vec() };
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        for _ in 0..20 {
            let s = sample_and_logprob(&bp, 5.0, &mut rng);
            prop_assert!(s.log_prob.is_finite());
            prop_assert!(s.u.iter().all(|u| (1e-6..=1.0 - 1e-6).contains(u)));
            prop_assert!(s.a.iter().all(|a| a.abs() <= 5.0));
        }
        let edges = [1e-6, 1.0 - 1e-6, 1e-6];
        prop_assert!(bp.log_prob(&edges).is_finite());
    }

    #[test]
    fn surrogate_clip_is_inactive_inside_the_band(ratio in 0.9f64..1.1, adv in -10.0f64..10.0) {
        prop_assert_eq!(clipped_surrogate(ratio, adv, 0.1), ratio * adv);
    }

    #[test]
    fn clipped_and_unclipped_losses_agree_near_the_old_policy(seed in any::<u64>()) {
        let net = small_net();
        let params = net.init_params(seed);
        let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x5eed);
        let spec = image_spec(&net);
        let images: Vec<Arc<PseudoImage>> = (0..3).map(|_| Arc::new(random_image(spec, &mut rng))).collect();
        let mut proprios = Vec::new();
        let mut us = Vec::new();
        let mut olds = Vec::new();
        for k in 0..12 {
            let proprio: [f64; PROPRIO_DIM] = std::array::from_fn(|_| rng.random_range(-1.0..1.0));
            let (bp, _) = net.forward(&params, &images[k % 3], &proprio, &mut Tape::new()).unwrap();
            let s = sample_and_logprob(&bp, 5.0, &mut rng);
            // Perturb the stored log-probability so ratios spread over [0.9, 1.1].
            olds.push(s.log_prob - rng.random_range(-0.09..0.09f64).ln_1p());
            proprios.push(proprio);
            us.push(s.u);
        }
        let batch: Vec<PpoSample> = (0..12)
            .map(|k| PpoSample {
                image: &images[k % 3],
                proprio: &proprios[k],
                u: &us[k],
                old_log_prob: olds[k],
                advantage: rng.random_range(-2.0..2.0),
                ret: rng.random_range(-2.0..2.0),
            })
            .collect();
        let cfg = PpoConfig { clip_ratio: 0.1, ..PpoConfig::default() };
        let mut g1 = vec![0.0; params.len()];
        let mut g2 = vec![0.0; params.len()];
        let a = loss_and_grad(&net, &params, &batch, &cfg, Objective::Clipped, Some(&mut g1)).unwrap();
        let b = loss_and_grad(&net, &params, &batch, &cfg, Objective::Unclipped, Some(&mut g2)).unwrap();
        prop_assert_eq!(a.loss, b.loss);
        prop_assert_eq!(g1, g2);
        prop_assert_eq!(a.clip_fraction, 0.0);
    }
}

#[test]
fn encoding_separates_every_step_within_one_period() {
    let codes: Vec<[f64; 4]> = (0..600)
        .map(|j| encode(j as f64 * 0.01, 0.01).unwrap().phi)
        .collect();
    let mut min = f64::INFINITY;
    for a in 0..codes.len() {
        for b in a + 1..codes.len() {
            let d: f64 = codes[a]
                .iter()
                .zip(&codes[b])
                .map(|(x, y)| (x - y).powi(2))
                .sum();
            min = min.min(d.sqrt());
        }
    }
    assert!(min > 0.0, "closest pair distance {min}");
}

/// Distance from `p` to the closest obstacle side or world boundary it could
/// have struck.
fn surface_gap(world: &asyncnav::world::ForestWorld, p: &Vector3<f64>) -> f64 {
    let b = &world.bounds;
    let mut gap = [
        p.z - b.z_min,
        b.z_max - p.z,
        p.x - b.area.min.x,
        b.area.max.x - p.x,
        p.y - b.area.min.y,
        b.area.max.y - p.y,
    ]
    .into_iter()
    .map(f64::abs)
    .fold(f64::INFINITY, f64::min);
    for ob in &world.obstacles {
        let d = ob.distance_to(&p.xy());
        let inside_height = p.z <= world.obstacle_height + 1e-9;
        if inside_height {
            gap = gap.min(d);
        }
    }
    gap
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn noiseless_returns_land_on_a_surface(seed in any::<u64>(), x in 0.0f64..18.0, y in -3.0f64..3.0, yaw in -PI..PI) {
        let cfg = ForestConfig { density: 0.3, ..ForestConfig::default() };
        let world = generate_forest(seed, &cfg).unwrap();
        let state = VehicleState::at_rest(Vector3::new(x, y, 1.5), yaw);
        let spec = PillarGridSpec::paper_default();
        let model = LidarModel::new(spec, 0.0);
        let cloud = raycast_lidar(&world, &state, &model, &mut ChaCha8Rng::seed_from_u64(0));
        for pt in &cloud.points {
            let hit = state.p + state.q * pt.to_cartesian();
            prop_assert!(surface_gap(&world, &hit) < 1e-9, "return {pt:?} is off every surface");
        }
    }

    #[test]
    fn noisy_returns_stay_near_the_true_range(seed in any::<u64>(), noise in 0.01f64..0.2) {
        let cfg = ForestConfig { density: 0.3, ..ForestConfig::default() };
        let world = generate_forest(seed, &cfg).unwrap();
        let state = VehicleState::at_rest(Vector3::new(5.0, 0.0, 1.5), 0.0);
        let spec = PillarGridSpec::paper_default();
        let exact = raycast_lidar(&world, &state, &LidarModel::new(spec, 0.0), &mut ChaCha8Rng::seed_from_u64(0));
        let noisy = raycast_lidar(&world, &state, &LidarModel::new(spec, noise), &mut ChaCha8Rng::seed_from_u64(seed));
        // Matching rays by direction: the noisy scan keeps the noiseless ray set
        // except where noise pushes a near-limit hit past r_max.
        for n in &noisy.points {
            let truth = exact.points.iter().find(|e| e.theta == n.theta && e.phi == n.phi);
            if let Some(e) = truth {
                prop_assert!(n.r <= e.r + 3.0 * noise);
            }
        }
    }
}

#[test]
fn empty_area_gives_no_obstacles() {
    let cfg = ForestConfig {
        density: 0.0,
        area: Rect::new(Vector2::new(0.0, -2.0), Vector2::new(10.0, 2.0)),
        inset: 1.0,
        ..ForestConfig::default()
    };
    assert!(generate_forest(3, &cfg).unwrap().obstacles.is_empty());
}
