//! Training loop, curriculum and evaluation-mode behaviour.

mod common;

use std::collections::BTreeSet;
use std::sync::Arc;

use asyncnav::harness::presets::toy_env;
use asyncnav::harness::{run_episode, run_modes, EvalSettings, ExperimentConfig, Mode, PolicySet};
use asyncnav::learn::{
    ppo_update, train, trained_policy, AdamW, NavEnv, PpoConfig, RolloutBuffer, Stage, Transition,
};
use asyncnav::pointcloud::PseudoImage;
use asyncnav::policy::{sample_and_logprob, PolicyConfig, PolicyNet, Tape, PROPRIO_DIM};
use asyncnav::schedule::{run_timeline, LatencyModel};
use asyncnav::temporal::{encode, TEMPORAL_DIM};
use asyncnav::world::EpisodeStatus;
use common::{cruise_policy, tiny_train};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

#[test]
fn ppo_solves_a_one_step_bandit() {
    let grid = asyncnav::harness::presets::toy_grid();
    let net = PolicyNet::new(PolicyConfig {
        conv_channels: vec![2],
        feature_dim: 4,
        hidden: vec![16],
        ..PolicyConfig::for_grid(&grid)
    })
    .unwrap();
    let mut params = net.init_params(1);
    let image = Arc::new(PseudoImage::empty(grid));
    let proprio = [0.1; PROPRIO_DIM];
    let target = [0.8, 0.3, 0.5];
    let cfg = PpoConfig {
        lr: 3e-3,
        minibatch: 64,
        ..PpoConfig::default()
    };
    let mut opt = AdamW::new(params.len(), cfg.lr, cfg.weight_decay);
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let mean_u = |params: &asyncnav::policy::PolicyParams| {
        let (bp, _) = net
            .forward(params, &image, &proprio, &mut Tape::new())
            .unwrap();
        bp.mean()
    };
    let start = mean_u(&params);
    for _ in 0..80 {
        let mut buf = RolloutBuffer::new(1, 128);
        let mut seg = Vec::new();
        for _ in 0..128 {
            let (bp, value) = net
                .forward(&params, &image, &proprio, &mut Tape::new())
                .unwrap();
            let s = sample_and_logprob(&bp, 1.0, &mut rng);
            let reward =
                -s.u.iter()
                    .zip(target)
                    .map(|(u, t)| (u - t).powi(2))
                    .sum::<f64>();
            seg.push(Transition {
                image: Arc::clone(&image),
                proprio,
                u: s.u,
                log_prob: s.log_prob,
                value,
                reward,
                ticks: 1,
                done: true,
                aoi: 0.0,
            });
        }
        buf.push_segment(0, seg, 0.0);
        buf.compute_gae(cfg.gamma, cfg.gae_lambda);
        ppo_update(&buf, &net, &mut params, &mut opt, &cfg, &mut rng).unwrap();
    }
    let end = mean_u(&params);
    for d in 0..2 {
        assert!(
            (end[d] - target[d]).abs() < (start[d] - target[d]).abs() / 3.0,
            "axis {d}: {} -> {} (target {})",
            start[d],
            end[d],
            target[d]
        );
    }
}

#[test]
fn curriculum_stages_see_the_right_ages() {
    let mut cfg = tiny_train(6);
    cfg.curriculum.max_sync_iters = 3;
    cfg.env.schedule.latency = LatencyModel::Constant { secs: 0.05 };
    // Every age a control tick can observe under this schedule.
    let timeline = run_timeline(&cfg.env.schedule, cfg.env.limits.time_limit + 1.0).unwrap();
    let allowed: BTreeSet<u64> = timeline
        .aoi
        .iter()
        .map(|s| (s.delta_t * 1e9).round() as u64)
        .collect();
    let mut stages = Vec::new();
    let outcome = train(&cfg, |m, buf, _| {
        stages.push(m.stage);
        let ages: Vec<f64> = buf.steps().iter().map(|t| t.aoi).collect();
        match m.stage {
            Stage::Synchronous => assert!(ages.iter().all(|&a| a == 0.0)),
            Stage::Asynchronous => {
                assert!(ages.iter().any(|&a| a > 0.0));
                for a in ages {
                    assert!(
                        allowed.contains(&((a * 1e9).round() as u64)),
                        "age {a} not on the timeline"
                    );
                }
            }
        }
    })
    .unwrap();
    assert_eq!(outcome.switched_after, Some(3));
    assert_eq!(stages[..3], [Stage::Synchronous; 3]);
    assert_eq!(stages[3..], [Stage::Asynchronous; 3]);
}

#[test]
fn single_stage_training_never_runs_synchronously() {
    let mut cfg = tiny_train(2);
    cfg.curriculum.two_stage = false;
    let outcome = train(&cfg, |m, _, _| assert_eq!(m.stage, Stage::Asynchronous)).unwrap();
    assert_eq!(outcome.switched_after, None);
}

#[test]
fn training_repeats_exactly_for_a_seed() {
    let cfg = tiny_train(3);
    let a = train(&cfg, |_, _, _| {}).unwrap();
    let b = train(&cfg, |_, _, _| {}).unwrap();
    assert_eq!(a.metrics, b.metrics);
    assert_eq!(a.checkpoint.params, b.checkpoint.params);
    let mut other = cfg.clone();
    other.seed += 1;
    let c = train(&other, |_, _, _| {}).unwrap();
    assert_ne!(a.checkpoint.params, c.checkpoint.params);
}

#[test]
fn ablated_observation_differs_only_in_the_time_slots() {
    let base = toy_env();
    let with = Arc::new(Mode::Proposed.env(&base));
    let without = Arc::new(Mode::NoTem.env(&base));
    let mut a = NavEnv::new(with, 11).unwrap();
    let mut b = NavEnv::new(without, 11).unwrap();
    let action = [1.5, 0.2, 0.0];
    let mut saw_stale = false;
    for _ in 0..60 {
        let (oa, ob) = (a.observe(), b.observe());
        assert_eq!(oa.aoi, ob.aoi);
        assert_eq!(oa.image.values(), ob.image.values());
        let tail = PROPRIO_DIM - TEMPORAL_DIM;
        assert_eq!(oa.proprio[..tail], ob.proprio[..tail]);
        assert_eq!(ob.proprio[tail..], [0.0; TEMPORAL_DIM]);
        let expected = encode(oa.aoi, base.temporal_resolution).unwrap();
        assert_eq!(oa.proprio[tail..], expected.phi);
        saw_stale |= oa.aoi > 0.0;
        let (ra, rb) = (a.step(&action).unwrap(), b.step(&action).unwrap());
        assert_eq!(ra.reward, rb.reward);
        if ra.status.is_terminal() {
            break;
        }
    }
    assert!(saw_stale);
}

/// Counts command changes inside the simulated window `[from, from + 1)`.
fn changes_per_second(mode: Mode, from: f64) -> usize {
    let mut base = toy_env();
    base.forest.density = 0.0;
    base.limits.time_limit = from + 2.0;
    let env = Arc::new(mode.env(&base));
    let net = PolicyNet::new(asyncnav::harness::presets::toy_train().policy).unwrap();
    let params = net.init_params(5);
    let rec = run_episode(&env, &net, &params, mode, 0, 17, true).unwrap();
    assert_eq!(
        rec.outcome,
        EpisodeStatus::TimedOut,
        "episode must outlast the window"
    );
    let eps = 1e-9;
    rec.steps
        .windows(2)
        .filter(|w| {
            w[1].t - env.schedule.control_period() >= from - eps
                && w[1].t - env.schedule.control_period() < from + 1.0 - eps
        })
        .filter(|w| w[0].action != w[1].action)
        .count()
}

#[test]
fn decision_rates_follow_the_mode() {
    let base = toy_env();
    let f_ctrl = base.schedule.f_ctrl as usize;
    let f_perc = base.schedule.f_perc as usize;
    assert!(f_perc < f_ctrl);
    for mode in Mode::ALL {
        let n = changes_per_second(mode, 1.0);
        match mode {
            Mode::SyncBaseline => assert_eq!(n, f_perc, "{mode}"),
            _ => assert_eq!(n, f_ctrl, "{mode}"),
        }
    }
}

#[test]
fn straight_cruise_clears_an_empty_course_in_every_mode() {
    let mut env = toy_env();
    env.forest.density = 0.0;
    let net = PolicyNet::new(asyncnav::harness::presets::toy_train().policy).unwrap();
    let params = cruise_policy(&net, 0.5);
    let mut policies = PolicySet::new();
    policies.insert(Mode::Proposed, net.clone(), params.clone());
    policies.insert(Mode::NoTem, net.clone(), params.clone());
    policies.insert(Mode::SyncBaseline, net, params);
    let exp = ExperimentConfig {
        mode: Mode::Proposed,
        env,
        checkpoint: None,
        eval: EvalSettings {
            trials: 20,
            seed: 4,
            ..EvalSettings::default()
        },
    };
    let (report, records) = run_modes(&exp, &Mode::ALL, &policies).unwrap();
    assert_eq!(records.len(), 80);
    for m in &report.modes {
        assert_eq!(m.successes, m.trials, "{}", m.mode);
        assert_eq!(m.success_rate, 1.0);
    }
}

#[test]
fn outcome_rates_partition_the_trials() {
    let cfg = tiny_train(2);
    let outcome = train(&cfg, |_, _, _| {}).unwrap();
    let (net, params) = trained_policy(&outcome).unwrap();
    let mut policies = PolicySet::new();
    policies.insert(Mode::Proposed, net.clone(), params.clone());
    policies.insert(Mode::NoTem, net.clone(), params.clone());
    policies.insert(Mode::SyncBaseline, net, params);
    let exp = ExperimentConfig {
        mode: Mode::Proposed,
        env: cfg.env.clone(),
        checkpoint: None,
        eval: EvalSettings {
            trials: 30,
            seed: 9,
            ..EvalSettings::default()
        },
    };
    let (report, records) = run_modes(&exp, &Mode::ALL, &policies).unwrap();
    for m in &report.modes {
        assert_eq!(
            m.successes + m.collisions + m.timeouts + m.out_of_bounds,
            m.trials
        );
        let total = m.success_rate + m.collision_rate + m.timeout_rate + m.out_of_bounds_rate;
        assert!((total - 1.0).abs() < 1e-12, "{}: {total}", m.mode);
    }
    // Paired seeds: episode k uses one seed in every mode.
    for k in 0..30 {
        let seeds: BTreeSet<u64> = records
            .iter()
            .filter(|r| r.episode == k)
            .map(|r| r.seed)
            .collect();
        assert_eq!(seeds.len(), 1);
    }
}
