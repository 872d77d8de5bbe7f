use std::sync::Arc;

use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::buffer::{RolloutBuffer, Transition};
use super::env::{EnvConfig, EnvObservation, NavEnv};
use crate::error::Result;
use crate::pointcloud::PseudoImage;
use crate::policy::{
    mean_action, sample_and_logprob, ActionSample, BetaParams, PolicyNet, PolicyParams,
};
use crate::world::EpisodeStatus;

/// Policy evaluation with a one-frame feature cache: consecutive decisions
/// on the same frame reuse its perception feature.
pub struct Agent<'a> {
    pub net: &'a PolicyNet,
    pub params: &'a PolicyParams,
    cache: Option<(Arc<PseudoImage>, Vec<f64>)>,
}

impl<'a> Agent<'a> {
    pub fn new(net: &'a PolicyNet, params: &'a PolicyParams) -> Self {
        Self {
            net,
            params,
            cache: None,
        }
    }

    pub fn evaluate(&mut self, obs: &EnvObservation) -> Result<(BetaParams, f64)> {
        let hit = matches!(&self.cache, Some((img, _)) if Arc::ptr_eq(img, &obs.image));
        if !hit {
            let z = self.net.encode_perception(self.params, &obs.image)?;
            self.cache = Some((Arc::clone(&obs.image), z));
        }
        let z = &self.cache.as_ref().expect("cache filled above").1;
        self.net.heads(self.params, z, &obs.proprio)
    }

    pub fn act<R: Rng + ?Sized>(
        &mut self,
        obs: &EnvObservation,
        stochastic: bool,
        rng: &mut R,
    ) -> Result<(ActionSample, f64)> {
        let (bp, value) = self.evaluate(obs)?;
        let v_max = self.net.config().v_max;
        let sample = if stochastic {
            sample_and_logprob(&bp, v_max, rng)
        } else {
            mean_action(&bp, v_max)
        };
        Ok((sample, value))
    }
}

/// Summary of a finished training episode.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EpisodeSummary {
    pub ret: f64,
    pub status: EpisodeStatus,
    pub ticks: u32,
    pub mean_aoi: f64,
}

/// One environment slot that restarts episodes as they end.
pub struct Worker {
    cfg: Arc<EnvConfig>,
    env: NavEnv,
    seeds: ChaCha8Rng,
    actions: ChaCha8Rng,
    ret: f64,
    ticks: u32,
    aoi_sum: f64,
    decisions: u32,
}

impl Worker {
    pub fn new(cfg: Arc<EnvConfig>, seed: u64) -> Result<Self> {
        let mut seeds = ChaCha8Rng::seed_from_u64(seed);
        let actions = ChaCha8Rng::seed_from_u64(seeds.next_u64());
        let env = NavEnv::new(Arc::clone(&cfg), seeds.next_u64())?;
        Ok(Self {
            cfg,
            env,
            seeds,
            actions,
            ret: 0.0,
            ticks: 0,
            aoi_sum: 0.0,
            decisions: 0,
        })
    }

    /// Swaps in a new environment configuration; the current episode is
    /// abandoned.
    pub fn reconfigure(&mut self, cfg: Arc<EnvConfig>) -> Result<()> {
        self.cfg = cfg;
        self.restart()
    }

    fn restart(&mut self) -> Result<()> {
        self.env = NavEnv::new(Arc::clone(&self.cfg), self.seeds.next_u64())?;
        self.ret = 0.0;
        self.ticks = 0;
        self.aoi_sum = 0.0;
        self.decisions = 0;
        Ok(())
    }

    /// Collects `horizon` decisions. Returns the transitions, the bootstrap
    /// value of the state after the last one, and any finished episodes.
    pub fn collect(
        &mut self,
        agent: &mut Agent,
        horizon: usize,
        gamma: f64,
    ) -> Result<(Vec<Transition>, f64, Vec<EpisodeSummary>)> {
        let mut out = Vec::with_capacity(horizon);
        let mut finished = Vec::new();
        for _ in 0..horizon {
            let obs = self.env.observe();
            let (sample, value) = agent.act(&obs, true, &mut self.actions)?;
            let mut reward = 0.0;
            let mut disc = 1.0;
            let mut ticks = 0u32;
            let status = loop {
                let step = self.env.step(&sample.a)?;
                self.ret += step.reward.total;
                reward += disc * step.reward.total;
                disc *= gamma;
                ticks += 1;
                if step.status.is_terminal() || self.env.decision_due() {
                    break step.status;
                }
            };
            if status == EpisodeStatus::TimedOut {
                // truncated, not terminal: bootstrap from the final state
                let (_, v_last) = agent.evaluate(&self.env.observe())?;
                reward += disc * v_last;
            }
            self.ticks += ticks;
            self.aoi_sum += obs.aoi;
            self.decisions += 1;
            out.push(Transition {
                image: obs.image,
                proprio: obs.proprio,
                u: sample.u,
                log_prob: sample.log_prob,
                value,
                reward,
                ticks,
                done: status.is_terminal(),
                aoi: obs.aoi,
            });
            if status.is_terminal() {
                finished.push(EpisodeSummary {
                    ret: self.ret,
                    status,
                    ticks: self.ticks,
                    mean_aoi: self.aoi_sum / self.decisions as f64,
                });
                self.restart()?;
            }
        }
        let (_, last_value) = agent.evaluate(&self.env.observe())?;
        Ok((out, last_value, finished))
    }
}

/// Fills a buffer from every worker in index order.
pub fn collect_rollouts(
    workers: &mut [Worker],
    net: &PolicyNet,
    params: &PolicyParams,
    horizon: usize,
    gamma: f64,
) -> Result<(RolloutBuffer, Vec<EpisodeSummary>)> {
    let mut buffer = RolloutBuffer::new(workers.len(), horizon);
    let mut episodes = Vec::new();
    for (k, w) in workers.iter_mut().enumerate() {
        let mut agent = Agent::new(net, params);
        let (seg, last, done) = w.collect(&mut agent, horizon, gamma)?;
        buffer.push_segment(k, seg, last);
        episodes.extend(done);
    }
    Ok((buffer, episodes))
}
