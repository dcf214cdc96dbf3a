use rand::Rng as _;
use serde::{Deserialize, Serialize};

use super::{gae_advantages, ppo_update, ActMode, PolicyArch, PolicyError, PolicyNet, RolloutBuffer, StepData};
use crate::aesthetics::Scorer;
use crate::netcore::{AdamState, RecurrentState};
use crate::pomdp::{Action, CaptureEnv, EnvError, EpisodeConfig, ResetMode, SceneContext};
use crate::seed;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PpoConfig {
    pub gamma: f64,
    pub gae_lambda: f64,
    pub clip: f64,
    pub epochs: usize,
    /// Steps per minibatch; each minibatch is one contiguous sequence.
    pub minibatch: usize,
    pub lr: f64,
    pub entropy_coeff: f64,
    pub value_coeff: f64,
    pub horizon: usize,
    pub n_envs: usize,
    /// Episodes an env plays in one scene before drawing another.
    pub scene_switch_every: usize,
    pub total_steps: usize,
    /// Global gradient-norm cap; 0 disables clipping.
    pub max_grad_norm: f64,
}

impl Default for PpoConfig {
    fn default() -> Self {
        Self {
            gamma: 0.99,
            gae_lambda: 0.95,
            clip: 0.2,
            epochs: 4,
            minibatch: 64,
            lr: 3e-4,
            entropy_coeff: 0.01,
            value_coeff: 0.5,
            horizon: 128,
            n_envs: 8,
            scene_switch_every: 250,
            total_steps: 200_000,
            max_grad_norm: 0.5,
        }
    }
}

impl PpoConfig {
    pub fn validate(&self) -> Result<(), PolicyError> {
        let unit = |v: f64| (0.0..=1.0).contains(&v);
        if !unit(self.gamma) || !unit(self.gae_lambda) {
            return Err(PolicyError::Config("gamma and gae_lambda must lie in [0, 1]".into()));
        }
        if !(self.clip > 0.0) {
            return Err(PolicyError::Config("clip must be positive".into()));
        }
        if self.epochs == 0 || self.minibatch == 0 || self.horizon == 0 || self.n_envs == 0 || self.scene_switch_every == 0 {
            return Err(PolicyError::Config("epochs, minibatch, horizon, n_envs and scene_switch_every must be positive".into()));
        }
        if !(self.lr > 0.0) {
            return Err(PolicyError::Config("lr must be positive".into()));
        }
        Ok(())
    }

    /// Number of collect/update rounds that fit in `total_steps` (at least one).
    pub fn updates(&self) -> usize {
        (self.total_steps / (self.n_envs * self.horizon)).max(1)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EpisodeSummary {
    pub ret: f64,
    pub success: bool,
    pub len: usize,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Feedback {
    pub reward: f64,
    pub done: bool,
    /// Set when this step ended an episode.
    pub episode: Option<EpisodeSummary>,
}

/// An auto-resetting environment stream for rollout collection.
pub trait RolloutEnv {
    /// Full multilayer features of the current observation.
    fn features(&self) -> &[f64];
    fn step(&mut self, action: Action, zeta: u64) -> Result<Feedback, EnvError>;
}

/// A training stream over a scene pool, switching scenes every
/// `switch_every` episodes.
pub struct TrainingEnv<'a> {
    pool: &'a [SceneContext],
    scorer: &'a Scorer,
    config: &'a EpisodeConfig,
    switch_every: usize,
    rng: seed::Rng,
    scene: usize,
    episodes_in_scene: usize,
    env: CaptureEnv<'a>,
    ret: f64,
}

impl<'a> TrainingEnv<'a> {
    pub fn new(pool: &'a [SceneContext], scorer: &'a Scorer, config: &'a EpisodeConfig, switch_every: usize, seed: u64) -> Self {
        let mut rng = seed::rng(seed);
        let scene = rng.gen_range(0..pool.len());
        let env = CaptureEnv::reset(&pool[scene], scorer, config, rng.gen(), ResetMode::Train);
        Self { pool, scorer, config, switch_every, rng, scene, episodes_in_scene: 0, env, ret: 0.0 }
    }

    pub fn scene_index(&self) -> usize {
        self.scene
    }

    fn next_episode(&mut self) {
        self.episodes_in_scene += 1;
        if self.episodes_in_scene >= self.switch_every {
            self.scene = self.rng.gen_range(0..self.pool.len());
            self.episodes_in_scene = 0;
        }
        self.env = CaptureEnv::reset(&self.pool[self.scene], self.scorer, self.config, self.rng.gen(), ResetMode::Train);
        self.ret = 0.0;
    }
}

impl RolloutEnv for TrainingEnv<'_> {
    fn features(&self) -> &[f64] {
        self.env.observation().features()
    }

    fn step(&mut self, action: Action, zeta: u64) -> Result<Feedback, EnvError> {
        let out = self.env.step(action, zeta)?;
        self.ret += out.reward;
        let mut episode = None;
        if out.done {
            let tr = self.env.transcript();
            episode = Some(EpisodeSummary { ret: self.ret, success: tr.success(), len: tr.len() });
            self.next_episode();
        }
        Ok(Feedback { reward: out.reward, done: out.done, episode })
    }
}

/// Steps every env `horizon` times in lockstep with sampled actions.
///
/// `states` carry each env's recurrent state across calls and are zeroed at
/// episode ends; `zeta` advances once per env-step.
pub fn collect_rollouts<E: RolloutEnv>(
    envs: &mut [E],
    net: &PolicyNet,
    horizon: usize,
    states: &mut [RecurrentState],
    rngs: &mut [seed::Rng],
    zeta: &mut u64,
) -> Result<(RolloutBuffer, Vec<EpisodeSummary>), PolicyError> {
    let n = envs.len();
    let mut streams: Vec<Vec<StepData>> = (0..n).map(|_| Vec::with_capacity(horizon)).collect();
    let mut episodes = Vec::new();
    let feature_set = net.arch().features;
    for _ in 0..horizon {
        for e in 0..n {
            let features = feature_set.select(envs[e].features()).to_vec();
            let out = net.act(envs[e].features(), &states[e], ActMode::Sample, &mut rngs[e])?;
            let fb = envs[e].step(out.action, *zeta)?;
            *zeta += 1;
            streams[e].push(StepData {
                features,
                state: std::mem::replace(&mut states[e], if fb.done { net.zero_state() } else { out.state }),
                action: out.index,
                log_prob: out.log_prob,
                reward: fb.reward,
                value: out.value,
                done: fb.done,
                advantage: 0.0,
                ret: 0.0,
            });
            episodes.extend(fb.episode);
        }
    }
    let mut bootstrap = Vec::with_capacity(n);
    for e in 0..n {
        let input = feature_set.select(envs[e].features());
        bootstrap.push(net.forward_step(input, &states[e])?.value);
    }
    let buffer = RolloutBuffer { n_envs: n, horizon, steps: streams.concat(), bootstrap, advantages_ready: false };
    Ok((buffer, episodes))
}

pub const METRICS_HEADER: &str = "update,env_steps,mean_reward,capture_acc,mean_len,policy_loss,value_loss,entropy";

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MetricsRow {
    pub update: usize,
    pub env_steps: u64,
    /// Mean return of episodes finished in this round.
    pub mean_reward: f64,
    pub capture_acc: f64,
    pub mean_len: f64,
    pub policy_loss: f64,
    pub value_loss: f64,
    pub entropy: f64,
}

impl MetricsRow {
    pub fn csv_row(&self) -> String {
        format!(
            "{},{},{:.6},{:.6},{:.6},{:.6},{:.6},{:.6}",
            self.update,
            self.env_steps,
            self.mean_reward,
            self.capture_acc,
            self.mean_len,
            self.policy_loss,
            self.value_loss,
            self.entropy
        )
    }
}

#[derive(Debug, Clone)]
pub struct TrainOutput {
    pub net: PolicyNet,
    pub metrics: Vec<MetricsRow>,
    /// Env-steps taken, which is also the final exploration counter.
    pub zeta: u64,
}

/// Full training loop: collect, estimate advantages, update.
pub fn train(
    pool: &[SceneContext],
    scorer: &Scorer,
    ppo: &PpoConfig,
    episode: &EpisodeConfig,
    arch: PolicyArch,
    seed: u64,
    mut on_update: impl FnMut(&MetricsRow),
) -> Result<TrainOutput, PolicyError> {
    if pool.is_empty() {
        return Err(PolicyError::NoScenes);
    }
    if !arch.critic {
        return Err(PolicyError::Config("actor-critic training needs a critic head".into()));
    }
    ppo.validate()?;
    episode.validate()?;
    let mut net = PolicyNet::init(arch, seed);
    let mut adam = AdamState::new(net.params().len());
    let mut envs: Vec<TrainingEnv<'_>> = (0..ppo.n_envs)
        .map(|i| TrainingEnv::new(pool, scorer, episode, ppo.scene_switch_every, seed::split_path(seed, &[seed::stream::SCENE_DRAW, i as u64])))
        .collect();
    let mut states: Vec<RecurrentState> = (0..ppo.n_envs).map(|_| net.zero_state()).collect();
    let mut rngs: Vec<seed::Rng> =
        (0..ppo.n_envs).map(|i| seed::rng(seed::split_path(seed, &[seed::stream::POLICY_ACTIONS, i as u64]))).collect();
    let mut shuffle = seed::rng(seed::split(seed, seed::stream::PPO_SHUFFLE));
    let mut zeta = 0u64;
    let mut metrics = Vec::new();
    for update in 1..=ppo.updates() {
        let (mut buffer, episodes) = collect_rollouts(&mut envs, &net, ppo.horizon, &mut states, &mut rngs, &mut zeta)?;
        gae_advantages(&mut buffer, ppo.gamma, ppo.gae_lambda);
        let stats = ppo_update(&mut net, &mut adam, &mut buffer, ppo, &mut shuffle)?;
        let k = episodes.len() as f64;
        let row = MetricsRow {
            update,
            env_steps: zeta,
            mean_reward: episodes.iter().map(|e| e.ret).sum::<f64>() / k,
            capture_acc: episodes.iter().filter(|e| e.success).count() as f64 / k,
            mean_len: episodes.iter().map(|e| e.len as f64).sum::<f64>() / k,
            policy_loss: stats.policy_loss,
            value_loss: stats.value_loss,
            entropy: stats.entropy,
        };
        on_update(&row);
        metrics.push(row);
    }
    Ok(TrainOutput { net, metrics, zeta })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::aesthetics::FEATURE_DIM;
    use crate::policy::{sequence_loss, FeatureSet, PolicyArch};

    /// Emits reward `t` on its t-th step and ends an episode every 5 steps.
    struct Stub {
        t: usize,
        features: Vec<f64>,
    }

    impl RolloutEnv for Stub {
        fn features(&self) -> &[f64] {
            &self.features
        }

        fn step(&mut self, _action: Action, _zeta: u64) -> Result<Feedback, EnvError> {
            let reward = self.t as f64;
            self.t += 1;
            let done = self.t % 5 == 0;
            self.features[0] = self.t as f64 * 0.01;
            let episode = done.then_some(EpisodeSummary { ret: 0.0, success: false, len: 5 });
            Ok(Feedback { reward, done, episode })
        }
    }

    #[test]
    fn rollouts_follow_the_stub_schedule() {
        let net = PolicyNet::init(PolicyArch::default(), 1);
        let mut envs: Vec<Stub> = (0..3).map(|_| Stub { t: 0, features: vec![0.1; FEATURE_DIM] }).collect();
        let mut states = vec![net.zero_state(); 3];
        let mut rngs: Vec<seed::Rng> = (0..3).map(seed::rng).collect();
        let mut zeta = 10;
        let (buf, eps) = collect_rollouts(&mut envs, &net, 12, &mut states, &mut rngs, &mut zeta).unwrap();
        assert_eq!(buf.len(), 36);
        assert_eq!(zeta, 46);
        assert_eq!(eps.len(), 6);
        for e in 0..3 {
            for (t, s) in buf.env_steps(e).iter().enumerate() {
                assert_eq!(s.reward, t as f64);
                assert_eq!(s.done, (t + 1) % 5 == 0);
                if t > 0 && buf.env_steps(e)[t - 1].done {
                    assert!(s.state.is_zero());
                }
            }
        }
    }

    #[test]
    fn update_reproduces_rollout_log_probs() {
        // Episode ends fall inside chunks, so the replay must reset state exactly where the rollout did.
        for arch in [PolicyArch::default(), PolicyArch { recurrent: false, ..PolicyArch::default() }, PolicyArch { features: FeatureSet::LastLayer, ..PolicyArch::default() }] {
            let net = PolicyNet::init(arch, 5);
            let mut envs: Vec<Stub> = (0..2).map(|i| Stub { t: i, features: vec![0.3; FEATURE_DIM] }).collect();
            let mut states = vec![net.zero_state(); 2];
            let mut rngs: Vec<seed::Rng> = (0..2).map(seed::rng).collect();
            let mut zeta = 0;
            let (mut buf, _) = collect_rollouts(&mut envs, &net, 16, &mut states, &mut rngs, &mut zeta).unwrap();
            for s in &mut buf.steps {
                s.advantage = s.reward - 7.0;
            }
            for e in 0..2 {
                let steps = buf.env_steps(e);
                for chunk in [&steps[..16], &steps[3..11]] {
                    let st = sequence_loss(&net, chunk, &PpoConfig::default(), None).unwrap();
                    let mean_adv = chunk.iter().map(|s| s.advantage).sum::<f64>() / chunk.len() as f64;
                    assert_eq!(st.clip_fraction, 0.0);
                    assert!((st.policy_loss + mean_adv).abs() < 1e-9, "{arch:?}");
                }
            }
        }
    }

    #[test]
    fn config_validation() {
        assert!(PpoConfig::default().validate().is_ok());
        assert!(PpoConfig { gamma: 1.5, ..Default::default() }.validate().is_err());
        assert!(PpoConfig { clip: 0.0, ..Default::default() }.validate().is_err());
        assert_eq!(PpoConfig::default().updates(), 195);
    }
}
