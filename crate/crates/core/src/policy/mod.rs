//! Recurrent actor-critic over the scorer's hidden features.
//!
//! A shared backbone (dense 128 tanh, then an LSTM cell) feeds a softmax
//! actor head and a scalar critic head. All parameters live in one flat
//! vector so a single Adam state covers the whole network.

mod buffer;
mod ppo;
mod train;

pub use buffer::{gae_advantages, RolloutBuffer, StepData};
pub use ppo::{normalize_advantages, ppo_update, sequence_loss, PpoStats, SequenceStats};
pub use train::{
    collect_rollouts, train, EpisodeSummary, Feedback, MetricsRow, PpoConfig, RolloutEnv, TrainOutput, TrainingEnv,
    METRICS_HEADER,
};

use rand::Rng as _;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::aesthetics::{FEATURE_DIM, LAST_LAYER_DIM};
use crate::netcore::{self, Activation, Checkpoint, LayerSpec, NetError, NetSpec, ParamVector, RecurrentState, Tape};
use crate::pomdp::{Action, ActionSet, CaptureEnv, EnvError, EpisodeTranscript};
use crate::seed;

pub const HIDDEN: usize = 128;
pub const BACKBONE_NET: &str = "backbone";
pub const ACTOR_NET: &str = "actor";
pub const CRITIC_NET: &str = "critic";
/// Scale applied to the initial actor weights so training starts near uniform.
const ACTOR_INIT_SCALE: f64 = 0.01;

#[derive(Debug, Error)]
pub enum PolicyError {
    #[error(transparent)]
    Net(#[from] NetError),
    #[error(transparent)]
    Env(#[from] EnvError),
    #[error("non-finite {0} during update")]
    NonFinite(&'static str),
    #[error("invalid policy config: {0}")]
    Config(String),
    #[error("policy checkpoint: {0}")]
    Checkpoint(String),
    #[error("no training scenes")]
    NoScenes,
    #[error("no demonstrations survived filtering")]
    NoDemonstrations,
}

/// Which scorer activations the policy reads.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FeatureSet {
    /// All three hidden layers (160 values).
    #[default]
    Multilayer,
    /// Only the last hidden layer (32 values).
    LastLayer,
}

impl FeatureSet {
    pub fn dim(self) -> usize {
        match self {
            FeatureSet::Multilayer => FEATURE_DIM,
            FeatureSet::LastLayer => LAST_LAYER_DIM,
        }
    }

    /// Picks this set out of the full multilayer vector.
    pub fn select(self, features: &[f64]) -> &[f64] {
        match self {
            FeatureSet::Multilayer => features,
            FeatureSet::LastLayer => &features[features.len() - LAST_LAYER_DIM..],
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PolicyArch {
    pub features: FeatureSet,
    /// LSTM cell after the first dense layer; a dense tanh layer of the same
    /// width otherwise.
    pub recurrent: bool,
    pub action_set: ActionSet,
    pub critic: bool,
}

impl Default for PolicyArch {
    fn default() -> Self {
        Self { features: FeatureSet::Multilayer, recurrent: true, action_set: ActionSet::Full, critic: true }
    }
}

impl PolicyArch {
    pub fn backbone_spec(&self) -> NetSpec {
        let first = LayerSpec::Dense { input: self.features.dim(), output: HIDDEN, activation: Activation::Tanh };
        let second = if self.recurrent {
            LayerSpec::LstmCell { input: HIDDEN, hidden: HIDDEN }
        } else {
            LayerSpec::Dense { input: HIDDEN, output: HIDDEN, activation: Activation::Tanh }
        };
        NetSpec::new(vec![first, second]).expect("static backbone spec")
    }

    pub fn actor_spec(&self) -> NetSpec {
        NetSpec::mlp(&[HIDDEN, self.action_set.len()], Activation::Identity, Activation::Identity).expect("static actor spec")
    }

    pub fn critic_spec(&self) -> NetSpec {
        NetSpec::mlp(&[HIDDEN, 1], Activation::Identity, Activation::Identity).expect("static critic spec")
    }

    pub fn n_actions(&self) -> usize {
        self.action_set.len()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ActMode {
    Sample,
    Greedy,
}

/// One forward step with everything needed to backpropagate through it.
pub struct StepForward<'a> {
    backbone: Tape<'a>,
    actor: Tape<'a>,
    critic: Option<Tape<'a>>,
    pub probs: Vec<f64>,
    pub log_probs: Vec<f64>,
    pub value: f64,
    pub state: RecurrentState,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ActOutput {
    /// Index into the architecture's action set.
    pub index: usize,
    pub action: Action,
    pub log_prob: f64,
    pub value: f64,
    pub state: RecurrentState,
}

/// Policy parameters: backbone, actor and optional critic in one vector.
#[derive(Debug, Clone, PartialEq)]
pub struct PolicyNet {
    arch: PolicyArch,
    backbone: NetSpec,
    actor: NetSpec,
    critic: Option<NetSpec>,
    params: Vec<f64>,
    /// Ends of the backbone and actor blocks in `params`.
    split: [usize; 2],
}

pub fn softmax_with_log(logits: &[f64]) -> (Vec<f64>, Vec<f64>) {
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let sum: f64 = logits.iter().map(|z| (z - max).exp()).sum();
    let log_norm = max + sum.ln();
    let log_probs: Vec<f64> = logits.iter().map(|z| z - log_norm).collect();
    (log_probs.iter().map(|l| l.exp()).collect(), log_probs)
}

impl PolicyNet {
    fn assemble(arch: PolicyArch, params: Vec<f64>) -> Result<Self, PolicyError> {
        let backbone = arch.backbone_spec();
        let actor = arch.actor_spec();
        let critic = arch.critic.then(|| arch.critic_spec());
        let split = [backbone.param_count(), backbone.param_count() + actor.param_count()];
        let total = split[1] + critic.as_ref().map_or(0, NetSpec::param_count);
        if params.len() != total {
            return Err(PolicyError::Checkpoint(format!("{} parameters, architecture needs {total}", params.len())));
        }
        Ok(Self { arch, backbone, actor, critic, params, split })
    }

    pub fn zeros(arch: PolicyArch) -> Self {
        let n = Self::param_len(&arch);
        Self::assemble(arch, vec![0.0; n]).expect("sized by construction")
    }

    pub fn param_len(arch: &PolicyArch) -> usize {
        arch.backbone_spec().param_count()
            + arch.actor_spec().param_count()
            + if arch.critic { arch.critic_spec().param_count() } else { 0 }
    }

    pub fn init(arch: PolicyArch, seed: u64) -> Self {
        let mut rng = seed::rng(seed::split(seed, seed::stream::POLICY_INIT));
        let mut params = ParamVector::init(&arch.backbone_spec(), &mut rng).into_vec();
        let actor = ParamVector::init(&arch.actor_spec(), &mut rng).into_vec();
        params.extend(actor.into_iter().map(|w| w * ACTOR_INIT_SCALE));
        if arch.critic {
            params.extend(ParamVector::init(&arch.critic_spec(), &mut rng).into_vec());
        }
        Self::assemble(arch, params).expect("sized by construction")
    }

    pub fn from_params(arch: PolicyArch, params: Vec<f64>) -> Result<Self, PolicyError> {
        Self::assemble(arch, params)
    }

    pub fn arch(&self) -> &PolicyArch {
        &self.arch
    }

    pub fn params(&self) -> &[f64] {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut [f64] {
        &mut self.params
    }

    pub fn zero_state(&self) -> RecurrentState {
        self.backbone.zero_state()
    }

    fn blocks(&self) -> (&[f64], &[f64], &[f64]) {
        let (b, rest) = self.params.split_at(self.split[0]);
        let (a, c) = rest.split_at(self.split[1] - self.split[0]);
        (b, a, c)
    }

    /// Splits a gradient buffer the same way as the parameters.
    pub(crate) fn grad_blocks<'g>(&self, grads: &'g mut [f64]) -> (&'g mut [f64], &'g mut [f64], &'g mut [f64]) {
        let (b, rest) = grads.split_at_mut(self.split[0]);
        let (a, c) = rest.split_at_mut(self.split[1] - self.split[0]);
        (b, a, c)
    }

    /// Forward pass on the policy's own input slice.
    pub fn forward_step(&self, input: &[f64], state: &RecurrentState) -> Result<StepForward<'_>, PolicyError> {
        let (bp, ap, cp) = self.blocks();
        let (h, state, backbone) = netcore::forward(&self.backbone, bp, input, state)?;
        let (logits, _, actor) = netcore::forward(&self.actor, ap, &h, &RecurrentState::zeros(0))?;
        let (value, critic) = match &self.critic {
            Some(spec) => {
                let (v, _, tape) = netcore::forward(spec, cp, &h, &RecurrentState::zeros(0))?;
                (v[0], Some(tape))
            }
            None => (0.0, None),
        };
        let (probs, log_probs) = softmax_with_log(&logits);
        if !probs.iter().all(|p| p.is_finite()) {
            return Err(PolicyError::NonFinite("action distribution"));
        }
        Ok(StepForward { backbone, actor, critic, probs, log_probs, value, state })
    }

    /// Backpropagates logit and value gradients through one step.
    /// Returns the gradient w.r.t. the incoming recurrent state.
    pub(crate) fn backward_step(
        &self,
        fwd: &StepForward<'_>,
        dlogits: &[f64],
        dvalue: f64,
        next_state_grad: Option<&RecurrentState>,
        grads: &mut [f64],
    ) -> RecurrentState {
        let (gb, ga, gc) = self.grad_blocks(grads);
        let (mut dh, _) = fwd.actor.backward_accumulate(dlogits, None, ga);
        if let Some(critic) = &fwd.critic {
            let (dhc, _) = critic.backward_accumulate(&[dvalue], None, gc);
            for (a, b) in dh.iter_mut().zip(dhc) {
                *a += b;
            }
        }
        fwd.backbone.backward_accumulate(&dh, next_state_grad, gb).1
    }

    /// Chooses an action for the full multilayer feature vector.
    pub fn act(&self, features: &[f64], state: &RecurrentState, mode: ActMode, rng: &mut seed::Rng) -> Result<ActOutput, PolicyError> {
        let input = self.arch.features.select(features);
        if !input.iter().all(|x| x.is_finite()) {
            return Err(PolicyError::NonFinite("features"));
        }
        let fwd = self.forward_step(input, state)?;
        let index = match mode {
            ActMode::Greedy => argmax(&fwd.probs),
            ActMode::Sample => sample_categorical(&fwd.probs, rng.gen::<f64>()),
        };
        Ok(ActOutput {
            index,
            action: self.arch.action_set.actions()[index],
            log_prob: fwd.log_probs[index],
            value: fwd.value,
            state: fwd.state,
        })
    }

    /// Runs one episode greedily; `zeta` is the frozen exploration counter.
    pub fn run_episode(&self, mut env: CaptureEnv<'_>, zeta: u64) -> Result<EpisodeTranscript, PolicyError> {
        let mut state = self.zero_state();
        let mut rng = seed::rng(0);
        while !env.is_done() {
            let out = self.act(env.observation().features(), &state, ActMode::Greedy, &mut rng)?;
            state = out.state;
            env.step(out.action, zeta)?;
        }
        Ok(env.into_transcript())
    }

    pub fn to_checkpoint(&self, meta: serde_json::Value) -> Checkpoint {
        let (b, a, c) = self.blocks();
        let vec = |spec: &NetSpec, v: &[f64]| ParamVector::from_vec(spec, v.to_vec()).expect("block sized by spec");
        let mut nets = vec![
            (BACKBONE_NET.to_string(), self.backbone.clone(), vec(&self.backbone, b)),
            (ACTOR_NET.to_string(), self.actor.clone(), vec(&self.actor, a)),
        ];
        if let Some(spec) = &self.critic {
            nets.push((CRITIC_NET.to_string(), spec.clone(), vec(spec, c)));
        }
        let mut meta = meta;
        if let serde_json::Value::Object(m) = &mut meta {
            m.insert("arch".into(), serde_json::to_value(self.arch).expect("arch serializes"));
        }
        Checkpoint { meta, nets }
    }

    pub fn from_checkpoint(ckpt: &Checkpoint) -> Result<Self, PolicyError> {
        let arch: PolicyArch = ckpt
            .meta
            .get("arch")
            .cloned()
            .ok_or_else(|| PolicyError::Checkpoint("missing \"arch\" in checkpoint meta".into()))
            .and_then(|v| serde_json::from_value(v).map_err(|e| PolicyError::Checkpoint(e.to_string())))?;
        let mut params = Vec::with_capacity(Self::param_len(&arch));
        let mut wanted = vec![(BACKBONE_NET, arch.backbone_spec()), (ACTOR_NET, arch.actor_spec())];
        if arch.critic {
            wanted.push((CRITIC_NET, arch.critic_spec()));
        }
        for (name, spec) in wanted {
            let (s, p) = ckpt.net(name).ok_or_else(|| PolicyError::Checkpoint(format!("missing network {name:?}")))?;
            if *s != spec {
                return Err(PolicyError::Checkpoint(format!("network {name:?} does not match the recorded architecture")));
            }
            params.extend_from_slice(p);
        }
        Self::assemble(arch, params)
    }
}

pub fn argmax(values: &[f64]) -> usize {
    let mut best = 0;
    for (i, v) in values.iter().enumerate() {
        if *v > values[best] {
            best = i;
        }
    }
    best
}

/// Inverse-CDF draw from `probs` with a uniform `u` in [0, 1).
pub fn sample_categorical(probs: &[f64], u: f64) -> usize {
    let mut acc = 0.0;
    for (i, p) in probs.iter().enumerate() {
        acc += p;
        if u < acc {
            return i;
        }
    }
    probs.len() - 1
}
