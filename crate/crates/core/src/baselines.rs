//! Comparison policies: random, rule of thirds, greedy hill-climbing,
//! key-frame selection and behaviour cloning.
//!
//! Greedy and key-frame use simulator privileges (probing a move without
//! keeping it, teleporting back to a recorded pose); both show up in the
//! transcript.

use rand::seq::SliceRandom;
use rand::Rng as _;
use serde::{Deserialize, Serialize};

use crate::aesthetics::Scorer;
use crate::netcore::AdamState;
use crate::pomdp::{apply_action, draw_start, observe, Action, CaptureEnv, EnvError, EpisodeConfig, EpisodeTranscript, ResetMode, SceneContext};
use crate::policy::{PolicyArch, PolicyError, PolicyNet};
use crate::scene::FOV;
use crate::seed;

/// Pre-capture action budget of the greedy and key-frame policies.
pub const DEFAULT_BUDGET: usize = 16;
/// Alignment tolerance around a third line, in viewport units.
pub const THIRDS_TOLERANCE: f64 = 0.04;
/// Bearing error above which the thirds policy turns 30° instead of 10°.
pub const THIRDS_COARSE_DEG: f64 = 25.0;

/// Uniform over all nine actions until CAPTURE or the step limit.
pub fn random_policy(mut env: CaptureEnv<'_>, rng: &mut seed::Rng, zeta: u64) -> Result<EpisodeTranscript, EnvError> {
    while !env.is_done() {
        let a = *Action::ALL.choose(rng).expect("non-empty");
        env.step(a, zeta)?;
    }
    Ok(env.into_transcript())
}

/// One decision of the thirds policy from the salient object's viewport
/// column (`None` when nothing is visible).
pub fn thirds_action(salient_x: Option<f64>) -> Action {
    let Some(x) = salient_x else {
        return Action::TurnL90;
    };
    let (a, b) = (1.0 / 3.0, 2.0 / 3.0);
    if (x - a).abs() <= THIRDS_TOLERANCE || (x - b).abs() <= THIRDS_TOLERANCE {
        return Action::Capture;
    }
    // Equidistant (up to rounding) goes to the left third.
    let target = if (x - a).abs() <= (x - b).abs() + 1e-12 { a } else { b };
    let error_deg = (x - target).abs() * FOV.to_degrees();
    let coarse = error_deg > THIRDS_COARSE_DEG;
    // Turning right slides the scene left in the viewport.
    match (x > target, coarse) {
        (true, false) => Action::TurnR10,
        (true, true) => Action::TurnR30,
        (false, false) => Action::TurnL10,
        (false, true) => Action::TurnL30,
    }
}

pub fn rule_of_thirds_policy(mut env: CaptureEnv<'_>, zeta: u64) -> Result<EpisodeTranscript, EnvError> {
    while !env.is_done() {
        let view = &env.observation().view;
        let a = thirds_action(view.salient_present.then_some(view.salient_x));
        env.step(a, zeta)?;
    }
    Ok(env.into_transcript())
}

/// Probes all eight moves, keeps the best strictly improving one, and
/// captures when nothing improves or the probe budget runs out.
pub fn greedy_policy(mut env: CaptureEnv<'_>, budget: usize, zeta: u64) -> Result<EpisodeTranscript, EnvError> {
    let mut spent = 0;
    while !env.is_done() {
        if budget - spent < Action::MOVEMENTS.len() {
            env.step(Action::Capture, zeta)?;
            break;
        }
        let current = env.phi();
        let mut best: Option<(Action, f64)> = None;
        for a in Action::MOVEMENTS {
            let phi = env.probe(a)?;
            spent += 1;
            if phi > current && best.map_or(true, |(_, b)| phi > b) {
                best = Some((a, phi));
            }
        }
        match best {
            Some((a, _)) => {
                env.step_replay(a, zeta)?;
            }
            None => {
                env.step(Action::Capture, zeta)?;
            }
        }
    }
    Ok(env.into_transcript())
}

/// Random exploration for `budget` moves, then a free return to the best
/// pose seen (first on ties) and CAPTURE.
pub fn keyframe_policy(mut env: CaptureEnv<'_>, budget: usize, rng: &mut seed::Rng, zeta: u64) -> Result<EpisodeTranscript, EnvError> {
    let mut best = (env.pose(), env.phi());
    for _ in 0..budget.min(env.config().max_steps) {
        let a = *Action::MOVEMENTS.choose(rng).expect("non-empty");
        env.step(a, zeta)?;
        if env.phi() > best.1 {
            best = (env.pose(), env.phi());
        }
    }
    if env.pose() != best.0 {
        env.restore(best.0)?;
    }
    env.step(Action::Capture, zeta)?;
    Ok(env.into_transcript())
}

/// One demonstration: policy inputs and chosen action indices.
#[derive(Debug, Clone, PartialEq)]
pub struct Demonstration {
    pub scene_id: u64,
    pub features: Vec<Vec<f64>>,
    pub actions: Vec<usize>,
    pub final_phi: f64,
    pub tau: f64,
}

/// Hill-climbs from random starts with full knowledge of neighbouring
/// scores and keeps only runs whose photo beats the local threshold.
pub fn generate_demonstrations(
    pool: &[SceneContext],
    scorer: &Scorer,
    episode: &EpisodeConfig,
    count: usize,
    seed: u64,
) -> Result<Vec<Demonstration>, PolicyError> {
    if pool.is_empty() {
        return Err(PolicyError::NoScenes);
    }
    let mut rng = seed::rng(seed::split(seed, seed::stream::DEMOS));
    let mut demos = Vec::with_capacity(count);
    let max_attempts = count.saturating_mul(20).max(1);
    for _ in 0..max_attempts {
        if demos.len() >= count {
            break;
        }
        let ctx = &pool[rng.gen_range(0..pool.len())];
        let start = draw_start(ctx, scorer, episode, rng.gen(), ResetMode::Train);
        let mut pose = start.pose;
        let mut obs = observe(&ctx.scene, scorer, &pose);
        let mut features = Vec::new();
        let mut actions = Vec::new();
        while actions.len() < episode.max_steps {
            let mut best: Option<(Action, f64)> = None;
            for a in Action::MOVEMENTS {
                let (next, blocked) = apply_action(&ctx.scene, &pose, a);
                if blocked {
                    continue;
                }
                let phi = observe(&ctx.scene, scorer, &next).phi();
                if phi > obs.phi() && best.map_or(true, |(_, b)| phi > b) {
                    best = Some((a, phi));
                }
            }
            let Some((a, _)) = best else { break };
            features.push(obs.features().to_vec());
            actions.push(a.index());
            pose = apply_action(&ctx.scene, &pose, a).0;
            obs = observe(&ctx.scene, scorer, &pose);
        }
        features.push(obs.features().to_vec());
        actions.push(Action::Capture.index());
        if obs.phi() > start.threshold.tau {
            demos.push(Demonstration { scene_id: ctx.scene_id(), features, actions, final_phi: obs.phi(), tau: start.threshold.tau });
        }
    }
    if demos.is_empty() {
        return Err(PolicyError::NoDemonstrations);
    }
    Ok(demos)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ImitationConfig {
    pub demos: usize,
    pub epochs: usize,
    pub lr: f64,
    /// Per-epoch multiplicative learning-rate decay.
    pub lr_decay: f64,
    /// Demonstrations per Adam step.
    pub batch: usize,
    /// Fraction of demonstrations held out to measure cloning accuracy.
    pub validation_fraction: f64,
}

impl Default for ImitationConfig {
    fn default() -> Self {
        Self { demos: 2000, epochs: 50, lr: 1e-4, lr_decay: 0.95, batch: 16, validation_fraction: 0.1 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ImitationReport {
    pub train_loss: f64,
    pub train_accuracy: f64,
    pub validation_accuracy: f64,
}

/// Cross-entropy of one demonstration; accumulates gradients when given.
/// Returns (summed loss, correct argmax count).
fn demo_loss(net: &PolicyNet, demo: &Demonstration, scale: f64, grads: Option<&mut [f64]>) -> Result<(f64, usize), PolicyError> {
    let feature_set = net.arch().features;
    let mut state = net.zero_state();
    let mut fwds = Vec::with_capacity(demo.actions.len());
    for f in &demo.features {
        let fwd = net.forward_step(feature_set.select(f), &state)?;
        state = fwd.state.clone();
        fwds.push(fwd);
    }
    let mut loss = 0.0;
    let mut correct = 0;
    for (fwd, &a) in fwds.iter().zip(&demo.actions) {
        loss -= fwd.log_probs[a];
        correct += usize::from(crate::policy::argmax(&fwd.probs) == a);
    }
    if let Some(grads) = grads {
        let mut carry = None;
        for (fwd, &a) in fwds.iter().zip(&demo.actions).rev() {
            let dlogits: Vec<f64> = fwd.probs.iter().enumerate().map(|(j, p)| scale * (p - f64::from(u8::from(j == a)))).collect();
            carry = Some(net.backward_step(fwd, &dlogits, 0.0, carry.as_ref(), grads));
        }
    }
    Ok((loss, correct))
}

/// Behaviour cloning of the demonstrations onto the backbone and actor.
pub fn imitation_train(demos: &[Demonstration], cfg: &ImitationConfig, seed: u64) -> Result<(PolicyNet, ImitationReport), PolicyError> {
    if demos.is_empty() {
        return Err(PolicyError::NoDemonstrations);
    }
    let arch = PolicyArch { critic: false, ..Default::default() };
    let mut net = PolicyNet::init(arch, seed::split(seed, seed::stream::IMITATION));
    let mut rng = seed::rng(seed::split_path(seed, &[seed::stream::IMITATION, 1]));
    let mut order: Vec<usize> = (0..demos.len()).collect();
    order.shuffle(&mut rng);
    let n_val = if demos.len() > 1 { ((demos.len() as f64 * cfg.validation_fraction).round() as usize).min(demos.len() - 1) } else { 0 };
    let (val, train) = order.split_at(n_val);
    let mut train = train.to_vec();
    let mut adam = AdamState::new(net.params().len());
    let mut grads = vec![0.0; net.params().len()];
    let mut lr = cfg.lr;
    let mut report = ImitationReport { train_loss: f64::NAN, train_accuracy: f64::NAN, validation_accuracy: f64::NAN };
    for _ in 0..cfg.epochs {
        train.shuffle(&mut rng);
        let (mut loss, mut correct, mut steps) = (0.0, 0usize, 0usize);
        for batch in train.chunks(cfg.batch.max(1)) {
            let n: usize = batch.iter().map(|&i| demos[i].actions.len()).sum();
            grads.iter_mut().for_each(|g| *g = 0.0);
            for &i in batch {
                let (l, c) = demo_loss(&net, &demos[i], 1.0 / n as f64, Some(&mut grads))?;
                loss += l;
                correct += c;
            }
            steps += n;
            crate::netcore::adam_step(net.params_mut(), &grads, &mut adam, lr)?;
        }
        lr *= cfg.lr_decay;
        report.train_loss = loss / steps.max(1) as f64;
        report.train_accuracy = correct as f64 / steps.max(1) as f64;
    }
    if !val.is_empty() {
        let (mut correct, mut steps) = (0, 0);
        for &i in val {
            correct += demo_loss(&net, &demos[i], 0.0, None)?.1;
            steps += demos[i].actions.len();
        }
        report.validation_accuracy = correct as f64 / steps as f64;
    }
    Ok((net, report))
}

/// The cloned policy, acting greedily.
pub fn imitation_policy(env: CaptureEnv<'_>, net: &PolicyNet, zeta: u64) -> Result<EpisodeTranscript, PolicyError> {
    net.run_episode(env, zeta)
}
