use rand::seq::SliceRandom;

use super::{PolicyError, PolicyNet, PpoConfig, RolloutBuffer, StepData};
use crate::netcore::{adam_step, AdamState, RecurrentState};
use crate::seed;

/// Averages of the loss terms over one sequence.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct SequenceStats {
    pub policy_loss: f64,
    pub value_loss: f64,
    pub entropy: f64,
    pub clip_fraction: f64,
    pub total: f64,
}

/// Averages of [`SequenceStats`] over every minibatch of an update.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct PpoStats {
    pub policy_loss: f64,
    pub value_loss: f64,
    pub entropy: f64,
    pub clip_fraction: f64,
}

/// Rescales advantages to zero mean and unit variance across the buffer.
pub fn normalize_advantages(buffer: &mut RolloutBuffer) {
    let n = buffer.steps.len() as f64;
    let mean = buffer.steps.iter().map(|s| s.advantage).sum::<f64>() / n;
    let var = buffer.steps.iter().map(|s| (s.advantage - mean).powi(2)).sum::<f64>() / n;
    let std = var.sqrt().max(1e-8);
    for s in &mut buffer.steps {
        s.advantage = (s.advantage - mean) / std;
    }
}

/// Clipped-surrogate loss of a contiguous step sequence, unrolled from the
/// first step's stored state with the state reset after every episode end.
///
/// With `grads`, accumulates the exact gradient of `total` into it.
pub fn sequence_loss(net: &PolicyNet, steps: &[StepData], cfg: &PpoConfig, grads: Option<&mut [f64]>) -> Result<SequenceStats, PolicyError> {
    let n = steps.len() as f64;
    let mut fwds = Vec::with_capacity(steps.len());
    let mut state = steps[0].state.clone();
    for (i, s) in steps.iter().enumerate() {
        if i > 0 && steps[i - 1].done {
            state = net.zero_state();
        }
        let f = net.forward_step(&s.features, &state)?;
        state = f.state.clone();
        fwds.push(f);
    }

    let mut stats = SequenceStats::default();
    let mut dlogits = Vec::with_capacity(steps.len());
    let mut dvalues = Vec::with_capacity(steps.len());
    for (s, f) in steps.iter().zip(&fwds) {
        let ratio = (f.log_probs[s.action] - s.log_prob).exp();
        let clipped = ratio.clamp(1.0 - cfg.clip, 1.0 + cfg.clip);
        let unclipped_term = ratio * s.advantage;
        let clipped_term = clipped * s.advantage;
        let surrogate = unclipped_term.min(clipped_term);
        if (ratio - 1.0).abs() > cfg.clip {
            stats.clip_fraction += 1.0 / n;
        }
        let entropy: f64 = -f.probs.iter().zip(&f.log_probs).map(|(p, l)| p * l).sum::<f64>();
        let verr = f.value - s.ret;
        stats.policy_loss -= surrogate / n;
        stats.value_loss += verr * verr / n;
        stats.entropy += entropy / n;

        // d(-surrogate)/d logit_j = -A * ratio * (1[j=a] - p_j) while the
        // unclipped branch is active, zero otherwise.
        let dratio = if unclipped_term <= clipped_term { -s.advantage / n } else { 0.0 };
        let dl: Vec<f64> = f
            .probs
            .iter()
            .zip(&f.log_probs)
            .enumerate()
            .map(|(j, (p, l))| {
                let onehot = if j == s.action { 1.0 } else { 0.0 };
                let pg = dratio * ratio * (onehot - p);
                // dH/dz_j = -p_j (log p_j + H)
                let ent = -cfg.entropy_coeff / n * (-p * (l + entropy));
                pg + ent
            })
            .collect();
        dlogits.push(dl);
        dvalues.push(cfg.value_coeff * 2.0 * verr / n);
    }
    stats.total = stats.policy_loss + cfg.value_coeff * stats.value_loss - cfg.entropy_coeff * stats.entropy;
    if !stats.total.is_finite() {
        return Err(PolicyError::NonFinite("loss"));
    }

    if let Some(grads) = grads {
        let mut carry: Option<RecurrentState> = None;
        for i in (0..steps.len()).rev() {
            let dstate = net.backward_step(&fwds[i], &dlogits[i], dvalues[i], carry.as_ref(), grads);
            carry = if i > 0 && !steps[i - 1].done { Some(dstate) } else { None };
        }
    }
    Ok(stats)
}

fn clip_grad_norm(grads: &mut [f64], max_norm: f64) {
    if max_norm <= 0.0 {
        return;
    }
    let norm = grads.iter().map(|g| g * g).sum::<f64>().sqrt();
    if norm > max_norm {
        let s = max_norm / norm;
        grads.iter_mut().for_each(|g| *g *= s);
    }
}

/// Several epochs of clipped policy optimisation over a filled buffer.
///
/// Minibatches are contiguous `minibatch`-step chunks of one env stream,
/// shuffled per epoch.
pub fn ppo_update(
    net: &mut PolicyNet,
    adam: &mut AdamState,
    buffer: &mut RolloutBuffer,
    cfg: &PpoConfig,
    rng: &mut seed::Rng,
) -> Result<PpoStats, PolicyError> {
    if !buffer.advantages_ready {
        return Err(PolicyError::Config("advantages not computed".into()));
    }
    normalize_advantages(buffer);
    let mut chunks = Vec::new();
    for e in 0..buffer.n_envs {
        let base = e * buffer.horizon;
        let mut start = 0;
        while start < buffer.horizon {
            let end = (start + cfg.minibatch).min(buffer.horizon);
            chunks.push(base + start..base + end);
            start = end;
        }
    }
    let mut grads = vec![0.0; net.params().len()];
    let mut out = PpoStats::default();
    let mut count = 0.0;
    for _ in 0..cfg.epochs {
        chunks.shuffle(rng);
        for range in &chunks {
            grads.iter_mut().for_each(|g| *g = 0.0);
            let s = sequence_loss(net, &buffer.steps[range.clone()], cfg, Some(&mut grads))?;
            if !grads.iter().all(|g| g.is_finite()) {
                return Err(PolicyError::NonFinite("gradient"));
            }
            clip_grad_norm(&mut grads, cfg.max_grad_norm);
            adam_step(net.params_mut(), &grads, adam, cfg.lr)?;
            out.policy_loss += s.policy_loss;
            out.value_loss += s.value_loss;
            out.entropy += s.entropy;
            out.clip_fraction += s.clip_fraction;
            count += 1.0;
        }
    }
    if count > 0.0 {
        out.policy_loss /= count;
        out.value_loss /= count;
        out.entropy /= count;
        out.clip_fraction /= count;
    }
    Ok(out)
}
