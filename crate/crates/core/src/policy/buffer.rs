use crate::netcore::RecurrentState;

/// One environment step as seen by the learner.
#[derive(Debug, Clone, PartialEq)]
pub struct StepData {
    /// Policy input (already reduced to the architecture's feature set).
    pub features: Vec<f64>,
    /// Recurrent state the step was taken from.
    pub state: RecurrentState,
    /// Index into the architecture's action set.
    pub action: usize,
    pub log_prob: f64,
    pub reward: f64,
    pub value: f64,
    pub done: bool,
    pub advantage: f64,
    pub ret: f64,
}

/// `n_envs` streams of `horizon` steps each, stored env-major.
#[derive(Debug, Clone, PartialEq)]
pub struct RolloutBuffer {
    pub n_envs: usize,
    pub horizon: usize,
    pub steps: Vec<StepData>,
    /// Critic value of each env's state after the last stored step.
    pub bootstrap: Vec<f64>,
    pub advantages_ready: bool,
}

impl RolloutBuffer {
    pub fn len(&self) -> usize {
        self.steps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.steps.is_empty()
    }

    pub fn env_steps(&self, env: usize) -> &[StepData] {
        &self.steps[env * self.horizon..(env + 1) * self.horizon]
    }
}

/// Generalized advantage estimation per env stream, cutting the
/// bootstrap at episode ends.
pub fn gae_advantages(buffer: &mut RolloutBuffer, gamma: f64, lambda: f64) {
    let h = buffer.horizon;
    for e in 0..buffer.n_envs {
        let steps = &mut buffer.steps[e * h..(e + 1) * h];
        let mut gae = 0.0;
        for t in (0..h).rev() {
            let next_value = if t + 1 < h { steps[t + 1].value } else { buffer.bootstrap[e] };
            let live = if steps[t].done { 0.0 } else { 1.0 };
            let delta = steps[t].reward + gamma * live * next_value - steps[t].value;
            gae = delta + gamma * lambda * live * gae;
            steps[t].advantage = gae;
            steps[t].ret = gae + steps[t].value;
        }
    }
    buffer.advantages_ready = true;
}
