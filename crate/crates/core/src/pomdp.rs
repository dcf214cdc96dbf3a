//! The capture environment.
//!
//! An episode starts at a random pose, the agent moves and turns in discrete
//! steps, and ends by taking a photo. The photo succeeds when its learned
//! score beats a threshold fitted to views near the start position.

use std::fmt;
use std::io::{BufRead, BufReader, Read, Write};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::aesthetics::{ScoredView, Scorer, ViewScorer};
use crate::scene::{quantize_position, random_pose, render_view, sample_views, Pose, SceneSpec, ViewObservation};
use crate::seed;

/// Translation per FORWARD/BACKWARD step, metres.
pub const STEP_SIZE: f64 = 0.25;
pub const EPISODE_FORMAT: &str = "autophoto-episode/1";
/// Maximum start redraws when rejecting poor initial views.
pub const MAX_START_REDRAWS: usize = 100;

#[derive(Debug, Error)]
pub enum EnvError {
    #[error("episode already terminated")]
    Terminated,
    #[error("invalid episode config: {0}")]
    Config(String),
    #[error("malformed transcript: {0}")]
    Transcript(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum Action {
    Forward,
    Backward,
    TurnL10,
    TurnL30,
    TurnL90,
    TurnR10,
    TurnR30,
    TurnR90,
    Capture,
}

impl Action {
    pub const ALL: [Action; 9] = [
        Action::Forward,
        Action::Backward,
        Action::TurnL10,
        Action::TurnL30,
        Action::TurnL90,
        Action::TurnR10,
        Action::TurnR30,
        Action::TurnR90,
        Action::Capture,
    ];
    pub const MOVEMENTS: [Action; 8] = [
        Action::Forward,
        Action::Backward,
        Action::TurnL10,
        Action::TurnL30,
        Action::TurnL90,
        Action::TurnR10,
        Action::TurnR30,
        Action::TurnR90,
    ];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn from_index(i: usize) -> Option<Self> {
        Self::ALL.get(i).copied()
    }

    pub fn is_movement(self) -> bool {
        self != Action::Capture
    }

    /// Signed turn in degrees; positive turns left.
    pub fn turn_degrees(self) -> Option<f64> {
        match self {
            Action::TurnL10 => Some(10.0),
            Action::TurnL30 => Some(30.0),
            Action::TurnL90 => Some(90.0),
            Action::TurnR10 => Some(-10.0),
            Action::TurnR30 => Some(-30.0),
            Action::TurnR90 => Some(-90.0),
            _ => None,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Action::Forward => "FORWARD",
            Action::Backward => "BACKWARD",
            Action::TurnL10 => "TURN_L10",
            Action::TurnL30 => "TURN_L30",
            Action::TurnL90 => "TURN_L90",
            Action::TurnR10 => "TURN_R10",
            Action::TurnR30 => "TURN_R30",
            Action::TurnR90 => "TURN_R90",
            Action::Capture => "CAPTURE",
        }
    }
}

impl fmt::Display for Action {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// Which actions a policy may choose from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ActionSet {
    #[default]
    Full,
    /// Only 30° turns remain.
    ThirtyDegreeTurnsOnly,
}

impl ActionSet {
    pub fn actions(self) -> &'static [Action] {
        const COARSE: [Action; 5] = [Action::Forward, Action::Backward, Action::TurnL30, Action::TurnR30, Action::Capture];
        match self {
            ActionSet::Full => &Action::ALL,
            ActionSet::ThirtyDegreeTurnsOnly => &COARSE,
        }
    }

    pub fn len(self) -> usize {
        self.actions().len()
    }

    pub fn is_empty(self) -> bool {
        false
    }
}

/// Pose after `action`, and whether a translation was blocked.
/// Blocked translations and CAPTURE leave the pose unchanged.
pub fn apply_action(scene: &SceneSpec, pose: &Pose, action: Action) -> (Pose, bool) {
    if let Some(deg) = action.turn_degrees() {
        return (Pose::new(pose.x, pose.y, pose.theta + deg.to_radians()), false);
    }
    let sign = match action {
        Action::Forward => 1.0,
        Action::Backward => -1.0,
        _ => return (*pose, false),
    };
    let dx = quantize_position(STEP_SIZE * pose.theta.cos());
    let dy = quantize_position(STEP_SIZE * pose.theta.sin());
    let next = Pose { x: pose.x + sign * dx, y: pose.y + sign * dy, theta: pose.theta };
    if scene.is_navigable(&next) {
        (next, false)
    } else {
        (*pose, true)
    }
}

/// Reward terms that can be switched off for ablations.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RewardTerms {
    pub score_diff: bool,
    pub exploration: bool,
}

impl Default for RewardTerms {
    fn default() -> Self {
        Self { score_diff: true, exploration: true }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EpisodeConfig {
    pub max_steps: usize,
    pub beta: f64,
    pub explore_coeff: f64,
    pub explore_base: f64,
    pub n_samples: usize,
    pub knn: usize,
    pub resample_low_init: bool,
    pub reward_terms: RewardTerms,
}

impl Default for EpisodeConfig {
    fn default() -> Self {
        Self {
            max_steps: 48,
            beta: 0.005,
            explore_coeff: 0.1,
            explore_base: 0.9999,
            n_samples: 2000,
            knn: 100,
            resample_low_init: true,
            reward_terms: RewardTerms::default(),
        }
    }
}

impl EpisodeConfig {
    pub fn validate(&self) -> Result<(), EnvError> {
        if !(self.beta >= 0.0) {
            return Err(EnvError::Config(format!("beta {} must be non-negative", self.beta)));
        }
        if !(self.explore_base > 0.0 && self.explore_base < 1.0) {
            return Err(EnvError::Config(format!("explore_base {} outside (0, 1)", self.explore_base)));
        }
        if self.knn == 0 || self.knn > self.n_samples {
            return Err(EnvError::Config(format!("knn {} must be in 1..={}", self.knn, self.n_samples)));
        }
        if self.max_steps == 0 {
            return Err(EnvError::Config("max_steps must be positive".into()));
        }
        Ok(())
    }

    /// Exploration bonus at global step `zeta`.
    pub fn exploration_bonus(&self, zeta: u64) -> f64 {
        if !self.reward_terms.exploration {
            return 0.0;
        }
        self.explore_coeff * self.explore_base.powf(zeta as f64)
    }

    /// Reward of a non-terminal step from score `phi` to `phi_next`.
    pub fn movement_reward(&self, phi: f64, phi_next: f64, zeta: u64, t: usize) -> f64 {
        let diff = if self.reward_terms.score_diff { phi_next - phi } else { 0.0 };
        diff + self.exploration_bonus(zeta) - self.beta * t as f64
    }
}

/// +1 for a photo strictly above the threshold, −1 otherwise.
pub fn capture_reward(phi: f64, tau: f64) -> f64 {
    if phi > tau {
        1.0
    } else {
        -1.0
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ThresholdEstimate {
    pub mu: f64,
    pub sigma: f64,
    pub tau: f64,
    pub scene_mu: f64,
    pub scene_sigma: f64,
}

/// Mean and population standard deviation, independent of input order.
pub fn mean_std(values: &[f64]) -> (f64, f64) {
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let n = v.len() as f64;
    let mean = v.iter().sum::<f64>() / n;
    let mut sq: Vec<f64> = v.iter().map(|x| (x - mean).powi(2)).collect();
    sq.sort_by(f64::total_cmp);
    (mean, (sq.iter().sum::<f64>() / n).sqrt())
}

/// Scored random views of one scene; the raw material of thresholds.
#[derive(Debug, Clone, PartialEq)]
pub struct ViewSamples {
    pub poses: Vec<Pose>,
    pub scores: Vec<f64>,
    pub scene_mu: f64,
    pub scene_sigma: f64,
}

impl ViewSamples {
    pub fn from_scores(poses: Vec<Pose>, scores: Vec<f64>) -> Self {
        assert_eq!(poses.len(), scores.len(), "one score per pose");
        assert!(!poses.is_empty(), "at least one sample");
        let (scene_mu, scene_sigma) = mean_std(&scores);
        Self { poses, scores, scene_mu, scene_sigma }
    }

    pub fn compute(scene: &SceneSpec, scorer: &dyn ViewScorer, n: usize, seed: u64) -> Self {
        let views = sample_views(scene, n, seed);
        let scores = views.iter().map(|(p, v)| scorer.score_view(scene, p, v)).collect();
        Self::from_scores(views.into_iter().map(|(p, _)| p).collect(), scores)
    }

    /// Indices of the `k` samples nearest to (x, y); ties go to the lower index.
    pub fn nearest(&self, x: f64, y: f64, k: usize) -> Vec<usize> {
        let mut idx: Vec<(f64, usize)> =
            self.poses.iter().enumerate().map(|(i, p)| ((p.x - x).powi(2) + (p.y - y).powi(2), i)).collect();
        idx.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
        idx.truncate(k);
        idx.into_iter().map(|(_, i)| i).collect()
    }

    pub fn threshold(&self, start: &Pose, k: usize) -> ThresholdEstimate {
        let local: Vec<f64> = self.nearest(start.x, start.y, k).into_iter().map(|i| self.scores[i]).collect();
        let (mu, sigma) = mean_std(&local);
        ThresholdEstimate { mu, sigma, tau: mu + sigma, scene_mu: self.scene_mu, scene_sigma: self.scene_sigma }
    }
}

/// Threshold for an episode starting at `start_pose`.
pub fn compute_threshold(scene: &SceneSpec, start_pose: &Pose, scorer: &dyn ViewScorer, config: &EpisodeConfig, seed: u64) -> ThresholdEstimate {
    ViewSamples::compute(scene, scorer, config.n_samples, seed).threshold(start_pose, config.knn)
}

/// A scene with its scored view samples, shared by every episode in it.
#[derive(Debug, Clone)]
pub struct SceneContext {
    pub scene: SceneSpec,
    pub samples: ViewSamples,
    cells: Vec<(usize, usize)>,
}

impl SceneContext {
    /// Samples are seeded from the scene alone, so every run that scores a
    /// scene with the same scorer sees the same thresholds.
    pub fn new(scene: SceneSpec, scorer: &dyn ViewScorer, n_samples: usize) -> Self {
        let samples = ViewSamples::compute(&scene, scorer, n_samples, seed::split(scene.rng_seed, seed::stream::VIEW_SAMPLES));
        let cells = scene.grid.navigable_cells();
        Self { scene, samples, cells }
    }

    pub fn scene_id(&self) -> u64 {
        self.scene.scene_id
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ResetMode {
    /// Redraws poor starts when the config asks for it.
    Train,
    /// Always accepts the first draw.
    Eval,
}

/// Start pose and threshold: everything a paired comparison must share.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EpisodeStart {
    pub pose: Pose,
    pub threshold: ThresholdEstimate,
}

pub fn draw_start(ctx: &SceneContext, scorer: &dyn ViewScorer, config: &EpisodeConfig, seed: u64, mode: ResetMode) -> EpisodeStart {
    let mut rng = seed::rng(seed);
    let floor = ctx.samples.scene_mu - ctx.samples.scene_sigma;
    let resample = mode == ResetMode::Train && config.resample_low_init;
    let mut draws = 0;
    let pose = loop {
        let p = random_pose(&ctx.cells, &mut rng);
        let pose = Pose::new(quantize_position(p.x), quantize_position(p.y), p.theta);
        draws += 1;
        if !resample || draws > MAX_START_REDRAWS {
            break pose;
        }
        let view = render_view(&ctx.scene, &pose, 1.0);
        if scorer.score_view(&ctx.scene, &pose, &view) >= floor {
            break pose;
        }
    };
    EpisodeStart { pose, threshold: ctx.samples.threshold(&pose, config.knn) }
}

/// What the agent sees: the view and the scorer's reading of it.
#[derive(Debug, Clone, PartialEq)]
pub struct Observation {
    pub view: ViewObservation,
    pub scored: ScoredView,
}

impl Observation {
    pub fn phi(&self) -> f64 {
        self.scored.score
    }

    pub fn features(&self) -> &[f64] {
        &self.scored.features
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepRecord {
    pub t: usize,
    pub zeta: u64,
    pub pose: Pose,
    pub action: Action,
    pub next_pose: Pose,
    pub phi: f64,
    pub phi_next: f64,
    pub reward: f64,
    pub done: bool,
    /// The step limit turned this step into a capture.
    pub forced: bool,
    pub blocked: bool,
    /// Replays a move already paid for by a probe.
    pub replayed_probe: bool,
}

/// Simulator privilege: score a move without keeping it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProbeRecord {
    pub t: usize,
    pub action: Action,
    pub pose: Pose,
    pub phi: f64,
}

/// Simulator privilege: teleport back to an earlier pose.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RestoreRecord {
    pub t: usize,
    pub pose: Pose,
    pub phi: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum TranscriptEntry {
    Step(StepRecord),
    Probe(ProbeRecord),
    Restore(RestoreRecord),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct TranscriptHeader {
    format: String,
    scene_id: u64,
    start: EpisodeStart,
    config: EpisodeConfig,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    meta: Option<serde_json::Value>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EpisodeTranscript {
    pub scene_id: u64,
    pub start: EpisodeStart,
    pub config: EpisodeConfig,
    pub entries: Vec<TranscriptEntry>,
}

impl EpisodeTranscript {
    pub fn steps(&self) -> impl Iterator<Item = &StepRecord> {
        self.entries.iter().filter_map(|e| match e {
            TranscriptEntry::Step(s) => Some(s),
            _ => None,
        })
    }

    pub fn probes(&self) -> impl Iterator<Item = &ProbeRecord> {
        self.entries.iter().filter_map(|e| match e {
            TranscriptEntry::Probe(p) => Some(p),
            _ => None,
        })
    }

    pub fn restores(&self) -> impl Iterator<Item = &RestoreRecord> {
        self.entries.iter().filter_map(|e| match e {
            TranscriptEntry::Restore(r) => Some(r),
            _ => None,
        })
    }

    pub fn terminal(&self) -> Option<&StepRecord> {
        self.steps().find(|s| s.done)
    }

    pub fn tau(&self) -> f64 {
        self.start.threshold.tau
    }

    pub fn final_phi(&self) -> Option<f64> {
        self.terminal().map(|s| s.phi)
    }

    pub fn success(&self) -> bool {
        self.final_phi().is_some_and(|phi| phi > self.tau())
    }

    /// Steps taken including the capture.
    pub fn len(&self) -> usize {
        self.steps().count()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Movement steps (everything but the capture).
    pub fn movement_steps(&self) -> usize {
        self.steps().filter(|s| !s.done).count()
    }

    /// Environment actions spent before the capture: probes plus movements
    /// that were not replays of a probe.
    pub fn executed_actions(&self) -> usize {
        self.probes().count() + self.steps().filter(|s| !s.done && !s.replayed_probe).count()
    }

    pub fn uses_privileges(&self) -> bool {
        self.entries.iter().any(|e| !matches!(e, TranscriptEntry::Step(_))) || self.steps().any(|s| s.replayed_probe)
    }

    /// Rewards recomputed from the recorded scores and counters.
    pub fn recomputed_rewards(&self) -> Vec<f64> {
        self.steps()
            .map(|s| {
                if s.done {
                    capture_reward(s.phi, self.tau())
                } else {
                    self.config.movement_reward(s.phi, s.phi_next, s.zeta, s.t)
                }
            })
            .collect()
    }

    pub fn write_ndjson(&self, mut w: impl Write, meta: Option<serde_json::Value>) -> Result<(), EnvError> {
        let header = TranscriptHeader {
            format: EPISODE_FORMAT.to_string(),
            scene_id: self.scene_id,
            start: self.start,
            config: self.config.clone(),
            meta,
        };
        serde_json::to_writer(&mut w, &header)?;
        w.write_all(b"\n")?;
        for e in &self.entries {
            serde_json::to_writer(&mut w, e)?;
            w.write_all(b"\n")?;
        }
        Ok(())
    }

    pub fn to_ndjson(&self, meta: Option<serde_json::Value>) -> String {
        let mut buf = Vec::new();
        self.write_ndjson(&mut buf, meta).expect("writing to memory");
        String::from_utf8(buf).expect("json is utf-8")
    }

    pub fn read_ndjson(r: impl Read) -> Result<Self, EnvError> {
        let mut lines = BufReader::new(r).lines();
        let first = lines.next().ok_or_else(|| EnvError::Transcript("empty file".into()))??;
        let header: TranscriptHeader = serde_json::from_str(&first)?;
        if header.format != EPISODE_FORMAT {
            return Err(EnvError::Transcript(format!("unsupported format {:?}", header.format)));
        }
        let mut entries = Vec::new();
        for line in lines {
            let line = line?;
            if line.trim().is_empty() {
                continue;
            }
            entries.push(serde_json::from_str(&line)?);
        }
        let t = Self { scene_id: header.scene_id, start: header.start, config: header.config, entries };
        if t.steps().filter(|s| s.done).count() > 1 {
            return Err(EnvError::Transcript("more than one terminal step".into()));
        }
        Ok(t)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepOutcome {
    pub reward: f64,
    pub done: bool,
    /// The action actually executed (CAPTURE when forced).
    pub executed: Action,
}

/// One episode in one scene.
#[derive(Debug, Clone)]
pub struct CaptureEnv<'a> {
    ctx: &'a SceneContext,
    scorer: &'a Scorer,
    config: &'a EpisodeConfig,
    pose: Pose,
    obs: Observation,
    t: usize,
    done: bool,
    transcript: EpisodeTranscript,
}

impl<'a> CaptureEnv<'a> {
    pub fn new(ctx: &'a SceneContext, scorer: &'a Scorer, config: &'a EpisodeConfig, start: EpisodeStart) -> Self {
        let obs = observe(&ctx.scene, scorer, &start.pose);
        Self {
            ctx,
            scorer,
            config,
            pose: start.pose,
            obs,
            t: 0,
            done: false,
            transcript: EpisodeTranscript { scene_id: ctx.scene_id(), start, config: config.clone(), entries: Vec::new() },
        }
    }

    pub fn reset(ctx: &'a SceneContext, scorer: &'a Scorer, config: &'a EpisodeConfig, seed: u64, mode: ResetMode) -> Self {
        Self::new(ctx, scorer, config, draw_start(ctx, scorer, config, seed, mode))
    }

    pub fn context(&self) -> &'a SceneContext {
        self.ctx
    }

    pub fn scene(&self) -> &'a SceneSpec {
        &self.ctx.scene
    }

    pub fn scorer(&self) -> &'a Scorer {
        self.scorer
    }

    pub fn config(&self) -> &'a EpisodeConfig {
        self.config
    }

    pub fn pose(&self) -> Pose {
        self.pose
    }

    pub fn observation(&self) -> &Observation {
        &self.obs
    }

    pub fn phi(&self) -> f64 {
        self.obs.phi()
    }

    pub fn threshold(&self) -> &ThresholdEstimate {
        &self.transcript.start.threshold
    }

    pub fn t(&self) -> usize {
        self.t
    }

    pub fn is_done(&self) -> bool {
        self.done
    }

    pub fn transcript(&self) -> &EpisodeTranscript {
        &self.transcript
    }

    pub fn into_transcript(self) -> EpisodeTranscript {
        self.transcript
    }

    pub fn step(&mut self, action: Action, zeta: u64) -> Result<StepOutcome, EnvError> {
        self.step_inner(action, zeta, false)
    }

    /// Commits a move whose outcome was already probed; costs no budget.
    pub fn step_replay(&mut self, action: Action, zeta: u64) -> Result<StepOutcome, EnvError> {
        self.step_inner(action, zeta, true)
    }

    fn step_inner(&mut self, action: Action, zeta: u64, replayed_probe: bool) -> Result<StepOutcome, EnvError> {
        if self.done {
            return Err(EnvError::Terminated);
        }
        let forced = action != Action::Capture && self.t >= self.config.max_steps;
        let executed = if forced { Action::Capture } else { action };
        let phi = self.phi();
        let (reward, next_pose, blocked, phi_next, done) = if executed == Action::Capture {
            (capture_reward(phi, self.threshold().tau), self.pose, false, phi, true)
        } else {
            let (next, blocked) = apply_action(&self.ctx.scene, &self.pose, executed);
            if next != self.pose {
                self.obs = observe(&self.ctx.scene, self.scorer, &next);
            }
            let phi_next = self.phi();
            (self.config.movement_reward(phi, phi_next, zeta, self.t), next, blocked, phi_next, false)
        };
        self.transcript.entries.push(TranscriptEntry::Step(StepRecord {
            t: self.t,
            zeta,
            pose: self.pose,
            action: executed,
            next_pose,
            phi,
            phi_next,
            reward,
            done,
            forced,
            blocked,
            replayed_probe: replayed_probe && !done,
        }));
        self.pose = next_pose;
        self.t += 1;
        self.done = done;
        Ok(StepOutcome { reward, done, executed })
    }

    /// Score after `action` without keeping the move.
    pub fn probe(&mut self, action: Action) -> Result<f64, EnvError> {
        if self.done {
            return Err(EnvError::Terminated);
        }
        let (next, _) = apply_action(&self.ctx.scene, &self.pose, action);
        let phi = if next == self.pose { self.phi() } else { observe(&self.ctx.scene, self.scorer, &next).phi() };
        self.transcript.entries.push(TranscriptEntry::Probe(ProbeRecord { t: self.t, action, pose: next, phi }));
        Ok(phi)
    }

    /// Teleports to `pose`, which must be navigable.
    pub fn restore(&mut self, pose: Pose) -> Result<(), EnvError> {
        if self.done {
            return Err(EnvError::Terminated);
        }
        if !self.ctx.scene.is_navigable(&pose) {
            return Err(EnvError::Config(format!("restore target {pose} is not navigable")));
        }
        self.pose = pose;
        self.obs = observe(&self.ctx.scene, self.scorer, &pose);
        self.transcript.entries.push(TranscriptEntry::Restore(RestoreRecord { t: self.t, pose, phi: self.phi() }));
        Ok(())
    }
}

pub fn observe(scene: &SceneSpec, scorer: &Scorer, pose: &Pose) -> Observation {
    let view = render_view(scene, pose, 1.0);
    let scored = scorer.evaluate(&view);
    Observation { view, scored }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scene::{generate_scene, GenerationConfig};

    fn ctx() -> SceneContext {
        let scene = generate_scene(3, 77, &GenerationConfig::default()).unwrap();
        SceneContext::new(scene, &Scorer::init(1), 500)
    }

    #[test]
    fn action_indices_round_trip() {
        for (i, a) in Action::ALL.iter().enumerate() {
            assert_eq!(a.index(), i);
            assert_eq!(Action::from_index(i), Some(*a));
        }
        assert_eq!(Action::from_index(9), None);
        assert_eq!(ActionSet::Full.len(), 9);
        assert_eq!(ActionSet::ThirtyDegreeTurnsOnly.len(), 5);
    }

    #[test]
    fn movement_reward_examples() {
        let cfg = EpisodeConfig::default();
        assert!((cfg.movement_reward(0.4, 0.6, 0, 3) - 0.285).abs() < 1e-12);
        let oracle = 0.1 * (10_000.0 * (-1e-4f64).ln_1p()).exp();
        assert!((cfg.movement_reward(0.5, 0.5, 10_000, 0) - oracle).abs() < 1e-12);
        assert!((oracle - 0.03679).abs() < 1e-5);
        assert_eq!(capture_reward(0.3, 0.3), -1.0);
        assert_eq!(capture_reward(0.30001, 0.3), 1.0);
    }

    #[test]
    fn reward_toggles() {
        let cfg = EpisodeConfig { reward_terms: RewardTerms { score_diff: false, exploration: false }, ..Default::default() };
        assert!((cfg.movement_reward(0.0, 5.0, 0, 2) + 0.01).abs() < 1e-15);
    }

    #[test]
    fn threshold_trivial_cases() {
        let poses = vec![Pose::new(0.0, 0.0, 0.0), Pose::new(1.0, 0.0, 0.0), Pose::new(5.0, 0.0, 0.0)];
        let s = ViewSamples::from_scores(poses, vec![0.0, 2.0, 100.0]);
        let th = s.threshold(&Pose::new(0.1, 0.0, 0.0), 2);
        assert_eq!((th.mu, th.sigma, th.tau), (1.0, 1.0, 2.0));
        let flat = ViewSamples::from_scores(vec![Pose::new(0.0, 0.0, 0.0); 5], vec![0.7; 5]);
        let th = flat.threshold(&Pose::new(0.0, 0.0, 0.0), 3);
        assert_eq!(th.tau, 0.7);
    }

    #[test]
    fn nearest_breaks_ties_by_index() {
        let poses = vec![Pose::new(1.0, 0.0, 0.0), Pose::new(-1.0, 0.0, 0.0), Pose::new(0.0, 1.0, 0.0)];
        let s = ViewSamples::from_scores(poses, vec![0.0; 3]);
        assert_eq!(s.nearest(0.0, 0.0, 2), vec![0, 1]);
    }

    #[test]
    fn forward_backward_and_full_turn_close() {
        let c = ctx();
        let start = draw_start(&c, &Scorer::zeros(), &EpisodeConfig::default(), 4, ResetMode::Eval);
        let mut p = start.pose;
        for _ in 0..4 {
            p = apply_action(&c.scene, &p, Action::TurnL90).0;
        }
        assert!(crate::scene::wrap_angle(p.theta - start.pose.theta).abs() < 1e-12);
        let (f, blocked) = apply_action(&c.scene, &start.pose, Action::Forward);
        if !blocked {
            let (b, blocked) = apply_action(&c.scene, &f, Action::Backward);
            assert!(!blocked);
            assert_eq!(b, start.pose);
        }
    }

    #[test]
    fn blocked_move_is_noop_with_zero_diff() {
        let c = ctx();
        let scorer = Scorer::init(2);
        let cfg = EpisodeConfig::default();
        // Walk forward until something blocks.
        let mut env = CaptureEnv::reset(&c, &scorer, &cfg, 9, ResetMode::Eval);
        for _ in 0..cfg.max_steps {
            let before = env.pose();
            let out = env.step(Action::Forward, 0).unwrap();
            let rec = env.transcript().steps().last().unwrap().clone();
            if rec.blocked {
                assert_eq!(env.pose(), before);
                assert_eq!(rec.phi, rec.phi_next);
                assert!((out.reward - (0.1 - 0.005 * rec.t as f64)).abs() < 1e-12);
                return;
            }
        }
        panic!("never hit a wall");
    }

    #[test]
    fn forced_capture_at_step_limit() {
        let c = ctx();
        let scorer = Scorer::init(2);
        let cfg = EpisodeConfig { max_steps: 5, ..Default::default() };
        let mut env = CaptureEnv::reset(&c, &scorer, &cfg, 1, ResetMode::Train);
        let mut n = 0;
        while !env.is_done() {
            env.step(Action::TurnL10, n).unwrap();
            n += 1;
        }
        assert_eq!(n, 6);
        assert!(env.step(Action::Capture, 0).is_err());
        let tr = env.transcript();
        let last = tr.terminal().unwrap();
        assert!(last.forced);
        assert_eq!(last.action, Action::Capture);
        let rec = tr.recomputed_rewards();
        for (s, r) in tr.steps().zip(rec) {
            assert!((s.reward - r).abs() <= 1e-12);
        }
    }

    #[test]
    fn constant_scorer_accepts_first_start() {
        let c = SceneContext::new(ctx().scene, &Scorer::zeros(), 200);
        let cfg = EpisodeConfig::default();
        let a = draw_start(&c, &Scorer::zeros(), &cfg, 5, ResetMode::Train);
        let b = draw_start(&c, &Scorer::zeros(), &cfg, 5, ResetMode::Eval);
        assert_eq!(a, b);
    }

    #[test]
    fn resampled_start_clears_floor() {
        let scorer = Scorer::init(8);
        let c = ctx();
        let c = SceneContext::new(c.scene, &scorer, 500);
        let cfg = EpisodeConfig::default();
        for s in 0..30 {
            let st = draw_start(&c, &scorer, &cfg, s, ResetMode::Train);
            let v = render_view(&c.scene, &st.pose, 1.0);
            let (mu, sigma) = mean_std(&c.samples.scores);
            assert!(scorer.score(&v) >= mu - sigma);
        }
    }

    #[test]
    fn transcript_ndjson_round_trip() {
        let c = ctx();
        let scorer = Scorer::init(2);
        let cfg = EpisodeConfig::default();
        let mut env = CaptureEnv::reset(&c, &scorer, &cfg, 3, ResetMode::Eval);
        env.probe(Action::Forward).unwrap();
        env.step_replay(Action::Forward, 7).unwrap();
        let start = env.transcript().start.pose;
        env.restore(start).unwrap();
        env.step(Action::Capture, 8).unwrap();
        let tr = env.into_transcript();
        let text = tr.to_ndjson(Some(serde_json::json!({"k": 1})));
        assert!(text.starts_with("{\"format\":\"autophoto-episode/1\""));
        let back = EpisodeTranscript::read_ndjson(text.as_bytes()).unwrap();
        assert_eq!(back, tr);
        assert!(back.uses_privileges());
        assert_eq!(back.executed_actions(), 1);
    }
}
