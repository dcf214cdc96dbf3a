//! The learned aesthetic scorer.
//!
//! A small MLP maps a [`ViewObservation`] to a scalar. It is trained on
//! view pairs labelled by the ground-truth field with a margin ranking loss,
//! plus two robustness terms: score similarity under tiny pose jitter and a
//! ranking term that pushes badly exposed views below well exposed ones.
//! The hidden activations double as the agent's input features.

use std::f64::consts::PI;

use rand::Rng as _;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::netcore::{self, adam_step, Activation, AdamState, Checkpoint, NetError, NetSpec, ParamVector, RecurrentState};
use crate::scene::{render_view, sample_views, true_aesthetic, Pose, SceneSpec, ViewObservation, RAY_COUNT};
use crate::seed;

pub const OBS_DIM: usize = 2 * RAY_COUNT + 3;
pub const HIDDEN_DIMS: [usize; 3] = [64, 64, 32];
pub const FEATURE_DIM: usize = HIDDEN_DIMS[0] + HIDDEN_DIMS[1] + HIDDEN_DIMS[2];
pub const LAST_LAYER_DIM: usize = HIDDEN_DIMS[2];
pub const SCORER_NET: &str = "scorer";

#[derive(Debug, Error)]
pub enum AestheticsError {
    #[error(transparent)]
    Net(#[from] NetError),
    #[error("scorer checkpoint: {0}")]
    Checkpoint(String),
    #[error("invalid robustness config: {0}")]
    Config(String),
    #[error("no scenes supplied")]
    NoScenes,
}

/// Flattens an observation into the scorer's input vector.
///
/// Brightness enters as its natural log, so a well exposed view reads 0.
pub fn encode_observation(view: &ViewObservation) -> [f64; OBS_DIM] {
    let mut x = [0.0; OBS_DIM];
    x[..RAY_COUNT].copy_from_slice(&view.depth_rays);
    x[RAY_COUNT..2 * RAY_COUNT].copy_from_slice(&view.hotspot_intensity);
    x[2 * RAY_COUNT] = view.salient_x;
    x[2 * RAY_COUNT + 1] = if view.salient_present { 1.0 } else { 0.0 };
    x[2 * RAY_COUNT + 2] = view.brightness.ln();
    x
}

/// Anything that can put a number on a view.
pub trait ViewScorer: Sync {
    fn score_view(&self, scene: &SceneSpec, pose: &Pose, view: &ViewObservation) -> f64;
}

/// Learned scorer φ: 35 → 64 → 64 → 32 → 1.
#[derive(Debug, Clone, PartialEq)]
pub struct Scorer {
    spec: NetSpec,
    params: ParamVector,
}

/// Score plus the concatenated hidden activations for one view.
#[derive(Debug, Clone, PartialEq)]
pub struct ScoredView {
    pub score: f64,
    pub features: Vec<f64>,
}

impl ScoredView {
    /// Features of the last hidden layer only.
    pub fn last_layer(&self) -> &[f64] {
        &self.features[FEATURE_DIM - LAST_LAYER_DIM..]
    }
}

impl Scorer {
    pub fn net_spec() -> NetSpec {
        let dims = [OBS_DIM, HIDDEN_DIMS[0], HIDDEN_DIMS[1], HIDDEN_DIMS[2], 1];
        NetSpec::mlp(&dims, Activation::Tanh, Activation::Identity).expect("static scorer spec")
    }

    pub fn init(seed: u64) -> Self {
        let spec = Self::net_spec();
        let params = ParamVector::init(&spec, &mut seed::rng(seed::split(seed, seed::stream::SCORER_INIT)));
        Self { spec, params }
    }

    pub fn zeros() -> Self {
        let spec = Self::net_spec();
        let params = ParamVector::zeros(&spec);
        Self { spec, params }
    }

    pub fn from_params(params: ParamVector) -> Result<Self, AestheticsError> {
        let spec = Self::net_spec();
        if params.len() != spec.param_count() {
            return Err(AestheticsError::Checkpoint(format!("{} parameters, scorer needs {}", params.len(), spec.param_count())));
        }
        Ok(Self { spec, params })
    }

    pub fn spec(&self) -> &NetSpec {
        &self.spec
    }

    pub fn params(&self) -> &ParamVector {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut ParamVector {
        &mut self.params
    }

    fn run(&self, view: &ViewObservation) -> (Vec<f64>, netcore::Tape<'_>) {
        let (out, _, tape) = netcore::forward(&self.spec, &self.params, &encode_observation(view), &RecurrentState::zeros(0))
            .expect("scorer input is finite by construction");
        (out, tape)
    }

    pub fn score(&self, view: &ViewObservation) -> f64 {
        self.run(view).0[0]
    }

    pub fn evaluate(&self, view: &ViewObservation) -> ScoredView {
        let (out, tape) = self.run(view);
        let mut features = Vec::with_capacity(FEATURE_DIM);
        for i in 0..HIDDEN_DIMS.len() {
            features.extend_from_slice(tape.layer_output(i));
        }
        ScoredView { score: out[0], features }
    }

    pub fn multilayer_features(&self, view: &ViewObservation) -> Vec<f64> {
        self.evaluate(view).features
    }

    pub fn to_checkpoint(&self, meta: serde_json::Value) -> Checkpoint {
        Checkpoint { meta, nets: vec![(SCORER_NET.to_string(), self.spec.clone(), self.params.clone())] }
    }

    pub fn from_checkpoint(ckpt: &Checkpoint) -> Result<Self, AestheticsError> {
        let (spec, params) = ckpt
            .net(SCORER_NET)
            .ok_or_else(|| AestheticsError::Checkpoint("no \"scorer\" network in checkpoint".into()))?;
        if *spec != Self::net_spec() {
            return Err(AestheticsError::Checkpoint("scorer architecture differs from this build".into()));
        }
        Self::from_params(params.clone())
    }
}

impl ViewScorer for Scorer {
    fn score_view(&self, _scene: &SceneSpec, _pose: &Pose, view: &ViewObservation) -> f64 {
        self.score(view)
    }
}

/// The ground-truth field, minus a penalty for bad exposure.
/// Upper bound for what a learned scorer can achieve.
#[derive(Debug, Clone, Copy)]
pub struct OracleScorer {
    pub exposure_penalty: f64,
}

impl Default for OracleScorer {
    fn default() -> Self {
        Self { exposure_penalty: 1.0 }
    }
}

impl ViewScorer for OracleScorer {
    fn score_view(&self, scene: &SceneSpec, pose: &Pose, view: &ViewObservation) -> f64 {
        true_aesthetic(scene, pose) - self.exposure_penalty * view.brightness.ln().abs()
    }
}

/// Weights of the combined loss and the perturbations it uses.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RobustnessConfig {
    pub lambda: f64,
    pub lambda_sim: f64,
    pub lambda_expo: f64,
    pub over_exposure: f64,
    pub under_exposure: f64,
    /// Maximum translation jitter, metres.
    pub jitter_translation: f64,
    /// Maximum rotation jitter, degrees.
    pub jitter_rotation_deg: f64,
}

impl Default for RobustnessConfig {
    fn default() -> Self {
        Self {
            lambda: 0.6,
            lambda_sim: 0.875,
            lambda_expo: 0.125,
            over_exposure: 4.0,
            under_exposure: 0.5,
            jitter_translation: 0.02,
            jitter_rotation_deg: 1.0,
        }
    }
}

impl RobustnessConfig {
    pub fn validate(&self) -> Result<(), AestheticsError> {
        if !(self.lambda > 0.0 && self.lambda < 1.0) {
            return Err(AestheticsError::Config(format!("lambda {} outside (0, 1)", self.lambda)));
        }
        if (self.lambda_sim + self.lambda_expo - 1.0).abs() > 1e-12 || self.lambda_sim < 0.0 || self.lambda_expo < 0.0 {
            return Err(AestheticsError::Config("lambda_sim + lambda_expo must equal 1".into()));
        }
        if !(self.over_exposure > 0.0 && self.under_exposure > 0.0) {
            return Err(AestheticsError::Config("exposure factors must be positive".into()));
        }
        if !(self.jitter_translation >= 0.0 && self.jitter_rotation_deg >= 0.0) {
            return Err(AestheticsError::Config("jitter bounds must be non-negative".into()));
        }
        Ok(())
    }
}

/// Margin ranking hinge: zero once `score_hi` beats `score_lo` by 1.
pub fn rank_loss(score_hi: f64, score_lo: f64) -> f64 {
    (score_lo - score_hi + 1.0).max(0.0)
}

/// Small pose perturbation; falls back to rotation only when the shifted
/// position would leave navigable space.
pub fn jitter_pose(scene: &SceneSpec, pose: &Pose, config: &RobustnessConfig, rng: &mut seed::Rng) -> Pose {
    let r = config.jitter_translation * rng.gen::<f64>();
    let dir = rng.gen_range(-PI..PI);
    let max_rot = config.jitter_rotation_deg.to_radians();
    let dtheta = if max_rot > 0.0 { rng.gen_range(-max_rot..=max_rot) } else { 0.0 };
    let moved = Pose::new(pose.x + r * dir.cos(), pose.y + r * dir.sin(), pose.theta + dtheta);
    if scene.is_navigable(&moved) {
        moved
    } else {
        Pose::new(pose.x, pose.y, pose.theta + dtheta)
    }
}

/// Random perturbations used by the robustness term for one anchor view.
#[derive(Debug, Clone, PartialEq)]
pub struct RobustDraw {
    pub jittered: ViewObservation,
    pub exposed: ViewObservation,
}

impl RobustDraw {
    pub fn sample(scene: &SceneSpec, pose: &Pose, view: &ViewObservation, config: &RobustnessConfig, rng: &mut seed::Rng) -> Self {
        let jpose = jitter_pose(scene, pose, config, rng);
        let jittered = render_view(scene, &jpose, view.brightness);
        let factor = if rng.gen_bool(0.5) { config.over_exposure } else { config.under_exposure };
        Self { jittered, exposed: view.with_brightness(view.brightness * factor) }
    }
}

/// Weighted sum of the similarity and exposure terms for one anchor view.
pub fn robust_loss(
    scorer: &Scorer,
    scene: &SceneSpec,
    pose: &Pose,
    view: &ViewObservation,
    config: &RobustnessConfig,
    rng: &mut seed::Rng,
) -> f64 {
    let draw = RobustDraw::sample(scene, pose, view, config, rng);
    let s = scorer.score(view);
    let sim = 0.5 * (s - scorer.score(&draw.jittered)).powi(2);
    let expo = rank_loss(s, scorer.score(&draw.exposed));
    config.lambda_sim * sim + config.lambda_expo * expo
}

/// Two views of one scene, ordered by the ground-truth field.
#[derive(Debug, Clone, PartialEq)]
pub struct PreferencePair {
    pub winner_pose: Pose,
    pub winner: ViewObservation,
    pub loser_pose: Pose,
    pub loser: ViewObservation,
    /// True-score gap; diagnostic only.
    pub margin: f64,
}

impl PreferencePair {
    /// Draws view pairs until one has a true gap of at least `min_gap`.
    pub fn draw(scene: &SceneSpec, min_gap: f64, rng: &mut seed::Rng) -> Option<Self> {
        for _ in 0..256 {
            let views = sample_views(scene, 2, rng.gen());
            let (pa, va) = &views[0];
            let (pb, vb) = &views[1];
            let (ta, tb) = (true_aesthetic(scene, pa), true_aesthetic(scene, pb));
            if (ta - tb).abs() < min_gap {
                continue;
            }
            let (wp, wv, lp, lv) = if ta > tb { (pa, va, pb, vb) } else { (pb, vb, pa, va) };
            return Some(Self { winner_pose: *wp, winner: wv.clone(), loser_pose: *lp, loser: lv.clone(), margin: (ta - tb).abs() });
        }
        None
    }
}

/// Everything random about one evaluation of the combined loss.
#[derive(Debug, Clone, PartialEq)]
pub struct LossDraw {
    /// Whether the robustness anchor is the winner (else the loser).
    pub anchor_is_winner: bool,
    pub robust: RobustDraw,
}

impl LossDraw {
    pub fn sample(scene: &SceneSpec, pair: &PreferencePair, config: &RobustnessConfig, rng: &mut seed::Rng) -> Self {
        let anchor_is_winner = rng.gen_bool(0.5);
        let (pose, view) = if anchor_is_winner { (&pair.winner_pose, &pair.winner) } else { (&pair.loser_pose, &pair.loser) };
        Self { anchor_is_winner, robust: RobustDraw::sample(scene, pose, view, config, rng) }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct LossBreakdown {
    pub rank: f64,
    pub sim: f64,
    pub expo: f64,
    pub robust: f64,
    pub total: f64,
}

/// Combined loss for a fixed draw; accumulates its parameter gradient into
/// `grads` when given.
pub fn combined_loss(
    scorer: &Scorer,
    pair: &PreferencePair,
    draw: &LossDraw,
    config: &RobustnessConfig,
    grads: Option<&mut [f64]>,
) -> LossBreakdown {
    let views = [&pair.winner, &pair.loser, &draw.robust.jittered, &draw.robust.exposed];
    let runs: Vec<(Vec<f64>, netcore::Tape<'_>)> = views.iter().map(|v| scorer.run(v)).collect();
    let phi: Vec<f64> = runs.iter().map(|(o, _)| o[0]).collect();
    let (w, l, j, e) = (0, 1, 2, 3);
    let s = if draw.anchor_is_winner { w } else { l };

    let rank = rank_loss(phi[w], phi[l]);
    let sim = 0.5 * (phi[s] - phi[j]).powi(2);
    let expo = rank_loss(phi[s], phi[e]);
    let robust = config.lambda_sim * sim + config.lambda_expo * expo;
    let total = config.lambda * rank + (1.0 - config.lambda) * robust;

    if let Some(grads) = grads {
        let mut coef = [0.0; 4];
        let rw = 1.0 - config.lambda;
        if rank > 0.0 {
            coef[w] -= config.lambda;
            coef[l] += config.lambda;
        }
        let dsim = rw * config.lambda_sim * (phi[s] - phi[j]);
        coef[s] += dsim;
        coef[j] -= dsim;
        if expo > 0.0 {
            coef[s] -= rw * config.lambda_expo;
            coef[e] += rw * config.lambda_expo;
        }
        for ((_, tape), c) in runs.iter().zip(coef) {
            if c != 0.0 {
                tape.backward_accumulate(&[c], None, grads);
            }
        }
    }
    LossBreakdown { rank, sim, expo, robust, total }
}

/// λ·ranking + (1−λ)·robustness, with the anchor drawn uniformly from the pair.
pub fn total_loss(scorer: &Scorer, scene: &SceneSpec, pair: &PreferencePair, config: &RobustnessConfig, rng: &mut seed::Rng) -> f64 {
    let draw = LossDraw::sample(scene, pair, config, rng);
    combined_loss(scorer, pair, &draw, config, None).total
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ScorerTrainConfig {
    pub iters: usize,
    pub batch_size: usize,
    pub lr: f64,
    /// Pairs with a smaller true gap are skipped as ambiguous.
    pub min_gap: f64,
    pub log_every: usize,
}

impl Default for ScorerTrainConfig {
    fn default() -> Self {
        Self { iters: 20_000, batch_size: 32, lr: 1e-3, min_gap: 0.05, log_every: 100 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ScorerLogEntry {
    pub iter: usize,
    pub loss: f64,
    pub rank_loss: f64,
    pub batch_accuracy: f64,
}

/// Trains a scorer from scratch on pairs drawn from `scenes`.
pub fn train_scorer(
    scenes: &[SceneSpec],
    train: &ScorerTrainConfig,
    robust: &RobustnessConfig,
    seed: u64,
) -> Result<(Scorer, Vec<ScorerLogEntry>), AestheticsError> {
    if scenes.is_empty() {
        return Err(AestheticsError::NoScenes);
    }
    robust.validate()?;
    let mut scorer = Scorer::init(seed);
    let mut adam = AdamState::new(scorer.params.len());
    let mut rng = seed::rng(seed::split(seed, seed::stream::SCORER_BATCH));
    let mut log = Vec::new();
    let mut grads = vec![0.0; scorer.params.len()];
    let (mut run_loss, mut run_rank, mut run_correct, mut run_n) = (0.0, 0.0, 0usize, 0usize);
    for iter in 0..train.iters {
        grads.iter_mut().for_each(|g| *g = 0.0);
        let mut used = 0usize;
        for _ in 0..train.batch_size {
            let scene = &scenes[rng.gen_range(0..scenes.len())];
            let Some(pair) = PreferencePair::draw(scene, train.min_gap, &mut rng) else {
                continue;
            };
            let draw = LossDraw::sample(scene, &pair, robust, &mut rng);
            let b = combined_loss(&scorer, &pair, &draw, robust, Some(&mut grads));
            run_loss += b.total;
            run_rank += b.rank;
            run_correct += usize::from(scorer.score(&pair.winner) > scorer.score(&pair.loser));
            run_n += 1;
            used += 1;
        }
        if used == 0 {
            continue;
        }
        let inv = 1.0 / used as f64;
        grads.iter_mut().for_each(|g| *g *= inv);
        adam_step(&mut scorer.params, &grads, &mut adam, train.lr)?;
        if train.log_every > 0 && (iter + 1) % train.log_every == 0 {
            let n = run_n.max(1) as f64;
            log.push(ScorerLogEntry {
                iter: iter + 1,
                loss: run_loss / n,
                rank_loss: run_rank / n,
                batch_accuracy: run_correct as f64 / n,
            });
            (run_loss, run_rank, run_correct, run_n) = (0.0, 0.0, 0, 0);
        }
    }
    Ok((scorer, log))
}

/// A held-out comparison: two poses in one scene, ordered by the true field.
#[derive(Debug, Clone, PartialEq)]
pub struct HeldOutPair {
    pub scene: usize,
    pub pair: PreferencePair,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ScorerEvalConfig {
    pub pairs_per_scene: usize,
    pub views_per_scene: usize,
    pub min_gap: f64,
}

impl Default for ScorerEvalConfig {
    fn default() -> Self {
        Self { pairs_per_scene: 250, views_per_scene: 250, min_gap: 0.2 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ScorerReport {
    pub pair_accuracy: f64,
    pub exposure_accuracy: f64,
    pub jitter_mse: f64,
}

impl ScorerReport {
    pub const CSV_HEADER: &'static str = "scene_set,pair_accuracy,exposure_accuracy,jitter_mse";

    pub fn csv_row(&self, scene_set: &str) -> String {
        format!("{scene_set},{:.6},{:.6},{:.6}", self.pair_accuracy, self.exposure_accuracy, self.jitter_mse)
    }
}

/// Fraction of pairs ranked correctly; ties count half.
pub fn pair_accuracy(scorer: &dyn ViewScorer, scenes: &[SceneSpec], pairs: &[HeldOutPair]) -> f64 {
    if pairs.is_empty() {
        return f64::NAN;
    }
    let mut halves = 0usize;
    for hp in pairs {
        let scene = &scenes[hp.scene];
        let w = scorer.score_view(scene, &hp.pair.winner_pose, &hp.pair.winner);
        let l = scorer.score_view(scene, &hp.pair.loser_pose, &hp.pair.loser);
        halves += if w > l {
            2
        } else if w == l {
            1
        } else {
            0
        };
    }
    halves as f64 / (2 * pairs.len()) as f64
}

/// Sum that does not depend on the order of its terms.
fn order_free_sum(mut values: Vec<f64>) -> f64 {
    values.sort_by(f64::total_cmp);
    values.iter().sum()
}

/// Held-out evaluation mirroring the scorer quality table: cross-view ranking,
/// exposure ranking and jitter sensitivity.
pub fn eval_scorer(
    scorer: &dyn ViewScorer,
    scenes: &[SceneSpec],
    seed: u64,
    robust: &RobustnessConfig,
    cfg: &ScorerEvalConfig,
) -> ScorerReport {
    let mut pairs = Vec::new();
    let mut expo_correct = 0usize;
    let mut expo_total = 0usize;
    let mut jitter_sq = Vec::new();
    for (si, scene) in scenes.iter().enumerate() {
        let mut rng = seed::rng(seed::split_path(seed, &[seed::stream::SCORER_EVAL, scene.scene_id]));
        for _ in 0..cfg.pairs_per_scene {
            if let Some(pair) = PreferencePair::draw(scene, cfg.min_gap, &mut rng) {
                pairs.push(HeldOutPair { scene: si, pair });
            }
        }
        for (pose, view) in sample_views(scene, cfg.views_per_scene, rng.gen()) {
            let base = scorer.score_view(scene, &pose, &view);
            for factor in [robust.over_exposure, robust.under_exposure] {
                let bad = view.with_brightness(factor);
                expo_correct += usize::from(base > scorer.score_view(scene, &pose, &bad));
                expo_total += 1;
            }
            let jpose = jitter_pose(scene, &pose, robust, &mut rng);
            let jview = render_view(scene, &jpose, 1.0);
            jitter_sq.push((base - scorer.score_view(scene, &jpose, &jview)).powi(2));
        }
    }
    let n_jitter = jitter_sq.len();
    ScorerReport {
        pair_accuracy: pair_accuracy(scorer, scenes, &pairs),
        exposure_accuracy: expo_correct as f64 / expo_total.max(1) as f64,
        jitter_mse: order_free_sum(jitter_sq) / n_jitter.max(1) as f64,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scene::{generate_scene, GenerationConfig};

    struct Constant(f64);

    impl ViewScorer for Constant {
        fn score_view(&self, _: &SceneSpec, _: &Pose, _: &ViewObservation) -> f64 {
            self.0
        }
    }

    fn scene() -> SceneSpec {
        generate_scene(0, 21, &GenerationConfig::default()).unwrap()
    }

    #[test]
    fn rank_loss_examples() {
        assert_eq!(rank_loss(2.0, 0.5), 0.0);
        assert_eq!(rank_loss(0.5, 0.5), 1.0);
        assert!((rank_loss(0.3, 0.5) - 1.2).abs() < 1e-15);
    }

    #[test]
    fn zero_scorer_outputs() {
        let s = scene();
        let z = Scorer::zeros();
        for (_, v) in sample_views(&s, 10, 1) {
            assert_eq!(z.score(&v), 0.0);
            let f = z.multilayer_features(&v);
            assert_eq!(f.len(), FEATURE_DIM);
            assert!(f.iter().all(|&x| x == 0.0));
        }
        let (pose, view) = sample_views(&s, 1, 2).remove(0);
        let l = robust_loss(&z, &s, &pose, &view, &RobustnessConfig::default(), &mut seed::rng(0));
        assert!((l - 0.125).abs() < 1e-15);
    }

    #[test]
    fn features_are_layer_outputs() {
        let s = scene();
        let sc = Scorer::init(5);
        let (_, view) = sample_views(&s, 1, 3).remove(0);
        let x = encode_observation(&view);
        let (out, _, tape) = netcore::forward(sc.spec(), sc.params(), &x, &RecurrentState::zeros(0)).unwrap();
        let ev = sc.evaluate(&view);
        let mut expected = tape.layer_output(0).to_vec();
        expected.extend_from_slice(tape.layer_output(1));
        expected.extend_from_slice(tape.layer_output(2));
        assert_eq!(ev.features, expected);
        assert_eq!(ev.score, out[0]);
        assert_eq!(ev.last_layer(), tape.layer_output(2));
    }

    #[test]
    fn combined_loss_weights() {
        // rank 1.0 and robust 0.125 combine to 0.65 with the default weights.
        let cfg = RobustnessConfig::default();
        assert!((cfg.lambda * 1.0 + (1.0 - cfg.lambda) * 0.125 - 0.65).abs() < 1e-15);
        let s = scene();
        let pair = PreferencePair::draw(&s, 0.05, &mut seed::rng(4)).unwrap();
        let l = total_loss(&Scorer::zeros(), &s, &pair, &cfg, &mut seed::rng(1));
        assert!((l - 0.65).abs() < 1e-15);
    }

    #[test]
    fn robustness_config_validation() {
        assert!(RobustnessConfig::default().validate().is_ok());
        assert!(RobustnessConfig { lambda: 1.0, ..Default::default() }.validate().is_err());
        assert!(RobustnessConfig { lambda_sim: 0.9, ..Default::default() }.validate().is_err());
    }

    #[test]
    fn jitter_stays_within_bounds() {
        let s = scene();
        let cfg = RobustnessConfig::default();
        let mut rng = seed::rng(8);
        for (pose, _) in sample_views(&s, 200, 9) {
            let j = jitter_pose(&s, &pose, &cfg, &mut rng);
            assert!(s.is_navigable(&j));
            assert!(pose.distance_to(j.x, j.y) <= 0.02 + 1e-12);
            assert!(crate::scene::wrap_angle(j.theta - pose.theta).abs() <= 1f64.to_radians() + 1e-12);
        }
    }

    #[test]
    fn constant_scorer_is_at_chance() {
        let scenes = vec![scene()];
        let cfg = ScorerEvalConfig { pairs_per_scene: 40, views_per_scene: 40, ..Default::default() };
        let r = eval_scorer(&Constant(0.3), &scenes, 1, &RobustnessConfig::default(), &cfg);
        assert_eq!(r.pair_accuracy, 0.5);
        assert_eq!(r.jitter_mse, 0.0);
        assert_eq!(r.exposure_accuracy, 0.0);
    }

    #[test]
    fn oracle_scorer_is_perfect_on_pairs() {
        let scenes = vec![scene()];
        let cfg = ScorerEvalConfig { pairs_per_scene: 60, views_per_scene: 30, ..Default::default() };
        let r = eval_scorer(&OracleScorer::default(), &scenes, 2, &RobustnessConfig::default(), &cfg);
        assert_eq!(r.pair_accuracy, 1.0);
        assert_eq!(r.exposure_accuracy, 1.0);
    }

    #[test]
    fn zero_iterations_keep_initialisation() {
        let scenes = vec![scene()];
        let cfg = ScorerTrainConfig { iters: 0, ..Default::default() };
        let (s, log) = train_scorer(&scenes, &cfg, &RobustnessConfig::default(), 3).unwrap();
        assert_eq!(s, Scorer::init(3));
        assert!(log.is_empty());
    }

    #[test]
    fn combined_loss_gradient_matches_finite_differences() {
        let s = scene();
        let cfg = RobustnessConfig::default();
        let spec = Scorer::net_spec();
        let mut rng = seed::rng(17);
        for trial in 0..3 {
            let sc = Scorer::init(100 + trial);
            let pair = PreferencePair::draw(&s, 0.05, &mut rng).unwrap();
            let draw = LossDraw::sample(&s, &pair, &cfg, &mut rng);
            let mut grads = vec![0.0; sc.params().len()];
            combined_loss(&sc, &pair, &draw, &cfg, Some(&mut grads));
            let err = netcore::central_difference_error(
                sc.params(),
                &grads,
                |p| {
                    let probe = Scorer::from_params(ParamVector::from_vec(&spec, p.to_vec()).unwrap()).unwrap();
                    combined_loss(&probe, &pair, &draw, &cfg, None).total
                },
                1e-5,
                Some((300, trial)),
            );
            assert!(err <= 1e-4, "relative error {err}");
        }
    }

    #[test]
    fn checkpoint_round_trip() {
        let s = Scorer::init(9);
        let ck = s.to_checkpoint(serde_json::json!({}));
        let back = Checkpoint::read_from(ck.to_bytes().as_slice()).unwrap();
        assert_eq!(Scorer::from_checkpoint(&back).unwrap(), s);
    }
}
