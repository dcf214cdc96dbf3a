//! Paired evaluation of policies, the ablation suite and top-down
//! trajectory images.

use std::fmt::Write as _;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::aesthetics::Scorer;
use crate::baselines::{greedy_policy, keyframe_policy, random_policy, rule_of_thirds_policy, DEFAULT_BUDGET};
use crate::pomdp::{draw_start, ActionSet, CaptureEnv, EnvError, EpisodeConfig, EpisodeStart, EpisodeTranscript, ResetMode, RewardTerms, SceneContext};
use crate::policy::{train, FeatureSet, MetricsRow, PolicyArch, PolicyError, PolicyNet, PpoConfig};
use crate::scene::{true_aesthetic, Pose, SceneSpec, CELL_SIZE};
use crate::seed;

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error("scene ids {0:?} appear in both the training and the evaluation set")]
    Overlap(Vec<u64>),
    #[error("transcript belongs to scene {transcript}, not scene {scene}")]
    SceneMismatch { scene: u64, transcript: u64 },
    #[error("no evaluation scenes")]
    NoScenes,
    #[error(transparent)]
    Policy(#[from] PolicyError),
    #[error(transparent)]
    Env(#[from] EnvError),
}

/// A policy under evaluation.
#[derive(Debug, Clone, Copy)]
pub enum EvalPolicy<'a> {
    Random,
    Thirds,
    Greedy { budget: usize },
    KeyFrame { budget: usize },
    Imitation(&'a PolicyNet),
    /// A trained agent with its frozen exploration counter.
    Rl { net: &'a PolicyNet, zeta: u64 },
}

impl EvalPolicy<'_> {
    pub fn greedy() -> Self {
        EvalPolicy::Greedy { budget: DEFAULT_BUDGET }
    }

    pub fn keyframe() -> Self {
        EvalPolicy::KeyFrame { budget: DEFAULT_BUDGET }
    }

    pub fn name(&self) -> &'static str {
        match self {
            EvalPolicy::Random => "random",
            EvalPolicy::Thirds => "thirds",
            EvalPolicy::Greedy { .. } => "greedy",
            EvalPolicy::KeyFrame { .. } => "keyframe",
            EvalPolicy::Imitation(_) => "imitation",
            EvalPolicy::Rl { .. } => "rl",
        }
    }

    /// Plays one episode. `seed` drives the policy's own randomness.
    pub fn run(&self, env: CaptureEnv<'_>, seed: u64) -> Result<EpisodeTranscript, HarnessError> {
        let zeta = match self {
            EvalPolicy::Rl { zeta, .. } => *zeta,
            _ => 0,
        };
        let mut rng = seed::rng(seed);
        Ok(match self {
            EvalPolicy::Random => random_policy(env, &mut rng, zeta)?,
            EvalPolicy::Thirds => rule_of_thirds_policy(env, zeta)?,
            EvalPolicy::Greedy { budget } => greedy_policy(env, *budget, zeta)?,
            EvalPolicy::KeyFrame { budget } => keyframe_policy(env, *budget, &mut rng, zeta)?,
            EvalPolicy::Imitation(net) => net.run_episode(env, zeta)?,
            EvalPolicy::Rl { net, .. } => net.run_episode(env, zeta)?,
        })
    }
}

/// One paired episode: every policy starts here with this threshold and
/// this policy seed.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EpisodeSlot {
    pub scene: usize,
    pub episode: usize,
    pub start: EpisodeStart,
    pub policy_seed: u64,
}

/// Start poses and seeds shared by all policies in an evaluation.
pub fn paired_slots(contexts: &[SceneContext], scorer: &Scorer, config: &EpisodeConfig, episodes_per_scene: usize, seed: u64) -> Vec<EpisodeSlot> {
    let mut slots = Vec::with_capacity(contexts.len() * episodes_per_scene);
    for (si, ctx) in contexts.iter().enumerate() {
        for e in 0..episodes_per_scene {
            let path = [ctx.scene_id(), e as u64];
            let start_seed = seed::split_path(seed::split(seed, seed::stream::EPISODE_START), &path);
            let start = draw_start(ctx, scorer, config, start_seed, ResetMode::Eval);
            let policy_seed = seed::split_path(seed::split(seed, seed::stream::POLICY_ACTIONS), &path);
            slots.push(EpisodeSlot { scene: si, episode: e, start, policy_seed });
        }
    }
    slots
}

pub fn check_disjoint(train_ids: &[u64], eval_ids: &[u64]) -> Result<(), HarnessError> {
    let mut overlap: Vec<u64> = eval_ids.iter().copied().filter(|id| train_ids.contains(id)).collect();
    overlap.sort_unstable();
    overlap.dedup();
    if overlap.is_empty() {
        Ok(())
    } else {
        Err(HarnessError::Overlap(overlap))
    }
}

pub fn binomial_stderr(p: f64, n: usize) -> f64 {
    (p * (1.0 - p) / n as f64).sqrt()
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PolicyRow {
    pub policy: String,
    pub scenes: usize,
    pub episodes: usize,
    pub accuracy: f64,
    pub stderr: f64,
    pub mean_len: f64,
    pub mean_phi: f64,
}

impl PolicyRow {
    fn from_transcripts(policy: &str, scenes: usize, transcripts: &[EpisodeTranscript]) -> Self {
        let n = transcripts.len();
        let wins = transcripts.iter().filter(|t| t.success()).count();
        let accuracy = wins as f64 / n as f64;
        Self {
            policy: policy.to_string(),
            scenes,
            episodes: n,
            accuracy,
            stderr: binomial_stderr(accuracy, n),
            mean_len: transcripts.iter().map(|t| t.len() as f64).sum::<f64>() / n as f64,
            mean_phi: transcripts.iter().map(|t| t.final_phi().unwrap_or(f64::NAN)).sum::<f64>() / n as f64,
        }
    }

    pub fn csv_row(&self) -> String {
        format!(
            "{},{},{},{:.6},{:.6},{:.6},{:.6}",
            self.policy, self.scenes, self.episodes, self.accuracy, self.stderr, self.mean_len, self.mean_phi
        )
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EvalReport {
    pub scene_ids: Vec<u64>,
    pub episodes_per_scene: usize,
    pub seed: u64,
    pub rows: Vec<PolicyRow>,
}

impl EvalReport {
    pub const CSV_HEADER: &'static str = "policy,scenes,episodes,accuracy,stderr,mean_len,mean_phi";

    pub fn row(&self, policy: &str) -> Option<&PolicyRow> {
        self.rows.iter().find(|r| r.policy == policy)
    }

    pub fn accuracy(&self, policy: &str) -> Option<f64> {
        self.row(policy).map(|r| r.accuracy)
    }

    /// CSV text; `comment` becomes a leading `#` line when given.
    pub fn to_csv(&self, comment: Option<&str>) -> String {
        let mut out = String::new();
        if let Some(c) = comment {
            writeln!(out, "# {c}").unwrap();
        }
        writeln!(out, "{}", Self::CSV_HEADER).unwrap();
        for r in &self.rows {
            writeln!(out, "{}", r.csv_row()).unwrap();
        }
        out
    }

    pub fn summary(&self) -> String {
        let mut out = format!(
            "{} scenes x {} episodes (seed {})\n",
            self.scene_ids.len(),
            self.episodes_per_scene,
            self.seed
        );
        for r in &self.rows {
            writeln!(
                out,
                "  {:<10} accuracy {:5.1}% ± {:4.1}  mean length {:5.1}  mean final score {:7.3}",
                r.policy,
                100.0 * r.accuracy,
                100.0 * r.stderr,
                r.mean_len,
                r.mean_phi
            )
            .unwrap();
        }
        out
    }
}

/// Runs every policy on the same slots. Episodes run on the rayon pool;
/// results are assembled in slot order, so reports do not depend on the
/// number of threads or on the order of `policies`.
pub fn evaluate_slots(
    policies: &[EvalPolicy<'_>],
    contexts: &[SceneContext],
    scorer: &Scorer,
    config: &EpisodeConfig,
    slots: &[EpisodeSlot],
) -> Result<Vec<(String, Vec<EpisodeTranscript>)>, HarnessError> {
    policies
        .iter()
        .map(|p| {
            let transcripts = slots
                .par_iter()
                .map(|s| p.run(CaptureEnv::new(&contexts[s.scene], scorer, config, s.start), s.policy_seed))
                .collect::<Result<Vec<_>, _>>()?;
            Ok((p.name().to_string(), transcripts))
        })
        .collect()
}

/// Table-style paired evaluation on held-out scenes.
pub fn evaluate(
    policies: &[EvalPolicy<'_>],
    contexts: &[SceneContext],
    scorer: &Scorer,
    config: &EpisodeConfig,
    episodes_per_scene: usize,
    seed: u64,
    train_scene_ids: &[u64],
) -> Result<EvalReport, HarnessError> {
    if contexts.is_empty() {
        return Err(HarnessError::NoScenes);
    }
    let scene_ids: Vec<u64> = contexts.iter().map(SceneContext::scene_id).collect();
    check_disjoint(train_scene_ids, &scene_ids)?;
    let slots = paired_slots(contexts, scorer, config, episodes_per_scene, seed);
    let rows = evaluate_slots(policies, contexts, scorer, config, &slots)?
        .iter()
        .map(|(name, trs)| PolicyRow::from_transcripts(name, contexts.len(), trs))
        .collect();
    Ok(EvalReport { scene_ids, episodes_per_scene, seed, rows })
}

/// The ablated variants plus the full method.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Variant {
    Full,
    NoScoreDiff,
    NoExploration,
    NoShaping,
    NoLstm,
    LastLayerFeatures,
    NoTenNinetyTurns,
}

impl Variant {
    pub const ALL: [Variant; 7] = [
        Variant::Full,
        Variant::NoScoreDiff,
        Variant::NoExploration,
        Variant::NoShaping,
        Variant::NoLstm,
        Variant::LastLayerFeatures,
        Variant::NoTenNinetyTurns,
    ];

    pub fn label(self) -> &'static str {
        match self {
            Variant::Full => "full",
            Variant::NoScoreDiff => "no_score_diff",
            Variant::NoExploration => "no_exploration",
            Variant::NoShaping => "no_score_diff_no_exploration",
            Variant::NoLstm => "no_lstm",
            Variant::LastLayerFeatures => "last_layer_features",
            Variant::NoTenNinetyTurns => "no_10_90_turns",
        }
    }

    pub fn from_label(s: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|v| v.label() == s)
    }

    pub fn arch(self) -> PolicyArch {
        let base = PolicyArch::default();
        match self {
            Variant::NoLstm => PolicyArch { recurrent: false, ..base },
            Variant::LastLayerFeatures => PolicyArch { features: FeatureSet::LastLayer, ..base },
            Variant::NoTenNinetyTurns => PolicyArch { action_set: ActionSet::ThirtyDegreeTurnsOnly, ..base },
            _ => base,
        }
    }

    /// Training episode config; only the reward terms change.
    pub fn episode_config(self, base: &EpisodeConfig) -> EpisodeConfig {
        let reward_terms = match self {
            Variant::NoScoreDiff => RewardTerms { score_diff: false, exploration: true },
            Variant::NoExploration => RewardTerms { score_diff: true, exploration: false },
            Variant::NoShaping => RewardTerms { score_diff: false, exploration: false },
            _ => base.reward_terms,
        };
        EpisodeConfig { reward_terms, ..base.clone() }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AblationRow {
    pub variant: Variant,
    pub accuracy: f64,
    pub stderr: f64,
    pub mean_len: f64,
    pub mean_phi: f64,
}

#[derive(Debug, Clone)]
pub struct AblationReport {
    pub rows: Vec<AblationRow>,
    pub nets: Vec<(Variant, PolicyNet, u64)>,
    pub metrics: Vec<(Variant, Vec<MetricsRow>)>,
}

impl AblationReport {
    pub const CSV_HEADER: &'static str = "variant,accuracy,stderr,mean_len,mean_phi";

    pub fn accuracy(&self, v: Variant) -> Option<f64> {
        self.rows.iter().find(|r| r.variant == v).map(|r| r.accuracy)
    }

    pub fn to_csv(&self, comment: Option<&str>) -> String {
        let mut out = String::new();
        if let Some(c) = comment {
            writeln!(out, "# {c}").unwrap();
        }
        writeln!(out, "{}", Self::CSV_HEADER).unwrap();
        for r in &self.rows {
            writeln!(out, "{},{:.6},{:.6},{:.6},{:.6}", r.variant.label(), r.accuracy, r.stderr, r.mean_len, r.mean_phi).unwrap();
        }
        out
    }
}

/// Trains each variant with the same budget and seed, then evaluates all
/// of them on one set of paired slots.
#[allow(clippy::too_many_arguments)]
pub fn ablation_suite(
    train_pool: &[SceneContext],
    eval_contexts: &[SceneContext],
    scorer: &Scorer,
    ppo: &PpoConfig,
    episode: &EpisodeConfig,
    variants: &[Variant],
    episodes_per_scene: usize,
    seed: u64,
    mut progress: impl FnMut(Variant, &MetricsRow),
) -> Result<AblationReport, HarnessError> {
    let train_ids: Vec<u64> = train_pool.iter().map(SceneContext::scene_id).collect();
    let eval_ids: Vec<u64> = eval_contexts.iter().map(SceneContext::scene_id).collect();
    check_disjoint(&train_ids, &eval_ids)?;
    let train_seed = seed::split(seed, seed::stream::ABLATION);
    let mut nets = Vec::new();
    let mut metrics = Vec::new();
    for &v in variants {
        let out = train(train_pool, scorer, ppo, &v.episode_config(episode), v.arch(), train_seed, |m| progress(v, m))?;
        nets.push((v, out.net, out.zeta));
        metrics.push((v, out.metrics));
    }
    let rows = evaluate_trained(&nets, eval_contexts, scorer, episode, episodes_per_scene, seed)?;
    Ok(AblationReport { rows, nets, metrics })
}

/// Paired evaluation of already trained variants.
pub fn evaluate_trained(
    nets: &[(Variant, PolicyNet, u64)],
    eval_contexts: &[SceneContext],
    scorer: &Scorer,
    episode: &EpisodeConfig,
    episodes_per_scene: usize,
    seed: u64,
) -> Result<Vec<AblationRow>, HarnessError> {
    let slots = paired_slots(eval_contexts, scorer, episode, episodes_per_scene, seed);
    let policies: Vec<EvalPolicy<'_>> = nets.iter().map(|(_, net, zeta)| EvalPolicy::Rl { net, zeta: *zeta }).collect();
    let results = evaluate_slots(&policies, eval_contexts, scorer, episode, &slots)?;
    Ok(nets
        .iter()
        .zip(results)
        .map(|((v, _, _), (_, trs))| {
            let r = PolicyRow::from_transcripts(v.label(), eval_contexts.len(), &trs);
            AblationRow { variant: *v, accuracy: r.accuracy, stderr: r.stderr, mean_len: r.mean_len, mean_phi: r.mean_phi }
        })
        .collect())
}

/// Pixels per grid cell in rendered images.
const PX: f64 = 16.0;
/// Headings sampled per cell for the heatmap.
const HEAT_HEADINGS: usize = 8;

fn svg_point(scene: &SceneSpec, x: f64, y: f64) -> (f64, f64) {
    (x / CELL_SIZE * PX, (scene.grid.height_m() - y) / CELL_SIZE * PX)
}

fn xml_escape(text: &str) -> String {
    text.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

fn heat_colour(t: f64) -> String {
    // Dark blue through orange to pale yellow.
    let t = t.clamp(0.0, 1.0);
    let r = (40.0 + 215.0 * t) as u8;
    let g = (40.0 + 180.0 * t * t) as u8;
    let b = (120.0 * (1.0 - t) + 60.0 * t) as u8;
    format!("#{r:02x}{g:02x}{b:02x}")
}

/// Top-down SVG of one episode over the scene's aesthetic field.
///
/// Occupied cells are gray; free cells show the best true score over a few
/// headings. The path joins the start and every movement step; the capture
/// pose is a ringed marker with a heading tick. `description` becomes the
/// image's `<desc>` element.
pub fn render_trajectory(scene: &SceneSpec, transcript: &EpisodeTranscript, description: Option<&str>) -> Result<String, HarnessError> {
    if scene.scene_id != transcript.scene_id {
        return Err(HarnessError::SceneMismatch { scene: scene.scene_id, transcript: transcript.scene_id });
    }
    let (w, h) = (scene.grid.width(), scene.grid.height());
    let (width, height) = (w as f64 * PX, h as f64 * PX);
    let legend_h = 40.0;
    let mut heat = vec![f64::NAN; w * h];
    for cy in 0..h {
        for cx in 0..w {
            if scene.grid.is_occupied(cx as i64, cy as i64) {
                continue;
            }
            let (x, y) = ((cx as f64 + 0.5) * CELL_SIZE, (cy as f64 + 0.5) * CELL_SIZE);
            heat[cy * w + cx] = (0..HEAT_HEADINGS)
                .map(|k| {
                    let theta = -std::f64::consts::PI + k as f64 * 2.0 * std::f64::consts::PI / HEAT_HEADINGS as f64;
                    true_aesthetic(scene, &Pose::new(x, y, theta))
                })
                .fold(f64::NEG_INFINITY, f64::max);
        }
    }
    let (lo, hi) = heat.iter().filter(|v| v.is_finite()).fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), &v| (a.min(v), b.max(v)));
    let span = if hi > lo { hi - lo } else { 1.0 };

    let mut s = String::new();
    writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{}" viewBox="0 0 {width} {}">"#,
        height + legend_h,
        height + legend_h
    )
    .unwrap();
    if let Some(d) = description {
        writeln!(s, "<desc>{}</desc>", xml_escape(d)).unwrap();
    }
    writeln!(s, r#"<g id="map">"#).unwrap();
    for cy in 0..h {
        for cx in 0..w {
            let fill = match heat[cy * w + cx] {
                v if v.is_finite() => heat_colour((v - lo) / span),
                _ => "#808080".to_string(),
            };
            let (px, py) = (cx as f64 * PX, (h - 1 - cy) as f64 * PX);
            writeln!(s, r#"<rect x="{px}" y="{py}" width="{PX}" height="{PX}" fill="{fill}"/>"#).unwrap();
        }
    }
    writeln!(s, "</g>").unwrap();

    let movement: Vec<_> = transcript.steps().filter(|st| !st.done).collect();
    if !movement.is_empty() {
        let mut vertices = vec![movement[0].pose];
        vertices.extend(movement.iter().map(|st| st.next_pose));
        let points: Vec<String> = vertices
            .iter()
            .map(|p| {
                let (x, y) = svg_point(scene, p.x, p.y);
                format!("{x:.2},{y:.2}")
            })
            .collect();
        writeln!(s, r##"<polyline id="path" fill="none" stroke="#ffffff" stroke-width="2" points="{}"/>"##, points.join(" ")).unwrap();
        writeln!(s, r#"<g id="steps">"#).unwrap();
        for p in &vertices {
            let (x, y) = svg_point(scene, p.x, p.y);
            writeln!(s, r##"<circle cx="{x:.2}" cy="{y:.2}" r="2.5" fill="#ffffff"/>"##).unwrap();
        }
        writeln!(s, "</g>").unwrap();
    }
    let capture = transcript.terminal();
    if let Some(st) = capture {
        let (x, y) = svg_point(scene, st.pose.x, st.pose.y);
        let (tx, ty) = (x + 14.0 * st.pose.theta.cos(), y - 14.0 * st.pose.theta.sin());
        let colour = if transcript.success() { "#2ecc40" } else { "#ff4136" };
        writeln!(s, r#"<g id="capture">"#).unwrap();
        writeln!(s, r#"<circle cx="{x:.2}" cy="{y:.2}" r="6" fill="none" stroke="{colour}" stroke-width="3"/>"#).unwrap();
        writeln!(s, r#"<line x1="{x:.2}" y1="{y:.2}" x2="{tx:.2}" y2="{ty:.2}" stroke="{colour}" stroke-width="2"/>"#).unwrap();
        writeln!(s, "</g>").unwrap();
    }
    let final_phi = transcript.final_phi().map_or("n/a".to_string(), |v| format!("{v:.3}"));
    writeln!(
        s,
        r#"<text id="legend" x="6" y="{:.0}" font-family="monospace" font-size="14">scene {} | tau = {:.3} | final phi = {} | {}</text>"#,
        height + 25.0,
        scene.scene_id,
        transcript.tau(),
        final_phi,
        if transcript.success() { "success" } else { "failure" }
    )
    .unwrap();
    writeln!(s, "</svg>").unwrap();
    Ok(s)
}
