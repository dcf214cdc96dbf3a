//! Property tests over the public API.

use autophoto::aesthetics::{rank_loss, total_loss, OracleScorer, PreferencePair, RobustnessConfig, Scorer, ViewScorer};
use autophoto::baselines::{greedy_policy, keyframe_policy, random_policy};
use autophoto::harness::{binomial_stderr, evaluate, EvalPolicy};
use autophoto::policy::{softmax_with_log, ActMode, PolicyArch, PolicyNet};
use autophoto::pomdp::{apply_action, Action, CaptureEnv, EpisodeConfig, ResetMode, SceneContext, ViewSamples};
use autophoto::scene::{generate_scene, random_pose, render_view, true_aesthetic, GenerationConfig, Pose};
use autophoto::seed;
use proptest::prelude::*;
use rand::seq::SliceRandom;

fn cases(n: u32) -> ProptestConfig {
    ProptestConfig { cases: n, ..ProptestConfig::default() }
}

proptest! {
    #![proptest_config(cases(48))]

    #[test]
    fn quarter_turn_preserves_true_aesthetic(seed in 0u64..10_000, pose_seed in any::<u64>()) {
        let scene = generate_scene(1, seed, &GenerationConfig::default()).unwrap();
        let rotated = scene.rotated_quarter_turn();
        let cells = scene.grid.navigable_cells();
        let pose = random_pose(&cells, &mut seed::rng(pose_seed));
        let a = true_aesthetic(&scene, &pose);
        let b = true_aesthetic(&rotated, &scene.rotate_pose_quarter_turn(&pose));
        prop_assert!((a - b).abs() <= 1e-9, "{a} vs {b}");
    }

    #[test]
    fn views_are_well_formed(seed in 0u64..10_000, pose_seed in any::<u64>(), brightness in 0.1f64..5.0) {
        let scene = generate_scene(2, seed, &GenerationConfig::default()).unwrap();
        let pose = random_pose(&scene.grid.navigable_cells(), &mut seed::rng(pose_seed));
        let view = render_view(&scene, &pose, brightness);
        if view.salient_present {
            prop_assert!((0.0..=1.0).contains(&view.salient_x));
        }
        prop_assert!(view.hotspot_intensity.iter().all(|&v| v >= 0.0));
        // Exposure changes the observation, never the ground truth.
        let oracle = OracleScorer { exposure_penalty: 0.0 };
        prop_assert_eq!(oracle.score_view(&scene, &pose, &view), true_aesthetic(&scene, &pose));
    }

    #[test]
    fn forward_back_and_four_left_quarter_turns_close(seed in 0u64..10_000, pose_seed in any::<u64>()) {
        let scene = generate_scene(3, seed, &GenerationConfig::default()).unwrap();
        let pose = random_pose(&scene.grid.navigable_cells(), &mut seed::rng(pose_seed));
        let (fwd, blocked_f) = apply_action(&scene, &pose, Action::Forward);
        if !blocked_f {
            let (back, blocked_b) = apply_action(&scene, &fwd, Action::Backward);
            if !blocked_b {
                prop_assert_eq!(back, pose);
            }
        }
        let mut p = pose;
        for _ in 0..4 {
            p = apply_action(&scene, &p, Action::TurnL90).0;
        }
        let d = (p.theta - pose.theta).rem_euclid(std::f64::consts::TAU);
        prop_assert!(d.min(std::f64::consts::TAU - d) <= 1e-12);
    }

    #[test]
    fn rank_loss_zero_iff_margin(a in -5.0f64..5.0, b in -5.0f64..5.0) {
        let l = rank_loss(a, b);
        prop_assert!(l >= 0.0);
        prop_assert_eq!(l == 0.0, a >= b + 1.0);
    }

    #[test]
    fn total_loss_is_non_negative(seed in 0u64..1000) {
        let scene = generate_scene(4, seed, &GenerationConfig::default()).unwrap();
        let scorer = Scorer::init(seed);
        let mut rng = seed::rng(seed);
        if let Some(pair) = PreferencePair::draw(&scene, 0.05, &mut rng) {
            prop_assert!(total_loss(&scorer, &scene, &pair, &RobustnessConfig::default(), &mut rng) >= 0.0);
        }
    }

    #[test]
    fn actor_outputs_are_distributions(logits in proptest::collection::vec(-50.0f64..50.0, 9)) {
        let (p, logp) = softmax_with_log(&logits);
        prop_assert!((p.iter().sum::<f64>() - 1.0).abs() <= 1e-9);
        for (pi, lp) in p.iter().zip(&logp) {
            prop_assert!(*pi >= 0.0 && (lp.exp() - pi).abs() <= 1e-12);
        }
    }

    #[test]
    fn stderr_matches_binomial(wins in 0usize..200, extra in 1usize..200) {
        let n = wins + extra;
        let p = wins as f64 / n as f64;
        prop_assert!((binomial_stderr(p, n) - (p * (1.0 - p) / n as f64).sqrt()).abs() <= 1e-12);
    }
}

proptest! {
    #![proptest_config(cases(24))]

    #[test]
    fn threshold_ignores_sample_order(scores in proptest::collection::vec(-3.0f64..3.0, 60), shuffle_seed in any::<u64>()) {
        // Distinct distances so the nearest set has no ties.
        let poses: Vec<Pose> = (0..scores.len()).map(|i| Pose::new(1.0 + 0.05 * i as f64, 1.0, 0.0)).collect();
        let base = ViewSamples::from_scores(poses.clone(), scores.clone()).threshold(&Pose::new(1.0, 1.0, 0.0), 20);
        let mut order: Vec<usize> = (0..scores.len()).collect();
        order.shuffle(&mut seed::rng(shuffle_seed));
        let shuffled = ViewSamples::from_scores(order.iter().map(|&i| poses[i]).collect(), order.iter().map(|&i| scores[i]).collect())
            .threshold(&Pose::new(1.0, 1.0, 0.0), 20);
        prop_assert_eq!(base.tau.to_bits(), shuffled.tau.to_bits());
    }

    #[test]
    fn episodes_respect_length_and_reward_contracts(seed in 0u64..500, zeta0 in 0u64..100_000) {
        let scorer = Scorer::init(seed);
        let cfg = EpisodeConfig { n_samples: 300, ..EpisodeConfig::default() };
        let ctx = SceneContext::new(generate_scene(5, seed, &GenerationConfig::default()).unwrap(), &scorer, cfg.n_samples);
        let env = CaptureEnv::reset(&ctx, &scorer, &cfg, seed, ResetMode::Eval);
        let tr = random_policy(env, &mut seed::rng(seed), zeta0).unwrap();
        prop_assert!(tr.len() <= cfg.max_steps + 1);
        let stored: Vec<f64> = tr.steps().map(|s| s.reward).collect();
        for (a, b) in stored.iter().zip(tr.recomputed_rewards()) {
            prop_assert!((a - b).abs() <= 1e-12);
        }
    }

    #[test]
    fn budgeted_baselines_hold_their_contracts(seed in 0u64..500) {
        let scorer = Scorer::init(seed);
        let cfg = EpisodeConfig { n_samples: 300, ..EpisodeConfig::default() };
        let ctx = SceneContext::new(generate_scene(6, seed, &GenerationConfig::default()).unwrap(), &scorer, cfg.n_samples);
        let g = greedy_policy(CaptureEnv::reset(&ctx, &scorer, &cfg, seed, ResetMode::Eval), 16, 0).unwrap();
        prop_assert!(g.executed_actions() <= 16);
        let committed: Vec<_> = g.steps().filter(|s| !s.done).collect();
        prop_assert!(committed.iter().all(|s| s.phi_next >= s.phi));
        let k = keyframe_policy(CaptureEnv::reset(&ctx, &scorer, &cfg, seed, ResetMode::Eval), 16, &mut seed::rng(seed), 0).unwrap();
        prop_assert!(k.executed_actions() <= 16);
        let seen = k.steps().filter(|s| !s.done).flat_map(|s| [s.phi, s.phi_next]).fold(f64::NEG_INFINITY, f64::max);
        prop_assert_eq!(k.final_phi().unwrap(), seen);
    }
}

#[test]
fn greedy_act_is_deterministic() {
    let net = PolicyNet::init(PolicyArch::default(), 4);
    let x: Vec<f64> = (0..160).map(|i| (i as f64 * 0.37).sin()).collect();
    let s = net.zero_state();
    let a = net.act(&x, &s, ActMode::Greedy, &mut seed::rng(1)).unwrap();
    let b = net.act(&x, &s, ActMode::Greedy, &mut seed::rng(2)).unwrap();
    assert_eq!(a.index, b.index);
    assert_eq!(a.log_prob.to_bits(), b.log_prob.to_bits());
}

#[test]
fn policy_order_does_not_change_accuracies() {
    let scorer = Scorer::init(8);
    let cfg = EpisodeConfig { n_samples: 300, ..EpisodeConfig::default() };
    let ctx: Vec<SceneContext> =
        (20..22).map(|i| SceneContext::new(generate_scene(i, i, &GenerationConfig::default()).unwrap(), &scorer, cfg.n_samples)).collect();
    let fwd = [EvalPolicy::Random, EvalPolicy::greedy(), EvalPolicy::keyframe(), EvalPolicy::Thirds];
    let rev: Vec<_> = fwd.iter().rev().copied().collect();
    let a = evaluate(&fwd, &ctx, &scorer, &cfg, 6, 3, &[]).unwrap();
    let b = evaluate(&rev, &ctx, &scorer, &cfg, 6, 3, &[]).unwrap();
    for p in ["random", "greedy", "keyframe", "thirds"] {
        assert_eq!(a.row(p), b.row(p));
    }
}
