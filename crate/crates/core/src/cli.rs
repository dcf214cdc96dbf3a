//! Command-line entry point.
//!
//! Exit codes: 0 on success, 1 for configuration and input errors (bad
//! flags, unreadable or malformed inputs, train/eval overlap), 2 when a
//! run fails part way.

use std::ffi::OsString;
use std::fs;
use std::io::Write as _;
use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand, ValueEnum};
use rayon::prelude::*;
use thiserror::Error;

use crate::aesthetics::{eval_scorer, train_scorer, Scorer, ScorerReport};
use crate::baselines::{generate_demonstrations, imitation_train};
use crate::config::{ConfigError, RunConfig};
use crate::harness::{ablation_suite, check_disjoint, evaluate, render_trajectory, EvalPolicy, Variant};
use crate::netcore::Checkpoint;
use crate::policy::{train, PolicyArch, PolicyNet, METRICS_HEADER};
use crate::pomdp::{draw_start, CaptureEnv, EpisodeTranscript, ResetMode, SceneContext};
use crate::scene::{generate_scene, SceneSpec};
use crate::seed;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error("missing input {}", .0.display())]
    Missing(PathBuf),
    #[error("malformed input {}: {msg}", path.display())]
    Malformed { path: PathBuf, msg: String },
    #[error("train/eval scene overlap: scene ids {0:?} were used for training")]
    Overlap(Vec<u64>),
    #[error("{0}")]
    Runtime(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Runtime(_) => 2,
            _ => 1,
        }
    }
}

fn runtime(e: impl std::fmt::Display) -> CliError {
    CliError::Runtime(e.to_string())
}

#[derive(Debug, Parser)]
#[command(name = "autophoto", version, about = "Autonomous aesthetic photo capture lab")]
struct Cli {
    /// JSON run configuration; missing keys take defaults, unknown keys are errors.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Worker threads.
    #[arg(long, global = true, default_value_t = 1)]
    jobs: usize,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum PolicyName {
    Random,
    Thirds,
    Greedy,
    Keyframe,
    Imitation,
    Rl,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Generate procedural scenes.
    GenScenes {
        #[arg(long)]
        count: usize,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        out: Option<PathBuf>,
        /// Id of the first scene; ids are consecutive.
        #[arg(long, default_value_t = 0)]
        first_id: u64,
    },
    /// Train the aesthetic scorer. Also writes a loss log next to the checkpoint.
    TrainScorer {
        #[arg(long)]
        scenes: Option<PathBuf>,
        #[arg(long)]
        iters: Option<usize>,
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Held-out scorer quality: pair ranking, exposure ranking, jitter MSE.
    EvalScorer {
        #[arg(long)]
        scorer: Option<PathBuf>,
        #[arg(long)]
        scenes: Option<PathBuf>,
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Train the recurrent actor-critic agent.
    TrainAgent {
        #[arg(long)]
        scenes: Option<PathBuf>,
        #[arg(long)]
        scorer: Option<PathBuf>,
        #[arg(long)]
        steps: Option<usize>,
        #[arg(long)]
        out: Option<PathBuf>,
        /// Metrics CSV; defaults to the checkpoint path with a .csv extension.
        #[arg(long)]
        metrics: Option<PathBuf>,
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Generate demonstrations and train the imitation baseline.
    TrainImitation {
        #[arg(long)]
        scenes: Option<PathBuf>,
        #[arg(long)]
        scorer: Option<PathBuf>,
        #[arg(long)]
        demos: Option<usize>,
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Paired evaluation of policies on held-out scenes.
    Eval {
        #[arg(long)]
        scenes: Option<PathBuf>,
        #[arg(long)]
        scorer: Option<PathBuf>,
        #[arg(long, value_enum, value_delimiter = ',', num_args = 1.., required = true)]
        policy: Vec<PolicyName>,
        #[arg(long)]
        episodes: Option<usize>,
        #[arg(long)]
        agent: Option<PathBuf>,
        #[arg(long)]
        imitation: Option<PathBuf>,
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Train and evaluate the ablation variants.
    Ablate {
        /// Training scenes.
        #[arg(long)]
        scenes: Option<PathBuf>,
        /// Held-out evaluation scenes.
        #[arg(long)]
        eval_scenes: Option<PathBuf>,
        #[arg(long)]
        scorer: Option<PathBuf>,
        /// Comma-separated variant labels; all variants by default.
        #[arg(long, value_delimiter = ',')]
        variants: Vec<String>,
        #[arg(long)]
        steps: Option<usize>,
        #[arg(long)]
        episodes: Option<usize>,
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Render an episode transcript as a top-down SVG.
    Render {
        #[arg(long)]
        scene: PathBuf,
        #[arg(long)]
        transcript: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Run one episode and print its transcript.
    Demo {
        #[arg(long)]
        scene: PathBuf,
        #[arg(long)]
        scorer: Option<PathBuf>,
        #[arg(long, value_enum)]
        policy: PolicyName,
        #[arg(long)]
        agent: Option<PathBuf>,
        #[arg(long)]
        imitation: Option<PathBuf>,
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long)]
        seed: Option<u64>,
    },
}

/// Parses `args` (program name first), runs the command and returns the exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    match execute(cli) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}

fn execute(cli: Cli) -> Result<(), CliError> {
    if cli.jobs == 0 {
        return Err(CliError::Usage("--jobs must be at least 1".into()));
    }
    let config = match &cli.config {
        Some(path) if !path.exists() => return Err(CliError::Missing(path.clone())),
        Some(path) => RunConfig::load(path)?,
        None => RunConfig::default(),
    };
    let pool = rayon::ThreadPoolBuilder::new().num_threads(cli.jobs).build().map_err(runtime)?;
    pool.install(|| dispatch(cli.command, config))
}

fn pick(flag: Option<PathBuf>, fallback: &Option<PathBuf>, what: &str) -> Result<PathBuf, CliError> {
    flag.or_else(|| fallback.clone()).ok_or_else(|| CliError::Usage(format!("no {what} given (flag or config paths)")))
}

fn dispatch(command: Command, mut config: RunConfig) -> Result<(), CliError> {
    match command {
        Command::GenScenes { count, seed, out, first_id } => {
            if let Some(s) = seed {
                config.seed = s;
            }
            config.validate()?;
            let out = pick(out, &config.paths.out, "--out directory")?;
            gen_scenes(&config, count, first_id, &out)
        }
        Command::TrainScorer { scenes, iters, out, seed } => {
            if let Some(s) = seed {
                config.seed = s;
            }
            if let Some(i) = iters {
                config.scorer.iters = i;
            }
            config.validate()?;
            let scenes = load_scene_dir(&pick(scenes, &config.paths.scenes, "--scenes")?)?;
            let out = pick(out, &config.paths.scorer, "--out checkpoint")?;
            let (scorer, log) = train_scorer(&scenes, &config.scorer, &config.robustness, seed::split(config.seed, seed::stream::SCORER_INIT))
                .map_err(runtime)?;
            let mut meta = config.artifact_meta();
            meta["train_scene_ids"] = scene_ids(&scenes).into();
            write_file(&out, &scorer.to_checkpoint(meta).to_bytes())?;
            let mut csv = csv_start(&config, "iter,loss,rank_loss,batch_accuracy");
            for e in &log {
                csv.push_str(&format!("{},{:.6},{:.6},{:.6}\n", e.iter, e.loss, e.rank_loss, e.batch_accuracy));
            }
            write_file(&out.with_extension("csv"), csv.as_bytes())
        }
        Command::EvalScorer { scorer, scenes, out, seed } => {
            if let Some(s) = seed {
                config.seed = s;
            }
            config.validate()?;
            let scenes_dir = pick(scenes, &config.paths.scenes, "--scenes")?;
            let scenes = load_scene_dir(&scenes_dir)?;
            let (scorer, _) = load_scorer(&pick(scorer, &config.paths.scorer, "--scorer")?)?;
            let report = eval_scorer(&scorer, &scenes, seed::split(config.seed, seed::stream::SCORER_EVAL), &config.robustness, &config.scorer_eval);
            let set = scenes_dir.file_name().map_or_else(|| scenes_dir.display().to_string(), |n| n.to_string_lossy().into_owned());
            let mut csv = csv_start(&config, ScorerReport::CSV_HEADER);
            csv.push_str(&report.csv_row(&set));
            csv.push('\n');
            emit(out.as_deref(), &csv)
        }
        Command::TrainAgent { scenes, scorer, steps, out, metrics, seed } => {
            if let Some(s) = seed {
                config.seed = s;
            }
            if let Some(n) = steps {
                config.ppo.total_steps = n;
            }
            config.validate()?;
            let scenes = load_scene_dir(&pick(scenes, &config.paths.scenes, "--scenes")?)?;
            let (scorer, _) = load_scorer(&pick(scorer, &config.paths.scorer, "--scorer")?)?;
            let out = pick(out, &config.paths.agent, "--out checkpoint")?;
            let ids = scene_ids(&scenes);
            let contexts = build_contexts(scenes, &scorer, &config);
            let result = train(&contexts, &scorer, &config.ppo, &config.episode, PolicyArch::default(), seed::split(config.seed, seed::stream::POLICY_INIT), |m| {
                eprintln!("update {} env_steps {} capture_acc {:.3} mean_len {:.1}", m.update, m.env_steps, m.capture_acc, m.mean_len)
            })
            .map_err(runtime)?;
            let mut meta = config.artifact_meta();
            meta["train_scene_ids"] = ids.into();
            meta["zeta"] = result.zeta.into();
            write_file(&out, &result.net.to_checkpoint(meta).to_bytes())?;
            let mut csv = csv_start(&config, METRICS_HEADER);
            for m in &result.metrics {
                csv.push_str(&m.csv_row());
                csv.push('\n');
            }
            write_file(&metrics.unwrap_or_else(|| out.with_extension("csv")), csv.as_bytes())
        }
        Command::TrainImitation { scenes, scorer, demos, out, seed } => {
            if let Some(s) = seed {
                config.seed = s;
            }
            if let Some(n) = demos {
                config.imitation.demos = n;
            }
            config.validate()?;
            let scenes = load_scene_dir(&pick(scenes, &config.paths.scenes, "--scenes")?)?;
            let (scorer, _) = load_scorer(&pick(scorer, &config.paths.scorer, "--scorer")?)?;
            let out = pick(out, &config.paths.imitation, "--out checkpoint")?;
            let ids = scene_ids(&scenes);
            let contexts = build_contexts(scenes, &scorer, &config);
            let demos = generate_demonstrations(&contexts, &scorer, &config.episode, config.imitation.demos, config.seed).map_err(runtime)?;
            let (net, report) = imitation_train(&demos, &config.imitation, config.seed).map_err(runtime)?;
            eprintln!(
                "demos {} train_loss {:.4} train_acc {:.3} val_acc {:.3}",
                demos.len(),
                report.train_loss,
                report.train_accuracy,
                report.validation_accuracy
            );
            let mut meta = config.artifact_meta();
            meta["train_scene_ids"] = ids.into();
            meta["demonstrations"] = demos.len().into();
            meta["validation_accuracy"] = report.validation_accuracy.into();
            write_file(&out, &net.to_checkpoint(meta).to_bytes())
        }
        Command::Eval { scenes, scorer, policy, episodes, agent, imitation, out, seed } => {
            if let Some(s) = seed {
                config.seed = s;
            }
            if let Some(n) = episodes {
                config.eval.episodes_per_scene = n;
            }
            config.validate()?;
            let scenes = load_scene_dir(&pick(scenes, &config.paths.eval_scenes.clone().or(config.paths.scenes.clone()), "--scenes")?)?;
            let (scorer, _) = load_scorer(&pick(scorer, &config.paths.scorer, "--scorer")?)?;
            let mut train_ids = Vec::new();
            let rl = if policy.contains(&PolicyName::Rl) {
                let (net, meta) = load_policy(&pick(agent, &config.paths.agent, "--agent checkpoint")?)?;
                train_ids.extend(meta_ids(&meta));
                Some((net, meta["zeta"].as_u64().unwrap_or(0)))
            } else {
                None
            };
            let imit = if policy.contains(&PolicyName::Imitation) {
                let (net, meta) = load_policy(&pick(imitation, &config.paths.imitation, "--imitation checkpoint")?)?;
                train_ids.extend(meta_ids(&meta));
                Some(net)
            } else {
                None
            };
            let eval_ids = scene_ids(&scenes);
            check_overlap(&train_ids, &eval_ids)?;
            let mut policies = Vec::new();
            let mut seen = Vec::new();
            for p in policy {
                if seen.contains(&p) {
                    continue;
                }
                seen.push(p);
                policies.push(match p {
                    PolicyName::Random => EvalPolicy::Random,
                    PolicyName::Thirds => EvalPolicy::Thirds,
                    PolicyName::Greedy => EvalPolicy::Greedy { budget: config.eval.budget },
                    PolicyName::Keyframe => EvalPolicy::KeyFrame { budget: config.eval.budget },
                    PolicyName::Imitation => EvalPolicy::Imitation(imit.as_ref().expect("loaded above")),
                    PolicyName::Rl => {
                        let (net, zeta) = rl.as_ref().expect("loaded above");
                        EvalPolicy::Rl { net, zeta: *zeta }
                    }
                });
            }
            let contexts = build_contexts(scenes, &scorer, &config);
            let report = evaluate(&policies, &contexts, &scorer, &config.episode, config.eval.episodes_per_scene, config.seed, &train_ids)
                .map_err(runtime)?;
            eprint!("{}", report.summary());
            emit(out.as_deref(), &report.to_csv(Some(&config.csv_comment())))
        }
        Command::Ablate { scenes, eval_scenes, scorer, variants, steps, episodes, out, seed } => {
            if let Some(s) = seed {
                config.seed = s;
            }
            if let Some(n) = steps {
                config.ppo.total_steps = n;
            }
            if let Some(n) = episodes {
                config.eval.episodes_per_scene = n;
            }
            config.validate()?;
            let variants: Vec<Variant> = if variants.is_empty() {
                Variant::ALL.to_vec()
            } else {
                variants
                    .iter()
                    .map(|v| Variant::from_label(v).ok_or_else(|| CliError::Usage(format!("unknown variant {v:?}"))))
                    .collect::<Result<_, _>>()?
            };
            let train_scenes = load_scene_dir(&pick(scenes, &config.paths.scenes, "--scenes")?)?;
            let eval_scenes = load_scene_dir(&pick(eval_scenes, &config.paths.eval_scenes, "--eval-scenes")?)?;
            check_overlap(&scene_ids(&train_scenes), &scene_ids(&eval_scenes))?;
            let (scorer, _) = load_scorer(&pick(scorer, &config.paths.scorer, "--scorer")?)?;
            let train_pool = build_contexts(train_scenes, &scorer, &config);
            let eval_pool = build_contexts(eval_scenes, &scorer, &config);
            let report = ablation_suite(
                &train_pool,
                &eval_pool,
                &scorer,
                &config.ppo,
                &config.episode,
                &variants,
                config.eval.episodes_per_scene,
                config.seed,
                |v, m| eprintln!("{} update {} capture_acc {:.3}", v.label(), m.update, m.capture_acc),
            )
            .map_err(runtime)?;
            emit(out.as_deref(), &report.to_csv(Some(&config.csv_comment())))
        }
        Command::Render { scene, transcript, out } => {
            config.validate()?;
            let scene = load_scene(&scene)?;
            let tr = load_transcript(&transcript)?;
            let desc = config.csv_comment();
            let svg = render_trajectory(&scene, &tr, Some(&desc)).map_err(|e| CliError::Malformed { path: transcript.clone(), msg: e.to_string() })?;
            emit(out.as_deref(), &svg)
        }
        Command::Demo { scene, scorer, policy, agent, imitation, out, seed } => {
            if let Some(s) = seed {
                config.seed = s;
            }
            config.validate()?;
            let scene = load_scene(&scene)?;
            let (scorer, _) = load_scorer(&pick(scorer, &config.paths.scorer, "--scorer")?)?;
            let loaded = match policy {
                PolicyName::Rl => {
                    let (net, meta) = load_policy(&pick(agent, &config.paths.agent, "--agent checkpoint")?)?;
                    Some((net, meta["zeta"].as_u64().unwrap_or(0)))
                }
                PolicyName::Imitation => Some((load_policy(&pick(imitation, &config.paths.imitation, "--imitation checkpoint")?)?.0, 0)),
                _ => None,
            };
            let p = match policy {
                PolicyName::Random => EvalPolicy::Random,
                PolicyName::Thirds => EvalPolicy::Thirds,
                PolicyName::Greedy => EvalPolicy::Greedy { budget: config.eval.budget },
                PolicyName::Keyframe => EvalPolicy::KeyFrame { budget: config.eval.budget },
                PolicyName::Imitation => EvalPolicy::Imitation(&loaded.as_ref().expect("loaded above").0),
                PolicyName::Rl => {
                    let (net, zeta) = loaded.as_ref().expect("loaded above");
                    EvalPolicy::Rl { net, zeta: *zeta }
                }
            };
            let ctx = SceneContext::new(scene, &scorer, config.episode.n_samples);
            let start = draw_start(&ctx, &scorer, &config.episode, seed::split(config.seed, seed::stream::EPISODE_START), ResetMode::Eval);
            let env = CaptureEnv::new(&ctx, &scorer, &config.episode, start);
            let tr = p.run(env, seed::split(config.seed, seed::stream::POLICY_ACTIONS)).map_err(runtime)?;
            let mut meta = config.artifact_meta();
            meta["policy"] = p.name().into();
            emit(out.as_deref(), &tr.to_ndjson(Some(meta)))
        }
    }
}

fn gen_scenes(config: &RunConfig, count: usize, first_id: u64, out: &Path) -> Result<(), CliError> {
    fs::create_dir_all(out).map_err(runtime)?;
    let meta = config.artifact_meta();
    for id in first_id..first_id + count as u64 {
        let scene = generate_scene(id, seed::split_path(config.seed, &[seed::stream::SCENE, id]), &config.scenes).map_err(runtime)?;
        let json = scene.to_json_with_meta(Some(meta.clone())).map_err(runtime)?;
        write_file(&out.join(format!("scene_{id:05}.json")), json.as_bytes())?;
    }
    Ok(())
}

fn read_input(path: &Path) -> Result<Vec<u8>, CliError> {
    if !path.exists() {
        return Err(CliError::Missing(path.to_path_buf()));
    }
    fs::read(path).map_err(|e| CliError::Malformed { path: path.to_path_buf(), msg: e.to_string() })
}

fn write_file(path: &Path, bytes: &[u8]) -> Result<(), CliError> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(runtime)?;
    }
    fs::write(path, bytes).map_err(|e| CliError::Runtime(format!("cannot write {}: {e}", path.display())))
}

/// Writes to `out`, or to stdout when no path is given.
fn emit(out: Option<&Path>, text: &str) -> Result<(), CliError> {
    match out {
        Some(p) => write_file(p, text.as_bytes()),
        None => std::io::stdout().lock().write_all(text.as_bytes()).map_err(runtime),
    }
}

fn csv_start(config: &RunConfig, header: &str) -> String {
    format!("# {}\n{header}\n", config.csv_comment())
}

fn load_scene(path: &Path) -> Result<SceneSpec, CliError> {
    let bytes = read_input(path)?;
    SceneSpec::read_from(bytes.as_slice()).map_err(|e| CliError::Malformed { path: path.to_path_buf(), msg: e.to_string() })
}

/// Every `*.json` file in `dir`, in file-name order.
pub fn load_scene_dir(dir: &Path) -> Result<Vec<SceneSpec>, CliError> {
    if !dir.is_dir() {
        return Err(CliError::Missing(dir.to_path_buf()));
    }
    let mut paths: Vec<PathBuf> = fs::read_dir(dir)
        .map_err(|e| CliError::Malformed { path: dir.to_path_buf(), msg: e.to_string() })?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|x| x == "json"))
        .collect();
    paths.sort();
    if paths.is_empty() {
        return Err(CliError::Malformed { path: dir.to_path_buf(), msg: "no scene files".into() });
    }
    paths.iter().map(|p| load_scene(p)).collect()
}

fn load_checkpoint(path: &Path) -> Result<Checkpoint, CliError> {
    let bytes = read_input(path)?;
    Checkpoint::read_from(bytes.as_slice()).map_err(|e| CliError::Malformed { path: path.to_path_buf(), msg: e.to_string() })
}

fn load_scorer(path: &Path) -> Result<(Scorer, serde_json::Value), CliError> {
    let ckpt = load_checkpoint(path)?;
    let scorer = Scorer::from_checkpoint(&ckpt).map_err(|e| CliError::Malformed { path: path.to_path_buf(), msg: e.to_string() })?;
    Ok((scorer, ckpt.meta))
}

fn load_policy(path: &Path) -> Result<(PolicyNet, serde_json::Value), CliError> {
    let ckpt = load_checkpoint(path)?;
    let net = PolicyNet::from_checkpoint(&ckpt).map_err(|e| CliError::Malformed { path: path.to_path_buf(), msg: e.to_string() })?;
    Ok((net, ckpt.meta))
}

fn load_transcript(path: &Path) -> Result<EpisodeTranscript, CliError> {
    let bytes = read_input(path)?;
    EpisodeTranscript::read_ndjson(bytes.as_slice()).map_err(|e| CliError::Malformed { path: path.to_path_buf(), msg: e.to_string() })
}

fn scene_ids(scenes: &[SceneSpec]) -> Vec<u64> {
    scenes.iter().map(|s| s.scene_id).collect()
}

fn meta_ids(meta: &serde_json::Value) -> Vec<u64> {
    meta["train_scene_ids"].as_array().map(|a| a.iter().filter_map(|v| v.as_u64()).collect()).unwrap_or_default()
}

fn check_overlap(train_ids: &[u64], eval_ids: &[u64]) -> Result<(), CliError> {
    check_disjoint(train_ids, eval_ids).map_err(|e| match e {
        crate::harness::HarnessError::Overlap(ids) => CliError::Overlap(ids),
        other => runtime(other),
    })
}

fn build_contexts(scenes: Vec<SceneSpec>, scorer: &Scorer, config: &RunConfig) -> Vec<SceneContext> {
    scenes.into_par_iter().map(|s| SceneContext::new(s, scorer, config.episode.n_samples)).collect()
}
