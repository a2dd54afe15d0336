//! Command-line driver.

use std::ffi::OsString;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use metastab_core::align::Alignment;
use metastab_core::flow::GlobalFlowConfig;
use metastab_core::image::Role;
use metastab_core::losses::LossContext;
use metastab_core::meta::{meta_inference, meta_train, train_conventional, AdaptSamples, StepLog, TrainingVideo};
use metastab_core::metrics::{evaluate, EvalOptions, Reduction};
use metastab_core::regressor::{evaluate_regressor, sample_warps, train_affine_regressor, AffineRegressor};
use metastab_core::rigid::RigidTransform;
use metastab_core::synth::{synthesize_pair, ProceduralScene, Source};
use metastab_core::synthesis::SynthesisNet;
use serde::Serialize;

use crate::checkpoint::{load_regressor, load_synthesis, save_params};
use crate::config::{self, MetaTrainConfig, StabilizeConfig, SynthDataConfig, TrainAffineConfig};
use crate::error::{Error, Result};
use crate::log::JsonLines;
use crate::manifest::{Manifest, MANIFEST_NAME};
use crate::sequence::{load_sequence, save_sequence};

#[derive(Parser, Debug)]
#[command(name = "metastab", version, about = "Test-time adapted full-frame video stabilization")]
pub struct Cli {
    /// Seed for every random choice of the run (overrides the config file).
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Worker threads (default: available parallelism).
    #[arg(long, global = true)]
    pub workers: Option<usize>,
    /// TOML or JSON file with subcommand settings; flags win over it.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Generate synthetic stable/unstable training pairs.
    SynthData(SynthDataArgs),
    /// Train the rigid-motion regressor on synthetic warps.
    TrainAffine(TrainAffineArgs),
    /// Meta-train the synthesis network on a synthetic dataset.
    MetaTrain(MetaTrainArgs),
    /// Adapt to a video and stabilize it.
    Stabilize(StabilizeArgs),
    /// Score a stabilized video against its original.
    Evaluate(EvaluateArgs),
}

#[derive(Args, Debug)]
pub struct SynthDataArgs {
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long)]
    pub videos: Option<usize>,
    #[arg(long)]
    pub frames: Option<usize>,
    /// Square frame side.
    #[arg(long)]
    pub size: Option<usize>,
    #[arg(long)]
    pub sprites: Option<usize>,
    /// Shake profile as JSON.
    #[arg(long)]
    pub profile: Option<PathBuf>,
}

#[derive(Args, Debug)]
pub struct TrainAffineArgs {
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long)]
    pub steps: Option<usize>,
    #[arg(long)]
    pub samples: Option<usize>,
    #[arg(long)]
    pub held_out: Option<usize>,
    /// JSON-lines training log (default: next to the checkpoint).
    #[arg(long)]
    pub log: Option<PathBuf>,
}

#[derive(Args, Debug)]
pub struct MetaTrainArgs {
    /// Directory written by `synth-data`.
    #[arg(long)]
    pub data: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long)]
    pub steps: Option<usize>,
    #[arg(long)]
    pub meta_batch: Option<usize>,
    #[arg(long)]
    pub alpha: Option<f64>,
    #[arg(long)]
    pub beta: Option<f64>,
    #[arg(long)]
    pub adapt_steps: Option<usize>,
    #[arg(long)]
    pub k: Option<usize>,
    #[arg(long)]
    pub base_width: Option<usize>,
    #[arg(long)]
    pub lambda_s: Option<f64>,
    #[arg(long)]
    pub lambda_p: Option<f64>,
    #[arg(long)]
    pub checkpoint_every: Option<usize>,
    /// Train without the inner loop.
    #[arg(long)]
    pub conventional: bool,
    /// Learned rigid regressor for the alignment guide (default: robust fit).
    #[arg(long)]
    pub regressor: Option<PathBuf>,
    #[arg(long)]
    pub log: Option<PathBuf>,
}

#[derive(Args, Debug)]
pub struct StabilizeArgs {
    #[arg(long)]
    pub model: PathBuf,
    #[arg(long)]
    pub video: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long)]
    pub adapt_steps: Option<usize>,
    /// `all` or a number of random clips.
    #[arg(long, value_parser = parse_samples)]
    pub adapt_samples: Option<AdaptSamples>,
    #[arg(long)]
    pub alpha: Option<f64>,
    #[arg(long)]
    pub lambda_s: Option<f64>,
    #[arg(long)]
    pub lambda_p: Option<f64>,
    /// Half window; must match the model.
    #[arg(long)]
    pub k: Option<usize>,
    #[arg(long)]
    pub recurrent: bool,
    #[arg(long)]
    pub regressor: Option<PathBuf>,
}

#[derive(Args, Debug)]
pub struct EvaluateArgs {
    #[arg(long)]
    pub original: PathBuf,
    #[arg(long)]
    pub stabilized: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    /// Minimum instead of mean over the stability channels.
    #[arg(long)]
    pub stability_min: bool,
    /// Minimum instead of mean over frames for distortion.
    #[arg(long)]
    pub distortion_min: bool,
}

fn parse_samples(s: &str) -> std::result::Result<AdaptSamples, String> {
    if s.eq_ignore_ascii_case("all") {
        return Ok(AdaptSamples::All);
    }
    s.parse::<usize>()
        .map(AdaptSamples::Count)
        .map_err(|_| format!("expected `all` or a count, got `{s}`"))
}

/// Parses `argv` and runs; returns the process exit code.
pub fn run<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 2 } else { 0 };
        }
    };
    match execute(&cli) {
        Ok(()) => 0,
        Err(e) => {
            let report = serde_json::json!({ "error": { "kind": e.kind(), "message": e.to_string() } });
            let _ = writeln!(std::io::stderr(), "{report}");
            if matches!(e, Error::Config { .. }) {
                2
            } else {
                1
            }
        }
    }
}

pub fn execute(cli: &Cli) -> Result<()> {
    if let Some(n) = cli.workers {
        // a pool that already exists (repeated in-process runs) is kept
        let _ = rayon::ThreadPoolBuilder::new().num_threads(n.max(1)).build_global();
    }
    match &cli.command {
        Command::SynthData(a) => synth_data(cli, a),
        Command::TrainAffine(a) => train_affine(cli, a),
        Command::MetaTrain(a) => meta_train_cmd(cli, a),
        Command::Stabilize(a) => stabilize(cli, a),
        Command::Evaluate(a) => evaluate_cmd(cli, a),
    }
}

fn file_config<T: serde::de::DeserializeOwned + Default>(cli: &Cli) -> Result<T> {
    cli.config.as_deref().map_or_else(|| Ok(T::default()), config::load)
}

fn set<T>(slot: &mut T, flag: &Option<T>)
where
    T: Clone,
{
    if let Some(v) = flag {
        *slot = v.clone();
    }
}

/// Manifest path of a file output: `<out>.manifest.json`.
fn sidecar(out: &Path) -> PathBuf {
    let mut s = out.as_os_str().to_owned();
    s.push(".");
    s.push(MANIFEST_NAME);
    PathBuf::from(s)
}

fn print_json(value: &impl Serialize) -> Result<()> {
    println!("{}", serde_json::to_string(value)?);
    Ok(())
}

#[derive(Serialize)]
struct Pose {
    theta: f64,
    tx: f64,
    ty: f64,
}

impl From<&RigidTransform> for Pose {
    fn from(t: &RigidTransform) -> Self {
        Self {
            theta: t.theta,
            tx: t.tx,
            ty: t.ty,
        }
    }
}

#[derive(Serialize)]
struct Truth {
    path: Vec<Pose>,
    jitter: Vec<Pose>,
}

pub const UNSTABLE_DIR: &str = "unstable";
pub const STABLE_DIR: &str = "stable";
pub const TRUTH_FILE: &str = "truth.json";

fn synth_data(cli: &Cli, a: &SynthDataArgs) -> Result<()> {
    let mut cfg: SynthDataConfig = file_config(cli)?;
    set(&mut cfg.seed, &cli.seed);
    set(&mut cfg.videos, &a.videos);
    set(&mut cfg.frames, &a.frames);
    set(&mut cfg.sprites, &a.sprites);
    if let Some(s) = a.size {
        (cfg.width, cfg.height) = (s, s);
    }
    if let Some(p) = &a.profile {
        cfg.profile = config::load(p)?;
    }
    let mut manifest = Manifest::new("synth-data", cfg.seed, &cfg)?;
    if let Some(p) = &a.profile {
        manifest.input(p)?;
    }
    fs::create_dir_all(&a.out).map_err(Error::io(&a.out))?;
    for i in 0..cfg.videos {
        let seed = cfg.seed.wrapping_mul(1_000_003).wrapping_add(i as u64);
        let scene = ProceduralScene::new(cfg.width, cfg.height, cfg.sprites, seed);
        let mut profile = cfg.profile.clone();
        profile.seed = profile.seed.wrapping_add(seed);
        let pair = synthesize_pair(
            Source::Procedural {
                scene: &scene,
                frames: cfg.frames,
            },
            &profile,
        )?;
        let dir = a.out.join(format!("video_{i:03}"));
        save_sequence(&pair.unstable, dir.join(UNSTABLE_DIR))?;
        save_sequence(&pair.stable, dir.join(STABLE_DIR))?;
        let truth = Truth {
            path: pair.path.iter().map(Pose::from).collect(),
            jitter: pair.jitter.iter().map(Pose::from).collect(),
        };
        let p = dir.join(TRUTH_FILE);
        fs::write(&p, serde_json::to_string_pretty(&truth)?).map_err(Error::io(&p))?;
    }
    manifest.output(&a.out)?;
    manifest.write(&a.out.join(MANIFEST_NAME))
}

#[derive(Serialize)]
struct RegressorSummary {
    held_out: usize,
    theta_deg: f64,
    translation_px: f64,
}

fn train_affine(cli: &Cli, a: &TrainAffineArgs) -> Result<()> {
    let mut cfg: TrainAffineConfig = file_config(cli)?;
    set(&mut cfg.regressor.seed, &cli.seed);
    set(&mut cfg.regressor.steps, &a.steps);
    set(&mut cfg.regressor.train_samples, &a.samples);
    set(&mut cfg.held_out, &a.held_out);
    let manifest = Manifest::new("train-affine", cfg.regressor.seed, &cfg)?;
    let log_path = a.log.clone().unwrap_or_else(|| a.out.with_extension("jsonl"));
    let mut log = JsonLines::create(&log_path)?;
    let mut log_err = None;
    let reg = train_affine_regressor(&cfg.regressor, |step, loss| {
        if let Err(e) = log.write(&serde_json::json!({ "step": step, "loss": loss })) {
            log_err.get_or_insert(e);
        }
    })?;
    if let Some(e) = log_err {
        return Err(e);
    }
    save_params(reg.params(), &a.out)?;
    let held = sample_warps(
        &cfg.regressor.warps,
        cfg.held_out,
        cfg.regressor.seed.wrapping_add(0x5eed),
        &GlobalFlowConfig::default(),
    )?;
    let err = evaluate_regressor(&reg, &held)?;
    let summary = RegressorSummary {
        held_out: cfg.held_out,
        theta_deg: err.theta_deg,
        translation_px: err.translation_px,
    };
    log.write(&summary)?;
    let mut manifest = manifest;
    manifest.output(&a.out)?;
    manifest.write(&sidecar(&a.out))?;
    print_json(&summary)
}

/// Loads every `video_*` pair of a `synth-data` directory.
pub fn load_dataset(dir: &Path) -> Result<Vec<TrainingVideo>> {
    let mut dirs: Vec<PathBuf> = fs::read_dir(dir)
        .map_err(Error::io(dir))?
        .map(|e| e.map(|e| e.path()).map_err(Error::io(dir)))
        .collect::<Result<Vec<_>>>()?
        .into_iter()
        .filter(|p| p.join(UNSTABLE_DIR).is_dir() && p.join(STABLE_DIR).is_dir())
        .collect();
    dirs.sort();
    if dirs.is_empty() {
        return Err(Error::format(dir, "no training pairs (expected */unstable and */stable)"));
    }
    dirs.iter()
        .map(|d| {
            let u = load_sequence(d.join(UNSTABLE_DIR), Role::Unstable)?;
            let s = load_sequence(d.join(STABLE_DIR), Role::Stable)?;
            Ok(TrainingVideo::new(u, s)?)
        })
        .collect()
}

fn load_alignment(path: &Option<PathBuf>) -> Result<Option<AffineRegressor>> {
    path.as_ref().map(load_regressor).transpose()
}

fn alignment(reg: &Option<AffineRegressor>) -> Alignment<'_> {
    reg.as_ref().map_or(Alignment::Procrustes, Alignment::Learned)
}

fn meta_train_cmd(cli: &Cli, a: &MetaTrainArgs) -> Result<()> {
    let mut cfg: MetaTrainConfig = file_config(cli)?;
    let m = &mut cfg.meta;
    set(&mut m.seed, &cli.seed);
    set(&mut m.outer_steps, &a.steps);
    set(&mut m.meta_batch, &a.meta_batch);
    set(&mut m.alpha, &a.alpha);
    set(&mut m.beta, &a.beta);
    set(&mut m.adapt_steps, &a.adapt_steps);
    set(&mut m.synthesis.k, &a.k);
    set(&mut m.synthesis.base_width, &a.base_width);
    set(&mut m.weights.lambda_s, &a.lambda_s);
    set(&mut m.weights.lambda_p, &a.lambda_p);
    set(&mut cfg.checkpoint_every, &a.checkpoint_every);
    cfg.conventional |= a.conventional;
    cfg.meta.validate()?;
    let mut manifest = Manifest::new("meta-train", cfg.meta.seed, &cfg)?;
    manifest.input(&a.data)?;
    if let Some(r) = &a.regressor {
        manifest.input(r)?;
    }
    let videos = load_dataset(&a.data)?;
    let reg = load_alignment(&a.regressor)?;
    let log_path = a.log.clone().unwrap_or_else(|| a.out.with_extension("jsonl"));
    let mut log = JsonLines::create(&log_path)?;
    let mut io_err = None;
    let every = cfg.checkpoint_every;
    let out = a.out.clone();
    let mut observer = |l: &StepLog, net: &SynthesisNet| -> metastab_core::Result<()> {
        let r = log.write(l).and_then(|_| {
            if every > 0 && (l.step + 1) % every == 0 {
                save_params(net.params(), &out)
            } else {
                Ok(())
            }
        });
        if let Err(e) = r {
            let msg = e.to_string();
            io_err = Some(e);
            return Err(metastab_core::Error::InvalidArgument(msg));
        }
        Ok(())
    };
    let ctx = LossContext::default();
    let flow = GlobalFlowConfig::default();
    let trained = if cfg.conventional {
        train_conventional(&cfg.meta, &videos, alignment(&reg), &flow, &ctx, None, &mut observer)
    } else {
        meta_train(&cfg.meta, &videos, alignment(&reg), &flow, &ctx, None, &mut observer)
    };
    let net = match (trained, io_err) {
        (_, Some(e)) => return Err(e),
        (r, None) => r?,
    };
    save_params(net.params(), &a.out)?;
    manifest.output(&a.out)?;
    manifest.write(&sidecar(&a.out))
}

#[derive(Serialize)]
struct StabilizeSummary {
    frames: usize,
    adapt_steps: usize,
    adapt_samples: AdaptSamples,
}

fn stabilize(cli: &Cli, a: &StabilizeArgs) -> Result<()> {
    let mut cfg: StabilizeConfig = file_config(cli)?;
    set(&mut cfg.seed, &cli.seed);
    set(&mut cfg.adapt_steps, &a.adapt_steps);
    set(&mut cfg.adapt_samples, &a.adapt_samples);
    set(&mut cfg.alpha, &a.alpha);
    set(&mut cfg.weights.lambda_s, &a.lambda_s);
    set(&mut cfg.weights.lambda_p, &a.lambda_p);
    cfg.recurrent |= a.recurrent;
    cfg.weights.validate()?;
    let net = load_synthesis(&a.model)?;
    if let Some(k) = a.k.filter(|&k| k != net.config().k) {
        return Err(Error::format(
            &a.model,
            format!("model was trained with k = {}, requested k = {k}", net.config().k),
        ));
    }
    let mut manifest = Manifest::new("stabilize", cfg.seed, &cfg)?;
    manifest.input(&a.model)?;
    manifest.input(&a.video)?;
    if let Some(r) = &a.regressor {
        manifest.input(r)?;
    }
    let reg = load_alignment(&a.regressor)?;
    let video = load_sequence(&a.video, Role::Unstable)?;
    let ctx = LossContext::default();
    let (_, out) = meta_inference(&net, &video, &cfg, alignment(&reg), &GlobalFlowConfig::default(), &ctx)?;
    save_sequence(&out, &a.out)?;
    manifest.output(&a.out)?;
    manifest.write(&a.out.join(MANIFEST_NAME))?;
    print_json(&StabilizeSummary {
        frames: out.len(),
        adapt_steps: cfg.adapt_steps,
        adapt_samples: cfg.adapt_samples,
    })
}

fn evaluate_cmd(cli: &Cli, a: &EvaluateArgs) -> Result<()> {
    let pick = |min: bool| if min { Reduction::Min } else { Reduction::Mean };
    let opts = EvalOptions {
        stability: pick(a.stability_min),
        distortion: pick(a.distortion_min),
    };
    let settings = serde_json::json!({ "stability": opts.stability, "distortion": opts.distortion });
    let mut manifest = Manifest::new("evaluate", cli.seed.unwrap_or(0), &settings)?;
    manifest.input(&a.original)?;
    manifest.input(&a.stabilized)?;
    let original = load_sequence(&a.original, Role::Unstable)?;
    let stabilized = load_sequence(&a.stabilized, Role::Synthesized)?;
    let report = evaluate(&original, &stabilized, opts)?;
    if let Some(dir) = a.out.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(Error::io(dir))?;
    }
    let text = serde_json::to_string_pretty(&report)?;
    fs::write(&a.out, text + "\n").map_err(Error::io(&a.out))?;
    manifest.output(&a.out)?;
    manifest.write(&sidecar(&a.out))?;
    print_json(&serde_json::json!({
        "stability": report.stability,
        "cropping": report.cropping,
        "distortion": report.distortion,
    }))
}
