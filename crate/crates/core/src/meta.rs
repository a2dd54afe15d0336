//! Meta-training (first-order MAML over synthetic tasks) and test-time
//! adaptation of the synthesis network.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

#[cfg(not(feature = "std"))]
use num_traits::Float;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::align::{align_sequence, Alignment};
use crate::error::{Error, Result};
use crate::flow::GlobalFlowConfig;
use crate::image::{Frame, FrameSequence, Role};
use crate::losses::{inner_loss, outer_loss, InnerBreakdown, LossContext, LossWeights};
use crate::par;
use crate::synthesis::{stabilize_video, SynthesisConfig, SynthesisNet, TemporalWindow};
use crate::tensor::{Adam, Tape, Tensor};

/// Frames per task.
pub const DEFAULT_TASK_FRAMES: usize = 5;
/// Adaptation crop at inference.
pub const ADAPT_PATCH: usize = 320;
/// Consecutive non-finite outer losses tolerated before aborting.
pub const MAX_SKIPPED_BATCHES: usize = 3;

/// A short clip: `T + 1` windows of `2k + 1` frames each, over
/// `T + 1 + 2k` consecutive frames. The centre frame of the first window is
/// the alignment reference; the inner loss uses the remaining `T` windows.
#[derive(Clone, Debug, PartialEq)]
pub struct Task {
    pub id: u64,
    pub source: usize,
    pub frames: Vec<Frame>,
    /// Stable counterparts of `frames` (training only).
    pub stable: Option<Vec<Frame>>,
    pub t: usize,
    pub k: usize,
}

impl Task {
    pub fn clip_len(t: usize, k: usize) -> usize {
        t + 1 + 2 * k
    }

    pub fn new(id: u64, source: usize, frames: Vec<Frame>, stable: Option<Vec<Frame>>, t: usize, k: usize) -> Result<Self> {
        let need = Self::clip_len(t, k);
        if t == 0 || frames.len() != need {
            return Err(Error::WindowLength {
                expected: need,
                got: frames.len(),
            });
        }
        if let Some(s) = &stable {
            if s.len() != frames.len() {
                return Err(Error::LengthMismatch {
                    op: "task stable frames",
                    left: s.len(),
                    right: frames.len(),
                });
            }
        }
        Ok(Self {
            id,
            source,
            frames,
            stable,
            t,
            k,
        })
    }

    /// Window `i` (`0..=T`), centred on `frames[k + i]`.
    pub fn window(&self, i: usize) -> Result<TemporalWindow> {
        TemporalWindow::new(self.frames[i..i + 2 * self.k + 1].to_vec(), self.k, false)
    }

    pub fn dims(&self) -> (usize, usize) {
        self.frames[0].dims()
    }
}

/// Hyper-parameters of meta-training.
#[derive(Clone, Debug, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(default))]
pub struct MetaConfig {
    /// Inner (adaptation) learning rate.
    pub alpha: f64,
    /// Outer (Adam) learning rate.
    pub beta: f64,
    /// Inner steps per task.
    pub adapt_steps: usize,
    pub meta_batch: usize,
    pub outer_steps: usize,
    /// Square training crop (full frame when the video is smaller).
    pub patch: usize,
    pub seed: u64,
    pub first_order: bool,
    /// Frames per task.
    pub task_frames: usize,
    /// Draw the outer-loss clip separately from the inner-loss clip.
    pub disjoint_outer: bool,
    pub weights: LossWeights,
    pub synthesis: SynthesisConfig,
}

impl Default for MetaConfig {
    fn default() -> Self {
        Self {
            alpha: 1e-5,
            beta: 1e-4,
            adapt_steps: 1,
            meta_batch: 2,
            outer_steps: 300,
            patch: 64,
            seed: 0,
            first_order: true,
            task_frames: DEFAULT_TASK_FRAMES,
            disjoint_outer: false,
            weights: LossWeights::default(),
            synthesis: SynthesisConfig::default(),
        }
    }
}

impl MetaConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::InvalidArgument(m.into()));
        if !(self.alpha > 0.0 && self.alpha.is_finite()) || !(self.beta > 0.0 && self.beta.is_finite()) {
            return bad("alpha and beta must be positive");
        }
        if self.adapt_steps == 0 {
            return bad("adapt_steps must be at least 1");
        }
        if self.meta_batch == 0 || self.task_frames == 0 {
            return bad("meta_batch and task_frames must be positive");
        }
        if self.patch < crate::image::MIN_SIDE {
            return bad("patch smaller than the minimum frame side");
        }
        self.weights.validate()
    }
}

/// Tensors of one task, computed once and reused across adaptation steps.
#[derive(Clone, Debug)]
pub struct PreparedTask {
    pub id: u64,
    /// Windows `1..=T`: `T x 3(2k+1) x H x W`.
    pub inner_input: Tensor<f32>,
    /// Alignment guide for frames `1..=T`: `T x 3 x H x W`.
    pub inner_target: Tensor<f32>,
    /// Windows `0..=T` and their stable centre frames.
    pub outer: Option<(Tensor<f32>, Tensor<f32>)>,
}

fn stack(parts: impl Iterator<Item = Vec<f32>>, shape: &[usize]) -> Result<Tensor<f32>> {
    let mut data = Vec::with_capacity(shape.iter().product());
    parts.for_each(|p| data.extend(p));
    Tensor::new(shape, data)
}

fn windows_tensor(task: &Task, range: core::ops::Range<usize>) -> Result<Tensor<f32>> {
    let (w, h) = task.dims();
    let n = range.len();
    let wins = range.map(|i| task.window(i).map(|w| w.stacked())).collect::<Result<Vec<_>>>()?;
    stack(wins.into_iter(), &[n, 3 * (2 * task.k + 1), h, w])
}

/// Inner-loss tensors only (what inference can build).
pub fn prepare_inner(task: &Task, alignment: Alignment<'_>, flow: &GlobalFlowConfig) -> Result<PreparedTask> {
    let (w, h) = task.dims();
    let (t, k) = (task.t, task.k);
    let clip = FrameSequence::new(task.frames[k..=k + t].to_vec(), Role::Unstable)?;
    let aligned = align_sequence(&clip, alignment, flow)?;
    let target = stack(
        aligned.frames.frames()[1..].iter().map(|f| f.data().to_vec()),
        &[t, 3, h, w],
    )?;
    Ok(PreparedTask {
        id: task.id,
        inner_input: windows_tensor(task, 1..t + 1)?,
        inner_target: target,
        outer: None,
    })
}

/// Inner and outer tensors. `outer_task` supplies the outer clip (the same
/// task unless disjoint sampling is on) and must carry stable frames.
pub fn prepare_task(task: &Task, outer_task: &Task, alignment: Alignment<'_>, flow: &GlobalFlowConfig) -> Result<PreparedTask> {
    let mut p = prepare_inner(task, alignment, flow)?;
    let stable = outer_task
        .stable
        .as_ref()
        .ok_or_else(|| Error::InvalidArgument("outer task has no stable frames".into()))?;
    let (w, h) = outer_task.dims();
    let (t, k) = (outer_task.t, outer_task.k);
    let target = stack(stable[k..=k + t].iter().map(|f| f.data().to_vec()), &[t + 1, 3, h, w])?;
    p.outer = Some((windows_tensor(outer_task, 0..t + 1)?, target));
    Ok(p)
}

fn constant(tape: &mut Tape<f32>, t: &Tensor<f32>) -> Result<crate::tensor::Var> {
    tape.constant(t.shape(), t.data().to_vec())
}

/// Inner loss at `net` with its gradient (flattened in parameter order).
pub fn inner_loss_grad(
    net: &SynthesisNet,
    task: &PreparedTask,
    weights: &LossWeights,
    ctx: &LossContext,
) -> Result<(InnerBreakdown, Vec<f32>)> {
    let mut tape = Tape::new();
    let vars = net.params().bind(&mut tape);
    let x = constant(&mut tape, &task.inner_input)?;
    let y = net.forward(&mut tape, &vars, x)?;
    let target = constant(&mut tape, &task.inner_target)?;
    let terms = inner_loss(&mut tape, ctx, y, target, weights)?;
    let values = terms.values(&tape);
    if !values.total.is_finite() {
        return Err(Error::NonFiniteLoss {
            step: 0,
            detail: format!("task {}: inner terms {values:?}", task.id),
        });
    }
    tape.backward(terms.total)?;
    Ok((values, grads_of(&tape, &vars, net)))
}

fn grads_of(tape: &Tape<f32>, vars: &[crate::tensor::Var], net: &SynthesisNet) -> Vec<f32> {
    let mut g = Vec::with_capacity(net.num_params());
    for (v, p) in vars.iter().zip(net.params().iter()) {
        match tape.grad(*v) {
            Some(d) => g.extend_from_slice(d),
            None => g.extend(core::iter::repeat_n(0.0, p.tensor.numel())),
        }
    }
    g
}

fn sgd(net: &mut SynthesisNet, grad: &[f32], lr: f32) -> Result<()> {
    let mut v = net.params().flat_values();
    v.iter_mut().zip(grad).for_each(|(w, g)| *w -= lr * g);
    net.params_mut().set_flat_values(&v)
}

/// `steps` plain gradient steps on the inner loss, averaged over `tasks`.
/// Returns an adapted copy; `net` is untouched.
pub fn inner_adapt(
    net: &SynthesisNet,
    tasks: &[PreparedTask],
    steps: usize,
    alpha: f64,
    weights: &LossWeights,
    ctx: &LossContext,
) -> Result<SynthesisNet> {
    let mut adapted = net.clone();
    if tasks.is_empty() {
        return Ok(adapted);
    }
    for step in 0..steps {
        let grad = mean_inner_grad(&adapted, tasks, weights, ctx).map_err(|e| match e {
            Error::NonFiniteLoss { detail, .. } => Error::NonFiniteLoss { step, detail },
            e => e,
        })?;
        sgd(&mut adapted, &grad.1, alpha as f32)?;
    }
    Ok(adapted)
}

/// Mean inner breakdown and gradient over `tasks`.
pub fn mean_inner_grad(
    net: &SynthesisNet,
    tasks: &[PreparedTask],
    weights: &LossWeights,
    ctx: &LossContext,
) -> Result<(InnerBreakdown, Vec<f32>)> {
    let results = par::map(tasks, |_, t| inner_loss_grad(net, t, weights, ctx));
    let mut grad = vec![0.0f32; net.num_params()];
    let mut mean = InnerBreakdown::default();
    let inv = 1.0 / tasks.len() as f64;
    for r in results {
        let (b, g) = r?;
        grad.iter_mut().zip(&g).for_each(|(a, x)| *a += x * inv as f32);
        mean.stability += b.stability * inv;
        mean.perceptual += b.perceptual * inv;
        mean.gram += b.gram * inv;
        mean.contextual += b.contextual * inv;
        mean.total += b.total * inv;
    }
    Ok((mean, grad))
}

/// Outer loss terms at `net` on the task's outer clip.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct OuterBreakdown {
    pub stability: f64,
    pub contextual: f64,
    pub total: f64,
}

pub fn outer_loss_grad(net: &SynthesisNet, task: &PreparedTask, ctx: &LossContext) -> Result<(OuterBreakdown, Vec<f32>)> {
    let (input, target) = task
        .outer
        .as_ref()
        .ok_or_else(|| Error::InvalidArgument("task prepared without outer clip".into()))?;
    let mut tape = Tape::new();
    let vars = net.params().bind(&mut tape);
    let x = constant(&mut tape, input)?;
    let y = net.forward(&mut tape, &vars, x)?;
    let o = constant(&mut tape, target)?;
    let terms = outer_loss(&mut tape, ctx, y, o)?;
    let b = OuterBreakdown {
        stability: tape.scalar(terms.stability) as f64,
        contextual: tape.scalar(terms.contextual) as f64,
        total: tape.scalar(terms.total) as f64,
    };
    if !b.total.is_finite() {
        return Ok((b, Vec::new()));
    }
    tape.backward(terms.total)?;
    Ok((b, grads_of(&tape, &vars, net)))
}

/// Hessian-vector product of the inner loss by central differences of
/// gradients.
fn inner_hvp(net: &SynthesisNet, task: &PreparedTask, v: &[f32], weights: &LossWeights, ctx: &LossContext) -> Result<Vec<f32>> {
    let theta = net.params().flat_values();
    let tn = theta.iter().map(|x| (x * x) as f64).sum::<f64>().sqrt();
    let vn = v.iter().map(|x| (x * x) as f64).sum::<f64>().sqrt();
    if vn == 0.0 {
        return Ok(vec![0.0; v.len()]);
    }
    let eps = 1e-3 * (1.0 + tn) / vn;
    let shifted = |sign: f64| -> Result<Vec<f32>> {
        let mut n = net.clone();
        let p: Vec<f32> = theta.iter().zip(v).map(|(t, d)| t + (sign * eps) as f32 * d).collect();
        n.params_mut().set_flat_values(&p)?;
        Ok(inner_loss_grad(&n, task, weights, ctx)?.1)
    };
    let gp = shifted(1.0)?;
    let gm = shifted(-1.0)?;
    Ok(gp.iter().zip(&gm).map(|(a, b)| ((*a as f64 - *b as f64) / (2.0 * eps)) as f32).collect())
}

/// Outcome of one task in a meta-batch.
#[derive(Clone, Debug, PartialEq)]
pub struct TaskOutcome {
    pub inner_before: InnerBreakdown,
    pub outer: OuterBreakdown,
    pub grad: Vec<f32>,
}

/// Meta-gradient of one task: adapt, evaluate the outer loss, and map its
/// gradient back to `net` (identity map when `first_order`).
pub fn task_meta_gradient(
    net: &SynthesisNet,
    task: &PreparedTask,
    steps: usize,
    alpha: f64,
    first_order: bool,
    weights: &LossWeights,
    ctx: &LossContext,
) -> Result<TaskOutcome> {
    let mut states = Vec::with_capacity(steps + 1);
    states.push(net.clone());
    let mut inner_before = InnerBreakdown::default();
    for step in 0..steps {
        let cur = states.last().expect("non-empty");
        let (b, g) = inner_loss_grad(cur, task, weights, ctx).map_err(|e| match e {
            Error::NonFiniteLoss { detail, .. } => Error::NonFiniteLoss { step, detail },
            e => e,
        })?;
        if step == 0 {
            inner_before = b;
        }
        let mut next = cur.clone();
        sgd(&mut next, &g, alpha as f32)?;
        if first_order {
            states.clear();
        }
        states.push(next);
    }
    let adapted = states.last().expect("non-empty");
    let (outer, mut grad) = outer_loss_grad(adapted, task, ctx)?;
    if !first_order && !grad.is_empty() {
        // back through each step: v <- v - alpha H(theta_j) v
        for state in states[..states.len() - 1].iter().rev() {
            let hv = inner_hvp(state, task, &grad, weights, ctx)?;
            grad.iter_mut().zip(&hv).for_each(|(g, h)| *g -= alpha as f32 * h);
        }
    }
    Ok(TaskOutcome {
        inner_before,
        outer,
        grad,
    })
}

/// Paired training video.
#[derive(Clone, Debug)]
pub struct TrainingVideo {
    pub unstable: FrameSequence,
    pub stable: FrameSequence,
}

impl TrainingVideo {
    pub fn new(unstable: FrameSequence, stable: FrameSequence) -> Result<Self> {
        if unstable.len() != stable.len() || unstable.dims() != stable.dims() {
            return Err(Error::LengthMismatch {
                op: "training video",
                left: unstable.len(),
                right: stable.len(),
            });
        }
        Ok(Self { unstable, stable })
    }
}

fn crop_all(frames: &[Frame], x0: usize, y0: usize, size: (usize, usize)) -> Result<Vec<Frame>> {
    frames.iter().map(|f| f.crop(x0, y0, size.0, size.1)).collect()
}

/// Random clip of `video` with a random square crop of side `patch` (or the
/// whole frame when smaller).
pub fn sample_clip(
    rng: &mut ChaCha8Rng,
    id: u64,
    source: usize,
    unstable: &FrameSequence,
    stable: Option<&FrameSequence>,
    t: usize,
    k: usize,
    patch: usize,
) -> Result<Task> {
    let need = Task::clip_len(t, k);
    if unstable.len() < need {
        return Err(Error::SequenceTooShort {
            needed: need,
            got: unstable.len(),
        });
    }
    let (w, h) = unstable.dims().expect("non-empty");
    let start = rng.random_range(0..=unstable.len() - need);
    let (cw, ch) = (patch.min(w), patch.min(h));
    let x0 = rng.random_range(0..=w - cw);
    let y0 = rng.random_range(0..=h - ch);
    let frames = crop_all(&unstable.frames()[start..start + need], x0, y0, (cw, ch))?;
    let stable = match stable {
        Some(s) => Some(crop_all(&s.frames()[start..start + need], x0, y0, (cw, ch))?),
        None => None,
    };
    Task::new(id, source, frames, stable, t, k)
}

/// One outer step as reported to a [`MetaObserver`].
#[derive(Clone, Debug, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct StepLog {
    pub step: usize,
    pub lambda_s: f64,
    pub lambda_p: f64,
    /// Mean inner terms before adaptation.
    pub inner: InnerBreakdown,
    /// Mean outer terms after adaptation.
    pub outer: OuterBreakdown,
    pub skipped: bool,
}

pub trait MetaObserver {
    fn on_step(&mut self, log: &StepLog, net: &SynthesisNet) -> Result<()>;
}

impl<F: FnMut(&StepLog, &SynthesisNet) -> Result<()>> MetaObserver for F {
    fn on_step(&mut self, log: &StepLog, net: &SynthesisNet) -> Result<()> {
        self(log, net)
    }
}

fn step_rng(seed: u64, step: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(step as u64 + 1);
    rng
}

/// Samples and prepares one meta-batch.
pub fn sample_meta_batch(
    config: &MetaConfig,
    videos: &[TrainingVideo],
    step: usize,
    alignment: Alignment<'_>,
    flow: &GlobalFlowConfig,
) -> Result<Vec<PreparedTask>> {
    if videos.is_empty() {
        return Err(Error::InvalidArgument("no training videos".into()));
    }
    let mut rng = step_rng(config.seed, step);
    let k = config.synthesis.k;
    let mut pairs = Vec::with_capacity(config.meta_batch);
    for b in 0..config.meta_batch {
        let id = (step * config.meta_batch + b) as u64;
        let v = rng.random_range(0..videos.len());
        let video = &videos[v];
        let sample = |rng: &mut ChaCha8Rng| {
            sample_clip(
                rng,
                id,
                v,
                &video.unstable,
                Some(&video.stable),
                config.task_frames,
                k,
                config.patch,
            )
        };
        let task = sample(&mut rng)?;
        let outer = if config.disjoint_outer { Some(sample(&mut rng)?) } else { None };
        pairs.push((task, outer));
    }
    par::map(&pairs, |_, (task, outer)| prepare_task(task, outer.as_ref().unwrap_or(task), alignment, flow))
        .into_iter()
        .collect()
}

/// Shared outer loop. `adapt_steps == 0` trains the plain network on the
/// outer loss.
fn train_loop(
    config: &MetaConfig,
    adapt_steps: usize,
    videos: &[TrainingVideo],
    alignment: Alignment<'_>,
    flow: &GlobalFlowConfig,
    ctx: &LossContext,
    init: Option<SynthesisNet>,
    observer: &mut dyn MetaObserver,
) -> Result<SynthesisNet> {
    let mut net = init.unwrap_or_else(|| SynthesisNet::new(config.synthesis, config.seed));
    let mut adam = Adam::new(config.beta as f32);
    let mut skipped = 0;
    for step in 0..config.outer_steps {
        let batch = sample_meta_batch(config, videos, step, alignment, flow)?;
        let outcomes = par::map(&batch, |_, t| {
            task_meta_gradient(&net, t, adapt_steps, config.alpha, config.first_order, &config.weights, ctx)
        });
        let outcomes = outcomes.into_iter().collect::<Result<Vec<_>>>()?;
        let inv = 1.0 / outcomes.len() as f64;
        let mut log = StepLog {
            step,
            lambda_s: config.weights.lambda_s,
            lambda_p: config.weights.lambda_p,
            inner: InnerBreakdown::default(),
            outer: OuterBreakdown::default(),
            skipped: false,
        };
        let mut grad = vec![0.0f32; net.num_params()];
        for o in &outcomes {
            log.inner.stability += o.inner_before.stability * inv;
            log.inner.perceptual += o.inner_before.perceptual * inv;
            log.inner.gram += o.inner_before.gram * inv;
            log.inner.contextual += o.inner_before.contextual * inv;
            log.inner.total += o.inner_before.total * inv;
            log.outer.stability += o.outer.stability * inv;
            log.outer.contextual += o.outer.contextual * inv;
            log.outer.total += o.outer.total * inv;
            if o.grad.is_empty() {
                log.skipped = true;
            } else {
                grad.iter_mut().zip(&o.grad).for_each(|(a, g)| *a += g * inv as f32);
            }
        }
        if log.skipped || grad.iter().any(|g| !g.is_finite()) {
            log.skipped = true;
            skipped += 1;
            observer.on_step(&log, &net)?;
            if skipped >= MAX_SKIPPED_BATCHES {
                return Err(Error::TooManySkippedBatches(skipped));
            }
            continue;
        }
        skipped = 0;
        net.params_mut().set_flat_grads(&grad)?;
        adam.step(net.params_mut())?;
        observer.on_step(&log, &net)?;
    }
    Ok(net)
}

/// Meta-trains a synthesis network (Adam on the post-adaptation outer loss).
pub fn meta_train(
    config: &MetaConfig,
    videos: &[TrainingVideo],
    alignment: Alignment<'_>,
    flow: &GlobalFlowConfig,
    ctx: &LossContext,
    init: Option<SynthesisNet>,
    observer: &mut dyn MetaObserver,
) -> Result<SynthesisNet> {
    config.validate()?;
    train_loop(config, config.adapt_steps, videos, alignment, flow, ctx, init, observer)
}

/// Conventional supervised training on the same data and outer loss, with
/// no inner loop.
pub fn train_conventional(
    config: &MetaConfig,
    videos: &[TrainingVideo],
    alignment: Alignment<'_>,
    flow: &GlobalFlowConfig,
    ctx: &LossContext,
    init: Option<SynthesisNet>,
    observer: &mut dyn MetaObserver,
) -> Result<SynthesisNet> {
    config.validate()?;
    train_loop(config, 0, videos, alignment, flow, ctx, init, observer)
}

/// Which clips of the test video drive adaptation.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "lowercase"))]
pub enum AdaptSamples {
    /// Every clip position, full frame.
    All,
    /// This many random clips with random crops.
    Count(usize),
}

impl Default for AdaptSamples {
    fn default() -> Self {
        AdaptSamples::Count(100)
    }
}

/// Test-time settings.
#[derive(Clone, Debug, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(default))]
pub struct InferenceConfig {
    pub adapt_steps: usize,
    pub adapt_samples: AdaptSamples,
    pub alpha: f64,
    pub weights: LossWeights,
    pub recurrent: bool,
    pub task_frames: usize,
    pub patch: usize,
    pub seed: u64,
}

impl Default for InferenceConfig {
    fn default() -> Self {
        Self {
            adapt_steps: 1,
            adapt_samples: AdaptSamples::default(),
            alpha: 1e-5,
            weights: LossWeights::default(),
            recurrent: false,
            task_frames: DEFAULT_TASK_FRAMES,
            patch: ADAPT_PATCH,
            seed: 0,
        }
    }
}

/// Adaptation clips drawn from `video` (no stable frames).
pub fn adaptation_tasks(video: &FrameSequence, k: usize, cfg: &InferenceConfig) -> Result<Vec<Task>> {
    let need = Task::clip_len(cfg.task_frames, k);
    if video.len() < need {
        return Err(Error::SequenceTooShort {
            needed: need,
            got: video.len(),
        });
    }
    match cfg.adapt_samples {
        AdaptSamples::All => (0..=video.len() - need)
            .map(|s| Task::new(s as u64, 0, video.frames()[s..s + need].to_vec(), None, cfg.task_frames, k))
            .collect(),
        AdaptSamples::Count(n) => {
            let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
            (0..n)
                .map(|i| sample_clip(&mut rng, i as u64, 0, video, None, cfg.task_frames, k, cfg.patch))
                .collect()
        }
    }
}

/// Adapts `net` to `video` with the inner loss only, then stabilizes it.
/// Returns the adapted network and the output.
pub fn meta_inference(
    net: &SynthesisNet,
    video: &FrameSequence,
    cfg: &InferenceConfig,
    alignment: Alignment<'_>,
    flow: &GlobalFlowConfig,
    ctx: &LossContext,
) -> Result<(SynthesisNet, FrameSequence)> {
    let k = net.config().k;
    let tasks = adaptation_tasks(video, k, cfg)?;
    let adapted = if cfg.adapt_steps == 0 {
        net.clone()
    } else {
        let mut prepared = Vec::with_capacity(tasks.len());
        for p in par::map(&tasks, |_, t| prepare_inner(t, alignment, flow)) {
            match p {
                Ok(p) => prepared.push(p),
                // clips without a usable dominant motion are left out
                Err(Error::NoDominantMotion { .. } | Error::DegenerateFit) => {}
                Err(e) => return Err(e),
            }
        }
        if prepared.is_empty() {
            return Err(Error::InvalidArgument("no adaptation clip could be aligned".into()));
        }
        inner_adapt(net, &prepared, cfg.adapt_steps, cfg.alpha, &cfg.weights, ctx)?
    };
    let out = stabilize_video(video, &adapted, cfg.recurrent)?;
    Ok((adapted, out))
}

#[cfg(test)]
mod tests;
