use super::*;
use crate::synth::{synthesize_pair, ProceduralScene, ShakeProfile, Source};

fn tiny() -> SynthesisConfig {
    SynthesisConfig { k: 1, base_width: 4 }
}

fn video(size: usize, frames: usize, seed: u64) -> TrainingVideo {
    let scene = ProceduralScene::new(size, size, 1, seed);
    let profile = ShakeProfile {
        seed,
        ..ShakeProfile::default()
    };
    let pair = synthesize_pair(Source::Procedural { scene: &scene, frames }, &profile).unwrap();
    TrainingVideo::new(pair.unstable, pair.stable).unwrap()
}

fn config() -> MetaConfig {
    MetaConfig {
        alpha: 1e-3,
        beta: 1e-3,
        meta_batch: 1,
        outer_steps: 3,
        patch: 32,
        task_frames: 3,
        synthesis: tiny(),
        ..MetaConfig::default()
    }
}

fn prepared(seed: u64) -> PreparedTask {
    let cfg = config();
    let v = video(32, 12, seed);
    sample_meta_batch(&cfg, &[v], seed as usize, Alignment::Procrustes, &GlobalFlowConfig::default())
        .unwrap()
        .remove(0)
}

fn net(seed: u64) -> SynthesisNet {
    let mut n = SynthesisNet::new(tiny(), seed);
    n.randomize_output(0.5, seed + 1);
    n
}

#[test]
fn task_rejects_wrong_length() {
    let v = video(32, 8, 1);
    let frames = v.unstable.frames()[..4].to_vec();
    assert!(Task::new(0, 0, frames, None, 3, 1).is_err());
}

#[test]
fn zero_steps_or_zero_rate_leave_parameters_unchanged() {
    let ctx = LossContext::default();
    let t = prepared(1);
    let n = net(1);
    let a = inner_adapt(&n, core::slice::from_ref(&t), 0, 1e-2, &LossWeights::default(), &ctx).unwrap();
    assert_eq!(a, n);
    let b = inner_adapt(&n, core::slice::from_ref(&t), 2, 0.0, &LossWeights::default(), &ctx).unwrap();
    assert_eq!(b.params().flat_values(), n.params().flat_values());
}

#[test]
fn adaptation_reduces_inner_loss_and_keeps_input() {
    let ctx = LossContext::default();
    let t = prepared(2);
    let n = net(2);
    let before = n.clone();
    let w = LossWeights::default();
    let l0 = inner_loss_grad(&n, &t, &w, &ctx).unwrap().0.total;
    let a = inner_adapt(&n, core::slice::from_ref(&t), 1, 1e-3, &w, &ctx).unwrap();
    let l1 = inner_loss_grad(&a, &t, &w, &ctx).unwrap().0.total;
    assert_eq!(n, before);
    assert!(l1 < l0, "{l1} >= {l0}");
}

#[test]
fn first_order_gradient_is_outer_gradient_at_adapted_point() {
    let ctx = LossContext::default();
    let t = prepared(3);
    let n = net(3);
    let w = LossWeights::default();
    let o = task_meta_gradient(&n, &t, 1, 1e-3, true, &w, &ctx).unwrap();
    let a = inner_adapt(&n, core::slice::from_ref(&t), 1, 1e-3, &w, &ctx).unwrap();
    let (_, g) = outer_loss_grad(&a, &t, &ctx).unwrap();
    assert_eq!(o.grad, g);
}

fn cosine(a: &[f32], b: &[f32]) -> f64 {
    let d: f64 = a.iter().zip(b).map(|(x, y)| (*x as f64) * (*y as f64)).sum();
    let na: f64 = a.iter().map(|x| (*x as f64).powi(2)).sum::<f64>().sqrt();
    let nb: f64 = b.iter().map(|x| (*x as f64).powi(2)).sum::<f64>().sqrt();
    d / (na * nb)
}

#[test]
fn second_order_gradient_agrees_with_first_order() {
    let ctx = LossContext::default();
    let w = LossWeights::default();
    for s in 0..20 {
        let t = prepared(10 + s);
        let mut n = SynthesisNet::new(SynthesisConfig { k: 1, base_width: 3 }, 10 + s);
        n.randomize_output(0.05, 11 + s);
        assert!(n.num_params() <= 2000);
        let fo = task_meta_gradient(&n, &t, 1, 1e-4, true, &w, &ctx).unwrap();
        let so = task_meta_gradient(&n, &t, 1, 1e-4, false, &w, &ctx).unwrap();
        let c = cosine(&fo.grad, &so.grad);
        assert!(c > 0.8, "state {s}: cosine {c}");
    }
}

#[test]
fn meta_training_is_deterministic() {
    let ctx = LossContext::default();
    let videos = [video(32, 12, 4), video(32, 12, 5)];
    let cfg = config();
    let run = || {
        meta_train(
            &cfg,
            &videos,
            Alignment::Procrustes,
            &GlobalFlowConfig::default(),
            &ctx,
            None,
            &mut |_: &StepLog, _: &SynthesisNet| Ok(()),
        )
        .unwrap()
    };
    let a = run();
    let b = run();
    assert_eq!(a.params().flat_values(), b.params().flat_values());
    assert_ne!(a.params().flat_values(), SynthesisNet::new(tiny(), 0).params().flat_values());
}

#[test]
fn observer_sees_every_step() {
    let ctx = LossContext::default();
    let videos = [video(32, 12, 6)];
    let mut steps = Vec::new();
    let cfg = MetaConfig {
        outer_steps: 2,
        ..config()
    };
    train_conventional(
        &cfg,
        &videos,
        Alignment::Procrustes,
        &GlobalFlowConfig::default(),
        &ctx,
        None,
        &mut |l: &StepLog, _: &SynthesisNet| {
            steps.push(l.step);
            assert!(l.outer.total.is_finite() && !l.skipped);
            Ok(())
        },
    )
    .unwrap();
    assert_eq!(steps, [0, 1]);
}

#[test]
fn config_validation() {
    assert!(MetaConfig::default().validate().is_ok());
    assert!(MetaConfig { alpha: 0.0, ..MetaConfig::default() }.validate().is_err());
    assert!(MetaConfig { adapt_steps: 0, ..MetaConfig::default() }.validate().is_err());
}

#[test]
fn inference_without_adaptation_matches_plain_stabilization() {
    let ctx = LossContext::default();
    let v = video(32, 10, 7);
    let n = net(7);
    let cfg = InferenceConfig {
        adapt_steps: 0,
        task_frames: 3,
        adapt_samples: AdaptSamples::Count(2),
        ..InferenceConfig::default()
    };
    let (a, out) = meta_inference(&n, &v.unstable, &cfg, Alignment::Procrustes, &GlobalFlowConfig::default(), &ctx).unwrap();
    assert_eq!(a, n);
    assert_eq!(out, stabilize_video(&v.unstable, &n, false).unwrap());
    let short = FrameSequence::new(v.unstable.frames()[..4].to_vec(), Role::Unstable).unwrap();
    assert!(matches!(
        meta_inference(&n, &short, &cfg, Alignment::Procrustes, &GlobalFlowConfig::default(), &ctx),
        Err(Error::SequenceTooShort { .. })
    ));
}

#[test]
fn adaptation_tasks_cover_every_position() {
    let v = video(32, 10, 8);
    let cfg = InferenceConfig {
        adapt_samples: AdaptSamples::All,
        task_frames: 3,
        ..InferenceConfig::default()
    };
    let tasks = adaptation_tasks(&v.unstable, 1, &cfg).unwrap();
    assert_eq!(tasks.len(), 10 - 6 + 1);
    assert!(tasks.iter().all(|t| t.stable.is_none()));
}
