//! Learned rigid regressor: global flow in, `(theta, tx, ty)` out.

use alloc::vec::Vec;

#[cfg(not(feature = "std"))]
use num_traits::Float;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::flow::{global_flow_with, FlowField, GlobalFlowConfig};
use crate::nn::{push_conv, push_dense, Bound, LEAK};
use crate::par;
use crate::rigid::{image_center, RigidTransform};
use crate::synth::ProceduralScene;
use crate::tensor::{Adam, ParamSet, Tape, Var};

/// Side of the resampled flow grid fed to the network.
pub const GRID: usize = 32;
/// Output scaling: the network predicts `theta / THETA_UNIT`.
const THETA_UNIT: f64 = 0.02;

#[derive(Clone, Debug, PartialEq)]
pub struct AffineRegressor {
    params: ParamSet<f32>,
}

impl AffineRegressor {
    pub fn new(seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut ps = ParamSet::new();
        push_conv(&mut ps, "c1", 16, 2, 3, 1.0, &mut rng);
        push_conv(&mut ps, "c2", 32, 16, 3, 1.0, &mut rng);
        push_conv(&mut ps, "c3", 32, 32, 3, 1.0, &mut rng);
        push_dense(&mut ps, "fc", 32, 3, 1.0, &mut rng);
        Self { params: ps }
    }

    /// Wraps an existing parameter set (e.g. from a checkpoint); names and
    /// shapes must match [`AffineRegressor::new`].
    pub fn from_params(params: ParamSet<f32>) -> Result<Self> {
        let reference = Self::new(0);
        let ok = params.len() == reference.params.len()
            && params
                .iter()
                .zip(reference.params.iter())
                .all(|(a, b)| a.name == b.name && a.tensor.shape() == b.tensor.shape());
        if !ok {
            return Err(Error::InvalidArgument("parameter table does not match the rigid regressor".into()));
        }
        Ok(Self { params })
    }

    pub fn params(&self) -> &ParamSet<f32> {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut ParamSet<f32> {
        &mut self.params
    }

    /// Network input for `flow`: `2 x GRID x GRID`, in grid-cell units.
    pub fn features(flow: &FlowField) -> Vec<f32> {
        let (w, _) = flow.dims();
        let cell = w as f32 / GRID as f32;
        flow.resized(GRID).into_iter().map(|v| v / cell).collect()
    }

    fn forward(&self, tape: &mut Tape<f32>, vars: &[Var], input: Var) -> Result<Var> {
        let b = Bound {
            params: &self.params,
            vars,
        };
        let leak = LEAK as f32;
        let mut x = input;
        for name in ["c1", "c2", "c3"] {
            let y = b.conv(tape, name, x, 2, 1)?;
            x = tape.leaky_relu(y, leak);
        }
        let pooled = tape.spatial_mean(x)?;
        b.dense(tape, "fc", pooled)
    }

    /// Raw normalised outputs for a batch of feature tensors.
    fn raw(&self, feats: &[Vec<f32>]) -> Result<Vec<f32>> {
        let mut tape = Tape::new();
        let vars = self.params.bind(&mut tape);
        let input = tape.constant(&[feats.len(), 2, GRID, GRID], feats.concat())?;
        let out = self.forward(&mut tape, &vars, input)?;
        Ok(tape.value(out).to_vec())
    }

    fn decode(out: &[f32], width: usize, height: usize) -> RigidTransform {
        let cell = width as f64 / GRID as f64;
        RigidTransform::new(
            out[0] as f64 * THETA_UNIT,
            out[1] as f64 * cell,
            out[2] as f64 * cell,
            image_center(width, height),
        )
    }

    fn encode(t: &RigidTransform, width: usize) -> [f32; 3] {
        let cell = width as f64 / GRID as f64;
        [(t.theta / THETA_UNIT) as f32, (t.tx / cell) as f32, (t.ty / cell) as f32]
    }

    /// Rigid transform mapping the flow's source frame onto its target.
    pub fn predict(&self, flow: &FlowField) -> Result<RigidTransform> {
        let (w, h) = flow.dims();
        let out = self.raw(&[Self::features(flow)])?;
        Ok(Self::decode(&out, w, h))
    }

    pub fn predict_batch(&self, flows: &[FlowField]) -> Result<Vec<RigidTransform>> {
        if flows.is_empty() {
            return Ok(Vec::new());
        }
        let feats: Vec<Vec<f32>> = flows.iter().map(Self::features).collect();
        let out = self.raw(&feats)?;
        Ok(flows
            .iter()
            .zip(out.chunks(3))
            .map(|(f, o)| Self::decode(o, f.dims().0, f.dims().1))
            .collect())
    }
}

/// One training or evaluation example.
#[derive(Clone, Debug)]
pub struct WarpSample {
    pub flow: FlowField,
    pub truth: RigidTransform,
}

/// Distribution of random rigid warps used to train and test the regressor.
#[derive(Clone, Copy, Debug, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(default))]
pub struct WarpDistribution {
    /// Frame side in pixels.
    pub size: usize,
    pub max_theta_deg: f64,
    pub max_shift: f64,
}

impl Default for WarpDistribution {
    fn default() -> Self {
        Self {
            size: 128,
            max_theta_deg: 5.0,
            max_shift: 20.0,
        }
    }
}

/// Renders `n` random scene pairs related by uniform random rigid warps and
/// measures their global flow.
pub fn sample_warps(dist: &WarpDistribution, n: usize, seed: u64, flow: &GlobalFlowConfig) -> Result<Vec<WarpSample>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let s = dist.size;
    let specs: Vec<(u64, RigidTransform)> = (0..n)
        .map(|_| {
            let th = dist.max_theta_deg.to_radians();
            let t = RigidTransform::new(
                rng.random_range(-th..=th),
                rng.random_range(-dist.max_shift..=dist.max_shift),
                rng.random_range(-dist.max_shift..=dist.max_shift),
                image_center(s, s),
            );
            (rng.random::<u64>(), t)
        })
        .collect();
    par::map(&specs, |_, (scene_seed, t)| {
        let scene = ProceduralScene::new(s, s, 0, *scene_seed);
        let a = scene.render(&RigidTransform::identity(image_center(s, s)), 0);
        let b = scene.render(t, 0);
        Ok(WarpSample {
            flow: global_flow_with(&a, &b, flow)?.flow,
            truth: *t,
        })
    })
    .into_iter()
    .collect()
}

#[derive(Clone, Copy, Debug, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(default))]
pub struct RegressorConfig {
    pub steps: usize,
    pub batch: usize,
    pub lr: f64,
    pub train_samples: usize,
    pub warps: WarpDistribution,
    pub seed: u64,
}

impl Default for RegressorConfig {
    fn default() -> Self {
        Self {
            steps: 1500,
            batch: 32,
            lr: 2e-3,
            train_samples: 512,
            warps: WarpDistribution::default(),
            seed: 0,
        }
    }
}

/// Mean absolute errors of a regressor on a sample set.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct RegressorError {
    pub theta_deg: f64,
    pub translation_px: f64,
}

pub fn evaluate_regressor(reg: &AffineRegressor, samples: &[WarpSample]) -> Result<RegressorError> {
    let flows: Vec<FlowField> = samples.iter().map(|s| s.flow.clone()).collect();
    let mut preds = Vec::with_capacity(samples.len());
    for chunk in flows.chunks(64) {
        preds.extend(reg.predict_batch(chunk)?);
    }
    let n = samples.len().max(1) as f64;
    let (mut th, mut tr) = (0.0, 0.0);
    for (p, s) in preds.iter().zip(samples) {
        th += (p.theta - s.truth.theta).abs().to_degrees();
        tr += (p.tx - s.truth.tx).hypot(p.ty - s.truth.ty);
    }
    Ok(RegressorError {
        theta_deg: th / n,
        translation_px: tr / n,
    })
}

/// Trains on pre-computed samples; `on_step(step, loss)` observes progress.
pub fn fit_regressor(
    cfg: &RegressorConfig,
    samples: &[WarpSample],
    mut on_step: impl FnMut(usize, f64),
) -> Result<AffineRegressor> {
    if samples.is_empty() || cfg.batch == 0 {
        return Err(Error::InvalidArgument("regressor training needs samples and a positive batch".into()));
    }
    let mut reg = AffineRegressor::new(cfg.seed);
    let feats: Vec<Vec<f32>> = samples.iter().map(|s| AffineRegressor::features(&s.flow)).collect();
    let targets: Vec<[f32; 3]> = samples
        .iter()
        .map(|s| AffineRegressor::encode(&s.truth, s.flow.dims().0))
        .collect();
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed ^ 0xa11);
    let mut opt = Adam::new(cfg.lr as f32);
    let mut initial = None;
    let check_at = (cfg.steps / 5).max(1);
    let mut window = 0.0;
    for step in 0..cfg.steps {
        // cosine decay to 1% of the base rate
        let progress = step as f64 / cfg.steps.max(1) as f64;
        opt.lr = (cfg.lr * (0.01 + 0.99 * 0.5 * (1.0 + (core::f64::consts::PI * progress).cos()))) as f32;
        let idx: Vec<usize> = (0..cfg.batch).map(|_| rng.random_range(0..samples.len())).collect();
        let mut tape = Tape::new();
        let vars = reg.params.bind(&mut tape);
        let input = tape.constant(
            &[idx.len(), 2, GRID, GRID],
            idx.iter().flat_map(|&i| feats[i].iter().copied()).collect(),
        )?;
        let target = tape.constant(&[idx.len(), 3], idx.iter().flat_map(|&i| targets[i]).collect())?;
        let out = reg.forward(&mut tape, &vars, input)?;
        let diff = tape.sub(out, target)?;
        let sq = tape.square(diff);
        let loss = tape.mean(sq);
        let lv = tape.scalar(loss) as f64;
        if !lv.is_finite() {
            return Err(Error::NonFiniteLoss {
                step,
                detail: "rigid regressor loss".into(),
            });
        }
        let init = *initial.get_or_insert(lv);
        window = if step == 0 { lv } else { 0.9 * window + 0.1 * lv };
        if step + 1 == check_at && window > init {
            return Err(Error::Diverged {
                step,
                loss: window,
                initial: init,
            });
        }
        tape.backward(loss)?;
        reg.params.absorb_grads(&tape, &vars)?;
        opt.step(&mut reg.params)?;
        on_step(step, lv);
    }
    Ok(reg)
}

/// Samples training data from `cfg.warps` and fits a regressor.
pub fn train_affine_regressor(cfg: &RegressorConfig, on_step: impl FnMut(usize, f64)) -> Result<AffineRegressor> {
    let samples = sample_warps(&cfg.warps, cfg.train_samples, cfg.seed, &GlobalFlowConfig::default())?;
    fit_regressor(cfg, &samples, on_step)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn features_are_in_grid_units() {
        let t = RigidTransform::for_frame(0.0, 8.0, -4.0, 128, 128);
        let f = AffineRegressor::features(&t.to_flow(128, 128));
        assert!(f[..GRID * GRID].iter().all(|&v| (v - 2.0).abs() < 1e-6));
        assert!(f[GRID * GRID..].iter().all(|&v| (v + 1.0).abs() < 1e-6));
    }

    #[test]
    fn encode_decode_roundtrip() {
        let t = RigidTransform::for_frame(0.05, 3.0, -7.5, 96, 64);
        let e = AffineRegressor::encode(&t, 96);
        let d = AffineRegressor::decode(&e, 96, 64);
        assert!((d.theta - t.theta).abs() < 1e-7 && (d.tx - t.tx).abs() < 1e-5 && (d.ty - t.ty).abs() < 1e-5);
    }

    #[test]
    fn learns_analytic_rigid_flows() {
        // noise-free flows: a short fit must already beat the untrained net
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let samples: Vec<WarpSample> = (0..64)
            .map(|_| {
                let t = RigidTransform::for_frame(
                    rng.random_range(-0.08..0.08),
                    rng.random_range(-10.0..10.0),
                    rng.random_range(-10.0..10.0),
                    64,
                    64,
                );
                WarpSample {
                    flow: t.to_flow(64, 64),
                    truth: t,
                }
            })
            .collect();
        let cfg = RegressorConfig {
            steps: 150,
            batch: 16,
            ..RegressorConfig::default()
        };
        let untrained = evaluate_regressor(&AffineRegressor::new(cfg.seed), &samples).unwrap();
        let reg = fit_regressor(&cfg, &samples, |_, _| {}).unwrap();
        let trained = evaluate_regressor(&reg, &samples).unwrap();
        assert!(trained.translation_px * 3.0 < untrained.translation_px, "{trained:?} vs {untrained:?}");
    }
}
