//! Frozen convolutional feature pyramid used by the perceptual terms.

use alloc::vec::Vec;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::nn::orthogonal_conv;
use crate::real::Real;
use crate::tensor::{ParamSet, Tape, Tensor, Var};

/// Channel widths of the four stages.
pub const STAGE_WIDTHS: [usize; 4] = [16, 32, 64, 128];

/// Four `conv3x3 stride 2 + ReLU` stages with seeded orthogonal weights.
/// The weights enter the tape as constants, so they never receive gradients.
#[derive(Clone, Debug, PartialEq)]
pub struct FeatureExtractor {
    weights: Vec<Tensor<f32>>,
}

impl FeatureExtractor {
    pub fn new(seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut inp = 3;
        let weights = STAGE_WIDTHS
            .iter()
            .map(|&out| {
                // sqrt(2) keeps activation scale roughly constant through ReLUs
                let w = orthogonal_conv::<f32>(out, inp, 3, core::f64::consts::SQRT_2, &mut rng);
                let t = Tensor::new(&[out, inp, 3, 3], w).expect("sized");
                inp = out;
                t
            })
            .collect();
        Self { weights }
    }

    /// Loads stage weights named `f1.w` .. `f4.w` (e.g. exported features).
    pub fn from_params(ps: &ParamSet<f32>) -> Result<Self> {
        let mut weights = Vec::with_capacity(4);
        let mut inp = 3;
        for (i, &out) in STAGE_WIDTHS.iter().enumerate() {
            let name = alloc::format!("f{}.w", i + 1);
            let t = ps
                .get(&name)
                .ok_or_else(|| Error::InvalidArgument(alloc::format!("missing feature weight {name}")))?;
            if t.shape() != [out, inp, 3, 3] {
                return Err(Error::ShapeMismatch {
                    op: "feature extractor",
                    lhs: t.shape().to_vec(),
                    rhs: alloc::vec![out, inp, 3, 3],
                });
            }
            let mut t = t.clone();
            t.set_requires_grad(false);
            weights.push(t);
            inp = out;
        }
        Ok(Self { weights })
    }

    pub fn to_params(&self) -> ParamSet<f32> {
        let mut ps = ParamSet::new();
        for (i, w) in self.weights.iter().enumerate() {
            ps.push(alloc::format!("f{}.w", i + 1), w.clone());
        }
        ps
    }

    /// Per-stage feature maps of `img` (`N x 3 x H x W`, values in `[0, 1]`).
    pub fn features<R: Real>(&self, tape: &mut Tape<R>, img: Var) -> Result<Vec<Var>> {
        let mut x = tape.offset(img, R::lit(-0.5));
        let mut out = Vec::with_capacity(self.weights.len());
        for w in &self.weights {
            let wv = tape.constant(w.shape(), w.data().iter().map(|&v| R::lit(v as f64)).collect())?;
            let y = tape.conv2d(x, wv, None, 2, 1)?;
            x = tape.relu(y);
            out.push(x);
        }
        Ok(out)
    }
}
