use alloc::string::String;
use alloc::vec::Vec;

pub type Result<T, E = Error> = core::result::Result<T, E>;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum Error {
    #[error("{op}: shape mismatch between {lhs:?} and {rhs:?}")]
    ShapeMismatch {
        op: &'static str,
        lhs: Vec<usize>,
        rhs: Vec<usize>,
    },
    #[error("backward requires a scalar root, got shape {0:?}")]
    NonScalarRoot(Vec<usize>),
    #[error("parameter `{0}` has no gradient")]
    MissingGradient(String),
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("{op}: length mismatch ({left} vs {right})")]
    LengthMismatch {
        op: &'static str,
        left: usize,
        right: usize,
    },
    #[error("jitter moves {fraction:.2} of frame {frame} out of view (limit 0.40)")]
    ExcessiveJitter { frame: usize, fraction: f64 },
    #[error("no dominant rigid motion ({inlier_fraction:.3} inliers)")]
    NoDominantMotion { inlier_fraction: f64 },
    #[error("degenerate point configuration for rigid fit")]
    DegenerateFit,
    #[error("window has {got} frames, expected {expected}")]
    WindowLength { expected: usize, got: usize },
    #[error("contextual similarity needs non-empty feature sets")]
    EmptyFeatureSet,
    #[error("training diverged at step {step}: loss {loss} above initial {initial}")]
    Diverged { step: usize, loss: f64, initial: f64 },
    #[error("non-finite loss at step {step}: {detail}")]
    NonFiniteLoss { step: usize, detail: String },
    #[error("aborted after {0} consecutive non-finite outer losses")]
    TooManySkippedBatches(usize),
    #[error("sequence has {got} frames, need at least {needed}")]
    SequenceTooShort { needed: usize, got: usize },
    #[error("transform fit failed for frame {0}")]
    TransformFit(usize),
    #[error("only {fitted} of {total} frames could be fitted (need 80%)")]
    TooFewFits { fitted: usize, total: usize },
}
