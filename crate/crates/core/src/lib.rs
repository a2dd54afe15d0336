//! Test-time meta-learned full-frame video stabilization.
//!
//! The crate is `no_std` (with `alloc`) so the numerical core can be embedded
//! anywhere; file formats, image decoding and the command line live in the
//! `metastab` companion crate. Enable the default `std` feature for runtime
//! SIMD dispatch in the matrix kernels and `parallel` for rayon-backed
//! evaluation of independent tasks.
//!
//! Module map:
//!
//! * [`tensor`]: reverse-mode tape, primitives, parameter sets and optimizers.
//! * [`image`] and [`synth`]: frames, sequences and synthetic shaky/stable pairs.
//! * [`flow`]: pyramidal dense flow and the camera-motion-only global flow.
//! * [`rigid`], [`regressor`], [`align`]: rigid fits, the learned rigid
//!   regressor and the window alignment guide.
//! * [`synthesis`]: the window-based synthesis network.
//! * [`losses`]: inner and outer objectives and the frozen feature pyramid.
//! * [`meta`]: meta-training and test-time adaptation.
//! * [`metrics`]: stability, cropping and distortion scores.

#![no_std]

extern crate alloc;
#[cfg(feature = "std")]
extern crate std;

pub mod align;
pub mod error;
pub mod flow;
pub mod image;
pub mod losses;
pub mod meta;
pub mod metrics;
pub mod nn;
pub mod real;
pub mod regressor;
pub mod rigid;
pub mod synth;
pub mod synthesis;
pub mod tensor;

mod par;

pub use error::{Error, Result};
pub use real::Real;
