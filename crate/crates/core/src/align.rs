//! Alignment guide: every frame of a short sequence rigidly warped onto
//! the sequence's first frame.

use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::flow::{global_flow_with, GlobalFlowConfig};
use crate::image::{Frame, FrameSequence, Role};
use crate::par;
use crate::regressor::AffineRegressor;
use crate::rigid::{warp, RigidTransform};

/// How the rigid motion between the reference and each frame is estimated.
#[derive(Clone, Copy, Debug)]
pub enum Alignment<'a> {
    /// Learned regressor on the global flow.
    Learned(&'a AffineRegressor),
    /// Closed-form robust fit on the global flow.
    Procrustes,
}

/// Aligned frames plus the transforms that produced them.
#[derive(Clone, Debug)]
pub struct AlignedSequence {
    /// Same length as the input; frame 0 is the untouched reference.
    pub frames: FrameSequence,
    /// Warp applied to frame `t` (identity for the reference).
    pub transforms: Vec<RigidTransform>,
}

/// Rigid motion of `frame` relative to `reference` (maps reference content
/// onto `frame`).
pub fn estimate_motion(reference: &Frame, frame: &Frame, alignment: Alignment<'_>, flow: &GlobalFlowConfig) -> Result<RigidTransform> {
    let g = global_flow_with(reference, frame, flow)?;
    match alignment {
        Alignment::Learned(reg) => reg.predict(&g.flow),
        Alignment::Procrustes => Ok(g.rigid),
    }
}

pub fn align_sequence(seq: &FrameSequence, alignment: Alignment<'_>, flow: &GlobalFlowConfig) -> Result<AlignedSequence> {
    if seq.len() < 2 {
        return Err(Error::SequenceTooShort {
            needed: 2,
            got: seq.len(),
        });
    }
    let frames = seq.frames();
    let reference = &frames[0];
    let rest: Vec<&Frame> = frames[1..].iter().collect();
    let estimated: Vec<Result<RigidTransform>> =
        par::map(&rest, |_, f| Ok(estimate_motion(reference, f, alignment, flow)?.inverse()));
    let mut transforms = Vec::with_capacity(frames.len());
    transforms.push(RigidTransform::identity(crate::rigid::image_center(
        reference.width(),
        reference.height(),
    )));
    for t in estimated {
        transforms.push(t?);
    }
    let aligned: Vec<Frame> = frames
        .iter()
        .zip(&transforms)
        .enumerate()
        .map(|(i, (f, t))| if i == 0 { f.clone() } else { warp(f, t) })
        .collect();
    Ok(AlignedSequence {
        frames: FrameSequence::new(aligned, Role::Aligned)?,
        transforms,
    })
}
