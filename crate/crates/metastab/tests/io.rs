use std::fs;
use std::path::Path;

use metastab::sequence::{load_sequence, save_sequence, to_rgb8};
use metastab::Error;
use metastab_core::image::{Frame, FrameSequence, Role};
use proptest::prelude::*;

fn frame(w: usize, h: usize, seed: u32) -> Frame {
    Frame::from_fn(w, h, 0, |x, y| {
        let v = ((x as u32 * 5 + y as u32 * 3 + seed * 17) % 256) as f32 / 255.0;
        [v, v * 0.5, 1.0 - v]
    })
    .unwrap()
}

fn write(dir: &Path, name: &str, w: usize, h: usize) {
    to_rgb8(&frame(w, h, 1)).save(dir.join(name)).unwrap();
}

#[test]
fn five_numbered_files_load_in_order() {
    let d = tempfile::tempdir().unwrap();
    for i in (1..=5).rev() {
        write(d.path(), &format!("{i:06}.png"), 32, 40);
    }
    let seq = load_sequence(d.path(), Role::Unstable).unwrap();
    assert_eq!(seq.len(), 5);
    let idx: Vec<i64> = seq.frames().iter().map(|f| f.index).collect();
    assert_eq!(idx, vec![1, 2, 3, 4, 5]);
    assert_eq!(seq.dims(), Some((32, 40)));
}

#[test]
fn empty_directory_has_no_frames() {
    let d = tempfile::tempdir().unwrap();
    let e = load_sequence(d.path(), Role::Unstable).unwrap_err();
    assert!(matches!(e, Error::NoFrames(_)));
    assert!(e.to_string().ends_with("no frames"));
}

#[test]
fn missing_index_reports_the_gap() {
    let d = tempfile::tempdir().unwrap();
    write(d.path(), "000001.png", 32, 32);
    write(d.path(), "000003.png", 32, 32);
    let e = load_sequence(d.path(), Role::Unstable).unwrap_err();
    assert_eq!(e.to_string(), "gap at 2");
}

#[test]
fn mixed_resolutions_are_rejected() {
    let d = tempfile::tempdir().unwrap();
    write(d.path(), "000001.png", 32, 32);
    write(d.path(), "000002.png", 48, 32);
    assert!(matches!(
        load_sequence(d.path(), Role::Unstable),
        Err(Error::MixedResolution { first: (32, 32), found: (48, 32), .. })
    ));
}

#[test]
fn unreadable_png_is_an_image_error() {
    let d = tempfile::tempdir().unwrap();
    fs::write(d.path().join("000000.png"), b"not a png").unwrap();
    assert!(matches!(load_sequence(d.path(), Role::Unstable), Err(Error::Image { .. })));
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(12))]

    /// Quantized frames survive a save/load cycle bit-exactly.
    #[test]
    fn quantized_round_trip(w in 32usize..48, h in 32usize..48, n in 1usize..4, seed in any::<u64>()) {
        let d = tempfile::tempdir().unwrap();
        let mut s = seed;
        let mut next = || { s = s.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407); ((s >> 56) as f32) / 255.0 };
        let frames: Vec<Frame> = (0..n).map(|i| {
            let data = (0..3 * w * h).map(|_| next()).collect();
            Frame::new(w, h, data, i as i64).unwrap()
        }).collect();
        let seq = FrameSequence::new(frames, Role::Stable).unwrap();
        save_sequence(&seq, d.path()).unwrap();
        let back = load_sequence(d.path(), Role::Stable).unwrap();
        prop_assert_eq!(back, seq);
    }
}
