//! Numbered PNG sequences on disk.

use std::fs;
use std::path::{Path, PathBuf};

use image::{ImageBuffer, Rgb, RgbImage};
use metastab_core::image::{Frame, FrameSequence, Role};
use rayon::prelude::*;

use crate::error::{Error, Result};

/// Zero-padded width of written file names.
pub const NAME_DIGITS: usize = 6;

/// Numbered PNG files of `dir`, sorted by index. Files whose stem is not a
/// plain decimal number are ignored.
pub fn numbered_files(dir: &Path) -> Result<Vec<(u64, PathBuf)>> {
    let mut files = Vec::new();
    for entry in fs::read_dir(dir).map_err(Error::io(dir))? {
        let path = entry.map_err(Error::io(dir))?.path();
        let is_png = path
            .extension()
            .and_then(|e| e.to_str())
            .is_some_and(|e| e.eq_ignore_ascii_case("png"));
        let index = path
            .file_stem()
            .and_then(|s| s.to_str())
            .filter(|s| !s.is_empty() && s.bytes().all(|b| b.is_ascii_digit()))
            .and_then(|s| s.parse::<u64>().ok());
        if let (true, Some(i)) = (is_png, index) {
            files.push((i, path));
        }
    }
    files.sort();
    Ok(files)
}

fn decode(path: &Path, index: u64) -> Result<(RgbImage, u64)> {
    let img = image::open(path).map_err(|source| Error::Image {
        path: path.to_path_buf(),
        source,
    })?;
    Ok((img.to_rgb8(), index))
}

fn to_frame(img: &RgbImage, index: i64) -> Result<Frame> {
    let (w, h) = (img.width() as usize, img.height() as usize);
    let plane = w * h;
    let mut data = vec![0.0f32; 3 * plane];
    for (i, p) in img.pixels().enumerate() {
        for c in 0..3 {
            data[c * plane + i] = p[c] as f32 / 255.0;
        }
    }
    Ok(Frame::new(w, h, data, index)?)
}

/// Loads a directory of numbered PNG frames (any zero padding).
pub fn load_sequence(dir: impl AsRef<Path>, role: Role) -> Result<FrameSequence> {
    let dir = dir.as_ref();
    let files = numbered_files(dir)?;
    let Some(&(first, _)) = files.first() else {
        return Err(Error::NoFrames(dir.to_path_buf()));
    };
    for (expected, (i, _)) in (first..).zip(&files) {
        if *i != expected {
            return Err(Error::Gap(expected));
        }
    }
    let decoded: Vec<(RgbImage, u64)> = files
        .par_iter()
        .map(|(i, p)| decode(p, *i))
        .collect::<Result<_>>()?;
    let dims = decoded[0].0.dimensions();
    if let Some((img, i)) = decoded.iter().find(|(img, _)| img.dimensions() != dims) {
        return Err(Error::MixedResolution {
            path: files[(*i - first) as usize].1.clone(),
            first: dims,
            found: img.dimensions(),
        });
    }
    let frames = decoded
        .par_iter()
        .map(|(img, i)| to_frame(img, *i as i64))
        .collect::<Result<Vec<_>>>()?;
    Ok(FrameSequence::new(frames, role)?)
}

/// 8-bit RGB image of a frame (rounded to nearest).
pub fn to_rgb8(frame: &Frame) -> RgbImage {
    let (w, h) = frame.dims();
    let plane = w * h;
    let d = frame.data();
    let q = |v: f32| (v.clamp(0.0, 1.0) * 255.0).round() as u8;
    ImageBuffer::from_fn(w as u32, h as u32, |x, y| {
        let i = y as usize * w + x as usize;
        Rgb([q(d[i]), q(d[plane + i]), q(d[2 * plane + i])])
    })
}

/// Writes `seq` as `dir/NNNNNN.png`, numbered by frame index (negative
/// indices are shifted so the first file is 0). Creates `dir`.
pub fn save_sequence(seq: &FrameSequence, dir: impl AsRef<Path>) -> Result<()> {
    let dir = dir.as_ref();
    fs::create_dir_all(dir).map_err(Error::io(dir))?;
    let shift = seq.frames().first().map_or(0, |f| (-f.index).max(0));
    seq.frames().par_iter().try_for_each(|f| {
        let path = dir.join(format!("{:0width$}.png", f.index + shift, width = NAME_DIGITS));
        to_rgb8(f).save(&path).map_err(|source| Error::Image { path, source })
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn frame(index: i64, w: usize, h: usize, seed: u32) -> Frame {
        Frame::from_fn(w, h, index, |x, y| {
            let v = ((x as u32 * 7 + y as u32 * 13 + seed * 31) % 256) as f32 / 255.0;
            [v, 1.0 - v, (v * 0.5 + 0.25).min(1.0)]
        })
        .unwrap()
    }

    #[test]
    fn round_trip_is_exact_on_8bit_values() {
        let dir = tempfile::tempdir().unwrap();
        let frames: Vec<Frame> = (0..3).map(|i| frame(i, 40, 36, i as u32)).collect();
        let seq = FrameSequence::new(frames, Role::Stable).unwrap();
        save_sequence(&seq, dir.path()).unwrap();
        let back = load_sequence(dir.path(), Role::Stable).unwrap();
        assert_eq!(back.len(), 3);
        for (a, b) in seq.frames().iter().zip(back.frames()) {
            assert_eq!(a.dims(), b.dims());
            let max = a.data().iter().zip(b.data()).map(|(x, y)| (x - y).abs()).fold(0.0f32, f32::max);
            assert!(max <= 0.5 / 255.0 + 1e-6, "{max}");
        }
    }

    #[test]
    fn padded_frames_are_renumbered_from_zero() {
        let dir = tempfile::tempdir().unwrap();
        let seq = FrameSequence::new((0..2).map(|i| frame(i, 32, 32, 0)).collect(), Role::Stable).unwrap();
        let padded = metastab_core::image::pad_boundary_frames(&seq, 2);
        save_sequence(&padded, dir.path()).unwrap();
        let names: Vec<u64> = numbered_files(dir.path()).unwrap().into_iter().map(|(i, _)| i).collect();
        assert_eq!(names, vec![0, 1, 2, 3, 4, 5]);
    }

    #[test]
    fn non_numbered_files_are_ignored() {
        let dir = tempfile::tempdir().unwrap();
        to_rgb8(&frame(0, 32, 32, 1)).save(dir.path().join("000007.png")).unwrap();
        to_rgb8(&frame(0, 32, 32, 1)).save(dir.path().join("thumb.png")).unwrap();
        fs::write(dir.path().join("000008.txt"), "x").unwrap();
        let seq = load_sequence(dir.path(), Role::Unstable).unwrap();
        assert_eq!(seq.len(), 1);
        assert_eq!(seq.frames()[0].index, 7);
    }
}
